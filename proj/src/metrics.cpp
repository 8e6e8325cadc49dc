#include "covlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <unordered_map>

#include <json.hpp>

#include "covlab/parallel.hpp"

namespace covlab {

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / std::sqrt(na * nb);
}

struct PairSums {
    double intra = 0, inter = 0;
    std::int64_t n_intra = 0, n_inter = 0;
};

}  // namespace

double iicg(const LabeledVectorSet& set, bool group_balanced, int workers) {
    const std::size_t m = set.count();
    if (set.dim < 1 || m < 2) throw Error(ErrorKind::data, "IICG needs at least two vectors");
    if (set.labels.size() != m) throw Error(ErrorKind::data, "one label per vector required");

    for (std::size_t i = 0; i < m; ++i) {
        double norm = 0;
        for (double x : set.row(i)) norm += x * x;
        if (norm == 0.0)
            throw Error(ErrorKind::data, "zero vector at row " + std::to_string(i) + "; cosine undefined");
    }

    std::vector<std::uint32_t> group(m);
    {
        std::unordered_map<std::string, std::uint32_t> ids;
        for (std::size_t i = 0; i < m; ++i)
            group[i] = ids.emplace(set.labels[i], static_cast<std::uint32_t>(ids.size())).first->second;
    }

    if (!group_balanced) {
        // Fixed shards over the linearized pair index; shard partials are
        // summed in shard order.
        const std::uint64_t total_pairs = static_cast<std::uint64_t>(m) * (m - 1) / 2;
        const std::uint64_t shard_size = 4096;
        const std::uint64_t n_shards = (total_pairs + shard_size - 1) / shard_size;
        std::vector<PairSums> shard(n_shards);
        parallel_for_static(static_cast<std::int64_t>(n_shards), workers, [&](std::int64_t s) {
            const std::uint64_t begin = s * shard_size;
            const std::uint64_t end = std::min(begin + shard_size, total_pairs);
            // Walk (i, j) from the shard's first linear index.
            std::uint64_t i = 0, row_start = 0;
            while (row_start + (m - 1 - i) <= begin) {
                row_start += m - 1 - i;
                ++i;
            }
            std::uint64_t j = i + 1 + (begin - row_start);
            for (std::uint64_t idx = begin; idx < end; ++idx) {
                const double c = cosine(set.row(i), set.row(j));
                if (group[i] == group[j]) {
                    shard[s].intra += c;
                    ++shard[s].n_intra;
                } else {
                    shard[s].inter += c;
                    ++shard[s].n_inter;
                }
                if (++j == m) {
                    ++i;
                    j = i + 1;
                }
            }
        });
        PairSums sums;
        for (const PairSums& p : shard) {
            sums.intra += p.intra;
            sums.inter += p.inter;
            sums.n_intra += p.n_intra;
            sums.n_inter += p.n_inter;
        }
        if (sums.n_intra == 0) throw Error(ErrorKind::data, "IICG undefined: no same-group pair");
        if (sums.n_inter == 0) throw Error(ErrorKind::data, "IICG undefined: no cross-group pair");
        return sums.intra / sums.n_intra - sums.inter / sums.n_inter;
    }

    // Group-balanced: per-group intra means averaged equally, inter pairs pooled.
    std::map<std::uint32_t, std::pair<double, std::int64_t>> per_group;
    double inter = 0;
    std::int64_t n_inter = 0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            const double c = cosine(set.row(i), set.row(j));
            if (group[i] == group[j]) {
                auto& g = per_group[group[i]];
                g.first += c;
                ++g.second;
            } else {
                inter += c;
                ++n_inter;
            }
        }
    }
    if (per_group.empty()) throw Error(ErrorKind::data, "IICG undefined: no same-group pair");
    if (n_inter == 0) throw Error(ErrorKind::data, "IICG undefined: no cross-group pair");
    double intra_mean = 0;
    for (const auto& [id, g] : per_group) intra_mean += g.first / g.second;
    intra_mean /= static_cast<double>(per_group.size());
    return intra_mean - inter / n_inter;
}

double indirect_effect(double p_clean, double p_corrupt, double p_patched, double epsilon) {
    for (double p : {p_clean, p_corrupt, p_patched})
        if (p < 0.0 || p > 1.0) throw Error(ErrorKind::data, "probabilities must lie in [0, 1]");
    const double denom = p_corrupt - p_clean;
    if (std::fabs(denom) < epsilon)
        throw Error(ErrorKind::data, "degenerate trace: |p_corrupt - p_clean| < epsilon");
    return (p_patched - p_clean) / denom;
}

double mrr(std::span<const ScoreRow> rows) {
    if (rows.empty()) throw Error(ErrorKind::data, "MRR needs at least one score row");
    double sum = 0;
    for (const ScoreRow& row : rows) {
        if (row.target >= row.scores.size())
            throw Error(ErrorKind::data, "target id outside the score vector");
        const float target_score = row.scores[row.target];
        std::int64_t greater = 0;
        for (float s : row.scores) greater += s > target_score;
        sum += 1.0 / static_cast<double>(1 + greater);
    }
    return sum / static_cast<double>(rows.size());
}

LabeledVectorSet load_vector_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::data, "cannot open '" + path + "'");
    std::string first_line;
    if (!std::getline(in, first_line)) throw Error(ErrorKind::data, "empty vector file '" + path + "'");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(first_line);
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorKind::data, "bad vector file header: " + std::string(ex.what()));
    }

    LabeledVectorSet set;
    if (header.contains("dim") && header.contains("count")) {
        set.dim = header["dim"].get<int>();
        const std::size_t count = header["count"].get<std::size_t>();
        if (set.dim < 1) throw Error(ErrorKind::data, "vector dimension must be >= 1");
        set.labels = header.value("labels", std::vector<std::string>{});
        set.tags = header.value("tags", std::vector<std::string>{});
        if (set.labels.size() != count) throw Error(ErrorKind::data, "labels do not match count");
        if (set.tags.empty()) set.tags.assign(count, "");
        if (set.tags.size() != count) throw Error(ErrorKind::data, "tags do not match count");
        std::vector<float> raw(count * set.dim);
        in.read(reinterpret_cast<char*>(raw.data()),
                static_cast<std::streamsize>(raw.size() * sizeof(float)));
        if (in.gcount() != static_cast<std::streamsize>(raw.size() * sizeof(float)))
            throw Error(ErrorKind::data, "vector file truncated: expected " + std::to_string(count) +
                                             " rows of " + std::to_string(set.dim) + " floats");
        set.data.assign(raw.begin(), raw.end());
        return set;
    }

    // JSONL fallback: the first line is already a row.
    auto consume_row = [&set](const nlohmann::json& j) {
        const std::vector<double> vec = j.at("vector").get<std::vector<double>>();
        if (set.dim == 0) set.dim = static_cast<int>(vec.size());
        if (static_cast<int>(vec.size()) != set.dim)
            throw Error(ErrorKind::data, "inconsistent vector dimensions in JSONL rows");
        set.data.insert(set.data.end(), vec.begin(), vec.end());
        const auto& label = j.at("label");
        set.labels.push_back(label.is_string() ? label.get<std::string>() : label.dump());
        set.tags.push_back(j.value("tag", std::string{}));
    };
    try {
        consume_row(header);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            consume_row(nlohmann::json::parse(line));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorKind::data, "bad vector JSONL row: " + std::string(ex.what()));
    }
    if (set.dim == 0) throw Error(ErrorKind::data, "no vectors in '" + path + "'");
    return set;
}

void save_vector_file(const std::string& path, const LabeledVectorSet& set) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::data, "cannot open '" + path + "' for writing");
    nlohmann::ordered_json header;
    header["dim"] = set.dim;
    header["count"] = set.count();
    header["labels"] = set.labels;
    header["tags"] = set.tags;
    out << header.dump() << '\n';
    const std::vector<float> raw(set.data.begin(), set.data.end());
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (!out) throw Error(ErrorKind::data, "write failed for '" + path + "'");
}

std::vector<IicgRow> iicg_by_tag(const LabeledVectorSet& set, bool group_balanced, int workers) {
    std::vector<std::string> order;
    std::unordered_map<std::string, LabeledVectorSet> slices;
    for (std::size_t i = 0; i < set.count(); ++i) {
        const std::string& tag = set.tags.empty() ? std::string{} : set.tags[i];
        auto [it, inserted] = slices.try_emplace(tag);
        if (inserted) {
            order.push_back(tag);
            it->second.dim = set.dim;
        }
        const auto row = set.row(i);
        it->second.data.insert(it->second.data.end(), row.begin(), row.end());
        it->second.labels.push_back(set.labels[i]);
        it->second.tags.push_back(tag);
    }
    std::vector<IicgRow> out;
    for (const std::string& tag : order) {
        const LabeledVectorSet& slice = slices[tag];
        std::size_t n_groups = 0;
        {
            std::vector<std::string> uniq = slice.labels;
            std::sort(uniq.begin(), uniq.end());
            n_groups = std::unique(uniq.begin(), uniq.end()) - uniq.begin();
        }
        out.push_back({tag, iicg(slice, group_balanced, workers), slice.count(), n_groups});
    }
    return out;
}

}  // namespace covlab
