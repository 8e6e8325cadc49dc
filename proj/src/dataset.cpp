#include "covlab/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "covlab/parallel.hpp"

namespace covlab {

namespace {

// Nodes become evaluable once the highest input position they (transitively)
// depend on has been assigned; the DFS below evaluates them at that depth.
struct EvalPlan {
    std::vector<std::vector<int>> nodes_ready_after;  // per input position

    EvalPlan(const CompositionStructure& s) : nodes_ready_after(s.n_inputs()) {
        std::vector<int> ready_at(s.nodes().size(), 0);
        for (std::size_t j = 0; j < s.nodes().size(); ++j) {
            int pos = 0;
            for (const ArgRef& a : s.nodes()[j].args)
                pos = std::max(pos, a.kind == ArgRef::Kind::input ? a.index : ready_at[a.index]);
            ready_at[j] = pos;
            nodes_ready_after[pos].push_back(static_cast<int>(j));
        }
    }
};

std::uint64_t pack_input(std::span<const TokenId> input, std::uint32_t vocab) {
    std::uint64_t flat = 0;
    for (TokenId t : input) flat = flat * vocab + t;
    return flat;
}

// Per-position token windows resolved against the vocab.
std::vector<std::pair<TokenId, TokenId>> resolve_ranges(int n, std::uint32_t vocab,
                                                        std::span<const PositionRange> ranges) {
    std::vector<std::pair<TokenId, TokenId>> out(n, {0, vocab});
    if (ranges.empty()) return out;
    if (static_cast<int>(ranges.size()) != n)
        throw Error(ErrorKind::usage, "one position range per input position required");
    for (int i = 0; i < n; ++i) {
        if (ranges[i].hi == 0 && ranges[i].lo == 0) continue;
        if (ranges[i].lo >= ranges[i].hi || ranges[i].hi > vocab)
            throw Error(ErrorKind::usage, "position range outside the token set");
        out[i] = {ranges[i].lo, ranges[i].hi};
    }
    return out;
}

// Shared DFS over input assignments. seen_only prunes on unseen applications;
// otherwise every complete input is visited and flagged with whether all its
// node applications pass `node_ok`.
template <typename Visit>
void scan_inputs(const CompositionStructure& structure, std::span<const PrimitiveTable> primitives,
                 const EvalPlan& plan, std::span<const std::pair<TokenId, TokenId>> windows,
                 TokenId first, bool seen_only, const std::function<bool(int, std::size_t)>& node_ok,
                 Visit&& visit) {
    const int n = structure.n_inputs();
    std::vector<TokenId> input(n, 0);
    std::vector<TokenId> values(structure.nodes().size(), 0);
    std::vector<std::size_t> flats(structure.nodes().size(), 0);
    std::vector<bool> ok_so_far(n + 1, true);
    std::vector<TokenId> args;

    input[0] = first;

    // Evaluates the nodes that become ready at `pos`; returns false to prune.
    auto eval_at = [&](int pos) -> bool {
        bool ok = ok_so_far[pos];
        for (int j : plan.nodes_ready_after[pos]) {
            const NodeSpec& node = structure.nodes()[j];
            args.clear();
            for (const ArgRef& a : node.args)
                args.push_back(a.kind == ArgRef::Kind::input ? input[a.index] : values[a.index]);
            flats[j] = primitives[j].flat_index(args);
            values[j] = primitives[j].apply_flat(flats[j]);
            if (ok && !node_ok(j, flats[j])) {
                if (seen_only) return false;
                ok = false;
            }
        }
        ok_so_far[pos + 1] = ok;
        return true;
    };

    // Iterative DFS over positions 1..n-1 (position 0 is fixed to `first`).
    int depth = 0;
    if (!eval_at(0)) return;
    if (n == 1) {
        visit(input, values, ok_so_far[1]);
        return;
    }
    depth = 1;
    input[1] = windows[1].first;
    while (depth >= 1) {
        if (input[depth] >= windows[depth].second) {
            --depth;
            if (depth == 0) break;
            ++input[depth];
            continue;
        }
        if (eval_at(depth)) {
            if (depth == n - 1) {
                visit(input, values, ok_so_far[depth + 1]);
                ++input[depth];
            } else {
                ++depth;
                input[depth] = windows[depth].first;
            }
        } else {
            ++input[depth];
        }
    }
}

Example make_example(std::span<const TokenId> input, std::span<const TokenId> values, Split split) {
    Example e;
    e.input.assign(input.begin(), input.end());
    e.intermediates.assign(values.begin(), values.end() - 1);
    e.target = values.back();
    e.split = split;
    return e;
}

void append_token(std::string& out, TokenId t) {
    out += "<t_";
    out += std::to_string(t);
    out += '>';
}

}  // namespace

std::string_view split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::id_test: return "id_test";
        case Split::ood_test: return "ood_test";
    }
    return "train";
}

Split split_from_name(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "id_test") return Split::id_test;
    if (name == "ood_test") return Split::ood_test;
    throw Error(ErrorKind::data, "unknown split '" + std::string(name) + "'");
}

std::vector<Example> enumerate_id_combinations(const CompositionStructure& structure,
                                               std::span<const PrimitiveTable> primitives, int workers,
                                               std::span<const PositionRange> ranges) {
    if (primitives.empty()) throw Error(ErrorKind::data, "no primitives supplied");
    const EvalPlan plan(structure);
    const std::uint32_t vocab = primitives[0].vocab();
    const auto windows = resolve_ranges(structure.n_inputs(), vocab, ranges);
    auto seen = [&](int node, std::size_t flat) { return primitives[node].is_seen_flat(flat); };

    // Sharded by the first input position and concatenated in order, which
    // keeps the output identical for any worker count.
    const TokenId lo0 = windows[0].first, hi0 = windows[0].second;
    std::vector<std::vector<Example>> shards(hi0 - lo0);
    parallel_for(hi0 - lo0, workers, [&](std::int64_t shard) {
        scan_inputs(structure, primitives, plan, windows, static_cast<TokenId>(lo0 + shard), true, seen,
                    [&](std::span<const TokenId> input, std::span<const TokenId> values, bool) {
                        shards[shard].push_back(make_example(input, values, Split::train));
                    });
    });

    std::size_t total = 0;
    for (const auto& s : shards) total += s.size();
    std::vector<Example> out;
    out.reserve(total);
    for (auto& s : shards) out.insert(out.end(), s.begin(), s.end());
    return out;
}

void for_each_id_combination(const CompositionStructure& structure,
                             std::span<const PrimitiveTable> primitives,
                             const std::function<void(std::span<const TokenId>, const EvalResult&)>& fn) {
    const EvalPlan plan(structure);
    const std::uint32_t vocab = primitives[0].vocab();
    const auto windows = resolve_ranges(structure.n_inputs(), vocab, {});
    auto seen = [&](int node, std::size_t flat) { return primitives[node].is_seen_flat(flat); };
    for (std::uint32_t x0 = 0; x0 < vocab; ++x0)
        scan_inputs(structure, primitives, plan, windows, x0, true, seen,
                    [&](std::span<const TokenId> input, std::span<const TokenId> values, bool) {
                        EvalResult r;
                        r.output = values.back();
                        r.intermediates.assign(values.begin(), values.end() - 1);
                        fn(input, r);
                    });
}

Dataset sample_training_set(const std::vector<Example>& id_pool, std::size_t n, Prng& rng) {
    if (n > id_pool.size())
        throw Error(ErrorKind::capacity, "requested " + std::to_string(n) + " training examples but only " +
                                             std::to_string(id_pool.size()) + " ID combinations exist");
    std::vector<std::uint32_t> idx(id_pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint32_t>(i);
    Dataset out;
    out.seed = rng.seed();
    out.examples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + rng.uniform_below(idx.size() - i);
        std::swap(idx[i], idx[j]);
        Example e = id_pool[idx[i]];
        e.split = Split::train;
        out.examples.push_back(std::move(e));
    }
    return out;
}

TestSets build_test_sets(const CompositionStructure& structure, std::span<const PrimitiveTable> primitives,
                         const Dataset& train, std::size_t size, Prng& rng,
                         std::span<const PositionRange> ranges) {
    if (size < 1) throw Error(ErrorKind::usage, "test set size must be >= 1");
    const std::uint32_t vocab = primitives[0].vocab();
    const EvalPlan plan(structure);
    const auto windows = resolve_ranges(structure.n_inputs(), vocab, ranges);
    {
        // The candidate scan walks |X|^n and the dedup key packs into 64 bits.
        double domain = 1;
        for (int i = 0; i < structure.n_inputs(); ++i) domain *= vocab;
        if (domain > 0x1p62)
            throw Error(ErrorKind::capacity, "test-set construction needs |X|^n below 2^62");
    }

    std::vector<std::vector<std::uint8_t>> observed(structure.nodes().size());
    for (std::size_t j = 0; j < observed.size(); ++j) observed[j].assign(primitives[j].domain_size(), 0);
    std::unordered_set<std::uint64_t> train_inputs;
    train_inputs.reserve(train.examples.size() * 2);
    std::vector<std::size_t> flats;
    for (const Example& e : train.examples) {
        node_applications(structure, primitives, e.input, flats);
        for (std::size_t j = 0; j < flats.size(); ++j) observed[j][flats[j]] = 1;
        train_inputs.insert(pack_input(e.input, vocab));
    }

    auto app_observed = [&](int node, std::size_t flat) { return observed[node][flat] != 0; };

    // Pass 1: pool sizes. An input is an ID candidate when every application
    // was observed in train and the input itself was not; otherwise, any
    // unobserved application makes it an OOD candidate.
    std::size_t id_pool = 0, ood_pool = 0;
    for (TokenId x0 = windows[0].first; x0 < windows[0].second; ++x0)
        scan_inputs(structure, primitives, plan, windows, x0, false, app_observed,
                    [&](std::span<const TokenId> input, std::span<const TokenId>, bool all_observed) {
                        if (!all_observed)
                            ++ood_pool;
                        else if (!train_inputs.contains(pack_input(input, vocab)))
                            ++id_pool;
                    });

    TestSets out;
    out.id_pool_size = id_pool;
    out.ood_pool_size = ood_pool;
    out.id_pool_short = id_pool < size;
    out.ood_pool_short = ood_pool < size;
    const std::size_t id_take = std::min(size, id_pool);
    const std::size_t ood_take = std::min(size, ood_pool);

    // Pass 2: selection sampling over the same deterministic scan order.
    std::size_t id_seen = 0, ood_seen = 0, id_left = id_take, ood_left = ood_take;
    for (TokenId x0 = windows[0].first; x0 < windows[0].second; ++x0)
        scan_inputs(structure, primitives, plan, windows, x0, false, app_observed,
                    [&](std::span<const TokenId> input, std::span<const TokenId> values, bool all_observed) {
                        if (!all_observed) {
                            if (ood_left > 0 && rng.uniform_below(ood_pool - ood_seen) < ood_left) {
                                out.ood_test.push_back(make_example(input, values, Split::ood_test));
                                --ood_left;
                            }
                            ++ood_seen;
                        } else if (!train_inputs.contains(pack_input(input, vocab))) {
                            if (id_left > 0 && rng.uniform_below(id_pool - id_seen) < id_left) {
                                out.id_test.push_back(make_example(input, values, Split::id_test));
                                --id_left;
                            }
                            ++id_seen;
                        }
                    });
    return out;
}

TextFormat text_format_from_name(std::string_view name) {
    if (name == "plain") return TextFormat::plain;
    if (name == "cot") return TextFormat::cot;
    if (name == "partial") return TextFormat::partial;
    throw ParseError(ParseFault::unknown_format, 0, "unknown text format '" + std::string(name) + "'");
}

std::string serialize_example(const Example& example, TextFormat format) {
    std::string out;
    for (TokenId t : example.input) append_token(out, t);
    out += '\t';
    if (format == TextFormat::cot)
        for (TokenId t : example.intermediates) append_token(out, t);
    append_token(out, example.target);
    out += "</a>";
    return out;
}

namespace {

// Scans one <t_NUM> token at `pos`, advancing it; returns false at segment end.
bool scan_token(std::string_view line, std::size_t& pos, char segment_end, TokenId& out) {
    if (pos >= line.size() || line[pos] == segment_end) return false;
    if (line[pos] != '<') throw ParseError(ParseFault::malformed_token, pos, "expected '<'");
    // "</a>" terminates the target segment.
    if (line.compare(pos, 4, "</a>") == 0) return false;
    if (line.compare(pos, 3, "<t_") != 0) throw ParseError(ParseFault::malformed_token, pos, "expected '<t_'");
    const std::size_t digits = pos + 3;
    std::size_t end = digits;
    while (end < line.size() && line[end] >= '0' && line[end] <= '9') ++end;
    if (end == digits) throw ParseError(ParseFault::malformed_token, digits, "expected token number");
    if (end >= line.size()) throw ParseError(ParseFault::truncated_line, end, "token not closed");
    if (line[end] != '>') throw ParseError(ParseFault::malformed_token, end, "expected '>'");
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(line.data() + digits, line.data() + end, value);
    if (ec != std::errc() || ptr != line.data() + end || value > 0xffffffffULL)
        throw ParseError(ParseFault::malformed_token, digits, "bad token number");
    out = static_cast<TokenId>(value);
    pos = end + 1;
    return true;
}

}  // namespace

Example parse_example(std::string_view line, TextFormat format, int expected_inputs) {
    Example e;
    std::size_t pos = 0;
    TokenId t;
    while (scan_token(line, pos, '\t', t)) e.input.push_back(t);
    if (pos >= line.size()) throw ParseError(ParseFault::truncated_line, pos, "missing target segment");
    if (line[pos] != '\t') throw ParseError(ParseFault::malformed_token, pos, "expected tab separator");
    ++pos;

    std::vector<TokenId> targets;
    while (scan_token(line, pos, '\0', t)) targets.push_back(t);
    if (line.compare(pos, 4, "</a>") != 0)
        throw ParseError(ParseFault::missing_end_marker, pos, "expected '</a>' end marker");
    pos += 4;
    if (pos != line.size()) throw ParseError(ParseFault::malformed_token, pos, "trailing characters");

    if (targets.empty()) throw ParseError(ParseFault::truncated_line, pos - 4, "no target token");
    if (format == TextFormat::cot) {
        e.intermediates.assign(targets.begin(), targets.end() - 1);
    } else if (targets.size() != 1) {
        throw ParseError(ParseFault::arity_mismatch, 0,
                         "format carries one target token, line has " + std::to_string(targets.size()));
    }
    e.target = targets.back();

    if (format != TextFormat::partial && expected_inputs >= 0 &&
        static_cast<int>(e.input.size()) != expected_inputs)
        throw ParseError(ParseFault::arity_mismatch, 0,
                         "expected " + std::to_string(expected_inputs) + " input tokens, got " +
                             std::to_string(e.input.size()));
    if (e.input.empty()) throw ParseError(ParseFault::truncated_line, 0, "no input tokens");
    return e;
}

std::string example_to_jsonl(const Example& example) {
    std::string out = "{\"input\":[";
    for (std::size_t i = 0; i < example.input.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(example.input[i]);
    }
    out += "],\"target\":";
    out += std::to_string(example.target);
    out += ",\"intermediates\":[";
    for (std::size_t i = 0; i < example.intermediates.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(example.intermediates[i]);
    }
    out += "],\"split\":\"";
    out += split_name(example.split);
    out += "\"}";
    return out;
}

Example example_from_jsonl(std::string_view line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorKind::data, std::string("bad JSONL record: ") + ex.what());
    }
    Example e;
    try {
        e.input = j.at("input").get<std::vector<TokenId>>();
        e.target = j.at("target").get<TokenId>();
        if (j.contains("intermediates")) e.intermediates = j["intermediates"].get<std::vector<TokenId>>();
        if (j.contains("split")) e.split = split_from_name(j["split"].get<std::string>());
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorKind::data, std::string("bad JSONL record: ") + ex.what());
    }
    return e;
}

void write_jsonl(const std::string& path, std::span<const Example> examples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::data, "cannot open '" + path + "' for writing");
    for (const Example& e : examples) {
        out << example_to_jsonl(e) << '\n';
    }
    if (!out) throw Error(ErrorKind::data, "write failed for '" + path + "'");
}

std::vector<Example> read_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::data, "cannot open '" + path + "'");
    std::vector<Example> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(example_from_jsonl(line));
    }
    return out;
}

std::string primitive_to_json(const PrimitiveTable& table) {
    nlohmann::ordered_json j;
    j["arity"] = table.arity();
    j["vocab"] = table.vocab();
    j["table"] = table.table();
    std::vector<int> mask(table.seen_mask().begin(), table.seen_mask().end());
    j["seen_mask"] = mask;
    return j.dump();
}

namespace {

nlohmann::ordered_json structure_to_json(const CompositionStructure& s) {
    nlohmann::ordered_json j;
    j["name"] = s.name();
    j["n_inputs"] = s.n_inputs();
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    for (const NodeSpec& n : s.nodes()) {
        nlohmann::ordered_json args = nlohmann::ordered_json::array();
        for (const ArgRef& a : n.args)
            args.push_back({{a.kind == ArgRef::Kind::input ? "in" : "node", a.index}});
        nodes.push_back(args);
    }
    j["nodes"] = nodes;
    j["output_node"] = s.output_node();
    return j;
}

CompositionStructure structure_from_json(const nlohmann::json& j) {
    std::vector<NodeSpec> nodes;
    for (const auto& jn : j.at("nodes")) {
        NodeSpec spec;
        for (const auto& ja : jn) {
            if (ja.contains("in"))
                spec.args.push_back(ArgRef::in(ja["in"].get<int>()));
            else
                spec.args.push_back(ArgRef::nd(ja.at("node").get<int>()));
        }
        nodes.push_back(std::move(spec));
    }
    return CompositionStructure(j.at("name").get<std::string>(), j.at("n_inputs").get<int>(),
                                std::move(nodes), j.at("output_node").get<int>());
}

}  // namespace

void write_primitives_file(const std::string& path, const CompositionStructure& structure,
                           std::span<const PrimitiveTable> primitives, double p_seen) {
    nlohmann::ordered_json j;
    j["structure"] = structure_to_json(structure);
    j["p_seen"] = p_seen;
    nlohmann::ordered_json prims = nlohmann::ordered_json::array();
    for (const PrimitiveTable& p : primitives) prims.push_back(nlohmann::ordered_json::parse(primitive_to_json(p)));
    j["primitives"] = prims;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::data, "cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorKind::data, "write failed for '" + path + "'");
}

PrimitivesFile read_primitives_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::data, "cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorKind::data, "bad primitives file '" + path + "': " + ex.what());
    }
    try {
        PrimitivesFile out{structure_from_json(j.at("structure")), {}, j.value("p_seen", 1.0)};
        for (const auto& jp : j.at("primitives")) {
            std::vector<TokenId> table = jp.at("table").get<std::vector<TokenId>>();
            std::vector<int> mask = jp.at("seen_mask").get<std::vector<int>>();
            std::vector<std::uint8_t> seen(mask.begin(), mask.end());
            out.primitives.emplace_back(jp.at("arity").get<int>(), jp.at("vocab").get<std::uint32_t>(),
                                        std::move(table), std::move(seen));
        }
        return out;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorKind::data, "bad primitives file '" + path + "': " + ex.what());
    }
}

}  // namespace covlab
