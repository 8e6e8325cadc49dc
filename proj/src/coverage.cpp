#include "covlab/coverage.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "covlab/parallel.hpp"

namespace covlab {

namespace {

constexpr int kMaxPositions = 8;
constexpr std::uint32_t kMaxVocabForKeys = 1u << 16;

void check_vertices(std::span<const Vertex> vertices, int n) {
    for (const Vertex& v : vertices) {
        if (static_cast<int>(v.input.size()) != n)
            throw Error(ErrorKind::data, "mixed input arities in coverage vertex set");
        for (TokenId t : v.input)
            if (t >= kMaxVocabForKeys) throw Error(ErrorKind::data, "token ids above 2^16 are not supported");
    }
}

std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) {
    return (static_cast<std::uint64_t>(a) << 32) | b;
}

struct PackedKeyHash {
    std::size_t operator()(PackedKey k) const {
        std::uint64_t h = static_cast<std::uint64_t>(k) * 0x9e3779b97f4a7c15ULL;
        h ^= static_cast<std::uint64_t>(k >> 64) * 0xbf58476d1ce4e5b9ULL;
        return h ^ (h >> 29);
    }
};

// Per-subset, k-independent state shared across the k sweep.
struct SubsetData {
    IndexSubset subset;
    std::vector<PackedKey> fragments;
    std::vector<PackedKey> complements;
    std::vector<BehaviorMap::Entry> entries;  // sorted by (comp, frag)
    std::vector<PairEvidence> pairs;          // sorted by (a, b)
    std::int32_t max_agree = 0;               // over non-contradicted pairs
};

SubsetData build_subset_data(std::span<const Vertex> train, IndexSubset subset) {
    SubsetData data;
    data.subset = subset;

    std::vector<PackedKey> frag_keys(train.size());
    std::vector<PackedKey> comp_keys(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        frag_keys[i] = pack_subset(train[i].input, subset.bits);
        comp_keys[i] = pack_subset(train[i].input, subset.complement_bits());
    }

    data.fragments = frag_keys;
    std::sort(data.fragments.begin(), data.fragments.end());
    data.fragments.erase(std::unique(data.fragments.begin(), data.fragments.end()), data.fragments.end());
    data.complements = comp_keys;
    std::sort(data.complements.begin(), data.complements.end());
    data.complements.erase(std::unique(data.complements.begin(), data.complements.end()),
                           data.complements.end());

    data.entries.resize(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto fit = std::lower_bound(data.fragments.begin(), data.fragments.end(), frag_keys[i]);
        const auto cit = std::lower_bound(data.complements.begin(), data.complements.end(), comp_keys[i]);
        data.entries[i] = {static_cast<std::uint32_t>(cit - data.complements.begin()),
                           static_cast<std::uint32_t>(fit - data.fragments.begin()), train[i].truth};
    }
    std::sort(data.entries.begin(), data.entries.end(), [](const auto& a, const auto& b) {
        return a.comp != b.comp ? a.comp < b.comp : a.frag < b.frag;
    });
    // Distinct train inputs cannot repeat a (fragment, complement) pair, so
    // co-occurrence counting per complement run needs no deduplication.
    return data;
}

// Candidate pairs come from the complement-inverted index: only fragments
// sharing at least one complement can ever satisfy the threshold, so the
// quadratic all-pairs scan over fragments is never materialized.
void count_evidence(SubsetData& data) {
    std::unordered_map<std::uint64_t, std::pair<std::int32_t, bool>> acc;
    acc.reserve(data.entries.size() * 2);
    std::size_t run_begin = 0;
    while (run_begin < data.entries.size()) {
        std::size_t run_end = run_begin;
        const std::uint32_t comp = data.entries[run_begin].comp;
        while (run_end < data.entries.size() && data.entries[run_end].comp == comp) ++run_end;
        for (std::size_t i = run_begin; i < run_end; ++i) {
            for (std::size_t j = i + 1; j < run_end; ++j) {
                auto& slot = acc[pair_key(data.entries[i].frag, data.entries[j].frag)];
                if (data.entries[i].out == data.entries[j].out)
                    ++slot.first;
                else
                    slot.second = true;
            }
        }
        run_begin = run_end;
    }
    data.pairs.reserve(acc.size());
    for (const auto& [key, v] : acc) {
        PairEvidence ev;
        ev.a = static_cast<std::uint32_t>(key >> 32);
        ev.b = static_cast<std::uint32_t>(key & 0xffffffffu);
        ev.agree = v.first;
        ev.contradicted = v.second;
        data.pairs.push_back(ev);
        if (!ev.contradicted) data.max_agree = std::max(data.max_agree, ev.agree);
    }
    std::sort(data.pairs.begin(), data.pairs.end(),
              [](const PairEvidence& x, const PairEvidence& y) {
                  return x.a != y.a ? x.a < y.a : x.b < y.b;
              });
}

// Merges qualifying pairs into a union-find. component_consistent processes
// pairs strongest-evidence-first, keeps per-root member lists and sorted
// contradicted-partner lists (small-to-large merging), and skips any union
// that would co-locate a contradicted pair.
UnionFind merge_pairs(std::size_t n_fragments, const std::vector<PairEvidence>& pairs, int k,
                      EquivalenceMode mode) {
    UnionFind uf(n_fragments);
    if (mode == EquivalenceMode::per_pair) {
        for (const PairEvidence& ev : pairs)
            if (!ev.contradicted && ev.agree >= k) uf.unite(ev.a, ev.b);
        return uf;
    }

    const std::size_t n = n_fragments;
    std::vector<std::vector<std::uint32_t>> members(n), contra(n);
    for (std::size_t i = 0; i < n; ++i) members[i].push_back(static_cast<std::uint32_t>(i));
    std::vector<PairEvidence> qualifying;
    for (const PairEvidence& ev : pairs) {
        if (ev.contradicted) {
            contra[ev.a].push_back(ev.b);
            contra[ev.b].push_back(ev.a);
        } else if (ev.agree >= k) {
            qualifying.push_back(ev);
        }
    }
    for (auto& c : contra) std::sort(c.begin(), c.end());
    std::sort(qualifying.begin(), qualifying.end(), [](const PairEvidence& x, const PairEvidence& y) {
        if (x.agree != y.agree) return x.agree > y.agree;
        return x.a != y.a ? x.a < y.a : x.b < y.b;
    });

    for (const PairEvidence& ev : qualifying) {
        std::int32_t ra = uf.find(ev.a), rb = uf.find(ev.b);
        if (ra == rb) continue;
        if (members[ra].size() > members[rb].size()) std::swap(ra, rb);
        // ra is the smaller side; veto if any of its members is a
        // contradicted partner of the other side.
        bool veto = false;
        for (std::uint32_t m : members[ra]) {
            if (std::binary_search(contra[rb].begin(), contra[rb].end(), m)) {
                veto = true;
                break;
            }
        }
        if (veto) continue;
        uf.unite(ra, rb);
        const std::int32_t target = uf.find(ra);
        const std::int32_t source = target == ra ? rb : ra;
        members[target].insert(members[target].end(), members[source].begin(), members[source].end());
        members[source].clear();
        members[source].shrink_to_fit();
        std::vector<std::uint32_t> merged;
        merged.reserve(contra[target].size() + contra[source].size());
        std::merge(contra[target].begin(), contra[target].end(), contra[source].begin(),
                   contra[source].end(), std::back_inserter(merged));
        merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
        contra[target] = std::move(merged);
        contra[source].clear();
        contra[source].shrink_to_fit();
    }
    return uf;
}

}  // namespace

bool IndexSubset::is_contiguous() const {
    if (bits == 0) return false;
    const std::uint32_t shifted = bits >> __builtin_ctz(bits);
    return (shifted & (shifted + 1)) == 0;
}

std::vector<IndexSubset> enumerate_subsets(int n, SubsetScope scope) {
    if (n < 2 || n > kMaxPositions)
        throw Error(ErrorKind::data, "coverage supports between 2 and 8 input positions");
    std::vector<IndexSubset> out;
    const std::uint32_t full = (1u << n) - 1;
    for (std::uint32_t bits = 1; bits < full; ++bits) {
        IndexSubset s{bits, n};
        if (scope == SubsetScope::contiguous && !s.is_contiguous()) continue;
        out.push_back(s);
    }
    return out;
}

PackedKey pack_all(std::span<const TokenId> tokens) {
    PackedKey key = 0;
    for (TokenId t : tokens) key = (key << 16) | static_cast<PackedKey>(t & 0xffffu);
    return key;
}

PackedKey pack_subset(std::span<const TokenId> input, std::uint32_t bits) {
    PackedKey key = 0;
    for (std::size_t i = 0; i < input.size(); ++i)
        if ((bits >> i) & 1u) key = (key << 16) | static_cast<PackedKey>(input[i] & 0xffffu);
    return key;
}

std::vector<TokenId> unpack_tokens(PackedKey key, int count) {
    std::vector<TokenId> out(count);
    for (int i = count - 1; i >= 0; --i) {
        out[i] = static_cast<TokenId>(key & 0xffffu);
        key >>= 16;
    }
    return out;
}

std::int64_t BehaviorMap::fragment_id(PackedKey key) const {
    const auto it = std::lower_bound(fragments.begin(), fragments.end(), key);
    if (it == fragments.end() || *it != key) return -1;
    return it - fragments.begin();
}

std::vector<std::pair<PackedKey, TokenId>> BehaviorMap::fragment_behavior(PackedKey frag) const {
    std::vector<std::pair<PackedKey, TokenId>> out;
    const std::int64_t id = fragment_id(frag);
    if (id < 0) return out;
    for (const Entry& e : entries)
        if (e.frag == id) out.emplace_back(complements[e.comp], e.out);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<BehaviorMap> build_behavior_maps(std::span<const Vertex> train, SubsetScope scope, int workers) {
    if (train.empty()) throw Error(ErrorKind::data, "behavior maps need a nonempty training set");
    const int n = static_cast<int>(train[0].input.size());
    check_vertices(train, n);
    const std::vector<IndexSubset> subsets = enumerate_subsets(n, scope);
    std::vector<BehaviorMap> maps(subsets.size());
    parallel_for(static_cast<std::int64_t>(subsets.size()), workers, [&](std::int64_t i) {
        SubsetData data = build_subset_data(train, subsets[i]);
        maps[i].subset = data.subset;
        maps[i].fragments = std::move(data.fragments);
        maps[i].complements = std::move(data.complements);
        maps[i].entries = std::move(data.entries);
    });
    return maps;
}

bool EquivalenceIndex::equivalent(PackedKey frag_a, PackedKey frag_b) {
    const auto ia = std::lower_bound(fragments.begin(), fragments.end(), frag_a);
    const auto ib = std::lower_bound(fragments.begin(), fragments.end(), frag_b);
    if (ia == fragments.end() || *ia != frag_a || ib == fragments.end() || *ib != frag_b) return false;
    return uf.find(static_cast<std::int32_t>(ia - fragments.begin())) ==
           uf.find(static_cast<std::int32_t>(ib - fragments.begin()));
}

std::vector<std::pair<PackedKey, PackedKey>> EquivalenceIndex::merged_pairs() const {
    std::vector<std::pair<PackedKey, PackedKey>> out;
    for (const PairEvidence& ev : pairs)
        if (!ev.contradicted && ev.agree >= k) out.emplace_back(fragments[ev.a], fragments[ev.b]);
    return out;
}

std::vector<EquivalenceIndex> compute_equivalence(const std::vector<BehaviorMap>& behavior_maps, int k,
                                                  EquivalenceMode mode, int workers) {
    if (k < 1) throw Error(ErrorKind::usage, "evidence threshold k must be >= 1");
    std::vector<EquivalenceIndex> out(behavior_maps.size());
    parallel_for(static_cast<std::int64_t>(behavior_maps.size()), workers, [&](std::int64_t i) {
        SubsetData data;
        data.subset = behavior_maps[i].subset;
        data.fragments = behavior_maps[i].fragments;
        data.complements = behavior_maps[i].complements;
        data.entries = behavior_maps[i].entries;
        count_evidence(data);
        out[i].subset = data.subset;
        out[i].fragments = std::move(data.fragments);
        out[i].pairs = std::move(data.pairs);
        out[i].k = k;
        out[i].uf = merge_pairs(out[i].fragments.size(), out[i].pairs, k, mode);
    });
    return out;
}

SubstitutionGraph build_substitution_graph(std::span<const Vertex> vertices,
                                           std::vector<EquivalenceIndex>& equivalence, int workers) {
    SubstitutionGraph graph;
    graph.n_vertices = vertices.size();
    if (vertices.empty()) return graph;
    const int n = static_cast<int>(vertices[0].input.size());
    check_vertices(vertices, n);

    std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> per_subset(equivalence.size());
    parallel_for(static_cast<std::int64_t>(equivalence.size()), workers, [&](std::int64_t s) {
        EquivalenceIndex& eq = equivalence[s];
        if (eq.subset.n != n) throw Error(ErrorKind::data, "equivalence index arity mismatch");
        struct Bucket {
            std::int32_t root;
            PackedKey comp;
            TokenId truth;
            std::uint32_t vertex;
        };
        std::vector<Bucket> buckets;
        buckets.reserve(vertices.size());
        for (std::uint32_t v = 0; v < vertices.size(); ++v) {
            const PackedKey frag = pack_subset(vertices[v].input, eq.subset.bits);
            const auto it = std::lower_bound(eq.fragments.begin(), eq.fragments.end(), frag);
            if (it == eq.fragments.end() || *it != frag) continue;
            const std::int32_t root = eq.uf.find(static_cast<std::int32_t>(it - eq.fragments.begin()));
            buckets.push_back({root, pack_subset(vertices[v].input, eq.subset.complement_bits()),
                               vertices[v].truth, v});
        }
        std::sort(buckets.begin(), buckets.end(), [](const Bucket& a, const Bucket& b) {
            if (a.root != b.root) return a.root < b.root;
            if (a.comp != b.comp) return a.comp < b.comp;
            if (a.truth != b.truth) return a.truth < b.truth;
            return a.vertex < b.vertex;
        });
        // Vertices sharing (equivalence root, complement, truth) form a
        // clique of safe substitutions.
        std::size_t run_begin = 0;
        while (run_begin < buckets.size()) {
            std::size_t run_end = run_begin;
            while (run_end < buckets.size() && buckets[run_end].root == buckets[run_begin].root &&
                   buckets[run_end].comp == buckets[run_begin].comp &&
                   buckets[run_end].truth == buckets[run_begin].truth)
                ++run_end;
            for (std::size_t i = run_begin; i < run_end; ++i)
                for (std::size_t j = i + 1; j < run_end; ++j)
                    per_subset[s].emplace_back(buckets[i].vertex, buckets[j].vertex);
            run_begin = run_end;
        }
    });

    for (auto& edges : per_subset)
        graph.edges.insert(graph.edges.end(), edges.begin(), edges.end());
    std::sort(graph.edges.begin(), graph.edges.end());
    graph.edges.erase(std::unique(graph.edges.begin(), graph.edges.end()), graph.edges.end());
    return graph;
}

CoverageResult compute_coverage(const SubstitutionGraph& graph, std::span<const Vertex> vertices) {
    if (graph.n_vertices != vertices.size())
        throw Error(ErrorKind::data, "graph and vertex list disagree on size");
    UnionFind uf(graph.n_vertices);
    for (const auto& [a, b] : graph.edges) uf.unite(static_cast<std::int32_t>(a), static_cast<std::int32_t>(b));

    CoverageResult result;
    result.component_id.assign(graph.n_vertices, -1);
    result.covered.assign(graph.n_vertices, 0);
    std::vector<std::int32_t> label(graph.n_vertices, -1);
    std::vector<std::uint8_t> root_has_train(graph.n_vertices, 0);
    for (std::uint32_t v = 0; v < graph.n_vertices; ++v) {
        const std::int32_t r = uf.find(static_cast<std::int32_t>(v));
        if (label[r] < 0) label[r] = static_cast<std::int32_t>(v);  // min id: ascending scan
        if (vertices[v].split == Split::train) root_has_train[r] = 1;
    }
    for (std::uint32_t v = 0; v < graph.n_vertices; ++v) {
        const std::int32_t r = uf.find(static_cast<std::int32_t>(v));
        result.component_id[v] = label[r];
        result.covered[v] = root_has_train[r];
    }
    return result;
}

double CoverageReport::covered_fraction(Split split, int k) const {
    std::size_t total = 0, covered = 0;
    for (std::size_t v = 0; v < vertices.size(); ++v) {
        if (vertices[v].split != split) continue;
        ++total;
        covered += covered_at[k - 1][v];
    }
    return total == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(total);
}

std::size_t CoverageReport::split_count(Split split) const {
    std::size_t total = 0;
    for (const Vertex& v : vertices) total += v.split == split;
    return total;
}

CoverageReport k_cutoff_sweep(std::span<const Vertex> train, std::span<const Vertex> tests,
                              const CoverageConfig& config) {
    if (config.k_max < 1) throw Error(ErrorKind::usage, "k_max must be >= 1");
    if (train.empty()) throw Error(ErrorKind::data, "coverage needs a nonempty training set");
    if (config.one_substitution_closure && !config.truth_fn)
        throw Error(ErrorKind::usage, "one-substitution closure requires a ground-truth function");

    CoverageReport report;
    report.k_max = config.k_max;
    report.vertices.assign(train.begin(), train.end());
    report.vertices.insert(report.vertices.end(), tests.begin(), tests.end());
    const std::size_t n_vertices = report.vertices.size();
    const int n = static_cast<int>(train[0].input.size());
    check_vertices(report.vertices, n);
    {
        std::unordered_set<PackedKey, PackedKeyHash> train_inputs;
        for (const Vertex& v : train)
            if (!train_inputs.insert(pack_all(v.input)).second)
                throw Error(ErrorKind::data, "duplicate training input");
        for (const Vertex& v : tests)
            if (train_inputs.contains(pack_all(v.input)))
                throw Error(ErrorKind::data, "test input duplicates a training input");
    }

    const std::vector<IndexSubset> subsets = enumerate_subsets(n, config.scope);
    std::vector<SubsetData> data(subsets.size());
    parallel_for(static_cast<std::int64_t>(subsets.size()), config.workers, [&](std::int64_t s) {
        data[s] = build_subset_data(train, subsets[s]);
        count_evidence(data[s]);
    });

    // Vertex fragment/complement keys are threshold-independent.
    struct VertexKeys {
        std::vector<std::int32_t> frag;  // id into data[s].fragments, -1 when absent
        std::vector<PackedKey> comp;
    };
    std::vector<VertexKeys> keys(subsets.size());
    parallel_for(static_cast<std::int64_t>(subsets.size()), config.workers, [&](std::int64_t s) {
        keys[s].frag.resize(n_vertices);
        keys[s].comp.resize(n_vertices);
        for (std::size_t v = 0; v < n_vertices; ++v) {
            const PackedKey frag = pack_subset(report.vertices[v].input, subsets[s].bits);
            const auto it = std::lower_bound(data[s].fragments.begin(), data[s].fragments.end(), frag);
            keys[s].frag[v] =
                (it != data[s].fragments.end() && *it == frag)
                    ? static_cast<std::int32_t>(it - data[s].fragments.begin())
                    : -1;
            keys[s].comp[v] = pack_subset(report.vertices[v].input, subsets[s].complement_bits());
        }
    });

    std::int32_t global_max_agree = 0;
    for (const SubsetData& d : data) global_max_agree = std::max(global_max_agree, d.max_agree);

    report.covered_at.assign(config.k_max, std::vector<std::uint8_t>(n_vertices, 0));
    report.k_cutoff.assign(n_vertices, 0);
    if (config.record_components)
        report.component_ids.assign(config.k_max, std::vector<std::int32_t>(n_vertices, -1));

    bool any_test_covered = true;
    for (int k = 1; k <= config.k_max; ++k) {
        // Above the strongest evidence no fragment pair can merge, so the
        // graph has no edges and every vertex is its own component. Once
        // every test vertex has dropped out, higher thresholds cannot add
        // coverage either, but train-train components may still exist, so
        // that shortcut is skipped while component labels are recorded.
        if (k > global_max_agree || (!any_test_covered && !config.record_components)) {
            for (std::size_t v = 0; v < n_vertices; ++v)
                report.covered_at[k - 1][v] = report.vertices[v].split == Split::train;
            if (config.record_components)
                for (std::size_t v = 0; v < n_vertices; ++v)
                    report.component_ids[k - 1][v] = static_cast<std::int32_t>(v);
            continue;
        }

        std::vector<UnionFind> frag_uf(subsets.size(), UnionFind(0));
        parallel_for(static_cast<std::int64_t>(subsets.size()), config.workers, [&](std::int64_t s) {
            frag_uf[s] = merge_pairs(data[s].fragments.size(), data[s].pairs, k, config.mode);
        });

        // Closure vertices (probe only): every single-fragment swap of a base
        // vertex through a same-root fragment.
        std::vector<Vertex> closure;
        std::vector<VertexKeys> closure_keys(subsets.size());
        if (config.one_substitution_closure) {
            std::unordered_set<PackedKey, PackedKeyHash> base_inputs;
            for (const Vertex& v : report.vertices) base_inputs.insert(pack_all(v.input));
            std::unordered_set<PackedKey, PackedKeyHash> added;
            for (std::size_t s = 0; s < subsets.size(); ++s) {
                std::vector<std::vector<std::uint32_t>> members(data[s].fragments.size());
                for (std::uint32_t f = 0; f < data[s].fragments.size(); ++f)
                    members[frag_uf[s].find(f)].push_back(f);
                const int frag_len = subsets[s].size();
                for (std::size_t v = 0; v < n_vertices; ++v) {
                    if (keys[s].frag[v] < 0) continue;
                    const std::int32_t root = frag_uf[s].find(keys[s].frag[v]);
                    for (std::uint32_t g : members[root]) {
                        if (g == static_cast<std::uint32_t>(keys[s].frag[v])) continue;
                        std::vector<TokenId> swapped = report.vertices[v].input;
                        const std::vector<TokenId> frag_tokens = unpack_tokens(data[s].fragments[g], frag_len);
                        int slot = 0;
                        for (int pos = 0; pos < n; ++pos)
                            if (subsets[s].contains(pos)) swapped[pos] = frag_tokens[slot++];
                        const PackedKey packed = pack_all(swapped);
                        if (base_inputs.contains(packed) || !added.insert(packed).second) continue;
                        Vertex cv;
                        cv.truth = config.truth_fn(swapped);
                        cv.input = std::move(swapped);
                        cv.split = Split::ood_test;  // placeholder split; never reported
                        closure.push_back(std::move(cv));
                        if (closure.size() > 2'000'000)
                            throw Error(ErrorKind::capacity, "one-substitution closure exceeded 2M vertices");
                    }
                }
            }
            for (std::size_t s = 0; s < subsets.size(); ++s) {
                closure_keys[s].frag.resize(closure.size());
                closure_keys[s].comp.resize(closure.size());
                for (std::size_t c = 0; c < closure.size(); ++c) {
                    const PackedKey frag = pack_subset(closure[c].input, subsets[s].bits);
                    const auto it =
                        std::lower_bound(data[s].fragments.begin(), data[s].fragments.end(), frag);
                    closure_keys[s].frag[c] =
                        (it != data[s].fragments.end() && *it == frag)
                            ? static_cast<std::int32_t>(it - data[s].fragments.begin())
                            : -1;
                    closure_keys[s].comp[c] = pack_subset(closure[c].input, subsets[s].complement_bits());
                }
            }
        }
        const std::size_t total_vertices = n_vertices + closure.size();

        // Stage 3 as per-subset clique groups; unions are generated in
        // sorted bucket order and applied subset-by-subset, so the resulting
        // components are identical for every worker count.
        std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> unions(subsets.size());
        parallel_for(static_cast<std::int64_t>(subsets.size()), config.workers, [&](std::int64_t s) {
            struct Bucket {
                std::int32_t root;
                PackedKey comp;
                TokenId truth;
                std::uint32_t vertex;
            };
            std::vector<Bucket> buckets;
            buckets.reserve(total_vertices);
            for (std::size_t v = 0; v < total_vertices; ++v) {
                const bool base = v < n_vertices;
                const std::int32_t frag =
                    base ? keys[s].frag[v] : closure_keys[s].frag[v - n_vertices];
                if (frag < 0) continue;
                const PackedKey comp = base ? keys[s].comp[v] : closure_keys[s].comp[v - n_vertices];
                const TokenId truth =
                    base ? report.vertices[v].truth : closure[v - n_vertices].truth;
                buckets.push_back({frag_uf[s].find(frag), comp, truth, static_cast<std::uint32_t>(v)});
            }
            std::sort(buckets.begin(), buckets.end(), [](const Bucket& a, const Bucket& b) {
                if (a.root != b.root) return a.root < b.root;
                if (a.comp != b.comp) return a.comp < b.comp;
                if (a.truth != b.truth) return a.truth < b.truth;
                return a.vertex < b.vertex;
            });
            std::size_t run_begin = 0;
            while (run_begin < buckets.size()) {
                std::size_t run_end = run_begin;
                while (run_end < buckets.size() && buckets[run_end].root == buckets[run_begin].root &&
                       buckets[run_end].comp == buckets[run_begin].comp &&
                       buckets[run_end].truth == buckets[run_begin].truth)
                    ++run_end;
                for (std::size_t i = run_begin + 1; i < run_end; ++i)
                    unions[s].emplace_back(buckets[run_begin].vertex, buckets[i].vertex);
                run_begin = run_end;
            }
        });

        UnionFind vertex_uf(total_vertices);
        for (const auto& subset_unions : unions)
            for (const auto& [a, b] : subset_unions)
                vertex_uf.unite(static_cast<std::int32_t>(a), static_cast<std::int32_t>(b));

        std::vector<std::uint8_t> root_has_train(total_vertices, 0);
        std::vector<std::int32_t> label(total_vertices, -1);
        for (std::size_t v = 0; v < total_vertices; ++v) {
            const std::int32_t r = vertex_uf.find(static_cast<std::int32_t>(v));
            if (label[r] < 0) label[r] = static_cast<std::int32_t>(v);
            if (v < n_vertices && report.vertices[v].split == Split::train) root_has_train[r] = 1;
        }
        any_test_covered = false;
        for (std::size_t v = 0; v < n_vertices; ++v) {
            const std::int32_t r = vertex_uf.find(static_cast<std::int32_t>(v));
            report.covered_at[k - 1][v] = root_has_train[r];
            if (root_has_train[r] && report.vertices[v].split != Split::train) any_test_covered = true;
            if (config.record_components) report.component_ids[k - 1][v] = label[r];
        }
    }

    for (std::size_t v = 0; v < n_vertices; ++v) {
        int cutoff = 0;
        for (int k = 1; k <= config.k_max; ++k)
            if (report.covered_at[k - 1][v]) cutoff = k;
        report.k_cutoff[v] = cutoff;
    }
    return report;
}

std::vector<Vertex> make_vertices(const CompositionStructure& structure,
                                  std::span<const PrimitiveTable> primitives,
                                  std::span<const Example> examples) {
    std::vector<Vertex> out;
    out.reserve(examples.size());
    for (const Example& e : examples) {
        const EvalResult r = evaluate(structure, primitives, e.input);
        if (r.output != e.target)
            throw Error(ErrorKind::data, "stored target disagrees with the evaluator; wrong primitives file?");
        out.push_back({e.input, r.output, e.split});
    }
    return out;
}

std::vector<Vertex> make_vertices_from_labels(std::span<const Example> examples) {
    std::vector<Vertex> out;
    out.reserve(examples.size());
    for (const Example& e : examples) out.push_back({e.input, e.target, e.split});
    return out;
}

void write_coverage_csv(const CoverageReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::data, "cannot open '" + path + "' for writing");
    out << "example_id,split,k_cutoff";
    for (int k = 1; k <= report.k_max; ++k) out << ",covered_k" << k;
    out << '\n';
    for (std::size_t v = 0; v < report.vertices.size(); ++v) {
        out << v << ',' << split_name(report.vertices[v].split) << ',' << report.k_cutoff[v];
        for (int k = 1; k <= report.k_max; ++k)
            out << ',' << static_cast<int>(report.covered_at[k - 1][v]);
        out << '\n';
    }
    if (!out) throw Error(ErrorKind::data, "write failed for '" + path + "'");
}

std::string coverage_summary_json(const CoverageReport& report) {
    std::string json = "{\"k_max\":" + std::to_string(report.k_max);
    json += ",\"truth_from_labels\":";
    json += report.truth_from_labels ? "true" : "false";
    json += ",\"splits\":{";
    bool first_split = true;
    for (Split split : {Split::train, Split::id_test, Split::ood_test}) {
        const std::size_t count = report.split_count(split);
        if (count == 0) continue;
        if (!first_split) json += ',';
        first_split = false;
        json += '"';
        json += split_name(split);
        json += "\":{\"count\":" + std::to_string(count) + ",\"covered_fraction\":[";
        for (int k = 1; k <= report.k_max; ++k) {
            if (k > 1) json += ',';
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6f", report.covered_fraction(split, k));
            json += buf;
        }
        json += "]}";
    }
    json += "}}";
    return json;
}

}  // namespace covlab
