#include "covlab/brute_force.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "covlab/prng.hpp"
#include "covlab/task_model.hpp"

namespace covlab {

namespace {

std::vector<TokenId> take_positions(std::span<const TokenId> input, std::uint32_t bits) {
    std::vector<TokenId> out;
    for (std::size_t i = 0; i < input.size(); ++i)
        if ((bits >> i) & 1u) out.push_back(input[i]);
    return out;
}

struct FragmentInfo {
    // complement tokens -> output observed in D
    std::map<std::vector<TokenId>, TokenId> behavior;
};

// Equivalence classes at one subset, built by checking every fragment pair
// against the definition and closing transitively.
struct SubsetEquivalence {
    std::vector<std::vector<TokenId>> fragments;  // sorted
    std::vector<std::int32_t> root;               // class representative per fragment

    std::int64_t index_of(const std::vector<TokenId>& frag) const {
        const auto it = std::lower_bound(fragments.begin(), fragments.end(), frag);
        if (it == fragments.end() || *it != frag) return -1;
        return it - fragments.begin();
    }
};

struct PairCheck {
    int agree = 0;
    bool contradicted = false;
};

PairCheck check_pair(const FragmentInfo& fa, const FragmentInfo& fb) {
    PairCheck result;
    for (const auto& [comp, out] : fa.behavior) {
        const auto it = fb.behavior.find(comp);
        if (it == fb.behavior.end()) continue;
        if (it->second == out)
            ++result.agree;
        else
            result.contradicted = true;
    }
    return result;
}

SubsetEquivalence build_equivalence(std::span<const std::vector<TokenId>> train,
                                    const std::function<TokenId(std::span<const TokenId>)>& truth,
                                    IndexSubset subset, int k, EquivalenceMode mode) {
    std::map<std::vector<TokenId>, FragmentInfo> info;
    for (const auto& input : train) {
        const std::vector<TokenId> frag = take_positions(input, subset.bits);
        const std::vector<TokenId> comp = take_positions(input, subset.complement_bits());
        info[frag].behavior[comp] = truth(input);
    }

    SubsetEquivalence eq;
    for (const auto& [frag, unused] : info) eq.fragments.push_back(frag);
    const std::size_t n = eq.fragments.size();

    std::vector<std::int32_t> parent(n);
    for (std::size_t i = 0; i < n; ++i) parent[i] = static_cast<std::int32_t>(i);
    std::function<std::int32_t(std::int32_t)> find = [&](std::int32_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };

    std::vector<std::vector<std::uint8_t>> contradicted;
    if (mode == EquivalenceMode::component_consistent)
        contradicted.assign(n, std::vector<std::uint8_t>(n, 0));

    // First pass: record the definition verdict for every pair.
    std::vector<std::tuple<std::int32_t, std::uint32_t, std::uint32_t>> qualifying;  // (-agree, a, b)
    for (std::size_t i = 0; i < n; ++i) {
        const FragmentInfo& fa = info[eq.fragments[i]];
        for (std::size_t j = i + 1; j < n; ++j) {
            const PairCheck check = check_pair(fa, info[eq.fragments[j]]);
            if (mode == EquivalenceMode::component_consistent && check.contradicted)
                contradicted[i][j] = contradicted[j][i] = 1;
            if (!check.contradicted && check.agree >= k)
                qualifying.emplace_back(-check.agree, static_cast<std::uint32_t>(i),
                                        static_cast<std::uint32_t>(j));
        }
    }
    // Strongest evidence first, matching the staged engine's greedy order.
    if (mode == EquivalenceMode::component_consistent)
        std::sort(qualifying.begin(), qualifying.end());

    for (const auto& [neg_agree, a, b] : qualifying) {
        const std::int32_t ra = find(a), rb = find(b);
        if (ra == rb) continue;
        if (mode == EquivalenceMode::component_consistent) {
            bool veto = false;
            for (std::size_t x = 0; x < n && !veto; ++x) {
                if (find(static_cast<std::int32_t>(x)) != ra) continue;
                for (std::size_t y = 0; y < n; ++y) {
                    if (contradicted[x][y] && find(static_cast<std::int32_t>(y)) == rb) {
                        veto = true;
                        break;
                    }
                }
            }
            if (veto) continue;
        }
        parent[rb] = ra;
    }

    eq.root.resize(n);
    for (std::size_t i = 0; i < n; ++i) eq.root[i] = find(static_cast<std::int32_t>(i));
    return eq;
}

}  // namespace

bool BruteForceResult::covered_input(std::span<const TokenId> input) const {
    for (std::size_t v = 0; v < vertices.size(); ++v) {
        if (vertices[v].size() != input.size()) continue;
        if (std::equal(vertices[v].begin(), vertices[v].end(), input.begin())) return covered[v] != 0;
    }
    return false;
}

std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>> brute_force_equivalent_pairs(
    std::span<const std::vector<TokenId>> train,
    const std::function<TokenId(std::span<const TokenId>)>& truth, IndexSubset subset, int k) {
    std::map<std::vector<TokenId>, FragmentInfo> info;
    for (const auto& input : train) {
        const std::vector<TokenId> frag = take_positions(input, subset.bits);
        const std::vector<TokenId> comp = take_positions(input, subset.complement_bits());
        info[frag].behavior[comp] = truth(input);
    }
    std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>> out;
    for (auto ia = info.begin(); ia != info.end(); ++ia) {
        auto ib = ia;
        for (++ib; ib != info.end(); ++ib) {
            const PairCheck check = check_pair(ia->second, ib->second);
            if (!check.contradicted && check.agree >= k) out.emplace_back(ia->first, ib->first);
        }
    }
    return out;
}

BruteForceResult brute_force_coverage(std::span<const std::vector<TokenId>> train,
                                      std::span<const std::vector<TokenId>> extra_vertices,
                                      const std::function<TokenId(std::span<const TokenId>)>& truth,
                                      std::uint32_t vocab, int k, const BruteForceOptions& options) {
    if (train.empty()) throw Error(ErrorKind::data, "brute force needs a nonempty training set");
    const int n = static_cast<int>(train[0].size());

    BruteForceResult result;
    if (options.full_domain) {
        double domain = 1;
        for (int i = 0; i < n; ++i) domain *= vocab;
        if (domain > 1e6)
            throw Error(ErrorKind::capacity, "full-domain brute force limited to |X|^n <= 10^6");
        std::vector<TokenId> current(n, 0);
        const std::size_t total = static_cast<std::size_t>(domain);
        result.vertices.reserve(total);
        for (std::size_t flat = 0; flat < total; ++flat) {
            std::size_t rest = flat;
            for (int i = n - 1; i >= 0; --i) {
                current[i] = static_cast<TokenId>(rest % vocab);
                rest /= vocab;
            }
            result.vertices.push_back(current);
        }
    } else {
        result.vertices.assign(train.begin(), train.end());
        for (const auto& v : extra_vertices) {
            if (static_cast<int>(v.size()) != n)
                throw Error(ErrorKind::data, "vertex arity mismatch in brute force");
            if (std::find(result.vertices.begin(), result.vertices.end(), v) == result.vertices.end())
                result.vertices.push_back(v);
        }
    }

    result.is_train.assign(result.vertices.size(), 0);
    for (std::size_t v = 0; v < result.vertices.size(); ++v)
        for (const auto& t : train)
            if (t == result.vertices[v]) {
                result.is_train[v] = 1;
                break;
            }

    const std::vector<IndexSubset> subsets = enumerate_subsets(n, options.scope);
    std::vector<SubsetEquivalence> equivalence;
    equivalence.reserve(subsets.size());
    for (const IndexSubset& subset : subsets)
        equivalence.push_back(build_equivalence(train, truth, subset, k, options.mode));

    std::vector<TokenId> outputs(result.vertices.size());
    for (std::size_t v = 0; v < result.vertices.size(); ++v) outputs[v] = truth(result.vertices[v]);

    // Quadratic edge scan: truth filter, then any diff-covering subset with
    // both fragments observed in D and sharing an equivalence class.
    const std::size_t count = result.vertices.size();
    for (std::size_t a = 0; a < count; ++a) {
        for (std::size_t b = a + 1; b < count; ++b) {
            if (outputs[a] != outputs[b]) continue;
            std::uint32_t diff = 0;
            for (int i = 0; i < n; ++i)
                if (result.vertices[a][i] != result.vertices[b][i]) diff |= 1u << i;
            if (diff == 0) continue;
            bool edge = false;
            for (std::size_t s = 0; s < subsets.size() && !edge; ++s) {
                if ((diff & ~subsets[s].bits) != 0) continue;  // subset must cover every diff position
                const auto frag_a = take_positions(result.vertices[a], subsets[s].bits);
                const auto frag_b = take_positions(result.vertices[b], subsets[s].bits);
                const std::int64_t ia = equivalence[s].index_of(frag_a);
                const std::int64_t ib = equivalence[s].index_of(frag_b);
                if (ia < 0 || ib < 0) continue;
                if (equivalence[s].root[ia] == equivalence[s].root[ib]) edge = true;
            }
            if (edge) result.edges.emplace_back(static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b));
        }
    }

    std::vector<std::int32_t> parent(count);
    for (std::size_t i = 0; i < count; ++i) parent[i] = static_cast<std::int32_t>(i);
    std::function<std::int32_t(std::int32_t)> find = [&](std::int32_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    for (const auto& [a, b] : result.edges) {
        const std::int32_t ra = find(static_cast<std::int32_t>(a)), rb = find(static_cast<std::int32_t>(b));
        if (ra != rb) parent[rb] = ra;
    }
    std::vector<std::uint8_t> root_has_train(count, 0);
    for (std::size_t v = 0; v < count; ++v)
        if (result.is_train[v]) root_has_train[find(static_cast<std::int32_t>(v))] = 1;
    result.covered.assign(count, 0);
    for (std::size_t v = 0; v < count; ++v)
        result.covered[v] = root_has_train[find(static_cast<std::int32_t>(v))];
    return result;
}

OracleSuiteResult run_oracle_suite(const OracleSuiteConfig& config) {
    OracleSuiteResult result;
    const Prng root(config.seed);
    const int n = 3;

    for (int instance = 0; instance < config.instances; ++instance) {
        Prng rng = root.derive(instance);
        const std::uint32_t vocab =
            config.vocab_sizes[rng.uniform_below(config.vocab_sizes.size())];
        const std::size_t domain = static_cast<std::size_t>(vocab) * vocab * vocab;

        // Ground truth: alternate a two-hop composition with a free random map.
        std::function<TokenId(std::span<const TokenId>)> truth;
        CompositionStructure structure = CompositionStructure::two_hop();
        std::vector<PrimitiveTable> primitives;
        std::vector<TokenId> random_map;
        if (instance % 2 == 0) {
            Prng f1_rng = rng.derive(11), f2_rng = rng.derive(12);
            primitives.push_back(make_random_primitive(2, vocab, f1_rng));
            primitives.push_back(make_random_primitive(2, vocab, f2_rng));
            truth = [&structure, &primitives](std::span<const TokenId> in) {
                return evaluate(structure, primitives, in).output;
            };
        } else {
            Prng map_rng = rng.derive(13);
            random_map.resize(domain);
            for (auto& t : random_map) t = static_cast<TokenId>(map_rng.uniform_below(vocab));
            truth = [&random_map, vocab](std::span<const TokenId> in) {
                return random_map[(static_cast<std::size_t>(in[0]) * vocab + in[1]) * vocab + in[2]];
            };
        }

        auto decode = [&](std::size_t flat) {
            std::vector<TokenId> in(n);
            for (int i = n - 1; i >= 0; --i) {
                in[i] = static_cast<TokenId>(flat % vocab);
                flat /= vocab;
            }
            return in;
        };

        // Random training set and disjoint test vertices.
        const std::size_t train_size = 2 + rng.uniform_below(config.max_train - 1);
        std::set<std::size_t> picked;
        while (picked.size() < std::min(train_size, domain)) picked.insert(rng.uniform_below(domain));
        std::vector<std::vector<TokenId>> train;
        for (std::size_t flat : picked) train.push_back(decode(flat));
        std::vector<std::vector<TokenId>> tests;
        std::set<std::size_t> test_picked;
        while (tests.size() < std::min<std::size_t>(config.n_tests, domain - picked.size())) {
            const std::size_t flat = rng.uniform_below(domain);
            if (picked.contains(flat) || !test_picked.insert(flat).second) continue;
            tests.push_back(decode(flat));
        }

        std::vector<Vertex> train_vertices, test_vertices;
        for (const auto& in : train) train_vertices.push_back({in, truth(in), Split::train});
        for (const auto& in : tests) test_vertices.push_back({in, truth(in), Split::id_test});

        CoverageConfig cov;
        cov.k_max = config.k_max;
        cov.mode = config.mode;
        cov.workers = config.workers;
        const CoverageReport report = k_cutoff_sweep(train_vertices, test_vertices, cov);

        std::vector<std::uint8_t> previous_covered;
        for (int k = 1; k <= config.k_max; ++k) {
            ++result.checks;
            BruteForceOptions opt;
            opt.mode = config.mode;
            const BruteForceResult restricted =
                brute_force_coverage(train, tests, truth, vocab, k, opt);
            opt.full_domain = true;
            const BruteForceResult full = brute_force_coverage(train, tests, truth, vocab, k, opt);

            for (std::size_t v = 0; v < report.vertices.size(); ++v) {
                const bool engine_covered = report.covered_at[k - 1][v] != 0;
                if (engine_covered != restricted.covered_input(report.vertices[v].input))
                    ++result.restricted_mismatches;
                const bool full_covered = full.covered_input(report.vertices[v].input);
                if (engine_covered && !full_covered)
                    ++result.restricted_mismatches;  // engine must be a subgraph of the full graph
                if (!engine_covered && full_covered) ++result.full_domain_divergences;
                if (report.vertices[v].split == Split::train && !engine_covered)
                    ++result.monotonicity_violations;
                if (k > 1 && engine_covered && !previous_covered[v]) ++result.monotonicity_violations;
            }
            previous_covered = report.covered_at[k - 1];
        }
        ++result.instances;
    }
    return result;
}

}  // namespace covlab
