#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "covlab/brute_force.hpp"
#include "covlab/coverage.hpp"
#include "covlab/dataset.hpp"

using namespace covlab;

namespace {

Vertex vx(std::vector<TokenId> input, TokenId truth, Split split = Split::train) {
    return Vertex{std::move(input), truth, split};
}

// Arbitrary fixed truth table for hand-built scenarios.
struct MapTruth {
    std::map<std::vector<TokenId>, TokenId> values;
    TokenId operator()(std::span<const TokenId> in) const {
        const auto it = values.find(std::vector<TokenId>(in.begin(), in.end()));
        REQUIRE(it != values.end());
        return it->second;
    }
};

struct RandomInstance {
    std::uint32_t vocab;
    std::vector<Vertex> train;
    std::vector<Vertex> tests;
    std::function<TokenId(std::span<const TokenId>)> truth;
    std::vector<TokenId> truth_table;  // backing store for the lambda

    std::vector<std::vector<TokenId>> train_inputs() const {
        std::vector<std::vector<TokenId>> out;
        for (const Vertex& v : train) out.push_back(v.input);
        return out;
    }
    std::vector<std::vector<TokenId>> test_inputs() const {
        std::vector<std::vector<TokenId>> out;
        for (const Vertex& v : tests) out.push_back(v.input);
        return out;
    }
};

RandomInstance random_instance(std::uint64_t seed, std::uint32_t vocab, std::size_t n_train,
                               std::size_t n_test) {
    RandomInstance inst;
    inst.vocab = vocab;
    Prng rng(seed);
    const std::size_t domain = static_cast<std::size_t>(vocab) * vocab * vocab;
    inst.truth_table.resize(domain);
    for (auto& t : inst.truth_table) t = static_cast<TokenId>(rng.uniform_below(vocab));
    const std::vector<TokenId>* table = &inst.truth_table;
    inst.truth = [table, vocab](std::span<const TokenId> in) {
        return (*table)[(static_cast<std::size_t>(in[0]) * vocab + in[1]) * vocab + in[2]];
    };
    std::set<std::size_t> picked;
    while (picked.size() < std::min(n_train, domain)) picked.insert(rng.uniform_below(domain));
    auto decode = [vocab](std::size_t flat) {
        std::vector<TokenId> in(3);
        for (int i = 2; i >= 0; --i) {
            in[i] = static_cast<TokenId>(flat % vocab);
            flat /= vocab;
        }
        return in;
    };
    for (std::size_t flat : picked) {
        const auto in = decode(flat);
        inst.train.push_back(vx(in, inst.truth(in), Split::train));
    }
    std::set<std::size_t> test_picked;
    while (test_picked.size() < std::min(n_test, domain - picked.size())) {
        const std::size_t flat = rng.uniform_below(domain);
        if (!picked.contains(flat)) test_picked.insert(flat);
    }
    for (std::size_t flat : test_picked) {
        const auto in = decode(flat);
        inst.tests.push_back(vx(in, inst.truth(in), Split::id_test));
    }
    return inst;
}

}  // namespace

TEST_CASE("index subsets: enumeration and contiguity") {
    CHECK(enumerate_subsets(3, SubsetScope::all).size() == 6);
    CHECK(enumerate_subsets(4, SubsetScope::all).size() == 14);
    const auto contiguous = enumerate_subsets(3, SubsetScope::contiguous);
    CHECK(contiguous.size() == 5);  // {13} excluded
    for (const IndexSubset& s : contiguous) CHECK(s.is_contiguous());
    CHECK(!IndexSubset{0b101, 3}.is_contiguous());
    CHECK(IndexSubset{0b110, 3}.is_contiguous());
}

TEST_CASE("packing preserves lexicographic order") {
    const std::vector<TokenId> a{1, 2, 3}, b{1, 2, 4}, c{2, 0, 0};
    CHECK(pack_all(a) < pack_all(b));
    CHECK(pack_all(b) < pack_all(c));
    CHECK(unpack_tokens(pack_all(a), 3) == a);
    CHECK(pack_subset(a, 0b101) == pack_all(std::vector<TokenId>{1, 3}));
}

TEST_CASE("behavior maps: single example yields one entry per subset") {
    const std::vector<Vertex> train{vx({1, 2, 3}, 7)};
    const auto maps = build_behavior_maps(train);
    CHECK(maps.size() == 6);
    for (const BehaviorMap& map : maps) {
        CHECK(map.n_fragments() == 1);
        CHECK(map.n_entries() == 1);
        CHECK(map.entries[0].out == 7);
    }
}

TEST_CASE("behavior maps: shared complement groups fragments") {
    // Two inputs agreeing on x3: the {1,2} map holds two fragments with one
    // common complement.
    const std::vector<Vertex> train{vx({1, 2, 3}, 5), vx({4, 0, 3}, 5)};
    const auto maps = build_behavior_maps(train);
    const BehaviorMap* m12 = nullptr;
    for (const BehaviorMap& map : maps)
        if (map.subset.bits == 0b011) m12 = &map;
    REQUIRE(m12 != nullptr);
    CHECK(m12->n_fragments() == 2);
    CHECK(m12->complements.size() == 1);
    const auto behavior = m12->fragment_behavior(pack_all(std::vector<TokenId>{1, 2}));
    REQUIRE(behavior.size() == 1);
    CHECK(behavior[0].second == 5);
}

TEST_CASE("behavior maps match a naive re-scan oracle on random data") {
    const RandomInstance inst = random_instance(11, 4, 30, 0);
    const auto maps = build_behavior_maps(inst.train);
    for (const BehaviorMap& map : maps) {
        std::map<std::vector<TokenId>, std::map<std::vector<TokenId>, TokenId>> expected;
        for (const Vertex& v : inst.train) {
            std::vector<TokenId> frag, comp;
            for (int i = 0; i < 3; ++i) (map.subset.contains(i) ? frag : comp).push_back(v.input[i]);
            expected[frag][comp] = v.truth;
        }
        CHECK(map.n_fragments() == expected.size());
        std::size_t total_entries = 0;
        for (const auto& [frag, behavior] : expected) {
            total_entries += behavior.size();
            const auto got = map.fragment_behavior(pack_all(frag));
            REQUIRE(got.size() == behavior.size());
            auto it = behavior.begin();
            for (const auto& [comp_key, out] : got) {
                CHECK(comp_key == pack_all(it->first));
                CHECK(out == it->second);
                ++it;
            }
        }
        CHECK(map.n_entries() == total_entries);
    }
}

TEST_CASE("equivalence threshold boundary: one agreeing complement") {
    const std::vector<Vertex> train{vx({1, 2, 9}, 5), vx({3, 4, 9}, 5)};
    const auto maps = build_behavior_maps(train);

    auto eq1 = compute_equivalence(maps, 1);
    auto eq2 = compute_equivalence(maps, 2);
    EquivalenceIndex* at_12_k1 = nullptr;
    EquivalenceIndex* at_12_k2 = nullptr;
    for (auto& e : eq1)
        if (e.subset.bits == 0b011) at_12_k1 = &e;
    for (auto& e : eq2)
        if (e.subset.bits == 0b011) at_12_k2 = &e;
    REQUIRE(at_12_k1 != nullptr);
    const PackedKey fa = pack_all(std::vector<TokenId>{1, 2});
    const PackedKey fb = pack_all(std::vector<TokenId>{3, 4});
    CHECK(at_12_k1->equivalent(fa, fb));
    CHECK(!at_12_k2->equivalent(fa, fb));
}

TEST_CASE("a single disagreeing complement blocks merging at every k") {
    const std::vector<Vertex> train{vx({1, 2, 7}, 5), vx({3, 4, 7}, 5), vx({1, 2, 8}, 6),
                                    vx({3, 4, 8}, 6), vx({1, 2, 9}, 1), vx({3, 4, 9}, 2)};
    const auto maps = build_behavior_maps(train);
    for (int k = 1; k <= 3; ++k) {
        auto eq = compute_equivalence(maps, k);
        for (auto& e : eq)
            if (e.subset.bits == 0b011)
                CHECK(!e.equivalent(pack_all(std::vector<TokenId>{1, 2}),
                                    pack_all(std::vector<TokenId>{3, 4})));
    }
}

TEST_CASE("threshold-qualifying pairs equal the definition oracle on random data") {
    for (std::uint64_t seed : {3u, 4u, 5u}) {
        const RandomInstance inst = random_instance(seed, 4, 25, 0);
        const auto maps = build_behavior_maps(inst.train);
        const auto train_inputs = inst.train_inputs();
        for (int k = 1; k <= 2; ++k) {
            auto eq = compute_equivalence(maps, k);
            for (auto& e : eq) {
                std::set<std::pair<PackedKey, PackedKey>> engine_pairs;
                for (const auto& [a, b] : e.merged_pairs())
                    engine_pairs.emplace(std::min(a, b), std::max(a, b));
                std::set<std::pair<PackedKey, PackedKey>> oracle_pairs;
                for (const auto& [a, b] :
                     brute_force_equivalent_pairs(train_inputs, inst.truth, e.subset, k)) {
                    const PackedKey ka = pack_all(a), kb = pack_all(b);
                    oracle_pairs.emplace(std::min(ka, kb), std::max(ka, kb));
                }
                CHECK(engine_pairs == oracle_pairs);
            }
        }
    }
}

TEST_CASE("substitution graph: no self edges, edge set matches quadratic oracle") {
    for (std::uint64_t seed : {21u, 22u}) {
        const RandomInstance inst = random_instance(seed, 4, 30, 10);
        std::vector<Vertex> vertices = inst.train;
        vertices.insert(vertices.end(), inst.tests.begin(), inst.tests.end());

        const auto maps = build_behavior_maps(inst.train);
        auto eq = compute_equivalence(maps, 1);
        const SubstitutionGraph graph = build_substitution_graph(vertices, eq);

        for (const auto& [a, b] : graph.edges) CHECK(a != b);

        const BruteForceResult oracle =
            brute_force_coverage(inst.train_inputs(), inst.test_inputs(), inst.truth, inst.vocab, 1, {});
        REQUIRE(oracle.vertices.size() == vertices.size());
        for (std::size_t v = 0; v < vertices.size(); ++v) REQUIRE(oracle.vertices[v] == vertices[v].input);
        std::set<std::pair<std::uint32_t, std::uint32_t>> engine_edges(graph.edges.begin(),
                                                                       graph.edges.end());
        std::set<std::pair<std::uint32_t, std::uint32_t>> oracle_edges(oracle.edges.begin(),
                                                                       oracle.edges.end());
        CHECK(engine_edges == oracle_edges);

        const CoverageResult coverage = compute_coverage(graph, vertices);
        for (std::size_t v = 0; v < vertices.size(); ++v)
            CHECK((coverage.covered[v] != 0) == (oracle.covered[v] != 0));
    }
}

TEST_CASE("coverage scenario from the two-hop illustration") {
    // f1(1,2) = f1(3,4) = b: train witnesses the equivalence at x3=0 and
    // contains (1,2,5); the test input (3,4,5) is one substitution away.
    MapTruth truth;
    truth.values[{1, 2, 0}] = 7;
    truth.values[{3, 4, 0}] = 7;
    truth.values[{1, 2, 5}] = 9;
    truth.values[{3, 4, 5}] = 9;

    std::vector<Vertex> train;
    for (const auto& in : {std::vector<TokenId>{1, 2, 0}, {3, 4, 0}, {1, 2, 5}})
        train.push_back(vx(in, truth(in), Split::train));
    const std::vector<Vertex> tests{vx({3, 4, 5}, truth(std::vector<TokenId>{3, 4, 5}), Split::id_test)};

    CoverageConfig config;
    config.k_max = 2;
    const CoverageReport report = k_cutoff_sweep(train, tests, config);
    CHECK(report.covered_at[0][3] == 1);  // covered at k=1
    CHECK(report.covered_at[1][3] == 0);  // single co-occurrence: not at k=2
    CHECK(report.k_cutoff[3] == 1);
    for (int v = 0; v < 3; ++v) CHECK(report.k_cutoff[v] == 2);  // train is always covered
}

TEST_CASE("k-cutoff is the largest covered threshold") {
    // Exactly three agreeing co-occurrences of (1,2) and (3,4): the test
    // vertex stays covered through k=3 and drops out at k=4.
    MapTruth truth;
    std::vector<Vertex> train;
    for (TokenId c : {0u, 1u, 2u}) {
        truth.values[{1, 2, c}] = static_cast<TokenId>(c + 10);
        truth.values[{3, 4, c}] = static_cast<TokenId>(c + 10);
        train.push_back(vx({1, 2, c}, truth(std::vector<TokenId>{1, 2, c})));
        train.push_back(vx({3, 4, c}, truth(std::vector<TokenId>{3, 4, c})));
    }
    truth.values[{1, 2, 7}] = 9;
    truth.values[{3, 4, 7}] = 9;
    train.push_back(vx({1, 2, 7}, 9));
    const std::vector<Vertex> tests{vx({3, 4, 7}, 9, Split::id_test)};

    CoverageConfig config;
    config.k_max = 5;
    const CoverageReport report = k_cutoff_sweep(train, tests, config);
    const std::size_t v = report.vertices.size() - 1;
    CHECK(report.covered_at[2][v] == 1);  // k=3
    CHECK(report.covered_at[3][v] == 0);  // k=4
    CHECK(report.k_cutoff[v] == 3);
}

TEST_CASE("degenerate dataset: |D| = 1 covers only itself") {
    const std::vector<Vertex> train{vx({1, 2, 3}, 4)};
    const std::vector<Vertex> tests{vx({1, 2, 0}, 4, Split::id_test), vx({0, 2, 3}, 4, Split::id_test)};
    CoverageConfig config;
    config.k_max = 2;
    const CoverageReport report = k_cutoff_sweep(train, tests, config);
    CHECK(report.covered_at[0][0] == 1);
    CHECK(report.covered_at[0][1] == 0);
    CHECK(report.covered_at[0][2] == 0);
}

TEST_CASE("engine equals definition oracle on random instances") {
    OracleSuiteConfig config;
    config.instances = 40;
    config.seed = 123;
    const OracleSuiteResult result = run_oracle_suite(config);
    CHECK(result.instances == 40);
    CHECK(result.restricted_mismatches == 0);
    CHECK(result.monotonicity_violations == 0);
}

TEST_CASE("coverage is monotone in k and contains D on random instances") {
    for (int i = 0; i < 100; ++i) {
        const std::uint32_t vocab = 4 + (i % 3);
        const RandomInstance inst = random_instance(500 + i, vocab, 8 + (i * 7) % 30, 8);
        CoverageConfig config;
        config.k_max = 3;
        const CoverageReport report = k_cutoff_sweep(inst.train, inst.tests, config);
        for (std::size_t v = 0; v < report.vertices.size(); ++v) {
            if (report.vertices[v].split == Split::train)
                for (int k = 1; k <= 3; ++k) REQUIRE(report.covered_at[k - 1][v] == 1);
            for (int k = 2; k <= 3; ++k)
                REQUIRE(report.covered_at[k - 1][v] <= report.covered_at[k - 2][v]);
        }
    }
}

TEST_CASE("contradiction dominance: one conflicting co-occurrence kills the merge at every k") {
    std::vector<Vertex> train;
    MapTruth truth;
    for (TokenId c : {0u, 5u, 6u}) {
        truth.values[{1, 2, c}] = static_cast<TokenId>(c + 1);
        truth.values[{3, 4, c}] = static_cast<TokenId>(c + 1);
        train.push_back(vx({1, 2, c}, truth(std::vector<TokenId>{1, 2, c})));
        train.push_back(vx({3, 4, c}, truth(std::vector<TokenId>{3, 4, c})));
    }
    const auto maps = build_behavior_maps(train);
    for (int k = 1; k <= 3; ++k) {
        auto eq = compute_equivalence(maps, k);
        for (auto& e : eq)
            if (e.subset.bits == 0b011)
                CHECK(e.equivalent(pack_all(std::vector<TokenId>{1, 2}),
                                   pack_all(std::vector<TokenId>{3, 4})));
    }

    train.push_back(vx({1, 2, 7}, 0));
    train.push_back(vx({3, 4, 7}, 1));
    const auto maps2 = build_behavior_maps(train);
    for (int k = 1; k <= 3; ++k) {
        auto eq = compute_equivalence(maps2, k);
        for (auto& e : eq)
            if (e.subset.bits == 0b011)
                CHECK(!e.equivalent(pack_all(std::vector<TokenId>{1, 2}),
                                    pack_all(std::vector<TokenId>{3, 4})));
    }
}

TEST_CASE("reports are identical for every worker count") {
    const RandomInstance inst = random_instance(77, 6, 60, 20);
    CoverageConfig serial;
    serial.k_max = 3;
    serial.workers = 1;
    serial.record_components = true;
    CoverageConfig parallel = serial;
    parallel.workers = 4;
    const CoverageReport a = k_cutoff_sweep(inst.train, inst.tests, serial);
    const CoverageReport b = k_cutoff_sweep(inst.train, inst.tests, parallel);
    CHECK(a.covered_at == b.covered_at);
    CHECK(a.k_cutoff == b.k_cutoff);
    CHECK(a.component_ids == b.component_ids);
}

TEST_CASE("component labels are canonical minima") {
    const std::vector<Vertex> train{vx({1, 2, 9}, 5), vx({3, 4, 9}, 5)};
    const std::vector<Vertex> tests{vx({9, 9, 9}, 0, Split::id_test)};
    CoverageConfig config;
    config.k_max = 1;
    config.record_components = true;
    const CoverageReport report = k_cutoff_sweep(train, tests, config);
    CHECK(report.component_ids[0][0] == 0);
    CHECK(report.component_ids[0][1] == 0);
    CHECK(report.component_ids[0][2] == 2);
}

TEST_CASE("component-consistent mode vetoes class-mixing coincidences") {
    // (1,2)=(3,4) agree once; (5,6)=(1,2) strongly; but (5,6) contradicts
    // (3,4). Literal merging links all three through (1,2); consistent mode
    // keeps (3,4) out of the class.
    MapTruth truth;
    std::vector<Vertex> train;
    auto add = [&](std::vector<TokenId> in, TokenId out) {
        truth.values[in] = out;
        train.push_back(vx(in, out));
    };
    add({1, 2, 0}, 5);
    add({3, 4, 0}, 5);
    add({5, 6, 1}, 7);
    add({1, 2, 1}, 7);
    add({5, 6, 2}, 8);
    add({1, 2, 2}, 8);
    add({5, 6, 3}, 3);
    add({3, 4, 3}, 4);

    const auto maps = build_behavior_maps(train);
    const PackedKey f12 = pack_all(std::vector<TokenId>{1, 2});
    const PackedKey f34 = pack_all(std::vector<TokenId>{3, 4});
    const PackedKey f56 = pack_all(std::vector<TokenId>{5, 6});

    auto literal = compute_equivalence(maps, 1, EquivalenceMode::per_pair);
    auto consistent = compute_equivalence(maps, 1, EquivalenceMode::component_consistent);
    for (auto& e : literal)
        if (e.subset.bits == 0b011) {
            CHECK(e.equivalent(f12, f34));
            CHECK(e.equivalent(f12, f56));
            CHECK(e.equivalent(f34, f56));  // transitive closure despite the contradiction
        }
    for (auto& e : consistent)
        if (e.subset.bits == 0b011) {
            CHECK(e.equivalent(f12, f56));
            CHECK(!e.equivalent(f34, f56));
        }
}

TEST_CASE("one-substitution closure only widens coverage, within the full-domain bound") {
    for (std::uint64_t seed : {31u, 32u, 33u}) {
        const RandomInstance inst = random_instance(seed, 4, 20, 10);
        CoverageConfig base;
        base.k_max = 2;
        CoverageConfig closed = base;
        closed.one_substitution_closure = true;
        closed.truth_fn = inst.truth;
        const CoverageReport without = k_cutoff_sweep(inst.train, inst.tests, base);
        const CoverageReport with = k_cutoff_sweep(inst.train, inst.tests, closed);

        BruteForceOptions full_opt;
        full_opt.full_domain = true;
        for (int k = 1; k <= 2; ++k) {
            const BruteForceResult full = brute_force_coverage(inst.train_inputs(), inst.test_inputs(),
                                                               inst.truth, inst.vocab, k, full_opt);
            for (std::size_t v = 0; v < with.vertices.size(); ++v) {
                CHECK(with.covered_at[k - 1][v] >= without.covered_at[k - 1][v]);
                if (with.covered_at[k - 1][v]) CHECK(full.covered_input(with.vertices[v].input));
            }
        }
    }
}

TEST_CASE("brute force trivia: |D|=1 and oversized k") {
    const std::vector<std::vector<TokenId>> train{{1, 2, 3}};
    auto truth = [](std::span<const TokenId> in) { return in[0]; };
    const BruteForceResult r1 = brute_force_coverage(train, {}, truth, 4, 1, {});
    CHECK(r1.covered == std::vector<std::uint8_t>{1});

    const RandomInstance inst = random_instance(55, 4, 20, 6);
    const BruteForceResult r2 =
        brute_force_coverage(inst.train_inputs(), inst.test_inputs(), inst.truth, 4, 1000, {});
    for (std::size_t v = 0; v < r2.vertices.size(); ++v) CHECK(r2.covered[v] == r2.is_train[v]);
}

TEST_CASE("coverage summary shape") {
    const RandomInstance inst = random_instance(91, 4, 10, 4);
    CoverageConfig config;
    config.k_max = 2;
    CoverageReport report = k_cutoff_sweep(inst.train, inst.tests, config);
    const std::string summary = coverage_summary_json(report);
    CHECK(summary.find("\"k_max\":2") != std::string::npos);
    CHECK(summary.find("\"train\"") != std::string::npos);
    CHECK(summary.find("\"id_test\"") != std::string::npos);
}

TEST_CASE("mixed arities and oversized vocabularies are rejected") {
    std::vector<Vertex> bad{vx({1, 2, 3}, 0), vx({1, 2}, 0)};
    CHECK_THROWS_AS(build_behavior_maps(bad), Error);
    std::vector<Vertex> big{vx({1u << 17, 2, 3}, 0)};
    CHECK_THROWS_AS(build_behavior_maps(big), Error);
}
