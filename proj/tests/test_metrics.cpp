#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "covlab/metrics.hpp"
#include "covlab/prng.hpp"

using namespace covlab;

namespace {

LabeledVectorSet make_set(int dim, const std::vector<std::vector<double>>& rows,
                          const std::vector<std::string>& labels) {
    LabeledVectorSet set;
    set.dim = dim;
    for (const auto& row : rows) set.data.insert(set.data.end(), row.begin(), row.end());
    set.labels = labels;
    set.tags.assign(labels.size(), "");
    return set;
}

LabeledVectorSet random_set(int count, int dim, int n_groups, std::uint64_t seed) {
    Prng rng(seed);
    LabeledVectorSet set;
    set.dim = dim;
    for (int i = 0; i < count; ++i) {
        for (int d = 0; d < dim; ++d)  // snapped to f32 so binary round trips are exact
            set.data.push_back(static_cast<float>(rng.uniform01() * 2.0 - 1.0));
        set.labels.push_back("g" + std::to_string(rng.uniform_below(n_groups)));
        set.tags.push_back("");
    }
    return set;
}

// Quadratic double-loop oracle, straight from the definition.
double iicg_oracle(const LabeledVectorSet& set) {
    double intra = 0, inter = 0;
    std::int64_t n_intra = 0, n_inter = 0;
    for (std::size_t i = 0; i < set.count(); ++i) {
        for (std::size_t j = i + 1; j < set.count(); ++j) {
            double dot = 0, na = 0, nb = 0;
            for (int d = 0; d < set.dim; ++d) {
                dot += set.row(i)[d] * set.row(j)[d];
                na += set.row(i)[d] * set.row(i)[d];
                nb += set.row(j)[d] * set.row(j)[d];
            }
            const double c = dot / std::sqrt(na * nb);
            if (set.labels[i] == set.labels[j]) {
                intra += c;
                ++n_intra;
            } else {
                inter += c;
                ++n_inter;
            }
        }
    }
    return intra / n_intra - inter / n_inter;
}

}  // namespace

TEST_CASE("iicg: degenerate identical vectors give zero gap") {
    const LabeledVectorSet set =
        make_set(3, {{1, 2, 3}, {1, 2, 3}, {1, 2, 3}, {1, 2, 3}}, {"a", "a", "b", "b"});
    CHECK(iicg(set) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("iicg: orthogonal groups give gap one") {
    const LabeledVectorSet set =
        make_set(2, {{1, 0}, {2, 0}, {0, 1}, {0, 3}}, {"a", "a", "b", "b"});
    CHECK(iicg(set) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("iicg matches the double-loop oracle on random sets") {
    const LabeledVectorSet set = random_set(40, 8, 3, 5);
    CHECK(iicg(set) == doctest::Approx(iicg_oracle(set)).epsilon(1e-12));
}

TEST_CASE("iicg is invariant under positive rescaling and global rotation") {
    LabeledVectorSet set = random_set(30, 6, 4, 9);
    const double base = iicg(set);

    LabeledVectorSet scaled = set;
    Prng rng(11);
    for (std::size_t i = 0; i < scaled.count(); ++i) {
        const double factor = 0.1 + 5.0 * rng.uniform01();
        for (int d = 0; d < scaled.dim; ++d) scaled.data[i * scaled.dim + d] *= factor;
    }
    CHECK(iicg(scaled) == doctest::Approx(base).epsilon(1e-9));

    // Random orthogonal matrix via Gram-Schmidt on a random one.
    const int dim = set.dim;
    std::vector<std::vector<double>> q(dim, std::vector<double>(dim));
    for (auto& row : q)
        for (double& x : row) x = rng.uniform01() * 2 - 1;
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < i; ++j) {
            const double dot = std::inner_product(q[i].begin(), q[i].end(), q[j].begin(), 0.0);
            for (int d = 0; d < dim; ++d) q[i][d] -= dot * q[j][d];
        }
        const double norm = std::sqrt(std::inner_product(q[i].begin(), q[i].end(), q[i].begin(), 0.0));
        for (double& x : q[i]) x /= norm;
    }
    LabeledVectorSet rotated = set;
    for (std::size_t v = 0; v < set.count(); ++v)
        for (int i = 0; i < dim; ++i) {
            double sum = 0;
            for (int d = 0; d < dim; ++d) sum += q[i][d] * set.row(v)[d];
            rotated.data[v * dim + i] = sum;
        }
    CHECK(iicg(rotated) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("iicg is invariant under group relabeling") {
    LabeledVectorSet set = random_set(25, 5, 3, 21);
    const double base = iicg(set);
    LabeledVectorSet renamed = set;
    for (std::string& label : renamed.labels) label = label == "g0" ? "zz" : (label == "zz" ? "g0" : label);
    CHECK(iicg(renamed) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("iicg is bit-stable across worker counts") {
    const LabeledVectorSet set = random_set(200, 16, 5, 33);
    CHECK(iicg(set, false, 1) == iicg(set, false, 4));
}

TEST_CASE("iicg error paths") {
    const LabeledVectorSet zero = make_set(2, {{0, 0}, {1, 0}, {0, 1}}, {"a", "a", "b"});
    CHECK_THROWS_AS(iicg(zero), Error);
    const LabeledVectorSet one_group = make_set(2, {{1, 0}, {2, 0}}, {"a", "a"});
    CHECK_THROWS_AS(iicg(one_group), Error);
    const LabeledVectorSet singletons = make_set(2, {{1, 0}, {0, 1}}, {"a", "b"});
    CHECK_THROWS_AS(iicg(singletons), Error);
}

TEST_CASE("indirect effect: endpoints, midpoint, affine grid") {
    CHECK(indirect_effect(0.2, 0.8, 0.8) == doctest::Approx(1.0));
    CHECK(indirect_effect(0.2, 0.8, 0.2) == doctest::Approx(0.0));
    CHECK(indirect_effect(0.1, 0.9, 0.5) == doctest::Approx(0.5));
    // IE(a, b, (1-t)a + tb) = t on a grid.
    const double a = 0.15, b = 0.85;
    for (int i = 0; i <= 100; ++i) {
        const double t = i / 100.0;
        CHECK(indirect_effect(a, b, (1 - t) * a + t * b) == doctest::Approx(t).epsilon(1e-12));
    }
}

TEST_CASE("indirect effect rejects out-of-range and degenerate traces") {
    CHECK_THROWS_AS(indirect_effect(-0.1, 0.5, 0.5), Error);
    CHECK_THROWS_AS(indirect_effect(0.1, 1.5, 0.5), Error);
    CHECK_THROWS_AS(indirect_effect(0.5, 0.5, 0.5), Error);
    CHECK_THROWS_AS(indirect_effect(0.5, 0.5 + 1e-12, 0.5), Error);
    CHECK_NOTHROW(indirect_effect(0.5, 0.5 + 1e-12, 0.5, 1e-13));
}

TEST_CASE("mrr: exact ranks and tie rule") {
    std::vector<ScoreRow> rows;
    rows.push_back({{0.1f, 0.9f, 0.2f}, 1});  // rank 1
    CHECK(mrr(rows) == doctest::Approx(1.0));

    rows.push_back({{0.9f, 0.5f, 0.2f}, 1});  // rank 2
    CHECK(mrr(rows) == doctest::Approx(0.75));

    // Ties rank the target best among equals.
    std::vector<ScoreRow> tied;
    tied.push_back({{0.5f, 0.5f, 0.5f}, 2});
    CHECK(mrr(tied) == doctest::Approx(1.0));

    CHECK_THROWS_AS(mrr(std::vector<ScoreRow>{}), Error);
    std::vector<ScoreRow> bad;
    bad.push_back({{0.5f}, 3});
    CHECK_THROWS_AS(mrr(bad), Error);
}

TEST_CASE("mrr matches a sort-based oracle on random rows") {
    Prng rng(3);
    std::vector<ScoreRow> rows(1000);
    for (ScoreRow& row : rows) {
        row.scores.resize(50);
        for (float& s : row.scores) s = static_cast<float>(rng.uniform01());
        row.target = static_cast<std::uint32_t>(rng.uniform_below(50));
    }
    double oracle = 0;
    for (const ScoreRow& row : rows) {
        std::vector<float> sorted = row.scores;
        std::sort(sorted.begin(), sorted.end(), std::greater<>());
        // First descending position not strictly above the target score =
        // number of strictly greater entries; optimistic rank is that + 1.
        const auto rank =
            std::distance(sorted.begin(), std::lower_bound(sorted.begin(), sorted.end(),
                                                           row.scores[row.target], std::greater<>())) +
            1;
        oracle += 1.0 / static_cast<double>(rank);
    }
    oracle /= static_cast<double>(rows.size());
    CHECK(mrr(rows) == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(mrr(rows) > 0.0);
    CHECK(mrr(rows) <= 1.0);
}

TEST_CASE("vector files: binary and jsonl round trips") {
    const auto dir = std::filesystem::temp_directory_path() / "covlab_test_vectors";
    std::filesystem::create_directories(dir);

    LabeledVectorSet set = random_set(12, 4, 3, 55);
    set.tags.assign(12, "layer0");
    const std::string bin_path = (dir / "v.bin").string();
    save_vector_file(bin_path, set);
    const LabeledVectorSet loaded = load_vector_file(bin_path);
    CHECK(loaded.dim == set.dim);
    CHECK(loaded.data == set.data);
    CHECK(loaded.labels == set.labels);
    CHECK(loaded.tags == set.tags);

    const std::string jsonl_path = (dir / "v.jsonl").string();
    {
        std::ofstream out(jsonl_path);
        out << "{\"label\":\"a\",\"vector\":[1.0,0.0],\"tag\":\"L1\"}\n";
        out << "{\"label\":\"a\",\"vector\":[2.0,0.0],\"tag\":\"L1\"}\n";
        out << "{\"label\":\"b\",\"vector\":[0.0,1.0],\"tag\":\"L1\"}\n";
        out << "{\"label\":\"b\",\"vector\":[0.0,5.0],\"tag\":\"L1\"}\n";
    }
    const LabeledVectorSet jset = load_vector_file(jsonl_path);
    CHECK(jset.count() == 4);
    CHECK(jset.dim == 2);
    CHECK(iicg(jset) == doctest::Approx(1.0));

    // Truncated binary payload is a data error.
    const std::string trunc_path = (dir / "trunc.bin").string();
    {
        std::ofstream out(trunc_path, std::ios::binary);
        out << "{\"dim\":4,\"count\":10,\"labels\":[\"a\",\"a\",\"a\",\"a\",\"a\",\"b\",\"b\",\"b\",\"b\",\"b\"]}\n";
        const float few[3] = {1, 2, 3};
        out.write(reinterpret_cast<const char*>(few), sizeof(few));
    }
    CHECK_THROWS_AS(load_vector_file(trunc_path), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("iicg by tag slices independently") {
    LabeledVectorSet set;
    set.dim = 2;
    auto push = [&set](float x, float y, const char* label, const char* tag) {
        set.data.push_back(x);
        set.data.push_back(y);
        set.labels.push_back(label);
        set.tags.push_back(tag);
    };
    // Tag L0: orthogonal groups (gap 1); tag L1: identical vectors (gap 0).
    push(1, 0, "a", "L0");
    push(2, 0, "a", "L0");
    push(0, 1, "b", "L0");
    push(0, 2, "b", "L0");
    push(1, 1, "a", "L1");
    push(1, 1, "a", "L1");
    push(1, 1, "b", "L1");

    const std::vector<IicgRow> rows = iicg_by_tag(set);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].tag == "L0");
    CHECK(rows[0].value == doctest::Approx(1.0));
    CHECK(rows[0].n_groups == 2);
    CHECK(rows[1].tag == "L1");
    CHECK(rows[1].value == doctest::Approx(0.0));
}

TEST_CASE("group-balanced iicg weighs groups equally") {
    // Group a: 2 identical vectors. Group b: many near-orthogonal pairs
    // pulling the pooled intra mean down; balanced averaging restores the
    // per-group means' average.
    LabeledVectorSet set = make_set(
        3, {{1, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0, 1, 1}}, {"a", "a", "b", "b", "b"});
    const double pooled = iicg(set, false);
    const double balanced = iicg(set, true);
    CHECK(pooled != doctest::Approx(balanced));
}
