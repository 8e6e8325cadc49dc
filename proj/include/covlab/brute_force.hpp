#pragma once

#include <functional>
#include <span>
#include <vector>

#include "covlab/coverage.hpp"

namespace covlab {

/**
 * Definition-direct coverage oracle, deliberately naive: all fragment pairs
 * are checked against the k-equivalence conditions by scanning complement
 * maps, edges come from a quadratic scan over vertex pairs and all diff-
 * covering subsets, and components from a plain union-find. It shares no
 * code path with the staged engine and serves as its serial reference.
 */
struct BruteForceOptions {
    bool full_domain = false;  // vertex set = X^n instead of train + extra
    SubsetScope scope = SubsetScope::all;
    EquivalenceMode mode = EquivalenceMode::per_pair;
};

struct BruteForceResult {
    std::vector<std::vector<TokenId>> vertices;
    std::vector<std::uint8_t> covered;
    std::vector<std::uint8_t> is_train;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;  // sorted, deduplicated

    bool covered_input(std::span<const TokenId> input) const;
};

/**
 * train: observed inputs (D). extra_vertices: additional graph vertices
 * (ignored when full_domain). truth must be total over X^n. Requires
 * vocab^n <= 10^6 for the full-domain variant.
 */
BruteForceResult brute_force_coverage(std::span<const std::vector<TokenId>> train,
                                      std::span<const std::vector<TokenId>> extra_vertices,
                                      const std::function<TokenId(std::span<const TokenId>)>& truth,
                                      std::uint32_t vocab, int k,
                                      const BruteForceOptions& options = {});

// Pairwise k-equivalent fragment pairs at one subset, straight from the
// definition (evidence >= k, no disagreeing shared complement).
std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>> brute_force_equivalent_pairs(
    std::span<const std::vector<TokenId>> train,
    const std::function<TokenId(std::span<const TokenId>)>& truth, IndexSubset subset, int k);

/**
 * Randomized cross-validation of the staged engine against the oracle:
 * per instance, a random ground truth over X^3 (alternating a two-hop
 * composition and an unstructured random map), a random training set, and
 * random test vertices. Checks, for each k:
 *   - engine coverage == oracle coverage on the train+test vertex set;
 *   - engine coverage is contained in full-domain oracle coverage, counting
 *     strict gaps (paths through vertices outside train+test);
 *   - D is covered and coverage shrinks as k grows.
 */
struct OracleSuiteConfig {
    int instances = 60;
    std::uint64_t seed = 0;
    std::vector<std::uint32_t> vocab_sizes = {4, 5, 6};
    int max_train = 40;
    int n_tests = 12;
    int k_max = 2;
    EquivalenceMode mode = EquivalenceMode::per_pair;
    int workers = 0;
};

struct OracleSuiteResult {
    int instances = 0;
    int checks = 0;                    // (instance, k) comparisons run
    int restricted_mismatches = 0;     // engine vs restricted oracle disagreements
    int full_domain_divergences = 0;   // vertices covered only via external paths
    int monotonicity_violations = 0;   // Cover_{k+1} not within Cover_k, or D uncovered
    bool passed() const { return restricted_mismatches == 0 && monotonicity_violations == 0; }
};

OracleSuiteResult run_oracle_suite(const OracleSuiteConfig& config);

}  // namespace covlab
