#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "covlab/error.hpp"

namespace covlab {

/**
 * Probability that two fixed distinct triples (i,c) and (j,c) both appear
 * among N uniform-with-replacement draws from a domain of size |X|^3.
 * Inclusion-exclusion with q = 1/|X|^3, evaluated cancellation-free as
 * expm1(N*log1p(-2q)) - 2*expm1(N*log1p(-q)).
 */
double evidence_pair_prob_exact(std::int64_t n_samples, std::uint32_t vocab);

// Leading-order form N^2/|X|^6, valid for |X| << N << |X|^3.
double evidence_pair_prob_asymptotic(std::int64_t n_samples, std::uint32_t vocab);

// Expected number of distinct shared contexts for one fragment pair:
// mu = |X| * p1 (asymptotic N^2/|X|^5 by default, exact p1 on request).
double mean_evidence_mu(std::int64_t n_samples, std::uint32_t vocab, bool exact = false);

// Poisson-tail leading term mu^k/k!, the edge probability of the
// k-evidence graph.
double k_evidence_edge_prob(double mu, int k);

// Exact Poisson tail P[Poisson(mu) >= k]; reference for the leading term.
double poisson_tail(double mu, int k);

struct ConnectivityEstimate {
    double success = 0.0;
    double ci_low = 0.0;  // 95% Wilson interval
    double ci_high = 0.0;
    int trials = 0;
};

/**
 * Monte-Carlo estimate of the probability that every preimage class of a
 * balanced first-hop map has a connected k-evidence graph.
 *
 * Per trial (substream = seed derived by trial index, so results are
 * worker-count invariant): draw a balanced f1, sample N triples uniformly
 * with replacement from X^3, keep distinct triples, and for every class
 * E_b place an edge between two first-hop pairs observed in >= k distinct
 * shared third-token contexts. The trial succeeds iff all |X| class graphs
 * are connected.
 */
ConnectivityEstimate simulate_class_connectivity(std::uint32_t vocab, std::int64_t n_samples, int k,
                                                 int trials, std::uint64_t seed, int workers = 0);

// Monte-Carlo connectivity of an independent-edge random graph G(n, p);
// validates the simulator against the classical sharp threshold.
ConnectivityEstimate er_connectivity_baseline(int n_vertices, double edge_prob, int trials,
                                              std::uint64_t seed, int workers = 0);

struct NReqEstimate {
    std::int64_t n_req = 0;       // smallest probed N meeting the criterion
    std::int64_t bracket_lo = 0;  // largest probed N below the criterion
    std::int64_t bracket_hi = 0;  // == n_req
    double success_at_n_req = 0.0;
};

/**
 * Smallest N whose simulated connectivity probability reaches success_prob:
 * exponential search up from |X| for a bracket, then bisection until the
 * bracket width drops под 5% of its midpoint. Throws a capacity error when
 * no bracket exists below the ceiling (default 32*|X|^3).
 */
NReqEstimate estimate_n_req(std::uint32_t vocab, int k, double success_prob, int trials,
                            std::uint64_t seed, std::int64_t n_ceiling = 0, int workers = 0);

// alpha(k) = 2.5 - 0.5/k
double theoretical_exponent(int k);

struct PowerLawFit {
    double exponent = 0.0;
    double intercept = 0.0;  // of the log-log line
    double r_squared = 0.0;
};

// Ordinary least squares on (log x, log y); needs >= 3 strictly positive points.
PowerLawFit fit_power_law(std::span<const std::pair<double, double>> points);

struct ScalingConfig {
    std::vector<std::uint32_t> vocab_sizes;  // strictly increasing
    int k = 1;
    int trials = 200;
    double success_prob = 0.5;
    std::uint64_t seed = 0;
    std::int64_t n_ceiling = 0;  // 0 = per-vocab default
    int workers = 0;
};

struct ScalingPoint {
    std::uint32_t vocab = 0;
    std::int64_t n_req = 0;
    std::int64_t ci_low = 0;
    std::int64_t ci_high = 0;
};

struct ScalingResult {
    std::vector<ScalingPoint> points;
    PowerLawFit fit;
};

ScalingResult run_scaling(const ScalingConfig& config);

}  // namespace covlab
