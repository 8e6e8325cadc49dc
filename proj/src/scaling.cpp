#include "covlab/scaling.hpp"

#include <algorithm>
#include <cmath>

#include "covlab/parallel.hpp"
#include "covlab/prng.hpp"
#include "covlab/task_model.hpp"

namespace covlab {

namespace {

void require_vocab(std::uint32_t vocab) {
    if (vocab < 2) throw Error(ErrorKind::usage, "vocab must be >= 2");
}

std::pair<double, double> wilson_interval(int successes, int trials) {
    if (trials <= 0) return {0.0, 1.0};
    const double z = 1.959963984540054;  // 95%
    const double n = trials;
    const double p = successes / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = p + z2 / (2.0 * n);
    const double spread = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    return {std::max(0.0, (center - spread) / denom), std::min(1.0, (center + spread) / denom)};
}

ConnectivityEstimate estimate_from_counts(int successes, int trials) {
    ConnectivityEstimate est;
    est.trials = trials;
    est.success = trials > 0 ? static_cast<double>(successes) / trials : 0.0;
    const auto [lo, hi] = wilson_interval(successes, trials);
    est.ci_low = lo;
    est.ci_high = hi;
    return est;
}

// One trial of the class-connectivity simulation. Draw order: balanced f1
// first (its Fisher-Yates draws), then N triples.
bool class_connectivity_trial(std::uint32_t vocab, std::int64_t n_samples, int k, Prng rng) {
    const std::uint64_t v = vocab;
    const std::uint64_t domain = v * v * v;
    const PrimitiveTable f1 = make_balanced_primitive(vocab, rng);

    std::vector<std::uint32_t> triples(static_cast<std::size_t>(n_samples));
    for (auto& t : triples) t = static_cast<std::uint32_t>(rng.uniform_below(domain));
    std::sort(triples.begin(), triples.end());
    triples.erase(std::unique(triples.begin(), triples.end()), triples.end());

    // Member index of each first-hop pair within its class.
    std::vector<std::uint16_t> member_index(v * v);
    {
        std::vector<std::uint16_t> next(v, 0);
        for (std::uint64_t pair = 0; pair < v * v; ++pair)
            member_index[pair] = next[f1.table()[pair]]++;
    }

    // (class, context, member) records, grouped by class then context.
    std::vector<std::uint64_t> records;
    records.reserve(triples.size());
    for (std::uint32_t t : triples) {
        const std::uint32_t pair = t / vocab;
        const std::uint32_t ctx = t % vocab;
        const std::uint32_t cls = f1.table()[pair];
        records.push_back((static_cast<std::uint64_t>(cls) * v + ctx) << 16 | member_index[pair]);
    }
    std::sort(records.begin(), records.end());

    const std::size_t tri_size = (v * (v - 1)) / 2;
    std::vector<std::uint16_t> pair_count(tri_size);
    std::vector<std::int32_t> parent(v);
    auto tri_index = [v](std::uint32_t a, std::uint32_t b) {
        // a < b
        return (static_cast<std::size_t>(a) * (2 * v - a - 1)) / 2 + (b - a - 1);
    };

    std::size_t pos = 0;
    for (std::uint32_t cls = 0; cls < vocab; ++cls) {
        std::fill(pair_count.begin(), pair_count.end(), 0);
        for (std::uint32_t i = 0; i < vocab; ++i) parent[i] = static_cast<std::int32_t>(i);
        auto find = [&](std::int32_t x) {
            while (parent[x] != x) {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            return x;
        };
        int components = static_cast<int>(vocab);

        const std::uint64_t cls_end = (static_cast<std::uint64_t>(cls) + 1) * v;
        while (pos < records.size() && (records[pos] >> 16) < cls_end) {
            std::size_t run_end = pos;
            const std::uint64_t group = records[pos] >> 16;
            while (run_end < records.size() && (records[run_end] >> 16) == group) ++run_end;
            for (std::size_t i = pos; i < run_end; ++i) {
                const auto mi = static_cast<std::uint32_t>(records[i] & 0xffffu);
                for (std::size_t j = i + 1; j < run_end; ++j) {
                    const auto mj = static_cast<std::uint32_t>(records[j] & 0xffffu);
                    auto& count = pair_count[tri_index(mi, mj)];
                    if (count < k && ++count == k) {
                        const std::int32_t ra = find(mi), rb = find(mj);
                        if (ra != rb) {
                            parent[rb] = ra;
                            --components;
                        }
                    }
                }
            }
            pos = run_end;
        }
        if (components != 1) return false;
    }
    return true;
}

}  // namespace

double evidence_pair_prob_exact(std::int64_t n_samples, std::uint32_t vocab) {
    require_vocab(vocab);
    if (n_samples < 0) throw Error(ErrorKind::usage, "sample count must be >= 0");
    if (n_samples == 0) return 0.0;
    const double q = 1.0 / (static_cast<double>(vocab) * vocab * vocab);
    const double n = static_cast<double>(n_samples);
    return std::expm1(n * std::log1p(-2.0 * q)) - 2.0 * std::expm1(n * std::log1p(-q));
}

double evidence_pair_prob_asymptotic(std::int64_t n_samples, std::uint32_t vocab) {
    require_vocab(vocab);
    if (n_samples < 0) throw Error(ErrorKind::usage, "sample count must be >= 0");
    const double v3 = static_cast<double>(vocab) * vocab * vocab;
    const double ratio = static_cast<double>(n_samples) / v3;
    return ratio * ratio;
}

double mean_evidence_mu(std::int64_t n_samples, std::uint32_t vocab, bool exact) {
    require_vocab(vocab);
    if (exact) return static_cast<double>(vocab) * evidence_pair_prob_exact(n_samples, vocab);
    return static_cast<double>(vocab) * evidence_pair_prob_asymptotic(n_samples, vocab);
}

double k_evidence_edge_prob(double mu, int k) {
    if (mu < 0.0) throw Error(ErrorKind::usage, "mu must be >= 0");
    if (k < 1) throw Error(ErrorKind::usage, "k must be >= 1");
    if (mu == 0.0) return 0.0;
    return std::exp(k * std::log(mu) - std::lgamma(k + 1.0));
}

double poisson_tail(double mu, int k) {
    double head = 0.0, term = std::exp(-mu);
    for (int r = 0; r < k; ++r) {
        head += term;
        term *= mu / (r + 1);
    }
    return std::max(0.0, 1.0 - head);
}

ConnectivityEstimate simulate_class_connectivity(std::uint32_t vocab, std::int64_t n_samples, int k,
                                                 int trials, std::uint64_t seed, int workers) {
    require_vocab(vocab);
    if (n_samples < 0) throw Error(ErrorKind::usage, "sample count must be >= 0");
    if (k < 1) throw Error(ErrorKind::usage, "k must be >= 1");
    if (trials < 1) throw Error(ErrorKind::usage, "trials must be >= 1");

    const Prng root(seed);
    std::vector<std::uint8_t> success(trials, 0);
    parallel_for(trials, workers, [&](std::int64_t trial) {
        success[trial] = class_connectivity_trial(vocab, n_samples, k, root.derive(trial));
    });
    int count = 0;
    for (std::uint8_t s : success) count += s;
    return estimate_from_counts(count, trials);
}

ConnectivityEstimate er_connectivity_baseline(int n_vertices, double edge_prob, int trials,
                                              std::uint64_t seed, int workers) {
    if (n_vertices < 2) throw Error(ErrorKind::usage, "vertex count must be >= 2");
    if (edge_prob < 0.0 || edge_prob > 1.0) throw Error(ErrorKind::usage, "edge probability must lie in [0,1]");
    if (trials < 1) throw Error(ErrorKind::usage, "trials must be >= 1");

    const std::uint64_t n = n_vertices;
    const std::uint64_t total_pairs = n * (n - 1) / 2;
    const Prng root(seed);
    std::vector<std::uint8_t> success(trials, 0);

    parallel_for(trials, workers, [&](std::int64_t trial) {
        if (edge_prob <= 0.0) {
            success[trial] = 0;
            return;
        }
        std::vector<std::int32_t> parent(n);
        for (std::uint64_t i = 0; i < n; ++i) parent[i] = static_cast<std::int32_t>(i);
        auto find = [&](std::int32_t x) {
            while (parent[x] != x) {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            return x;
        };
        int components = n_vertices;
        Prng rng = root.derive(trial);

        if (edge_prob >= 1.0) {
            success[trial] = 1;
            return;
        }
        // Geometric skips over the linearized pair index.
        const double log_1mp = std::log1p(-edge_prob);
        double m = -1.0;
        while (true) {
            const double u = rng.uniform01();
            m += 1.0 + std::floor(std::log1p(-u) / log_1mp);
            if (m >= static_cast<double>(total_pairs)) break;
            const auto idx = static_cast<std::uint64_t>(m);
            // Invert the triangular row offset, with a fix-up scan.
            const double nn = static_cast<double>(n);
            auto i = static_cast<std::uint64_t>(
                std::floor(((2.0 * nn - 1.0) - std::sqrt((2.0 * nn - 1.0) * (2.0 * nn - 1.0) -
                                                         8.0 * static_cast<double>(idx))) /
                           2.0));
            auto row_start = [&](std::uint64_t r) { return r * (2 * n - r - 1) / 2; };
            while (i > 0 && row_start(i) > idx) --i;
            while (row_start(i + 1) <= idx) ++i;
            const std::uint64_t j = idx - row_start(i) + i + 1;
            const std::int32_t ra = find(static_cast<std::int32_t>(i));
            const std::int32_t rb = find(static_cast<std::int32_t>(j));
            if (ra != rb) {
                parent[rb] = ra;
                --components;
            }
        }
        success[trial] = components == 1;
    });

    int count = 0;
    for (std::uint8_t s : success) count += s;
    return estimate_from_counts(count, trials);
}

NReqEstimate estimate_n_req(std::uint32_t vocab, int k, double success_prob, int trials,
                            std::uint64_t seed, std::int64_t n_ceiling, int workers) {
    require_vocab(vocab);
    if (success_prob <= 0.0 || success_prob >= 1.0)
        throw Error(ErrorKind::usage, "success probability must lie strictly between 0 and 1");
    const std::int64_t v3 = static_cast<std::int64_t>(vocab) * vocab * vocab;
    if (n_ceiling <= 0) n_ceiling = 32 * v3;

    const Prng root(seed);
    std::uint64_t probe_counter = 0;
    auto probe = [&](std::int64_t n) {
        const std::uint64_t stream = probe_counter++;
        return simulate_class_connectivity(vocab, n, k, trials, root.derive(stream).seed(), workers)
            .success;
    };

    std::int64_t lo = 0;  // success(0) = 0: classes have no edges
    std::int64_t hi = std::max<std::int64_t>(4, vocab);
    double hi_success = probe(hi);
    while (hi_success < success_prob) {
        lo = hi;
        hi *= 2;
        if (hi > n_ceiling)
            throw Error(ErrorKind::capacity,
                        "no dataset size below the ceiling " + std::to_string(n_ceiling) +
                            " reached connectivity probability " + std::to_string(success_prob));
        hi_success = probe(hi);
    }

    while (hi - lo > std::max<std::int64_t>(1, (hi + lo) / 40)) {  // 5% of the midpoint
        const std::int64_t mid = lo + (hi - lo) / 2;
        const double s = probe(mid);
        if (s >= success_prob) {
            hi = mid;
            hi_success = s;
        } else {
            lo = mid;
        }
    }

    NReqEstimate est;
    est.n_req = hi;
    est.bracket_lo = lo;
    est.bracket_hi = hi;
    est.success_at_n_req = hi_success;
    return est;
}

double theoretical_exponent(int k) {
    if (k < 1) throw Error(ErrorKind::usage, "k must be >= 1");
    return 2.5 - 0.5 / static_cast<double>(k);
}

PowerLawFit fit_power_law(std::span<const std::pair<double, double>> points) {
    if (points.size() < 3) throw Error(ErrorKind::usage, "power-law fit needs at least 3 points");
    for (const auto& [x, y] : points)
        if (x <= 0.0 || y <= 0.0) throw Error(ErrorKind::data, "power-law fit needs positive coordinates");

    const double n = static_cast<double>(points.size());
    double sx = 0, sy = 0;
    for (const auto& [x, y] : points) {
        sx += std::log(x);
        sy += std::log(y);
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, syy = 0, sxy = 0;
    for (const auto& [x, y] : points) {
        const double dx = std::log(x) - mx, dy = std::log(y) - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0) throw Error(ErrorKind::data, "power-law fit needs at least two distinct x values");

    PowerLawFit fit;
    fit.exponent = sxy / sxx;
    fit.intercept = my - fit.exponent * mx;
    fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    return fit;
}

ScalingResult run_scaling(const ScalingConfig& config) {
    if (config.vocab_sizes.empty()) throw Error(ErrorKind::usage, "no vocab sizes given");
    for (std::size_t i = 1; i < config.vocab_sizes.size(); ++i)
        if (config.vocab_sizes[i] <= config.vocab_sizes[i - 1])
            throw Error(ErrorKind::usage, "vocab sizes must be strictly increasing");

    const Prng root(config.seed);
    ScalingResult result;
    for (std::size_t i = 0; i < config.vocab_sizes.size(); ++i) {
        const std::uint32_t vocab = config.vocab_sizes[i];
        const NReqEstimate est =
            estimate_n_req(vocab, config.k, config.success_prob, config.trials,
                           root.derive(vocab).seed(), config.n_ceiling, config.workers);
        result.points.push_back({vocab, est.n_req, est.bracket_lo, est.bracket_hi});
    }
    if (result.points.size() >= 3) {
        std::vector<std::pair<double, double>> pts;
        for (const ScalingPoint& p : result.points)
            pts.emplace_back(static_cast<double>(p.vocab), static_cast<double>(p.n_req));
        result.fit = fit_power_law(pts);
    }
    return result;
}

}  // namespace covlab
