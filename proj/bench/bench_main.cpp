// Times the staged coverage engine (serial vs OpenMP) against the
// definition-direct serial oracle, plus the scaling simulator, on
// representative workloads.

#include <chrono>
#include <cstdio>
#include <string>

#include "covlab/brute_force.hpp"
#include "covlab/coverage.hpp"
#include "covlab/dataset.hpp"
#include "covlab/parallel.hpp"
#include "covlab/scaling.hpp"

using namespace covlab;
using Clock = std::chrono::steady_clock;

namespace {

double time_call(const std::function<void()>& fn) {
    const auto start = Clock::now();
    fn();
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void bench_coverage(std::uint32_t vocab, std::size_t n_train, int k_max) {
    const CompositionStructure structure = CompositionStructure::two_hop();
    const Prng root(42);
    std::vector<PrimitiveTable> primitives;
    for (std::size_t j = 0; j < structure.nodes().size(); ++j) {
        Prng table_rng = root.derive(1000 + j);
        PrimitiveTable t = make_random_primitive(2, vocab, table_rng);
        Prng mask_rng = root.derive(2000 + j);
        t.sample_seen_mask(0.7, mask_rng);
        primitives.push_back(std::move(t));
    }
    const std::vector<Example> pool = enumerate_id_combinations(structure, primitives);
    Prng train_rng = root.derive(1);
    const Dataset train = sample_training_set(pool, std::min(n_train, pool.size()), train_rng);
    Prng test_rng = root.derive(2);
    const TestSets tests = build_test_sets(structure, primitives, train, 500, test_rng);

    std::vector<Vertex> train_v = make_vertices(structure, primitives, train.examples);
    std::vector<Example> all_tests = tests.id_test;
    all_tests.insert(all_tests.end(), tests.ood_test.begin(), tests.ood_test.end());
    std::vector<Vertex> test_v = make_vertices(structure, primitives, all_tests);

    CoverageConfig serial_cfg;
    serial_cfg.k_max = k_max;
    serial_cfg.workers = 1;
    CoverageConfig parallel_cfg = serial_cfg;
    parallel_cfg.workers = 0;

    CoverageReport serial_report, parallel_report;
    const double t_serial = time_call([&] { serial_report = k_cutoff_sweep(train_v, test_v, serial_cfg); });
    const double t_parallel =
        time_call([&] { parallel_report = k_cutoff_sweep(train_v, test_v, parallel_cfg); });
    const bool equal = serial_report.covered_at == parallel_report.covered_at &&
                       serial_report.k_cutoff == parallel_report.k_cutoff;

    std::printf("coverage  |X|=%-4u N=%-6zu k_max=%d  engine(1 thread) %8.3fs  engine(%d threads) %8.3fs"
                "  speedup %.2fx  results %s\n",
                vocab, train.examples.size(), k_max, t_serial, hardware_workers(), t_parallel,
                t_serial / t_parallel, equal ? "identical" : "DIFFER");

    if (vocab <= 6) {
        std::vector<std::vector<TokenId>> train_inputs, test_inputs;
        for (const auto& v : train_v) train_inputs.push_back(v.input);
        for (const auto& v : test_v) test_inputs.push_back(v.input);
        auto truth = [&](std::span<const TokenId> in) { return evaluate(structure, primitives, in).output; };
        const double t_oracle = time_call([&] {
            for (int k = 1; k <= k_max; ++k)
                brute_force_coverage(train_inputs, test_inputs, truth, vocab, k);
        });
        std::printf("coverage  |X|=%-4u N=%-6zu k_max=%d  oracle(serial)   %8.3fs\n", vocab,
                    train.examples.size(), k_max, t_oracle);
    }
}

void bench_scaling(std::uint32_t vocab, std::int64_t n_samples, int trials) {
    ConnectivityEstimate serial_est, parallel_est;
    const double t_serial =
        time_call([&] { serial_est = simulate_class_connectivity(vocab, n_samples, 1, trials, 9, 1); });
    const double t_parallel =
        time_call([&] { parallel_est = simulate_class_connectivity(vocab, n_samples, 1, trials, 9, 0); });
    std::printf("scaling   |X|=%-4u N=%-6lld trials=%d  serial %8.3fs  %d threads %8.3fs  speedup %.2fx"
                "  results %s (p=%.3f)\n",
                vocab, static_cast<long long>(n_samples), trials, t_serial, hardware_workers(),
                t_parallel, t_serial / t_parallel,
                serial_est.success == parallel_est.success ? "identical" : "DIFFER", parallel_est.success);
}

}  // namespace

int main(int argc, char** argv) {
    const bool quick = argc > 1 && std::string(argv[1]) == "--quick";
    std::printf("hardware workers: %d\n\n", hardware_workers());
    bench_coverage(6, 100, 2);
    bench_coverage(50, quick ? 2000 : 10000, quick ? 4 : 8);
    bench_scaling(16, 2000, quick ? 100 : 400);
    bench_scaling(32, 10000, quick ? 50 : 200);
    return 0;
}
