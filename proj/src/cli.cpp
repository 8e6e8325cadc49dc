#include "covlab/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "covlab/brute_force.hpp"
#include "covlab/coverage.hpp"
#include "covlab/dataset.hpp"
#include "covlab/manifest.hpp"
#include "covlab/metrics.hpp"
#include "covlab/scaling.hpp"

namespace fs = std::filesystem;

namespace covlab {

namespace {

// --config accepts either a plain flag file or a manifest (its "config"
// block is used); explicit command-line flags win over file values.
nlohmann::json load_config_arg(const std::vector<std::string>& args) {
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty()) return nlohmann::json::object();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::usage, "cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorKind::usage, "bad config file '" + path + "': " + ex.what());
    }
    if (j.contains("config")) return j["config"];
    return j;
}

template <typename T>
void fall_back(const CLI::Option* opt, const nlohmann::json& cfg, const char* key, T& var) {
    if (opt->count() == 0 && cfg.contains(key)) {
        try {
            var = cfg[key].get<T>();
        } catch (const nlohmann::json::exception&) {
            throw Error(ErrorKind::usage, std::string("config key '") + key + "' has the wrong type");
        }
    }
}

std::string default_out_dir() {
    const char* env = std::getenv("COVLAB_OUT");
    return env ? env : "";
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

struct GenArgs {
    std::string task;
    std::uint32_t vocab = 0;
    std::int64_t n = -1;
    double p_seen = 0.7;
    std::uint64_t seed = 0;
    std::int64_t test_size = 2000;
    std::string out;
    std::string text;  // optional: plain | cot
    int workers = 0;
};

int cmd_gen(GenArgs a) {
    const auto start = std::chrono::steady_clock::now();
    if (a.out.empty()) a.out = default_out_dir();
    if (a.out.empty()) throw Error(ErrorKind::usage, "--out directory required (or set COVLAB_OUT)");
    if (a.task.empty()) throw Error(ErrorKind::usage, "--task required");
    if (a.vocab < 2) throw Error(ErrorKind::usage, "--vocab must be >= 2");
    if (a.n < 1) throw Error(ErrorKind::usage, "--n must be >= 1");
    if (a.p_seen < 0.0 || a.p_seen > 1.0) throw Error(ErrorKind::usage, "--p-seen must lie in [0,1]");
    if (a.test_size < 1) throw Error(ErrorKind::usage, "--test-size must be >= 1");
    if (!a.text.empty() && a.text != "plain" && a.text != "cot")
        throw Error(ErrorKind::usage, "--text must be 'plain' or 'cot'");

    const CompositionStructure structure = CompositionStructure::from_name(a.task);
    const Prng root(a.seed);

    // Substreams: 1000+j for node j's table, 2000+j for its seen mask,
    // 1 for training sampling, 2 for the test sets.
    std::vector<PrimitiveTable> primitives;
    for (std::size_t j = 0; j < structure.nodes().size(); ++j) {
        Prng table_rng = root.derive(1000 + j);
        PrimitiveTable table = make_random_primitive(structure.nodes()[j].arity(), a.vocab, table_rng);
        Prng mask_rng = root.derive(2000 + j);
        table.sample_seen_mask(a.p_seen, mask_rng);
        primitives.push_back(std::move(table));
    }

    const std::vector<Example> pool = enumerate_id_combinations(structure, primitives, a.workers);
    Prng train_rng = root.derive(1);
    Dataset train = sample_training_set(pool, static_cast<std::size_t>(a.n), train_rng);
    train.structure_id = structure.id();
    train.vocab_size = a.vocab;
    train.p_seen = a.p_seen;
    train.seed = a.seed;
    Prng test_rng = root.derive(2);
    const TestSets tests =
        build_test_sets(structure, primitives, train, static_cast<std::size_t>(a.test_size), test_rng);

    fs::create_directories(a.out);
    const auto path = [&a](const char* name) { return (fs::path(a.out) / name).string(); };
    write_jsonl(path("train.jsonl"), train.examples);
    write_jsonl(path("id_test.jsonl"), tests.id_test);
    write_jsonl(path("ood_test.jsonl"), tests.ood_test);
    write_primitives_file(path("primitives.json"), structure, primitives, a.p_seen);

    RunManifest manifest;
    manifest.command = "gen";
    manifest.seed = a.seed;
    manifest.config = {{"task", a.task},         {"vocab", a.vocab},   {"n", a.n},
                       {"p_seen", a.p_seen},     {"seed", a.seed},     {"test_size", a.test_size},
                       {"out", a.out},           {"text", a.text},     {"workers", a.workers}};
    manifest.outputs = {path("train.jsonl"), path("id_test.jsonl"), path("ood_test.jsonl"),
                        path("primitives.json")};

    if (!a.text.empty()) {
        const TextFormat format = text_format_from_name(a.text);
        for (const auto& [name, examples] :
             {std::pair<const char*, const std::vector<Example>*>{"train.txt", &train.examples},
              {"id_test.txt", &tests.id_test},
              {"ood_test.txt", &tests.ood_test}}) {
            std::ofstream out(path(name), std::ios::binary);
            if (!out) throw Error(ErrorKind::data, std::string("cannot open '") + name + "'");
            for (const Example& e : *examples) out << serialize_example(e, format) << '\n';
            manifest.outputs.push_back(path(name));
        }
    }

    manifest.duration_seconds = seconds_since(start);
    write_manifest(path("manifest.json"), manifest);

    std::printf("gen: %zu train, %zu id_test, %zu ood_test (pools: %zu id, %zu ood) -> %s\n",
                train.examples.size(), tests.id_test.size(), tests.ood_test.size(), tests.id_pool_size,
                tests.ood_pool_size, a.out.c_str());
    if (tests.id_pool_short)
        std::fprintf(stderr, "warning: id_test pool (%zu) smaller than requested %lld; returned whole pool\n",
                     tests.id_pool_size, static_cast<long long>(a.test_size));
    if (tests.ood_pool_short)
        std::fprintf(stderr, "warning: ood_test pool (%zu) smaller than requested %lld; returned whole pool\n",
                     tests.ood_pool_size, static_cast<long long>(a.test_size));
    return 0;
}

struct CoverArgs {
    std::string data;
    int k_max = 1;
    std::string scope = "all";
    std::string mode = "per-pair";
    std::string out;
    int workers = 0;
    bool components = false;
};

int cmd_cover(CoverArgs a, const char* command) {
    const auto start = std::chrono::steady_clock::now();
    if (a.out.empty() && !default_out_dir().empty())
        a.out = (fs::path(default_out_dir()) / "coverage.csv").string();
    if (a.data.empty()) throw Error(ErrorKind::usage, "--data directory required");
    if (a.out.empty()) throw Error(ErrorKind::usage, "--out CSV path required (or set COVLAB_OUT)");
    if (a.k_max < 1) throw Error(ErrorKind::usage, "--k-max must be >= 1");

    CoverageConfig config;
    config.k_max = a.k_max;
    config.workers = a.workers;
    config.record_components = a.components;
    if (a.scope == "all") config.scope = SubsetScope::all;
    else if (a.scope == "contiguous") config.scope = SubsetScope::contiguous;
    else throw Error(ErrorKind::usage, "--scope must be 'all' or 'contiguous'");
    if (a.mode == "per-pair") config.mode = EquivalenceMode::per_pair;
    else if (a.mode == "consistent") config.mode = EquivalenceMode::component_consistent;
    else throw Error(ErrorKind::usage, "--mode must be 'per-pair' or 'consistent'");

    const auto data_path = [&a](const char* name) { return (fs::path(a.data) / name).string(); };
    const std::vector<Example> train_examples = read_jsonl(data_path("train.jsonl"));
    std::vector<Example> test_examples;
    for (const char* name : {"id_test.jsonl", "ood_test.jsonl"}) {
        if (!fs::exists(data_path(name))) continue;
        const std::vector<Example> part = read_jsonl(data_path(name));
        test_examples.insert(test_examples.end(), part.begin(), part.end());
    }

    std::vector<Vertex> train_vertices, test_vertices;
    bool truth_from_labels = false;
    if (fs::exists(data_path("primitives.json"))) {
        const PrimitivesFile pf = read_primitives_file(data_path("primitives.json"));
        train_vertices = make_vertices(pf.structure, pf.primitives, train_examples);
        test_vertices = make_vertices(pf.structure, pf.primitives, test_examples);
    } else {
        truth_from_labels = true;
        train_vertices = make_vertices_from_labels(train_examples);
        test_vertices = make_vertices_from_labels(test_examples);
    }

    CoverageReport report = k_cutoff_sweep(train_vertices, test_vertices, config);
    report.truth_from_labels = truth_from_labels;

    write_coverage_csv(report, a.out);
    const std::string summary_path = a.out + ".summary.json";
    {
        std::ofstream out(summary_path, std::ios::binary);
        if (!out) throw Error(ErrorKind::data, "cannot open '" + summary_path + "' for writing");
        out << coverage_summary_json(report) << '\n';
    }

    RunManifest manifest;
    manifest.command = command;
    manifest.config = {{"data", a.data}, {"k_max", a.k_max},     {"scope", a.scope},
                       {"mode", a.mode}, {"out", a.out},         {"workers", a.workers},
                       {"components", a.components}};
    manifest.inputs = {data_path("train.jsonl"), data_path("id_test.jsonl"), data_path("ood_test.jsonl"),
                       data_path("primitives.json")};
    manifest.outputs = {a.out, summary_path};
    manifest.duration_seconds = seconds_since(start);
    write_manifest(a.out + ".manifest.json", manifest);

    std::printf("%s: %zu vertices, k_max=%d -> %s\n", command, report.vertices.size(), a.k_max,
                a.out.c_str());
    for (Split split : {Split::id_test, Split::ood_test}) {
        if (report.split_count(split) == 0) continue;
        std::printf("  %s covered@k1=%.4f\n", std::string(split_name(split)).c_str(),
                    report.covered_fraction(split, 1));
    }
    return 0;
}

struct ScalingArgs {
    std::string vocab_list;
    int k = 1;
    int trials = 200;
    double success_prob = 0.5;
    std::uint64_t seed = 0;
    std::int64_t n_ceiling = 0;
    std::string out;
    int workers = 0;
};

int cmd_scaling(ScalingArgs a) {
    const auto start = std::chrono::steady_clock::now();
    if (a.out.empty() && !default_out_dir().empty())
        a.out = (fs::path(default_out_dir()) / "scaling.csv").string();
    if (a.out.empty()) throw Error(ErrorKind::usage, "--out CSV path required (or set COVLAB_OUT)");
    if (a.vocab_list.empty()) throw Error(ErrorKind::usage, "--vocab list required (e.g. 16,24,32)");

    ScalingConfig config;
    config.k = a.k;
    config.trials = a.trials;
    config.success_prob = a.success_prob;
    config.seed = a.seed;
    config.n_ceiling = a.n_ceiling;
    config.workers = a.workers;
    std::stringstream ss(a.vocab_list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            config.vocab_sizes.push_back(static_cast<std::uint32_t>(std::stoul(item)));
        } catch (...) {
            throw Error(ErrorKind::usage, "bad vocab list entry '" + item + "'");
        }
    }

    const ScalingResult result = run_scaling(config);

    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw Error(ErrorKind::data, "cannot open '" + a.out + "' for writing");
    out << "vocab_size,k,n_req,ci_low,ci_high\n";
    for (const ScalingPoint& p : result.points)
        out << p.vocab << ',' << a.k << ',' << p.n_req << ',' << p.ci_low << ',' << p.ci_high << '\n';
    out.close();

    const std::string summary_path = a.out + ".summary.json";
    if (result.points.size() >= 3) {
        std::ofstream summary(summary_path, std::ios::binary);
        summary << "{\"k\":" << a.k << ",\"exponent\":" << fmt_double(result.fit.exponent)
                << ",\"intercept\":" << fmt_double(result.fit.intercept)
                << ",\"r_squared\":" << fmt_double(result.fit.r_squared)
                << ",\"theoretical_exponent\":" << fmt_double(theoretical_exponent(a.k)) << "}\n";
    }

    RunManifest manifest;
    manifest.command = "scaling";
    manifest.seed = a.seed;
    manifest.config = {{"vocab", a.vocab_list},
                       {"k", a.k},
                       {"trials", a.trials},
                       {"success_prob", a.success_prob},
                       {"seed", a.seed},
                       {"n_ceiling", a.n_ceiling},
                       {"out", a.out},
                       {"workers", a.workers}};
    manifest.outputs = {a.out};
    if (result.points.size() >= 3) manifest.outputs.push_back(summary_path);
    manifest.duration_seconds = seconds_since(start);
    write_manifest(a.out + ".manifest.json", manifest);

    for (const ScalingPoint& p : result.points)
        std::printf("scaling: |X|=%u k=%d n_req=%lld bracket=[%lld,%lld]\n", p.vocab, a.k,
                    static_cast<long long>(p.n_req), static_cast<long long>(p.ci_low),
                    static_cast<long long>(p.ci_high));
    if (result.points.size() >= 3)
        std::printf("scaling: fitted exponent %.4f (alpha(%d)=%.4f), R^2=%.4f\n", result.fit.exponent,
                    a.k, theoretical_exponent(a.k), result.fit.r_squared);
    return 0;
}

struct FitArgs {
    std::string in;
    std::string out;
};

int cmd_fit(const FitArgs& a) {
    if (a.in.empty()) throw Error(ErrorKind::usage, "--in CSV required");
    std::ifstream in(a.in, std::ios::binary);
    if (!in) throw Error(ErrorKind::data, "cannot open '" + a.in + "'");
    std::vector<std::pair<double, double>> points;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first && line.rfind("vocab_size", 0) == 0) {
            first = false;
            continue;
        }
        first = false;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 3) throw Error(ErrorKind::data, "scaling CSV row needs vocab_size,k,n_req");
        try {
            points.emplace_back(std::stod(cells[0]), std::stod(cells[2]));
        } catch (...) {
            throw Error(ErrorKind::data, "bad number in scaling CSV row '" + line + "'");
        }
    }
    const PowerLawFit fit = fit_power_law(points);
    const std::string json = "{\"n_points\":" + std::to_string(points.size()) +
                             ",\"exponent\":" + fmt_double(fit.exponent) +
                             ",\"intercept\":" + fmt_double(fit.intercept) +
                             ",\"r_squared\":" + fmt_double(fit.r_squared) + "}";
    if (!a.out.empty()) {
        std::ofstream out(a.out, std::ios::binary);
        if (!out) throw Error(ErrorKind::data, "cannot open '" + a.out + "' for writing");
        out << json << '\n';
    }
    std::printf("%s\n", json.c_str());
    return 0;
}

struct IicgArgs {
    std::string vectors;
    std::string group_by = "label";
    bool balanced = false;
    std::string out;
    int workers = 0;
};

int cmd_iicg(const IicgArgs& a) {
    const auto start = std::chrono::steady_clock::now();
    if (a.vectors.empty()) throw Error(ErrorKind::usage, "--vectors file required");
    if (a.group_by != "label")
        throw Error(ErrorKind::usage, "--group-by supports 'label' (composite keys belong in the labels)");
    const LabeledVectorSet set = load_vector_file(a.vectors);
    const std::vector<IicgRow> rows = iicg_by_tag(set, a.balanced, a.workers);

    std::string csv = "tag,group_by,iicg,n_vectors,n_groups\n";
    for (const IicgRow& row : rows)
        csv += row.tag + ',' + a.group_by + ',' + fmt_double(row.value) + ',' +
               std::to_string(row.n_vectors) + ',' + std::to_string(row.n_groups) + '\n';
    if (!a.out.empty()) {
        std::ofstream out(a.out, std::ios::binary);
        if (!out) throw Error(ErrorKind::data, "cannot open '" + a.out + "' for writing");
        out << csv;
        RunManifest manifest;
        manifest.command = "iicg";
        manifest.config = {{"vectors", a.vectors},
                           {"group_by", a.group_by},
                           {"balanced", a.balanced},
                           {"out", a.out},
                           {"workers", a.workers}};
        manifest.inputs = {a.vectors};
        manifest.outputs = {a.out};
        manifest.duration_seconds = seconds_since(start);
        write_manifest(a.out + ".manifest.json", manifest);
    }
    std::fputs(csv.c_str(), stdout);
    return 0;
}

struct IeArgs {
    double p_clean = -1, p_corrupt = -1, p_patched = -1;
    double epsilon = 1e-9;
    std::string out;
};

int cmd_ie(const IeArgs& a) {
    if (a.p_clean < 0 || a.p_corrupt < 0 || a.p_patched < 0)
        throw Error(ErrorKind::usage, "--p-clean, --p-corrupt, --p-patched are all required");
    const double value = indirect_effect(a.p_clean, a.p_corrupt, a.p_patched, a.epsilon);
    const std::string json = "{\"ie\":" + fmt_double(value) + "}";
    if (!a.out.empty()) {
        std::ofstream out(a.out, std::ios::binary);
        if (!out) throw Error(ErrorKind::data, "cannot open '" + a.out + "' for writing");
        out << json << '\n';
    }
    std::printf("%s\n", json.c_str());
    return 0;
}

struct MrrArgs {
    std::string in;
    std::string out;
};

int cmd_mrr(const MrrArgs& a) {
    if (a.in.empty()) throw Error(ErrorKind::usage, "--in JSONL required");
    std::ifstream in(a.in, std::ios::binary);
    if (!in) throw Error(ErrorKind::data, "cannot open '" + a.in + "'");
    std::vector<ScoreRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            const nlohmann::json j = nlohmann::json::parse(line);
            ScoreRow row;
            row.scores = j.at("scores").get<std::vector<float>>();
            row.target = j.at("target").get<std::uint32_t>();
            rows.push_back(std::move(row));
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorKind::data, "bad score row: " + std::string(ex.what()));
        }
    }
    const double value = mrr(rows);
    const std::string json =
        "{\"mrr\":" + fmt_double(value) + ",\"rows\":" + std::to_string(rows.size()) + "}";
    if (!a.out.empty()) {
        std::ofstream out(a.out, std::ios::binary);
        if (!out) throw Error(ErrorKind::data, "cannot open '" + a.out + "' for writing");
        out << json << '\n';
    }
    std::printf("%s\n", json.c_str());
    return 0;
}

struct SelfcheckArgs {
    int instances = 60;
    std::uint64_t seed = 7;
    int workers = 0;
};

int cmd_selfcheck(const SelfcheckArgs& a) {
    OracleSuiteConfig config;
    config.instances = a.instances;
    config.seed = a.seed;
    config.workers = a.workers;
    const OracleSuiteResult result = run_oracle_suite(config);
    std::printf("selfcheck: %d instances, %d checks, %d restricted mismatches, "
                "%d full-domain divergences, %d monotonicity violations\n",
                result.instances, result.checks, result.restricted_mismatches,
                result.full_domain_divergences, result.monotonicity_violations);
    if (!result.passed()) {
        std::fprintf(stderr, "selfcheck FAILED\n");
        return static_cast<int>(ErrorKind::internal);
    }
    std::printf("selfcheck OK\n");
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"covlab: compositional-task datasets, exact k-coverage, and data-scaling simulations"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);
    app.footer("Exit codes: 0 success, 2 usage, 3 data error, 4 capacity/ceiling, 5 internal invariant violation.\n"
               "Every command writes a manifest next to its outputs; re-running with --config <manifest>\n"
               "reproduces the artifacts byte-identically at any --workers setting.");

    nlohmann::json cfg;
    try {
        cfg = load_config_arg(args);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.exit_code();
    }
    std::string config_path;  // parsed for CLI11's benefit; already consumed

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate train/id_test/ood_test datasets");
    auto* gen_task = gen_cmd->add_option("--task", gen.task, "2hop | parallel2hop | 3hop | nontree | hop:N");
    auto* gen_vocab = gen_cmd->add_option("--vocab", gen.vocab, "token set size |X|");
    auto* gen_n = gen_cmd->add_option("--n", gen.n, "training set size");
    auto* gen_pseen = gen_cmd->add_option("--p-seen", gen.p_seen, "seen fraction per primitive domain");
    auto* gen_seed = gen_cmd->add_option("--seed", gen.seed, "PRNG seed");
    auto* gen_test = gen_cmd->add_option("--test-size", gen.test_size, "per test split");
    auto* gen_out = gen_cmd->add_option("--out", gen.out, "output directory");
    auto* gen_text = gen_cmd->add_option("--text", gen.text, "also export text lines: plain | cot");
    auto* gen_workers = gen_cmd->add_option("--workers", gen.workers, "parallelism cap (0 = all)");
    gen_cmd->add_option("--config", config_path, "JSON config or manifest");

    CoverArgs cover;
    auto* cover_cmd = app.add_subcommand("cover", "Coverage and k-cutoffs for a generated dataset");
    auto* cutoff_cmd = app.add_subcommand("cutoff", "Alias of cover with a k sweep (default --k-max 10)");
    CoverArgs cutoff;
    cutoff.k_max = 10;
    for (auto& [cmd, cov] : {std::pair<CLI::App*, CoverArgs*>{cover_cmd, &cover}, {cutoff_cmd, &cutoff}}) {
        cmd->add_option("--data", cov->data, "dataset directory from gen");
        cmd->add_option("--k-max", cov->k_max, "sweep k = 1..k_max");
        cmd->add_option("--scope", cov->scope, "index subsets: all | contiguous");
        cmd->add_option("--mode", cov->mode, "merge rule: per-pair | consistent");
        cmd->add_option("--out", cov->out, "coverage CSV path");
        cmd->add_option("--workers", cov->workers, "parallelism cap (0 = all)");
        cmd->add_flag("--components", cov->components, "record component labels");
        cmd->add_option("--config", config_path, "JSON config or manifest");
    }

    ScalingArgs scaling;
    auto* scaling_cmd = app.add_subcommand("scaling", "Estimate n_req(|X|, k) by connectivity simulation");
    auto* sc_vocab = scaling_cmd->add_option("--vocab", scaling.vocab_list, "comma-separated |X| list");
    auto* sc_k = scaling_cmd->add_option("--k", scaling.k, "evidence threshold");
    auto* sc_trials = scaling_cmd->add_option("--trials", scaling.trials, "Monte-Carlo trials per probe");
    auto* sc_sp = scaling_cmd->add_option("--success-prob", scaling.success_prob, "target connectivity probability");
    auto* sc_seed = scaling_cmd->add_option("--seed", scaling.seed, "PRNG seed");
    auto* sc_ceiling = scaling_cmd->add_option("--n-ceiling", scaling.n_ceiling, "largest N to probe (0 = 32|X|^3)");
    auto* sc_out = scaling_cmd->add_option("--out", scaling.out, "CSV path");
    auto* sc_workers = scaling_cmd->add_option("--workers", scaling.workers, "parallelism cap (0 = all)");
    scaling_cmd->add_option("--config", config_path, "JSON config or manifest");

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "Log-log power-law fit of a scaling CSV");
    fit_cmd->add_option("--in", fit.in, "scaling CSV");
    fit_cmd->add_option("--out", fit.out, "summary JSON path");

    IicgArgs iicg_args;
    auto* iicg_cmd = app.add_subcommand("iicg", "Intra-inter cosine gap per tag");
    iicg_cmd->add_option("--vectors", iicg_args.vectors, "vector file (binary header or JSONL)");
    iicg_cmd->add_option("--group-by", iicg_args.group_by, "grouping key (label)");
    iicg_cmd->add_flag("--balanced", iicg_args.balanced, "group-balanced intra averaging");
    iicg_cmd->add_option("--out", iicg_args.out, "CSV path");
    iicg_cmd->add_option("--workers", iicg_args.workers, "parallelism cap (0 = all)");

    IeArgs ie_args;
    auto* ie_cmd = app.add_subcommand("ie", "Indirect effect of one patched state");
    ie_cmd->add_option("--p-clean", ie_args.p_clean, "p(t*) in the clean run");
    ie_cmd->add_option("--p-corrupt", ie_args.p_corrupt, "p*(t*) in the corrupted run");
    ie_cmd->add_option("--p-patched", ie_args.p_patched, "p(t*) in the patched run");
    ie_cmd->add_option("--epsilon", ie_args.epsilon, "degenerate-trace threshold");
    ie_cmd->add_option("--out", ie_args.out, "JSON path");

    MrrArgs mrr_args;
    auto* mrr_cmd = app.add_subcommand("mrr", "Mean reciprocal rank of targets under score rows");
    mrr_cmd->add_option("--in", mrr_args.in, "JSONL of {\"scores\":[..],\"target\":t}");
    mrr_cmd->add_option("--out", mrr_args.out, "JSON path");

    SelfcheckArgs selfcheck;
    auto* selfcheck_cmd = app.add_subcommand("selfcheck", "Engine vs definition-oracle on random instances");
    selfcheck_cmd->add_option("--instances", selfcheck.instances, "number of random instances");
    selfcheck_cmd->add_option("--seed", selfcheck.seed, "PRNG seed");
    selfcheck_cmd->add_option("--workers", selfcheck.workers, "parallelism cap (0 = all)");

    std::vector<const char*> argv;
    argv.push_back("covlab");
    for (const std::string& s : args) argv.push_back(s.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return static_cast<int>(ErrorKind::usage);
    }

    try {
        if (*gen_cmd) {
            fall_back(gen_task, cfg, "task", gen.task);
            fall_back(gen_vocab, cfg, "vocab", gen.vocab);
            fall_back(gen_n, cfg, "n", gen.n);
            fall_back(gen_pseen, cfg, "p_seen", gen.p_seen);
            fall_back(gen_seed, cfg, "seed", gen.seed);
            fall_back(gen_test, cfg, "test_size", gen.test_size);
            fall_back(gen_out, cfg, "out", gen.out);
            fall_back(gen_text, cfg, "text", gen.text);
            fall_back(gen_workers, cfg, "workers", gen.workers);
            return cmd_gen(gen);
        }
        if (*cover_cmd || *cutoff_cmd) {
            CoverArgs& a = *cover_cmd ? cover : cutoff;
            CLI::App* cmd = *cover_cmd ? cover_cmd : cutoff_cmd;
            fall_back(cmd->get_option("--data"), cfg, "data", a.data);
            fall_back(cmd->get_option("--k-max"), cfg, "k_max", a.k_max);
            fall_back(cmd->get_option("--scope"), cfg, "scope", a.scope);
            fall_back(cmd->get_option("--mode"), cfg, "mode", a.mode);
            fall_back(cmd->get_option("--out"), cfg, "out", a.out);
            fall_back(cmd->get_option("--workers"), cfg, "workers", a.workers);
            if (cmd->get_option("--components")->count() == 0 && cfg.contains("components"))
                a.components = cfg["components"].get<bool>();
            return cmd_cover(a, *cover_cmd ? "cover" : "cutoff");
        }
        if (*scaling_cmd) {
            fall_back(sc_vocab, cfg, "vocab", scaling.vocab_list);
            fall_back(sc_k, cfg, "k", scaling.k);
            fall_back(sc_trials, cfg, "trials", scaling.trials);
            fall_back(sc_sp, cfg, "success_prob", scaling.success_prob);
            fall_back(sc_seed, cfg, "seed", scaling.seed);
            fall_back(sc_ceiling, cfg, "n_ceiling", scaling.n_ceiling);
            fall_back(sc_out, cfg, "out", scaling.out);
            fall_back(sc_workers, cfg, "workers", scaling.workers);
            return cmd_scaling(scaling);
        }
        if (*fit_cmd) return cmd_fit(fit);
        if (*iicg_cmd) return cmd_iicg(iicg_args);
        if (*ie_cmd) return cmd_ie(ie_args);
        if (*mrr_cmd) return cmd_mrr(mrr_args);
        if (*selfcheck_cmd) return cmd_selfcheck(selfcheck);
        throw Error(ErrorKind::usage, "no subcommand given");
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return static_cast<int>(ErrorKind::internal);
    }
}

}  // namespace covlab
