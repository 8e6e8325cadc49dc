#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>

#include "covlab/dataset.hpp"

using namespace covlab;

namespace {

std::vector<PrimitiveTable> masked_primitives(const CompositionStructure& s, std::uint32_t vocab,
                                              double p_seen, std::uint64_t seed) {
    std::vector<PrimitiveTable> out;
    const Prng root(seed);
    for (std::size_t j = 0; j < s.nodes().size(); ++j) {
        Prng table_rng = root.derive(1000 + j);
        PrimitiveTable t = make_random_primitive(s.nodes()[j].arity(), vocab, table_rng);
        Prng mask_rng = root.derive(2000 + j);
        t.sample_seen_mask(p_seen, mask_rng);
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

TEST_CASE("enumeration with p_seen=1 yields the whole domain") {
    const CompositionStructure s = CompositionStructure::two_hop();
    const std::vector<PrimitiveTable> prims = masked_primitives(s, 5, 1.0, 3);
    const std::vector<Example> pool = enumerate_id_combinations(s, prims);
    CHECK(pool.size() == 125);
}

TEST_CASE("enumeration matches an exhaustive filter on a tiny instance") {
    const CompositionStructure s = CompositionStructure::two_hop();
    const std::vector<PrimitiveTable> prims = masked_primitives(s, 4, 0.6, 9);
    const std::vector<Example> pool = enumerate_id_combinations(s, prims);

    // Oracle: scan all 64 inputs and keep those whose two applications are seen.
    std::set<std::vector<TokenId>> expected;
    for (TokenId a = 0; a < 4; ++a)
        for (TokenId b = 0; b < 4; ++b)
            for (TokenId c = 0; c < 4; ++c) {
                const std::vector<TokenId> in{a, b, c};
                if (!prims[0].is_seen(std::vector<TokenId>{a, b})) continue;
                const TokenId mid = prims[0].apply(std::vector<TokenId>{a, b});
                if (!prims[1].is_seen(std::vector<TokenId>{mid, c})) continue;
                expected.insert(in);
            }
    std::set<std::vector<TokenId>> got;
    for (const Example& e : pool) {
        got.insert(e.input);
        CHECK(evaluate(s, prims, e.input).output == e.target);
    }
    CHECK(got == expected);
}

TEST_CASE("enumeration count concentrates near 0.49 |X|^3 for p_seen=0.7") {
    const CompositionStructure s = CompositionStructure::two_hop();
    double total = 0;
    const int seeds = 50;
    for (int seed = 0; seed < seeds; ++seed) {
        const std::vector<PrimitiveTable> prims = masked_primitives(s, 50, 0.7, 100 + seed);
        total += static_cast<double>(enumerate_id_combinations(s, prims).size());
    }
    const double mean = total / seeds;
    const double expected = 0.49 * 125000.0;
    CHECK(std::fabs(mean - expected) / expected < 0.02);
}

TEST_CASE("per-position ranges embed position-specific domains") {
    // Shared token set of 6; position domains [0,2), [2,4), [4,6).
    const CompositionStructure s = CompositionStructure::two_hop();
    const std::vector<PrimitiveTable> prims = masked_primitives(s, 6, 1.0, 13);
    const std::vector<PositionRange> ranges{{0, 2}, {2, 4}, {4, 6}};
    const std::vector<Example> pool = enumerate_id_combinations(s, prims, 0, ranges);
    CHECK(pool.size() == 8);  // 2 * 2 * 2
    for (const Example& e : pool) {
        CHECK(e.input[0] < 2);
        CHECK(e.input[1] >= 2);
        CHECK(e.input[1] < 4);
        CHECK(e.input[2] >= 4);
    }

    Prng rng(14);
    Dataset train = sample_training_set(pool, 4, rng);
    Prng rng2(15);
    const TestSets tests = build_test_sets(s, prims, train, 3, rng2, ranges);
    for (const auto& part : {tests.id_test, tests.ood_test})
        for (const Example& e : part) {
            CHECK(e.input[0] < 2);
            CHECK(e.input[1] >= 2);
            CHECK(e.input[2] >= 4);
        }
    CHECK(tests.id_pool_size + tests.ood_pool_size + train.examples.size() == 8);

    CHECK_THROWS_AS(enumerate_id_combinations(s, prims, 0, std::vector<PositionRange>{{0, 2}}), Error);
    CHECK_THROWS_AS(enumerate_id_combinations(s, prims, 0, std::vector<PositionRange>{{0, 9}, {0, 2}, {0, 2}}),
                    Error);
}

TEST_CASE("enumeration is worker-count invariant") {
    const CompositionStructure s = CompositionStructure::three_hop();
    const std::vector<PrimitiveTable> prims = masked_primitives(s, 6, 0.7, 5);
    const std::vector<Example> serial = enumerate_id_combinations(s, prims, 1);
    const std::vector<Example> parallel = enumerate_id_combinations(s, prims, 0);
    CHECK(serial == parallel);
}

TEST_CASE("training sampling: exhaustion, capacity error, determinism") {
    const CompositionStructure s = CompositionStructure::two_hop();
    const std::vector<PrimitiveTable> prims = masked_primitives(s, 4, 0.8, 21);
    const std::vector<Example> pool = enumerate_id_combinations(s, prims);
    REQUIRE(pool.size() > 4);

    Prng rng(1);
    const Dataset all = sample_training_set(pool, pool.size(), rng);
    std::set<std::vector<TokenId>> inputs;
    for (const Example& e : all.examples) inputs.insert(e.input);
    CHECK(inputs.size() == pool.size());

    Prng rng2(1);
    CHECK_THROWS_WITH_AS(sample_training_set(pool, pool.size() + 1, rng2),
                         doctest::Contains(std::to_string(pool.size()).c_str()), Error);

    Prng rng3(7), rng4(7);
    CHECK(sample_training_set(pool, 5, rng3).examples == sample_training_set(pool, 5, rng4).examples);
}

TEST_CASE("training sampling inclusion frequency is hypergeometric-uniform") {
    const CompositionStructure s = CompositionStructure::two_hop();
    const std::vector<PrimitiveTable> prims = masked_primitives(s, 6, 0.7, 8);
    const std::vector<Example> pool = enumerate_id_combinations(s, prims);
    const std::size_t pool_size = pool.size();
    const std::size_t n = 20;
    const int seeds = 1000;

    std::vector<int> inclusion(pool_size, 0);
    std::map<std::vector<TokenId>, std::size_t> index;
    for (std::size_t i = 0; i < pool_size; ++i) index[pool[i].input] = i;
    for (int seed = 0; seed < seeds; ++seed) {
        Prng rng(900 + seed);
        for (const Example& e : sample_training_set(pool, n, rng).examples) ++inclusion[index[e.input]];
    }
    // Chi-square against the uniform inclusion probability n/pool.
    const double expected = static_cast<double>(seeds) * n / pool_size;
    double chi2 = 0;
    for (int count : inclusion) chi2 += (count - expected) * (count - expected) / expected;
    // df = pool-1; generous 99.9th percentile via Wilson-Hilferty.
    const double df = static_cast<double>(pool_size - 1);
    const double z = 3.09;
    const double limit = df * std::pow(1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df)), 3.0);
    CHECK(chi2 < limit);
}

TEST_CASE("test sets: membership conditions on a tiny instance") {
    const CompositionStructure s = CompositionStructure::two_hop();
    const std::vector<PrimitiveTable> prims = masked_primitives(s, 4, 0.7, 31);
    const std::vector<Example> pool = enumerate_id_combinations(s, prims);
    REQUIRE(pool.size() >= 8);
    Prng rng(2);
    Dataset train = sample_training_set(pool, pool.size() / 2, rng);
    Prng rng2(3);
    const TestSets tests = build_test_sets(s, prims, train, 5, rng2);

    // Oracle: recompute observed applications and classify the whole domain.
    std::set<std::size_t> observed_f1, observed_f2;
    std::set<std::vector<TokenId>> train_inputs;
    std::vector<std::size_t> flats;
    for (const Example& e : train.examples) {
        node_applications(s, prims, e.input, flats);
        observed_f1.insert(flats[0]);
        observed_f2.insert(flats[1]);
        train_inputs.insert(e.input);
    }
    std::size_t expect_id = 0, expect_ood = 0;
    for (TokenId a = 0; a < 4; ++a)
        for (TokenId b = 0; b < 4; ++b)
            for (TokenId c = 0; c < 4; ++c) {
                const std::vector<TokenId> in{a, b, c};
                node_applications(s, prims, in, flats);
                const bool all_observed = observed_f1.contains(flats[0]) && observed_f2.contains(flats[1]);
                if (!all_observed) ++expect_ood;
                else if (!train_inputs.contains(in)) ++expect_id;
            }
    CHECK(tests.id_pool_size == expect_id);
    CHECK(tests.ood_pool_size == expect_ood);

    for (const Example& e : tests.id_test) {
        node_applications(s, prims, e.input, flats);
        CHECK(observed_f1.contains(flats[0]));
        CHECK(observed_f2.contains(flats[1]));
        CHECK(!train_inputs.contains(e.input));
        CHECK(evaluate(s, prims, e.input).output == e.target);
    }
    for (const Example& e : tests.ood_test) {
        node_applications(s, prims, e.input, flats);
        CHECK((!observed_f1.contains(flats[0]) || !observed_f2.contains(flats[1])));
        CHECK(!train_inputs.contains(e.input));
    }
}

TEST_CASE("test sets report exhaustion instead of failing") {
    const CompositionStructure s = CompositionStructure::two_hop();
    const std::vector<PrimitiveTable> prims = masked_primitives(s, 4, 0.5, 77);
    const std::vector<Example> pool = enumerate_id_combinations(s, prims);
    Prng rng(5);
    Dataset train = sample_training_set(pool, pool.size(), rng);  // exhaust the pool
    Prng rng2(6);
    const TestSets tests = build_test_sets(s, prims, train, 2000, rng2);
    CHECK(tests.id_pool_size == 0);
    CHECK(tests.id_test.empty());
    CHECK(tests.id_pool_short);
    CHECK(tests.ood_pool_short);  // pool smaller than 2000 on a 64-input domain
    CHECK(tests.ood_test.size() == tests.ood_pool_size);
}

TEST_CASE("serialization literals are byte-exact") {
    Example e;
    e.input = {5, 12, 3};
    e.target = 17;
    e.intermediates = {9};
    CHECK(serialize_example(e, TextFormat::plain) == "<t_5><t_12><t_3>\t<t_17></a>");
    CHECK(serialize_example(e, TextFormat::cot) == "<t_5><t_12><t_3>\t<t_9><t_17></a>");

    Example partial;
    partial.input = {5, 12};
    partial.target = 9;
    CHECK(serialize_example(partial, TextFormat::partial) == "<t_5><t_12>\t<t_9></a>");
}

TEST_CASE("parsing inverts serialization on the carried fields") {
    const Example zero = parse_example("<t_0><t_0><t_0>\t<t_0></a>", TextFormat::plain, 3);
    CHECK(zero.input == std::vector<TokenId>{0, 0, 0});
    CHECK(zero.target == 0);
    CHECK(zero.intermediates.empty());

    Prng rng(13);
    for (int i = 0; i < 10000; ++i) {
        Example e;
        const int n = 2 + static_cast<int>(rng.uniform_below(4));
        for (int p = 0; p < n; ++p) e.input.push_back(static_cast<TokenId>(rng.uniform_below(999)));
        for (int p = 0; p < 2; ++p) e.intermediates.push_back(static_cast<TokenId>(rng.uniform_below(999)));
        e.target = static_cast<TokenId>(rng.uniform_below(999));

        const Example cot = parse_example(serialize_example(e, TextFormat::cot), TextFormat::cot, n);
        CHECK(cot.input == e.input);
        CHECK(cot.intermediates == e.intermediates);
        CHECK(cot.target == e.target);

        const Example plain = parse_example(serialize_example(e, TextFormat::plain), TextFormat::plain, n);
        CHECK(plain.input == e.input);
        CHECK(plain.target == e.target);

        // Text-level round trip both ways.
        CHECK(serialize_example(cot, TextFormat::cot) == serialize_example(e, TextFormat::cot));
    }
}

TEST_CASE("parse errors carry the fault and byte offset") {
    auto fault_of = [](const char* line, TextFormat f, int arity) {
        try {
            parse_example(line, f, arity);
        } catch (const ParseError& e) {
            return e.fault();
        }
        return ParseFault::unknown_format;
    };
    CHECK(fault_of("<t_5><t_12>\t<t_9></a>", TextFormat::plain, 3) == ParseFault::arity_mismatch);
    CHECK(fault_of("<t_5><x_12><t_3>\t<t_9></a>", TextFormat::plain, 3) == ParseFault::malformed_token);
    CHECK(fault_of("<t_5><t_12><t_3>", TextFormat::plain, 3) == ParseFault::truncated_line);
    CHECK(fault_of("<t_5><t_12><t_3>\t<t_9>", TextFormat::plain, 3) == ParseFault::missing_end_marker);
    CHECK(fault_of("<t_5><t_12><t_3>\t<t_9><t_1></a>", TextFormat::plain, 3) == ParseFault::arity_mismatch);
    CHECK_THROWS_AS(text_format_from_name("fancy"), ParseError);

    try {
        parse_example("<t_5><t_1x><t_3>\t<t_9></a>", TextFormat::plain, 3);
        CHECK(false);
    } catch (const ParseError& e) {
        CHECK(e.byte_offset() == 9);  // the 'x' inside the second token
        CHECK(std::string(e.what()).find("byte 9") != std::string::npos);
    }
}

TEST_CASE("jsonl record layout and round trip") {
    Example e;
    e.input = {5, 12, 3};
    e.target = 17;
    e.intermediates = {9};
    e.split = Split::train;
    CHECK(example_to_jsonl(e) == "{\"input\":[5,12,3],\"target\":17,\"intermediates\":[9],\"split\":\"train\"}");
    CHECK(example_from_jsonl(example_to_jsonl(e)) == e);

    const auto dir = std::filesystem::temp_directory_path() / "covlab_test_jsonl";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "x.jsonl").string();
    write_jsonl(path, std::vector<Example>{e, e});
    CHECK(read_jsonl(path) == std::vector<Example>{e, e});
    CHECK_THROWS_AS(example_from_jsonl("{\"input\":[1]"), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("primitives file round trip") {
    const CompositionStructure s = CompositionStructure::non_tree();
    const std::vector<PrimitiveTable> prims = masked_primitives(s, 5, 0.7, 41);
    const auto dir = std::filesystem::temp_directory_path() / "covlab_test_prims";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "p.json").string();
    write_primitives_file(path, s, prims, 0.7);
    const PrimitivesFile loaded = read_primitives_file(path);
    CHECK(loaded.structure == s);
    CHECK(loaded.p_seen == 0.7);
    REQUIRE(loaded.primitives.size() == prims.size());
    for (std::size_t j = 0; j < prims.size(); ++j) {
        CHECK(loaded.primitives[j].table() == prims[j].table());
        CHECK(loaded.primitives[j].seen_mask() == prims[j].seen_mask());
    }
    std::filesystem::remove_all(dir);
}
