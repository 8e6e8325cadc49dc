#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "covlab/task_model.hpp"

namespace covlab {

enum class Split : std::uint8_t { train, id_test, ood_test };

std::string_view split_name(Split s);
Split split_from_name(std::string_view name);

struct Example {
    std::vector<TokenId> input;
    TokenId target = 0;
    std::vector<TokenId> intermediates;
    Split split = Split::train;

    bool operator==(const Example&) const = default;
};

struct Dataset {
    std::string structure_id;
    std::uint32_t vocab_size = 0;
    double p_seen = 1.0;
    std::uint64_t seed = 0;
    std::vector<Example> examples;
};

/**
 * Half-open token range [lo, hi) allowed at one input position. A shared
 * token set with per-position ranges embeds position-specific domains as
 * subsets of the enlarged union.
 */
struct PositionRange {
    TokenId lo = 0;
    TokenId hi = 0;  // 0 means "whole token set"

    bool operator==(const PositionRange&) const = default;
};

/**
 * Emits every input whose node applications are all marked seen, together
 * with its target and intermediates, in lexicographic input order. The
 * depth-first scan evaluates each node as soon as its arguments are fixed
 * and prunes the whole branch on the first unseen application. ranges, when
 * nonempty, restricts each input position to its allowed token window.
 */
std::vector<Example> enumerate_id_combinations(const CompositionStructure& structure,
                                               std::span<const PrimitiveTable> primitives,
                                               int workers = 0,
                                               std::span<const PositionRange> ranges = {});

// Streaming variant used where materializing the pool is unnecessary.
void for_each_id_combination(const CompositionStructure& structure,
                             std::span<const PrimitiveTable> primitives,
                             const std::function<void(std::span<const TokenId>, const EvalResult&)>& fn);

/**
 * N distinct examples drawn uniformly without replacement from the ID pool
 * (partial Fisher-Yates over pool indices; one uniform_below per draw, in
 * draw order). Throws a capacity error naming both counts when N exceeds
 * the pool.
 */
Dataset sample_training_set(const std::vector<Example>& id_pool, std::size_t n, Prng& rng);

struct TestSets {
    std::vector<Example> id_test;
    std::vector<Example> ood_test;
    bool id_pool_short = false;   // candidate pool smaller than requested
    bool ood_pool_short = false;
    std::size_t id_pool_size = 0;
    std::size_t ood_pool_size = 0;
};

/**
 * Builds ID/OOD test sets against a training set. Membership is decided
 * per node against the applications actually observed in train (not the
 * seen mask): id_test inputs use only observed applications and do not
 * appear in train; ood_test inputs use at least one never-observed
 * application. Both are drawn uniformly without replacement by two-pass
 * selection sampling over the lexicographic domain scan (draw order: one
 * uniform_below per candidate). Pools smaller than the requested size are
 * returned whole with the corresponding short flag set.
 */
TestSets build_test_sets(const CompositionStructure& structure,
                         std::span<const PrimitiveTable> primitives,
                         const Dataset& train, std::size_t size, Prng& rng,
                         std::span<const PositionRange> ranges = {});

enum class TextFormat { plain, cot, partial };

TextFormat text_format_from_name(std::string_view name);

/**
 * Text serialization, byte-exact:
 *   plain:   <t_5><t_12><t_3>\t<t_17></a>
 *   cot:     <t_5><t_12><t_3>\t<t_9><t_17></a>   (intermediates, then target)
 *   partial: <t_5><t_12>\t<t_9></a>              (a primitive application)
 */
std::string serialize_example(const Example& example, TextFormat format);

/**
 * Inverse of serialize_example for the fields the format carries (plain
 * and partial lines do not carry intermediates). expected_inputs >= 0
 * enforces the input arity for plain/cot. Failures throw ParseError with
 * a distinct fault and the byte offset.
 */
Example parse_example(std::string_view line, TextFormat format, int expected_inputs = -1);

// JSONL record: {"input":[..],"target":t,"intermediates":[..],"split":"train"}
std::string example_to_jsonl(const Example& example);
Example example_from_jsonl(std::string_view line);

void write_jsonl(const std::string& path, std::span<const Example> examples);
std::vector<Example> read_jsonl(const std::string& path);

// {"arity":..,"vocab":..,"table":[..],"seen_mask":[0/1..]}
std::string primitive_to_json(const PrimitiveTable& table);

struct GeneratedData {
    CompositionStructure structure;
    std::vector<PrimitiveTable> primitives;
    Dataset train;
    TestSets tests;
};

// Bundle serialization for the gen/cover CLI pair (primitives.json).
void write_primitives_file(const std::string& path, const CompositionStructure& structure,
                           std::span<const PrimitiveTable> primitives, double p_seen);
struct PrimitivesFile {
    CompositionStructure structure;
    std::vector<PrimitiveTable> primitives;
    double p_seen;
};
PrimitivesFile read_primitives_file(const std::string& path);

}  // namespace covlab
