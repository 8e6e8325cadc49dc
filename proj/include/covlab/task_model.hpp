#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "covlab/error.hpp"
#include "covlab/prng.hpp"

namespace covlab {

using TokenId = std::uint32_t;

/**
 * One argument of a primitive node: either an input position or the value
 * of an earlier node.
 */
struct ArgRef {
    enum class Kind : std::uint8_t { input, node };
    Kind kind;
    int index;

    static ArgRef in(int i) { return {Kind::input, i}; }
    static ArgRef nd(int i) { return {Kind::node, i}; }

    bool operator==(const ArgRef&) const = default;
};

struct NodeSpec {
    std::vector<ArgRef> args;

    int arity() const { return static_cast<int>(args.size()); }
    bool operator==(const NodeSpec&) const = default;
};

/**
 * A DAG of primitive-function nodes over token positions. Nodes are stored
 * in topological order: each argument references an input position or a
 * strictly earlier node. Exactly one node is the output.
 *
 * The catalog covers the standard shapes (two_hop, parallel_two_hop,
 * three_hop, non_tree, hop_chain); arbitrary acyclic wirings are accepted
 * through the general constructor.
 */
class CompositionStructure {
public:
    CompositionStructure(std::string name, int n_inputs, std::vector<NodeSpec> nodes, int output_node);

    static CompositionStructure two_hop();           // t = f2(f1(x1,x2), x3)
    static CompositionStructure parallel_two_hop();  // t = f3(f1(x1,x2), f2(x3,x4))
    static CompositionStructure three_hop();         // t = f3(f2(f1(x1,x2), x3), x4)
    static CompositionStructure non_tree();          // t = f2(f1(x1,x2), x2, x3)
    static CompositionStructure hop_chain(int hops); // h-hop chain, hops >= 2

    // Resolves a CLI task name: "2hop", "parallel2hop", "3hop", "nontree", "hop:N".
    static CompositionStructure from_name(const std::string& name);

    const std::string& name() const { return name_; }
    int n_inputs() const { return n_inputs_; }
    const std::vector<NodeSpec>& nodes() const { return nodes_; }
    int output_node() const { return output_node_; }
    int n_intermediate_nodes() const { return static_cast<int>(nodes_.size()) - 1; }

    // Catalog name when constructed from the catalog, else a hash of the wiring.
    std::string id() const;

    bool operator==(const CompositionStructure&) const = default;

private:
    std::string name_;
    int n_inputs_;
    std::vector<NodeSpec> nodes_;
    int output_node_;
};

/**
 * An explicit lookup table realizing one primitive function X^arity -> X,
 * total over its domain, with a per-tuple "seen" mask. Domain tuples are
 * indexed row-major: flat = ((a1*|X|)+a2)*|X|+... .
 */
class PrimitiveTable {
public:
    PrimitiveTable(int arity, std::uint32_t vocab, std::vector<TokenId> table, std::vector<std::uint8_t> seen);

    int arity() const { return arity_; }
    std::uint32_t vocab() const { return vocab_; }
    std::size_t domain_size() const { return table_.size(); }
    const std::vector<TokenId>& table() const { return table_; }
    const std::vector<std::uint8_t>& seen_mask() const { return seen_; }

    std::size_t flat_index(std::span<const TokenId> args) const;
    TokenId apply(std::span<const TokenId> args) const { return table_[flat_index(args)]; }
    TokenId apply_flat(std::size_t flat) const { return table_[flat]; }
    bool is_seen(std::span<const TokenId> args) const { return seen_[flat_index(args)] != 0; }
    bool is_seen_flat(std::size_t flat) const { return seen_[flat] != 0; }
    std::size_t seen_count() const;

    /**
     * Marks exactly round(p_seen * domain_size) tuples as seen, chosen by a
     * partial Fisher-Yates shuffle of the flat domain indices. Draw order:
     * one uniform_below per selected tuple, in selection order.
     */
    void sample_seen_mask(double p_seen, Prng& rng);

private:
    int arity_;
    std::uint32_t vocab_;
    std::vector<TokenId> table_;
    std::vector<std::uint8_t> seen_;
};

/**
 * Uniformly random total table. Draw order: one uniform_below(vocab) per
 * domain tuple, in row-major flat order. The seen mask starts all-true.
 * Rejects vocab < 2 (equivalence classes degenerate) and domains larger
 * than 2^26 tuples.
 */
PrimitiveTable make_random_primitive(int arity, std::uint32_t vocab, Prng& rng);
PrimitiveTable make_random_primitive(int arity, std::uint32_t vocab, std::uint64_t seed);

/**
 * Arity-2 table whose preimage classes E_b form an exact partition of the
 * domain with |E_b| = vocab for every output token b. Implemented by a
 * Fisher-Yates shuffle of the vocab^2 flat domain indices (draw order: one
 * uniform_below per position, from index 1 upward) followed by chunking
 * into vocab classes of size vocab, class i mapping to token i.
 */
PrimitiveTable make_balanced_primitive(std::uint32_t vocab, Prng& rng);
PrimitiveTable make_balanced_primitive(std::uint32_t vocab, std::uint64_t seed);

struct EvalResult {
    TokenId output;
    std::vector<TokenId> intermediates;  // non-output node values, topological order

    bool operator==(const EvalResult&) const = default;
};

/**
 * Evaluates the composition on an input tuple. Pure and total on its
 * declared domain; throws on input-length or node/primitive arity mismatch.
 */
EvalResult evaluate(const CompositionStructure& structure,
                    std::span<const PrimitiveTable> primitives,
                    std::span<const TokenId> input);

// Per-node applied argument tuples for the same evaluation (flat indices),
// used for seen-mask filtering and observed-application bookkeeping.
void node_applications(const CompositionStructure& structure,
                       std::span<const PrimitiveTable> primitives,
                       std::span<const TokenId> input,
                       std::vector<std::size_t>& out_flats);

}  // namespace covlab
