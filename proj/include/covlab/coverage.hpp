#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "covlab/dataset.hpp"
#include "covlab/task_model.hpp"

namespace covlab {

/**
 * Nonempty proper subset of input positions {0..n-1}, stored as a bitmask.
 */
struct IndexSubset {
    std::uint32_t bits = 0;
    int n = 0;

    int size() const { return __builtin_popcount(bits); }
    bool contains(int i) const { return (bits >> i) & 1u; }
    std::uint32_t complement_bits() const { return (~bits) & ((1u << n) - 1); }
    bool is_contiguous() const;

    bool operator==(const IndexSubset&) const = default;
};

enum class SubsetScope { all, contiguous };

// Subsets in ascending bitmask order, filtered by scope.
std::vector<IndexSubset> enumerate_subsets(int n, SubsetScope scope);

// Packed token keys: position 0 in the high bits so numeric order matches
// lexicographic token order. Requires vocab <= 2^16 and <= 8 positions.
using PackedKey = unsigned __int128;
PackedKey pack_all(std::span<const TokenId> tokens);
PackedKey pack_subset(std::span<const TokenId> input, std::uint32_t bits);
std::vector<TokenId> unpack_tokens(PackedKey key, int count);

/**
 * Per-subset record of how each train fragment behaves: for every train
 * input, one (complement, fragment, output) entry. Fragments and
 * complements are interned in sorted key order; entries are sorted by
 * (complement, fragment), so co-occurring fragments sit in contiguous runs.
 */
struct BehaviorMap {
    IndexSubset subset;
    std::vector<PackedKey> fragments;    // sorted, deduplicated
    std::vector<PackedKey> complements;  // sorted, deduplicated

    struct Entry {
        std::uint32_t comp;
        std::uint32_t frag;
        TokenId out;
    };
    std::vector<Entry> entries;

    std::int64_t fragment_id(PackedKey key) const;  // -1 when absent
    std::size_t n_fragments() const { return fragments.size(); }
    std::size_t n_entries() const { return entries.size(); }
    // Observed outputs of one fragment as (complement key, output), sorted.
    std::vector<std::pair<PackedKey, TokenId>> fragment_behavior(PackedKey frag) const;
};

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) {
        for (std::size_t i = 0; i < n; ++i) parent_[i] = static_cast<std::int32_t>(i);
        rank_.assign(n, 0);
    }
    std::int32_t find(std::int32_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }
    bool unite(std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        if (rank_[a] < rank_[b]) std::swap(a, b);
        parent_[b] = a;
        if (rank_[a] == rank_[b]) ++rank_[a];
        return true;
    }
    std::size_t size() const { return parent_.size(); }

private:
    std::vector<std::int32_t> parent_;
    std::vector<std::uint8_t> rank_;
};

/**
 * Evidence between two fragments at one subset: the number of distinct
 * shared complements with agreeing outputs, and whether any shared
 * complement disagreed. A contradicted pair is never merged at any k.
 */
struct PairEvidence {
    std::uint32_t a, b;       // fragment ids, a < b
    std::int32_t agree = 0;   // distinct complements with equal outputs
    bool contradicted = false;
};

/**
 * How pairs meeting the evidence threshold are merged.
 *
 * per_pair unions every pair with agree >= k and no contradiction — the
 * literal reading of the definition. component_consistent additionally
 * vetoes a union whenever the combined class would contain a pair of
 * fragments that contradict each other on some shared complement, which
 * suppresses single-coincidence merges between genuinely different
 * fragments at k=1. Its greedy processes qualifying pairs strongest
 * evidence first (agree desc, then pair order), so weak coincidences
 * cannot pre-empt well-supported merges.
 */
enum class EquivalenceMode { per_pair, component_consistent };

struct EquivalenceIndex {
    IndexSubset subset;
    std::vector<PackedKey> fragments;
    std::vector<PairEvidence> pairs;  // sorted by (a, b); k-independent
    UnionFind uf{0};                  // state after merging at threshold k
    int k = 1;

    bool equivalent(PackedKey frag_a, PackedKey frag_b);
    // Pairs that individually satisfy the threshold (before transitivity).
    std::vector<std::pair<PackedKey, PackedKey>> merged_pairs() const;
};

struct CoverageConfig {
    int k_max = 1;
    SubsetScope scope = SubsetScope::all;
    EquivalenceMode mode = EquivalenceMode::per_pair;
    int workers = 0;  // 0 = all available
    bool record_components = false;
    bool one_substitution_closure = false;  // probe: add single-swap neighbors as vertices
    // Ground truth for closure vertices; required when the closure is on.
    std::function<TokenId(std::span<const TokenId>)> truth_fn;
};

// A graph vertex: an input tuple plus its ground-truth output.
struct Vertex {
    std::vector<TokenId> input;
    TokenId truth = 0;
    Split split = Split::train;
};

struct SubstitutionGraph {
    std::size_t n_vertices = 0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;  // sorted, deduplicated, no self-edges
};

struct CoverageResult {
    std::vector<std::uint8_t> covered;       // component contains a train vertex
    std::vector<std::int32_t> component_id;  // label = smallest vertex id in component
};

// Stage 1: one behavior map per subset, from train vertices.
std::vector<BehaviorMap> build_behavior_maps(std::span<const Vertex> train,
                                             SubsetScope scope = SubsetScope::all, int workers = 0);

// Stage 2: merge fragments with >= k agreeing shared complements and none
// disagreeing (per mode).
std::vector<EquivalenceIndex> compute_equivalence(const std::vector<BehaviorMap>& behavior_maps, int k,
                                                  EquivalenceMode mode = EquivalenceMode::per_pair,
                                                  int workers = 0);

// Stage 3: edge (x, y) iff truth(x) == truth(y) and some subset I covers
// their differing positions with x_I, y_I sharing a union-find root.
SubstitutionGraph build_substitution_graph(std::span<const Vertex> vertices,
                                           std::vector<EquivalenceIndex>& equivalence, int workers = 0);

// Stage 4: a vertex is covered iff its component contains a train vertex.
CoverageResult compute_coverage(const SubstitutionGraph& graph, std::span<const Vertex> vertices);

/**
 * Per-vertex coverage across k = 1..k_max plus the k-cutoff. covered_at is
 * nonincreasing in k; k_cutoff is the largest covered k (k_max when still
 * covered there) and 0 when uncovered at k=1.
 */
struct CoverageReport {
    int k_max = 1;
    std::vector<Vertex> vertices;
    std::vector<std::vector<std::uint8_t>> covered_at;      // [k-1][vertex]
    std::vector<int> k_cutoff;                              // per vertex
    std::vector<std::vector<std::int32_t>> component_ids;   // per k when recorded
    bool truth_from_labels = false;  // no evaluator; labels stood in for f

    double covered_fraction(Split split, int k) const;
    std::size_t split_count(Split split) const;
};

/**
 * Runs the full pipeline for every k in 1..k_max, sharing the stage-1/2
 * evidence across thresholds. Results are identical for any worker count.
 */
CoverageReport k_cutoff_sweep(std::span<const Vertex> train, std::span<const Vertex> tests,
                              const CoverageConfig& config);

// Vertex construction from datasets: truth from the synthetic evaluator, or
// from stored labels when no primitives are available.
std::vector<Vertex> make_vertices(const CompositionStructure& structure,
                                  std::span<const PrimitiveTable> primitives,
                                  std::span<const Example> examples);
std::vector<Vertex> make_vertices_from_labels(std::span<const Example> examples);

// example_id,split,k_cutoff,covered_k1..covered_k{k_max}
void write_coverage_csv(const CoverageReport& report, const std::string& path);
// per-k covered fractions per split
std::string coverage_summary_json(const CoverageReport& report);

}  // namespace covlab
