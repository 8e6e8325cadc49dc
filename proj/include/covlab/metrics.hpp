#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "covlab/error.hpp"

namespace covlab {

/**
 * Fixed-dimension real vectors, one group label and one free-form tag per
 * vector. Tags partition the set into independent measurement slices
 * (e.g. layer/position); labels define the groups compared inside a slice.
 * Held in double precision; the binary wire format stores f32 rows.
 */
struct LabeledVectorSet {
    int dim = 0;
    std::vector<double> data;  // row-major, count() rows
    std::vector<std::string> labels;
    std::vector<std::string> tags;

    std::size_t count() const { return dim == 0 ? 0 : data.size() / dim; }
    std::span<const double> row(std::size_t i) const {
        return {data.data() + i * dim, static_cast<std::size_t>(dim)};
    }
};

/**
 * Intra-Inter Cosine Gap: mean pairwise cosine similarity over same-group
 * (unordered, non-self) pairs minus the mean over different-group pairs.
 * All pairs weigh equally; group_balanced instead averages the per-group
 * pair means before differencing, for imbalanced label sets. Pair sums
 * shard over fixed-size ranges and reduce in shard order, so the value is
 * bit-stable across worker counts.
 */
double iicg(const LabeledVectorSet& set, bool group_balanced = false, int workers = 0);

/**
 * Normalized probability shift from patching one hidden state:
 * (p_patched - p_clean) / (p_corrupt - p_clean). All inputs in [0,1];
 * |p_corrupt - p_clean| below epsilon is a degenerate trace.
 */
double indirect_effect(double p_clean, double p_corrupt, double p_patched, double epsilon = 1e-9);

struct ScoreRow {
    std::vector<float> scores;  // over the vocabulary
    std::uint32_t target = 0;
};

/**
 * Mean reciprocal rank of the target under each score vector. Rank is
 * 1 + the number of strictly greater entries (ties rank the target best
 * among equals). 1 means the target always ranks first.
 */
double mrr(std::span<const ScoreRow> rows);

/**
 * Vector file: a JSON header line {"dim":d,"count":m,"labels":[...],
 * "tags":[...]} followed by m rows of little-endian f32 (d per row), or
 * pure JSONL where each line is {"label":...,"vector":[...],"tag":...}.
 */
LabeledVectorSet load_vector_file(const std::string& path);
void save_vector_file(const std::string& path, const LabeledVectorSet& set);

struct IicgRow {
    std::string tag;
    double value = 0.0;
    std::size_t n_vectors = 0;
    std::size_t n_groups = 0;
};

// One IICG per tag slice; rows ordered by first appearance of the tag.
std::vector<IicgRow> iicg_by_tag(const LabeledVectorSet& set, bool group_balanced = false, int workers = 0);

}  // namespace covlab
