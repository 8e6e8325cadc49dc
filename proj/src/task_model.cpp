#include "covlab/task_model.hpp"

#include <algorithm>
#include <cmath>

namespace covlab {

namespace {

constexpr std::size_t kMaxDomainSize = std::size_t{1} << 26;

std::size_t pow_size(std::uint32_t vocab, int arity) {
    std::size_t size = 1;
    for (int i = 0; i < arity; ++i) {
        if (size > kMaxDomainSize / vocab)
            throw Error(ErrorKind::capacity,
                        "primitive domain |X|^" + std::to_string(arity) + " exceeds the supported size");
        size *= vocab;
    }
    return size;
}

}  // namespace

CompositionStructure::CompositionStructure(std::string name, int n_inputs, std::vector<NodeSpec> nodes,
                                           int output_node)
    : name_(std::move(name)), n_inputs_(n_inputs), nodes_(std::move(nodes)), output_node_(output_node) {
    if (n_inputs_ < 1) throw Error(ErrorKind::data, "structure needs at least one input position");
    if (nodes_.empty()) throw Error(ErrorKind::data, "structure needs at least one node");
    if (output_node_ != static_cast<int>(nodes_.size()) - 1)
        throw Error(ErrorKind::data, "output node must be the last node in topological order");
    for (std::size_t j = 0; j < nodes_.size(); ++j) {
        if (nodes_[j].args.empty()) throw Error(ErrorKind::data, "node with no arguments");
        for (const ArgRef& a : nodes_[j].args) {
            if (a.kind == ArgRef::Kind::input) {
                if (a.index < 0 || a.index >= n_inputs_)
                    throw Error(ErrorKind::data, "argument references input position out of range");
            } else {
                if (a.index < 0 || a.index >= static_cast<int>(j))
                    throw Error(ErrorKind::data, "argument must reference a strictly earlier node");
            }
        }
    }
}

CompositionStructure CompositionStructure::two_hop() {
    return CompositionStructure("2hop", 3,
                                {NodeSpec{{ArgRef::in(0), ArgRef::in(1)}},
                                 NodeSpec{{ArgRef::nd(0), ArgRef::in(2)}}},
                                1);
}

CompositionStructure CompositionStructure::parallel_two_hop() {
    return CompositionStructure("parallel2hop", 4,
                                {NodeSpec{{ArgRef::in(0), ArgRef::in(1)}},
                                 NodeSpec{{ArgRef::in(2), ArgRef::in(3)}},
                                 NodeSpec{{ArgRef::nd(0), ArgRef::nd(1)}}},
                                2);
}

CompositionStructure CompositionStructure::three_hop() {
    return CompositionStructure("3hop", 4,
                                {NodeSpec{{ArgRef::in(0), ArgRef::in(1)}},
                                 NodeSpec{{ArgRef::nd(0), ArgRef::in(2)}},
                                 NodeSpec{{ArgRef::nd(1), ArgRef::in(3)}}},
                                2);
}

CompositionStructure CompositionStructure::non_tree() {
    // x2 reaches the output twice: through f1 and directly as an f2 argument.
    return CompositionStructure("nontree", 3,
                                {NodeSpec{{ArgRef::in(0), ArgRef::in(1)}},
                                 NodeSpec{{ArgRef::nd(0), ArgRef::in(1), ArgRef::in(2)}}},
                                1);
}

CompositionStructure CompositionStructure::hop_chain(int hops) {
    if (hops < 2) throw Error(ErrorKind::usage, "hop chains need at least 2 hops");
    std::vector<NodeSpec> nodes;
    nodes.push_back(NodeSpec{{ArgRef::in(0), ArgRef::in(1)}});
    for (int h = 1; h < hops; ++h) nodes.push_back(NodeSpec{{ArgRef::nd(h - 1), ArgRef::in(h + 1)}});
    return CompositionStructure(std::to_string(hops) + "hop", hops + 1, std::move(nodes), hops - 1);
}

CompositionStructure CompositionStructure::from_name(const std::string& name) {
    if (name == "2hop") return two_hop();
    if (name == "parallel2hop") return parallel_two_hop();
    if (name == "3hop") return three_hop();
    if (name == "nontree") return non_tree();
    if (name.rfind("hop:", 0) == 0) {
        int h = 0;
        try {
            h = std::stoi(name.substr(4));
        } catch (...) {
            throw Error(ErrorKind::usage, "bad hop count in task name '" + name + "'");
        }
        return hop_chain(h);
    }
    throw Error(ErrorKind::usage, "unknown task '" + name +
                                      "' (expected 2hop, parallel2hop, 3hop, nontree, or hop:N)");
}

std::string CompositionStructure::id() const {
    if (name_ == "2hop" || name_ == "parallel2hop" || name_ == "3hop" || name_ == "nontree" ||
        (name_.size() > 3 && name_.substr(name_.size() - 3) == "hop"))
        return name_;
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
        h ^= v;
        h *= 1099511628211ULL;
    };
    mix(static_cast<std::uint64_t>(n_inputs_));
    for (const NodeSpec& n : nodes_) {
        mix(0x6eULL);
        for (const ArgRef& a : n.args) {
            mix(a.kind == ArgRef::Kind::input ? 0x69ULL : 0x64ULL);
            mix(static_cast<std::uint64_t>(a.index));
        }
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "dag-%016llx", static_cast<unsigned long long>(h));
    return buf;
}

PrimitiveTable::PrimitiveTable(int arity, std::uint32_t vocab, std::vector<TokenId> table,
                               std::vector<std::uint8_t> seen)
    : arity_(arity), vocab_(vocab), table_(std::move(table)), seen_(std::move(seen)) {
    if (arity_ < 1) throw Error(ErrorKind::data, "primitive arity must be >= 1");
    if (vocab_ < 2) throw Error(ErrorKind::data, "primitive vocab must be >= 2");
    const std::size_t expect = pow_size(vocab_, arity_);
    if (table_.size() != expect || seen_.size() != expect)
        throw Error(ErrorKind::data, "primitive table/seen mask size does not match vocab^arity");
    for (TokenId t : table_)
        if (t >= vocab_) throw Error(ErrorKind::data, "primitive table entry outside the token set");
}

std::size_t PrimitiveTable::flat_index(std::span<const TokenId> args) const {
    if (static_cast<int>(args.size()) != arity_)
        throw Error(ErrorKind::data, "arity mismatch: primitive expects " + std::to_string(arity_) +
                                         " arguments, got " + std::to_string(args.size()));
    std::size_t flat = 0;
    for (TokenId a : args) {
        if (a >= vocab_) throw Error(ErrorKind::data, "token id outside the token set");
        flat = flat * vocab_ + a;
    }
    return flat;
}

std::size_t PrimitiveTable::seen_count() const {
    std::size_t c = 0;
    for (std::uint8_t b : seen_) c += b;
    return c;
}

void PrimitiveTable::sample_seen_mask(double p_seen, Prng& rng) {
    if (p_seen < 0.0 || p_seen > 1.0) throw Error(ErrorKind::usage, "p_seen must lie in [0, 1]");
    const std::size_t n = seen_.size();
    const std::size_t want = static_cast<std::size_t>(std::llround(p_seen * static_cast<double>(n)));
    std::vector<std::uint32_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
    std::fill(seen_.begin(), seen_.end(), 0);
    for (std::size_t i = 0; i < want; ++i) {
        const std::size_t j = i + rng.uniform_below(n - i);
        std::swap(idx[i], idx[j]);
        seen_[idx[i]] = 1;
    }
}

PrimitiveTable make_random_primitive(int arity, std::uint32_t vocab, Prng& rng) {
    if (arity < 1) throw Error(ErrorKind::usage, "arity must be >= 1");
    if (vocab < 2) throw Error(ErrorKind::usage, "vocab must be >= 2");
    const std::size_t n = pow_size(vocab, arity);
    std::vector<TokenId> table(n);
    for (std::size_t i = 0; i < n; ++i) table[i] = static_cast<TokenId>(rng.uniform_below(vocab));
    return PrimitiveTable(arity, vocab, std::move(table), std::vector<std::uint8_t>(n, 1));
}

PrimitiveTable make_random_primitive(int arity, std::uint32_t vocab, std::uint64_t seed) {
    Prng rng(seed);
    return make_random_primitive(arity, vocab, rng);
}

PrimitiveTable make_balanced_primitive(std::uint32_t vocab, Prng& rng) {
    if (vocab < 2) throw Error(ErrorKind::usage, "vocab must be >= 2");
    const std::size_t n = pow_size(vocab, 2);
    std::vector<std::uint32_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 1; i < n; ++i) {
        const std::size_t j = rng.uniform_below(i + 1);
        std::swap(perm[i], perm[j]);
    }
    std::vector<TokenId> table(n);
    for (std::size_t i = 0; i < n; ++i) table[perm[i]] = static_cast<TokenId>(i / vocab);
    return PrimitiveTable(2, vocab, std::move(table), std::vector<std::uint8_t>(n, 1));
}

PrimitiveTable make_balanced_primitive(std::uint32_t vocab, std::uint64_t seed) {
    Prng rng(seed);
    return make_balanced_primitive(vocab, rng);
}

EvalResult evaluate(const CompositionStructure& structure, std::span<const PrimitiveTable> primitives,
                    std::span<const TokenId> input) {
    if (static_cast<int>(input.size()) != structure.n_inputs())
        throw Error(ErrorKind::data, "input length " + std::to_string(input.size()) +
                                         " does not match structure inputs " +
                                         std::to_string(structure.n_inputs()));
    if (primitives.size() != structure.nodes().size())
        throw Error(ErrorKind::data, "structure needs one primitive per node");

    std::vector<TokenId> values(structure.nodes().size());
    std::vector<TokenId> args;
    for (std::size_t j = 0; j < structure.nodes().size(); ++j) {
        const NodeSpec& node = structure.nodes()[j];
        if (primitives[j].arity() != node.arity())
            throw Error(ErrorKind::data, "node " + std::to_string(j) + " arity " +
                                             std::to_string(node.arity()) + " does not match primitive arity " +
                                             std::to_string(primitives[j].arity()));
        args.clear();
        for (const ArgRef& a : node.args)
            args.push_back(a.kind == ArgRef::Kind::input ? input[a.index] : values[a.index]);
        values[j] = primitives[j].apply(args);
    }

    EvalResult result;
    result.output = values[structure.output_node()];
    result.intermediates.assign(values.begin(), values.end() - 1);
    return result;
}

void node_applications(const CompositionStructure& structure, std::span<const PrimitiveTable> primitives,
                       std::span<const TokenId> input, std::vector<std::size_t>& out_flats) {
    out_flats.clear();
    std::vector<TokenId> values(structure.nodes().size());
    std::vector<TokenId> args;
    for (std::size_t j = 0; j < structure.nodes().size(); ++j) {
        const NodeSpec& node = structure.nodes()[j];
        args.clear();
        for (const ArgRef& a : node.args)
            args.push_back(a.kind == ArgRef::Kind::input ? input[a.index] : values[a.index]);
        const std::size_t flat = primitives[j].flat_index(args);
        out_flats.push_back(flat);
        values[j] = primitives[j].apply_flat(flat);
    }
}

}  // namespace covlab
