#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s4c/tensor.hpp"

namespace s4c {

enum class NodeKind : uint8_t {
    vertical_top1,   // chain node: continues a vertical branch, may have children
    horizontal_alt,  // terminal sibling alternative, never has children
};

struct TreeNode {
    int token = -1;
    int parent = -1;         // -1 = child of the root context
    int depth = 0;           // root children are depth 1
    double draft_prob = 0.0; // mass under the draft distribution at the parent context
    NodeKind kind = NodeKind::vertical_top1;
    bool sampled = false;    // drawn from the draft distribution (vs deterministic pick)
    int ctx = -1;            // index into DraftTree::contexts (the dist it was drawn from)
};

// Distribution (and, for transformer drafters, the feature) at one expansion point.
// Verification needs the full draft distribution to form residuals; chain nodes that
// were expanded further record the feature their children were predicted from.
struct DraftContext {
    ProbDist dist;
    std::vector<double> feature;  // empty for tabular drafters
};

// Candidate tree produced by one draft round. Nodes are stored in topological order
// (every parent precedes its children); flattened order == storage order.
struct DraftTree {
    int root_token = -1;  // t0, the already-committed context token
    std::vector<TreeNode> nodes;
    std::vector<DraftContext> contexts;

    int max_depth() const;
    std::vector<std::vector<int>> children() const;  // children[i] for node i; [-1] bucket first
    std::vector<int> root_children() const;
    void validate() const;  // topological order, parent/depth consistency
};

// Row-major boolean visibility among the new (flattened) tokens: at(i, j) == true
// means token i may attend to token j. Cached positions are always visible and are
// not part of this mask.
struct TreeMask {
    size_t n = 0;
    std::vector<uint8_t> v;

    TreeMask() = default;
    explicit TreeMask(size_t n_) : n(n_), v(n_ * n_, 0) {}
    bool at(size_t i, size_t j) const { return v[i * n + j] != 0; }
    void set(size_t i, size_t j, bool on = true) { v[i * n + j] = on ? 1 : 0; }
};

// Ancestor-or-self visibility mask for the flattened tree. Lower-triangular in
// topological order. Throws StructureError on parent-order violations.
TreeMask build_mask(const DraftTree& tree);

struct FlatTree {
    std::vector<int> tokens;
    std::vector<int> positions;  // base_pos + depth - 1
    TreeMask mask;
};

// Flatten for one masked forward pass. base_pos is the cache length at feed time
// (the root context token already occupies slot base_pos - 1).
FlatTree flatten(const DraftTree& tree, int base_pos);

// Longest root-path through accepted nodes only (every node on the path accepted).
// Returns node indices from depth 1 downward; empty if no root child is accepted.
// Ties prefer vertical_top1 children, then the lowest node index.
std::vector<int> longest_accepted_path(const DraftTree& tree,
                                       const std::vector<uint8_t>& accepted);

// Debug JSON dump (tokens, parents, depths, probabilities, kinds).
std::string dump_tree_json(const DraftTree& tree);

} // namespace s4c
