#include "s4c/tree.hpp"

#include <algorithm>
#include <string>

#include <json.hpp>

#include "s4c/errors.hpp"

namespace s4c {

int DraftTree::max_depth() const {
    int d = 0;
    for (const auto& n : nodes) d = std::max(d, n.depth);
    return d;
}

std::vector<std::vector<int>> DraftTree::children() const {
    std::vector<std::vector<int>> out(nodes.size());
    for (size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].parent >= 0) out[static_cast<size_t>(nodes[i].parent)].push_back(static_cast<int>(i));
    return out;
}

std::vector<int> DraftTree::root_children() const {
    std::vector<int> out;
    for (size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].parent < 0) out.push_back(static_cast<int>(i));
    return out;
}

void DraftTree::validate() const {
    for (size_t i = 0; i < nodes.size(); ++i) {
        const TreeNode& n = nodes[i];
        if (n.parent >= static_cast<int>(i))
            throw StructureError("tree: node " + std::to_string(i) +
                                 " references a parent at or after itself");
        if (n.parent < 0) {
            if (n.depth != 1)
                throw StructureError("tree: root child with depth != 1");
        } else {
            const TreeNode& p = nodes[static_cast<size_t>(n.parent)];
            if (n.depth != p.depth + 1)
                throw StructureError("tree: depth not parent depth + 1 at node " +
                                     std::to_string(i));
            if (p.kind == NodeKind::horizontal_alt)
                throw StructureError("tree: horizontal alternative has children");
        }
        if (!(n.draft_prob > 0.0) || n.draft_prob > 1.0)
            throw StructureError("tree: draft probability outside (0, 1] at node " +
                                 std::to_string(i));
        if (n.ctx < 0 || n.ctx >= static_cast<int>(contexts.size()))
            throw StructureError("tree: bad context index at node " + std::to_string(i));
    }
}

TreeMask build_mask(const DraftTree& tree) {
    tree.validate();
    const size_t n = tree.nodes.size();
    TreeMask m(n);
    for (size_t i = 0; i < n; ++i) {
        // self plus the parent's full visibility row: ancestor closure by construction
        m.set(i, i);
        int p = tree.nodes[i].parent;
        if (p >= 0)
            for (size_t j = 0; j < n; ++j)
                if (m.at(static_cast<size_t>(p), j)) m.set(i, j);
    }
    return m;
}

FlatTree flatten(const DraftTree& tree, int base_pos) {
    if (base_pos < 1) throw ArgError("flatten: base position must be >= 1");
    FlatTree out;
    out.tokens.reserve(tree.nodes.size());
    out.positions.reserve(tree.nodes.size());
    for (const auto& n : tree.nodes) {
        out.tokens.push_back(n.token);
        out.positions.push_back(base_pos + n.depth - 1);
    }
    out.mask = build_mask(tree);
    return out;
}

std::vector<int> longest_accepted_path(const DraftTree& tree,
                                       const std::vector<uint8_t>& accepted) {
    if (accepted.size() != tree.nodes.size())
        throw ShapeError("longest_accepted_path: flag count != node count");
    auto kids = tree.children();

    // Children in tie-break order: vertical chains first, then lower index.
    auto ordered = [&](const std::vector<int>& c) {
        std::vector<int> s = c;
        std::stable_sort(s.begin(), s.end(), [&](int a, int b) {
            bool va = tree.nodes[static_cast<size_t>(a)].kind == NodeKind::vertical_top1;
            bool vb = tree.nodes[static_cast<size_t>(b)].kind == NodeKind::vertical_top1;
            if (va != vb) return va;
            return a < b;
        });
        return s;
    };

    std::vector<int> best;
    std::vector<int> cur;
    auto dfs = [&](auto&& self, int node) -> void {
        cur.push_back(node);
        if (cur.size() > best.size()) best = cur;  // first longest wins (ordered visit)
        for (int c : ordered(kids[static_cast<size_t>(node)]))
            if (accepted[static_cast<size_t>(c)]) self(self, c);
        cur.pop_back();
    };
    for (int r : ordered(tree.root_children()))
        if (accepted[static_cast<size_t>(r)]) dfs(dfs, r);
    return best;
}

std::string dump_tree_json(const DraftTree& tree) {
    nlohmann::json j;
    j["root_token"] = tree.root_token;
    nlohmann::json nodes = nlohmann::json::array();
    for (size_t i = 0; i < tree.nodes.size(); ++i) {
        const TreeNode& n = tree.nodes[i];
        nodes.push_back({{"id", i},
                         {"token", n.token},
                         {"parent", n.parent},
                         {"depth", n.depth},
                         {"draft_prob", n.draft_prob},
                         {"kind", n.kind == NodeKind::vertical_top1 ? "vertical_top1"
                                                                    : "horizontal_alt"},
                         {"sampled", n.sampled}});
    }
    j["nodes"] = nodes;
    return j.dump(2);
}

} // namespace s4c
