#include <algorithm>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "s4c/errors.hpp"
#include "s4c/rng.hpp"
#include "s4c/tree.hpp"

using namespace s4c;

namespace {

DraftTree make_tree(const std::vector<std::pair<int, NodeKind>>& parents) {
    DraftTree t;
    t.root_token = 1;
    t.contexts.push_back({ProbDist(std::vector<double>{1.0}), {}});
    for (size_t i = 0; i < parents.size(); ++i) {
        TreeNode n;
        n.token = static_cast<int>(i) + 10;
        n.parent = parents[i].first;
        n.depth = n.parent < 0 ? 1 : t.nodes[static_cast<size_t>(n.parent)].depth + 1;
        n.draft_prob = 0.5;
        n.kind = parents[i].second;
        n.ctx = 0;
        t.nodes.push_back(n);
    }
    return t;
}

constexpr auto V = NodeKind::vertical_top1;
constexpr auto H = NodeKind::horizontal_alt;

// Random topologically ordered tree; parents drawn among earlier vertical nodes.
DraftTree random_tree(Rng& rng, int max_nodes) {
    int n = 1 + static_cast<int>(rng.next_u64() % static_cast<uint64_t>(max_nodes));
    std::vector<std::pair<int, NodeKind>> parents;
    std::vector<int> verticals;  // indices usable as parents
    for (int i = 0; i < n; ++i) {
        int parent = -1;
        if (!verticals.empty() && rng.uniform() < 0.75)
            parent = verticals[static_cast<size_t>(rng.next_u64() % verticals.size())];
        NodeKind kind = rng.uniform() < 0.6 ? V : H;
        parents.push_back({parent, kind});
        if (kind == V) verticals.push_back(i);
    }
    return make_tree(parents);
}

} // namespace

TEST_CASE("flatten: chain gives causal mask and increasing positions") {
    DraftTree t = make_tree({{-1, V}, {0, V}, {1, V}});
    FlatTree f = flatten(t, 5);
    CHECK(f.positions == std::vector<int>{5, 6, 7});
    for (size_t i = 0; i < 3; ++i)
        for (size_t j = 0; j < 3; ++j) CHECK(f.mask.at(i, j) == (j <= i));
}

TEST_CASE("flatten: single node") {
    DraftTree t = make_tree({{-1, V}});
    FlatTree f = flatten(t, 9);
    CHECK(f.tokens.size() == 1);
    CHECK(f.positions[0] == 9);
    CHECK(f.mask.at(0, 0));
    CHECK_THROWS_AS(flatten(t, 0), ArgError);
}

TEST_CASE("flatten: siblings share a position and cannot see each other") {
    DraftTree t = make_tree({{-1, V}, {-1, H}});
    FlatTree f = flatten(t, 3);
    CHECK(f.positions[0] == f.positions[1]);
    CHECK(!f.mask.at(0, 1));
    CHECK(!f.mask.at(1, 0));
    CHECK(f.mask.at(0, 0));
    CHECK(f.mask.at(1, 1));
}

TEST_CASE("build_mask: equals parent-walk ancestor closure on random trees") {
    Rng rng(1234, 77);
    for (int trial = 0; trial < 1000; ++trial) {
        DraftTree t = random_tree(rng, 64);
        TreeMask m = build_mask(t);
        const size_t n = t.nodes.size();
        for (size_t i = 0; i < n; ++i) {
            // ancestor-or-self set via explicit parent walk
            std::vector<uint8_t> anc(n, 0);
            int cur = static_cast<int>(i);
            while (cur >= 0) {
                anc[static_cast<size_t>(cur)] = 1;
                cur = t.nodes[static_cast<size_t>(cur)].parent;
            }
            for (size_t j = 0; j < n; ++j) REQUIRE(m.at(i, j) == (anc[j] != 0));
        }
    }
}

TEST_CASE("validate: rejects malformed structures") {
    SUBCASE("parent at or after itself") {
        DraftTree t = make_tree({{-1, V}});
        t.nodes[0].parent = 0;
        CHECK_THROWS_AS(t.validate(), StructureError);
    }
    SUBCASE("root child depth must be 1") {
        DraftTree t = make_tree({{-1, V}});
        t.nodes[0].depth = 2;
        CHECK_THROWS_AS(t.validate(), StructureError);
    }
    SUBCASE("depth must be parent depth + 1") {
        DraftTree t = make_tree({{-1, V}, {0, V}});
        t.nodes[1].depth = 3;
        CHECK_THROWS_AS(t.validate(), StructureError);
    }
    SUBCASE("horizontal alternatives are terminal") {
        DraftTree t = make_tree({{-1, H}, {0, V}});
        CHECK_THROWS_AS(t.validate(), StructureError);
    }
    SUBCASE("draft probability must be in (0, 1]") {
        DraftTree t = make_tree({{-1, V}});
        t.nodes[0].draft_prob = 0.0;
        CHECK_THROWS_AS(t.validate(), StructureError);
    }
    SUBCASE("context index must be in range") {
        DraftTree t = make_tree({{-1, V}});
        t.nodes[0].ctx = 3;
        CHECK_THROWS_AS(t.validate(), StructureError);
    }
}

TEST_CASE("longest_accepted_path: chain fully accepted") {
    DraftTree t = make_tree({{-1, V}, {0, V}, {1, V}, {2, V}, {3, V}});
    std::vector<uint8_t> acc(5, 1);
    CHECK(longest_accepted_path(t, acc) == std::vector<int>{0, 1, 2, 3, 4});
}

TEST_CASE("longest_accepted_path: all rejected gives empty path") {
    DraftTree t = make_tree({{-1, V}, {0, V}});
    std::vector<uint8_t> acc(2, 0);
    CHECK(longest_accepted_path(t, acc).empty());
}

TEST_CASE("longest_accepted_path: routes through an accepted sibling") {
    // node 0 chain root, node 1 its vertical child (rejected), node 2 horizontal
    // sibling of 1 (accepted): path must route 0 -> 2
    DraftTree t = make_tree({{-1, V}, {0, V}, {0, H}});
    std::vector<uint8_t> acc{1, 0, 1};
    CHECK(longest_accepted_path(t, acc) == std::vector<int>{0, 2});
}

TEST_CASE("longest_accepted_path: equals exhaustive search on random trees") {
    Rng rng(777, 3);
    for (int trial = 0; trial < 300; ++trial) {
        DraftTree t = random_tree(rng, 24);
        std::vector<uint8_t> acc(t.nodes.size());
        for (auto& a : acc) a = rng.uniform() < 0.6 ? 1 : 0;
        std::vector<int> got = longest_accepted_path(t, acc);

        // brute force: longest all-accepted root path by DFS over every path
        auto kids = t.children();
        size_t best_len = 0;
        std::vector<int> cur;
        auto dfs = [&](auto&& self, int node) -> void {
            cur.push_back(node);
            best_len = std::max(best_len, cur.size());
            for (int c : kids[static_cast<size_t>(node)])
                if (acc[static_cast<size_t>(c)]) self(self, c);
            cur.pop_back();
        };
        for (int r : t.root_children())
            if (acc[static_cast<size_t>(r)]) dfs(dfs, r);

        REQUIRE(got.size() == best_len);
        // prefix closure: every node on the returned path is accepted and chained
        for (size_t i = 0; i < got.size(); ++i) {
            REQUIRE(acc[static_cast<size_t>(got[i])] == 1);
            int want_parent = i == 0 ? -1 : got[i - 1];
            REQUIRE(t.nodes[static_cast<size_t>(got[i])].parent == want_parent);
        }
    }
}

TEST_CASE("longest_accepted_path: tie prefers vertical then lower index") {
    // two accepted root children of equal subtree length; vertical wins
    DraftTree t = make_tree({{-1, H}, {-1, V}});
    std::vector<uint8_t> acc{1, 1};
    CHECK(longest_accepted_path(t, acc) == std::vector<int>{1});
}

TEST_CASE("dump_tree_json: parseable and deterministic") {
    DraftTree t = make_tree({{-1, V}, {0, V}, {0, H}});
    std::string a = dump_tree_json(t);
    std::string b = dump_tree_json(t);
    CHECK(a == b);
    auto j = nlohmann::json::parse(a);
    REQUIRE(j.contains("nodes"));
    CHECK(j["nodes"].size() == 3);
    CHECK(j["root_token"].get<int>() == 1);
}
