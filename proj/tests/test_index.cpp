#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "gsg/index.hpp"
#include "oracles.hpp"

using namespace gsg;

namespace {

const Rect kDomain{{0, 0}, {1, 1}};

// Canonical structural form: preorder list of (leaf flag, entry count,
// leaf user ids, MBRs) without page ids.
std::string topology_signature(const Index& idx) {
    std::string sig;
    PageCounters pc;
    std::vector<std::uint64_t> stack{idx.root_page()};
    while (!stack.empty()) {
        std::uint64_t pid = stack.back();
        stack.pop_back();
        IndexNode node = idx.read_node(pid, pc);
        sig += node.leaf ? "L" : "I";
        sig += std::to_string(node.entries.size());
        for (const EntryMeta& e : node.entries) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "[%s%.17g,%.17g,%.17g,%.17g]",
                          node.leaf ? std::to_string(e.child).c_str() : "",
                          e.mbr.lo.x, e.mbr.lo.y, e.mbr.hi.x, e.mbr.hi.y);
            sig += buf;
            if (!node.leaf) stack.push_back(e.child);
        }
    }
    return sig;
}

void collect_subtree_users(const Index& idx, std::uint64_t page, std::vector<UserId>& out) {
    PageCounters pc;
    IndexNode node = idx.read_node(page, pc);
    for (const EntryMeta& e : node.entries) {
        if (node.leaf)
            out.push_back(static_cast<UserId>(e.child));
        else
            collect_subtree_users(idx, e.child, out);
    }
}

}  // namespace

TEST_CASE("build rejects tiny pages and empty graphs") {
    auto g = oracle::random_graph(10, 0.3, 1);
    auto core = core_decompose(g);
    CHECK_THROWS_AS(Index::build(g, core, IndexKind::BR, 60), std::runtime_error);
    SocialGraph empty;
    auto ecore = core_decompose(empty);
    CHECK_THROWS_AS(Index::build(empty, ecore, IndexKind::BR, 4096), std::invalid_argument);
}

TEST_CASE("single user gives a root leaf") {
    std::vector<Point> locs{{0.3, 0.7}};
    SocialGraph g(std::move(locs), {});
    auto core = core_decompose(g);
    auto idx = Index::build(g, core, IndexKind::SAR, 4096);
    PageCounters pc;
    IndexNode root = idx.read_node(idx.root_page(), pc);
    CHECK(root.leaf);
    CHECK(root.entries.size() == 1);
    CHECK(root.entries[0].child == 0);
}

TEST_CASE("BR, CR and SAR share the spatial topology") {
    auto g = oracle::random_graph(300, 0.02, 7);
    auto core = core_decompose(g);
    auto br = Index::build(g, core, IndexKind::BR, 512);
    auto cr = Index::build(g, core, IndexKind::CR, 512);
    auto sar = Index::build(g, core, IndexKind::SAR, 512);
    std::string sig = topology_signature(br);
    CHECK(topology_signature(cr) == sig);
    CHECK(topology_signature(sar) == sig);
    bool cr_has_core = false;
    cr.for_each_entry([&](const IndexNode&, const EntryMeta& e) {
        if (e.core_number > 0) cr_has_core = true;
        CHECK(e.cbrs.levels.empty());
    });
    CHECK(cr_has_core);
    br.for_each_entry([&](const IndexNode&, const EntryMeta& e) {
        CHECK(e.core_number == 0);
        CHECK(e.cbrs.levels.empty());
    });
}

TEST_CASE("tree invariants hold for every kind") {
    auto g = oracle::random_graph(400, 0.015, 11);
    auto core = core_decompose(g);
    for (IndexKind kind : {IndexKind::BR, IndexKind::CR, IndexKind::SAR, IndexKind::SARSTAR}) {
        auto idx = Index::build(g, core, kind, 512);
        PageCounters pc;
        std::vector<std::uint64_t> stack{idx.root_page()};
        while (!stack.empty()) {
            std::uint64_t pid = stack.back();
            stack.pop_back();
            IndexNode node = idx.read_node(pid, pc);
            if (pid != idx.root_page())
                CHECK(node.entries.size() >= idx.min_fanout());
            CHECK(node.entries.size() <= idx.fanout());
            for (const EntryMeta& e : node.entries) {
                std::vector<UserId> covered;
                if (node.leaf)
                    covered.push_back(static_cast<UserId>(e.child));
                else
                    collect_subtree_users(idx, e.child, covered);
                std::uint32_t want_core = 0;
                for (UserId u : covered) {
                    CHECK(e.mbr.contains(g.location(u)));
                    want_core = std::max(want_core, core[u]);
                }
                if (kind != IndexKind::BR) CHECK(e.core_number == want_core);
                if (!node.leaf) stack.push_back(e.child);
            }
        }
        std::vector<UserId> all;
        collect_subtree_users(idx, idx.root_page(), all);
        std::sort(all.begin(), all.end());
        CHECK(all.size() == g.user_count());
        CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
    }
}

TEST_CASE("stored entry ladders satisfy the bounding-rect definition") {
    auto g = oracle::random_graph(60, 0.08, 3);
    auto core = core_decompose(g);
    auto idx = Index::build(g, core, IndexKind::SAR, 256);
    PageCounters pc;
    std::vector<std::uint64_t> stack{idx.root_page()};
    int checked = 0;
    while (!stack.empty()) {
        std::uint64_t pid = stack.back();
        stack.pop_back();
        IndexNode node = idx.read_node(pid, pc);
        for (const EntryMeta& e : node.entries) {
            std::vector<UserId> covered;
            if (node.leaf)
                covered.push_back(static_cast<UserId>(e.child));
            else {
                collect_subtree_users(idx, e.child, covered);
                stack.push_back(e.child);
            }
            std::sort(covered.begin(), covered.end());
            for (const CbrLevel& lvl : e.cbrs.levels) {
                CHECK(lvl.rect.intersects(e.mbr));
                std::size_t inside = 0;
                for (UserId u = 0; u < g.user_count(); ++u)
                    if (strictly_inside(g.location(u), lvl.rect)) ++inside;
                if (inside > 15) continue;
                CHECK(oracle::entry_cbr_valid_by_enumeration(g, lvl.rect, covered,
                                                             1u << lvl.exponent));
                ++checked;
            }
        }
    }
    CHECK(checked > 20);
}

TEST_CASE("stored CBR count stays under the diagnostic bound") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        auto g = oracle::random_graph(250, 0.025, seed + 40);
        auto core = core_decompose(g);
        for (std::uint32_t page : {512u, 4096u}) {
            auto sar = Index::build(g, core, IndexKind::SAR, page);
            auto bound = cbr_count_bound(g, core, sar.min_fanout());
            CHECK(sar.stored_cbr_count() <= static_cast<std::uint64_t>(bound));
        }
    }
}

TEST_CASE("clustering cost") {
    SUBCASE("singleton group costs nothing") {
        auto g = oracle::random_graph(30, 0.15, 21);
        auto core = core_decompose(g);
        CbrEngine engine(g, core, kDomain);
        std::vector<CbrLadder> ladders(g.user_count());
        for (UserId v = 0; v < g.user_count(); ++v) ladders[v] = engine.build_ladder(v);
        for (UserId v = 0; v < 5; ++v)
            CHECK(clustering_cost(g, VertexSet{v}, ladders, kDomain) == 0.0);
    }
    SUBCASE("hand-evaluated two-user group") {
        std::vector<Point> locs{{0.2, 0.2}, {0.4, 0.4}};
        SocialGraph g2(std::move(locs), {{0, 1}});
        std::vector<CbrLadder> lad(2);
        lad[0].owner_core = 1;
        lad[0].levels = {{0, Rect{{0.0, 0.0}, {0.5, 0.5}}}};
        lad[1].owner_core = 1;
        lad[1].levels = {{0, Rect{{0.1, 0.1}, {0.8, 0.8}}}};
        double union_a = 0.25 + 0.49 - 0.16;
        double combined_a = 0.4 * 0.4;
        double mbr_a = 0.2 * 0.2;
        double expect = mbr_a * (union_a - combined_a);
        CHECK(clustering_cost(g2, VertexSet{0, 1}, lad, kDomain) ==
              doctest::Approx(expect).epsilon(1e-12));
    }
    SUBCASE("identical rects at every level cost nothing") {
        std::vector<Point> locs{{0.3, 0.3}, {0.31, 0.3}};
        SocialGraph g2(std::move(locs), {{0, 1}});
        std::vector<CbrLadder> lad(2);
        for (auto& l : lad) {
            l.owner_core = 1;
            l.levels = {{0, Rect{{0.2, 0.2}, {0.6, 0.6}}}};
        }
        CHECK(clustering_cost(g2, VertexSet{0, 1}, lad, kDomain) == doctest::Approx(0.0));
    }
}

TEST_CASE("union_area matches inclusion-exclusion on pairs") {
    oracle::Rng rng(77);
    for (int i = 0; i < 200; ++i) {
        Rect a{{rng.uniform() * 0.6, rng.uniform() * 0.6}, {0, 0}};
        a.hi = {a.lo.x + rng.uniform() * 0.4, a.lo.y + rng.uniform() * 0.4};
        Rect b{{rng.uniform() * 0.6, rng.uniform() * 0.6}, {0, 0}};
        b.hi = {b.lo.x + rng.uniform() * 0.4, b.lo.y + rng.uniform() * 0.4};
        double inter = 0;
        if (auto is = rect_intersection(a, b)) inter = is->area();
        CHECK(union_area({a, b}) ==
              doctest::Approx(a.area() + b.area() - inter).epsilon(1e-12));
    }
}

TEST_CASE("save and load round-trip byte-identically") {
    auto g = oracle::random_graph(150, 0.04, 9);
    auto core = core_decompose(g);
    std::string dir1 = "idx_rt_a", dir2 = "idx_rt_b";
    for (IndexKind kind : {IndexKind::BR, IndexKind::SAR, IndexKind::SARSTAR}) {
        auto idx = Index::build(g, core, kind, 512);
        idx.save(dir1);
        auto loaded = Index::load(dir1);
        loaded.save(dir2);
        for (const char* f : {"/meta", "/pages.bin", "/users.bin", "/adj.bin"}) {
            std::ifstream a(dir1 + f, std::ios::binary), b(dir2 + f, std::ios::binary);
            std::string sa((std::istreambuf_iterator<char>(a)), {});
            std::string sb((std::istreambuf_iterator<char>(b)), {});
            CHECK(sa == sb);
        }
        CHECK(topology_signature(idx) == topology_signature(loaded));
        CHECK(loaded.kind() == kind);
    }
    std::filesystem::remove_all(dir1);
    std::filesystem::remove_all(dir2);
}

TEST_CASE("page counters and read errors") {
    auto g = oracle::random_graph(400, 0.03, 13);
    auto core = core_decompose(g);
    auto sar = Index::build(g, core, IndexKind::SAR, 512);
    auto br = Index::build(g, core, IndexKind::BR, 512);

    SUBCASE("no cache: reading the root twice counts twice") {
        PageCounters pc;
        sar.read_node(sar.root_page(), pc);
        sar.read_node(sar.root_page(), pc);
        CHECK(pc.index_pages == 2);
    }
    SUBCASE("BR nodes never touch coupled pages") {
        PageCounters pc;
        std::vector<std::uint64_t> stack{br.root_page()};
        while (!stack.empty()) {
            IndexNode node = br.read_node(stack.back(), pc);
            stack.pop_back();
            if (!node.leaf)
                for (const EntryMeta& e : node.entries) stack.push_back(e.child);
        }
        CHECK(pc.coupled_pages == 0);
        CHECK(pc.index_pages > 0);
    }
    SUBCASE("ladder-heavy nodes spill into coupled pages") {
        std::uint64_t total_coupled = 0;
        std::vector<std::uint64_t> stack{sar.root_page()};
        while (!stack.empty()) {
            PageCounters one;
            IndexNode node = sar.read_node(stack.back(), one);
            stack.pop_back();
            total_coupled += one.coupled_pages;
            if (!node.leaf)
                for (const EntryMeta& e : node.entries) stack.push_back(e.child);
        }
        CHECK(total_coupled > 0);
    }
    SUBCASE("unknown ids fail") {
        PageCounters pc;
        CHECK_THROWS_AS(sar.read_node(0, pc), std::invalid_argument);
        CHECK_THROWS_AS(sar.read_node(999999, pc), std::invalid_argument);
        CHECK_THROWS_AS(sar.read_user(static_cast<UserId>(g.user_count() + 5), pc),
                        std::invalid_argument);
    }
    SUBCASE("corrupt page checksums are detected") {
        std::string dir = "idx_corrupt";
        sar.save(dir);
        {
            std::fstream f(dir + "/pages.bin",
                           std::ios::binary | std::ios::in | std::ios::out);
            f.seekp(static_cast<std::streamoff>(sar.root_page() * sar.page_size() + 100));
            char junk = 0x5A;
            f.write(&junk, 1);
        }
        // loading decodes every page, so corruption surfaces immediately
        CHECK_THROWS_WITH_AS(Index::load(dir), doctest::Contains("checksum"),
                             std::runtime_error);
        std::filesystem::remove_all(dir);
    }
    SUBCASE("read_user counts slot and adjacency pages") {
        PageCounters pc;
        UserRecord rec = sar.read_user(0, pc);
        CHECK(rec.location == g.location(0));
        CHECK(std::equal(rec.neighbors.begin(), rec.neighbors.end(), g.neighbors(0).begin(),
                         g.neighbors(0).end()));
        CHECK(pc.user_pages >= 1);
    }
}

TEST_CASE("relocation keeps the tree consistent") {
    auto g = oracle::random_graph(120, 0.05, 17);
    auto core = core_decompose(g);
    for (IndexKind kind : {IndexKind::SAR, IndexKind::SARSTAR}) {
        auto idx = Index::build(g, core, kind, 512);
        oracle::Rng rng(3);
        SocialGraph moved = g;
        for (int i = 0; i < 40; ++i) {
            UserId v = static_cast<UserId>(rng.below(g.user_count()));
            Point to{rng.uniform(), rng.uniform()};
            moved.set_location(v, to);
            idx.relocate_user(v, to);
        }
        std::vector<UserId> all;
        collect_subtree_users(idx, idx.root_page(), all);
        std::sort(all.begin(), all.end());
        CHECK(all.size() == g.user_count());
        PageCounters pc;
        std::vector<std::uint64_t> stack{idx.root_page()};
        while (!stack.empty()) {
            std::uint64_t pid = stack.back();
            stack.pop_back();
            IndexNode node = idx.read_node(pid, pc);
            if (pid != idx.root_page()) CHECK(node.entries.size() >= idx.min_fanout());
            for (const EntryMeta& e : node.entries) {
                std::vector<UserId> covered;
                if (node.leaf)
                    covered.push_back(static_cast<UserId>(e.child));
                else {
                    collect_subtree_users(idx, e.child, covered);
                    stack.push_back(e.child);
                }
                std::uint32_t want_core = 0;
                for (UserId u : covered) {
                    CHECK(e.mbr.contains(moved.location(u)));
                    want_core = std::max(want_core, core[u]);
                }
                CHECK(e.core_number == want_core);
            }
        }
    }
}
