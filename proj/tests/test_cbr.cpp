#include <doctest.h>

#include "gsg/cbr.hpp"
#include "oracles.hpp"

using namespace gsg;

namespace {

const Rect kDomain{{0, 0}, {1, 1}};

// Moving one bounding edge outward to the next user coordinate (or the
// domain edge) must break Def-3 validity; an edge already on the domain
// cannot move.
bool maximal_by_perturbation(const SocialGraph& g, const Rect& r, UserId v, std::uint32_t c) {
    for (int edge = 0; edge < 4; ++edge) {
        const bool horizontal = edge == 0 || edge == 2;
        const bool positive = edge == 2 || edge == 3;
        double cur = edge == 0 ? r.lo.x : edge == 1 ? r.lo.y : edge == 2 ? r.hi.x : r.hi.y;
        double limit = edge == 0 ? kDomain.lo.x
                     : edge == 1 ? kDomain.lo.y
                     : edge == 2 ? kDomain.hi.x
                                 : kDomain.hi.y;
        if (cur == limit) continue;  // leaving the domain
        double next = limit;
        for (UserId u = 0; u < g.user_count(); ++u) {
            const Point& p = g.location(u);
            double along = horizontal ? p.x : p.y;
            double across = horizontal ? p.y : p.x;
            double a_lo = horizontal ? r.lo.y : r.lo.x;
            double a_hi = horizontal ? r.hi.y : r.hi.x;
            if (!(a_lo < across && across < a_hi)) continue;
            if (positive ? (along > cur && along < next) : (along < cur && along > next))
                next = along;
        }
        Rect moved = r;
        (edge == 0 ? moved.lo.x : edge == 1 ? moved.lo.y : edge == 2 ? moved.hi.x : moved.hi.y) =
            next;
        if (oracle::cbr_valid_by_enumeration(g, moved, v, c)) return false;
    }
    return true;
}

SocialGraph sparse_lbsn(std::size_t n, double p, std::uint64_t seed) {
    return oracle::random_graph(n, p, seed);
}

}  // namespace

TEST_CASE("compute_cbr degenerate cases") {
    SUBCASE("isolated user spans the domain") {
        std::vector<Point> locs{{0.5, 0.5}, {0.2, 0.2}};
        SocialGraph g(std::move(locs), {});
        auto core = core_decompose(g);
        CbrEngine engine(g, core, kDomain);
        CHECK(engine.compute_cbr(0, 1) == kDomain);
        CHECK(engine.compute_cbr(0, 3) == kDomain);
    }
    SUBCASE("c above the core number spans the domain") {
        auto g = sparse_lbsn(12, 0.3, 5);
        auto core = core_decompose(g);
        CbrEngine engine(g, core, kDomain);
        for (UserId v = 0; v < g.user_count(); ++v)
            CHECK(engine.compute_cbr(v, core[v] + 1) == kDomain);
    }
    SUBCASE("one friend, c=1") {
        std::vector<Point> locs{{0.4, 0.5}, {0.6, 0.5}};
        SocialGraph g(std::move(locs), {{0, 1}});
        auto core = core_decompose(g);
        CbrEngine engine(g, core, kDomain);
        Rect r = engine.compute_cbr(0, 1);
        CHECK(r.contains(g.location(0)));
        CHECK(!strictly_inside(g.location(1), r));
        CHECK(oracle::cbr_valid_by_enumeration(g, r, 0, 1));
        CHECK(maximal_by_perturbation(g, r, 0, 1));
    }
}

TEST_CASE("compute_cbr validity and maximality on seeded graphs") {
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 25 && checked < 60; ++seed) {
        auto g = sparse_lbsn(40, 0.08, seed * 13 + 2);
        auto core = core_decompose(g);
        CbrEngine engine(g, core, kDomain);
        for (UserId v = 0; v < g.user_count() && checked < 60; v += 7) {
            for (std::uint32_t c = 1; c <= std::max(1u, core[v]); ++c) {
                Rect r = engine.compute_cbr(v, c);
                CHECK(r.contains(g.location(v)));
                // keep the enumeration oracle tractable
                std::size_t inside = 0;
                for (UserId u = 0; u < g.user_count(); ++u)
                    if (u != v && strictly_inside(g.location(u), r)) ++inside;
                if (inside > 15) continue;
                CHECK(oracle::cbr_valid_by_enumeration(g, r, v, c));
                CHECK(maximal_by_perturbation(g, r, v, c));
                ++checked;
            }
        }
    }
    CHECK(checked >= 40);
}

TEST_CASE("ladder structure and nesting") {
    SUBCASE("core 0 gives an empty ladder") {
        std::vector<Point> locs{{0.5, 0.5}, {0.1, 0.1}};
        SocialGraph g(std::move(locs), {});
        auto core = core_decompose(g);
        CbrEngine engine(g, core, kDomain);
        CHECK(engine.build_ladder(0).levels.empty());
    }
    SUBCASE("levels run to the floor of log2 of the core number") {
        for (std::uint64_t seed = 0; seed < 6; ++seed) {
            auto g = sparse_lbsn(60, 0.12, seed + 50);
            auto core = core_decompose(g);
            CbrEngine engine(g, core, kDomain);
            for (UserId v = 0; v < g.user_count(); v += 5) {
                auto ladder = engine.build_ladder(v);
                if (core[v] == 0) {
                    CHECK(ladder.levels.empty());
                    continue;
                }
                std::uint32_t want = 0;
                while ((2u << want) <= core[v]) ++want;
                CHECK(ladder.levels.size() == want + 1);
                for (std::size_t i = 0; i < ladder.levels.size(); ++i)
                    CHECK(ladder.levels[i].exponent == i);
                // nesting: each rect contained in the next level's rect
                for (std::size_t i = 0; i + 1 < ladder.levels.size(); ++i)
                    CHECK(ladder.levels[i + 1].rect.contains(ladder.levels[i].rect));
                // every level is a valid CBR at its minimum degree
                for (const auto& lvl : ladder.levels) {
                    std::size_t inside = 0;
                    for (UserId u = 0; u < g.user_count(); ++u)
                        if (u != v && strictly_inside(g.location(u), lvl.rect)) ++inside;
                    if (inside <= 15)
                        CHECK(oracle::cbr_valid_by_enumeration(g, lvl.rect, v,
                                                               1u << lvl.exponent));
                }
            }
        }
    }
    SUBCASE("ladder level counts per the examples") {
        // cores 1 and 5 give 1 and 3 levels
        std::vector<Point> locs;
        for (int i = 0; i < 6; ++i)
            locs.push_back({0.4 + 0.02 * i, 0.5});
        std::vector<std::pair<UserId, UserId>> edges;
        for (UserId i = 0; i < 6; ++i)
            for (UserId j = i + 1; j < 6; ++j) edges.emplace_back(i, j);  // K6: cores 5
        SocialGraph g(std::move(locs), edges);
        auto core = core_decompose(g);
        REQUIRE(core[0] == 5);
        CbrEngine engine(g, core, kDomain);
        auto ladder = engine.build_ladder(0);
        REQUIRE(ladder.levels.size() == 3);  // levels 1, 2, 4
        CHECK(ladder.lookup(3) == &ladder.levels[1].rect);
        CHECK(ladder.lookup(1) == &ladder.levels[0].rect);
        CHECK(ladder.lookup(4) == &ladder.levels[2].rect);
        CHECK(ladder.lookup(8) == nullptr);
    }
}

TEST_CASE("combine_entry_cbr") {
    SUBCASE("single child returns its rect") {
        std::vector<MbrCbr> kids{{Rect{{0.1, 0.1}, {0.2, 0.2}}, Rect{{0, 0}, {0.5, 0.5}}}};
        CHECK(combine_entry_cbr(kids, Rect{{0.1, 0.1}, {0.2, 0.2}}) == kids[0].cbr);
    }
    SUBCASE("disjoint child MBR keeps the accumulator") {
        std::vector<MbrCbr> kids{
            {Rect{{0.1, 0.1}, {0.2, 0.2}}, Rect{{0, 0}, {0.3, 0.3}}},
            {Rect{{0.8, 0.8}, {0.9, 0.9}}, Rect{{0.7, 0.7}, {1, 1}}},  // MBR misses acc
        };
        Rect mbr{{0.1, 0.1}, {0.9, 0.9}};
        CHECK(combine_entry_cbr(kids, mbr) == Rect{{0, 0}, {0.3, 0.3}});
    }
    SUBCASE("overlapping children intersect") {
        std::vector<MbrCbr> kids{
            {Rect{{0.45, 0.45}, {0.5, 0.5}}, Rect{{0, 0}, {0.6, 0.6}}},
            {Rect{{0.5, 0.5}, {0.55, 0.55}}, Rect{{0.4, 0.4}, {1, 1}}},
        };
        Rect mbr{{0.45, 0.45}, {0.55, 0.55}};
        CHECK(combine_entry_cbr(kids, mbr) == Rect{{0.4, 0.4}, {0.6, 0.6}});
    }
    SUBCASE("fold losing the MBR collapses to a boundary point") {
        std::vector<MbrCbr> kids{
            {Rect{{0.4, 0.4}, {0.6, 0.6}}, Rect{{0.0, 0.0}, {0.1, 0.1}}},
        };
        Rect mbr{{0.4, 0.4}, {0.6, 0.6}};
        Rect out = combine_entry_cbr(kids, mbr);
        CHECK(out.area() == 0.0);
        CHECK(out.lo == out.hi);
        CHECK(mbr.contains(out.lo));
        CHECK(!strictly_inside(out.lo, mbr));  // sits on the boundary
    }
}

TEST_CASE("cbr_count_bound") {
    SUBCASE("matching graph, all cores 1, s=2") {
        std::vector<Point> locs(8);
        for (int i = 0; i < 8; ++i) locs[i] = {0.1 * (i + 1), 0.5};
        SocialGraph g(std::move(locs), {{0, 1}, {2, 3}, {4, 5}, {6, 7}});
        auto core = core_decompose(g);
        CHECK(cbr_count_bound(g, core, 2) == 16);  // 2n
    }
    SUBCASE("edgeless graph is skipped") {
        std::vector<Point> locs(4, Point{0.5, 0.5});
        SocialGraph g(std::move(locs), {});
        auto core = core_decompose(g);
        CHECK(cbr_count_bound(g, core, 2) == 0);
    }
}

TEST_CASE("expand keeps a valid rect valid") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        auto g = sparse_lbsn(35, 0.1, seed + 900);
        auto core = core_decompose(g);
        CbrEngine engine(g, core, kDomain);
        for (UserId v = 0; v < g.user_count(); v += 9) {
            if (core[v] == 0) continue;
            Rect start = Rect::point_rect(g.location(v));
            Rect r = engine.expand(start, v, 1);
            CHECK(r.contains(g.location(v)));
            std::size_t inside = 0;
            for (UserId u = 0; u < g.user_count(); ++u)
                if (u != v && strictly_inside(g.location(u), r)) ++inside;
            if (inside <= 15) CHECK(oracle::cbr_valid_by_enumeration(g, r, v, 1));
        }
    }
}
