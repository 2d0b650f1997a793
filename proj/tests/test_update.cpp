#include <doctest.h>

#include <filesystem>

#include "gsg/update.hpp"
#include "oracles.hpp"

using namespace gsg;

namespace {

const Rect kDomain{{0, 0}, {1, 1}};

// Seeded stream of location moves with a slice of social updates.
std::vector<UserUpdate> make_stream(const SocialGraph& g, std::size_t count,
                                    double social_share, std::uint64_t seed) {
    oracle::Rng rng(seed);
    std::vector<UserUpdate> out;
    SocialGraph shadow = g;  // tracks applied edges so updates stay well-formed
    while (out.size() < count) {
        UserUpdate u;
        if (rng.uniform() < social_share) {
            UserId a = static_cast<UserId>(rng.below(g.user_count()));
            UserId b = static_cast<UserId>(rng.below(g.user_count()));
            if (a == b) continue;
            if (!shadow.has_edge(a, b)) {
                u.kind = UserUpdate::Kind::EdgeAdd;
                shadow.add_edge(a, b);
            } else {
                u.kind = UserUpdate::Kind::EdgeRemove;
                shadow.remove_edge(a, b);
            }
            u.subject = a;
            u.other = b;
        } else {
            u.kind = UserUpdate::Kind::LocationMove;
            u.subject = static_cast<UserId>(rng.below(g.user_count()));
            const Point& p = shadow.location(u.subject);
            // mostly local jitter, occasionally a long hop
            double s = rng.uniform() < 0.8 ? 0.05 : 0.5;
            u.new_location = {std::clamp(p.x + s * (rng.uniform() - 0.5), 0.0, 1.0),
                              std::clamp(p.y + s * (rng.uniform() - 0.5), 0.0, 1.0)};
            shadow.set_location(u.subject, u.new_location);
        }
        out.push_back(u);
    }
    return out;
}

QuerySpec range_query(const SocialGraph& g, UserId issuer, double r, std::uint32_t c) {
    const Point& p = g.location(issuer);
    QuerySpec q;
    q.issuer = issuer;
    q.type = ConstraintType::Range;
    q.c = c;
    q.range = {{std::max(0.0, p.x - r / 2), std::max(0.0, p.y - r / 2)},
               {std::min(1.0, p.x + r / 2), std::min(1.0, p.y + r / 2)}};
    return q;
}

}  // namespace

TEST_CASE("update rules") {
    auto g = oracle::random_graph(20, 0.25, 3);
    auto core = core_decompose(g);
    Rect rect{{0.3, 0.3}, {0.7, 0.7}};
    UserId strong = 0;
    for (UserId v = 0; v < g.user_count(); ++v)
        if (core[v] > core[strong]) strong = v;
    REQUIRE(core[strong] >= 1);

    SUBCASE("move into the rect with sufficient core flags") {
        UserUpdate u;
        u.kind = UserUpdate::Kind::LocationMove;
        u.subject = strong;
        u.old_location = {0.1, 0.1};
        u.new_location = {0.5, 0.5};
        CHECK(rule1_flags(u, rect, 1, core));
        CHECK(!rule1_flags(u, rect, core[strong] + 1, core));
    }
    SUBCASE("move entirely outside never flags") {
        UserUpdate u;
        u.kind = UserUpdate::Kind::LocationMove;
        u.subject = strong;
        u.old_location = {0.1, 0.1};
        u.new_location = {0.9, 0.2};
        CHECK(!rule1_flags(u, rect, 1, core));
    }
    SUBCASE("move within the rect never flags") {
        UserUpdate u;
        u.kind = UserUpdate::Kind::LocationMove;
        u.subject = strong;
        u.old_location = {0.4, 0.4};
        u.new_location = {0.6, 0.6};
        CHECK(!rule1_flags(u, rect, 1, core));
    }
    SUBCASE("edge rule needs both endpoints inside and min core") {
        SocialGraph g2 = g;
        g2.set_location(0, {0.4, 0.4});
        g2.set_location(1, {0.6, 0.6});
        g2.set_location(2, {0.9, 0.9});
        auto core2 = core_decompose(g2);
        UserUpdate add;
        add.kind = UserUpdate::Kind::EdgeAdd;
        add.subject = 0;
        add.other = 1;
        CHECK(rule2_flags(add, rect, 1, core2, g2) == (std::min(core2[0], core2[1]) >= 1));
        add.other = 2;  // outside endpoint
        CHECK(!rule2_flags(add, rect, 1, core2, g2));
        UserUpdate rem;
        rem.kind = UserUpdate::Kind::EdgeRemove;
        rem.subject = 0;
        rem.other = 1;
        CHECK(!rule2_flags(rem, rect, 1, core2, g2));
    }
}

TEST_CASE("rect index answers point containment queries") {
    auto g = oracle::random_graph(80, 0.08, 12);
    auto core = core_decompose(g);
    auto idx = Index::build(g, core, IndexKind::SAR, 512);
    CbrRectIndex ri;
    ri.build_from(idx);
    oracle::Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        Point p{rng.uniform(), rng.uniform()};
        auto got = ri.point_query(p);
        std::vector<std::pair<UserId, std::uint8_t>> want;
        for (UserId v = 0; v < g.user_count(); ++v)
            for (const CbrLevel& lvl : idx.user_ladder(v).levels)
                if (lvl.rect.contains(p)) want.emplace_back(v, lvl.exponent);
        REQUIRE(got.size() == want.size());
        for (std::size_t j = 0; j < got.size(); ++j) {
            CHECK(got[j].owner == want[j].first);
            CHECK(got[j].exponent == want[j].second);
        }
    }
}

TEST_CASE("apply_update bookkeeping") {
    std::vector<Point> locs{{0.2, 0.2}, {0.4, 0.2}, {0.3, 0.4}, {0.8, 0.8}};
    SocialGraph g(std::move(locs), {{0, 1}, {1, 2}});
    auto core = core_decompose(g);
    auto idx = Index::build(g, core, IndexKind::SAR, 512);
    UpdateEngine ue(g, core, idx, 100);

    SUBCASE("closing a triangle raises core numbers along root paths") {
        UserUpdate u;
        u.kind = UserUpdate::Kind::EdgeAdd;
        u.subject = 0;
        u.other = 2;
        ue.apply_update(u);
        CHECK(core[0] == 2);
        CHECK(core[1] == 2);
        CHECK(core[2] == 2);
        PageCounters pc;
        IndexNode root = idx.read_node(idx.root_page(), pc);
        std::uint32_t max_entry_core = 0;
        for (const EntryMeta& e : root.entries)
            max_entry_core = std::max(max_entry_core, e.core_number);
        CHECK(max_entry_core >= 2);
        CHECK(ue.memo().size() == 1);
    }
    SUBCASE("malformed updates are rejected") {
        UserUpdate dup;
        dup.kind = UserUpdate::Kind::EdgeAdd;
        dup.subject = 0;
        dup.other = 1;  // already present
        CHECK_THROWS_AS(ue.apply_update(dup), std::invalid_argument);
        UserUpdate missing;
        missing.kind = UserUpdate::Kind::EdgeRemove;
        missing.subject = 0;
        missing.other = 3;
        CHECK_THROWS_AS(ue.apply_update(missing), std::invalid_argument);
        UserUpdate unknown;
        unknown.kind = UserUpdate::Kind::LocationMove;
        unknown.subject = 99;
        CHECK_THROWS_AS(ue.apply_update(unknown), std::invalid_argument);
    }
    SUBCASE("memo drains at the threshold") {
        SocialGraph g2 = idx.to_graph();
        auto core2 = core_decompose(g2);
        auto idx2 = Index::build(g2, core2, IndexKind::SAR, 512);
        UpdateEngine small(g2, core2, idx2, 3);
        oracle::Rng rng(8);
        for (int i = 0; i < 7; ++i) {
            UserUpdate u;
            u.kind = UserUpdate::Kind::LocationMove;
            u.subject = static_cast<UserId>(rng.below(g2.user_count()));
            u.new_location = {rng.uniform(), rng.uniform()};
            small.apply_update(u);
            CHECK(small.memo().size() < 3);
        }
    }
}

TEST_CASE("batch refresh recomputes exactly the invalidated rects") {
    SUBCASE("moves that never enter any stored rect recompute nothing") {
        // users packed in one corner; stored rects stay near them
        std::vector<Point> locs;
        std::vector<std::pair<UserId, UserId>> edges;
        for (int i = 0; i < 12; ++i) locs.push_back({0.1 + 0.01 * i, 0.1 + 0.005 * i});
        for (UserId i = 0; i + 1 < 12; ++i) edges.emplace_back(i, i + 1);
        SocialGraph g(std::move(locs), edges);
        auto core = core_decompose(g);
        auto idx = Index::build(g, core, IndexKind::SAR, 512);
        UpdateEngine ue(g, core, idx, 1000);
        // the chain graph has core 1 everywhere: every stored rect at level 1
        // spans users near the corner; moving user 11 around inside rects it
        // already occupies cannot flag rule 1
        UserUpdate u;
        u.kind = UserUpdate::Kind::LocationMove;
        u.subject = 11;
        u.new_location = {0.12, 0.11};
        ue.apply_update(u);
        auto rep = ue.batch_refresh();
        CHECK(rep.recomputed == 0);
    }
    SUBCASE("a constructed invalidation is caught and recomputed") {
        // star around user 0 with a far-away strong pair; moving a connected
        // user inside 0's level-1 rect creates a 1-core there
        std::vector<Point> locs{{0.5, 0.5}, {0.52, 0.5}, {0.9, 0.9}, {0.9, 0.88}};
        SocialGraph g(std::move(locs), {{0, 2}, {2, 3}, {0, 3}, {1, 2}, {1, 3}});
        auto core = core_decompose(g);
        auto idx = Index::build(g, core, IndexKind::SAR, 512);
        // user 0's level-1 rect covers its neighborhood: users 2,3 are far,
        // user 1 is near but NOT adjacent to 0 -> rect likely spans past 1
        Rect before = idx.user_ladder(0).levels.empty() ? kDomain
                                                        : idx.user_ladder(0).levels[0].rect;
        REQUIRE(oracle::cbr_valid_by_enumeration(g, before, 0, 1));
        UpdateEngine ue(g, core, idx, 1000);
        // move user 2 (a friend of 0) right next to 0, inside the rect
        UserUpdate u;
        u.kind = UserUpdate::Kind::LocationMove;
        u.subject = 2;
        u.new_location = {0.505, 0.5};
        ue.apply_update(u);
        auto rep = ue.batch_refresh();
        CHECK(rep.recomputed >= 1);
        Rect after = idx.user_ladder(0).levels[0].rect;
        CHECK(oracle::cbr_valid_by_enumeration(g, after, 0, 1));
        CHECK(!(after == before));
    }
}

TEST_CASE("conservative soundness: unrecomputed rects stay valid") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto g = oracle::random_graph(30, 0.12, seed * 11 + 5);
        auto core = core_decompose(g);
        auto idx = Index::build(g, core, IndexKind::SAR, 512);
        UpdateEngine ue(g, core, idx, 7);
        for (UserUpdate& u : make_stream(g, 40, 0.15, seed + 1)) ue.apply_update(u);
        ue.batch_refresh();
        for (UserId v = 0; v < g.user_count(); ++v)
            for (const CbrLevel& lvl : idx.user_ladder(v).levels) {
                std::size_t inside = 0;
                for (UserId u = 0; u < g.user_count(); ++u)
                    if (u != v && strictly_inside(g.location(u), lvl.rect)) ++inside;
                if (inside <= 15)
                    CHECK(oracle::cbr_valid_by_enumeration(g, lvl.rect, v, 1u << lvl.exponent));
            }
    }
}

TEST_CASE("memo-aware queries match a fresh rebuild") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        auto g = oracle::random_graph(80, 0.06, seed * 3 + 21);
        auto core = core_decompose(g);
        auto idx = Index::build(g, core, IndexKind::SAR, 512);
        UpdateEngine ue(g, core, idx, 1000);  // keep everything in the memo
        for (UserUpdate& u : make_stream(g, 60, 0.1, seed + 40)) ue.apply_update(u);
        REQUIRE(!ue.memo().empty());

        // oracle: rebuild an index over the updated graph from scratch
        auto fresh_core = core_decompose(g);
        auto fresh = Index::build(g, fresh_core, IndexKind::SAR, 512);
        QueryEngine fresh_engine(fresh, g, fresh_core);

        oracle::Rng rng(seed);
        for (int qi = 0; qi < 25; ++qi) {
            UserId issuer = static_cast<UserId>(rng.below(g.user_count()));
            QuerySpec qr = range_query(g, issuer, 0.3 + 0.4 * rng.uniform(),
                                       1 + static_cast<std::uint32_t>(rng.below(2)));
            CHECK(ue.memo_range(qr).members == fresh_engine.gsgq_range(qr).members);

            QuerySpec qk;
            qk.issuer = issuer;
            qk.type = ConstraintType::RelaxedKnn;
            qk.c = 1 + static_cast<std::uint32_t>(rng.below(2));
            qk.k = 2 + static_cast<std::uint32_t>(rng.below(4));
            GroupResult a = ue.memo_knn(qk);
            GroupResult b = fresh_engine.gsgq_rknn(qk);
            CHECK(a.members.empty() == b.members.empty());
            if (!a.members.empty())
                CHECK(a.d_max == doctest::Approx(b.d_max).epsilon(1e-12));

            qk.type = ConstraintType::StrictKnn;
            qk.k = 1 + static_cast<std::uint32_t>(rng.below(3));
            GroupResult sa = ue.memo_knn(qk);
            GroupResult sb = fresh_engine.gsgq_knn(qk);
            CHECK(sa.members.empty() == sb.members.empty());
            if (!sa.members.empty())
                CHECK(sa.d_max == doctest::Approx(sb.d_max).epsilon(1e-12));
        }
    }
}

TEST_CASE("empty memo reproduces the plain answers") {
    auto g = oracle::random_graph(60, 0.08, 33);
    auto core = core_decompose(g);
    auto idx = Index::build(g, core, IndexKind::SAR, 512);
    UpdateEngine ue(g, core, idx, 1000);
    QueryEngine qe(idx, g, core);
    oracle::Rng rng(2);
    for (int qi = 0; qi < 15; ++qi) {
        UserId issuer = static_cast<UserId>(rng.below(g.user_count()));
        QuerySpec qr = range_query(g, issuer, 0.4, 1);
        CHECK(ue.memo_range(qr).members == qe.gsgq_range(qr).members);
        QuerySpec qk;
        qk.issuer = issuer;
        qk.type = ConstraintType::RelaxedKnn;
        qk.c = 1;
        qk.k = 3;
        GroupResult a = ue.memo_knn(qk);
        GroupResult b = qe.gsgq_rknn(qk);
        CHECK(a.members.empty() == b.members.empty());
        if (!a.members.empty()) CHECK(a.d_max == doctest::Approx(b.d_max).epsilon(1e-12));
    }
}

TEST_CASE("amortized recomputation drops as the batch grows") {
    auto g0 = oracle::random_graph(60, 0.1, 71);
    auto stream = make_stream(g0, 120, 0.1, 9);
    std::vector<std::uint64_t> recomputed;
    for (std::uint64_t batch : {1ull, 10ull, 120ull}) {
        SocialGraph g = g0;
        auto core = core_decompose(g);
        auto idx = Index::build(g, core, IndexKind::SAR, 512);
        UpdateEngine ue(g, core, idx, batch);
        for (UserUpdate u : stream) ue.apply_update(std::move(u));
        ue.batch_refresh();
        recomputed.push_back(ue.total_recomputed());
    }
    CHECK(recomputed[1] <= recomputed[0]);
    CHECK(recomputed[2] <= recomputed[1]);
}

TEST_CASE("update stream files round-trip") {
    auto g = oracle::random_graph(20, 0.1, 15);
    auto stream = make_stream(g, 30, 0.3, 77);
    std::string path = "stream_rt.txt";
    write_update_stream(path, stream);
    auto back = parse_update_stream(path);
    REQUIRE(back.size() == stream.size());
    for (std::size_t i = 0; i < stream.size(); ++i) {
        CHECK(back[i].kind == stream[i].kind);
        CHECK(back[i].subject == stream[i].subject);
        if (stream[i].kind == UserUpdate::Kind::LocationMove) {
            CHECK(back[i].new_location.x == stream[i].new_location.x);
            CHECK(back[i].new_location.y == stream[i].new_location.y);
        } else {
            CHECK(back[i].other == stream[i].other);
        }
    }
    std::filesystem::remove(path);
}
