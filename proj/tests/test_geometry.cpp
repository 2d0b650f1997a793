#include <doctest.h>

#include "gsg/geometry.hpp"
#include "oracles.hpp"

using namespace gsg;

TEST_CASE("dist basics") {
    CHECK(dist({0, 0}, {0, 0}) == 0.0);
    CHECK(dist({0, 0}, {3.0 / 5, 4.0 / 5}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(dist({0.1, 0.2}, {0.4, 0.6}) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(dist({0.2, 0.7}, {0.9, 0.1}) == dist({0.9, 0.1}, {0.2, 0.7}));
}

TEST_CASE("min_dist_point_rect") {
    Rect r{{0.2, 0.2}, {0.8, 0.8}};
    CHECK(min_dist_point_rect({0.5, 0.5}, r) == 0.0);
    CHECK(min_dist_point_rect({0.2, 0.5}, r) == 0.0);  // boundary
    CHECK(min_dist_point_rect({0.0, 0.5}, r) == doctest::Approx(0.2));
    CHECK(min_dist_point_rect({0, 0}, Rect{{0.3, 0.4}, {0.4, 0.5}}) == doctest::Approx(0.5));
}

TEST_CASE("inside_dist") {
    Rect unit{{0, 0}, {1, 1}};
    CHECK(inside_dist({1.5, 0.5}, unit) == 0.0);  // outside
    CHECK(inside_dist({0.5, 0.5}, unit) == doctest::Approx(0.5));
    CHECK(inside_dist({0.2, 0.5}, unit) == doctest::Approx(0.2));
    CHECK(inside_dist({0.0, 0.5}, unit) == 0.0);  // on boundary counts as not inside
}

TEST_CASE("strictly_inside excludes boundary") {
    Rect r{{0.2, 0.2}, {0.8, 0.8}};
    CHECK(!strictly_inside({0.2, 0.5}, r));
    CHECK(!strictly_inside({0.5, 0.8}, r));
    CHECK(strictly_inside({0.5, 0.5}, r));
    CHECK(!strictly_inside({0.9, 0.5}, r));
    // degenerate rect has empty interior
    CHECK(!strictly_inside({0.3, 0.3}, Rect::point_rect({0.3, 0.3})));
}

TEST_CASE("rect_intersection") {
    Rect a{{0, 0}, {0.6, 0.6}}, b{{0.4, 0.4}, {1, 1}};
    auto is = rect_intersection(a, b);
    REQUIRE(is.has_value());
    CHECK(*is == Rect{{0.4, 0.4}, {0.6, 0.6}});
    CHECK(rect_intersection(a, a) == a);
    CHECK(!rect_intersection(Rect{{0, 0}, {0.1, 0.1}}, Rect{{0.5, 0.5}, {1, 1}}).has_value());
}

TEST_CASE("rect_intersection algebra on fuzzed rects") {
    oracle::Rng rng(42);
    auto rand_rect = [&] {
        double x0 = rng.uniform(), x1 = rng.uniform(), y0 = rng.uniform(), y1 = rng.uniform();
        return Rect{{std::min(x0, x1), std::min(y0, y1)}, {std::max(x0, x1), std::max(y0, y1)}};
    };
    for (int i = 0; i < 500; ++i) {
        Rect a = rand_rect(), b = rand_rect(), c = rand_rect();
        auto ab = rect_intersection(a, b);
        auto ba = rect_intersection(b, a);
        CHECK(ab.has_value() == ba.has_value());
        if (ab && ba) CHECK(*ab == *ba);
        CHECK(rect_intersection(a, a) == a);  // idempotent
        // associativity up to empty
        auto left = ab ? rect_intersection(*ab, c) : std::nullopt;
        auto bc = rect_intersection(b, c);
        auto right = bc ? rect_intersection(a, *bc) : std::nullopt;
        CHECK(left.has_value() == right.has_value());
        if (left && right) CHECK(*left == *right);
    }
}

TEST_CASE("inside and outside distance are mutually exclusive") {
    oracle::Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        Rect r{{rng.uniform() * 0.5, rng.uniform() * 0.5},
               {0.5 + rng.uniform() * 0.5, 0.5 + rng.uniform() * 0.5}};
        Point p{rng.uniform() * 1.4 - 0.2, rng.uniform() * 1.4 - 0.2};
        CHECK(min_dist_point_rect(p, r) * inside_dist(p, r) == 0.0);
        if (inside_dist(p, r) > 0) CHECK(strictly_inside(p, r));
    }
}
