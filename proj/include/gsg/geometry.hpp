#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>

namespace gsg {

/// A location in the normalized query domain (by convention [0,1] per axis).
struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point& a, const Point& b) {
        return a.x == b.x && a.y == b.y;
    }
};

/// Axis-aligned rectangle. Degenerate (zero-area) rectangles are allowed;
/// all coordinate comparisons are exact, no epsilon.
struct Rect {
    Point lo;
    Point hi;

    bool valid() const { return lo.x <= hi.x && lo.y <= hi.y; }
    double width() const { return hi.x - lo.x; }
    double height() const { return hi.y - lo.y; }
    double area() const { return width() * height(); }
    Point center() const { return {(lo.x + hi.x) * 0.5, (lo.y + hi.y) * 0.5}; }

    /// Closed containment (boundary points count as inside).
    bool contains(const Point& p) const {
        return lo.x <= p.x && p.x <= hi.x && lo.y <= p.y && p.y <= hi.y;
    }

    /// Closed containment of another rectangle.
    bool contains(const Rect& r) const {
        return lo.x <= r.lo.x && r.hi.x <= hi.x && lo.y <= r.lo.y && r.hi.y <= hi.y;
    }

    bool intersects(const Rect& r) const {
        return lo.x <= r.hi.x && r.lo.x <= hi.x && lo.y <= r.hi.y && r.lo.y <= hi.y;
    }

    static Rect point_rect(const Point& p) { return {p, p}; }

    friend bool operator==(const Rect& a, const Rect& b) {
        return a.lo == b.lo && a.hi == b.hi;
    }
};

inline Rect rect_union(const Rect& a, const Rect& b) {
    return {{std::min(a.lo.x, b.lo.x), std::min(a.lo.y, b.lo.y)},
            {std::max(a.hi.x, b.hi.x), std::max(a.hi.y, b.hi.y)}};
}

inline Rect rect_union(const Rect& a, const Point& p) {
    return rect_union(a, Rect::point_rect(p));
}

/// Coordinate-wise max of mins / min of maxes; nullopt when disjoint.
inline std::optional<Rect> rect_intersection(const Rect& a, const Rect& b) {
    Rect r{{std::max(a.lo.x, b.lo.x), std::max(a.lo.y, b.lo.y)},
           {std::min(a.hi.x, b.hi.x), std::min(a.hi.y, b.hi.y)}};
    if (!r.valid()) return std::nullopt;
    return r;
}

/// True iff p lies in the open interior of r (boundary excluded). Users on
/// the bounding edges of a core bounding rectangle are exempt from its
/// guarantee, so every pruning test goes through this predicate.
inline bool strictly_inside(const Point& p, const Rect& r) {
    return r.lo.x < p.x && p.x < r.hi.x && r.lo.y < p.y && p.y < r.hi.y;
}

/// True iff every point of `inner` (closed) lies in the open interior of
/// `outer`, i.e. `inner` touches no bounding edge of `outer`.
inline bool contained_in_interior(const Rect& inner, const Rect& outer) {
    return outer.lo.x < inner.lo.x && inner.hi.x < outer.hi.x &&
           outer.lo.y < inner.lo.y && inner.hi.y < outer.hi.y;
}

inline double dist(const Point& p, const Point& q) {
    return std::hypot(p.x - q.x, p.y - q.y);
}

/// Distance from p to the nearest point of r; 0 when p is inside or on the
/// boundary.
inline double min_dist_point_rect(const Point& p, const Rect& r) {
    double dx = std::max({r.lo.x - p.x, 0.0, p.x - r.hi.x});
    double dy = std::max({r.lo.y - p.y, 0.0, p.y - r.hi.y});
    return std::hypot(dx, dy);
}

/// Distance from p to the nearest bounding edge of r when p is strictly
/// inside; 0 otherwise. Positive values certify that no user group around p
/// can escape r without travelling at least this far.
inline double inside_dist(const Point& p, const Rect& r) {
    if (!strictly_inside(p, r)) return 0.0;
    return std::min(std::min(p.x - r.lo.x, r.hi.x - p.x),
                    std::min(p.y - r.lo.y, r.hi.y - p.y));
}

}  // namespace gsg
