#include "gsg/cbr.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace gsg {

namespace {
constexpr int kLeft = 0, kBottom = 1, kRight = 2, kTop = 3;
}

SpatialGrid::SpatialGrid(const SocialGraph& g, const Rect& domain) : g_(&g), domain_(domain) {
    std::size_t n = g.user_count();
    res_ = static_cast<std::uint32_t>(std::clamp<std::size_t>(
        static_cast<std::size_t>(std::sqrt(static_cast<double>(n) / 2.0)), 1, 128));
    double w = std::max(domain.width(), 1e-12);
    double h = std::max(domain.height(), 1e-12);
    inv_cell_x_ = res_ / w;
    inv_cell_y_ = res_ / h;
    cells_.assign(static_cast<std::size_t>(res_) * res_, {});
    for (UserId v = 0; v < n; ++v) {
        const Point& p = g.location(v);
        cells_[cell_y(p.y) * res_ + cell_x(p.x)].push_back(v);
    }
}

std::uint32_t SpatialGrid::cell_x(double x) const {
    double t = (x - domain_.lo.x) * inv_cell_x_;
    auto c = static_cast<std::int64_t>(t);
    return static_cast<std::uint32_t>(std::clamp<std::int64_t>(c, 0, res_ - 1));
}

std::uint32_t SpatialGrid::cell_y(double y) const {
    double t = (y - domain_.lo.y) * inv_cell_y_;
    auto c = static_cast<std::int64_t>(t);
    return static_cast<std::uint32_t>(std::clamp<std::int64_t>(c, 0, res_ - 1));
}

void SpatialGrid::relocate(UserId v, const Point& from, const Point& to) {
    auto& old_cell = cells_[cell_y(from.y) * res_ + cell_x(from.x)];
    old_cell.erase(std::find(old_cell.begin(), old_cell.end(), v));
    cells_[cell_y(to.y) * res_ + cell_x(to.x)].push_back(v);
}

void SpatialGrid::collect_strict(const Rect& r, std::vector<UserId>& out) const {
    out.clear();
    std::uint32_t x0 = cell_x(r.lo.x), x1 = cell_x(r.hi.x);
    std::uint32_t y0 = cell_y(r.lo.y), y1 = cell_y(r.hi.y);
    for (std::uint32_t cy = y0; cy <= y1; ++cy)
        for (std::uint32_t cx = x0; cx <= x1; ++cx)
            for (UserId v : cells_[cy * res_ + cx])
                if (strictly_inside(g_->location(v), r)) out.push_back(v);
}

void SpatialGrid::collect_strict(const Rect& r, std::span<const std::uint32_t> core_of,
                                 std::uint32_t min_core, std::vector<UserId>& out) const {
    out.clear();
    std::uint32_t x0 = cell_x(r.lo.x), x1 = cell_x(r.hi.x);
    std::uint32_t y0 = cell_y(r.lo.y), y1 = cell_y(r.hi.y);
    for (std::uint32_t cy = y0; cy <= y1; ++cy)
        for (std::uint32_t cx = x0; cx <= x1; ++cx)
            for (UserId v : cells_[cy * res_ + cx])
                if (core_of[v] >= min_core && strictly_inside(g_->location(v), r))
                    out.push_back(v);
}

void SpatialGrid::collect_closed(const Rect& r, std::vector<UserId>& out) const {
    out.clear();
    std::uint32_t x0 = cell_x(r.lo.x), x1 = cell_x(r.hi.x);
    std::uint32_t y0 = cell_y(r.lo.y), y1 = cell_y(r.hi.y);
    for (std::uint32_t cy = y0; cy <= y1; ++cy)
        for (std::uint32_t cx = x0; cx <= x1; ++cx)
            for (UserId v : cells_[cy * res_ + cx])
                if (r.contains(g_->location(v))) out.push_back(v);
}

void SpatialGrid::collect_within(const Point& center, double radius,
                                 std::span<const std::uint32_t> core_of, std::uint32_t min_core,
                                 std::vector<std::pair<double, UserId>>& out) const {
    out.clear();
    Rect box{{center.x - radius, center.y - radius}, {center.x + radius, center.y + radius}};
    std::uint32_t x0 = cell_x(box.lo.x), x1 = cell_x(box.hi.x);
    std::uint32_t y0 = cell_y(box.lo.y), y1 = cell_y(box.hi.y);
    for (std::uint32_t cy = y0; cy <= y1; ++cy)
        for (std::uint32_t cx = x0; cx <= x1; ++cx)
            for (UserId v : cells_[cy * res_ + cx]) {
                if (core_of[v] < min_core) continue;
                double d = dist(center, g_->location(v));
                if (d <= radius) out.emplace_back(d, v);
            }
    std::sort(out.begin(), out.end());
}

void CoreScratch::resize(std::size_t n) {
    stamp_.assign(n, 0);
    deg_.assign(n, 0);
    gen_ = 0;
}

bool CoreScratch::vertex_in_c_core(const SocialGraph& g, std::span<const UserId> members,
                                   UserId v, std::uint32_t c) {
    if (stamp_.size() < g.user_count()) resize(g.user_count());
    const std::uint64_t gen = ++gen_;
    for (UserId u : members) stamp_[u] = gen;
    if (stamp_[v] != gen) return false;

    kill_.clear();
    for (UserId u : members) {
        std::uint32_t d = 0;
        for (UserId w : g.neighbors(u))
            if (stamp_[w] == gen) ++d;
        deg_[u] = d;
        if (d < c) kill_.push_back(u);
    }
    while (!kill_.empty()) {
        UserId u = kill_.back();
        kill_.pop_back();
        if (stamp_[u] != gen) continue;
        stamp_[u] = gen - 1;
        if (u == v) return false;
        for (UserId w : g.neighbors(u))
            if (stamp_[w] == gen && deg_[w]-- == c) kill_.push_back(w);
    }
    return true;
}

CbrEngine::CbrEngine(const SocialGraph& g, const CoreIndex& core, const Rect& domain)
    : g_(g), core_(core), domain_(domain), grid_(g, domain) {
    scratch_.resize(g.user_count());
}

bool CbrEngine::rect_valid(const Rect& rect, UserId v, std::uint32_t c) {
    // v can only reach core >= c among the inside users if at least c of its
    // own neighbors are strictly inside, so most probes resolve in O(deg v)
    // without touching the grid.
    std::uint32_t near = 0;
    for (UserId u : g_.neighbors(v))
        if (core_.core_number[u] >= c && strictly_inside(g_.location(u), rect) && ++near >= c)
            break;
    if (near < c) return true;
    // Users below core c can never join a c-core, so peel only the rest.
    grid_.collect_strict(rect, core_.core_number, c, inside_buf_);
    inside_buf_.push_back(v);  // the owner belongs to every candidate group
    return !scratch_.vertex_in_c_core(g_, inside_buf_, v, c);
}

Rect CbrEngine::compute_cbr(UserId v, std::uint32_t c) {
    if (c > core_.core_number[v]) return domain_;

    // Find the nearest user u such that v reaches core >= c in the subgraph
    // of users at distance <= d(v,u); ties in distance break by id. The
    // prefix is located by doubling the collection radius, then binary
    // searching the minimal prefix length.
    const Point pv = g_.location(v);
    double radius = std::max(domain_.width(), domain_.height()) / 64.0;
    double max_radius = std::hypot(domain_.width(), domain_.height());
    for (;;) {
        std::uint32_t near = 0;
        for (UserId u : g_.neighbors(v))
            if (core_.core_number[u] >= c && dist(pv, g_.location(u)) <= radius && ++near >= c)
                break;
        if (near >= c) {
            grid_.collect_within(pv, radius, core_.core_number, c, ring_buf_);
            std::vector<UserId> prefix;
            prefix.reserve(ring_buf_.size());
            for (auto& [d, u] : ring_buf_) prefix.push_back(u);
            if (scratch_.vertex_in_c_core(g_, prefix, v, c)) break;
        }
        if (radius >= max_radius) return domain_;  // unreachable when c <= c_v
        radius = std::min(radius * 2.0, max_radius);
    }
    std::size_t lo = 1, hi = ring_buf_.size();  // minimal prefix length in [1, size]
    std::vector<UserId> prefix;
    while (lo < hi) {
        std::size_t mid = (lo + hi) / 2;
        prefix.clear();
        for (std::size_t k = 0; k < mid; ++k) prefix.push_back(ring_buf_[k].second);
        if (scratch_.vertex_in_c_core(g_, prefix, v, c))
            hi = mid;
        else
            lo = mid + 1;
    }
    const double d = ring_buf_[lo - 1].first;
    const Point pu = g_.location(ring_buf_[lo - 1].second);

    // Initial rect: axis-aligned square centered at p_v inscribed in the
    // circle through u, so no user at distance >= d sits strictly inside.
    double half = d / std::sqrt(2.0);
    Rect rect{{pv.x - half, pv.y - half}, {pv.x + half, pv.y + half}};
    rect.lo.x = std::max(rect.lo.x, domain_.lo.x);
    rect.lo.y = std::max(rect.lo.y, domain_.lo.y);
    rect.hi.x = std::min(rect.hi.x, domain_.hi.x);
    rect.hi.y = std::min(rect.hi.y, domain_.hi.y);
    if (strictly_inside(pu, rect)) {
        // Floating point put u inside the inscribed square: shrink the
        // nearest edge so u sits on the boundary.
        double dl = pu.x - rect.lo.x, dr = rect.hi.x - pu.x;
        double db = pu.y - rect.lo.y, dt = rect.hi.y - pu.y;
        double m = std::min({dl, dr, db, dt});
        if (m == dl)
            rect.lo.x = pu.x;
        else if (m == dr)
            rect.hi.x = pu.x;
        else if (m == db)
            rect.lo.y = pu.y;
        else
            rect.hi.y = pu.y;
    }
    if (!rect_valid(rect, v, c)) rect = Rect::point_rect(pv);  // fp fallback
    return expand(rect, v, c);
}

Rect CbrEngine::expand(Rect rect, UserId v, std::uint32_t c) {
    bool moved = true;
    while (moved) {
        moved = false;
        for (int edge : {kLeft, kBottom, kRight, kTop})
            moved |= try_move_edge(rect, edge, v, c);
    }
    return rect;
}

bool CbrEngine::try_move_edge(Rect& rect, int edge, UserId v, std::uint32_t c) {
    const bool horizontal = (edge == kLeft || edge == kRight);
    const bool outward_positive = (edge == kRight || edge == kTop);

    double cur, limit;
    switch (edge) {
        case kLeft: cur = rect.lo.x; limit = domain_.lo.x; break;
        case kBottom: cur = rect.lo.y; limit = domain_.lo.y; break;
        case kRight: cur = rect.hi.x; limit = domain_.hi.x; break;
        default: cur = rect.hi.y; limit = domain_.hi.y; break;
    }
    if (cur == limit) return false;

    // Candidate stop positions: coordinates of users between the edge and
    // the domain boundary whose other coordinate is strictly interior, plus
    // the domain boundary itself. Positions are ordered by distance from
    // the current edge.
    Rect band;
    if (horizontal) {
        band.lo.y = rect.lo.y;
        band.hi.y = rect.hi.y;
        band.lo.x = outward_positive ? cur : limit;
        band.hi.x = outward_positive ? limit : cur;
    } else {
        band.lo.x = rect.lo.x;
        band.hi.x = rect.hi.x;
        band.lo.y = outward_positive ? cur : limit;
        band.hi.y = outward_positive ? limit : cur;
    }
    grid_.collect_closed(band, inside_buf_);
    std::vector<double> positions;
    for (UserId u : inside_buf_) {
        if (core_.core_number[u] < c) continue;  // cannot affect validity
        const Point& p = g_.location(u);
        double along = horizontal ? p.x : p.y;
        double across = horizontal ? p.y : p.x;
        double a_lo = horizontal ? rect.lo.y : rect.lo.x;
        double a_hi = horizontal ? rect.hi.y : rect.hi.x;
        if (!(a_lo < across && across < a_hi)) continue;
        if (outward_positive ? (along > cur && along < limit) : (along < cur && along > limit))
            positions.push_back(along);
    }
    std::sort(positions.begin(), positions.end());
    if (outward_positive) {
        positions.push_back(limit);
    } else {
        std::reverse(positions.begin(), positions.end());
        positions.push_back(limit);
    }
    positions.erase(std::unique(positions.begin(), positions.end()), positions.end());

    auto rect_at = [&](double pos) {
        Rect r = rect;
        switch (edge) {
            case kLeft: r.lo.x = pos; break;
            case kBottom: r.lo.y = pos; break;
            case kRight: r.hi.x = pos; break;
            default: r.hi.y = pos; break;
        }
        return r;
    };

    // Validity is monotone along the positions. Gallop outward first: the
    // blocking user is usually close, and galloping keeps the expensive
    // probes on small rects.
    if (!rect_valid(rect_at(positions.front()), v, c)) return false;
    std::size_t lo = 0;                      // last known valid
    std::size_t hi = positions.size() - 1;   // search upper bound
    std::size_t step = 1;
    while (lo + step <= hi) {
        if (rect_valid(rect_at(positions[lo + step]), v, c)) {
            lo += step;
            step *= 2;
        } else {
            hi = lo + step - 1;
            break;
        }
    }
    while (lo < hi) {
        std::size_t mid = (lo + hi + 1) / 2;
        if (rect_valid(rect_at(positions[mid]), v, c))
            lo = mid;
        else
            hi = mid - 1;
    }
    rect = rect_at(positions[lo]);
    return true;
}

CbrLadder CbrEngine::build_ladder(UserId v) {
    CbrLadder ladder;
    ladder.owner_core = core_.core_number[v];
    if (ladder.owner_core == 0) return ladder;
    std::uint32_t top = 31 - static_cast<std::uint32_t>(__builtin_clz(ladder.owner_core));
    Rect rect = compute_cbr(v, 1);
    ladder.levels.push_back({0, rect});
    for (std::uint32_t e = 1; e <= top; ++e) {
        // The previous rect is valid at the higher level too; expanding it
        // keeps the ladder nested while restoring maximality.
        rect = expand(rect, v, 1u << e);
        ladder.levels.push_back({static_cast<std::uint8_t>(e), rect});
    }
    return ladder;
}

std::vector<CbrLadder> CbrEngine::build_all_ladders(const SocialGraph& g, const CoreIndex& core,
                                                    const Rect& domain, unsigned threads) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, 8);
    std::vector<CbrLadder> out(g.user_count());
    if (threads <= 1 || g.user_count() < 256) {
        CbrEngine engine(g, core, domain);
        for (UserId v = 0; v < g.user_count(); ++v) out[v] = engine.build_ladder(v);
        return out;
    }
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            CbrEngine engine(g, core, domain);
            for (UserId v = t; v < g.user_count(); v += threads) out[v] = engine.build_ladder(v);
        });
    }
    for (auto& th : pool) th.join();
    return out;
}

Rect combine_entry_cbr(std::span<const MbrCbr> children, const Rect& combined_mbr) {
    std::optional<Rect> acc = children.front().cbr;
    Rect last_nonempty = *acc;
    for (std::size_t i = 1; i < children.size(); ++i) {
        if (!acc) break;
        if (!children[i].mbr.intersects(*acc)) continue;
        acc = rect_intersection(*acc, children[i].cbr);
        if (acc) last_nonempty = *acc;
    }
    if (acc && acc->intersects(combined_mbr)) return *acc;

    // Degenerate result: collapse to the point of the combined MBR boundary
    // nearest the last nonempty accumulator. A zero-area rect prunes
    // nothing, so queries stay correct.
    Point ref = last_nonempty.center();
    Point p{std::clamp(ref.x, combined_mbr.lo.x, combined_mbr.hi.x),
            std::clamp(ref.y, combined_mbr.lo.y, combined_mbr.hi.y)};
    if (strictly_inside(p, combined_mbr)) {
        double dl = p.x - combined_mbr.lo.x, dr = combined_mbr.hi.x - p.x;
        double db = p.y - combined_mbr.lo.y, dt = combined_mbr.hi.y - p.y;
        double m = std::min({dl, dr, db, dt});
        if (m == dl)
            p.x = combined_mbr.lo.x;
        else if (m == dr)
            p.x = combined_mbr.hi.x;
        else if (m == db)
            p.y = combined_mbr.lo.y;
        else
            p.y = combined_mbr.hi.y;
    }
    return Rect::point_rect(p);
}

std::int64_t cbr_count_bound(const SocialGraph& g, const CoreIndex& core, std::uint32_t s) {
    if (core.max_core == 0) return 0;
    const double n = static_cast<double>(g.user_count());
    // Per-user ladders plus the entry-count budget, 2n/s entries with up to
    // floor(log2 c_G)+1 levels each.
    double user_levels = 0;
    for (std::uint32_t c : core.core_number)
        if (c > 0) user_levels += 1 + (31 - __builtin_clz(c));
    std::uint32_t top = 31 - static_cast<std::uint32_t>(__builtin_clz(core.max_core));
    double val = user_levels + 2.0 * n * (top + 1) / s;
    return static_cast<std::int64_t>(std::floor(val + 1e-9));
}

}  // namespace gsg
