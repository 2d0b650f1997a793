#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gsg/geometry.hpp"
#include "gsg/social_graph.hpp"

namespace gsg {

/// One stored rectangle of a ladder, for minimum degree 2^exponent.
struct CbrLevel {
    std::uint8_t exponent = 0;
    Rect rect;
};

/// Core bounding rectangles of one owner (user or index entry) at
/// exponentially spaced minimum-degree levels 2^0 .. 2^floor(log2 owner_core).
/// Empty iff owner_core == 0. Levels are stored ascending and contiguous,
/// and each rect is contained in the next level's rect.
struct CbrLadder {
    std::uint32_t owner_core = 0;
    std::vector<CbrLevel> levels;

    /// Rect representing minimum degree c, i.e. the stored level
    /// 2^floor(log2 c); nullptr when that level is absent (the owner is then
    /// unprunable by CBR, though core-number pruning may still apply).
    const Rect* lookup(std::uint32_t c) const {
        if (c == 0) return nullptr;
        std::uint32_t exp = 31 - static_cast<std::uint32_t>(__builtin_clz(c));
        if (exp >= levels.size()) return nullptr;
        return &levels[exp].rect;
    }
};

/// Uniform bucket grid over the domain; accelerates "users inside rect" and
/// "users within distance" collection during CBR computation.
class SpatialGrid {
public:
    SpatialGrid() = default;
    SpatialGrid(const SocialGraph& g, const Rect& domain);

    void relocate(UserId v, const Point& from, const Point& to);

    /// Users strictly inside r (unordered), optionally restricted to users
    /// whose core number reaches min_core.
    void collect_strict(const Rect& r, std::vector<UserId>& out) const;
    void collect_strict(const Rect& r, std::span<const std::uint32_t> core_of,
                        std::uint32_t min_core, std::vector<UserId>& out) const;
    /// Users with closed containment in r (unordered).
    void collect_closed(const Rect& r, std::vector<UserId>& out) const;
    /// Users with dist(center, u) <= radius and core >= min_core, sorted by
    /// (distance, id).
    void collect_within(const Point& center, double radius,
                        std::span<const std::uint32_t> core_of, std::uint32_t min_core,
                        std::vector<std::pair<double, UserId>>& out) const;

private:
    const SocialGraph* g_ = nullptr;
    Rect domain_;
    std::uint32_t res_ = 1;
    double inv_cell_x_ = 1.0, inv_cell_y_ = 1.0;
    std::vector<std::vector<UserId>> cells_;

    std::uint32_t cell_x(double x) const;
    std::uint32_t cell_y(double y) const;
};

/// Scratch buffers for repeated "is v in a c-core of this subset" peeling
/// checks without per-call O(n) clearing.
class CoreScratch {
public:
    void resize(std::size_t n);
    /// True iff v survives c-threshold peeling of G[members]; members must
    /// contain v. Duplicates in members are tolerated.
    bool vertex_in_c_core(const SocialGraph& g, std::span<const UserId> members,
                          UserId v, std::uint32_t c);

private:
    std::vector<std::uint64_t> stamp_;
    std::vector<std::uint32_t> deg_;
    std::vector<UserId> kill_;
    std::uint64_t gen_ = 0;
};

/// Computes maximal core bounding rectangles against one graph snapshot.
/// Read-only over the graph; keeps reusable scratch, so one engine per
/// thread.
class CbrEngine {
public:
    CbrEngine(const SocialGraph& g, const CoreIndex& core, const Rect& domain);

    const Rect& domain() const { return domain_; }
    SpatialGrid& grid() { return grid_; }

    /// Maximal CBR of v for minimum degree c >= 1. Contains p_v; no vertex
    /// set containing v and lying strictly inside is a c-core; no bounding
    /// edge can move outward past the next user without breaking that or
    /// leaving the domain. Returns the whole domain when c > c_v.
    Rect compute_cbr(UserId v, std::uint32_t c);

    /// Moves each bounding edge of a valid rect outward as far as validity
    /// at level c allows (round-robin left, bottom, right, top until a full
    /// cycle makes no move).
    Rect expand(Rect rect, UserId v, std::uint32_t c);

    /// Ladder for v: level 2^0 from compute_cbr, each higher level expanded
    /// from the previous one, which keeps the ladder nested.
    CbrLadder build_ladder(UserId v);

    /// Ladders for every user. Computation is read-only over the graph, so
    /// users are striped over worker threads (0 = hardware concurrency).
    static std::vector<CbrLadder> build_all_ladders(const SocialGraph& g, const CoreIndex& core,
                                                    const Rect& domain, unsigned threads = 0);

    /// True iff no vertex set containing v and lying strictly inside rect is
    /// a c-core (the defining property of a CBR of v).
    bool rect_valid(const Rect& rect, UserId v, std::uint32_t c);

private:
    const SocialGraph& g_;
    const CoreIndex& core_;
    Rect domain_;
    SpatialGrid grid_;
    CoreScratch scratch_;
    std::vector<UserId> inside_buf_;
    std::vector<std::pair<double, UserId>> ring_buf_;

    bool try_move_edge(Rect& rect, int edge, UserId v, std::uint32_t c);
};

/// Folds child (MBR, CBR) pairs left to right: a child whose MBR misses the
/// accumulator leaves it unchanged, otherwise the accumulator is intersected
/// with the child's CBR. If the fold result no longer intersects the
/// combined MBR, a zero-area rect on the MBR boundary nearest the last
/// nonempty accumulator is returned (it prunes nothing).
struct MbrCbr {
    Rect mbr;
    Rect cbr;
};
Rect combine_entry_cbr(std::span<const MbrCbr> children, const Rect& combined_mbr);

/// Diagnostic upper bound on the number of CBRs an index over g can store,
/// for minimum fanout s: the per-user ladder total plus 2n/s entry ladders
/// of up to floor(log2 c_G)+1 levels each. Zero when the graph has no cores
/// at all.
std::int64_t cbr_count_bound(const SocialGraph& g, const CoreIndex& core, std::uint32_t s);

}  // namespace gsg
