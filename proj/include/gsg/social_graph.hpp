#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "gsg/geometry.hpp"

namespace gsg {

using UserId = std::uint32_t;
using VertexSet = std::vector<UserId>;  // kept sorted and deduplicated

/// Undirected acquaintance graph with one location per user. Adjacency lists
/// are sorted, symmetric, self-loop free and deduplicated; this object is
/// the single source of truth for degrees and core numbers. Immutable after
/// construction except through the mutators below, which the update engine
/// serializes.
class SocialGraph {
public:
    SocialGraph() = default;
    SocialGraph(std::vector<Point> locations, const std::vector<std::pair<UserId, UserId>>& edges);

    std::size_t user_count() const { return adjacency_.size(); }
    std::size_t edge_count() const { return edge_count_; }

    const Point& location(UserId v) const { return locations_[v]; }
    void set_location(UserId v, const Point& p) { locations_[v] = p; }
    const std::vector<Point>& locations() const { return locations_; }

    std::span<const UserId> neighbors(UserId v) const { return adjacency_[v]; }
    std::size_t degree(UserId v) const { return adjacency_[v].size(); }
    bool has_edge(UserId u, UserId v) const;

    /// Returns false when the edge already exists (u==v is rejected too).
    bool add_edge(UserId u, UserId v);
    /// Returns false when the edge is absent.
    bool remove_edge(UserId u, UserId v);

private:
    std::vector<std::vector<UserId>> adjacency_;
    std::vector<Point> locations_;
    std::size_t edge_count_ = 0;
};

/// Per-user core numbers plus their maximum.
struct CoreIndex {
    std::vector<std::uint32_t> core_number;
    std::uint32_t max_core = 0;

    std::uint32_t operator[](UserId v) const { return core_number[v]; }
};

/// Bucket-peeling core decomposition, O(n + m).
CoreIndex core_decompose(const SocialGraph& g);

/// The unique maximum subset W of `candidates` with min degree >= c in the
/// induced subgraph G[W]; empty when none exists. Candidates need not be
/// sorted; the result is sorted.
VertexSet max_c_core(const SocialGraph& g, std::span<const UserId> candidates, std::uint32_t c);

/// True iff every member of w has at least c neighbors inside w. The empty
/// set is a c-core only for c = 0.
bool is_c_core(const SocialGraph& g, std::span<const UserId> w, std::uint32_t c);

/// Largest distance from v to a member of w; throws on empty w.
double max_dist_to_set(const SocialGraph& g, UserId v, std::span<const UserId> w);

/// True iff min degree of G[w] >= |w| - cbar.
bool is_k_plex(const SocialGraph& g, std::span<const UserId> w, std::uint32_t cbar);

/// Partition-style cover by co-cbar-plexes (sets where every member has at
/// most cbar-1 internal neighbors): i greedy passes over rotated
/// degree-descending orders, so every vertex appears in exactly i sets.
std::vector<VertexSet> co_plex_cover(const SocialGraph& g, std::uint32_t cbar, std::uint32_t i);

/// Upper bound on the size of the largest cbar-plex in g, minimized over
/// covers of multiplicity 1..p.
std::uint64_t kplex_upper_bound(const SocialGraph& g, std::uint32_t cbar, std::uint32_t p);

}  // namespace gsg
