#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "gsg/index.hpp"
#include "gsg/social_graph.hpp"

namespace gsg {

enum class ConstraintType { Range, RelaxedKnn, StrictKnn };

/// A geo-social group query: issuer, spatial constraint, minimum degree c.
struct QuerySpec {
    UserId issuer = 0;
    ConstraintType type = ConstraintType::Range;
    Rect range;           // Range only; must contain the issuer's point
    std::uint32_t k = 0;  // kNN forms
    std::uint32_t c = 1;
};

/// Answer group (excluding the issuer) with provenance metrics. A nonempty
/// group W always satisfies min-degree(G[W + issuer]) >= c.
struct GroupResult {
    VertexSet members;
    double d_max = 0.0;
    PageCounters counters;
    double cpu_ms = 0.0;
    double wall_ms = 0.0;

    bool empty() const { return members.empty(); }
};

/// Optional instrumentation filled during query processing; used by the
/// pruning-safety and cost-dominance checks.
struct QueryTrace {
    struct Pop {
        double key;
        bool leaf;
        std::uint64_t id;  // child page (internal) or user id (leaf)
    };
    std::vector<Pop> pops;                      // frontier pops in order
    std::vector<std::uint64_t> explored_pages;  // internal entries expanded
    std::vector<std::uint64_t> cbr_pruned_pages;
    std::vector<UserId> cbr_pruned_users;
};

/// Exact search for a c-core of size k+1 that contains S and expands only
/// into U (branch and bound with k-plex filtering, core-decomposition
/// pruning and the co-plex size bound). Returns the found set or empty.
/// Candidates are tried nearest to `issuer` first.
VertexSet find_exact_knn(const SocialGraph& g, VertexSet u_set, VertexSet s_set, std::uint32_t c,
                         std::uint32_t k, UserId issuer);

/// Query processors over one index/graph snapshot. Read-only and safe to use
/// from several threads concurrently, one QueryEngine per thread; every
/// query owns its counters.
class QueryEngine {
public:
    QueryEngine(const Index& index, const SocialGraph& g, const CoreIndex& core)
        : index_(index), g_(g), core_(core) {}

    /// Dispatches on the query type and index kind (social-aware processing
    /// for SAR/SARSTAR, the plain R-tree procedure otherwise).
    GroupResult run(const QuerySpec& q, QueryTrace* trace = nullptr) const;

    GroupResult gsgq_range(const QuerySpec& q, QueryTrace* trace = nullptr) const;
    GroupResult gsgq_rknn(const QuerySpec& q, QueryTrace* trace = nullptr) const;
    GroupResult gsgq_knn(const QuerySpec& q, QueryTrace* trace = nullptr) const;

    GroupResult baseline_range(const QuerySpec& q, QueryTrace* trace = nullptr) const;
    GroupResult baseline_rknn(const QuerySpec& q, QueryTrace* trace = nullptr) const;
    GroupResult baseline_knn(const QuerySpec& q, QueryTrace* trace = nullptr) const;

    /// Plain spatial kNN without any social constraint; the control used to
    /// show that purely spatial groups have no acquaintance guarantee.
    GroupResult spatial_knn(UserId issuer, std::uint32_t k) const;

    const Index& index() const { return index_; }

private:
    const Index& index_;
    const SocialGraph& g_;
    const CoreIndex& core_;

    GroupResult range_impl(const QuerySpec& q, bool use_cbrs, QueryTrace* trace) const;
    GroupResult knn_impl(const QuerySpec& q, bool use_cbrs, bool strict, QueryTrace* trace) const;
    const Rect* issuer_cbr(UserId v, std::uint32_t c_rounded, PageCounters& pc,
                           CbrLadder& out) const;
    friend class MemoQueryRunner;
};

/// Rounds a minimum-degree constraint down to the stored ladder level.
inline std::uint32_t ladder_level_for(std::uint32_t c) {
    return c == 0 ? 0 : 1u << (31 - __builtin_clz(c));
}

}  // namespace gsg
