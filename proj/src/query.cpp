#include "gsg/query.hpp"

#include <algorithm>
#include <chrono>
#include <queue>

namespace gsg {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

/// Visited candidate set with incrementally maintained induced adjacency.
/// The max c-core is re-peeled per round over the maintained subgraph (a
/// full from-scratch recompute is cross-checked in tests).
class CandidateSet {
public:
    explicit CandidateSet(std::size_t n) : local_of_(n, -1) {}

    bool contains(UserId u) const { return local_of_[u] >= 0; }
    const std::vector<UserId>& members() const { return members_; }

    void add(UserId u, std::span<const UserId> neighbors) {
        std::int32_t lu = static_cast<std::int32_t>(members_.size());
        local_of_[u] = lu;
        members_.push_back(u);
        adj_.emplace_back();
        for (UserId w : neighbors) {
            std::int32_t lw = local_of_[w];
            if (lw >= 0 && w != u) {
                adj_[lu].push_back(lw);
                adj_[lw].push_back(lu);
            }
        }
    }

    VertexSet max_core_subset(std::uint32_t c) const {
        const std::size_t t = members_.size();
        std::vector<std::uint32_t> deg(t);
        std::vector<std::uint8_t> alive(t, 1);
        std::vector<std::int32_t> kill;
        for (std::size_t i = 0; i < t; ++i) {
            deg[i] = static_cast<std::uint32_t>(adj_[i].size());
            if (deg[i] < c) kill.push_back(static_cast<std::int32_t>(i));
        }
        while (!kill.empty()) {
            std::int32_t i = kill.back();
            kill.pop_back();
            if (!alive[i]) continue;
            alive[i] = 0;
            for (std::int32_t w : adj_[i])
                if (alive[w] && deg[w]-- == c) kill.push_back(w);
        }
        VertexSet out;
        for (std::size_t i = 0; i < t; ++i)
            if (alive[i]) out.push_back(members_[i]);
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    std::vector<std::int32_t> local_of_;
    std::vector<UserId> members_;
    std::vector<std::vector<std::int32_t>> adj_;
};

struct FrontierItem {
    double key;
    bool leaf;
    std::uint64_t id;    // child page or user id
    Rect mbr;
    std::uint32_t core;
    double d_in;  // social component of the key, kept for instrumentation

    // Min-key first; ties: internal entries before leaf entries, then id.
    bool operator>(const FrontierItem& o) const {
        if (key != o.key) return key > o.key;
        if (leaf != o.leaf) return leaf && !o.leaf;
        return id > o.id;
    }
};

using Frontier =
    std::priority_queue<FrontierItem, std::vector<FrontierItem>, std::greater<FrontierItem>>;

}  // namespace

// ---------------------------------------------------------------------------
// FindExactkNN
// ---------------------------------------------------------------------------

namespace {

VertexSet set_minus(const VertexSet& a, const VertexSet& b) {
    VertexSet out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

bool is_subset(const VertexSet& a, const VertexSet& b) {
    return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

VertexSet set_union(const VertexSet& a, const VertexSet& b) {
    VertexSet out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

SocialGraph induced_subgraph(const SocialGraph& g, const VertexSet& users,
                             std::vector<UserId>& back) {
    back.assign(users.begin(), users.end());
    std::vector<Point> locs(users.size());
    std::vector<std::pair<UserId, UserId>> edges;
    for (std::size_t i = 0; i < users.size(); ++i) {
        locs[i] = g.location(users[i]);
        for (UserId w : g.neighbors(users[i])) {
            auto it = std::lower_bound(users.begin(), users.end(), w);
            if (it != users.end() && *it == w) {
                std::size_t j = static_cast<std::size_t>(it - users.begin());
                if (j > i) edges.emplace_back(static_cast<UserId>(i), static_cast<UserId>(j));
            }
        }
    }
    return SocialGraph(std::move(locs), edges);
}

}  // namespace

VertexSet find_exact_knn(const SocialGraph& g, VertexSet u_set, VertexSet s_set, std::uint32_t c,
                         std::uint32_t k, UserId issuer) {
    std::sort(s_set.begin(), s_set.end());
    std::sort(u_set.begin(), u_set.end());
    const std::uint32_t cbar = k + 1 - c;  // callers guarantee c <= k+1

    if (s_set.size() >= static_cast<std::size_t>(k) + 1) {
        // Sets reaching target size went through the k-plex filter except at
        // the top-level call, so re-check the degree guarantee.
        if (s_set.size() == static_cast<std::size_t>(k) + 1 && is_c_core(g, s_set, c))
            return s_set;
        return {};
    }

    const Point& pi = g.location(issuer);
    std::stable_sort(u_set.begin(), u_set.end(), [&](UserId a, UserId b) {
        return dist(pi, g.location(a)) < dist(pi, g.location(b));
    });

    while (!u_set.empty()) {
        UserId u = u_set.front();
        u_set.erase(u_set.begin());
        VertexSet s_next = s_set;
        s_next.insert(std::lower_bound(s_next.begin(), s_next.end(), u), u);

        if (s_next.size() == static_cast<std::size_t>(k) + 1) {
            if (is_c_core(g, s_next, c)) return s_next;
        } else {
            // Keep only candidates that leave s_next extendable as a plex.
            VertexSet filtered;
            for (UserId w : u_set) {
                VertexSet probe = s_next;
                probe.insert(std::lower_bound(probe.begin(), probe.end(), w), w);
                if (is_k_plex(g, probe, cbar)) filtered.push_back(w);
            }
            VertexSet merged = set_union(filtered, s_next);
            VertexSet w_core = max_c_core(g, merged, c);
            if (w_core.size() >= static_cast<std::size_t>(k) + 1 && is_subset(s_next, w_core)) {
                if (w_core.size() == static_cast<std::size_t>(k) + 1) return w_core;
                VertexSet u_next = set_minus(w_core, s_next);
                std::vector<UserId> back;
                SocialGraph sub = induced_subgraph(g, set_union(u_next, s_next), back);
                if (kplex_upper_bound(sub, cbar, 2) >= static_cast<std::uint64_t>(k) + 1) {
                    VertexSet found = find_exact_knn(g, u_next, s_next, c, k, issuer);
                    if (!found.empty()) return found;
                }
            }
        }
        // Roll back: re-derive the candidate pool around the unexpanded S.
        VertexSet pool = max_c_core(g, set_union(s_set, u_set), c);
        if (pool.size() >= static_cast<std::size_t>(k) + 1 && is_subset(s_set, pool))
            u_set = set_minus(pool, s_set);
        else
            break;
        std::stable_sort(u_set.begin(), u_set.end(), [&](UserId a, UserId b) {
            return dist(pi, g.location(a)) < dist(pi, g.location(b));
        });
    }
    return {};
}

// ---------------------------------------------------------------------------
// Range processing
// ---------------------------------------------------------------------------

const Rect* QueryEngine::issuer_cbr(UserId v, std::uint32_t c_rounded, PageCounters& pc,
                                    CbrLadder& out) const {
    // Point-containment descent to the issuer's leaf entry; reads are charged
    // like any other node access.
    const Point& pv = g_.location(v);
    std::vector<std::uint64_t> stack{index_.root_page()};
    while (!stack.empty()) {
        std::uint64_t pid = stack.back();
        stack.pop_back();
        IndexNode node = index_.read_node(pid, pc);
        for (const EntryMeta& e : node.entries) {
            if (node.leaf) {
                if (e.child == v) {
                    out = e.cbrs;
                    return out.lookup(c_rounded);
                }
            } else if (e.mbr.contains(pv)) {
                stack.push_back(e.child);
            }
        }
    }
    return nullptr;
}

GroupResult QueryEngine::range_impl(const QuerySpec& q, bool use_cbrs, QueryTrace* trace) const {
    auto start = Clock::now();
    GroupResult res;
    const UserId v = q.issuer;
    if (v >= g_.user_count()) throw std::invalid_argument("unknown issuer");
    if (!q.range.contains(g_.location(v)))
        throw std::invalid_argument("issuer outside query range");
    const std::uint32_t c = q.c;
    const std::uint32_t c_rounded = ladder_level_for(c);

    if (use_cbrs) {
        if (core_.core_number[v] < c) {
            res.cpu_ms = res.wall_ms = elapsed_ms(start);
            return res;
        }
        CbrLadder vl;
        const Rect* vr = issuer_cbr(v, c_rounded, res.counters, vl);
        if (vr && contained_in_interior(q.range, *vr)) {
            res.cpu_ms = res.wall_ms = elapsed_ms(start);
            return res;
        }
    }

    const bool core_prune = index_.social_metadata();
    std::vector<UserId> candidates;
    std::vector<std::uint64_t> stack{index_.root_page()};
    while (!stack.empty()) {
        std::uint64_t pid = stack.back();
        stack.pop_back();
        IndexNode node = index_.read_node(pid, res.counters);
        for (const EntryMeta& e : node.entries) {
            if (!e.mbr.intersects(q.range)) continue;
            if (core_prune && e.core_number < c) continue;
            if (use_cbrs) {
                const Rect* r = e.cbrs.lookup(c_rounded);
                if (r && contained_in_interior(q.range, *r)) {
                    if (trace) {
                        if (node.leaf)
                            trace->cbr_pruned_users.push_back(static_cast<UserId>(e.child));
                        else
                            trace->cbr_pruned_pages.push_back(e.child);
                    }
                    continue;
                }
            }
            if (node.leaf) {
                if (q.range.contains(e.mbr.lo)) candidates.push_back(static_cast<UserId>(e.child));
            } else {
                stack.push_back(e.child);
            }
        }
    }

    std::sort(candidates.begin(), candidates.end());
    CandidateSet cand(g_.user_count());
    for (UserId u : candidates) {
        UserRecord rec = index_.read_user(u, res.counters);
        cand.add(u, rec.neighbors);
    }
    VertexSet w_core = cand.max_core_subset(c);
    if (std::binary_search(w_core.begin(), w_core.end(), v)) {
        w_core.erase(std::lower_bound(w_core.begin(), w_core.end(), v));
        res.members = std::move(w_core);
        if (!res.members.empty()) res.d_max = max_dist_to_set(g_, v, res.members);
    }
    res.cpu_ms = res.wall_ms = elapsed_ms(start);
    return res;
}

// ---------------------------------------------------------------------------
// kNN processing (relaxed and strict)
// ---------------------------------------------------------------------------

GroupResult QueryEngine::knn_impl(const QuerySpec& q, bool use_cbrs, bool strict,
                                  QueryTrace* trace) const {
    auto start = Clock::now();
    GroupResult res;
    const UserId v = q.issuer;
    if (v >= g_.user_count()) throw std::invalid_argument("unknown issuer");
    const std::uint32_t c = q.c;
    const std::uint32_t k = q.k;
    const std::uint32_t c_rounded = ladder_level_for(c);
    const bool core_prune = index_.social_metadata();
    const Point pv = g_.location(v);

    if (core_prune && core_.core_number[v] < c) {
        res.cpu_ms = res.wall_ms = elapsed_ms(start);
        return res;
    }
    if (strict && c > k) {  // a c-core of size k+1 needs c <= k
        res.cpu_ms = res.wall_ms = elapsed_ms(start);
        return res;
    }

    CandidateSet cand(g_.user_count());
    {
        UserRecord rec = index_.read_user(v, res.counters);
        cand.add(v, rec.neighbors);
    }

    auto entry_key = [&](const EntryMeta& e) {
        double d_sp = min_dist_point_rect(pv, e.mbr);
        double d_in = 0.0;
        if (use_cbrs) {
            if (const Rect* r = e.cbrs.lookup(c_rounded)) d_in = inside_dist(pv, *r);
        }
        return std::make_pair(std::max(d_sp, d_in), d_in);
    };

    Frontier frontier;
    {
        IndexNode root = index_.read_node(index_.root_page(), res.counters);
        if (trace) trace->explored_pages.push_back(root.page_id);
        for (const EntryMeta& e : root.entries) {
            if (core_prune && e.core_number < c) continue;
            auto [key, d_in] = entry_key(e);
            frontier.push({key, root.leaf, e.child, e.mbr, e.core_number, d_in});
        }
    }

    double last_key = -1.0;
    while (!frontier.empty()) {
        FrontierItem top = frontier.top();
        frontier.pop();
        last_key = std::max(last_key, top.key);
        if (trace) trace->pops.push_back({top.key, top.leaf, top.id});

        if (!top.leaf) {
            IndexNode node = index_.read_node(top.id, res.counters);
            if (trace) trace->explored_pages.push_back(top.id);
            for (const EntryMeta& e : node.entries) {
                if (core_prune && e.core_number < c) continue;
                auto [key, d_in] = entry_key(e);
                // The parent's key is a valid bound for everything it covers,
                // so floor the child's key at it; pops stay non-decreasing.
                key = std::max(key, top.key);
                frontier.push({key, node.leaf, e.child, e.mbr, e.core_number, d_in});
            }
            continue;
        }

        const UserId u = static_cast<UserId>(top.id);
        if (u == v) continue;  // the issuer is already in the candidate set
        // With social metadata the entry's core number was checked before the
        // push; the plain R-tree has no core data and admits every user.
        UserRecord rec = index_.read_user(u, res.counters);
        cand.add(u, rec.neighbors);
        if (cand.members().size() < static_cast<std::size_t>(k) + 1) continue;

        VertexSet w_core = cand.max_core_subset(c);
        if (w_core.size() < static_cast<std::size_t>(k) + 1) continue;
        if (!std::binary_search(w_core.begin(), w_core.end(), v)) continue;

        if (!strict) {
            w_core.erase(std::lower_bound(w_core.begin(), w_core.end(), v));
            res.members = std::move(w_core);
            res.d_max = max_dist_to_set(g_, v, res.members);
            res.cpu_ms = res.wall_ms = elapsed_ms(start);
            return res;
        }

        // Strict form: any exact-size group discovered now must contain the
        // newly accessed user, so expand from {v, u} inside the max core.
        if (!std::binary_search(w_core.begin(), w_core.end(), u)) continue;
        std::vector<UserId> back;
        SocialGraph sub = induced_subgraph(g_, w_core, back);
        auto local = [&](UserId id) {
            return static_cast<UserId>(
                std::lower_bound(back.begin(), back.end(), id) - back.begin());
        };
        VertexSet s_local{local(v), local(u)};
        std::sort(s_local.begin(), s_local.end());
        VertexSet u_local;
        for (UserId w : w_core)
            if (w != v && w != u) u_local.push_back(local(w));
        VertexSet found = find_exact_knn(sub, u_local, s_local, c, k, local(v));
        if (!found.empty()) {
            VertexSet out;
            for (UserId lw : found)
                if (back[lw] != v) out.push_back(back[lw]);
            std::sort(out.begin(), out.end());
            res.members = std::move(out);
            res.d_max = max_dist_to_set(g_, v, res.members);
            res.cpu_ms = res.wall_ms = elapsed_ms(start);
            return res;
        }
    }
    res.cpu_ms = res.wall_ms = elapsed_ms(start);
    return res;
}

// ---------------------------------------------------------------------------
// Public surface
// ---------------------------------------------------------------------------

GroupResult QueryEngine::gsgq_range(const QuerySpec& q, QueryTrace* trace) const {
    return range_impl(q, index_.has_cbrs(), trace);
}

GroupResult QueryEngine::gsgq_rknn(const QuerySpec& q, QueryTrace* trace) const {
    return knn_impl(q, index_.has_cbrs(), false, trace);
}

GroupResult QueryEngine::gsgq_knn(const QuerySpec& q, QueryTrace* trace) const {
    return knn_impl(q, index_.has_cbrs(), true, trace);
}

GroupResult QueryEngine::baseline_range(const QuerySpec& q, QueryTrace* trace) const {
    return range_impl(q, false, trace);
}

GroupResult QueryEngine::baseline_rknn(const QuerySpec& q, QueryTrace* trace) const {
    return knn_impl(q, false, false, trace);
}

GroupResult QueryEngine::baseline_knn(const QuerySpec& q, QueryTrace* trace) const {
    return knn_impl(q, false, true, trace);
}

GroupResult QueryEngine::run(const QuerySpec& q, QueryTrace* trace) const {
    const bool social = index_.has_cbrs();
    switch (q.type) {
        case ConstraintType::Range:
            return social ? gsgq_range(q, trace) : baseline_range(q, trace);
        case ConstraintType::RelaxedKnn:
            return social ? gsgq_rknn(q, trace) : baseline_rknn(q, trace);
        default:
            return social ? gsgq_knn(q, trace) : baseline_knn(q, trace);
    }
}

GroupResult QueryEngine::spatial_knn(UserId issuer, std::uint32_t k) const {
    auto start = Clock::now();
    GroupResult res;
    const Point pv = g_.location(issuer);

    Frontier frontier;
    IndexNode root = index_.read_node(index_.root_page(), res.counters);
    for (const EntryMeta& e : root.entries)
        frontier.push({min_dist_point_rect(pv, e.mbr), root.leaf, e.child, e.mbr, 0, 0.0});
    while (!frontier.empty() && res.members.size() < k) {
        FrontierItem top = frontier.top();
        frontier.pop();
        if (top.leaf) {
            if (static_cast<UserId>(top.id) == issuer) continue;
            res.members.push_back(static_cast<UserId>(top.id));
            res.d_max = std::max(res.d_max, top.key);
        } else {
            IndexNode node = index_.read_node(top.id, res.counters);
            for (const EntryMeta& e : node.entries)
                frontier.push({min_dist_point_rect(pv, e.mbr), node.leaf, e.child, e.mbr, 0, 0.0});
        }
    }
    std::sort(res.members.begin(), res.members.end());
    res.cpu_ms = res.wall_ms = elapsed_ms(start);
    return res;
}

}  // namespace gsg
