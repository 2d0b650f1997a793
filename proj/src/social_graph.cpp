#include "gsg/social_graph.hpp"

#include <algorithm>
#include <numeric>

namespace gsg {

SocialGraph::SocialGraph(std::vector<Point> locations,
                         const std::vector<std::pair<UserId, UserId>>& edges)
    : adjacency_(locations.size()), locations_(std::move(locations)) {
    for (auto [u, v] : edges) {
        if (u == v || u >= adjacency_.size() || v >= adjacency_.size())
            throw std::invalid_argument("bad edge endpoint");
        adjacency_[u].push_back(v);
        adjacency_[v].push_back(u);
    }
    for (auto& nbrs : adjacency_) {
        std::sort(nbrs.begin(), nbrs.end());
        nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
        edge_count_ += nbrs.size();
    }
    edge_count_ /= 2;
}

bool SocialGraph::has_edge(UserId u, UserId v) const {
    const auto& nbrs = adjacency_[u];
    return std::binary_search(nbrs.begin(), nbrs.end(), v);
}

bool SocialGraph::add_edge(UserId u, UserId v) {
    if (u == v || has_edge(u, v)) return false;
    auto& nu = adjacency_[u];
    nu.insert(std::lower_bound(nu.begin(), nu.end(), v), v);
    auto& nv = adjacency_[v];
    nv.insert(std::lower_bound(nv.begin(), nv.end(), u), u);
    ++edge_count_;
    return true;
}

bool SocialGraph::remove_edge(UserId u, UserId v) {
    if (!has_edge(u, v)) return false;
    auto& nu = adjacency_[u];
    nu.erase(std::lower_bound(nu.begin(), nu.end(), v));
    auto& nv = adjacency_[v];
    nv.erase(std::lower_bound(nv.begin(), nv.end(), u));
    --edge_count_;
    return true;
}

CoreIndex core_decompose(const SocialGraph& g) {
    const std::size_t n = g.user_count();
    CoreIndex idx;
    idx.core_number.assign(n, 0);
    if (n == 0) return idx;

    // Bucket sort by degree, then peel minimum-degree vertices in order.
    std::vector<std::uint32_t> deg(n);
    std::uint32_t max_deg = 0;
    for (UserId v = 0; v < n; ++v) {
        deg[v] = static_cast<std::uint32_t>(g.degree(v));
        max_deg = std::max(max_deg, deg[v]);
    }
    std::vector<std::uint32_t> bin(max_deg + 2, 0);
    for (UserId v = 0; v < n; ++v) ++bin[deg[v]];
    std::uint32_t start = 0;
    for (std::uint32_t d = 0; d <= max_deg; ++d) {
        std::uint32_t count = bin[d];
        bin[d] = start;
        start += count;
    }
    std::vector<UserId> order(n);
    std::vector<std::uint32_t> pos(n);
    for (UserId v = 0; v < n; ++v) {
        pos[v] = bin[deg[v]];
        order[pos[v]] = v;
        ++bin[deg[v]];
    }
    for (std::uint32_t d = max_deg + 1; d > 0; --d) bin[d] = bin[d - 1];
    bin[0] = 0;

    for (std::size_t i = 0; i < n; ++i) {
        UserId v = order[i];
        idx.core_number[v] = deg[v];
        for (UserId u : g.neighbors(v)) {
            if (deg[u] > deg[v]) {
                // Move u one bucket down: swap with the first vertex of its bucket.
                std::uint32_t du = deg[u];
                std::uint32_t pu = pos[u];
                std::uint32_t pw = bin[du];
                UserId w = order[pw];
                if (u != w) {
                    std::swap(order[pu], order[pw]);
                    pos[u] = pw;
                    pos[w] = pu;
                }
                ++bin[du];
                --deg[u];
            }
        }
    }
    idx.max_core = *std::max_element(idx.core_number.begin(), idx.core_number.end());
    return idx;
}

VertexSet max_c_core(const SocialGraph& g, std::span<const UserId> candidates, std::uint32_t c) {
    const std::size_t n = g.user_count();
    std::vector<std::uint8_t> in_set(n, 0);
    for (UserId v : candidates) in_set[v] = 1;

    std::vector<std::uint32_t> deg(n, 0);
    std::vector<UserId> kill;
    for (UserId v : candidates) {
        if (!in_set[v]) continue;  // duplicate in input
        std::uint32_t d = 0;
        for (UserId u : g.neighbors(v))
            if (in_set[u]) ++d;
        deg[v] = d;
        if (d < c) kill.push_back(v);
    }
    // Cascade removals; each vertex is processed once.
    while (!kill.empty()) {
        UserId v = kill.back();
        kill.pop_back();
        if (!in_set[v]) continue;
        in_set[v] = 0;
        for (UserId u : g.neighbors(v)) {
            if (in_set[u] && deg[u]-- == c) kill.push_back(u);
        }
    }
    VertexSet out;
    for (UserId v : candidates)
        if (in_set[v]) {
            out.push_back(v);
            in_set[v] = 0;  // dedupe output
        }
    std::sort(out.begin(), out.end());
    return out;
}

bool is_c_core(const SocialGraph& g, std::span<const UserId> w, std::uint32_t c) {
    if (w.empty()) return c == 0;
    std::vector<UserId> sorted(w.begin(), w.end());
    std::sort(sorted.begin(), sorted.end());
    for (UserId v : sorted) {
        std::uint32_t d = 0;
        for (UserId u : g.neighbors(v))
            if (std::binary_search(sorted.begin(), sorted.end(), u)) ++d;
        if (d < c) return false;
    }
    return true;
}

double max_dist_to_set(const SocialGraph& g, UserId v, std::span<const UserId> w) {
    if (w.empty()) throw std::invalid_argument("max_dist_to_set: empty set");
    double best = 0.0;
    for (UserId u : w) best = std::max(best, dist(g.location(v), g.location(u)));
    return best;
}

bool is_k_plex(const SocialGraph& g, std::span<const UserId> w, std::uint32_t cbar) {
    if (w.empty()) return true;
    std::vector<UserId> sorted(w.begin(), w.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t need = sorted.size() > cbar ? sorted.size() - cbar : 0;
    for (UserId v : sorted) {
        std::uint32_t d = 0;
        for (UserId u : g.neighbors(v))
            if (std::binary_search(sorted.begin(), sorted.end(), u)) ++d;
        if (d < need) return false;
    }
    return true;
}

std::vector<VertexSet> co_plex_cover(const SocialGraph& g, std::uint32_t cbar, std::uint32_t i) {
    const std::size_t n = g.user_count();
    std::vector<VertexSet> cover;
    if (n == 0) return cover;

    std::vector<UserId> base(n);
    std::iota(base.begin(), base.end(), 0);
    std::stable_sort(base.begin(), base.end(), [&](UserId a, UserId b) {
        return g.degree(a) > g.degree(b);
    });

    std::vector<std::uint32_t> internal(n);  // neighbor count inside the open set
    std::vector<std::uint8_t> in_open(n), used(n);
    for (std::uint32_t pass = 0; pass < i; ++pass) {
        std::vector<UserId> order(n);
        std::size_t shift = (n * pass) / i;
        for (std::size_t k = 0; k < n; ++k) order[k] = base[(k + shift) % n];

        std::fill(used.begin(), used.end(), 0);
        std::size_t remaining = n;
        while (remaining > 0) {
            VertexSet set;
            for (UserId v : order) {
                if (used[v]) continue;
                // v may join if it has <= cbar-1 members as neighbors and
                // adding it keeps every current member under the cap.
                std::uint32_t d = 0;
                bool ok = true;
                for (UserId u : g.neighbors(v)) {
                    if (!in_open[u]) continue;
                    ++d;
                    if (internal[u] + 1 > cbar - 1) {
                        ok = false;
                        break;
                    }
                }
                if (!ok || d > cbar - 1) continue;
                for (UserId u : g.neighbors(v))
                    if (in_open[u]) ++internal[u];
                internal[v] = d;
                in_open[v] = 1;
                used[v] = 1;
                set.push_back(v);
                --remaining;
            }
            for (UserId v : set) in_open[v] = 0;
            std::sort(set.begin(), set.end());
            cover.push_back(std::move(set));
        }
    }
    return cover;
}

std::uint64_t kplex_upper_bound(const SocialGraph& g, std::uint32_t cbar, std::uint32_t p) {
    const std::size_t n = g.user_count();
    if (n == 0) return 0;

    // count_ge[d] = number of vertices of degree >= d.
    std::uint32_t max_deg = 0;
    for (UserId v = 0; v < n; ++v)
        max_deg = std::max<std::uint32_t>(max_deg, static_cast<std::uint32_t>(g.degree(v)));
    std::vector<std::uint64_t> count_ge(max_deg + 2, 0);
    for (UserId v = 0; v < n; ++v) ++count_ge[g.degree(v)];
    for (std::uint32_t d = max_deg + 1; d > 0; --d) count_ge[d - 1] += count_ge[d];

    auto degree_cap = [&](std::uint64_t threshold) -> std::uint64_t {
        // max d with count_ge[d] >= threshold; 0 when even d=0 fails.
        std::uint64_t best = 0;
        for (std::uint32_t d = 0; d <= max_deg; ++d)
            if (count_ge[d] >= threshold) best = d;
        return best;
    };

    std::vector<std::uint8_t> in_set(n, 0);
    std::uint64_t best = UINT64_MAX;
    for (std::uint32_t i = 1; i <= p; ++i) {
        auto cover = co_plex_cover(g, cbar, i);
        std::uint64_t sum = 0;
        const std::uint64_t parity_cap = 2ull * cbar - 2 + (cbar % 2);
        for (std::size_t j = 0; j < cover.size(); ++j) {
            const auto& set = cover[j];
            for (UserId v : set) in_set[v] = 1;
            std::uint64_t delta = 0;
            for (UserId v : set) {
                std::uint64_t d = 0;
                for (UserId u : g.neighbors(v))
                    if (in_set[u]) ++d;
                delta = std::max(delta, d);
            }
            for (UserId v : set) in_set[v] = 0;

            std::uint64_t a = degree_cap(static_cast<std::uint64_t>(cbar) + (j + 1));
            std::uint64_t term = std::min(std::min(parity_cap, cbar + a),
                                          std::min(delta + cbar, static_cast<std::uint64_t>(set.size())));
            sum += term;
        }
        best = std::min(best, sum / i);
    }
    return best;
}

}  // namespace gsg
