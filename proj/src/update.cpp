#include "gsg/update.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

namespace gsg {

namespace {
using Clock = std::chrono::steady_clock;
double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}
}  // namespace

// ---------------------------------------------------------------------------
// Update stream file
// ---------------------------------------------------------------------------

std::vector<UserUpdate> parse_update_stream(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read update stream " + path);
    std::vector<UserUpdate> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        UserUpdate u;
        u.sequence = out.size();
        if (tag == "M") {
            std::uint64_t id;
            if (!(ss >> id >> u.new_location.x >> u.new_location.y))
                throw std::runtime_error("bad update at line " + std::to_string(line_no));
            u.kind = UserUpdate::Kind::LocationMove;
            u.subject = static_cast<UserId>(id);
        } else if (tag == "E+" || tag == "E-") {
            std::uint64_t a, b;
            if (!(ss >> a >> b))
                throw std::runtime_error("bad update at line " + std::to_string(line_no));
            u.kind = tag == "E+" ? UserUpdate::Kind::EdgeAdd : UserUpdate::Kind::EdgeRemove;
            u.subject = static_cast<UserId>(a);
            u.other = static_cast<UserId>(b);
        } else {
            throw std::runtime_error("bad update tag at line " + std::to_string(line_no));
        }
        out.push_back(u);
    }
    return out;
}

void write_update_stream(const std::string& path, std::span<const UserUpdate> updates) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write update stream " + path);
    f.precision(17);
    for (const UserUpdate& u : updates) {
        switch (u.kind) {
            case UserUpdate::Kind::LocationMove:
                f << "M " << u.subject << ' ' << u.new_location.x << ' ' << u.new_location.y
                  << '\n';
                break;
            case UserUpdate::Kind::EdgeAdd:
                f << "E+ " << u.subject << ' ' << u.other << '\n';
                break;
            case UserUpdate::Kind::EdgeRemove:
                f << "E- " << u.subject << ' ' << u.other << '\n';
                break;
        }
    }
}

// ---------------------------------------------------------------------------
// Update rules
// ---------------------------------------------------------------------------

// Rect membership here is the open interior: users on the bounding edges are
// exempt from a CBR's guarantee, so only a move that ends strictly inside
// (from not-strictly-inside, which includes the boundary) can break it.
bool rule1_flags(const UserUpdate& move, const Rect& cbr_rect, std::uint32_t level_c,
                 const CoreIndex& core) {
    if (move.kind != UserUpdate::Kind::LocationMove) return false;
    if (core.core_number[move.subject] < level_c) return false;
    return !strictly_inside(move.old_location, cbr_rect) &&
           strictly_inside(move.new_location, cbr_rect);
}

bool rule2_flags(const UserUpdate& edge_add, const Rect& cbr_rect, std::uint32_t level_c,
                 const CoreIndex& core, const SocialGraph& g) {
    if (edge_add.kind != UserUpdate::Kind::EdgeAdd) return false;
    if (std::min(core.core_number[edge_add.subject], core.core_number[edge_add.other]) < level_c)
        return false;
    return strictly_inside(g.location(edge_add.subject), cbr_rect) &&
           strictly_inside(g.location(edge_add.other), cbr_rect);
}

// ---------------------------------------------------------------------------
// CbrRectIndex
// ---------------------------------------------------------------------------

void CbrRectIndex::clear() {
    nodes_.clear();
    root_ = -1;
    count_ = 0;
}

void CbrRectIndex::pack(std::vector<Item> all) {
    clear();
    count_ = all.size();
    if (all.empty()) return;
    // Sort-tile-recursive packing: x slices, y order within each slice.
    std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) {
        double ax = a.rect.center().x, bx = b.rect.center().x;
        if (ax != bx) return ax < bx;
        return std::make_pair(a.owner, a.exponent) < std::make_pair(b.owner, b.exponent);
    });
    std::size_t leaves = (all.size() + kFanout - 1) / kFanout;
    std::size_t slices = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(leaves))));
    std::size_t per_slice = slices * kFanout;
    for (std::size_t s = 0; s * per_slice < all.size(); ++s) {
        auto lo = all.begin() + static_cast<std::ptrdiff_t>(s * per_slice);
        auto hi = all.begin() +
                  static_cast<std::ptrdiff_t>(std::min(all.size(), (s + 1) * per_slice));
        std::sort(lo, hi, [](const Item& a, const Item& b) {
            double ay = a.rect.center().y, by = b.rect.center().y;
            if (ay != by) return ay < by;
            return std::make_pair(a.owner, a.exponent) < std::make_pair(b.owner, b.exponent);
        });
    }
    std::vector<std::int32_t> level;
    for (std::size_t i = 0; i < all.size(); i += kFanout) {
        Node n;
        n.leaf = true;
        n.items.assign(all.begin() + static_cast<std::ptrdiff_t>(i),
                       all.begin() + static_cast<std::ptrdiff_t>(std::min(all.size(), i + kFanout)));
        n.mbr = n.items.front().rect;
        for (const Item& it : n.items) n.mbr = rect_union(n.mbr, it.rect);
        nodes_.push_back(std::move(n));
        level.push_back(static_cast<std::int32_t>(nodes_.size() - 1));
    }
    while (level.size() > 1) {
        std::vector<std::int32_t> next;
        for (std::size_t i = 0; i < level.size(); i += kFanout) {
            Node n;
            n.leaf = false;
            n.child.assign(level.begin() + static_cast<std::ptrdiff_t>(i),
                           level.begin() + static_cast<std::ptrdiff_t>(std::min(level.size(), i + kFanout)));
            n.mbr = nodes_[n.child.front()].mbr;
            for (std::int32_t ch : n.child) n.mbr = rect_union(n.mbr, nodes_[ch].mbr);
            nodes_.push_back(std::move(n));
            next.push_back(static_cast<std::int32_t>(nodes_.size() - 1));
        }
        level = std::move(next);
    }
    root_ = level.front();
}

void CbrRectIndex::build_from(const Index& index) {
    std::vector<Item> all;
    for (UserId v = 0; v < index.user_count(); ++v) {
        const CbrLadder& lad = index.user_ladder(v);
        for (const CbrLevel& lvl : lad.levels) all.push_back({lvl.rect, v, lvl.exponent});
    }
    pack(std::move(all));
}

std::vector<CbrRectIndex::Item> CbrRectIndex::point_query(const Point& p) const {
    std::vector<Item> out;
    if (root_ < 0) return out;
    std::vector<std::int32_t> stack{root_};
    while (!stack.empty()) {
        const Node& n = nodes_[stack.back()];
        stack.pop_back();
        if (!n.mbr.contains(p)) continue;
        if (n.leaf) {
            for (const Item& it : n.items)
                if (it.rect.contains(p)) out.push_back(it);
        } else {
            for (std::int32_t ch : n.child) stack.push_back(ch);
        }
    }
    std::sort(out.begin(), out.end(), [](const Item& a, const Item& b) {
        return std::make_pair(a.owner, a.exponent) < std::make_pair(b.owner, b.exponent);
    });
    return out;
}

// ---------------------------------------------------------------------------
// UpdateEngine
// ---------------------------------------------------------------------------

UpdateEngine::UpdateEngine(SocialGraph& g, CoreIndex& core, Index& index,
                           std::uint64_t batch_threshold)
    : g_(g), core_(core), index_(index), threshold_(batch_threshold),
      cbr_(g, core, index.domain()) {
    if (index_.has_cbrs()) rect_index_.build_from(index_);
}

void UpdateEngine::apply_update(UserUpdate u) {
    const std::size_t n = g_.user_count();
    if (u.subject >= n || (u.kind != UserUpdate::Kind::LocationMove && u.other >= n))
        throw std::invalid_argument("update references unknown user");

    switch (u.kind) {
        case UserUpdate::Kind::LocationMove: {
            u.old_location = g_.location(u.subject);
            cbr_.grid().relocate(u.subject, u.old_location, u.new_location);
            g_.set_location(u.subject, u.new_location);
            index_.relocate_user(u.subject, u.new_location);
            break;
        }
        case UserUpdate::Kind::EdgeAdd:
        case UserUpdate::Kind::EdgeRemove: {
            bool ok = u.kind == UserUpdate::Kind::EdgeAdd ? g_.add_edge(u.subject, u.other)
                                                          : g_.remove_edge(u.subject, u.other);
            if (!ok) throw std::invalid_argument("malformed edge update");
            index_.sync_user_data(g_);
            CoreIndex fresh = core_decompose(g_);
            for (UserId v = 0; v < n; ++v)
                if (fresh.core_number[v] != core_.core_number[v])
                    index_.refresh_user_core(v, fresh.core_number[v]);
            core_ = std::move(fresh);
            break;
        }
    }
    u.sequence = seq_++;
    memo_.push_back(u);
    if (memo_.size() >= threshold_) batch_refresh();
}

UpdateEngine::RefreshReport UpdateEngine::batch_refresh() {
    RefreshReport report;
    if (!index_.has_cbrs()) {
        memo_.clear();
        return report;
    }
    std::set<std::pair<UserId, std::uint8_t>> suspects;
    for (const UserUpdate& u : memo_) {
        if (u.kind == UserUpdate::Kind::LocationMove) {
            for (const auto& item : rect_index_.point_query(u.new_location)) {
                std::uint32_t c = 1u << item.exponent;
                if (rule1_flags(u, item.rect, c, core_))
                    suspects.insert({item.owner, item.exponent});
            }
        } else if (u.kind == UserUpdate::Kind::EdgeAdd) {
            for (const auto& item : rect_index_.point_query(g_.location(u.subject))) {
                std::uint32_t c = 1u << item.exponent;
                if (rule2_flags(u, item.rect, c, core_, g_))
                    suspects.insert({item.owner, item.exponent});
            }
        }
        // Edge removals and moves out of a rect only leave stored CBRs
        // non-maximal, never invalid; they are memoized but never force a
        // recomputation.
    }

    for (auto [owner, exp] : suspects) {
        const CbrLadder& stored = index_.user_ladder(owner);
        if (exp >= stored.levels.size()) continue;
        ++report.checked;
        const std::uint32_t c = 1u << exp;
        if (cbr_.rect_valid(stored.levels[exp].rect, owner, c)) continue;
        ++report.invalidated;
        CbrLadder ladder = stored;
        ladder.levels[exp].rect = cbr_.compute_cbr(owner, c);
        index_.replace_user_ladder(owner, std::move(ladder));
        ++report.recomputed;
    }
    total_recomputed_ += report.recomputed;
    memo_.clear();
    if (report.recomputed > 0) rect_index_.build_from(index_);
    return report;
}

// ---------------------------------------------------------------------------
// Memo-aware query processing
// ---------------------------------------------------------------------------

bool UpdateEngine::memo_can_invalidate(const Rect& rect, std::uint32_t level_c,
                                       const Rect& range) const {
    // A core forming inside range requires its members' current positions to
    // be in range, so the updater is filtered by where it is now.
    for (const UserUpdate& u : memo_) {
        if (u.kind == UserUpdate::Kind::LocationMove) {
            if (rule1_flags(u, rect, level_c, core_) &&
                range.contains(g_.location(u.subject)))
                return true;
        } else if (u.kind == UserUpdate::Kind::EdgeAdd) {
            if (rule2_flags(u, rect, level_c, core_, g_) &&
                range.contains(g_.location(u.subject)) && range.contains(g_.location(u.other)))
                return true;
        }
    }
    return false;
}

GroupResult UpdateEngine::memo_range(const QuerySpec& q) const {
    auto start = Clock::now();
    GroupResult res;
    const UserId v = q.issuer;
    if (v >= g_.user_count()) throw std::invalid_argument("unknown issuer");
    if (!q.range.contains(g_.location(v)))
        throw std::invalid_argument("issuer outside query range");
    const std::uint32_t c = q.c;
    const std::uint32_t c_rounded = ladder_level_for(c);

    if (core_.core_number[v] < c) {
        res.cpu_ms = res.wall_ms = elapsed_ms(start);
        return res;
    }

    // Stored CBRs may be stale: no entry-level CBR pruning while traversing;
    // leaf-level prunes are validated against the memo.
    std::vector<UserId> candidates;
    std::vector<std::uint64_t> stack{index_.root_page()};
    while (!stack.empty()) {
        std::uint64_t pid = stack.back();
        stack.pop_back();
        IndexNode node = index_.read_node(pid, res.counters);
        for (const EntryMeta& e : node.entries) {
            if (!e.mbr.intersects(q.range)) continue;
            if (e.core_number < c) continue;
            if (!node.leaf) {
                stack.push_back(e.child);
                continue;
            }
            if (!q.range.contains(e.mbr.lo)) continue;
            const Rect* r = e.cbrs.lookup(c_rounded);
            if (r && contained_in_interior(q.range, *r) &&
                !memo_can_invalidate(*r, c_rounded, q.range))
                continue;
            candidates.push_back(static_cast<UserId>(e.child));
        }
    }
    std::sort(candidates.begin(), candidates.end());

    std::vector<UserId> members;
    {
        // max c-core over the candidates, adjacency read from user pages
        std::vector<std::vector<UserId>> adj(candidates.size());
        auto local = [&](UserId id) {
            auto it = std::lower_bound(candidates.begin(), candidates.end(), id);
            if (it == candidates.end() || *it != id) return -1l;
            return static_cast<long>(it - candidates.begin());
        };
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            UserRecord rec = index_.read_user(candidates[i], res.counters);
            for (UserId w : rec.neighbors) {
                long j = local(w);
                if (j >= 0 && static_cast<std::size_t>(j) != i)
                    adj[i].push_back(static_cast<UserId>(j));
            }
        }
        std::vector<std::uint32_t> deg(candidates.size());
        std::vector<std::uint8_t> alive(candidates.size(), 1);
        std::vector<std::size_t> kill;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            deg[i] = static_cast<std::uint32_t>(adj[i].size());
            if (deg[i] < c) kill.push_back(i);
        }
        while (!kill.empty()) {
            std::size_t i = kill.back();
            kill.pop_back();
            if (!alive[i]) continue;
            alive[i] = 0;
            for (UserId j : adj[i])
                if (alive[j] && deg[j]-- == c) kill.push_back(j);
        }
        for (std::size_t i = 0; i < candidates.size(); ++i)
            if (alive[i]) members.push_back(candidates[i]);
    }
    if (std::binary_search(members.begin(), members.end(), v)) {
        members.erase(std::lower_bound(members.begin(), members.end(), v));
        res.members = std::move(members);
        if (!res.members.empty()) res.d_max = max_dist_to_set(g_, v, res.members);
    }
    res.cpu_ms = res.wall_ms = elapsed_ms(start);
    return res;
}

std::vector<std::pair<double, UserId>> UpdateEngine::users_within(const Point& center,
                                                                  double bound,
                                                                  PageCounters& pc) const {
    // Second-frontier scan in ascending MBR distance, stopping at the bound.
    std::vector<std::pair<double, UserId>> out;
    using Item = std::pair<double, std::uint64_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
    heap.push({0.0, index_.root_page()});
    while (!heap.empty()) {
        auto [d, pid] = heap.top();
        heap.pop();
        if (d >= bound) break;
        IndexNode node = index_.read_node(pid, pc);
        for (const EntryMeta& e : node.entries) {
            double dd = min_dist_point_rect(center, e.mbr);
            if (dd >= bound) continue;
            if (node.leaf)
                out.emplace_back(dd, static_cast<UserId>(e.child));
            else
                heap.push({dd, e.child});
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

GroupResult UpdateEngine::memo_knn(const QuerySpec& q) const {
    auto start = Clock::now();
    GroupResult res;
    const UserId v = q.issuer;
    if (v >= g_.user_count()) throw std::invalid_argument("unknown issuer");
    const std::uint32_t c = q.c;
    const std::uint32_t k = q.k;
    const bool strict = q.type == ConstraintType::StrictKnn;
    const std::uint32_t c_rounded = ladder_level_for(c);
    const Point pv = g_.location(v);

    if (core_.core_number[v] < c || (strict && c > k)) {
        res.cpu_ms = res.wall_ms = elapsed_ms(start);
        return res;
    }

    // Leaf keys keep their inside-distance component only when the memo
    // cannot invalidate the stored rect; otherwise the key collapses to the
    // nearest potentially-invalidating user. Non-leaf keys are plain MBR
    // distances to skip the validation cost.
    auto leaf_key = [&](const EntryMeta& e) {
        double d_sp = min_dist_point_rect(pv, e.mbr);
        const Rect* r = e.cbrs.lookup(c_rounded);
        if (!r) return d_sp;
        double d_in = inside_dist(pv, *r);
        if (d_in <= d_sp) return std::max(d_sp, d_in);
        std::vector<std::pair<double, UserId>> nearer = users_within(pv, d_in, res.counters);
        double collapsed = d_in;
        bool any = false;
        for (auto& [dd, w] : nearer) {
            for (const UserUpdate& u : memo_) {
                bool hits = false;
                if (u.kind == UserUpdate::Kind::LocationMove && u.subject == w)
                    hits = rule1_flags(u, *r, c_rounded, core_);
                else if (u.kind == UserUpdate::Kind::EdgeAdd && (u.subject == w || u.other == w))
                    hits = rule2_flags(u, *r, c_rounded, core_, g_);
                if (hits) {
                    if (!any || dd < collapsed) collapsed = dd;
                    any = true;
                    break;
                }
            }
        }
        return std::max(d_sp, any ? collapsed : d_in);
    };

    struct Item {
        double key;
        bool leaf;
        std::uint64_t id;

        bool operator>(const Item& o) const {
            if (key != o.key) return key > o.key;
            if (leaf != o.leaf) return leaf && !o.leaf;
            return id > o.id;
        }
    };
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> frontier;

    std::vector<UserId> members;          // visited candidates, insertion order
    std::vector<std::vector<UserId>> adj;  // induced adjacency by local index
    std::vector<std::int32_t> local_of(g_.user_count(), -1);
    auto add_candidate = [&](UserId u) {
        UserRecord rec = index_.read_user(u, res.counters);
        std::int32_t lu = static_cast<std::int32_t>(members.size());
        local_of[u] = lu;
        members.push_back(u);
        adj.emplace_back();
        for (UserId w : rec.neighbors) {
            std::int32_t lw = local_of[w];
            if (lw >= 0 && w != u) {
                adj[lu].push_back(static_cast<UserId>(lw));
                adj[lw].push_back(static_cast<UserId>(lu));
            }
        }
    };
    auto max_core_members = [&]() {
        std::vector<std::uint32_t> deg(members.size());
        std::vector<std::uint8_t> alive(members.size(), 1);
        std::vector<std::size_t> kill;
        for (std::size_t i = 0; i < members.size(); ++i) {
            deg[i] = static_cast<std::uint32_t>(adj[i].size());
            if (deg[i] < c) kill.push_back(i);
        }
        while (!kill.empty()) {
            std::size_t i = kill.back();
            kill.pop_back();
            if (!alive[i]) continue;
            alive[i] = 0;
            for (UserId j : adj[i])
                if (alive[j] && deg[j]-- == c) kill.push_back(j);
        }
        VertexSet out;
        for (std::size_t i = 0; i < members.size(); ++i)
            if (alive[i]) out.push_back(members[i]);
        std::sort(out.begin(), out.end());
        return out;
    };

    add_candidate(v);
    {
        IndexNode root = index_.read_node(index_.root_page(), res.counters);
        for (const EntryMeta& e : root.entries) {
            if (e.core_number < c) continue;
            double key = root.leaf ? leaf_key(e) : min_dist_point_rect(pv, e.mbr);
            frontier.push({key, root.leaf, e.child});
        }
    }
    while (!frontier.empty()) {
        Item top = frontier.top();
        frontier.pop();
        if (!top.leaf) {
            IndexNode node = index_.read_node(top.id, res.counters);
            for (const EntryMeta& e : node.entries) {
                if (e.core_number < c) continue;
                double key = node.leaf ? leaf_key(e) : min_dist_point_rect(pv, e.mbr);
                frontier.push({std::max(key, top.key), node.leaf, e.child});
            }
            continue;
        }
        const UserId u = static_cast<UserId>(top.id);
        if (u == v) continue;
        add_candidate(u);
        if (members.size() < static_cast<std::size_t>(k) + 1) continue;
        VertexSet w_core = max_core_members();
        if (w_core.size() < static_cast<std::size_t>(k) + 1) continue;
        if (!std::binary_search(w_core.begin(), w_core.end(), v)) continue;
        if (!strict) {
            w_core.erase(std::lower_bound(w_core.begin(), w_core.end(), v));
            res.members = std::move(w_core);
            res.d_max = max_dist_to_set(g_, v, res.members);
            res.cpu_ms = res.wall_ms = elapsed_ms(start);
            return res;
        }
        if (!std::binary_search(w_core.begin(), w_core.end(), u)) continue;
        std::vector<UserId> back(w_core.begin(), w_core.end());
        std::vector<Point> locs(back.size());
        std::vector<std::pair<UserId, UserId>> edges;
        for (std::size_t i = 0; i < back.size(); ++i) {
            locs[i] = g_.location(back[i]);
            for (UserId lw : adj[local_of[back[i]]]) {
                UserId w = members[lw];
                auto it = std::lower_bound(back.begin(), back.end(), w);
                if (it != back.end() && *it == w) {
                    std::size_t j = static_cast<std::size_t>(it - back.begin());
                    if (j > i) edges.emplace_back(static_cast<UserId>(i), static_cast<UserId>(j));
                }
            }
        }
        SocialGraph sub(std::move(locs), edges);
        auto local = [&](UserId id) {
            return static_cast<UserId>(std::lower_bound(back.begin(), back.end(), id) -
                                       back.begin());
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

GroupResult UpdateEngine::run_query(const QuerySpec& q) const {
    if (!index_.has_cbrs() || memo_.empty()) {
        QueryEngine qe(index_, g_, core_);
        return qe.run(q);
    }
    return q.type == ConstraintType::Range ? memo_range(q) : memo_knn(q);
}

void UpdateEngine::save_memo(const std::string& path) const {
    write_update_stream(path, memo_);
}

}  // namespace gsg
