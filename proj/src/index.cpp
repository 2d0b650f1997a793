#include "gsg/index.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace gsg {

namespace {

constexpr char kMagic[8] = {'G', 'S', 'G', 'Q', 'I', 'D', 'X', '1'};
constexpr std::size_t kPageHeader = 4;   // crc32 of the rest of the page
constexpr std::size_t kPageTrailer = 8;  // next coupled page id (0 = none)
constexpr std::size_t kNodeHeader = 4;   // entry count u16, node kind u8, reserved u8
constexpr std::size_t kEntryBase = 1 + 8 + 32 + 4 + 2;
constexpr std::size_t kUserSlot = 32;    // 2 x f64 point, u64 offset, u64 count

std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

struct Writer {
    std::vector<std::uint8_t>& out;
    void u8(std::uint8_t v) { out.push_back(v); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void rect(const Rect& r) {
        f64(r.lo.x);
        f64(r.lo.y);
        f64(r.hi.x);
        f64(r.hi.y);
    }
};

struct Reader {
    const std::uint8_t* p;
    const std::uint8_t* end;

    void need(std::size_t k) const {
        if (static_cast<std::size_t>(end - p) < k)
            throw std::runtime_error("truncated index record");
    }
    std::uint8_t u8() {
        need(1);
        return *p++;
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(*p++) << (8 * i);
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(*p++) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(*p++) << (8 * i);
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    Rect rect() {
        Rect r;
        r.lo.x = f64();
        r.lo.y = f64();
        r.hi.x = f64();
        r.hi.y = f64();
        return r;
    }
};

void write_file(const std::string& path, const void* data, std::size_t len) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + tmp);
        f.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
        if (!f) throw std::runtime_error("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw std::runtime_error("cannot read " + path);
    auto size = f.tellg();
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
    f.seekg(0);
    f.read(reinterpret_cast<char*>(buf.data()), size);
    return buf;
}

std::uint32_t ladder_top_levels(std::uint32_t core) {
    if (core == 0) return 0;
    return 32 - static_cast<std::uint32_t>(__builtin_clz(core));
}

// Area of r not covered by any member rect (members clipped to r first).
double uncovered_area(const Rect& r, std::span<const std::pair<UserId, Rect>> members) {
    if (r.area() <= 0) return 0.0;
    std::vector<Rect> clipped;
    for (const auto& [id, m] : members) {
        if (auto is = rect_intersection(m, r)) {
            if (is->area() > 0) clipped.push_back(*is);
        }
    }
    return r.area() - union_area(std::move(clipped));
}

// Left fold of per-user CBRs in ascending user-id order: a user whose point
// misses the accumulator leaves it unchanged, otherwise intersect. Members
// must be sorted by id; once the fold empties it stays empty (area 0).
std::optional<Rect> fold_user_cbrs(std::span<const Point> locs,
                                   std::span<const std::pair<UserId, Rect>> members) {
    std::optional<Rect> acc;
    for (const auto& [id, rect] : members) {
        if (!acc) {
            acc = rect;
            continue;
        }
        if (!acc->contains(locs[id])) continue;
        auto next = rect_intersection(*acc, rect);
        if (!next) return std::nullopt;
        acc = next;
    }
    return acc;
}

}  // namespace

const char* index_kind_name(IndexKind k) {
    switch (k) {
        case IndexKind::BR: return "br";
        case IndexKind::CR: return "cr";
        case IndexKind::SAR: return "sar";
        default: return "sarstar";
    }
}

std::optional<IndexKind> index_kind_from_name(const std::string& name) {
    if (name == "br") return IndexKind::BR;
    if (name == "cr") return IndexKind::CR;
    if (name == "sar") return IndexKind::SAR;
    if (name == "sarstar") return IndexKind::SARSTAR;
    return std::nullopt;
}

double union_area(std::vector<Rect> rects) {
    std::erase_if(rects, [](const Rect& r) { return r.width() <= 0 || r.height() <= 0; });
    if (rects.empty()) return 0.0;

    std::vector<double> ys;
    ys.reserve(rects.size() * 2);
    for (const Rect& r : rects) {
        ys.push_back(r.lo.y);
        ys.push_back(r.hi.y);
    }
    std::sort(ys.begin(), ys.end());
    ys.erase(std::unique(ys.begin(), ys.end()), ys.end());

    struct Event {
        double x;
        int delta;
        std::uint32_t y0, y1;
    };
    std::vector<Event> events;
    events.reserve(rects.size() * 2);
    auto y_index = [&](double y) {
        return static_cast<std::uint32_t>(std::lower_bound(ys.begin(), ys.end(), y) - ys.begin());
    };
    for (const Rect& r : rects) {
        std::uint32_t y0 = y_index(r.lo.y), y1 = y_index(r.hi.y);
        events.push_back({r.lo.x, +1, y0, y1});
        events.push_back({r.hi.x, -1, y0, y1});
    }
    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
        if (a.x != b.x) return a.x < b.x;
        return a.delta > b.delta;
    });

    // Segment tree over y slabs tracking covered length.
    std::size_t slabs = ys.size() - 1;
    std::vector<int> count(4 * slabs, 0);
    std::vector<double> covered(4 * slabs, 0.0);
    auto update = [&](auto&& self, std::size_t node, std::size_t lo, std::size_t hi,
                      std::size_t a, std::size_t b, int delta) -> void {
        if (b <= lo || hi <= a) return;
        if (a <= lo && hi <= b) {
            count[node] += delta;
        } else {
            std::size_t mid = (lo + hi) / 2;
            self(self, 2 * node, lo, mid, a, b, delta);
            self(self, 2 * node + 1, mid, hi, a, b, delta);
        }
        if (count[node] > 0)
            covered[node] = ys[hi] - ys[lo];
        else if (hi - lo == 1)
            covered[node] = 0.0;
        else
            covered[node] = covered[2 * node] + covered[2 * node + 1];
    };

    double area = 0.0, prev_x = events.front().x;
    for (const Event& e : events) {
        area += covered[1] * (e.x - prev_x);
        prev_x = e.x;
        if (e.y0 < e.y1) update(update, 1, 0, slabs, e.y0, e.y1, e.delta);
    }
    return area;
}

double clustering_cost(const SocialGraph& g, std::span<const UserId> users,
                       std::span<const CbrLadder> ladders, const Rect& domain) {
    if (users.empty()) throw std::invalid_argument("clustering_cost: empty group");
    std::vector<UserId> sorted(users.begin(), users.end());
    std::sort(sorted.begin(), sorted.end());

    Rect mbr = Rect::point_rect(g.location(sorted.front()));
    std::uint32_t max_core = 0;
    for (UserId u : sorted) {
        mbr = rect_union(mbr, g.location(u));
        max_core = std::max(max_core, ladders[u].owner_core);
    }
    const std::uint32_t levels = ladder_top_levels(max_core);
    double sum = 0.0;
    for (std::uint32_t e = 0; e < levels; ++e) {
        std::vector<std::pair<UserId, Rect>> members;
        std::size_t lacking = 0;
        for (UserId u : sorted) {
            if (e < ladders[u].levels.size())
                members.emplace_back(u, ladders[u].levels[e].rect);
            else
                ++lacking;
        }
        double u_area;
        if (lacking > 0) {
            u_area = domain.area();
        } else {
            std::vector<Rect> rects;
            rects.reserve(members.size());
            for (auto& [id, r] : members) rects.push_back(r);
            u_area = union_area(std::move(rects));
        }
        auto combined = fold_user_cbrs(g.locations(), members);
        sum += u_area - (combined ? combined->area() : 0.0);
    }
    return mbr.area() * sum;
}

// ---------------------------------------------------------------------------
// Build structures
// ---------------------------------------------------------------------------

struct Index::CostCache {
    std::uint64_t count = 0;
    std::uint32_t max_core = 0;
    struct Level {
        std::vector<std::pair<UserId, Rect>> members;  // sorted by id, users having this level
        double area = 0.0;                             // union area of member rects
        std::uint64_t lacking = 0;
    };
    std::vector<Level> levels;
};

struct Index::BuildEntry {
    std::uint64_t child = 0;  // user id in leaves, node id in internal nodes
    Rect mbr;
    std::uint32_t core = 0;
    CbrLadder ladder;  // combined ladder for internal entries (SAR/SARSTAR)
    std::unique_ptr<CostCache> cost;
};

struct Index::BuildNode {
    bool leaf = true;
    std::uint32_t level = 0;  // 0 for leaves
    std::int64_t parent = -1;
    std::int64_t parent_slot = -1;
    bool dead = false;
    std::vector<BuildEntry> entries;
};

Index::Index() = default;
Index::~Index() = default;
Index::Index(Index&&) noexcept = default;
Index& Index::operator=(Index&&) noexcept = default;

void Index::derive_fanout() {
    std::size_t header = kPageHeader + kPageTrailer + kNodeHeader;
    if (page_size_ <= header + kEntryBase)
        throw std::runtime_error("page size too small for one entry");
    fanout_ = static_cast<std::uint32_t>((page_size_ - header) / kEntryBase);
    if (fanout_ < 2) throw std::runtime_error("page size too small for one entry");
    min_fanout_ = (fanout_ * 2 + 4) / 5;  // ceil(0.4 * fanout)
}

std::int64_t Index::new_node(bool leaf) {
    nodes_.emplace_back();
    nodes_.back().leaf = leaf;
    ++stats_.nodes;
    return static_cast<std::int64_t>(nodes_.size() - 1);
}

void Index::collect_users(const BuildEntry& e, bool leaf, std::vector<UserId>& out) const {
    if (leaf) {
        out.push_back(static_cast<UserId>(e.child));
        return;
    }
    const BuildNode& n = nodes_[e.child];
    for (const BuildEntry& child : n.entries) collect_users(child, n.leaf, out);
}

double Index::group_cost(const std::vector<const BuildEntry*>& parts, bool leaf) const {
    std::vector<UserId> users;
    for (const BuildEntry* e : parts) collect_users(*e, leaf, users);
    std::sort(users.begin(), users.end());
    Rect mbr = parts.front()->mbr;
    for (const BuildEntry* e : parts) mbr = rect_union(mbr, e->mbr);

    std::uint32_t max_core = 0;
    for (UserId u : users) max_core = std::max(max_core, ladders_[u].owner_core);
    const std::uint32_t levels = ladder_top_levels(max_core);
    double sum = 0.0;
    for (std::uint32_t e = 0; e < levels; ++e) {
        std::vector<std::pair<UserId, Rect>> members;
        std::size_t lacking = 0;
        for (UserId u : users) {
            if (e < ladders_[u].levels.size())
                members.emplace_back(u, ladders_[u].levels[e].rect);
            else
                ++lacking;
        }
        double u_area;
        if (lacking > 0) {
            u_area = domain_.area();
        } else {
            std::vector<Rect> rects;
            for (auto& [id, r] : members) rects.push_back(r);
            u_area = union_area(std::move(rects));
        }
        auto combined = fold_user_cbrs(user_locations_, members);
        sum += u_area - (combined ? combined->area() : 0.0);
    }
    return mbr.area() * sum;
}

double Index::entry_insert_cost(const BuildEntry& e, UserId v) const {
    const CostCache& cache = *e.cost;
    const CbrLadder& v_ladder = ladders_[v];
    Rect mbr = rect_union(e.mbr, user_locations_[v]);
    std::uint32_t max_core = std::max(cache.max_core, v_ladder.owner_core);
    const std::uint32_t levels = ladder_top_levels(max_core);
    double sum = 0.0;
    static const CostCache::Level empty_level;
    for (std::uint32_t lv = 0; lv < levels; ++lv) {
        const auto& lvl = lv < cache.levels.size() ? cache.levels[lv] : empty_level;
        std::uint64_t lacking = lv < cache.levels.size() ? lvl.lacking : cache.count;
        const Rect* v_rect = lv < v_ladder.levels.size() ? &v_ladder.levels[lv].rect : nullptr;
        if (!v_rect) ++lacking;

        double u_area;
        if (lacking > 0)
            u_area = domain_.area();
        else
            u_area = lvl.area + uncovered_area(*v_rect, lvl.members);

        // Fold in ascending id order with v spliced into place.
        std::optional<Rect> acc;
        bool vanished = false;
        auto fold_one = [&](UserId id, const Rect& r) {
            if (vanished) return;
            if (!acc) {
                acc = r;
                return;
            }
            if (!acc->contains(user_locations_[id])) return;
            auto next = rect_intersection(*acc, r);
            if (!next) {
                vanished = true;
                acc.reset();
                return;
            }
            acc = next;
        };
        bool v_done = (v_rect == nullptr);
        for (const auto& [id, r] : lvl.members) {
            if (!v_done && v < id) {
                fold_one(v, *v_rect);
                v_done = true;
            }
            fold_one(id, r);
        }
        if (!v_done) fold_one(v, *v_rect);
        sum += u_area - (acc ? acc->area() : 0.0);
    }
    return mbr.area() * sum;
}

void Index::absorb_user_into_cache(CostCache& cache, UserId u) const {
    const CbrLadder& lad = ladders_[u];
    std::uint64_t old_count = cache.count;
    ++cache.count;
    cache.max_core = std::max(cache.max_core, lad.owner_core);
    std::uint32_t want = ladder_top_levels(cache.max_core);
    while (cache.levels.size() < want) {
        cache.levels.emplace_back();
        cache.levels.back().lacking = old_count;
    }
    for (std::uint32_t e = 0; e < cache.levels.size(); ++e) {
        auto& lvl = cache.levels[e];
        if (e < lad.levels.size()) {
            const Rect& r = lad.levels[e].rect;
            lvl.area += uncovered_area(r, lvl.members);
            auto pos = std::lower_bound(lvl.members.begin(), lvl.members.end(), u,
                                        [](const auto& a, UserId b) { return a.first < b; });
            lvl.members.insert(pos, {u, r});
        } else {
            ++lvl.lacking;
        }
    }
}

void Index::rebuild_cache(BuildEntry& e) const {
    e.cost = std::make_unique<CostCache>();
    std::vector<UserId> users;
    collect_users(e, nodes_[e.child].leaf, users);
    std::sort(users.begin(), users.end());
    CostCache& c = *e.cost;
    c.count = users.size();
    for (UserId u : users) c.max_core = std::max(c.max_core, ladders_[u].owner_core);
    c.levels.resize(ladder_top_levels(c.max_core));
    for (std::uint32_t lvl = 0; lvl < c.levels.size(); ++lvl) {
        std::vector<Rect> rects;
        for (UserId u : users) {
            if (lvl < ladders_[u].levels.size()) {
                const Rect& r = ladders_[u].levels[lvl].rect;
                c.levels[lvl].members.emplace_back(u, r);
                rects.push_back(r);
            } else {
                ++c.levels[lvl].lacking;
            }
        }
        c.levels[lvl].area = union_area(std::move(rects));
    }
}

// ---------------------------------------------------------------------------
// Insertion and splitting
// ---------------------------------------------------------------------------

std::int64_t Index::choose_node(const BuildEntry& entry, std::uint32_t target_level) {
    std::int64_t cur = root_;
    while (nodes_[cur].level > target_level) {
        BuildNode& n = nodes_[cur];
        std::size_t best = 0;
        if (kind_ == IndexKind::SARSTAR && target_level == 0) {
            double best_cost = 0.0;
            for (std::size_t i = 0; i < n.entries.size(); ++i) {
                if (!n.entries[i].cost) rebuild_cache(n.entries[i]);
                double c = entry_insert_cost(n.entries[i], static_cast<UserId>(entry.child));
#ifdef GSG_DEBUG_CHOOSE
                {
                    std::vector<UserId> users;
                    collect_users(n.entries[i], nodes_[n.entries[i].child].leaf, users);
                    users.push_back(static_cast<UserId>(entry.child));
                    SocialGraph dummy(user_locations_, {});
                    double ref = clustering_cost(dummy, users, ladders_, domain_);
                    if (std::abs(c - ref) > 1e-9 * std::max(1.0, std::abs(ref)))
                        std::fprintf(stderr, "CHOOSE MISMATCH v=%llu entry=%zu cached=%.12g ref=%.12g\n",
                                     (unsigned long long)entry.child, i, c, ref);
                }
#endif
                if (i == 0 || c < best_cost) {
                    best_cost = c;
                    best = i;
                }
            }
        } else {
            double best_enlarge = 0.0, best_area = 0.0;
            for (std::size_t i = 0; i < n.entries.size(); ++i) {
                double area = n.entries[i].mbr.area();
                double grow = rect_union(n.entries[i].mbr, entry.mbr).area() - area;
                if (i == 0 || grow < best_enlarge || (grow == best_enlarge && area < best_area)) {
                    best_enlarge = grow;
                    best_area = area;
                    best = i;
                }
            }
        }
        cur = static_cast<std::int64_t>(n.entries[best].child);
    }
    return cur;
}

void Index::insert_entry(BuildEntry entry, std::uint32_t target_level, bool refresh_meta) {
    if (root_ < 0) {
        root_ = new_node(true);
        nodes_[root_].level = 0;
    }
    std::int64_t target = choose_node(entry, target_level);

    std::vector<UserId> users;
    if (kind_ == IndexKind::SARSTAR && !nodes_[target].entries.empty())
        collect_users(entry, nodes_[target].leaf, users);
    for (std::int64_t walk = target; nodes_[walk].parent >= 0;) {
        std::int64_t parent = nodes_[walk].parent;
        BuildEntry& pe = nodes_[parent].entries[nodes_[walk].parent_slot];
        pe.mbr = rect_union(pe.mbr, entry.mbr);
        if (kind_ == IndexKind::SARSTAR && pe.cost)
            for (UserId u : users) absorb_user_into_cache(*pe.cost, u);
        walk = parent;
    }

    const bool leaf_entry = nodes_[target].leaf;
    const std::uint64_t child = entry.child;
    BuildNode& node = nodes_[target];
    if (leaf_entry) {
        user_leaf_[child] = target;
    } else {
        nodes_[child].parent = target;
        nodes_[child].parent_slot = static_cast<std::int64_t>(node.entries.size());
    }
    node.entries.push_back(std::move(entry));
    if (node.entries.size() > fanout_) split_node_at(target);
    if (refresh_meta) {
        // Splits may have moved the entry; refresh from wherever it lives now
        // so ancestor core numbers and combined ladders stay exact.
        std::int64_t home = leaf_entry ? user_leaf_[child] : nodes_[child].parent;
        refresh_upward(home);
    }
    pages_dirty_ = true;
}

void Index::quadratic_split(std::vector<BuildEntry>& entries, std::vector<BuildEntry>& left,
                            std::vector<BuildEntry>& right) const {
    const std::size_t n = entries.size();
    std::size_t seed_a = 0, seed_b = 1;
    double worst = -1.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double dead = rect_union(entries[i].mbr, entries[j].mbr).area() -
                          entries[i].mbr.area() - entries[j].mbr.area();
            if (dead > worst) {
                worst = dead;
                seed_a = i;
                seed_b = j;
            }
        }
    Rect box_a = entries[seed_a].mbr, box_b = entries[seed_b].mbr;
    std::vector<bool> taken(n, false);
    taken[seed_a] = taken[seed_b] = true;
    left.push_back(std::move(entries[seed_a]));
    right.push_back(std::move(entries[seed_b]));

    std::size_t remaining = n - 2;
    while (remaining > 0) {
        if (left.size() + remaining == min_fanout_) {
            for (std::size_t i = 0; i < n; ++i)
                if (!taken[i]) {
                    box_a = rect_union(box_a, entries[i].mbr);
                    left.push_back(std::move(entries[i]));
                    taken[i] = true;
                }
            break;
        }
        if (right.size() + remaining == min_fanout_) {
            for (std::size_t i = 0; i < n; ++i)
                if (!taken[i]) {
                    box_b = rect_union(box_b, entries[i].mbr);
                    right.push_back(std::move(entries[i]));
                    taken[i] = true;
                }
            break;
        }
        std::size_t pick = n;
        double best_diff = -1.0, grow_a_pick = 0, grow_b_pick = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            double ga = rect_union(box_a, entries[i].mbr).area() - box_a.area();
            double gb = rect_union(box_b, entries[i].mbr).area() - box_b.area();
            double diff = std::abs(ga - gb);
            if (diff > best_diff) {
                best_diff = diff;
                pick = i;
                grow_a_pick = ga;
                grow_b_pick = gb;
            }
        }
        bool to_a;
        if (grow_a_pick != grow_b_pick)
            to_a = grow_a_pick < grow_b_pick;
        else if (box_a.area() != box_b.area())
            to_a = box_a.area() < box_b.area();
        else
            to_a = left.size() <= right.size();
        if (to_a) {
            box_a = rect_union(box_a, entries[pick].mbr);
            left.push_back(std::move(entries[pick]));
        } else {
            box_b = rect_union(box_b, entries[pick].mbr);
            right.push_back(std::move(entries[pick]));
        }
        taken[pick] = true;
        --remaining;
    }
    entries.clear();
}

void Index::cost_split(std::vector<BuildEntry>& entries, bool leaf, std::vector<BuildEntry>& left,
                       std::vector<BuildEntry>& right) const {
    const std::size_t n = entries.size();
    if (n <= 12) {
        // Exhaustive minimal-cost bipartition with both sides >= min fanout.
        std::uint32_t best_mask = 0;
        double best_cost = 0.0;
        bool found = false;
        for (std::uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
            std::size_t ones = static_cast<std::size_t>(__builtin_popcount(mask));
            if (ones < min_fanout_ || n - ones < min_fanout_) continue;
            std::vector<const BuildEntry*> a, b;
            for (std::size_t i = 0; i < n; ++i) (mask >> i & 1 ? a : b).push_back(&entries[i]);
            double cost = group_cost(a, leaf) + group_cost(b, leaf);
            if (!found || cost < best_cost) {
                found = true;
                best_cost = cost;
                best_mask = mask;
            }
        }
        for (std::size_t i = 0; i < n; ++i)
            (best_mask >> i & 1 ? left : right).push_back(std::move(entries[i]));
        entries.clear();
        return;
    }

    // Quadratic seeding by dead area, then greedy assignment by cost delta.
    std::size_t seed_a = 0, seed_b = 1;
    double worst = -1.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double dead = rect_union(entries[i].mbr, entries[j].mbr).area() -
                          entries[i].mbr.area() - entries[j].mbr.area();
            if (dead > worst) {
                worst = dead;
                seed_a = i;
                seed_b = j;
            }
        }
    std::vector<const BuildEntry*> side_a{&entries[seed_a]}, side_b{&entries[seed_b]};
    std::vector<int> assign(n, -1);
    assign[seed_a] = 0;
    assign[seed_b] = 1;
    double cost_a = group_cost(side_a, leaf), cost_b = group_cost(side_b, leaf);
    std::size_t count_a = 1, count_b = 1, remaining = n - 2;
    for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] >= 0) continue;
        bool to_a;
        if (count_a + remaining == min_fanout_)
            to_a = true;
        else if (count_b + remaining == min_fanout_)
            to_a = false;
        else {
            side_a.push_back(&entries[i]);
            double with_a = group_cost(side_a, leaf);
            side_a.pop_back();
            side_b.push_back(&entries[i]);
            double with_b = group_cost(side_b, leaf);
            side_b.pop_back();
            to_a = (with_a - cost_a) <= (with_b - cost_b);
        }
        if (to_a) {
            side_a.push_back(&entries[i]);
            cost_a = group_cost(side_a, leaf);
            ++count_a;
            assign[i] = 0;
        } else {
            side_b.push_back(&entries[i]);
            cost_b = group_cost(side_b, leaf);
            ++count_b;
            assign[i] = 1;
        }
        --remaining;
    }
    for (std::size_t i = 0; i < n; ++i)
        (assign[i] == 0 ? left : right).push_back(std::move(entries[i]));
    entries.clear();
}

void Index::split_node_at(std::int64_t node_id) {
    ++stats_.splits;
    std::vector<BuildEntry> all = std::move(nodes_[node_id].entries);
    nodes_[node_id].entries.clear();
    const bool leaf = nodes_[node_id].leaf;

    std::vector<BuildEntry> left, right;
    if (kind_ == IndexKind::SARSTAR)
        cost_split(all, leaf, left, right);
    else
        quadratic_split(all, left, right);

    std::int64_t sibling_id = new_node(leaf);
    nodes_[sibling_id].level = nodes_[node_id].level;
    nodes_[node_id].entries = std::move(left);
    nodes_[sibling_id].entries = std::move(right);

    auto fix_children = [&](std::int64_t nid) {
        BuildNode& nn = nodes_[nid];
        for (std::size_t i = 0; i < nn.entries.size(); ++i) {
            if (nn.leaf) {
                user_leaf_[nn.entries[i].child] = nid;
            } else {
                nodes_[nn.entries[i].child].parent = nid;
                nodes_[nn.entries[i].child].parent_slot = static_cast<std::int64_t>(i);
            }
        }
    };
    fix_children(node_id);
    fix_children(sibling_id);

    auto make_parent_entry = [&](std::int64_t nid) {
        BuildEntry e;
        e.child = static_cast<std::uint64_t>(nid);
        recompute_entry_meta(nid, e);  // mbr, core number, combined ladder
        if (kind_ == IndexKind::SARSTAR) rebuild_cache(e);
        return e;
    };

    if (nodes_[node_id].parent < 0) {
        std::int64_t new_root = new_node(false);
        nodes_[new_root].level = nodes_[node_id].level + 1;
        BuildEntry e1 = make_parent_entry(node_id);
        BuildEntry e2 = make_parent_entry(sibling_id);
        nodes_[node_id].parent = new_root;
        nodes_[node_id].parent_slot = 0;
        nodes_[sibling_id].parent = new_root;
        nodes_[sibling_id].parent_slot = 1;
        nodes_[new_root].entries.push_back(std::move(e1));
        nodes_[new_root].entries.push_back(std::move(e2));
        root_ = new_root;
        return;
    }

    std::int64_t parent = nodes_[node_id].parent;
    std::int64_t slot = nodes_[node_id].parent_slot;
    nodes_[parent].entries[slot] = make_parent_entry(node_id);
    BuildEntry sib = make_parent_entry(sibling_id);
    nodes_[sibling_id].parent = parent;
    nodes_[sibling_id].parent_slot = static_cast<std::int64_t>(nodes_[parent].entries.size());
    nodes_[parent].entries.push_back(std::move(sib));
    if (nodes_[parent].entries.size() > fanout_) split_node_at(parent);
}

// ---------------------------------------------------------------------------
// Build
// ---------------------------------------------------------------------------

Index Index::build(const SocialGraph& g, const CoreIndex& core, IndexKind kind,
                   std::uint32_t page_size, const Rect& domain,
                   const std::vector<CbrLadder>* ladders) {
    if (g.user_count() == 0) throw std::invalid_argument("build: empty graph");
    Index idx;
    idx.kind_ = kind;
    idx.page_size_ = page_size;
    idx.domain_ = domain;
    idx.derive_fanout();

    const std::size_t n = g.user_count();
    idx.user_locations_ = g.locations();
    idx.user_adjacency_.assign(n, {});
    for (UserId v = 0; v < n; ++v)
        idx.user_adjacency_[v].assign(g.neighbors(v).begin(), g.neighbors(v).end());
    idx.user_cores_.assign(n, 0);
    if (kind != IndexKind::BR)
        for (UserId v = 0; v < n; ++v) idx.user_cores_[v] = core.core_number[v];
    idx.ladders_.assign(n, {});
    if (idx.has_cbrs()) {
        if (ladders) {
            idx.ladders_ = *ladders;
        } else {
            idx.ladders_ = CbrEngine::build_all_ladders(g, core, domain);
        }
    }
    idx.user_leaf_.assign(n, -1);

    for (UserId v = 0; v < n; ++v) {
        BuildEntry e;
        e.child = v;
        e.mbr = Rect::point_rect(g.location(v));
        idx.insert_entry(std::move(e), 0);
    }
    idx.compute_social_metadata();
    idx.pages_dirty_ = true;
    idx.users_dirty_ = true;
    return idx;
}

void Index::recompute_entry_meta(std::int64_t node_id, BuildEntry& e) const {
    const BuildNode& n = nodes_[node_id];
    e.mbr = n.entries.front().mbr;
    for (const BuildEntry& ce : n.entries) e.mbr = rect_union(e.mbr, ce.mbr);
    std::uint32_t core = 0;
    for (const BuildEntry& ce : n.entries)
        core = std::max(core, n.leaf ? user_cores_[ce.child] : ce.core);
    e.core = core;
    e.ladder = CbrLadder{};
    e.ladder.owner_core = core;
    if (!has_cbrs() || core == 0) return;

    const std::uint32_t levels = ladder_top_levels(core);
    for (std::uint32_t lv = 0; lv < levels; ++lv) {
        std::vector<MbrCbr> children;
        children.reserve(n.entries.size());
        bool unprunable = false;
        for (const BuildEntry& ce : n.entries) {
            const CbrLadder& lad = n.leaf ? ladders_[ce.child] : ce.ladder;
            std::uint32_t child_core = n.leaf ? user_cores_[ce.child] : ce.core;
            if (lv < lad.levels.size()) {
                children.push_back({ce.mbr, lad.levels[lv].rect});
            } else if (child_core < (1u << lv)) {
                // No core of this order can contain the covered users, so the
                // whole domain is a valid bounding rect for them.
                children.push_back({ce.mbr, domain_});
            } else {
                // Stale-short ladder after updates: the child is unprunable
                // at this level, so the combined rect must not prune either.
                unprunable = true;
                break;
            }
        }
        Rect rect = unprunable ? Rect::point_rect(e.mbr.lo)
                               : combine_entry_cbr(children, e.mbr);
        e.ladder.levels.push_back({static_cast<std::uint8_t>(lv), rect});
    }
}

void Index::compute_social_metadata() {
    if (root_ < 0) return;
    // Postorder so children are final before parents combine them.
    std::vector<std::pair<std::int64_t, bool>> stack{{root_, false}};
    while (!stack.empty()) {
        auto [nid, processed] = stack.back();
        stack.pop_back();
        BuildNode& n = nodes_[nid];
        if (!processed) {
            stack.push_back({nid, true});
            if (!n.leaf)
                for (BuildEntry& e : n.entries) stack.push_back({static_cast<std::int64_t>(e.child), false});
            continue;
        }
        for (BuildEntry& e : n.entries) {
            if (n.leaf) {
                e.core = user_cores_[e.child];
            } else {
                recompute_entry_meta(static_cast<std::int64_t>(e.child), e);
            }
        }
    }
}

void Index::refresh_upward(std::int64_t node_id) {
    std::int64_t walk = node_id;
    while (walk >= 0 && nodes_[walk].parent >= 0) {
        std::int64_t parent = nodes_[walk].parent;
        recompute_entry_meta(walk, nodes_[parent].entries[nodes_[walk].parent_slot]);
        walk = parent;
    }
    pages_dirty_ = true;
}

// ---------------------------------------------------------------------------
// Mutation (single writer)
// ---------------------------------------------------------------------------

void Index::remove_user_entry(UserId id) {
    std::int64_t leaf = user_leaf_[id];
    if (leaf < 0) throw std::invalid_argument("remove_user_entry: unknown user");
    BuildNode& n = nodes_[leaf];
    auto it = std::find_if(n.entries.begin(), n.entries.end(),
                           [&](const BuildEntry& e) { return e.child == id; });
    n.entries.erase(it);
    user_leaf_[id] = -1;

    // Condense: underfull non-root nodes dissolve and their entries reinsert.
    std::vector<std::pair<BuildEntry, std::uint32_t>> orphans;
    std::int64_t walk = leaf;
    while (walk >= 0) {
        std::int64_t parent = nodes_[walk].parent;
        BuildNode& wn = nodes_[walk];
        if (parent >= 0 && wn.entries.size() < min_fanout_) {
            std::int64_t slot = wn.parent_slot;
            BuildNode& pn = nodes_[parent];
            pn.entries.erase(pn.entries.begin() + slot);
            for (std::size_t i = static_cast<std::size_t>(slot); i < pn.entries.size(); ++i)
                if (!pn.leaf) nodes_[pn.entries[i].child].parent_slot = static_cast<std::int64_t>(i);
            for (BuildEntry& e : wn.entries) {
                std::uint32_t lvl = wn.leaf ? 0 : nodes_[e.child].level + 1;
                orphans.emplace_back(std::move(e), lvl);
            }
            wn.entries.clear();
            wn.dead = true;
        } else if (parent >= 0) {
            recompute_entry_meta(walk, nodes_[parent].entries[nodes_[walk].parent_slot]);
        }
        walk = parent;
    }
    // Reinsert orphans before shrinking the root, deeper subtrees first, so
    // every orphan still has a host at its level.
    std::stable_sort(orphans.begin(), orphans.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (auto& [entry, lvl] : orphans) insert_entry(std::move(entry), lvl, true);
    // Shrink the root while it is an internal node with a single child.
    while (!nodes_[root_].leaf && nodes_[root_].entries.size() == 1) {
        std::int64_t child = static_cast<std::int64_t>(nodes_[root_].entries.front().child);
        nodes_[root_].dead = true;
        nodes_[child].parent = -1;
        nodes_[child].parent_slot = -1;
        root_ = child;
    }
    pages_dirty_ = true;
}

void Index::relocate_user(UserId id, const Point& to) {
    remove_user_entry(id);
    user_locations_[id] = to;
    users_dirty_ = true;
    if (kind_ == IndexKind::SARSTAR) {
        // Cost caches describe subtree membership; rebuild them after the
        // structural delete so the reinsert sees consistent costs.
        for (BuildNode& n : nodes_)
            if (!n.dead && !n.leaf)
                for (BuildEntry& e : n.entries) rebuild_cache(e);
    }
    BuildEntry e;
    e.child = id;
    e.mbr = Rect::point_rect(to);
    e.core = user_cores_[id];
    insert_entry(std::move(e), 0, true);
}

void Index::replace_user_ladder(UserId id, CbrLadder ladder) {
    ladders_[id] = std::move(ladder);
    if (user_leaf_[id] >= 0) refresh_upward(user_leaf_[id]);
    pages_dirty_ = true;
}

void Index::refresh_user_core(UserId id, std::uint32_t core) {
    if (kind_ == IndexKind::BR) return;
    user_cores_[id] = core;
    ladders_[id].owner_core = core;
    if (user_leaf_[id] >= 0) {
        for (BuildEntry& e : nodes_[user_leaf_[id]].entries)
            if (e.child == id) e.core = core;
        refresh_upward(user_leaf_[id]);
    }
}

void Index::sync_user_data(const SocialGraph& g) {
    user_locations_ = g.locations();
    for (UserId v = 0; v < g.user_count(); ++v)
        user_adjacency_[v].assign(g.neighbors(v).begin(), g.neighbors(v).end());
    users_dirty_ = true;
}

SocialGraph Index::to_graph() const {
    std::vector<std::pair<UserId, UserId>> edges;
    for (UserId v = 0; v < user_adjacency_.size(); ++v)
        for (UserId w : user_adjacency_[v])
            if (v < w) edges.emplace_back(v, w);
    return SocialGraph(user_locations_, edges);
}

// ---------------------------------------------------------------------------
// Encoding / decoding
// ---------------------------------------------------------------------------

namespace {

void encode_entry(Writer& w, bool leaf_entry, std::uint64_t child, const Rect& mbr,
                  std::uint32_t core, const CbrLadder* ladder) {
    w.u8(leaf_entry ? 1 : 0);
    w.u64(child);
    w.rect(mbr);
    w.u32(core);
    std::uint16_t levels = ladder ? static_cast<std::uint16_t>(ladder->levels.size()) : 0;
    w.u16(levels);
    if (ladder)
        for (const CbrLevel& lv : ladder->levels) {
            w.u8(lv.exponent);
            w.rect(lv.rect);
        }
}

}  // namespace

void Index::encode_pages() const {
    if (!pages_dirty_) return;

    // Assign page ids in preorder: each node takes one primary page plus its
    // coupled chain before the next node.
    const std::size_t payload = page_size_ - kPageHeader - kPageTrailer;
    std::vector<std::int64_t> order;
    std::vector<std::uint64_t> primary(nodes_.size(), 0);
    std::uint64_t next_page = 1;  // page 0 reserved

    std::vector<std::int64_t> stack;
    if (root_ >= 0) stack.push_back(root_);
    while (!stack.empty()) {
        std::int64_t nid = stack.back();
        stack.pop_back();
        order.push_back(nid);
        const BuildNode& n = nodes_[nid];
        if (!n.leaf)
            for (auto it = n.entries.rbegin(); it != n.entries.rend(); ++it)
                stack.push_back(static_cast<std::int64_t>(it->child));
    }

    // Pass 1: compute each node's stream size to assign page ids.
    std::vector<std::size_t> stream_sizes(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        const BuildNode& n = nodes_[order[i]];
        std::size_t sz = kNodeHeader;
        for (const BuildEntry& e : n.entries) {
            const CbrLadder* lad = nullptr;
            if (has_cbrs()) lad = n.leaf ? &ladders_[e.child] : &e.ladder;
            sz += kEntryBase + (lad ? lad->levels.size() * (1 + 32) : 0);
        }
        stream_sizes[i] = sz;
    }
    for (std::size_t i = 0; i < order.size(); ++i) {
        primary[order[i]] = next_page;
        next_page += (stream_sizes[i] + payload - 1) / payload;
    }

    // Pass 2: encode streams with child page ids resolved, then paginate.
    const std::uint64_t total_pages = next_page;
    pages_.assign(total_pages * page_size_, 0);
    page_to_node_.assign(total_pages, -1);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const BuildNode& n = nodes_[order[i]];
        std::vector<std::uint8_t> stream;
        Writer w{stream};
        w.u16(static_cast<std::uint16_t>(n.entries.size()));
        w.u8(n.leaf ? 1 : 0);
        w.u8(0);
        for (const BuildEntry& e : n.entries) {
            std::uint64_t child = n.leaf ? e.child : primary[e.child];
            const CbrLadder* lad = nullptr;
            if (has_cbrs()) lad = n.leaf ? &ladders_[e.child] : &e.ladder;
            std::uint32_t core = social_metadata() ? e.core : 0;
            encode_entry(w, n.leaf, child, e.mbr, core, lad);
        }

        std::uint64_t page = primary[order[i]];
        page_to_node_[page] = order[i];
        std::size_t off = 0;
        while (off < stream.size()) {
            std::size_t take = std::min(payload, stream.size() - off);
            std::uint8_t* base = pages_.data() + page * page_size_;
            std::memcpy(base + kPageHeader, stream.data() + off, take);
            off += take;
            std::uint64_t next = off < stream.size() ? page + 1 : 0;
            for (int b = 0; b < 8; ++b)
                base[page_size_ - kPageTrailer + b] = static_cast<std::uint8_t>(next >> (8 * b));
            std::uint32_t crc = crc32(base + kPageHeader, page_size_ - kPageHeader);
            for (int b = 0; b < 4; ++b) base[b] = static_cast<std::uint8_t>(crc >> (8 * b));
            if (next != 0) page = next;
        }
    }
    root_page_ = root_ >= 0 ? primary[root_] : 0;
    pages_dirty_ = false;
}

void Index::encode_users() const {
    if (!users_dirty_) return;
    const std::size_t n = user_locations_.size();
    users_bytes_.clear();
    adj_bytes_.clear();
    Writer uw{users_bytes_};
    Writer aw{adj_bytes_};
    std::uint64_t offset = 0;
    for (std::size_t v = 0; v < n; ++v) {
        uw.f64(user_locations_[v].x);
        uw.f64(user_locations_[v].y);
        uw.u64(offset);
        uw.u64(user_adjacency_[v].size());
        for (UserId nb : user_adjacency_[v]) aw.u32(nb);
        offset += 4 * user_adjacency_[v].size();
    }
    users_dirty_ = false;
}

std::uint64_t Index::root_page() const {
    encode_pages();
    return root_page_;
}

std::uint64_t Index::page_count() const {
    encode_pages();
    return pages_.size() / page_size_;
}

IndexNode Index::read_node(std::uint64_t page_id, PageCounters& pc) const {
    encode_pages();
    const std::uint64_t total = pages_.size() / page_size_;
    if (page_id == 0 || page_id >= total || page_to_node_[page_id] < 0)
        throw std::invalid_argument("read_node: unknown page id");

    // Decode the chained stream, counting the primary page as an index page
    // and every continuation page as a coupled page.
    std::vector<std::uint8_t> stream;
    std::uint64_t page = page_id;
    bool first = true;
    while (page != 0) {
        if (page >= total) throw std::runtime_error("read_node: bad chain");
        const std::uint8_t* base = pages_.data() + page * page_size_;
        std::uint32_t stored = 0;
        for (int b = 0; b < 4; ++b) stored |= static_cast<std::uint32_t>(base[b]) << (8 * b);
        if (stored != crc32(base + kPageHeader, page_size_ - kPageHeader))
            throw std::runtime_error("read_node: page checksum mismatch");
        stream.insert(stream.end(), base + kPageHeader, base + page_size_ - kPageTrailer);
        std::uint64_t next = 0;
        for (int b = 0; b < 8; ++b)
            next |= static_cast<std::uint64_t>(base[page_size_ - kPageTrailer + b]) << (8 * b);
        if (first)
            ++pc.index_pages;
        else
            ++pc.coupled_pages;
        first = false;
        page = next;
    }

    Reader r{stream.data(), stream.data() + stream.size()};
    IndexNode node;
    node.page_id = page_id;
    std::uint16_t count = r.u16();
    node.leaf = r.u8() == 1;
    r.u8();
    node.entries.resize(count);
    for (std::uint16_t i = 0; i < count; ++i) {
        EntryMeta& e = node.entries[i];
        e.leaf_entry = (r.u8() & 1) != 0;
        e.child = r.u64();
        e.mbr = r.rect();
        e.core_number = r.u32();
        std::uint16_t levels = r.u16();
        e.cbrs.owner_core = e.core_number;
        e.cbrs.levels.resize(levels);
        for (std::uint16_t lv = 0; lv < levels; ++lv) {
            e.cbrs.levels[lv].exponent = r.u8();
            e.cbrs.levels[lv].rect = r.rect();
        }
    }
    return node;
}

UserRecord Index::read_user(UserId id, PageCounters& pc) const {
    encode_users();
    if (static_cast<std::size_t>(id) * kUserSlot + kUserSlot > users_bytes_.size())
        throw std::invalid_argument("read_user: unknown user id");
    Reader r{users_bytes_.data() + static_cast<std::size_t>(id) * kUserSlot,
             users_bytes_.data() + users_bytes_.size()};
    UserRecord rec;
    rec.location.x = r.f64();
    rec.location.y = r.f64();
    std::uint64_t offset = r.u64();
    std::uint64_t count = r.u64();
    ++pc.user_pages;  // the slot page
    if (count > 0) {
        std::uint64_t first = offset / page_size_;
        std::uint64_t last = (offset + 4 * count - 1) / page_size_;
        pc.user_pages += last - first + 1;
        Reader ar{adj_bytes_.data() + offset, adj_bytes_.data() + adj_bytes_.size()};
        rec.neighbors.resize(count);
        for (std::uint64_t i = 0; i < count; ++i) rec.neighbors[i] = ar.u32();
    }
    return rec;
}

std::uint64_t Index::stored_cbr_count() const {
    std::uint64_t total = 0;
    for (std::size_t nid = 0; nid < nodes_.size(); ++nid) {
        const BuildNode& n = nodes_[nid];
        if (n.dead) continue;
        for (const BuildEntry& e : n.entries)
            total += n.leaf ? ladders_[e.child].levels.size() : e.ladder.levels.size();
    }
    return total;
}

void Index::for_each_entry(const std::function<void(const IndexNode&, const EntryMeta&)>& fn) const {
    encode_pages();
    PageCounters pc;
    std::vector<std::uint64_t> stack{root_page()};
    while (!stack.empty()) {
        std::uint64_t pid = stack.back();
        stack.pop_back();
        IndexNode node = read_node(pid, pc);
        for (const EntryMeta& e : node.entries) {
            fn(node, e);
            if (!node.leaf) stack.push_back(e.child);
        }
    }
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

void Index::save(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    encode_pages();
    encode_users();

    std::vector<std::uint8_t> meta;
    Writer w{meta};
    for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u64(page_size_);
    w.u64(fanout_);
    w.u64(min_fanout_);
    w.u64(static_cast<std::uint64_t>(kind_));
    w.u64(root_page_);
    w.u64(user_locations_.size());
    w.u64(pages_.size() / page_size_);

    write_file(dir + "/meta", meta.data(), meta.size());
    write_file(dir + "/pages.bin", pages_.data(), pages_.size());
    write_file(dir + "/users.bin", users_bytes_.data(), users_bytes_.size());
    write_file(dir + "/adj.bin", adj_bytes_.data(), adj_bytes_.size());
}

Index Index::load(const std::string& dir) {
    Index idx;
    auto meta = read_file(dir + "/meta");
    if (meta.size() != 64) throw std::runtime_error("bad meta file");
    Reader r{meta.data(), meta.data() + meta.size()};
    for (char c : kMagic)
        if (r.u8() != static_cast<std::uint8_t>(c)) throw std::runtime_error("bad index magic");
    idx.page_size_ = static_cast<std::uint32_t>(r.u64());
    idx.fanout_ = static_cast<std::uint32_t>(r.u64());
    idx.min_fanout_ = static_cast<std::uint32_t>(r.u64());
    idx.kind_ = static_cast<IndexKind>(r.u64());
    idx.root_page_ = r.u64();
    std::uint64_t users = r.u64();
    std::uint64_t pages = r.u64();

    idx.pages_ = read_file(dir + "/pages.bin");
    if (idx.pages_.size() != pages * idx.page_size_) throw std::runtime_error("bad pages.bin size");
    idx.users_bytes_ = read_file(dir + "/users.bin");
    if (idx.users_bytes_.size() != users * kUserSlot)
        throw std::runtime_error("bad users.bin size");
    idx.adj_bytes_ = read_file(dir + "/adj.bin");

    // Decode user data.
    idx.user_locations_.resize(users);
    idx.user_adjacency_.resize(users);
    {
        Reader ur{idx.users_bytes_.data(), idx.users_bytes_.data() + idx.users_bytes_.size()};
        for (std::uint64_t v = 0; v < users; ++v) {
            idx.user_locations_[v].x = ur.f64();
            idx.user_locations_[v].y = ur.f64();
            std::uint64_t offset = ur.u64();
            std::uint64_t count = ur.u64();
            Reader ar{idx.adj_bytes_.data() + offset, idx.adj_bytes_.data() + idx.adj_bytes_.size()};
            auto& adj = idx.user_adjacency_[v];
            adj.resize(count);
            for (std::uint64_t i = 0; i < count; ++i) adj[i] = ar.u32();
        }
    }
    idx.user_cores_.assign(users, 0);
    idx.ladders_.assign(users, {});
    idx.user_leaf_.assign(users, -1);

    // Rebuild the in-memory tree by decoding pages from the root.
    idx.page_to_node_.assign(pages, -1);
    // Temporarily mark all pages as primaries so read_node can decode during
    // reconstruction; the encode pass afterwards restores the real map.
    for (auto& m : idx.page_to_node_) m = 0;
    idx.pages_dirty_ = false;
    idx.users_dirty_ = false;

    struct Frame {
        std::uint64_t page;
        std::int64_t parent;
        std::int64_t slot;
    };
    PageCounters pc;
    std::vector<Frame> stack{{idx.root_page_, -1, -1}};
    while (!stack.empty()) {
        Frame f = stack.back();
        stack.pop_back();
        IndexNode decoded = idx.read_node(f.page, pc);
        std::int64_t nid = idx.new_node(decoded.leaf);
        idx.nodes_[nid].parent = f.parent;
        idx.nodes_[nid].parent_slot = f.slot;
        if (f.parent >= 0) idx.nodes_[f.parent].entries[f.slot].child = static_cast<std::uint64_t>(nid);
        for (std::size_t i = 0; i < decoded.entries.size(); ++i) {
            EntryMeta& em = decoded.entries[i];
            BuildEntry be;
            be.child = em.child;
            be.mbr = em.mbr;
            be.core = em.core_number;
            if (decoded.leaf) {
                idx.user_cores_[em.child] = em.core_number;
                idx.ladders_[em.child] = em.cbrs;
                idx.ladders_[em.child].owner_core = em.core_number;
                idx.user_leaf_[em.child] = nid;
            } else {
                be.ladder = em.cbrs;
            }
            idx.nodes_[nid].entries.push_back(std::move(be));
            if (!decoded.leaf)
                stack.push_back({em.child, nid, static_cast<std::int64_t>(i)});
        }
        if (f.parent < 0) idx.root_ = nid;
    }
    // Fix levels bottom-up and re-encode so page ids and node ids agree.
    std::vector<std::pair<std::int64_t, bool>> walk{{idx.root_, false}};
    while (!walk.empty()) {
        auto [nid, processed] = walk.back();
        walk.pop_back();
        BuildNode& n = idx.nodes_[nid];
        if (!processed) {
            walk.push_back({nid, true});
            if (!n.leaf)
                for (BuildEntry& e : n.entries)
                    walk.push_back({static_cast<std::int64_t>(e.child), false});
            continue;
        }
        n.level = n.leaf ? 0 : idx.nodes_[n.entries.front().child].level + 1;
    }
    idx.pages_dirty_ = true;
    idx.encode_pages();
    return idx;
}

}  // namespace gsg
