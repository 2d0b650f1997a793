#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsg/cbr.hpp"
#include "gsg/index.hpp"
#include "gsg/query.hpp"
#include "gsg/social_graph.hpp"

namespace gsg {

/// One user update: a location move or a social edge change. Sequence
/// numbers are assigned in arrival order.
struct UserUpdate {
    enum class Kind { LocationMove, EdgeAdd, EdgeRemove };
    Kind kind = Kind::LocationMove;
    UserId subject = 0;
    UserId other = 0;       // second endpoint for edge updates
    Point old_location;     // moves: filled in when the update is applied
    Point new_location;
    std::uint64_t sequence = 0;
};

/// Stream file format: one update per line, `M <user> <x> <y>`,
/// `E+ <u> <v>` or `E- <u> <v>`; sequence equals line order.
std::vector<UserUpdate> parse_update_stream(const std::string& path);
void write_update_stream(const std::string& path, std::span<const UserUpdate> updates);

/// Location update filter: a stored CBR can be invalidated only by a user of
/// core number >= its level moving from outside the rect to inside it.
bool rule1_flags(const UserUpdate& move, const Rect& cbr_rect, std::uint32_t level_c,
                 const CoreIndex& core);

/// Social update filter: only a new edge whose endpoints both lie in the rect
/// and both have core number >= its level can invalidate a stored CBR.
bool rule2_flags(const UserUpdate& edge_add, const Rect& cbr_rect, std::uint32_t level_c,
                 const CoreIndex& core, const SocialGraph& g);

/// In-memory R-tree over stored user CBR rects, keyed (owner, level
/// exponent); answers point-containment queries during batch refresh.
/// Rebuilt wholesale after each refresh that changed rects, so it is a
/// bulk-packed static tree.
class CbrRectIndex {
public:
    struct Item {
        Rect rect;
        UserId owner;
        std::uint8_t exponent;
    };

    void clear();
    void build_from(const Index& index);
    /// Items whose rect contains p (closed), sorted by (owner, exponent).
    std::vector<Item> point_query(const Point& p) const;
    std::size_t size() const { return count_; }

private:
    static constexpr std::size_t kFanout = 16;
    struct Node {
        bool leaf = true;
        Rect mbr;
        std::vector<Item> items;          // leaf
        std::vector<std::int32_t> child;  // internal
    };
    std::vector<Node> nodes_;
    std::int32_t root_ = -1;
    std::size_t count_ = 0;

    void pack(std::vector<Item> all);
};

/// Serializer of all writes against one graph + index pair: applies updates
/// eagerly to the graph, locations and core numbers, memoizes the CBR
/// consequences, and refreshes stored CBRs in batches.
class UpdateEngine {
public:
    struct RefreshReport {
        std::uint64_t checked = 0;
        std::uint64_t invalidated = 0;
        std::uint64_t recomputed = 0;
    };

    UpdateEngine(SocialGraph& g, CoreIndex& core, Index& index,
                 std::uint64_t batch_threshold = 30000);

    /// Applies one update (graph/location/core bookkeeping plus tree
    /// relocation), memoizes it, and runs a batch refresh when the memo
    /// reaches the threshold. Throws on malformed updates.
    void apply_update(UserUpdate u);

    /// Filters the memo through the update rules, validity-checks the
    /// surviving CBRs, recomputes the invalid ones and clears the memo.
    RefreshReport batch_refresh();

    const std::vector<UserUpdate>& memo() const { return memo_; }
    std::uint64_t batch_threshold() const { return threshold_; }
    std::uint64_t total_recomputed() const { return total_recomputed_; }
    std::uint64_t total_applied() const { return seq_; }

    /// Memo-aware query processing: stored CBRs may be stale, so entry-level
    /// CBR pruning is disabled and leaf-level pruning is validated against
    /// the memo. Answers match a freshly rebuilt index.
    GroupResult memo_range(const QuerySpec& q) const;
    GroupResult memo_knn(const QuerySpec& q) const;

    /// Dispatch: plain processing when the memo is empty or the index stores
    /// no CBRs, memo-aware processing otherwise.
    GroupResult run_query(const QuerySpec& q) const;

    void save_memo(const std::string& path) const;

private:
    SocialGraph& g_;
    CoreIndex& core_;
    Index& index_;
    std::uint64_t threshold_;
    std::vector<UserUpdate> memo_;
    std::uint64_t seq_ = 0;
    std::uint64_t total_recomputed_ = 0;
    CbrEngine cbr_;
    CbrRectIndex rect_index_;

    bool memo_can_invalidate(const Rect& rect, std::uint32_t level_c, const Rect& range) const;
    std::vector<std::pair<double, UserId>> users_within(const Point& center, double bound,
                                                        PageCounters& pc) const;
};

}  // namespace gsg
