#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gsg/cbr.hpp"
#include "gsg/geometry.hpp"
#include "gsg/social_graph.hpp"

namespace gsg {

enum class IndexKind : std::uint8_t { BR = 0, CR = 1, SAR = 2, SARSTAR = 3 };

const char* index_kind_name(IndexKind k);
std::optional<IndexKind> index_kind_from_name(const std::string& name);

/// Logical page-access counters for one query; reset between queries. No
/// cache model: every node/user read counts again.
struct PageCounters {
    std::uint64_t index_pages = 0;
    std::uint64_t coupled_pages = 0;
    std::uint64_t user_pages = 0;

    std::uint64_t total() const { return index_pages + coupled_pages + user_pages; }
    void reset() { index_pages = coupled_pages = user_pages = 0; }
};

/// One decoded index entry: a child page (internal) or a user (leaf), its
/// MBR, the max core number over covered users, and the CBR ladder (empty
/// for BR/CR).
struct EntryMeta {
    bool leaf_entry = false;
    std::uint64_t child = 0;
    Rect mbr;
    std::uint32_t core_number = 0;
    CbrLadder cbrs;
};

struct IndexNode {
    bool leaf = true;
    std::uint64_t page_id = 0;
    std::vector<EntryMeta> entries;
};

struct UserRecord {
    Point location;
    std::vector<UserId> neighbors;
};

/// Eq.-style clustering cost of a user group: area of the group MBR times
/// the summed per-level area of (union of member CBRs minus the combined
/// group CBR). Ladders are indexed by user id; members lacking a level
/// contribute the whole domain (no core of that order contains them, so the
/// domain is their valid CBR).
double clustering_cost(const SocialGraph& g, std::span<const UserId> users,
                       std::span<const CbrLadder> ladders, const Rect& domain);

/// Exact area of the union of a set of rects (coordinate-compressed sweep).
double union_area(std::vector<Rect> rects);

/// Paged spatial index over one dataset. Four variants share the page
/// format; BR/CR/SAR share the spatial structure (insertion-order R-tree
/// with quadratic split), SARSTAR clusters by the combined spatial-social
/// cost. The in-memory tree is authoritative; pages are (re)encoded lazily
/// and all reads decode real page bytes.
class Index {
public:
    Index();
    ~Index();
    Index(Index&&) noexcept;
    Index& operator=(Index&&) noexcept;
    Index(const Index&) = delete;
    Index& operator=(const Index&) = delete;

    /// Ladders may be precomputed (shared across kinds built from the same
    /// graph); when absent they are computed here for the CBR-bearing kinds.
    static Index build(const SocialGraph& g, const CoreIndex& core, IndexKind kind,
                       std::uint32_t page_size, const Rect& domain = {{0, 0}, {1, 1}},
                       const std::vector<CbrLadder>* ladders = nullptr);

    void save(const std::string& dir) const;
    static Index load(const std::string& dir);

    IndexKind kind() const { return kind_; }
    std::uint32_t page_size() const { return page_size_; }
    std::uint32_t fanout() const { return fanout_; }
    std::uint32_t min_fanout() const { return min_fanout_; }
    const Rect& domain() const { return domain_; }
    std::uint64_t user_count() const { return user_locations_.size(); }
    bool social_metadata() const { return kind_ != IndexKind::BR; }
    bool has_cbrs() const { return kind_ == IndexKind::SAR || kind_ == IndexKind::SARSTAR; }

    std::uint64_t root_page() const;
    IndexNode read_node(std::uint64_t page_id, PageCounters& pc) const;
    UserRecord read_user(UserId id, PageCounters& pc) const;

    /// Total number of CBR rects stored across all entries.
    std::uint64_t stored_cbr_count() const;
    std::uint64_t page_count() const;

    /// Leaf-level ladder of one user (empty for BR/CR).
    const CbrLadder& user_ladder(UserId id) const { return ladders_[id]; }

    /// Reconstructs the indexed graph from the stored user records.
    SocialGraph to_graph() const;

    // -- mutation surface for the update engine (single writer) --

    /// Moves a user entry to a new location (delete + reinsert) and refreshes
    /// MBRs, core numbers and combined ladders along the affected paths.
    void relocate_user(UserId id, const Point& to);
    /// Rewrites the stored ladder of a user and recombines ancestor ladders.
    void replace_user_ladder(UserId id, CbrLadder ladder);
    /// Refreshes a user's core number (and ancestors' max) after a social
    /// update; extends or truncates nothing: stored ladder levels stay as
    /// they are until recomputed.
    void refresh_user_core(UserId id, std::uint32_t core);
    /// Rewrites user records/adjacency from the current graph state.
    void sync_user_data(const SocialGraph& g);
    /// Walks every (node, entry) pair; used by invariant checks and tests.
    void for_each_entry(const std::function<void(const IndexNode&, const EntryMeta&)>& fn) const;

    struct BuildStats {
        std::uint64_t nodes = 0;
        std::uint64_t splits = 0;
    };
    const BuildStats& build_stats() const { return stats_; }

private:
    struct BuildEntry;
    struct BuildNode;
    struct CostCache;

    IndexKind kind_ = IndexKind::BR;
    std::uint32_t page_size_ = 4096;
    std::uint32_t fanout_ = 0;
    std::uint32_t min_fanout_ = 0;
    Rect domain_{{0, 0}, {1, 1}};

    std::vector<BuildNode> nodes_;
    std::int64_t root_ = -1;
    std::vector<CbrLadder> ladders_;          // per user; empty vector for BR/CR
    std::vector<std::uint32_t> user_cores_;   // per user (0 for BR)
    std::vector<Point> user_locations_;
    std::vector<std::vector<UserId>> user_adjacency_;
    std::vector<std::int64_t> user_leaf_;     // user id -> node holding its entry
    BuildStats stats_;

    // Lazily regenerated byte images.
    mutable bool pages_dirty_ = true;
    mutable bool users_dirty_ = true;
    mutable std::vector<std::uint8_t> pages_;
    mutable std::vector<std::uint8_t> users_bytes_;
    mutable std::vector<std::uint8_t> adj_bytes_;
    mutable std::vector<std::int64_t> page_to_node_;
    mutable std::uint64_t root_page_ = 0;

    // SaR* insertion cost caches (not serialized).
    std::unique_ptr<CbrEngine> cbr_engine_;  // only while building

    void derive_fanout();
    std::int64_t new_node(bool leaf);
    void insert_entry(BuildEntry entry, std::uint32_t target_level, bool refresh_meta = false);
    std::int64_t choose_node(const BuildEntry& entry, std::uint32_t target_level);
    double entry_insert_cost(const BuildEntry& e, UserId v) const;
    void absorb_user_into_cache(CostCache& cache, UserId u) const;
    void rebuild_cache(BuildEntry& e) const;
    void split_node_at(std::int64_t node_id);
    void quadratic_split(std::vector<BuildEntry>& entries, std::vector<BuildEntry>& left,
                         std::vector<BuildEntry>& right) const;
    void cost_split(std::vector<BuildEntry>& entries, bool leaf, std::vector<BuildEntry>& left,
                    std::vector<BuildEntry>& right) const;
    double group_cost(const std::vector<const BuildEntry*>& parts, bool leaf) const;
    void collect_users(const BuildEntry& e, bool leaf, std::vector<UserId>& out) const;
    void refresh_upward(std::int64_t node_id);
    void recompute_entry_meta(std::int64_t node_id, BuildEntry& parent_entry) const;
    void compute_social_metadata();
    void remove_user_entry(UserId id);

    void encode_pages() const;
    void encode_users() const;
    void mark_dirty() { pages_dirty_ = true; }
    friend struct IndexDecoder;
};

}  // namespace gsg
