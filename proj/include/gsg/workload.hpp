#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsg/query.hpp"
#include "gsg/social_graph.hpp"

namespace gsg {

/// Parameter ranges a workload is drawn from; single values are degenerate
/// ranges.
struct ParamGrid {
    std::uint32_t c_min = 4, c_max = 4;
    std::uint32_t k_min = 100, k_max = 100;
    double r_min = 0.002, r_max = 0.002;
};

struct Workload {
    std::string dataset_digest;
    std::uint64_t seed = 0;
    ParamGrid grid;
    std::vector<QuerySpec> queries;
};

/// Reproducible query list: issuers drawn uniformly from users, parameters
/// uniformly from the grid; ranges are squares centered at the issuer,
/// clipped to the domain.
Workload gen_workload(const SocialGraph& g, const std::string& dataset_digest,
                      ConstraintType type, std::size_t count, const ParamGrid& grid,
                      std::uint64_t seed, const Rect& domain = {{0, 0}, {1, 1}});

void write_workload(const std::string& path, const Workload& w);
Workload read_workload(const std::string& path);

/// Executes a workload against each index directory and writes one CSV row
/// per query plus one aggregate row per (kind, type). Throws when an index
/// was built from a different dataset than the workload.
void run_bench(const std::vector<std::string>& index_dirs, const Workload& workload,
               const std::string& report_path, double page_ms = 2.0);

const char* constraint_name(ConstraintType t);
std::optional<ConstraintType> constraint_from_name(const std::string& name);

}  // namespace gsg
