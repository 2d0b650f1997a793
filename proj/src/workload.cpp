#include "gsg/workload.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

#include <json.hpp>

#include "gsg/dataset.hpp"
#include "gsg/update.hpp"

namespace gsg {

namespace {

struct Rng {
    std::uint64_t state;
    explicit Rng(std::uint64_t seed) : state(seed) {}
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    std::uint64_t below(std::uint64_t n) { return next() % n; }
};

std::string fmt9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

const char* constraint_name(ConstraintType t) {
    switch (t) {
        case ConstraintType::Range: return "range";
        case ConstraintType::RelaxedKnn: return "rknn";
        default: return "knn";
    }
}

std::optional<ConstraintType> constraint_from_name(const std::string& name) {
    if (name == "range") return ConstraintType::Range;
    if (name == "rknn") return ConstraintType::RelaxedKnn;
    if (name == "knn") return ConstraintType::StrictKnn;
    return std::nullopt;
}

Workload gen_workload(const SocialGraph& g, const std::string& dataset_digest,
                      ConstraintType type, std::size_t count, const ParamGrid& grid,
                      std::uint64_t seed, const Rect& domain) {
    if (g.user_count() == 0) throw std::invalid_argument("gen_workload: empty graph");
    Workload w;
    w.dataset_digest = dataset_digest;
    w.seed = seed;
    w.grid = grid;
    Rng rng(seed * 0x2545F4914F6CDD1Dull + 7);
    for (std::size_t i = 0; i < count; ++i) {
        QuerySpec q;
        q.type = type;
        q.issuer = static_cast<UserId>(rng.below(g.user_count()));
        q.c = grid.c_min + static_cast<std::uint32_t>(rng.below(grid.c_max - grid.c_min + 1));
        if (type == ConstraintType::Range) {
            double r = grid.r_min + (grid.r_max - grid.r_min) * rng.uniform();
            const Point& p = g.location(q.issuer);
            q.range = {{std::max(domain.lo.x, p.x - r / 2), std::max(domain.lo.y, p.y - r / 2)},
                       {std::min(domain.hi.x, p.x + r / 2), std::min(domain.hi.y, p.y + r / 2)}};
        } else {
            q.k = grid.k_min + static_cast<std::uint32_t>(rng.below(grid.k_max - grid.k_min + 1));
        }
        w.queries.push_back(q);
    }
    return w;
}

void write_workload(const std::string& path, const Workload& w) {
    nlohmann::json j;
    j["dataset_digest"] = w.dataset_digest;
    j["seed"] = w.seed;
    j["grid"] = {{"c_min", w.grid.c_min},   {"c_max", w.grid.c_max}, {"k_min", w.grid.k_min},
                 {"k_max", w.grid.k_max},   {"r_min", w.grid.r_min}, {"r_max", w.grid.r_max}};
    nlohmann::json qs = nlohmann::json::array();
    for (const QuerySpec& q : w.queries) {
        nlohmann::json jq;
        jq["issuer"] = q.issuer;
        jq["type"] = constraint_name(q.type);
        jq["c"] = q.c;
        if (q.type == ConstraintType::Range)
            jq["range"] = {q.range.lo.x, q.range.lo.y, q.range.hi.x, q.range.hi.y};
        else
            jq["k"] = q.k;
        qs.push_back(jq);
    }
    j["queries"] = std::move(qs);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write workload " + path);
    f << j.dump(1) << '\n';
}

Workload read_workload(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read workload " + path);
    nlohmann::json j;
    f >> j;
    Workload w;
    w.dataset_digest = j.value("dataset_digest", "");
    w.seed = j.value("seed", 0ull);
    if (j.contains("grid")) {
        const auto& gj = j["grid"];
        w.grid.c_min = gj.value("c_min", 4u);
        w.grid.c_max = gj.value("c_max", 4u);
        w.grid.k_min = gj.value("k_min", 100u);
        w.grid.k_max = gj.value("k_max", 100u);
        w.grid.r_min = gj.value("r_min", 0.002);
        w.grid.r_max = gj.value("r_max", 0.002);
    }
    for (const auto& jq : j["queries"]) {
        QuerySpec q;
        q.issuer = jq.at("issuer").get<UserId>();
        auto t = constraint_from_name(jq.at("type").get<std::string>());
        if (!t) throw std::runtime_error("bad query type in workload");
        q.type = *t;
        q.c = jq.at("c").get<std::uint32_t>();
        if (q.type == ConstraintType::Range) {
            auto r = jq.at("range");
            q.range = {{r.at(0).get<double>(), r.at(1).get<double>()},
                       {r.at(2).get<double>(), r.at(3).get<double>()}};
        } else {
            q.k = jq.at("k").get<std::uint32_t>();
        }
        w.queries.push_back(q);
    }
    return w;
}

void run_bench(const std::vector<std::string>& index_dirs, const Workload& workload,
               const std::string& report_path, double page_ms) {
    std::ofstream out(report_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write report " + report_path);
    out << "query,kind,type,c,param,result_size,d_max,index_pages,coupled_pages,user_pages,"
           "cpu_ms,latency_ms,min_degree\n";

    struct Agg {
        double pages = 0, latency = 0;
        std::uint64_t count = 0;
    };
    std::map<std::pair<std::string, std::string>, Agg> agg;

    for (const std::string& dir : index_dirs) {
        Index index = Index::load(dir);
        {
            std::ifstream dg(dir + "/dataset.digest");
            std::string digest;
            if (dg >> digest && !workload.dataset_digest.empty() &&
                digest != workload.dataset_digest)
                throw std::runtime_error("index " + dir +
                                         " was built from a different dataset than the workload");
        }
        SocialGraph g = index.to_graph();
        CoreIndex core = core_decompose(g);
        QueryEngine engine(index, g, core);
        const std::string kind = index_kind_name(index.kind());

        for (std::size_t qi = 0; qi < workload.queries.size(); ++qi) {
            const QuerySpec& q = workload.queries[qi];
            GroupResult res = engine.run(q);
            double pages = static_cast<double>(res.counters.total());
            double latency = res.cpu_ms + pages * page_ms;

            // Audit: minimum internal degree of the returned group plus the
            // issuer; -1 for empty results.
            long min_deg = -1;
            if (!res.members.empty()) {
                VertexSet with_issuer = res.members;
                with_issuer.insert(
                    std::lower_bound(with_issuer.begin(), with_issuer.end(), q.issuer), q.issuer);
                min_deg = static_cast<long>(with_issuer.size());
                for (UserId u : with_issuer) {
                    long d = 0;
                    for (UserId w : g.neighbors(u))
                        if (std::binary_search(with_issuer.begin(), with_issuer.end(), w)) ++d;
                    min_deg = std::min(min_deg, d);
                }
            }

            double param = q.type == ConstraintType::Range ? q.range.width() : q.k;
            out << qi << ',' << kind << ',' << constraint_name(q.type) << ',' << q.c << ','
                << fmt9(param) << ',' << res.members.size() << ',' << fmt9(res.d_max) << ','
                << res.counters.index_pages << ',' << res.counters.coupled_pages << ','
                << res.counters.user_pages << ',' << fmt9(res.cpu_ms) << ',' << fmt9(latency)
                << ',' << min_deg << '\n';

            Agg& a = agg[{kind, constraint_name(q.type)}];
            a.pages += pages;
            a.latency += latency;
            ++a.count;
        }
    }
    for (auto& [key, a] : agg) {
        out << "AGG," << key.first << ',' << key.second << ",,,,,,,,"
            << fmt9(a.count ? a.pages / a.count : 0) << ','
            << fmt9(a.count ? a.latency / a.count : 0) << ",\n";
    }
}

}  // namespace gsg
