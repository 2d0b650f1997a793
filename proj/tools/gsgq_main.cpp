// Command-line workbench: dataset ingestion, synthetic LBSN generation,
// index building, workload generation, query execution, benchmarking, and
// lazy index updates.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gsg/dataset.hpp"
#include "gsg/index.hpp"
#include "gsg/query.hpp"
#include "gsg/update.hpp"
#include "gsg/workload.hpp"

using namespace gsg;

namespace {

void print_result(const GroupResult& res) {
    std::printf("members: %zu\n", res.members.size());
    if (!res.members.empty()) {
        std::printf("group:");
        for (UserId u : res.members) std::printf(" %u", u);
        std::printf("\n");
        std::printf("d_max: %.9g\n", res.d_max);
    }
    std::printf("pages: index=%llu coupled=%llu user=%llu\n",
                static_cast<unsigned long long>(res.counters.index_pages),
                static_cast<unsigned long long>(res.counters.coupled_pages),
                static_cast<unsigned long long>(res.counters.user_pages));
    std::printf("cpu_ms: %.3f\n", res.cpu_ms);
}

std::string read_digest(const std::string& dir) {
    std::ifstream f(dir + "/dataset.digest");
    std::string d;
    f >> d;
    return d;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"geo-social group query workbench"};
    app.require_subcommand(1);

    // ingest
    std::string in_edges, in_checkins, in_out;
    std::uint64_t in_seed = 0;
    auto* cmd_ingest = app.add_subcommand("ingest", "prepare a check-in dataset");
    cmd_ingest->add_option("--edges", in_edges)->required();
    cmd_ingest->add_option("--checkins", in_checkins)->required();
    cmd_ingest->add_option("--out", in_out)->required();
    cmd_ingest->add_option("--seed", in_seed);

    // synth
    SynthParams sp;
    std::string sy_out;
    auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic LBSN");
    cmd_synth->add_option("--n", sp.n)->required();
    cmd_synth->add_option("--m", sp.m)->required();
    cmd_synth->add_option("--clusters", sp.clusters)->required();
    cmd_synth->add_option("--seed", sp.seed)->required();
    cmd_synth->add_option("--out", sy_out)->required();

    // build
    std::string b_data, b_kind, b_out;
    std::uint32_t b_page = 4096;
    auto* cmd_build = app.add_subcommand("build", "build an index over a dataset");
    cmd_build->add_option("--data", b_data)->required();
    cmd_build->add_option("--index", b_kind)->required()->check(CLI::IsMember({"br", "cr", "sar", "sarstar"}));
    cmd_build->add_option("--page-size", b_page);
    cmd_build->add_option("--out", b_out)->required();

    // gen-workload
    std::string w_data, w_type, w_out;
    std::size_t w_count = 1000;
    std::uint32_t w_c = 4, w_k = 100;
    double w_r = 0.002;
    std::uint64_t w_seed = 0;
    auto* cmd_wl = app.add_subcommand("gen-workload", "generate a query workload");
    cmd_wl->add_option("--data", w_data)->required();
    cmd_wl->add_option("--type", w_type)->required()->check(CLI::IsMember({"range", "rknn", "knn"}));
    cmd_wl->add_option("--count", w_count);
    cmd_wl->add_option("--c", w_c);
    cmd_wl->add_option("--k", w_k);
    cmd_wl->add_option("--r", w_r);
    cmd_wl->add_option("--seed", w_seed)->required();
    cmd_wl->add_option("--out", w_out)->required();

    // query
    std::string q_index, q_type, q_memo;
    std::uint64_t q_issuer = 0;
    std::uint32_t q_c = 1, q_k = 0;
    double q_r = 0.0;
    auto* cmd_query = app.add_subcommand("query", "run one query against an index");
    cmd_query->add_option("--index", q_index)->required();
    cmd_query->add_option("--type", q_type)->required()->check(CLI::IsMember({"range", "rknn", "knn"}));
    cmd_query->add_option("--issuer", q_issuer)->required();
    cmd_query->add_option("--c", q_c)->required();
    cmd_query->add_option("--k", q_k);
    cmd_query->add_option("--r", q_r);
    cmd_query->add_option("--memo", q_memo);

    // bench
    std::string be_indexes, be_workload, be_report;
    double be_page_ms = 2.0;
    auto* cmd_bench = app.add_subcommand("bench", "run a workload over indexes");
    cmd_bench->add_option("--indexes", be_indexes)->required();
    cmd_bench->add_option("--workload", be_workload)->required();
    cmd_bench->add_option("--report", be_report)->required();
    cmd_bench->add_option("--page-ms", be_page_ms);

    // update
    std::string u_index, u_ops;
    std::uint64_t u_batch = 30000;
    auto* cmd_update = app.add_subcommand("update", "apply an update stream to an index");
    cmd_update->add_option("--index", u_index)->required();
    cmd_update->add_option("--ops", u_ops)->required();
    cmd_update->add_option("--batch-size", u_batch);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*cmd_ingest) {
            DatasetManifest man = ingest(in_edges, in_checkins, in_out, in_seed);
            std::printf("retained %llu users (%llu pruned), %llu edges, digest %s\n",
                        static_cast<unsigned long long>(man.users_retained),
                        static_cast<unsigned long long>(man.users_pruned),
                        static_cast<unsigned long long>(man.edges_retained), man.digest.c_str());
        } else if (*cmd_synth) {
            DatasetManifest man = synth(sp, sy_out);
            std::printf("synthesized %llu users, %llu edges (%llu retries), digest %s\n",
                        static_cast<unsigned long long>(man.users_retained),
                        static_cast<unsigned long long>(man.edges_retained),
                        static_cast<unsigned long long>(man.retries), man.digest.c_str());
        } else if (*cmd_build) {
            DatasetManifest man;
            SocialGraph g = load_dataset(b_data, &man);
            CoreIndex core = core_decompose(g);
            Index index = Index::build(g, core, *index_kind_from_name(b_kind), b_page);
            index.save(b_out);
            std::ofstream(b_out + "/dataset.digest") << man.digest << '\n';
            std::printf("built %s index: %llu pages, %llu stored CBRs\n", b_kind.c_str(),
                        static_cast<unsigned long long>(index.page_count()),
                        static_cast<unsigned long long>(index.stored_cbr_count()));
        } else if (*cmd_wl) {
            DatasetManifest man;
            SocialGraph g = load_dataset(w_data, &man);
            ParamGrid grid;
            grid.c_min = grid.c_max = w_c;
            grid.k_min = grid.k_max = w_k;
            grid.r_min = grid.r_max = w_r;
            Workload wl = gen_workload(g, man.digest, *constraint_from_name(w_type), w_count,
                                       grid, w_seed);
            write_workload(w_out, wl);
            std::printf("wrote %zu queries to %s\n", wl.queries.size(), w_out.c_str());
        } else if (*cmd_query) {
            Index index = Index::load(q_index);
            SocialGraph g = index.to_graph();
            CoreIndex core = core_decompose(g);
            QuerySpec q;
            q.issuer = static_cast<UserId>(q_issuer);
            q.type = *constraint_from_name(q_type);
            q.c = q_c;
            q.k = q_k;
            if (q.type == ConstraintType::Range) {
                const Point& p = g.location(q.issuer);
                q.range = {{std::max(0.0, p.x - q_r / 2), std::max(0.0, p.y - q_r / 2)},
                           {std::min(1.0, p.x + q_r / 2), std::min(1.0, p.y + q_r / 2)}};
            }
            UpdateEngine ue(g, core, index, 30000);
            if (!q_memo.empty())
                for (UserUpdate& u : parse_update_stream(q_memo)) ue.apply_update(u);
            print_result(ue.run_query(q));
        } else if (*cmd_bench) {
            std::vector<std::string> dirs;
            std::string cur;
            for (char ch : be_indexes) {
                if (ch == ',') {
                    if (!cur.empty()) dirs.push_back(cur);
                    cur.clear();
                } else {
                    cur.push_back(ch);
                }
            }
            if (!cur.empty()) dirs.push_back(cur);
            Workload wl = read_workload(be_workload);
            run_bench(dirs, wl, be_report, be_page_ms);
            std::printf("report written to %s\n", be_report.c_str());
        } else if (*cmd_update) {
            Index index = Index::load(u_index);
            SocialGraph g = index.to_graph();
            CoreIndex core = core_decompose(g);
            UpdateEngine ue(g, core, index, u_batch);
            auto updates = parse_update_stream(u_ops);
            for (UserUpdate& u : updates) ue.apply_update(u);
            index.save(u_index);
            ue.save_memo(u_index + "/memo.log");
            std::printf("applied %zu updates, %llu CBRs recomputed, %zu pending in memo\n",
                        updates.size(),
                        static_cast<unsigned long long>(ue.total_recomputed()),
                        ue.memo().size());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
