#include "gsg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace gsg {

namespace {

// Deterministic cross-platform RNG (splitmix64).
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
    double gauss() {
        double u1 = std::max(uniform(), 1e-300), u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }
};

void write_graph_bin(const std::string& path, const SocialGraph& g) {
    std::vector<std::uint8_t> buf;
    auto u64 = [&](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    auto f64 = [&](double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    };
    u64(g.user_count());
    u64(g.edge_count());
    for (UserId v = 0; v < g.user_count(); ++v) {
        f64(g.location(v).x);
        f64(g.location(v).y);
    }
    for (UserId v = 0; v < g.user_count(); ++v)
        for (UserId w : g.neighbors(v))
            if (v < w) {
                u64(v);
                u64(w);
            }
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + tmp);
        f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    std::filesystem::rename(tmp, path);
}

std::vector<std::uint8_t> read_all(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw std::runtime_error("cannot read " + path);
    auto size = f.tellg();
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
    f.seekg(0);
    f.read(reinterpret_cast<char*>(buf.data()), size);
    return buf;
}

}  // namespace

std::string fnv1a_hex(const void* data, std::size_t len) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

void write_manifest(const std::string& dir, const DatasetManifest& m) {
    nlohmann::json j;
    j["source"] = m.source;
    j["users_raw"] = m.users_raw;
    j["users_retained"] = m.users_retained;
    j["users_pruned"] = m.users_pruned;
    j["edges_raw"] = m.edges_raw;
    j["edges_retained"] = m.edges_retained;
    j["min_x"] = m.min_x;
    j["max_x"] = m.max_x;
    j["min_y"] = m.min_y;
    j["max_y"] = m.max_y;
    j["seed"] = m.seed;
    j["retries"] = m.retries;
    j["digest"] = m.digest;
    std::ofstream f(dir + "/manifest.json", std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write manifest in " + dir);
    f << j.dump(2) << '\n';
}

DatasetManifest read_manifest(const std::string& dir) {
    std::ifstream f(dir + "/manifest.json");
    if (!f) throw std::runtime_error("cannot read manifest in " + dir);
    nlohmann::json j;
    f >> j;
    DatasetManifest m;
    m.source = j.value("source", "synthetic");
    m.users_raw = j.value("users_raw", 0ull);
    m.users_retained = j.value("users_retained", 0ull);
    m.users_pruned = j.value("users_pruned", 0ull);
    m.edges_raw = j.value("edges_raw", 0ull);
    m.edges_retained = j.value("edges_retained", 0ull);
    m.min_x = j.value("min_x", 0.0);
    m.max_x = j.value("max_x", 1.0);
    m.min_y = j.value("min_y", 0.0);
    m.max_y = j.value("max_y", 1.0);
    m.seed = j.value("seed", 0ull);
    m.retries = j.value("retries", 0ull);
    m.digest = j.value("digest", "");
    return m;
}

SocialGraph load_dataset(const std::string& dir, DatasetManifest* manifest) {
    auto buf = read_all(dir + "/graph.bin");
    const std::uint8_t* p = buf.data();
    auto u64 = [&] {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(*p++) << (8 * i);
        return v;
    };
    auto f64 = [&] {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    };
    std::uint64_t n = u64();
    std::uint64_t m = u64();
    std::vector<Point> locs(n);
    for (auto& pt : locs) {
        pt.x = f64();
        pt.y = f64();
    }
    std::vector<std::pair<UserId, UserId>> edges(m);
    for (auto& e : edges) {
        e.first = static_cast<UserId>(u64());
        e.second = static_cast<UserId>(u64());
    }
    if (manifest) *manifest = read_manifest(dir);
    return SocialGraph(std::move(locs), edges);
}

DatasetManifest ingest(const std::string& edges_path, const std::string& checkins_path,
                       const std::string& out_dir, std::uint64_t seed) {
    DatasetManifest man;
    man.source = edges_path + "+" + checkins_path;
    man.seed = seed;

    // First check-in per raw user id, in file order.
    std::map<std::uint64_t, Point> first_checkin;
    {
        std::ifstream f(checkins_path);
        if (!f) throw std::runtime_error("cannot read " + checkins_path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(f, line)) {
            ++line_no;
            if (line.empty()) continue;
            std::istringstream ss(line);
            std::uint64_t user;
            std::string ts;
            double lat, lon;
            if (!(ss >> user >> ts >> lat >> lon))
                throw std::runtime_error(checkins_path + ": parse error at line " +
                                         std::to_string(line_no));
            first_checkin.emplace(user, Point{lon, lat});  // keeps the first only
        }
    }

    std::vector<std::pair<std::uint64_t, std::uint64_t>> raw_edges;
    std::unordered_set<std::uint64_t> raw_users;
    {
        std::ifstream f(edges_path);
        if (!f) throw std::runtime_error("cannot read " + edges_path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(f, line)) {
            ++line_no;
            if (line.empty()) continue;
            std::istringstream ss(line);
            std::uint64_t a, b;
            if (!(ss >> a >> b))
                throw std::runtime_error(edges_path + ": parse error at line " +
                                         std::to_string(line_no));
            raw_edges.emplace_back(a, b);
            raw_users.insert(a);
            raw_users.insert(b);
        }
    }
    for (auto& [u, p] : first_checkin) raw_users.insert(u);
    man.users_raw = raw_users.size();
    man.edges_raw = raw_edges.size();

    // Retain users with a check-in; densify ids in ascending raw order.
    std::map<std::uint64_t, UserId> dense;
    for (auto& [u, p] : first_checkin) dense.emplace(u, static_cast<UserId>(dense.size()));
    man.users_retained = dense.size();
    man.users_pruned = man.users_raw - man.users_retained;
    if (dense.empty()) throw std::runtime_error("ingest: no user has a check-in (empty graph)");

    double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
    for (auto& [u, p] : first_checkin) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    man.min_x = min_x;
    man.max_x = max_x;
    man.min_y = min_y;
    man.max_y = max_y;
    auto norm = [](double v, double lo, double hi) {
        return hi > lo ? (v - lo) / (hi - lo) : 0.5;
    };
    std::vector<Point> locs(dense.size());
    for (auto& [u, p] : first_checkin)
        locs[dense[u]] = {norm(p.x, min_x, max_x), norm(p.y, min_y, max_y)};

    std::vector<std::pair<UserId, UserId>> edges;
    for (auto& [a, b] : raw_edges) {
        auto ia = dense.find(a), ib = dense.find(b);
        if (ia == dense.end() || ib == dense.end() || a == b) continue;
        edges.emplace_back(ia->second, ib->second);
    }
    SocialGraph g(std::move(locs), edges);  // dedupes and symmetrizes
    man.edges_retained = g.edge_count();

    std::filesystem::create_directories(out_dir);
    write_graph_bin(out_dir + "/graph.bin", g);
    auto bytes = read_all(out_dir + "/graph.bin");
    man.digest = fnv1a_hex(bytes.data(), bytes.size());
    write_manifest(out_dir, man);
    return man;
}

SocialGraph synth_graph(const SynthParams& params, std::uint64_t* retries_out) {
    const std::uint64_t n = params.n;
    if (n == 0) throw std::invalid_argument("synth: n must be positive");
    if (params.m > n * (n - 1) / 2) throw std::invalid_argument("synth: too many edges");
    Rng rng(params.seed * 0x9E3779B97F4A7C15ull + 1);

    const std::uint32_t clusters = std::max(1u, params.clusters);
    std::vector<Point> centers(clusters);
    for (auto& c : centers) c = {0.15 + 0.7 * rng.uniform(), 0.15 + 0.7 * rng.uniform()};

    std::vector<std::uint32_t> cluster_of(n);
    std::vector<Point> locs(n);
    std::vector<std::vector<UserId>> cluster_users(clusters);
    for (UserId v = 0; v < n; ++v) {
        std::uint32_t cl = static_cast<std::uint32_t>(rng.below(clusters));
        cluster_of[v] = cl;
        cluster_users[cl].push_back(v);
        locs[v] = {std::clamp(centers[cl].x + params.cluster_sigma * rng.gauss(), 0.0, 1.0),
                   std::clamp(centers[cl].y + params.cluster_sigma * rng.gauss(), 0.0, 1.0)};
    }

    // Power-law-ish degree weights drive endpoint sampling.
    std::vector<double> weight(n);
    for (UserId v = 0; v < n; ++v)
        weight[v] = std::pow(1.0 - rng.uniform() * 0.9999, -1.0 / 1.5);
    std::vector<double> cum_global(n);
    double acc = 0;
    for (UserId v = 0; v < n; ++v) cum_global[v] = (acc += weight[v]);
    std::vector<std::vector<double>> cum_cluster(clusters);
    for (std::uint32_t c = 0; c < clusters; ++c) {
        double a = 0;
        for (UserId v : cluster_users[c]) cum_cluster[c].push_back(a += weight[v]);
    }
    auto sample_global = [&] {
        double t = rng.uniform() * cum_global.back();
        return static_cast<UserId>(
            std::lower_bound(cum_global.begin(), cum_global.end(), t) - cum_global.begin());
    };
    auto sample_cluster = [&](std::uint32_t c) {
        double t = rng.uniform() * cum_cluster[c].back();
        std::size_t i = static_cast<std::size_t>(
            std::lower_bound(cum_cluster[c].begin(), cum_cluster[c].end(), t) -
            cum_cluster[c].begin());
        return cluster_users[c][std::min(i, cluster_users[c].size() - 1)];
    };

    std::unordered_set<std::uint64_t> seen;
    std::vector<std::pair<UserId, UserId>> edges;
    std::uint64_t retries = 0;
    while (edges.size() < params.m) {
        UserId a = sample_global();
        UserId b;
        if (rng.uniform() < params.homophily && cluster_users[cluster_of[a]].size() > 1)
            b = sample_cluster(cluster_of[a]);
        else
            b = sample_global();
        if (a == b) {
            ++retries;
            continue;
        }
        std::uint64_t key = (static_cast<std::uint64_t>(std::min(a, b)) << 32) | std::max(a, b);
        if (!seen.insert(key).second) {
            ++retries;
            // After heavy rejection fall back to uniform pairs so dense
            // requests still terminate.
            if (retries > 50 * params.m + 1000) {
                for (UserId x = 0; x < n && edges.size() < params.m; ++x)
                    for (UserId y = x + 1; y < n && edges.size() < params.m; ++y) {
                        std::uint64_t k2 = (static_cast<std::uint64_t>(x) << 32) | y;
                        if (seen.insert(k2).second) edges.emplace_back(x, y);
                    }
                break;
            }
            continue;
        }
        edges.emplace_back(a, b);
    }
    if (retries_out) *retries_out = retries;
    return SocialGraph(std::move(locs), edges);
}

DatasetManifest synth(const SynthParams& params, const std::string& out_dir) {
    DatasetManifest man;
    man.source = "synthetic";
    man.seed = params.seed;
    SocialGraph g = synth_graph(params, &man.retries);
    man.users_raw = man.users_retained = g.user_count();
    man.edges_raw = man.edges_retained = g.edge_count();

    std::filesystem::create_directories(out_dir);
    write_graph_bin(out_dir + "/graph.bin", g);
    auto bytes = read_all(out_dir + "/graph.bin");
    man.digest = fnv1a_hex(bytes.data(), bytes.size());
    write_manifest(out_dir, man);
    return man;
}

}  // namespace gsg
