#pragma once

#include <cstdint>
#include <string>

#include "gsg/social_graph.hpp"

namespace gsg {

/// Provenance of one prepared dataset directory (graph.bin + manifest.json).
struct DatasetManifest {
    std::string source = "synthetic";
    std::uint64_t users_raw = 0;
    std::uint64_t users_retained = 0;
    std::uint64_t users_pruned = 0;
    std::uint64_t edges_raw = 0;
    std::uint64_t edges_retained = 0;
    // Per-axis affine normalization applied to raw coordinates.
    double min_x = 0, max_x = 1, min_y = 0, max_y = 1;
    std::uint64_t seed = 0;
    std::uint64_t retries = 0;  // synthetic edge resampling retries
    std::string digest;         // fnv1a-64 of graph.bin, hex
};

/// Loads a check-in + edge dataset (tab-separated check-ins
/// `user ts lat lon loc_id`, whitespace edge pairs): first check-in per user
/// becomes the location, users without check-ins are pruned together with
/// their edges, ids are densified, coordinates min-max normalized per axis.
DatasetManifest ingest(const std::string& edges_path, const std::string& checkins_path,
                       const std::string& out_dir, std::uint64_t seed);

struct SynthParams {
    std::uint64_t n = 0;
    std::uint64_t m = 0;
    std::uint32_t clusters = 4;
    std::uint64_t seed = 0;
    double homophily = 0.65;      // probability a friend comes from the same cluster
    double cluster_sigma = 0.03;  // spatial spread of one cluster
};

/// Synthesizes a clustered LBSN: power-law-ish degree weights, edges biased
/// to co-cluster, locations from a Gaussian mixture clipped to the domain.
DatasetManifest synth(const SynthParams& params, const std::string& out_dir);

SocialGraph load_dataset(const std::string& dir, DatasetManifest* manifest = nullptr);
DatasetManifest read_manifest(const std::string& dir);
void write_manifest(const std::string& dir, const DatasetManifest& m);

/// Builds an in-memory graph without touching disk (used by tests).
SocialGraph synth_graph(const SynthParams& params, std::uint64_t* retries = nullptr);

std::string fnv1a_hex(const void* data, std::size_t len);

}  // namespace gsg
