#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "signav/episode.hpp"
#include "signav/scene.hpp"

namespace signav {

struct ManifestEntry {
    std::string file;  // relative to the dataset directory
    uint64_t hash;     // FNV-1a 64 over file bytes
};

struct DatasetManifest {
    uint64_t seed = 0;
    std::map<std::string, std::string> config_echo;
    std::vector<ManifestEntry> scenes;
    std::map<std::string, std::vector<ManifestEntry>> splits;
};

struct DatasetCounts {
    int train = 0;
    int val_seen = 0;
    int val_unseen = 0;
};

struct DatasetParams {
    double poisson_r = 1.0;
    double poisson_c_min = 0.4;
    double edge_radius = 2.0;
    double min_geodesic = 5.0;
    CameraModel cam;
};

uint64_t hash_file(const std::string& path);

// val_seen shares scenes with train (fresh start/goal pairs); val_unseen draws
// only from the reserved last scene. Writes scene + episode files under
// out_dir and returns the manifest (also written as manifest.json).
DatasetManifest build_dataset(const std::vector<SceneMap>& scenes, const DatasetCounts& counts,
                              uint64_t seed, const std::string& out_dir,
                              const DatasetParams& params = {},
                              const std::map<std::string, std::string>& config_echo = {});

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text);
void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

// Recomputes every hash; throws ValidationError naming the first bad file.
void verify_manifest(const DatasetManifest& m, const std::string& base_dir);

std::vector<Episode> load_split(const DatasetManifest& m, const std::string& base_dir,
                                const std::string& split);
std::map<std::string, SceneMap> load_scenes(const DatasetManifest& m, const std::string& base_dir);

}  // namespace signav
