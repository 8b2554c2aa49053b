#include "signav/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "signav/error.hpp"
#include "signav/navgraph.hpp"
#include "signav/util.hpp"

namespace fs = std::filesystem;

namespace signav {

uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read file for hashing: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string bytes = ss.str();
    return fnv1a64(bytes.data(), bytes.size());
}

namespace {

std::string hex64(uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

uint64_t parse_hex64(const std::string& s) {
    return std::stoull(s, nullptr, 16);
}

}  // namespace

DatasetManifest build_dataset(const std::vector<SceneMap>& scenes, const DatasetCounts& counts,
                              uint64_t seed, const std::string& out_dir,
                              const DatasetParams& params,
                              const std::map<std::string, std::string>& config_echo) {
    if (scenes.empty()) throw UsageError("build_dataset: no scenes");
    if (counts.val_unseen > 0 && scenes.size() < 2)
        throw ValidationError("build_dataset: val_unseen split requires at least 2 scenes");
    if (counts.train < 0 || counts.val_seen < 0 || counts.val_unseen < 0)
        throw UsageError("build_dataset: negative episode count");

    fs::create_directories(fs::path(out_dir) / "scenes");
    fs::create_directories(fs::path(out_dir) / "episodes");

    DatasetManifest m;
    m.seed = seed;
    m.config_echo = config_echo;

    for (const auto& scene : scenes) {
        std::string rel = "scenes/" + scene.scene_id + ".json";
        std::string abs = (fs::path(out_dir) / rel).string();
        save_scene(scene, abs);
        m.scenes.push_back({rel, hash_file(abs)});
    }

    // Reserve the last scene for val_unseen whenever that split is requested.
    size_t n_seen = counts.val_unseen > 0 ? scenes.size() - 1 : scenes.size();
    if (n_seen == 0) n_seen = scenes.size();  // val_unseen-only datasets still need a pool

    struct PerScene {
        NavGraph graph;
    };
    std::vector<PerScene> cache(scenes.size());
    auto graph_for = [&](size_t idx) -> const NavGraph& {
        auto& c = cache[idx];
        if (c.graph.vertices.empty()) {
            auto samples = poisson_sample(scenes[idx], params.poisson_r, params.poisson_c_min,
                                          derive_seed(seed, "poisson", idx));
            c.graph = build_graph(scenes[idx], samples, params.edge_radius);
        }
        return c.graph;
    };

    auto gen_split = [&](const std::string& split, int count, bool unseen) {
        auto& entries = m.splits[split];
        for (int i = 0; i < count; ++i) {
            size_t scene_idx = unseen ? scenes.size() - 1 : static_cast<size_t>(i) % n_seen;
            const SceneMap& scene = scenes[scene_idx];
            uint64_t base = derive_seed(seed, split, static_cast<uint64_t>(i));
            Episode ep;
            bool ok = false;
            for (uint64_t retry = 0; retry < 10 && !ok; ++retry) {
                try {
                    ep = generate_episode(scene, graph_for(scene_idx),
                                          derive_seed(base, "retry", retry), params.min_geodesic,
                                          params.cam);
                    ok = true;
                } catch (const ValidationError&) {
                }
            }
            if (!ok)
                throw ValidationError("build_dataset: episode generation failed for split '" +
                                      split + "' index " + std::to_string(i));
            std::string rel = "episodes/" + ep.episode_id + ".jsonl";
            std::string abs = (fs::path(out_dir) / rel).string();
            save_episode(ep, abs);
            entries.push_back({rel, hash_file(abs)});
        }
    };
    gen_split("train", counts.train, false);
    gen_split("val_seen", counts.val_seen, false);
    gen_split("val_unseen", counts.val_unseen, true);

    save_manifest(m, (fs::path(out_dir) / "manifest.json").string());
    return m;
}

std::string manifest_to_json(const DatasetManifest& m) {
    nlohmann::ordered_json j;
    j["seed"] = hex64(m.seed);
    j["config"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : m.config_echo) j["config"][k] = v;
    j["scenes"] = nlohmann::ordered_json::array();
    for (const auto& e : m.scenes)
        j["scenes"].push_back({{"file", e.file}, {"hash", hex64(e.hash)}});
    j["splits"] = nlohmann::ordered_json::object();
    for (const auto& [split, entries] : m.splits) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& e : entries) arr.push_back({{"file", e.file}, {"hash", hex64(e.hash)}});
        j["splits"][split] = arr;
    }
    return j.dump(1);
}

DatasetManifest manifest_from_json(const std::string& text) {
    DatasetManifest m;
    try {
        auto j = nlohmann::json::parse(text);
        m.seed = parse_hex64(j.at("seed").get<std::string>());
        if (j.contains("config"))
            for (const auto& [k, v] : j.at("config").items())
                m.config_echo[k] = v.get<std::string>();
        for (const auto& e : j.at("scenes"))
            m.scenes.push_back(
                {e.at("file").get<std::string>(), parse_hex64(e.at("hash").get<std::string>())});
        for (const auto& [split, arr] : j.at("splits").items())
            for (const auto& e : arr)
                m.splits[split].push_back(
                    {e.at("file").get<std::string>(), parse_hex64(e.at("hash").get<std::string>())});
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("manifest: malformed: ") + e.what());
    } catch (const std::exception& e) {
        throw ValidationError(std::string("manifest: malformed: ") + e.what());
    }
    return m;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write manifest: " + path);
    out << manifest_to_json(m) << "\n";
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read manifest: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return manifest_from_json(ss.str());
}

void verify_manifest(const DatasetManifest& m, const std::string& base_dir) {
    auto check = [&](const ManifestEntry& e) {
        std::string abs = (fs::path(base_dir) / e.file).string();
        uint64_t h = hash_file(abs);
        if (h != e.hash)
            throw ValidationError("manifest verification failed for file: " + e.file);
    };
    for (const auto& e : m.scenes) check(e);
    for (const auto& [split, entries] : m.splits)
        for (const auto& e : entries) check(e);
}

std::vector<Episode> load_split(const DatasetManifest& m, const std::string& base_dir,
                                const std::string& split) {
    auto it = m.splits.find(split);
    if (it == m.splits.end()) throw UsageError("unknown split: " + split);
    std::vector<Episode> eps;
    for (const auto& e : it->second)
        eps.push_back(load_episode((fs::path(base_dir) / e.file).string()));
    return eps;
}

std::map<std::string, SceneMap> load_scenes(const DatasetManifest& m, const std::string& base_dir) {
    std::map<std::string, SceneMap> out;
    for (const auto& e : m.scenes) {
        SceneMap s = load_scene((fs::path(base_dir) / e.file).string());
        out.emplace(s.scene_id, std::move(s));
    }
    return out;
}

}  // namespace signav
