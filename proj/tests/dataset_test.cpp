#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "signav/dataset.hpp"
#include "signav/error.hpp"
#include "signav/scene.hpp"

using namespace signav;
namespace fs = std::filesystem;

namespace {

std::vector<SceneMap> test_scenes(int n) {
    FloorplanParams fp;
    std::vector<SceneMap> scenes;
    for (int i = 0; i < n; ++i) {
        SceneMap s = gen_floorplan(100 + static_cast<uint64_t>(i), fp);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "scene-%03d", i);
        s.scene_id = buf;
        scenes.push_back(std::move(s));
    }
    return scenes;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

DatasetParams fast_params() {
    DatasetParams p;
    p.cam.image_width = p.cam.image_height = 16;
    return p;
}

}  // namespace

TEST_CASE("build_dataset: counts, held-out scene, and verification") {
    auto scenes = test_scenes(3);
    TempDir dir("signav-dataset-test-a");
    DatasetCounts counts{4, 2, 2};
    DatasetManifest m =
        build_dataset(scenes, counts, 9001, dir.path.string(), fast_params(), {{"k", "v"}});

    CHECK(m.seed == 9001);
    CHECK(m.config_echo.at("k") == "v");
    REQUIRE(m.scenes.size() == 3);
    REQUIRE(m.splits.at("train").size() == 4);
    REQUIRE(m.splits.at("val_seen").size() == 2);
    REQUIRE(m.splits.at("val_unseen").size() == 2);

    // every referenced file exists and hashes clean
    verify_manifest(m, dir.path.string());

    // loading the manifest back reproduces it byte for byte
    DatasetManifest loaded = load_manifest((dir.path / "manifest.json").string());
    CHECK(manifest_to_json(loaded) == manifest_to_json(m));

    auto scene_map = load_scenes(m, dir.path.string());
    REQUIRE(scene_map.size() == 3);
    for (const auto& [id, s] : scene_map) {
        CHECK(s.scene_id == id);
        validate_scene(s);
    }

    // the last scene is reserved for val_unseen
    const std::string held_out = scenes.back().scene_id;
    std::set<std::string> ids;
    for (const std::string& split : {"train", "val_seen"}) {
        for (const Episode& ep : load_split(m, dir.path.string(), split)) {
            CHECK(ep.scene_id != held_out);
            CHECK(scene_map.count(ep.scene_id) == 1);
            CHECK(ids.insert(ep.episode_id).second);  // unique across splits
            CHECK(!ep.steps.empty());
        }
    }
    for (const Episode& ep : load_split(m, dir.path.string(), "val_unseen")) {
        CHECK(ep.scene_id == held_out);
        CHECK(ids.insert(ep.episode_id).second);
    }

    CHECK_THROWS_AS(load_split(m, dir.path.string(), "test"), UsageError);
}

TEST_CASE("build_dataset: deterministic across runs") {
    auto scenes = test_scenes(2);
    TempDir a("signav-dataset-test-b1");
    TempDir b("signav-dataset-test-b2");
    DatasetCounts counts{3, 1, 1};
    DatasetManifest ma = build_dataset(scenes, counts, 7, a.path.string(), fast_params());
    DatasetManifest mb = build_dataset(scenes, counts, 7, b.path.string(), fast_params());
    // identical relative paths and identical content hashes
    CHECK(manifest_to_json(ma) == manifest_to_json(mb));

    // a different seed produces different episodes
    TempDir c("signav-dataset-test-b3");
    DatasetManifest mc = build_dataset(scenes, counts, 8, c.path.string(), fast_params());
    CHECK(manifest_to_json(mc) != manifest_to_json(ma));
}

TEST_CASE("verify_manifest: detects tampering") {
    auto scenes = test_scenes(2);
    TempDir dir("signav-dataset-test-c");
    DatasetManifest m = build_dataset(scenes, {2, 0, 0}, 13, dir.path.string(), fast_params());
    verify_manifest(m, dir.path.string());

    // flip one byte in the first episode file
    fs::path victim = dir.path / m.splits.at("train").front().file;
    {
        std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
        REQUIRE(f.good());
        f.seekp(10);
        char ch = 0;
        f.seekg(10);
        f.get(ch);
        f.seekp(10);
        f.put(ch == 'x' ? 'y' : 'x');
    }
    CHECK_THROWS_WITH_AS(verify_manifest(m, dir.path.string()),
                         doctest::Contains(m.splits.at("train").front().file.c_str()),
                         ValidationError);

    // a missing file also fails
    fs::remove(victim);
    CHECK_THROWS_AS(verify_manifest(m, dir.path.string()), ValidationError);
}

TEST_CASE("build_dataset: input validation") {
    TempDir dir("signav-dataset-test-d");
    CHECK_THROWS_AS(build_dataset({}, {1, 0, 0}, 1, dir.path.string(), fast_params()),
                    UsageError);

    auto one = test_scenes(1);
    CHECK_THROWS_AS(build_dataset(one, {0, 0, 1}, 1, dir.path.string(), fast_params()),
                    ValidationError);
    CHECK_THROWS_AS(build_dataset(one, {-1, 0, 0}, 1, dir.path.string(), fast_params()),
                    UsageError);

    // a single scene without val_unseen is fine
    DatasetManifest m = build_dataset(one, {1, 1, 0}, 2, dir.path.string(), fast_params());
    CHECK(m.splits.at("train").size() == 1);
    CHECK(m.splits.at("val_seen").size() == 1);
    CHECK(m.splits.count("val_unseen") == 1);
    CHECK(m.splits.at("val_unseen").empty());
}

TEST_CASE("manifest json: malformed input") {
    CHECK_THROWS_AS(manifest_from_json("not json"), ValidationError);
    CHECK_THROWS_AS(manifest_from_json("{}"), ValidationError);
    CHECK_THROWS_AS(manifest_from_json(R"({"seed":"00","scenes":[{"file":1}],"splits":{}})"),
                    ValidationError);
}
