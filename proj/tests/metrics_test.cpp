#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include <json.hpp>

#include "signav/episode.hpp"
#include "signav/error.hpp"
#include "signav/metrics.hpp"
#include "signav/navgraph.hpp"
#include "signav/scene.hpp"

using namespace signav;

namespace {

// Exhaustive oracle: minimum alignment cost over every monotone warping path,
// computed by plain recursion instead of the rolling-array DP under test.
double dtw_brute(const Trajectory& r, const Trajectory& q) {
    std::function<double(size_t, size_t)> go = [&](size_t i, size_t j) -> double {
        double c = dist(r[i], q[j]);
        if (i == 0 && j == 0) return c;
        double best = std::numeric_limits<double>::infinity();
        if (i > 0) best = std::min(best, go(i - 1, j));
        if (j > 0) best = std::min(best, go(i, j - 1));
        if (i > 0 && j > 0) best = std::min(best, go(i - 1, j - 1));
        return c + best;
    };
    return go(r.size() - 1, q.size() - 1);
}

Trajectory random_traj(std::mt19937& eng, size_t max_len) {
    std::uniform_int_distribution<size_t> len(1, max_len);
    std::uniform_real_distribution<double> coord(0.0, 5.0);
    Trajectory t(len(eng));
    for (auto& p : t) p = {coord(eng), coord(eng)};
    return t;
}

}  // namespace

TEST_CASE("dtw matches exhaustive alignment enumeration") {
    std::mt19937 eng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        Trajectory r = random_traj(eng, 6);
        Trajectory q = random_traj(eng, 6);
        double got = dtw(r, q);
        double want = dtw_brute(r, q);
        CHECK(got == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("dtw worked examples") {
    Trajectory r{{0, 0}, {1, 0}};
    Trajectory q{{0, 1}, {1, 1}};
    // diagonal alignment pairs both points at distance 1
    CHECK(dtw(r, q) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(dtw(r, r) == doctest::Approx(0.0).epsilon(1e-12));

    // singleton vs singleton is just the point distance
    CHECK(dtw({{0, 0}}, {{3, 4}}) == doctest::Approx(5.0).epsilon(1e-12));

    // singleton reference aligns against every query point
    CHECK(dtw({{0, 0}}, {{1, 0}, {2, 0}}) == doctest::Approx(3.0).epsilon(1e-12));

    CHECK_THROWS_AS(dtw({}, q), UsageError);
    CHECK_THROWS_AS(dtw(r, {}), UsageError);
}

TEST_CASE("ndtw identities and worked example") {
    Trajectory r{{0, 0}, {1, 0}, {2, 0}, {3, 0}};
    CHECK(ndtw(r, r) == doctest::Approx(1.0).epsilon(1e-12));

    // uniform 1 m offset, two points: dtw = 2, |r| = 2, d_th = 1 -> e^-1
    Trajectory a{{0, 0}, {1, 0}};
    Trajectory b{{0, 1}, {1, 1}};
    CHECK(ndtw(a, b) == doctest::Approx(std::exp(-1.0)).epsilon(1e-9));

    // larger offsets score strictly worse
    double prev = 1.0;
    for (double off : {0.5, 1.0, 2.0, 4.0}) {
        Trajectory q{{0, off}, {1, off}, {2, off}, {3, off}};
        double v = ndtw(r, q);
        CHECK(v < prev);
        CHECK(v > 0.0);
        prev = v;
    }

    // normalization uses the reference length
    Trajectory r5{{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}};
    Trajectory q5{{0, 1}, {1, 1}, {2, 1}, {3, 1}, {4, 1}};
    CHECK(ndtw(r5, q5) == doctest::Approx(std::exp(-5.0 / 5.0)).epsilon(1e-9));
    CHECK(ndtw(r5, q5, 2.0) == doctest::Approx(std::exp(-5.0 / 10.0)).epsilon(1e-9));

    CHECK_THROWS_AS(ndtw(r, r, 0.0), UsageError);
    CHECK_THROWS_AS(ndtw(r, r, -1.0), UsageError);
}

TEST_CASE("sdtw gates ndtw by success") {
    CHECK(sdtw(1, 0.74) == doctest::Approx(0.74).epsilon(1e-12));
    CHECK(sdtw(0, 0.74) == 0.0);
    CHECK(sdtw(1, 0.0) == 0.0);
    CHECK(sdtw(1, 1.0) == 1.0);
    CHECK_THROWS_AS(sdtw(1, 1.2), UsageError);
    CHECK_THROWS_AS(sdtw(0, -0.1), UsageError);
}

TEST_CASE("rmse worked examples") {
    SmoothPath gt;
    gt.points = {{0, 0}, {1, 0}};

    // agent on the path exactly
    CHECK(rmse({{0, 0}, {1, 0}}, gt) == doctest::Approx(0.0).epsilon(1e-12));

    // distances 1 and 2 -> sqrt((1 + 4) / 2)
    CHECK(rmse({{0, 1}, {1, 2}}, gt) == doctest::Approx(std::sqrt(2.5)).epsilon(1e-12));

    // uniform offset is the offset itself
    CHECK(rmse({{0, 0.3}, {1, 0.3}}, gt) == doctest::Approx(0.3).epsilon(1e-12));

    CHECK_THROWS_AS(rmse({}, gt), UsageError);
    SmoothPath empty;
    CHECK_THROWS_AS(rmse({{0, 0}}, empty), UsageError);
}

TEST_CASE("resample_polyline spacing and endpoints") {
    // straight unit segment at 0.25 m: 0, .25, .5, .75, 1
    Trajectory out = resample_polyline({{0, 0}, {1, 0}}, 0.25);
    REQUIRE(out.size() == 5);
    for (size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i].x == doctest::Approx(0.25 * i).epsilon(1e-12));
        CHECK(out[i].y == 0.0);
    }

    // L-shaped polyline: arc positions preserved across the corner
    Trajectory l = resample_polyline({{0, 0}, {1, 0}, {1, 1}}, 0.4);
    REQUIRE(l.size() >= 3);
    CHECK(dist(l.front(), {0, 0}) == doctest::Approx(0.0));
    CHECK(dist(l.back(), {1, 1}) == doctest::Approx(0.0));
    for (size_t i = 1; i < l.size(); ++i) {
        double d = dist(l[i - 1], l[i]);
        // interior gaps are at most the spacing (corner cuts shorten chords,
        // the final gap may be shorter)
        CHECK(d <= 0.4 + 1e-9);
        if (i + 1 < l.size()) CHECK(d > 0.0);
    }
    // every resampled point stays on the polyline
    for (const auto& p : l) {
        double d = std::min(point_segment_dist(p, {0, 0}, {1, 0}),
                            point_segment_dist(p, {1, 0}, {1, 1}));
        CHECK(d == doctest::Approx(0.0).epsilon(1e-9));
    }

    CHECK(resample_polyline({}, 0.25).empty());
    Trajectory single = resample_polyline({{2, 3}}, 0.25);
    REQUIRE(single.size() == 1);
    CHECK(single[0].x == 2.0);
}

TEST_CASE("evaluate: oracle replay on generated episodes") {
    FloorplanParams fp;
    CameraModel cam;
    cam.image_width = cam.image_height = 16;

    std::vector<Episode> episodes;
    std::map<std::string, SceneMap> scenes;
    for (uint64_t seed : {3ull, 12ull}) {
        SceneMap scene = gen_floorplan(seed, fp);
        scene.scene_id = "s" + std::to_string(seed);
        auto samples = poisson_sample(scene, 1.0, 0.4, seed + 1);
        NavGraph graph = build_graph(scene, samples, 2.0);
        Episode ep = generate_episode(scene, graph, seed + 2, 5.0, cam);
        ep.scene_id = scene.scene_id;
        ep.episode_id = "e" + std::to_string(seed);
        scenes.emplace(scene.scene_id, std::move(scene));
        episodes.push_back(std::move(ep));
    }

    PolicyFactory factory = [](const SceneMap&, const Episode& ep) {
        return std::make_unique<OracleReplayPolicy>(ep);
    };
    EvalReport rep = evaluate(episodes, scenes, factory, cam);
    REQUIRE(rep.rows.size() == episodes.size());
    CHECK(rep.sr == 1.0);
    CHECK(rep.mean_ndtw >= 0.85);
    CHECK(rep.mean_sdtw == doctest::Approx(rep.mean_ndtw));
    CHECK(rep.mean_rmse <= 0.25);
    for (const auto& row : rep.rows) {
        CHECK(row.outcome == Outcome::Success);
        CHECK(row.steps > 0);
        CHECK(row.agent_traj.size() >= 2);
        // trajectory is geometric: no consecutive duplicate positions
        for (size_t i = 1; i < row.agent_traj.size(); ++i)
            CHECK(dist(row.agent_traj[i - 1], row.agent_traj[i]) > 1e-12);
    }

    // a second pass is bit-identical
    EvalReport rep2 = evaluate(episodes, scenes, factory, cam);
    CHECK(report_json(rep2) == report_json(rep));

    // missing scene is a validation error
    std::map<std::string, SceneMap> none;
    CHECK_THROWS_AS(evaluate(episodes, none, factory, cam), ValidationError);

    SUBCASE("report text shape") {
        EvalReport named = rep;
        named.policy_name = "oracle";
        std::string text = report_text(named);
        CHECK(text.find("policy: oracle") != std::string::npos);
        CHECK(text.find("NDTW") != std::string::npos);
        CHECK(text.find("SDTW") != std::string::npos);
        CHECK(text.find("RMSE") != std::string::npos);
        CHECK(text.find("aggregate") != std::string::npos);
        CHECK(text.find("privileged") == std::string::npos);
        named.oracle_assisted_stop = true;
        CHECK(report_text(named).find("privileged") != std::string::npos);
    }

    SUBCASE("report json shape") {
        EvalReport named = rep;
        named.policy_name = "oracle";
        nlohmann::json j = nlohmann::json::parse(report_json(named));
        CHECK(j.at("policy") == "oracle");
        CHECK(j.at("oracle_assisted_stop") == false);
        CHECK(j.at("aggregates").at("SR") == 1.0);
        CHECK(j.at("aggregates").contains("NDTW"));
        CHECK(j.at("aggregates").contains("SDTW"));
        CHECK(j.at("aggregates").contains("RMSE"));
        CHECK(j.at("aggregates").contains("steps"));
        REQUIRE(j.at("episodes").size() == episodes.size());
        for (const auto& row : j.at("episodes")) {
            CHECK(row.contains("episode_id"));
            CHECK(row.at("SR") == 1);
            CHECK(row.at("outcome") == "Success");
        }
    }

    SUBCASE("episode svg overlay") {
        const Episode& ep = episodes[0];
        const SceneMap& scene = scenes.at(ep.scene_id);
        std::string svg = episode_svg(scene, ep, rep.rows[0].agent_traj);
        CHECK(svg.find("<svg") == 0);
        CHECK(svg.find("</svg>") != std::string::npos);
        CHECK(svg.find("polyline") != std::string::npos);
        CHECK(svg.find("circle") != std::string::npos);
    }
}
