#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "signav/episode.hpp"
#include "signav/error.hpp"
#include "signav/navgraph.hpp"
#include "signav/path.hpp"
#include "signav/scene.hpp"
#include "signav/sim.hpp"

using namespace signav;

namespace {

SceneMap open_square(double side_m) {
    SceneMap s;
    s.scene_id = "sq";
    s.cell_size = 0.1;
    s.width = s.height = static_cast<int>(std::lround(side_m / 0.1));
    s.occupancy.assign(static_cast<size_t>(s.width) * s.height, 0);
    for (int x = 0; x < s.width; ++x) {
        s.occupancy[x] = 1;
        s.occupancy[static_cast<size_t>(s.height - 1) * s.width + x] = 1;
    }
    for (int y = 0; y < s.height; ++y) {
        s.occupancy[static_cast<size_t>(y) * s.width] = 1;
        s.occupancy[static_cast<size_t>(y) * s.width + s.width - 1] = 1;
    }
    return s;
}

}  // namespace

TEST_CASE("action constants and dynamics") {
    SceneMap s = open_square(10.0);
    Pose p{5, 5, 0};
    Pose f = apply_action(s, p, ActionId::Forward);
    CHECK(f.x == doctest::Approx(5.25));
    CHECK(f.y == doctest::Approx(5.0));
    Pose l = apply_action(s, p, ActionId::Left);
    CHECK(l.theta == doctest::Approx(kPi / 12));
    Pose r = apply_action(s, p, ActionId::Right);
    CHECK(r.theta == doctest::Approx(2 * kPi - kPi / 12));
    Pose st = apply_action(s, p, ActionId::Stop);
    CHECK(st.x == p.x);
    CHECK(st.theta == p.theta);
    // 24 left turns come back around (compare on the circle: the normalized
    // representative of ~0 may be 2*pi - ulp)
    Pose q = p;
    for (int i = 0; i < 24; ++i) q = apply_action(s, q, ActionId::Left);
    CHECK(q.theta >= 0.0);
    CHECK(q.theta < 2 * kPi);
    CHECK(std::abs(wrap_signed(q.theta)) <= 1e-9);
}

TEST_CASE("forward blocks against walls, pose collision-free always") {
    SceneMap s = open_square(4.0);
    // 0.1 m from the inner east wall face (wall at x = 3.9)
    Pose p{3.8, 2.0, 0.0};
    Pose after = apply_action(s, p, ActionId::Forward);
    CHECK(after.x == p.x);  // blocked: would penetrate
    CHECK(after.y == p.y);

    auto cf = clearance_field(s);
    std::mt19937_64 eng(5);
    Pose cur{2.0, 2.0, 0.0};
    for (int i = 0; i < 500; ++i) {
        auto a = static_cast<ActionId>(eng() % 3);  // move/turn only
        cur = apply_action(s, cur, a);
        CHECK(point_clearance(s, cf, cur.position()) >= kAgentRadius - 1e-9);
    }
}

TEST_CASE("env termination: success, stop failure, timeout") {
    SceneMap s = open_square(10.0);
    s.goals.push_back({"G", {5.0, 5.0}});
    CameraModel cam;
    cam.image_width = cam.image_height = 16;  // cheap frames for this test
    Env env(s, cam);

    env.reset("G", Pose{5.8, 5.0, 0.0});  // 0.8 m away
    env.step(ActionId::Stop);
    CHECK(env.state().outcome == Outcome::Success);
    CHECK(env.state().done);

    env.reset("G", Pose{6.2, 5.0, 0.0});  // 1.2 m away
    env.step(ActionId::Stop);
    CHECK(env.state().outcome == Outcome::StopFailure);

    env.reset("G", Pose{8.0, 5.0, 0.0}, 3);
    env.step(ActionId::Left);
    env.step(ActionId::Left);
    CHECK_FALSE(env.state().done);
    env.step(ActionId::Left);
    CHECK(env.state().outcome == Outcome::Timeout);
    CHECK(env.state().step_count == 3);

    CHECK_THROWS_AS(env.reset("missing", Pose{5, 5, 0}), ValidationError);
}

TEST_CASE("env is deterministic: identical action sequences, identical traces") {
    SceneMap s = open_square(8.0);
    s.goals.push_back({"G", {6.5, 6.5}});
    CameraModel cam;
    cam.image_width = cam.image_height = 16;
    std::mt19937_64 eng(9);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<ActionId> seq;
        for (int i = 0; i < 30; ++i) seq.push_back(static_cast<ActionId>(eng() % 3));
        Env a(s, cam), b(s, cam);
        a.reset("G", Pose{2, 2, 0});
        b.reset("G", Pose{2, 2, 0});
        for (ActionId act : seq) {
            a.step(act);
            b.step(act);
            CHECK(a.state().pose.x == b.state().pose.x);
            CHECK(a.state().pose.y == b.state().pose.y);
            CHECK(a.state().pose.theta == b.state().pose.theta);
        }
    }
}

TEST_CASE("oracle follower worked cases") {
    SceneMap s = open_square(10.0);
    Goal g{"G", {7.2, 5.0}};

    // aligned straight run: Stop fires once within 0.5 m of the goal.
    // Distances after each forward: 1.2, 0.95, 0.70, 0.45 — margins well
    // clear of the 0.5 m threshold, so FP noise can't flip the count.
    std::vector<Vec2> wps{{6.0, 5.0}, {7.2, 5.0}};
    SmoothPath path = smooth_path(s, wps);
    auto acts = oracle_actions(s, path, g);
    REQUIRE(acts.size() == 4);
    CHECK(acts[0].second == ActionId::Forward);
    CHECK(acts[1].second == ActionId::Forward);
    CHECK(acts[2].second == ActionId::Forward);
    CHECK(acts[3].second == ActionId::Stop);

    // start within 0.5 m: immediate stop
    SmoothPath stub = smooth_path(s, {{6.8, 5.0}, {7.2, 5.0}});
    auto only = oracle_actions(s, stub, g);
    REQUIRE(only.size() == 1);
    CHECK(only[0].second == ActionId::Stop);
}

TEST_CASE("oracle reaches the goal on random scenes and replays bit-exactly") {
    FloorplanParams fp;
    CameraModel cam;
    for (uint64_t seed : {3ull, 12ull, 31ull}) {
        SceneMap scene = gen_floorplan(seed, fp);
        auto samples = poisson_sample(scene, 1.0, 0.4, seed + 1);
        NavGraph graph = build_graph(scene, samples, 2.0);
        Episode ep = generate_episode(scene, graph, seed + 2, 5.0, cam);
        REQUIRE(!ep.steps.empty());
        CHECK(ep.steps.back().action == ActionId::Stop);
        CHECK(ep.gt_path.length() >= 5.0 - 1.0);  // geodesic bound minus attach slack

        // final recorded pose within success radius of the goal
        const Goal* goal = scene.find_goal(ep.goal_id);
        REQUIRE(goal);
        CHECK(dist(ep.steps.back().pose.position(), goal->position) <= kSuccessRadius);

        // bit-exact replay through fresh env
        SceneMap annotated = annotate_signs(scene, ep.gt_path, ep.goal_id);
        Env env(annotated, cam);
        env.reset(ep.goal_id, ep.start, static_cast<int>(ep.steps.size()) + 1);
        for (const EpisodeStep& st : ep.steps) {
            CHECK(env.state().pose.x == st.pose.x);
            CHECK(env.state().pose.y == st.pose.y);
            CHECK(env.state().pose.theta == st.pose.theta);
            env.step(st.action);
        }
        CHECK(env.state().outcome == Outcome::Success);

        // determinism of generation
        Episode ep2 = generate_episode(scene, graph, seed + 2, 5.0, cam);
        CHECK(episode_to_text(ep2) == episode_to_text(ep));
    }
}

TEST_CASE("annotate_signs: curvature rule and 3 m radius") {
    SceneMap s = open_square(12.0);
    // sign on the south wall near a left turn; path passes within 3 m
    Sign near_sign;
    near_sign.sign_id = "S0";
    near_sign.position = {6.0, 0.1};
    near_sign.normal = kPi / 2;
    Sign far_sign = near_sign;
    far_sign.sign_id = "S1";
    far_sign.position = {0.1, 11.0};
    far_sign.normal = 0;
    s.signs.push_back(near_sign);
    s.signs.push_back(far_sign);

    // straight pass: Straight arrow
    SmoothPath straight = smooth_path(s, {{2.0, 1.0}, {10.0, 1.0}});
    SceneMap a1 = annotate_signs(s, straight, "G");
    REQUIRE(a1.signs[0].arrows.count("G") == 1);
    CHECK(a1.signs[0].arrows.at("G") == ArrowDir::Straight);
    CHECK(a1.signs[1].arrows.count("G") == 0);  // ~10 m away: untouched
    // base scene untouched
    CHECK(s.signs[0].arrows.empty());
    // idempotent
    SceneMap a1b = annotate_signs(a1, straight, "G");
    CHECK(a1b.signs[0].arrows.at("G") == ArrowDir::Straight);

    // 90-degree left turn right after the sign
    SmoothPath left = smooth_path(s, {{2.0, 1.0}, {6.5, 1.0}, {6.5, 6.0}});
    SceneMap a2 = annotate_signs(s, left, "G");
    REQUIRE(a2.signs[0].arrows.count("G") == 1);
    CHECK(a2.signs[0].arrows.at("G") == ArrowDir::Left);

    // 90-degree right turn: mirror the path (approach from the east heading west)
    SmoothPath right = smooth_path(s, {{10.0, 1.0}, {6.5, 1.0}, {6.5, 6.0}});
    SceneMap a3 = annotate_signs(s, right, "G");
    REQUIRE(a3.signs[0].arrows.count("G") == 1);
    CHECK(a3.signs[0].arrows.at("G") == ArrowDir::Right);
}

TEST_CASE("episode text round trip") {
    FloorplanParams fp;
    SceneMap scene = gen_floorplan(4, fp);
    auto samples = poisson_sample(scene, 1.0, 0.4, 5);
    NavGraph graph = build_graph(scene, samples, 2.0);
    CameraModel cam;
    Episode ep = generate_episode(scene, graph, 6, 5.0, cam);
    std::string text = episode_to_text(ep);
    Episode back = episode_from_text(text);
    CHECK(back.episode_id == ep.episode_id);
    CHECK(back.goal_id == ep.goal_id);
    CHECK(back.start.x == ep.start.x);
    CHECK(back.steps.size() == ep.steps.size());
    for (size_t i = 0; i < ep.steps.size(); ++i) {
        CHECK(back.steps[i].pose.x == ep.steps[i].pose.x);
        CHECK(back.steps[i].pose.theta == ep.steps[i].pose.theta);
        CHECK(back.steps[i].action == ep.steps[i].action);
        CHECK(back.steps[i].hint_dir == ep.steps[i].hint_dir);
    }
    CHECK(episode_to_text(back) == text);
}
