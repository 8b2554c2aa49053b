#include "signav/episode.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "signav/error.hpp"
#include "signav/rng.hpp"
#include "signav/util.hpp"

namespace signav {

namespace {

constexpr double kStopRadius = 0.5;
constexpr double kStopHeadingTol = kPi / 4;   // 45 degrees
constexpr double kDeadband = kPi / 24;        // 7.5 degrees, half the turn quantum
constexpr double kLookahead = 0.5;
constexpr double kAnnotateRange = 3.0;
constexpr double kCurvatureWindow = 2.0;
constexpr double kStraightBand = kPi / 9;     // 20 degrees

std::vector<double> cum_arc(const std::vector<Vec2>& pts) {
    std::vector<double> cum(pts.size(), 0.0);
    for (size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + dist(pts[i - 1], pts[i]);
    return cum;
}

ActionId follower_decide(const std::vector<Vec2>& pts, const std::vector<double>& cum,
                         const Goal& goal, const Pose& pose, size_t& cursor) {
    Vec2 p = pose.position();
    if (dist(p, goal.position) <= kStopRadius) {
        Vec2 b = goal.position - p;
        double err = b.norm() < 1e-12 ? 0.0 : wrap_signed(std::atan2(b.y, b.x) - pose.theta);
        if (std::abs(err) <= kStopHeadingTol) return ActionId::Stop;
    }
    double best = std::numeric_limits<double>::infinity();
    size_t best_i = cursor;
    for (size_t i = cursor; i < pts.size(); ++i) {
        double d = dist(p, pts[i]);
        if (d < best) {
            best = d;
            best_i = i;
        }
    }
    cursor = best_i;
    size_t j = cursor;
    while (j + 1 < pts.size() && cum[j + 1] - cum[cursor] <= kLookahead) ++j;
    Vec2 to = pts[j] - p;
    double e = to.norm() < 1e-12 ? 0.0 : wrap_signed(std::atan2(to.y, to.x) - pose.theta);
    if (e > kDeadband) return ActionId::Left;
    if (e < -kDeadband) return ActionId::Right;
    return ActionId::Forward;
}

}  // namespace

ActionId oracle_step_action(const SmoothPath& path, const Goal& goal, const Pose& pose,
                            size_t& path_cursor) {
    auto cum = cum_arc(path.points);
    return follower_decide(path.points, cum, goal, pose, path_cursor);
}

SceneMap annotate_signs(const SceneMap& scene, const SmoothPath& path,
                        const std::string& goal_id) {
    // Pure geometric transform: arrows are written for whatever id the caller
    // names. Goal existence is enforced where scenes are validated or used.
    SceneMap out = scene;
    auto cum = cum_arc(path.points);
    for (auto& sign : out.signs) {
        double dmin = std::numeric_limits<double>::infinity();
        size_t near_i = 0;
        for (size_t i = 0; i < path.points.size(); ++i) {
            double d = dist(sign.position, path.points[i]);
            if (d < dmin) {
                dmin = d;
                near_i = i;
            }
        }
        if (dmin > kAnnotateRange) continue;
        size_t j = near_i;
        while (j + 1 < path.points.size() && cum[j] - cum[near_i] < kCurvatureWindow) ++j;
        Vec2 fwd = path.points[j] - path.points[near_i];
        double delta = 0.0;
        if (fwd.norm() >= 1e-12) {
            Vec2 tan = path.tangents[near_i];
            delta = wrap_signed(std::atan2(fwd.y, fwd.x) - std::atan2(tan.y, tan.x));
        }
        ArrowDir dir = ArrowDir::Straight;
        if (delta > kStraightBand)
            dir = ArrowDir::Left;
        else if (delta < -kStraightBand)
            dir = ArrowDir::Right;
        sign.arrows[goal_id] = dir;
    }
    return out;
}

std::vector<std::pair<Pose, ActionId>> oracle_actions(const SceneMap& scene,
                                                      const SmoothPath& path, const Goal& goal) {
    if (path.points.size() < 2) throw UsageError("oracle_actions: degenerate path");
    auto cum = cum_arc(path.points);
    Pose pose{path.points[0].x, path.points[0].y,
              wrap_angle(std::atan2(path.tangents[0].y, path.tangents[0].x))};
    size_t cursor = 0;
    const long bound = std::lround(10.0 * (cum.back() / kForwardStep)) + 20;
    std::vector<std::pair<Pose, ActionId>> out;
    for (long step = 0; step < bound; ++step) {
        ActionId a = follower_decide(path.points, cum, goal, pose, cursor);
        out.emplace_back(pose, a);
        if (a == ActionId::Stop) return out;
        pose = apply_action(scene, pose, a);
    }
    throw ValidationError("oracle_actions: follower exceeded step bound");
}

Episode generate_episode(const SceneMap& scene, const NavGraph& graph, uint64_t seed,
                         double min_geodesic, const CameraModel& cam) {
    if (graph.vertices.empty()) throw UsageError("generate_episode: empty graph");
    if (scene.goals.empty()) throw ValidationError("generate_episode: scene has no goals");
    Rng rng(seed);
    const int nv = static_cast<int>(graph.vertices.size());

    for (int attempt = 0; attempt < 100; ++attempt) {
        int sv = static_cast<int>(rng.below(static_cast<uint64_t>(nv)));
        const Goal& goal = scene.goals[rng.below(scene.goals.size())];

        // Attach the goal to its nearest visible vertex.
        int gv = -1;
        double gv_d = std::numeric_limits<double>::infinity();
        for (int i = 0; i < nv; ++i) {
            double d = dist(graph.vertices[i], goal.position);
            if (d < gv_d && line_of_sight(scene, graph.vertices[i], goal.position, kAgentRadius)) {
                gv_d = d;
                gv = i;
            }
        }
        if (gv < 0) continue;

        auto dists = dijkstra_dists(graph, sv);
        if (!std::isfinite(dists[gv])) continue;
        double geodesic = dists[gv] + gv_d;
        if (geodesic < min_geodesic) continue;

        auto vio = shortest_path(graph, sv, gv);
        std::vector<Vec2> waypoints;
        for (int v : vio) waypoints.push_back(graph.vertices[v]);
        if (gv_d > 1e-9) waypoints.push_back(goal.position);
        if (waypoints.size() < 2) continue;

        SmoothPath path = smooth_path(scene, waypoints);
        SceneMap annotated = annotate_signs(scene, path, goal.goal_id);

        std::vector<std::pair<Pose, ActionId>> actions;
        try {
            actions = oracle_actions(annotated, path, goal);
        } catch (const ValidationError&) {
            continue;  // pathological geometry; rejection-sample another pair
        }

        Episode ep;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "ep-%016llx", static_cast<unsigned long long>(seed));
        ep.episode_id = buf;
        ep.scene_id = scene.scene_id;
        ep.goal_id = goal.goal_id;
        ep.start = actions.front().first;
        ep.gt_path = std::move(path);

        Env env(annotated, cam);
        int max_steps = std::max(kDefaultMaxSteps, static_cast<int>(actions.size()) + 1);
        StepResult res = env.reset(goal.goal_id, ep.start, max_steps);
        for (const auto& [pose, action] : actions) {
            EpisodeStep step;
            step.pose = env.state().pose;
            if (step.pose.x != pose.x || step.pose.y != pose.y || step.pose.theta != pose.theta)
                throw InternalError("generate_episode: transcription/replay divergence");
            step.action = action;
            if (res.frame.hint) {
                step.hint_dir = res.frame.hint->dir;
                step.bbox = res.frame.hint->bbox;
            }
            ep.steps.push_back(std::move(step));
            res = env.step(action);
        }
        if (env.state().outcome != Outcome::Success)
            throw InternalError("generate_episode: oracle episode did not succeed");
        return ep;
    }
    throw ValidationError("generate_episode: no valid start/goal pair after 100 attempts");
}

std::vector<Vec2> tangents_from_points(const std::vector<Vec2>& pts) {
    std::vector<Vec2> tangents(pts.size(), Vec2{1, 0});
    for (size_t i = 0; i < pts.size(); ++i) {
        Vec2 d;
        if (i == 0)
            d = pts.size() > 1 ? pts[1] - pts[0] : Vec2{1, 0};
        else if (i + 1 == pts.size())
            d = pts[i] - pts[i - 1];
        else
            d = pts[i + 1] - pts[i - 1];
        double n = d.norm();
        if (n > 0) tangents[i] = d * (1.0 / n);
    }
    return tangents;
}

std::string episode_to_text(const Episode& ep) {
    std::ostringstream out;
    nlohmann::ordered_json header;
    header["episode_id"] = ep.episode_id;
    header["scene_id"] = ep.scene_id;
    header["goal_id"] = ep.goal_id;
    header["start"] = {ep.start.x, ep.start.y, ep.start.theta};
    auto pts = nlohmann::ordered_json::array();
    for (const auto& p : ep.gt_path.points) pts.push_back({p.x, p.y});
    header["gt_path"] = pts;
    out << header.dump() << "\n";
    for (size_t t = 0; t < ep.steps.size(); ++t) {
        const auto& s = ep.steps[t];
        nlohmann::ordered_json js;
        js["t"] = t;
        js["pose"] = {s.pose.x, s.pose.y, s.pose.theta};
        js["action"] = to_string(s.action);
        js["hint"] = s.hint_dir ? nlohmann::ordered_json(to_string(*s.hint_dir))
                                : nlohmann::ordered_json(nullptr);
        js["bbox"] = s.bbox ? nlohmann::ordered_json({s.bbox->x_min, s.bbox->y_min, s.bbox->x_max,
                                                      s.bbox->y_max})
                            : nlohmann::ordered_json(nullptr);
        out << js.dump() << "\n";
    }
    return out.str();
}

Episode episode_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("episode file: empty");
    Episode ep;
    try {
        auto header = nlohmann::json::parse(line);
        ep.episode_id = header.at("episode_id").get<std::string>();
        ep.scene_id = header.at("scene_id").get<std::string>();
        ep.goal_id = header.at("goal_id").get<std::string>();
        ep.start = {header.at("start").at(0).get<double>(), header.at("start").at(1).get<double>(),
                    header.at("start").at(2).get<double>()};
        for (const auto& p : header.at("gt_path"))
            ep.gt_path.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        ep.gt_path.tangents = tangents_from_points(ep.gt_path.points);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto js = nlohmann::json::parse(line);
            EpisodeStep s;
            s.pose = {js.at("pose").at(0).get<double>(), js.at("pose").at(1).get<double>(),
                      js.at("pose").at(2).get<double>()};
            auto a = action_from_string(js.at("action").get<std::string>());
            if (!a) throw ValidationError("episode file: invalid action");
            s.action = *a;
            if (!js.at("hint").is_null()) {
                auto d = arrow_from_string(js.at("hint").get<std::string>());
                if (!d) throw ValidationError("episode file: invalid hint direction");
                s.hint_dir = *d;
            }
            if (!js.at("bbox").is_null())
                s.bbox = BBox{js.at("bbox").at(0).get<int>(), js.at("bbox").at(1).get<int>(),
                              js.at("bbox").at(2).get<int>(), js.at("bbox").at(3).get<int>()};
            ep.steps.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("episode file: malformed record: ") + e.what());
    }
    if (ep.steps.empty() || ep.steps.back().action != ActionId::Stop)
        throw ValidationError("episode file: last action must be Stop");
    return ep;
}

void save_episode(const Episode& ep, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write episode file: " + path);
    out << episode_to_text(ep);
}

Episode load_episode(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read episode file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return episode_from_text(ss.str());
}

}  // namespace signav
