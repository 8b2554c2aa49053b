#include "signav/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "signav/error.hpp"

namespace signav {

double dtw(const Trajectory& r, const Trajectory& q) {
    if (r.empty() || q.empty()) throw UsageError("dtw: empty trajectory");
    const size_t n = r.size(), m = q.size();
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> prev(m, kInf), cur(m, kInf);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < m; ++j) {
            double c = dist(r[i], q[j]);
            double best;
            if (i == 0 && j == 0)
                best = 0;
            else if (i == 0)
                best = cur[j - 1];
            else if (j == 0)
                best = prev[j];
            else
                best = std::min({prev[j - 1], prev[j], cur[j - 1]});
            cur[j] = c + best;
        }
        std::swap(prev, cur);
    }
    return prev[m - 1];
}

double ndtw(const Trajectory& r, const Trajectory& q, double d_th) {
    if (d_th <= 0) throw UsageError("ndtw: d_th must be positive");
    return std::exp(-dtw(r, q) / (static_cast<double>(r.size()) * d_th));
}

double sdtw(int success, double ndtw_value) {
    if (ndtw_value < 0 || ndtw_value > 1) throw UsageError("sdtw: ndtw out of [0,1]");
    return success ? ndtw_value : 0.0;
}

double rmse(const Trajectory& agent, const SmoothPath& gt_path) {
    if (agent.empty() || gt_path.points.empty()) throw UsageError("rmse: empty input");
    double acc = 0;
    for (const auto& p : agent) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& g : gt_path.points) best = std::min(best, dist(p, g));
        acc += best * best;
    }
    return std::sqrt(acc / agent.size());
}

Trajectory resample_polyline(const std::vector<Vec2>& pts, double spacing) {
    if (pts.empty()) return {};
    if (pts.size() == 1) return {pts[0]};
    std::vector<double> cum(pts.size(), 0.0);
    for (size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + dist(pts[i - 1], pts[i]);
    Trajectory out{pts.front()};
    size_t seg = 0;
    for (double s = spacing; s < cum.back(); s += spacing) {
        while (seg + 1 < pts.size() && cum[seg + 1] < s) ++seg;
        double d = cum[seg + 1] - cum[seg];
        double w = d > 0 ? (s - cum[seg]) / d : 0.0;
        out.push_back(pts[seg] * (1 - w) + pts[seg + 1] * w);
    }
    out.push_back(pts.back());
    return out;
}

EvalReport evaluate(const std::vector<Episode>& episodes,
                    const std::map<std::string, SceneMap>& scenes, const PolicyFactory& factory,
                    const CameraModel& cam, int max_steps) {
    EvalReport report;
    for (const auto& ep : episodes) {
        auto it = scenes.find(ep.scene_id);
        if (it == scenes.end())
            throw ValidationError("evaluate: missing scene '" + ep.scene_id + "' for episode " +
                                  ep.episode_id);
        SceneMap annotated = annotate_signs(it->second, ep.gt_path, ep.goal_id);
        Env env(annotated, cam);
        auto policy = factory(annotated, ep);
        policy->on_reset();
        StepResult res = env.reset(ep.goal_id, ep.start, max_steps);
        Trajectory traj{ep.start.position()};
        while (!env.state().done) {
            ActionId a = policy->act(res.frame, env.state());
            res = env.step(a);
            // turn-in-place repeats a position; the trajectory is geometric
            Vec2 p = env.state().pose.position();
            if (dist(p, traj.back()) > 1e-12) traj.push_back(p);
        }
        EpisodeEval row;
        row.episode_id = ep.episode_id;
        row.outcome = env.state().outcome;
        row.success = env.state().outcome == Outcome::Success ? 1 : 0;
        Trajectory ref = resample_polyline(ep.gt_path.points, kForwardStep);
        row.ndtw = ndtw(ref, traj);
        row.sdtw = sdtw(row.success, row.ndtw);
        row.rmse = rmse(traj, ep.gt_path);
        row.steps = env.state().step_count;
        row.agent_traj = std::move(traj);
        report.rows.push_back(std::move(row));
    }
    if (!report.rows.empty()) {
        double n = static_cast<double>(report.rows.size());
        for (const auto& r : report.rows) {
            report.sr += r.success;
            report.mean_ndtw += r.ndtw;
            report.mean_sdtw += r.sdtw;
            report.mean_rmse += r.rmse;
            report.mean_steps += r.steps;
        }
        report.sr /= n;
        report.mean_ndtw /= n;
        report.mean_sdtw /= n;
        report.mean_rmse /= n;
        report.mean_steps /= n;
    }
    return report;
}

std::string report_text(const EvalReport& report) {
    std::ostringstream out;
    char line[256];
    out << "policy: " << (report.policy_name.empty() ? "(unnamed)" : report.policy_name) << "\n";
    if (report.oracle_assisted_stop)
        out << "note: stop decision uses privileged goal distance (oracle-assisted)\n";
    std::snprintf(line, sizeof(line), "%-24s %6s %8s %8s %8s %8s\n", "episode", "SR", "NDTW",
                  "SDTW", "RMSE", "steps");
    out << line;
    for (const auto& r : report.rows) {
        std::snprintf(line, sizeof(line), "%-24s %6d %8.4f %8.4f %8.4f %8d\n",
                      r.episode_id.c_str(), r.success, r.ndtw, r.sdtw, r.rmse, r.steps);
        out << line;
    }
    std::snprintf(line, sizeof(line), "%-24s %6.2f %8.4f %8.4f %8.4f %8.1f\n", "aggregate",
                  report.sr, report.mean_ndtw, report.mean_sdtw, report.mean_rmse,
                  report.mean_steps);
    out << line;
    return out.str();
}

std::string report_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["policy"] = report.policy_name;
    j["oracle_assisted_stop"] = report.oracle_assisted_stop;
    j["aggregates"] = {{"SR", report.sr},
                       {"NDTW", report.mean_ndtw},
                       {"SDTW", report.mean_sdtw},
                       {"RMSE", report.mean_rmse},
                       {"steps", report.mean_steps}};
    j["episodes"] = nlohmann::ordered_json::array();
    for (const auto& r : report.rows)
        j["episodes"].push_back({{"episode_id", r.episode_id},
                                 {"SR", r.success},
                                 {"NDTW", r.ndtw},
                                 {"SDTW", r.sdtw},
                                 {"RMSE", r.rmse},
                                 {"steps", r.steps},
                                 {"outcome", to_string(r.outcome)}});
    return j.dump(1);
}

std::string episode_svg(const SceneMap& scene, const Episode& ep, const Trajectory& agent) {
    const double cs = scene.cell_size;
    const double w = scene.extent_x(), h = scene.extent_y();
    const double scale = 40.0;  // px per meter
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w * scale << "\" height=\""
        << h * scale << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h
        << "\" fill=\"#f8f8f8\"/>\n";
    // Wall cells adjacent to free space (full fill would bloat the file).
    out << "<g fill=\"#444444\">\n";
    for (int y = 0; y < scene.height; ++y)
        for (int x = 0; x < scene.width; ++x) {
            if (!scene.occupied(x, y)) continue;
            bool edge = false;
            for (int dy = -1; dy <= 1 && !edge; ++dy)
                for (int dx = -1; dx <= 1 && !edge; ++dx)
                    if (!scene.occupied(x + dx, y + dy) && (x + dx) >= 0 && (y + dy) >= 0 &&
                        (x + dx) < scene.width && (y + dy) < scene.height)
                        edge = true;
            if (edge)
                out << "<rect x=\"" << x * cs << "\" y=\"" << (h - (y + 1) * cs) << "\" width=\""
                    << cs << "\" height=\"" << cs << "\"/>\n";
        }
    out << "</g>\n";
    auto polyline = [&](const std::vector<Vec2>& pts, const char* color, double width) {
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width
            << "\" points=\"";
        for (const auto& p : pts) out << p.x << "," << (h - p.y) << " ";
        out << "\"/>\n";
    };
    polyline(ep.gt_path.points, "#2060c0", 0.06);
    polyline(agent, "#d03030", 0.04);
    for (const auto& s : scene.signs)
        out << "<rect x=\"" << s.position.x - 0.12 << "\" y=\"" << (h - s.position.y - 0.12)
            << "\" width=\"0.24\" height=\"0.24\" fill=\"#10a010\"/>\n";
    if (const Goal* g = scene.find_goal(ep.goal_id))
        out << "<circle cx=\"" << g->position.x << "\" cy=\"" << (h - g->position.y)
            << "\" r=\"0.25\" fill=\"none\" stroke=\"#c0a000\" stroke-width=\"0.08\"/>\n";
    out << "<circle cx=\"" << ep.start.x << "\" cy=\"" << (h - ep.start.y)
        << "\" r=\"0.15\" fill=\"#2060c0\"/>\n";
    out << "</svg>\n";
    return out.str();
}

}  // namespace signav
