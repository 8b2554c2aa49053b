#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "signav/episode.hpp"
#include "signav/render.hpp"
#include "signav/scene.hpp"
#include "signav/sim.hpp"

namespace signav {

using Trajectory = std::vector<Vec2>;

double dtw(const Trajectory& r, const Trajectory& q);
double ndtw(const Trajectory& r, const Trajectory& q, double d_th = 1.0);
double sdtw(int success, double ndtw_value);
double rmse(const Trajectory& agent, const SmoothPath& gt_path);

Trajectory resample_polyline(const std::vector<Vec2>& pts, double spacing);

struct EpisodeEval {
    std::string episode_id;
    int success = 0;
    double ndtw = 0, sdtw = 0, rmse = 0;
    int steps = 0;
    Outcome outcome = Outcome::Running;
    Trajectory agent_traj;
};

struct EvalReport {
    std::vector<EpisodeEval> rows;
    double sr = 0, mean_ndtw = 0, mean_sdtw = 0, mean_rmse = 0, mean_steps = 0;
    bool oracle_assisted_stop = false;  // rule baseline's privileged stop distance
    std::string policy_name;
};

using PolicyFactory =
    std::function<std::unique_ptr<Policy>(const SceneMap& annotated, const Episode& ep)>;

// Replays the episode's recorded actions (the oracle transcription).
class OracleReplayPolicy : public Policy {
  public:
    explicit OracleReplayPolicy(const Episode& ep) : episode_(&ep) {}
    void on_reset() override { next_ = 0; }
    ActionId act(const Frame&, const EnvState&) override {
        if (next_ >= episode_->steps.size()) return ActionId::Stop;
        return episode_->steps[next_++].action;
    }

  private:
    const Episode* episode_;
    size_t next_ = 0;
};

EvalReport evaluate(const std::vector<Episode>& episodes,
                    const std::map<std::string, SceneMap>& scenes, const PolicyFactory& factory,
                    const CameraModel& cam = {}, int max_steps = kDefaultMaxSteps);

std::string report_text(const EvalReport& report);
std::string report_json(const EvalReport& report);

// Trajectory overlay (gt path, agent path, signs, goal, wall outline).
std::string episode_svg(const SceneMap& scene, const Episode& ep, const Trajectory& agent);

}  // namespace signav
