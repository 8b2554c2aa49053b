#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "signav/navgraph.hpp"
#include "signav/path.hpp"
#include "signav/render.hpp"
#include "signav/scene.hpp"
#include "signav/sim.hpp"

namespace signav {

struct EpisodeStep {
    Pose pose;  // pre-action pose
    ActionId action;
    std::optional<ArrowDir> hint_dir;
    std::optional<BBox> bbox;
};

struct Episode {
    std::string episode_id;
    std::string scene_id;
    std::string goal_id;
    Pose start;
    SmoothPath gt_path;
    std::vector<EpisodeStep> steps;
};

// Pure per-episode annotation: signs within 3 m of the path gain
// goal_id -> arrow entries derived from the path's local curvature.
// Returns a copy; the base scene is untouched. Idempotent.
SceneMap annotate_signs(const SceneMap& scene, const SmoothPath& path, const std::string& goal_id);

// Greedy lookahead follower transcription. Start pose = first path point
// facing the first tangent. Throws if the step bound 10*length/0.25 trips.
std::vector<std::pair<Pose, ActionId>> oracle_actions(const SceneMap& scene,
                                                      const SmoothPath& path, const Goal& goal);

// One expert action from an arbitrary pose (DAgger relabeling): greedy
// follower decision against the given path/goal without advancing state.
ActionId oracle_step_action(const SmoothPath& path, const Goal& goal, const Pose& pose,
                            size_t& path_cursor);

Episode generate_episode(const SceneMap& scene, const NavGraph& graph, uint64_t seed,
                         double min_geodesic = 5.0, const CameraModel& cam = {});

std::string episode_to_text(const Episode& ep);
Episode episode_from_text(const std::string& text);
void save_episode(const Episode& ep, const std::string& path);
Episode load_episode(const std::string& path);

// Tangents for a reloaded point list (same finite differences as smooth_path).
std::vector<Vec2> tangents_from_points(const std::vector<Vec2>& points);

}  // namespace signav
