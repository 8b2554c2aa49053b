#pragma once

#include <optional>
#include <string>

#include "signav/geometry.hpp"
#include "signav/render.hpp"
#include "signav/scene.hpp"

namespace signav {

enum class ActionId : int { Forward = 0, Left = 1, Right = 2, Stop = 3 };
constexpr int kActionCount = 4;
constexpr double kForwardStep = 0.25;
constexpr double kTurnStep = kPi / 12;  // 15 degrees
constexpr double kSuccessRadius = 1.0;
constexpr int kDefaultMaxSteps = 500;

const char* to_string(ActionId a);
std::optional<ActionId> action_from_string(const std::string& s);

enum class Outcome { Running, Success, StopFailure, Timeout };
const char* to_string(Outcome o);

struct EnvState {
    std::string goal_id;
    Pose pose;
    int step_count = 0;
    int max_steps = kDefaultMaxSteps;
    bool done = false;
    Outcome outcome = Outcome::Running;
};

struct StepResult {
    Frame frame;
    EnvState state;
};

// Pure dynamics shared by the env and episode transcription. Forward blocks
// (no sliding) when the swept agent disk would intersect occupancy.
Pose apply_action(const SceneMap& scene, const Pose& pose, ActionId a);

class Env {
  public:
    explicit Env(const SceneMap& scene, CameraModel cam = {}, double max_hint_distance = 5.0,
                 double max_face_angle = kPi / 3)
        : scene_(&scene), cam_(cam), max_hint_distance_(max_hint_distance),
          max_face_angle_(max_face_angle) {}

    StepResult reset(const std::string& goal_id, const Pose& start,
                     int max_steps = kDefaultMaxSteps);
    StepResult step(ActionId a);
    const EnvState& state() const { return state_; }
    const SceneMap& scene() const { return *scene_; }
    const CameraModel& camera() const { return cam_; }

  private:
    Frame observe() const;

    const SceneMap* scene_;
    CameraModel cam_;
    double max_hint_distance_, max_face_angle_;
    EnvState state_;
    Vec2 goal_pos_{};
};

class Policy {
  public:
    virtual ~Policy() = default;
    virtual void on_reset() {}
    virtual ActionId act(const Frame& frame, const EnvState& state) = 0;
};

// Reactive baseline. Stop uses privileged goal distance (reported as
// oracle-assisted); steering follows visible hints, else open depth.
class RulePolicy : public Policy {
  public:
    RulePolicy(const SceneMap& scene, const std::string& goal_id);
    void on_reset() override;
    ActionId act(const Frame& frame, const EnvState& state) override;

  private:
    Vec2 goal_pos_;
    std::optional<ArrowDir> last_dir_;
    int steps_since_seen_ = 0;
};

}  // namespace signav
