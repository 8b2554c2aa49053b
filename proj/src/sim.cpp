#include "signav/sim.hpp"

#include <cmath>

#include "signav/error.hpp"

namespace signav {

const char* to_string(ActionId a) {
    switch (a) {
        case ActionId::Forward: return "Forward";
        case ActionId::Left: return "Left";
        case ActionId::Right: return "Right";
        case ActionId::Stop: return "Stop";
    }
    return "?";
}

std::optional<ActionId> action_from_string(const std::string& s) {
    if (s == "Forward") return ActionId::Forward;
    if (s == "Left") return ActionId::Left;
    if (s == "Right") return ActionId::Right;
    if (s == "Stop") return ActionId::Stop;
    return std::nullopt;
}

const char* to_string(Outcome o) {
    switch (o) {
        case Outcome::Running: return "Running";
        case Outcome::Success: return "Success";
        case Outcome::StopFailure: return "StopFailure";
        case Outcome::Timeout: return "Timeout";
    }
    return "?";
}

Pose apply_action(const SceneMap& scene, const Pose& pose, ActionId a) {
    Pose out = pose;
    switch (a) {
        case ActionId::Forward: {
            Vec2 from = pose.position();
            Vec2 to = from + pose.heading() * kForwardStep;
            if (line_of_sight(scene, from, to, kAgentRadius)) {
                out.x = to.x;
                out.y = to.y;
            }
            break;
        }
        case ActionId::Left:
            out.theta = wrap_angle(pose.theta + kTurnStep);
            break;
        case ActionId::Right:
            out.theta = wrap_angle(pose.theta - kTurnStep);
            break;
        case ActionId::Stop:
            break;
    }
    return out;
}

Frame Env::observe() const {
    HintQuery q{state_.goal_id, max_hint_distance_, max_face_angle_};
    return render_with_hint(*scene_, state_.pose, cam_, q);
}

StepResult Env::reset(const std::string& goal_id, const Pose& start, int max_steps) {
    const Goal* goal = scene_->find_goal(goal_id);
    if (!goal) throw ValidationError("env reset: unknown goal_id '" + goal_id + "'");
    Vec2 p = start.position();
    if (!line_of_sight(*scene_, p, p, kAgentRadius))
        throw ValidationError("env reset: start pose in collision");
    state_ = EnvState{};
    state_.goal_id = goal_id;
    state_.pose = start;
    state_.pose.theta = wrap_angle(start.theta);
    state_.max_steps = max_steps;
    goal_pos_ = goal->position;
    return {observe(), state_};
}

StepResult Env::step(ActionId a) {
    if (state_.done) throw UsageError("env step: episode already done");
    state_.pose = apply_action(*scene_, state_.pose, a);
    ++state_.step_count;
    if (a == ActionId::Stop) {
        state_.done = true;
        state_.outcome = dist(state_.pose.position(), goal_pos_) <= kSuccessRadius
                             ? Outcome::Success
                             : Outcome::StopFailure;
    } else if (state_.step_count >= state_.max_steps) {
        state_.done = true;
        state_.outcome = Outcome::Timeout;
    }
    return {observe(), state_};
}

RulePolicy::RulePolicy(const SceneMap& scene, const std::string& goal_id) {
    const Goal* g = scene.find_goal(goal_id);
    if (!g) throw ValidationError("rule policy: unknown goal_id '" + goal_id + "'");
    goal_pos_ = g->position;
}

void RulePolicy::on_reset() {
    last_dir_.reset();
    steps_since_seen_ = 0;
}

ActionId RulePolicy::act(const Frame& frame, const EnvState& state) {
    // Privileged stop distance (flagged oracle-assisted in reports).
    if (dist(state.pose.position(), goal_pos_) <= kSuccessRadius) return ActionId::Stop;

    if (frame.hint) {
        last_dir_ = frame.hint->dir;
        steps_since_seen_ = 0;
        ArrowDir dir = frame.hint->dir;
        if (dir == ArrowDir::Straight) return ActionId::Forward;
        double center_col = (frame.hint->bbox.x_min + frame.hint->bbox.x_max) / 2.0;
        bool inner_third =
            center_col >= frame.width / 3.0 && center_col < frame.width * 2.0 / 3.0;
        if (inner_third) return dir == ArrowDir::Left ? ActionId::Left : ActionId::Right;
        return ActionId::Forward;
    }

    ++steps_since_seen_;
    int cc = frame.width / 2;
    if (frame.at_depth(frame.height / 2, cc) > 1.0) return ActionId::Forward;
    double left_sum = 0, right_sum = 0;
    int half = frame.width / 2;
    for (int c = 0; c < half; ++c) left_sum += frame.at_depth(frame.height / 2, c);
    for (int c = half; c < frame.width; ++c) right_sum += frame.at_depth(frame.height / 2, c);
    return left_sum >= right_sum ? ActionId::Left : ActionId::Right;
}

}  // namespace signav
