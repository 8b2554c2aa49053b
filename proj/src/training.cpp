#include "signav/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>

#include "signav/error.hpp"
#include "signav/util.hpp"

namespace signav {

void TrainConfig::validate() const {
    if (lr <= 0) throw ValidationError("train config lr: must be positive");
    if (batch_size < 1) throw ValidationError("train config batch_size: must be positive");
    if (epochs < 1) throw ValidationError("train config epochs: must be positive");
    if (dagger_iters < 0) throw ValidationError("train config dagger_iters: must be nonnegative");
    if (dagger_epochs < 1) throw ValidationError("train config dagger_epochs: must be positive");
    if (dagger_beta0 <= 0 || dagger_beta0 > 1)
        throw ValidationError("train config dagger_beta0: must be in (0,1]");
}

std::vector<double> inflection_weights(const std::vector<ActionId>& actions, double rho) {
    if (actions.empty()) throw ValidationError("inflection_weights: empty sequence");
    if (rho <= 0 || rho > 1) throw ValidationError("inflection_weights: rho must be in (0,1]");
    std::vector<double> w(actions.size());
    double sum = 0;
    for (size_t t = 0; t < actions.size(); ++t) {
        bool inflection = t == 0 || actions[t] != actions[t - 1];
        w[t] = inflection ? 1.0 / rho : 1.0;
        sum += w[t];
    }
    double scale = static_cast<double>(actions.size()) / sum;
    for (double& x : w) x *= scale;
    return w;
}

double dataset_inflection_ratio(const std::vector<const Episode*>& episodes) {
    long long inflections = 0, steps = 0;
    for (const Episode* ep : episodes) {
        for (size_t t = 0; t < ep->steps.size(); ++t) {
            ++steps;
            if (t == 0 || ep->steps[t].action != ep->steps[t - 1].action) ++inflections;
        }
    }
    if (steps == 0) throw ValidationError("dataset_inflection_ratio: no steps");
    return static_cast<double>(inflections) / static_cast<double>(steps);
}

Var sequence_nll(Tape& t, const std::vector<Var>& p_seq, const std::vector<ActionId>& targets,
                 const std::vector<double>& w) {
    if (p_seq.empty() || p_seq.size() != targets.size() || p_seq.size() != w.size())
        throw ValidationError("sequence_nll: length mismatch");
    std::optional<Var> acc;
    for (size_t i = 0; i < p_seq.size(); ++i) {
        Var lp = t.log_floored(t.pick(p_seq[i], static_cast<int>(targets[i])));
        Var term = t.scale(lp, -w[i]);
        acc = acc ? t.add(*acc, term) : term;
    }
    return *acc;
}

Var batch_loss(Tape& t, const std::vector<Var>& sequence_nlls) {
    if (sequence_nlls.empty()) throw ValidationError("batch_loss: empty batch");
    std::optional<Var> acc;
    for (Var v : sequence_nlls) acc = acc ? t.add(*acc, v) : v;
    return t.scale(*acc, 1.0 / static_cast<double>(sequence_nlls.size()));
}

void Adam::step(const std::vector<Param*>& params) {
    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (Param* p : params) {
        p->ensure_grad();
        if (p->adam_m.data.size() != p->value.data.size()) {
            p->adam_m = Tensor::zeros(p->value.shape);
            p->adam_v = Tensor::zeros(p->value.shape);
        }
        for (size_t i = 0; i < p->value.data.size(); ++i) {
            double g = p->grad.data[i];
            double& m = p->adam_m.data[i];
            double& v = p->adam_v.data[i];
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g * g;
            p->value.data[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
        }
        p->zero_grad();
    }
}

std::string train_stats_line(const TrainStats& s) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "{\"stage\":\"%s\",\"epoch\":%d,\"loss\":%.9g,\"accuracy\":%.6g,"
                  "\"dataset_size\":%d,\"wall_s\":%.3f}",
                  s.stage.c_str(), s.epoch, s.loss, s.accuracy, s.dataset_size, s.wall_s);
    return buf;
}

Var unroll_episode(Tape& t, StartModel& model, const StartModel::Vars& vars,
                   const TrainItem& item, const CameraModel& cam, const std::vector<double>& w,
                   int* greedy_hits) {
    const Episode& ep = *item.episode;
    if (ep.steps.empty()) throw ValidationError("unroll_episode: empty episode");
    if (w.size() != ep.steps.size()) throw ValidationError("unroll_episode: weight length");
    HintQuery query;
    query.goal_id = ep.goal_id;
    int k = model.config().effective_history();
    std::vector<Var> hist;
    std::vector<Var> p_seq;
    std::vector<ActionId> targets;
    for (size_t i = 0; i < ep.steps.size(); ++i) {
        Frame f = render_with_hint(*item.scene, ep.steps[i].pose, cam, query);
        StartModel::StepOut out = model.forward_step(t, vars, f, hist);
        p_seq.push_back(out.p);
        targets.push_back(ep.steps[i].action);
        const Tensor& pv = t.val(out.p);
        int am = 0;
        for (int a = 1; a < 4; ++a)
            if (pv.data[a] > pv.data[am]) am = a;
        if (greedy_hits && am == static_cast<int>(ep.steps[i].action)) ++*greedy_hits;
        if (k > 0) {  // teacher forcing: the ground-truth action enters history
            hist.push_back(model.make_state(t, vars, out.f_spa, static_cast<int>(ep.steps[i].action)));
            if (static_cast<int>(hist.size()) > k) hist.erase(hist.begin());
        }
    }
    return sequence_nll(t, p_seq, targets, w);
}

std::vector<TrainStats> train_teacher_forcing(StartModel& model,
                                              const std::vector<TrainItem>& data,
                                              const TrainConfig& cfg, const CameraModel& cam,
                                              const std::string& stage, std::ostream* log) {
    cfg.validate();
    if (data.empty()) throw ValidationError("train_teacher_forcing: empty dataset");
    std::vector<const Episode*> eps;
    eps.reserve(data.size());
    for (const TrainItem& it : data) eps.push_back(it.episode);
    double rho = dataset_inflection_ratio(eps);
    std::vector<std::vector<double>> weights(data.size());
    for (size_t i = 0; i < data.size(); ++i) {
        std::vector<ActionId> actions;
        actions.reserve(eps[i]->steps.size());
        for (const EpisodeStep& s : eps[i]->steps) actions.push_back(s.action);
        weights[i] = inflection_weights(actions, rho);
    }

    Adam adam(cfg.lr);
    std::vector<Param*> params = model.param_ptrs();
    Rng shuffle_rng(derive_seed(cfg.seed, "tf-shuffle"));
    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<TrainStats> out;
    auto t0 = std::chrono::steady_clock::now();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double nll_sum = 0;
        long long steps = 0, hits = 0;
        for (size_t b = 0; b < order.size(); b += static_cast<size_t>(cfg.batch_size)) {
            Tape tape;
            StartModel::Vars vars = model.push_vars(tape);
            std::vector<Var> seq_losses;
            size_t hi = std::min(order.size(), b + static_cast<size_t>(cfg.batch_size));
            for (size_t j = b; j < hi; ++j) {
                int gh = 0;
                Var l = unroll_episode(tape, model, vars, data[order[j]], cam, weights[order[j]],
                                       &gh);
                seq_losses.push_back(l);
                nll_sum += tape.val(l).data[0];
                steps += static_cast<long long>(eps[order[j]]->steps.size());
                hits += gh;
            }
            Var loss = batch_loss(tape, seq_losses);
            tape.backward(loss);
            adam.step(params);
        }
        double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        TrainStats st{stage, epoch, nll_sum / static_cast<double>(steps),
                      static_cast<double>(hits) / static_cast<double>(steps),
                      static_cast<int>(data.size()), wall};
        out.push_back(st);
        if (log) *log << train_stats_line(st) << std::endl;
        if (st.accuracy >= cfg.accuracy_stop) break;
    }
    return out;
}

namespace {

// Fresh expert plan from an arbitrary pose; empty when the pose cannot be
// attached to the graph or the goal is unreachable from it.
std::optional<SmoothPath> replan_from(const SceneMap& scene, const NavGraph& graph,
                                      const Pose& pose, const Goal& goal) {
    int gv = -1;
    double gd = 0;
    for (size_t i = 0; i < graph.vertices.size(); ++i) {
        double dg = dist(graph.vertices[i], goal.position);
        if ((gv < 0 || dg < gd) && line_of_sight(scene, graph.vertices[i], goal.position,
                                                 kAgentRadius)) {
            gv = static_cast<int>(i);
            gd = dg;
        }
    }
    if (gv < 0) return std::nullopt;

    // Attach the pose by total remaining cost, not raw proximity: the nearest
    // vertex can sit behind the agent, which makes the replanned route double
    // back and the follower shuttle. Finite cost also guarantees pv and gv
    // share a component, so shortest_path below cannot fail.
    std::vector<double> to_goal = dijkstra_dists(graph, gv);
    int pv = -1;
    double pc = 0;
    for (size_t i = 0; i < graph.vertices.size(); ++i) {
        if (!std::isfinite(to_goal[i])) continue;
        double c = dist(graph.vertices[i], pose.position()) + to_goal[i];
        if ((pv < 0 || c < pc) && line_of_sight(scene, pose.position(), graph.vertices[i],
                                                kAgentRadius)) {
            pv = static_cast<int>(i);
            pc = c;
        }
    }

    // A visible goal that beats every graph detour is routed to directly.
    double direct = dist(pose.position(), goal.position);
    if (direct > 1e-9 && (pv < 0 || direct < pc + gd) &&
        line_of_sight(scene, pose.position(), goal.position, kAgentRadius))
        return smooth_path(scene, {pose.position(), goal.position});
    if (pv < 0) return std::nullopt;

    std::vector<int> via = shortest_path(graph, pv, gv);
    if (via.empty()) return std::nullopt;
    std::vector<Vec2> wps;
    wps.push_back(pose.position());
    for (int v : via)
        if (dist(graph.vertices[v], wps.back()) > 1e-9) wps.push_back(graph.vertices[v]);
    if (dist(goal.position, wps.back()) > 1e-9) wps.push_back(goal.position);
    if (wps.size() < 2) return std::nullopt;
    return smooth_path(scene, wps);
}

const Goal& find_goal(const SceneMap& scene, const std::string& goal_id) {
    for (const Goal& g : scene.goals)
        if (g.goal_id == goal_id) return g;
    throw ValidationError("goal not found in scene: " + goal_id);
}

}  // namespace

DaggerRollout dagger_rollout(StartModel& model, const SceneMap& annotated, const NavGraph& graph,
                             const Episode& seed_episode, double beta, uint64_t seed,
                             const CameraModel& cam) {
    DaggerRollout out;
    out.episode.episode_id = seed_episode.episode_id + "-dagger";
    out.episode.scene_id = seed_episode.scene_id;
    out.episode.goal_id = seed_episode.goal_id;
    out.episode.start = seed_episode.start;
    out.episode.gt_path = seed_episode.gt_path;  // signage context stays the seed's
    const Goal& goal = find_goal(annotated, seed_episode.goal_id);

    Env env(annotated, cam);
    int max_steps = std::max<int>(60, 3 * static_cast<int>(seed_episode.steps.size()));
    StepResult res = env.reset(seed_episode.goal_id, seed_episode.start, max_steps);

    std::shared_ptr<StartModel> alias(&model, [](StartModel*) {});
    StartPolicy policy(alias, /*sample=*/true, derive_seed(seed, "policy"));
    policy.on_reset();
    Rng coin(derive_seed(seed, "coin"));

    while (!env.state().done) {
        Pose pose = env.state().pose;
        std::optional<SmoothPath> plan = replan_from(annotated, graph, pose, goal);
        if (!plan) {
            out.truncated = true;
            break;
        }
        size_t cursor = 0;
        ActionId expert = oracle_step_action(*plan, goal, pose, cursor);
        ActionId proposal = policy.act(res.frame, env.state());
        bool use_expert = coin.uniform() < beta;
        ActionId executed = use_expert ? expert : proposal;
        if (executed != proposal) policy.override_last_action(static_cast<int>(executed));

        EpisodeStep step;
        step.pose = pose;
        step.action = expert;  // the DAgger label
        if (res.frame.hint) {
            step.hint_dir = res.frame.hint->dir;
            step.bbox = res.frame.hint->bbox;
        }
        out.episode.steps.push_back(step);
        ++out.steps_total;
        if (use_expert) ++out.steps_expert_coin;
        if (executed == expert) ++out.steps_executed_expert;

        res = env.step(executed);
    }
    return out;
}

DaggerResult dagger_train(StartModel& model, const std::vector<TrainItem>& expert_data,
                          const TrainConfig& cfg, const CameraModel& cam, std::ostream* log) {
    cfg.validate();
    if (expert_data.empty()) throw ValidationError("dagger_train: empty expert dataset");
    DaggerResult res;
    std::vector<const SceneMap*> agg_scenes;
    for (const TrainItem& it : expert_data) {
        res.aggregated.push_back(*it.episode);
        agg_scenes.push_back(it.scene);
    }

    // one nav graph per scene (occupancy is annotation-invariant)
    std::map<std::string, NavGraph> graphs;
    uint64_t gidx = 0;
    for (const TrainItem& it : expert_data) {
        const std::string& sid = it.episode->scene_id;
        if (!graphs.count(sid)) {
            std::vector<Vec2> samples =
                poisson_sample(*it.scene, 1.0, 0.4, derive_seed(cfg.seed, "dagger-graph", gidx++));
            graphs.emplace(sid, build_graph(*it.scene, samples, 2.0));
        }
    }

    for (int i = 1; i <= cfg.dagger_iters; ++i) {
        double beta = std::pow(cfg.dagger_beta0, i);
        long long coins = 0, agree = 0, steps = 0;
        for (size_t e = 0; e < expert_data.size(); ++e) {
            const TrainItem& it = expert_data[e];
            DaggerRollout ro = dagger_rollout(
                model, *it.scene, graphs.at(it.episode->scene_id), *it.episode, beta,
                derive_seed(cfg.seed, "dagger-roll", static_cast<uint64_t>(i) * 1000003ULL + e),
                cam);
            if (ro.steps_total == 0) continue;
            coins += ro.steps_expert_coin;
            agree += ro.steps_executed_expert;
            steps += ro.steps_total;
            res.aggregated.push_back(std::move(ro.episode));
            agg_scenes.push_back(it.scene);
        }
        DaggerIterationStats st;
        st.iteration = i;
        st.beta = beta;
        st.aggregate_size = static_cast<int>(res.aggregated.size());
        st.expert_coin_fraction = steps ? static_cast<double>(coins) / steps : 0.0;
        st.executed_expert_fraction = steps ? static_cast<double>(agree) / steps : 0.0;
        res.iterations.push_back(st);

        std::vector<TrainItem> items;
        items.reserve(res.aggregated.size());
        for (size_t j = 0; j < res.aggregated.size(); ++j)
            items.push_back({agg_scenes[j], &res.aggregated[j]});
        TrainConfig rc = cfg;
        rc.epochs = cfg.dagger_epochs;
        rc.seed = derive_seed(cfg.seed, "dagger-retrain", static_cast<uint64_t>(i));
        std::vector<TrainStats> lg =
            train_teacher_forcing(model, items, rc, cam, "dagger-" + std::to_string(i), log);
        res.log.insert(res.log.end(), lg.begin(), lg.end());
    }
    return res;
}

}  // namespace signav
