#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "signav/episode.hpp"
#include "signav/navgraph.hpp"
#include "signav/start_model.hpp"
#include "signav/tensor.hpp"

namespace signav {

struct TrainConfig {
    double lr = 1e-3;          // micro default; paper-scale 1e-5 is constructible
    int batch_size = 8;
    int epochs = 200;
    int dagger_iters = 3;
    int dagger_epochs = 30;    // retrain epochs per aggregation round
    double dagger_beta0 = 0.75;
    double accuracy_stop = 0.95;  // early stop once reached (> 1 disables)
    uint64_t seed = 42;

    void validate() const;
};

// Raw weight 1/rho where the action changes (t = 0 counts), else 1;
// normalized to mean 1 within the sequence.
std::vector<double> inflection_weights(const std::vector<ActionId>& actions, double rho);

// (total inflections) / (total steps) across the dataset.
double dataset_inflection_ratio(const std::vector<const Episode*>& episodes);

// Sum_t w_t * (-log p_t[target_t]) for one sequence; log floored at 1e-12
// (hits counted on the tape). Batch loss = mean of these over sequences.
Var sequence_nll(Tape& t, const std::vector<Var>& p_seq, const std::vector<ActionId>& targets,
                 const std::vector<double>& w);
Var batch_loss(Tape& t, const std::vector<Var>& sequence_nlls);

struct Adam {
    double lr;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t t = 0;

    explicit Adam(double lr_) : lr(lr_) {}
    void step(const std::vector<Param*>& params);  // update + zero grads
};

struct TrainStats {
    std::string stage;
    int epoch = 0;
    double loss = 0;      // weighted NLL per step (mean over the epoch)
    double accuracy = 0;  // greedy-argmax per-step accuracy
    int dataset_size = 0;
    double wall_s = 0;
};
std::string train_stats_line(const TrainStats& s);  // line-delimited log record

// One training example: an episode plus the scene annotated for it.
struct TrainItem {
    const SceneMap* scene;  // annotated for this episode's path/goal
    const Episode* episode;
};

// Teacher forcing: per epoch, seeded shuffle; per batch of episodes, unroll
// with ground-truth actions in the history and step Adam on the batch loss.
std::vector<TrainStats> train_teacher_forcing(StartModel& model,
                                              const std::vector<TrainItem>& data,
                                              const TrainConfig& cfg, const CameraModel& cam,
                                              const std::string& stage = "tf",
                                              std::ostream* log = nullptr);

// Teacher-forced unroll of one episode on an existing tape. Appends the
// per-step distributions to p_seq and reports greedy hits for accuracy.
Var unroll_episode(Tape& t, StartModel& model, const StartModel::Vars& vars,
                   const TrainItem& item, const CameraModel& cam, const std::vector<double>& w,
                   int* greedy_hits);

struct DaggerRollout {
    Episode episode;           // relabeled: actions are expert labels
    int steps_total = 0;
    int steps_expert_coin = 0;     // steps where the beta-coin chose the expert
    int steps_executed_expert = 0; // steps where the executed action equals the label
    bool truncated = false;        // replanning failed mid-rollout
};

// Mixture rollout on one episode's start/goal: executes expert action with
// probability beta, else a model sample; every visited pose is labeled with
// the replanning expert's action.
DaggerRollout dagger_rollout(StartModel& model, const SceneMap& annotated, const NavGraph& graph,
                             const Episode& seed_episode, double beta, uint64_t seed,
                             const CameraModel& cam);

struct DaggerIterationStats {
    int iteration = 0;
    double beta = 0;
    int aggregate_size = 0;
    double expert_coin_fraction = 0;
    double executed_expert_fraction = 0;
};

struct DaggerResult {
    std::vector<DaggerIterationStats> iterations;
    std::vector<Episode> aggregated;  // expert set + all relabeled rollouts
    std::vector<TrainStats> log;
};

// Full DAgger stage: iterate beta_i = beta0^i for i = 1..dagger_iters,
// aggregating relabeled rollouts and retraining on the aggregate each round.
DaggerResult dagger_train(StartModel& model, const std::vector<TrainItem>& expert_data,
                          const TrainConfig& cfg, const CameraModel& cam,
                          std::ostream* log = nullptr);

}  // namespace signav
