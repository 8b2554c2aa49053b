#pragma once

#include <array>
#include <deque>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "signav/render.hpp"
#include "signav/rng.hpp"
#include "signav/sim.hpp"
#include "signav/tensor.hpp"

namespace signav {

// Placeholder action id for the current (not yet chosen) step's state row.
constexpr int kNoAction = 4;

struct StartConfig {
    int image_h = 64, image_w = 64;
    int enc_mid = 8;    // first conv width (both observation encoders + hint)
    int enc_out = 16;   // second conv width
    int c_o = 16;       // fused observation channels
    int patch = 4;      // P
    int dim = 64;       // D
    int spatial_layers = 2, spatial_heads = 2;
    int temporal_layers = 2, temporal_heads = 2;
    int history = 8;    // k
    int hint_dim = 32;  // f^h width
    int ffn_mult = 2;
    double depth_norm = 20.0;  // meters mapped to 1.0
    bool use_spatial = true;   // false: no spatial blocks, hint token kept out
    bool use_temporal = true;  // false: temporal blocks bypassed (history off)
    bool use_rgb = true;
    bool use_depth = true;

    static constexpr int kActions = 4;

    int map_h() const { return ((image_h + 1) / 2 + 1) / 2; }
    int map_w() const { return ((image_w + 1) / 2 + 1) / 2; }
    int num_patches() const { return (map_h() / patch) * (map_w() / patch); }
    int patch_dim() const { return patch * patch * c_o; }
    int hint_flat() const {
        int s = ((kHintCropSize + 1) / 2 + 1) / 2;
        return enc_out * s * s;
    }
    int effective_history() const { return use_temporal ? history : 0; }

    void validate() const;  // throws ValidationError
    std::string serialize() const;
    static StartConfig deserialize(const std::string& text);
    uint64_t hash() const;
};

struct BlockParams {
    Param wq, bq, wk, bk, wv, bv, wo, bo;
    Param ln1_g, ln1_b;
    Param w1, b1, w2, b2;
    Param ln2_g, ln2_b;
};

struct StartParams {
    // observation encoders (Eq. 3): two conv stacks + channel-match projections
    Param rgb_k1, rgb_b1, rgb_k2, rgb_b2, rgb_proj_w, rgb_proj_b;
    Param dep_k1, dep_b1, dep_k2, dep_b2, dep_proj_w, dep_proj_b;
    Param obs_ln_g, obs_ln_b;
    // hint encoder + Eq. 4 projections
    Param hint_k1, hint_b1, hint_k2, hint_b2, hint_fc_w, hint_fc_b;
    Param w_h, ln_h_g, ln_h_b;  // visual branch
    Param w_p, ln_p_g, ln_p_b;  // bbox branch
    // spatial transformer
    Param patch_w, patch_b, pos_spatial;
    std::vector<BlockParams> spatial;
    // state fusion (Eq. 7); w_a rows 0..3 actions, row 4 NO_ACTION
    Param w_spa, ln_spa_g, ln_spa_b, w_a, ln_a_g, ln_a_b;
    // temporal transformer
    Param pos_temporal;
    std::vector<BlockParams> temporal;
    Param bypass_w, bypass_ln_g, bypass_ln_b;  // k = 0 ablation path
    // action head (Eq. 12)
    Param head_w, head_b;

    std::vector<Param*> all();  // stable order, matches checkpoint layout
};

class StartModel {
  public:
    StartModel(StartConfig cfg, uint64_t seed);

    const StartConfig& config() const { return cfg_; }
    StartParams& params() { return params_; }
    std::vector<Param*> param_ptrs() { return params_.all(); }
    int64_t param_count();

    // Per-tape handles for every parameter; build once per forward pass.
    struct Vars {
        Var rgb_k1, rgb_b1, rgb_k2, rgb_b2, rgb_proj_w, rgb_proj_b;
        Var dep_k1, dep_b1, dep_k2, dep_b2, dep_proj_w, dep_proj_b;
        Var obs_ln_g, obs_ln_b;
        Var hint_k1, hint_b1, hint_k2, hint_b2, hint_fc_w, hint_fc_b;
        Var w_h, ln_h_g, ln_h_b, w_p, ln_p_g, ln_p_b;
        Var patch_w, patch_b, pos_spatial;
        struct BlockVars {
            Var wq, bq, wk, bk, wv, bv, wo, bo, ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b;
        };
        std::vector<BlockVars> spatial;
        Var w_spa, ln_spa_g, ln_spa_b, w_a, ln_a_g, ln_a_b;
        Var pos_temporal;
        std::vector<BlockVars> temporal;
        Var bypass_w, bypass_ln_g, bypass_ln_b;
        Var head_w, head_b;
    };
    Vars push_vars(Tape& tape);

    // Forward pieces. Shapes (micro): v_o [C_o,H_o,W_o], v_h [D],
    // f_spa [N,D], cls/state/f_s [D], p [4].
    Var encode_observation(Tape& t, const Vars& v, const Tensor& rgb, const Tensor& depth) const;
    Var encode_hint(Tape& t, const Vars& v, const Tensor& crop, const BBox& bbox) const;
    std::pair<Var, Var> spatial_forward(Tape& t, const Vars& v, Var v_o, Var v_h,
                                        std::vector<Var>* attn = nullptr) const;
    Var make_state(Tape& t, const Vars& v, Var f_spa, int action) const;
    Var temporal_forward(Tape& t, const Vars& v, const std::vector<Var>& hist_states, Var cls_out,
                         Var s_t, std::vector<Var>* attn = nullptr) const;
    Var action_distribution(Tape& t, const Vars& v, Var f_s) const;

    // frame -> [N,D] spatial embedding + action distribution, given history
    // states already on the tape (teacher forcing / inference share this)
    struct StepOut {
        Var f_spa, cls, s_t, p;
    };
    StepOut forward_step(Tape& t, const Vars& v, const Frame& frame,
                         const std::vector<Var>& hist_states,
                         std::vector<Var>* attn = nullptr) const;

    void save(const std::string& path);
    static std::shared_ptr<StartModel> load(const std::string& path);

  private:
    Var mhsa_block(Tape& t, const Vars::BlockVars& b, Var x, int heads,
                   std::vector<Var>* attn) const;

    StartConfig cfg_;
    StartParams params_;
};

// Frame/hint tensor adapters.
Tensor rgb_tensor(const Frame& f);                        // [3,H,W]
Tensor depth_tensor(const Frame& f, double depth_norm);   // [1,H,W] in [0,1]
Tensor crop_tensor(const Frame& f);                       // [3,16,16], zeros if no hint
BBox hint_bbox(const Frame& f);                           // sentinel if no hint

class StartPolicy : public Policy {
  public:
    explicit StartPolicy(std::shared_ptr<StartModel> model, bool sample = false,
                         uint64_t seed = 0);
    void on_reset() override;
    ActionId act(const Frame& frame, const EnvState& state) override;
    const std::array<double, 4>& last_p() const { return last_p_; }
    size_t history_size() const { return history_.size(); }

    // DAgger mixture support: the executed action can differ from the
    // sampled one; history must reflect what actually happened.
    void override_last_action(int action);

  private:
    std::shared_ptr<StartModel> model_;
    bool sample_;
    Rng rng_;
    std::deque<std::pair<Tensor, int>> history_;  // (f_spa value, action)
    std::array<double, 4> last_p_{};
};

}  // namespace signav
