#include "signav/start_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "signav/error.hpp"
#include "signav/util.hpp"

namespace signav {

void StartConfig::validate() const {
    auto pos = [](int v, const char* k) {
        if (v < 1) throw ValidationError(std::string("config ") + k + ": must be positive");
    };
    pos(image_h, "image_h");
    pos(image_w, "image_w");
    pos(enc_mid, "enc_mid");
    pos(enc_out, "enc_out");
    pos(c_o, "c_o");
    pos(patch, "patch");
    pos(dim, "dim");
    pos(spatial_heads, "spatial_heads");
    pos(temporal_heads, "temporal_heads");
    pos(hint_dim, "hint_dim");
    pos(ffn_mult, "ffn_mult");
    if (spatial_layers < 0 || temporal_layers < 0)
        throw ValidationError("config layers: must be nonnegative");
    if (history < 0) throw ValidationError("config history: must be nonnegative");
    if (depth_norm <= 0) throw ValidationError("config depth_norm: must be positive");
    if (dim % spatial_heads != 0 || dim % temporal_heads != 0)
        throw ValidationError("config dim: must be divisible by head counts");
    if (map_h() % patch != 0 || map_w() % patch != 0)
        throw ValidationError("config patch: encoder map not tileable by patch size");
    if (!use_rgb && !use_depth)
        throw ValidationError("config use_rgb/use_depth: at least one input channel required");
}

std::string StartConfig::serialize() const {
    std::ostringstream os;
    os << "image_h=" << image_h << "\nimage_w=" << image_w << "\nenc_mid=" << enc_mid
       << "\nenc_out=" << enc_out << "\nc_o=" << c_o << "\npatch=" << patch << "\ndim=" << dim
       << "\nspatial_layers=" << spatial_layers << "\nspatial_heads=" << spatial_heads
       << "\ntemporal_layers=" << temporal_layers << "\ntemporal_heads=" << temporal_heads
       << "\nhistory=" << history << "\nhint_dim=" << hint_dim << "\nffn_mult=" << ffn_mult;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", depth_norm);
    os << "\ndepth_norm=" << buf;
    os << "\nuse_spatial=" << (use_spatial ? 1 : 0) << "\nuse_temporal=" << (use_temporal ? 1 : 0)
       << "\nuse_rgb=" << (use_rgb ? 1 : 0) << "\nuse_depth=" << (use_depth ? 1 : 0) << "\n";
    return os.str();
}

StartConfig StartConfig::deserialize(const std::string& text) {
    StartConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("model config: malformed line '" + line + "'");
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        auto as_int = [&] { return std::stoi(val); };
        auto as_bool = [&] { return as_int() != 0; };
        if (key == "image_h") c.image_h = as_int();
        else if (key == "image_w") c.image_w = as_int();
        else if (key == "enc_mid") c.enc_mid = as_int();
        else if (key == "enc_out") c.enc_out = as_int();
        else if (key == "c_o") c.c_o = as_int();
        else if (key == "patch") c.patch = as_int();
        else if (key == "dim") c.dim = as_int();
        else if (key == "spatial_layers") c.spatial_layers = as_int();
        else if (key == "spatial_heads") c.spatial_heads = as_int();
        else if (key == "temporal_layers") c.temporal_layers = as_int();
        else if (key == "temporal_heads") c.temporal_heads = as_int();
        else if (key == "history") c.history = as_int();
        else if (key == "hint_dim") c.hint_dim = as_int();
        else if (key == "ffn_mult") c.ffn_mult = as_int();
        else if (key == "depth_norm") c.depth_norm = std::stod(val);
        else if (key == "use_spatial") c.use_spatial = as_bool();
        else if (key == "use_temporal") c.use_temporal = as_bool();
        else if (key == "use_rgb") c.use_rgb = as_bool();
        else if (key == "use_depth") c.use_depth = as_bool();
        else throw ValidationError("model config: unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

uint64_t StartConfig::hash() const { return fnv1a64(serialize()); }

std::vector<Param*> StartParams::all() {
    std::vector<Param*> out;
    auto add = [&](Param& p) { out.push_back(&p); };
    add(rgb_k1), add(rgb_b1), add(rgb_k2), add(rgb_b2), add(rgb_proj_w), add(rgb_proj_b);
    add(dep_k1), add(dep_b1), add(dep_k2), add(dep_b2), add(dep_proj_w), add(dep_proj_b);
    add(obs_ln_g), add(obs_ln_b);
    add(hint_k1), add(hint_b1), add(hint_k2), add(hint_b2), add(hint_fc_w), add(hint_fc_b);
    add(w_h), add(ln_h_g), add(ln_h_b), add(w_p), add(ln_p_g), add(ln_p_b);
    add(patch_w), add(patch_b), add(pos_spatial);
    auto add_block = [&](BlockParams& b) {
        add(b.wq), add(b.bq), add(b.wk), add(b.bk), add(b.wv), add(b.bv), add(b.wo), add(b.bo);
        add(b.ln1_g), add(b.ln1_b);
        add(b.w1), add(b.b1), add(b.w2), add(b.b2);
        add(b.ln2_g), add(b.ln2_b);
    };
    for (BlockParams& b : spatial) add_block(b);
    add(w_spa), add(ln_spa_g), add(ln_spa_b), add(w_a), add(ln_a_g), add(ln_a_b);
    add(pos_temporal);
    for (BlockParams& b : temporal) add_block(b);
    add(bypass_w), add(bypass_ln_g), add(bypass_ln_b);
    add(head_w), add(head_b);
    return out;
}

StartModel::StartModel(StartConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    auto mat = [&](Param& p, const std::string& name, int r, int c) {
        p = Param(name, Tensor::zeros({r, c}));
        init_uniform_xavier(p, r, c, derive_seed(seed, name));
    };
    auto conv = [&](Param& p, const std::string& name, int co, int ci) {
        p = Param(name, Tensor::zeros({co, ci, 3, 3}));
        init_uniform_xavier(p, ci * 9, co * 9, derive_seed(seed, name));
    };
    auto zero = [&](Param& p, const std::string& name, int n) {
        p = Param(name, Tensor::zeros({n}));
    };
    auto one = [&](Param& p, const std::string& name, int n) {
        p = Param(name, Tensor::zeros({n}));
        init_ones(p);
    };

    StartParams& q = params_;
    int D = cfg_.dim, Co = cfg_.c_o, mid = cfg_.enc_mid, out = cfg_.enc_out;
    conv(q.rgb_k1, "rgb.conv1.k", mid, 3), zero(q.rgb_b1, "rgb.conv1.b", mid);
    conv(q.rgb_k2, "rgb.conv2.k", out, mid), zero(q.rgb_b2, "rgb.conv2.b", out);
    mat(q.rgb_proj_w, "rgb.proj.w", out, Co), zero(q.rgb_proj_b, "rgb.proj.b", Co);
    conv(q.dep_k1, "depth.conv1.k", mid, 1), zero(q.dep_b1, "depth.conv1.b", mid);
    conv(q.dep_k2, "depth.conv2.k", out, mid), zero(q.dep_b2, "depth.conv2.b", out);
    mat(q.dep_proj_w, "depth.proj.w", out, Co), zero(q.dep_proj_b, "depth.proj.b", Co);
    one(q.obs_ln_g, "obs.ln.g", Co), zero(q.obs_ln_b, "obs.ln.b", Co);

    conv(q.hint_k1, "hint.conv1.k", mid, 3), zero(q.hint_b1, "hint.conv1.b", mid);
    conv(q.hint_k2, "hint.conv2.k", out, mid), zero(q.hint_b2, "hint.conv2.b", out);
    mat(q.hint_fc_w, "hint.fc.w", cfg_.hint_flat(), cfg_.hint_dim);
    zero(q.hint_fc_b, "hint.fc.b", cfg_.hint_dim);
    mat(q.w_h, "hint.w_h", cfg_.hint_dim, D);
    one(q.ln_h_g, "hint.ln_h.g", D), zero(q.ln_h_b, "hint.ln_h.b", D);
    mat(q.w_p, "hint.w_p", 5, D);
    one(q.ln_p_g, "hint.ln_p.g", D), zero(q.ln_p_b, "hint.ln_p.b", D);

    mat(q.patch_w, "spatial.patch.w", cfg_.patch_dim(), D);
    zero(q.patch_b, "spatial.patch.b", D);
    mat(q.pos_spatial, "spatial.pos", cfg_.num_patches() + 1, D);

    auto make_block = [&](BlockParams& b, const std::string& prefix) {
        mat(b.wq, prefix + ".wq", D, D), zero(b.bq, prefix + ".bq", D);
        mat(b.wk, prefix + ".wk", D, D), zero(b.bk, prefix + ".bk", D);
        mat(b.wv, prefix + ".wv", D, D), zero(b.bv, prefix + ".bv", D);
        mat(b.wo, prefix + ".wo", D, D), zero(b.bo, prefix + ".bo", D);
        one(b.ln1_g, prefix + ".ln1.g", D), zero(b.ln1_b, prefix + ".ln1.b", D);
        mat(b.w1, prefix + ".w1", D, D * cfg_.ffn_mult);
        zero(b.b1, prefix + ".b1", D * cfg_.ffn_mult);
        mat(b.w2, prefix + ".w2", D * cfg_.ffn_mult, D);
        zero(b.b2, prefix + ".b2", D);
        one(b.ln2_g, prefix + ".ln2.g", D), zero(b.ln2_b, prefix + ".ln2.b", D);
    };
    q.spatial.resize(cfg_.spatial_layers);
    for (int l = 0; l < cfg_.spatial_layers; ++l)
        make_block(q.spatial[l], "spatial.block" + std::to_string(l));

    mat(q.w_spa, "state.w_spa", D, D);
    one(q.ln_spa_g, "state.ln_spa.g", D), zero(q.ln_spa_b, "state.ln_spa.b", D);
    mat(q.w_a, "state.w_a", kNoAction + 1, D);
    one(q.ln_a_g, "state.ln_a.g", D), zero(q.ln_a_b, "state.ln_a.b", D);

    mat(q.pos_temporal, "temporal.pos", cfg_.history + 2, D);
    q.temporal.resize(cfg_.temporal_layers);
    for (int l = 0; l < cfg_.temporal_layers; ++l)
        make_block(q.temporal[l], "temporal.block" + std::to_string(l));
    mat(q.bypass_w, "temporal.bypass.w", D, D);
    one(q.bypass_ln_g, "temporal.bypass.ln.g", D), zero(q.bypass_ln_b, "temporal.bypass.ln.b", D);

    mat(q.head_w, "head.w", D, StartConfig::kActions);
    zero(q.head_b, "head.b", StartConfig::kActions);
}

int64_t StartModel::param_count() {
    int64_t n = 0;
    for (Param* p : params_.all()) n += p->value.numel();
    return n;
}

StartModel::Vars StartModel::push_vars(Tape& t) {
    Vars v;
    StartParams& q = params_;
    auto P = [&](Param& p) { return t.param(p); };
    v.rgb_k1 = P(q.rgb_k1), v.rgb_b1 = P(q.rgb_b1), v.rgb_k2 = P(q.rgb_k2),
    v.rgb_b2 = P(q.rgb_b2), v.rgb_proj_w = P(q.rgb_proj_w), v.rgb_proj_b = P(q.rgb_proj_b);
    v.dep_k1 = P(q.dep_k1), v.dep_b1 = P(q.dep_b1), v.dep_k2 = P(q.dep_k2),
    v.dep_b2 = P(q.dep_b2), v.dep_proj_w = P(q.dep_proj_w), v.dep_proj_b = P(q.dep_proj_b);
    v.obs_ln_g = P(q.obs_ln_g), v.obs_ln_b = P(q.obs_ln_b);
    v.hint_k1 = P(q.hint_k1), v.hint_b1 = P(q.hint_b1), v.hint_k2 = P(q.hint_k2),
    v.hint_b2 = P(q.hint_b2), v.hint_fc_w = P(q.hint_fc_w), v.hint_fc_b = P(q.hint_fc_b);
    v.w_h = P(q.w_h), v.ln_h_g = P(q.ln_h_g), v.ln_h_b = P(q.ln_h_b);
    v.w_p = P(q.w_p), v.ln_p_g = P(q.ln_p_g), v.ln_p_b = P(q.ln_p_b);
    v.patch_w = P(q.patch_w), v.patch_b = P(q.patch_b), v.pos_spatial = P(q.pos_spatial);
    auto push_block = [&](BlockParams& b) {
        Vars::BlockVars bv;
        bv.wq = P(b.wq), bv.bq = P(b.bq), bv.wk = P(b.wk), bv.bk = P(b.bk);
        bv.wv = P(b.wv), bv.bv = P(b.bv), bv.wo = P(b.wo), bv.bo = P(b.bo);
        bv.ln1_g = P(b.ln1_g), bv.ln1_b = P(b.ln1_b);
        bv.w1 = P(b.w1), bv.b1 = P(b.b1), bv.w2 = P(b.w2), bv.b2 = P(b.b2);
        bv.ln2_g = P(b.ln2_g), bv.ln2_b = P(b.ln2_b);
        return bv;
    };
    for (BlockParams& b : q.spatial) v.spatial.push_back(push_block(b));
    v.w_spa = P(q.w_spa), v.ln_spa_g = P(q.ln_spa_g), v.ln_spa_b = P(q.ln_spa_b);
    v.w_a = P(q.w_a), v.ln_a_g = P(q.ln_a_g), v.ln_a_b = P(q.ln_a_b);
    v.pos_temporal = P(q.pos_temporal);
    for (BlockParams& b : q.temporal) v.temporal.push_back(push_block(b));
    v.bypass_w = P(q.bypass_w), v.bypass_ln_g = P(q.bypass_ln_g),
    v.bypass_ln_b = P(q.bypass_ln_b);
    v.head_w = P(q.head_w), v.head_b = P(q.head_b);
    return v;
}

Var StartModel::encode_observation(Tape& t, const Vars& v, const Tensor& rgb,
                                   const Tensor& depth) const {
    if (rgb.shape != std::vector<int>{3, cfg_.image_h, cfg_.image_w})
        throw ValidationError("encode_observation: rgb shape mismatch");
    if (depth.shape != std::vector<int>{1, cfg_.image_h, cfg_.image_w})
        throw ValidationError("encode_observation: depth shape mismatch");
    int hw = cfg_.map_h() * cfg_.map_w();
    auto stack = [&](const Tensor& img, Var k1, Var b1, Var k2, Var b2, Var pw, Var pb) {
        Var x = t.input(img);
        Var c1 = t.gelu(t.conv2d(x, k1, b1));
        Var c2 = t.gelu(t.conv2d(c1, k2, b2));
        Var flat = t.transpose(t.reshape(c2, {cfg_.enc_out, hw}));  // [hw, enc_out]
        return t.linear(flat, pw, pb);                              // [hw, c_o]
    };
    std::optional<Var> fused;
    if (cfg_.use_rgb)
        fused = stack(rgb, v.rgb_k1, v.rgb_b1, v.rgb_k2, v.rgb_b2, v.rgb_proj_w, v.rgb_proj_b);
    if (cfg_.use_depth) {
        Var d = stack(depth, v.dep_k1, v.dep_b1, v.dep_k2, v.dep_b2, v.dep_proj_w, v.dep_proj_b);
        fused = fused ? t.add(*fused, d) : d;
    }
    Var ln = t.layer_norm(*fused, v.obs_ln_g, v.obs_ln_b);
    return t.reshape(t.transpose(ln), {cfg_.c_o, cfg_.map_h(), cfg_.map_w()});
}

Var StartModel::encode_hint(Tape& t, const Vars& v, const Tensor& crop, const BBox& bbox) const {
    if (crop.shape != std::vector<int>{3, kHintCropSize, kHintCropSize})
        throw ValidationError("encode_hint: crop shape mismatch");
    bool sentinel = bbox.x_min == -1 && bbox.y_min == -1 && bbox.x_max == -1 && bbox.y_max == -1;
    Tensor fb = Tensor::zeros({1, 5});
    if (!sentinel) {
        if (bbox.x_min < 0 || bbox.y_min < 0 || bbox.x_min >= bbox.x_max ||
            bbox.y_min >= bbox.y_max || bbox.x_max > cfg_.image_w || bbox.y_max > cfg_.image_h)
            throw ValidationError("encode_hint: bbox outside image");
        double W = cfg_.image_w, H = cfg_.image_h;
        double w = bbox.x_max - bbox.x_min, h = bbox.y_max - bbox.y_min;
        fb.data = {bbox.x_min / W, bbox.y_min / H, bbox.x_max / W, bbox.y_max / H,
                   w * h / (W * H)};
    }
    Var c1 = t.gelu(t.conv2d(t.input(crop), v.hint_k1, v.hint_b1));
    Var c2 = t.gelu(t.conv2d(c1, v.hint_k2, v.hint_b2));
    Var fh = t.linear(t.reshape(c2, {1, cfg_.hint_flat()}), v.hint_fc_w, v.hint_fc_b);
    Var vis = t.layer_norm(t.matmul(fh, v.w_h), v.ln_h_g, v.ln_h_b);
    Var box = t.layer_norm(t.matmul(t.input(fb), v.w_p), v.ln_p_g, v.ln_p_b);
    return t.reshape(t.add(vis, box), {cfg_.dim});
}

Var StartModel::mhsa_block(Tape& t, const Vars::BlockVars& b, Var x, int heads,
                           std::vector<Var>* attn) const {
    int D = cfg_.dim, dh = D / heads;
    Var q = t.linear(x, b.wq, b.bq);
    Var k = t.linear(x, b.wk, b.bk);
    Var vv = t.linear(x, b.wv, b.bv);
    std::vector<Var> outs;
    for (int h = 0; h < heads; ++h) {
        Var qh = t.slice_cols(q, h * dh, (h + 1) * dh);
        Var kh = t.slice_cols(k, h * dh, (h + 1) * dh);
        Var vh = t.slice_cols(vv, h * dh, (h + 1) * dh);
        Var sc = t.scale(t.matmul(qh, t.transpose(kh)), 1.0 / std::sqrt(double(dh)));
        Var a = t.softmax(sc);
        if (attn) attn->push_back(a);
        outs.push_back(t.matmul(a, vh));
    }
    Var o = t.linear(t.concat_cols(outs), b.wo, b.bo);
    Var h1 = t.layer_norm(t.add(o, x), b.ln1_g, b.ln1_b);
    Var f = t.linear(t.gelu(t.linear(h1, b.w1, b.b1)), b.w2, b.b2);
    return t.layer_norm(t.add(h1, f), b.ln2_g, b.ln2_b);
}

std::pair<Var, Var> StartModel::spatial_forward(Tape& t, const Vars& v, Var v_o, Var v_h,
                                                std::vector<Var>* attn) const {
    int Ho = cfg_.map_h(), Wo = cfg_.map_w(), P = cfg_.patch;
    Var loc = t.transpose(t.reshape(v_o, {cfg_.c_o, Ho * Wo}));  // [hw, c_o]
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(cfg_.num_patches()) * P * P);
    for (int py = 0; py < Ho / P; ++py)
        for (int px = 0; px < Wo / P; ++px)
            for (int dy = 0; dy < P; ++dy)
                for (int dx = 0; dx < P; ++dx)
                    idx.push_back((py * P + dy) * Wo + px * P + dx);
    Var patches = t.reshape(t.gather_rows(loc, std::move(idx)),
                            {cfg_.num_patches(), cfg_.patch_dim()});
    Var proj = t.linear(patches, v.patch_w, v.patch_b);  // [N, D]
    if (!cfg_.use_spatial) return {proj, v_h};           // hint token kept out of the pool
    Var seq = t.concat_rows({t.reshape(v_h, {1, cfg_.dim}), proj});
    Var x = t.add(seq, v.pos_spatial);
    for (const auto& b : v.spatial) x = mhsa_block(t, b, x, cfg_.spatial_heads, attn);
    return {t.slice_rows(x, 1, cfg_.num_patches() + 1), t.select_row(x, 0)};
}

Var StartModel::make_state(Tape& t, const Vars& v, Var f_spa, int action) const {
    if (action < 0 || action > kNoAction)
        throw ValidationError("make_state: action id out of range");
    Var e_spa = t.reshape(t.mean_rows(f_spa), {1, cfg_.dim});
    Var lhs = t.layer_norm(t.matmul(e_spa, v.w_spa), v.ln_spa_g, v.ln_spa_b);
    Var e_a = t.gather_rows(v.w_a, {action});  // one-hot times the table
    Var rhs = t.layer_norm(e_a, v.ln_a_g, v.ln_a_b);
    return t.reshape(t.add(lhs, rhs), {cfg_.dim});
}

Var StartModel::temporal_forward(Tape& t, const Vars& v, const std::vector<Var>& hist_states,
                                 Var cls_out, Var s_t, std::vector<Var>* attn) const {
    if (!cfg_.use_temporal) {
        Var x = t.reshape(t.add(s_t, cls_out), {1, cfg_.dim});
        Var f = t.layer_norm(t.matmul(x, v.bypass_w), v.bypass_ln_g, v.bypass_ln_b);
        return t.reshape(f, {cfg_.dim});
    }
    int m = static_cast<int>(hist_states.size());
    if (m > cfg_.history) throw ValidationError("temporal_forward: history longer than k");
    std::vector<Var> rows;
    rows.push_back(cls_out);
    for (Var s : hist_states) rows.push_back(s);
    rows.push_back(s_t);
    Var seq = t.stack_rows(rows);  // [m+2, D]
    std::vector<int> pidx;
    pidx.push_back(0);
    for (int i = 0; i <= m; ++i) pidx.push_back(cfg_.history + 1 - m + i);  // right-aligned
    Var x = t.add(seq, t.gather_rows(v.pos_temporal, std::move(pidx)));
    for (const auto& b : v.temporal) x = mhsa_block(t, b, x, cfg_.temporal_heads, attn);
    return t.select_row(x, m + 1);
}

Var StartModel::action_distribution(Tape& t, const Vars& v, Var f_s) const {
    Var logits = t.linear(t.reshape(f_s, {1, cfg_.dim}), v.head_w, v.head_b);
    return t.reshape(t.softmax(logits), {StartConfig::kActions});
}

StartModel::StepOut StartModel::forward_step(Tape& t, const Vars& v, const Frame& frame,
                                             const std::vector<Var>& hist_states,
                                             std::vector<Var>* attn) const {
    Var v_o = encode_observation(t, v, rgb_tensor(frame), depth_tensor(frame, cfg_.depth_norm));
    Var v_h = encode_hint(t, v, crop_tensor(frame), hint_bbox(frame));
    auto [f_spa, cls] = spatial_forward(t, v, v_o, v_h, attn);
    Var s_t = make_state(t, v, f_spa, kNoAction);
    Var f_s = temporal_forward(t, v, hist_states, cls, s_t, attn);
    return {f_spa, cls, s_t, action_distribution(t, v, f_s)};
}

void StartModel::save(const std::string& path) {
    std::string blob = cfg_.serialize();
    save_checkpoint(path, params_.all(), fnv1a64(blob), blob);
}

std::shared_ptr<StartModel> StartModel::load(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    if (fnv1a64(ck.config_blob) != ck.config_hash)
        throw ValidationError("model checkpoint: config hash mismatch in " + path);
    StartConfig cfg = StartConfig::deserialize(ck.config_blob);
    auto model = std::make_shared<StartModel>(cfg, 0);
    std::vector<Param*> params = model->params_.all();
    if (params.size() != ck.tensors.size())
        throw ValidationError("model checkpoint: parameter count mismatch in " + path);
    for (size_t i = 0; i < params.size(); ++i) {
        auto& [name, tensor] = ck.tensors[i];
        if (name != params[i]->name)
            throw ValidationError("model checkpoint: unexpected parameter '" + name + "'");
        if (tensor.shape != params[i]->value.shape)
            throw ValidationError("model checkpoint: shape mismatch for '" + name + "'");
        params[i]->value = std::move(tensor);
    }
    return model;
}

Tensor rgb_tensor(const Frame& f) {
    Tensor t = Tensor::zeros({3, f.height, f.width});
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x)
            for (int c = 0; c < 3; ++c)
                t.data[(static_cast<size_t>(c) * f.height + y) * f.width + x] = f.at_rgb(y, x, c);
    return t;
}

Tensor depth_tensor(const Frame& f, double depth_norm) {
    Tensor t = Tensor::zeros({1, f.height, f.width});
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x)
            t.data[static_cast<size_t>(y) * f.width + x] =
                std::clamp(f.at_depth(y, x) / depth_norm, 0.0, 1.0);
    return t;
}

Tensor crop_tensor(const Frame& f) {
    Tensor t = Tensor::zeros({3, kHintCropSize, kHintCropSize});
    if (!f.hint) return t;
    for (int y = 0; y < kHintCropSize; ++y)
        for (int x = 0; x < kHintCropSize; ++x)
            for (int c = 0; c < 3; ++c)
                t.data[(static_cast<size_t>(c) * kHintCropSize + y) * kHintCropSize + x] =
                    f.hint->crop[(static_cast<size_t>(y) * kHintCropSize + x) * 3 + c];
    return t;
}

BBox hint_bbox(const Frame& f) { return f.hint ? f.hint->bbox : BBox{}; }

StartPolicy::StartPolicy(std::shared_ptr<StartModel> model, bool sample, uint64_t seed)
    : model_(std::move(model)), sample_(sample), rng_(seed) {}

void StartPolicy::on_reset() { history_.clear(); }

void StartPolicy::override_last_action(int action) {
    if (action < 0 || action >= kActionCount)
        throw ValidationError("override_last_action: bad action id");
    if (!history_.empty()) history_.back().second = action;
}

ActionId StartPolicy::act(const Frame& frame, const EnvState&) {
    Tape tape;
    StartModel::Vars vars = model_->push_vars(tape);
    std::vector<Var> hist;
    hist.reserve(history_.size());
    for (const auto& [f_spa, action] : history_)
        hist.push_back(model_->make_state(tape, vars, tape.input(f_spa), action));
    StartModel::StepOut out = model_->forward_step(tape, vars, frame, hist);
    const Tensor& p = tape.val(out.p);
    for (int i = 0; i < 4; ++i) last_p_[i] = p.data[i];
    int a;
    if (sample_) {
        a = static_cast<int>(rng_.categorical(p.data));
    } else {
        a = 0;
        for (int i = 1; i < 4; ++i)
            if (p.data[i] > p.data[a]) a = i;
    }
    int k = model_->config().effective_history();
    if (k > 0) {
        history_.emplace_back(tape.val(out.f_spa), a);
        while (static_cast<int>(history_.size()) > k) history_.pop_front();
    }
    return static_cast<ActionId>(a);
}

}  // namespace signav
