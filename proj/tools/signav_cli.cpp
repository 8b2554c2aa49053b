// signav: procedural scenes, episode datasets, START training, and evaluation.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "signav/dataset.hpp"
#include "signav/episode.hpp"
#include "signav/error.hpp"
#include "signav/metrics.hpp"
#include "signav/navgraph.hpp"
#include "signav/path.hpp"
#include "signav/render.hpp"
#include "signav/rng.hpp"
#include "signav/scene.hpp"
#include "signav/sim.hpp"
#include "signav/start_model.hpp"
#include "signav/training.hpp"
#include "signav/util.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace signav;

namespace {

// ---------------------------------------------------------------- RunConfig

const std::vector<std::pair<const char*, const char*>> kConfigDefaults = {
    {"scene.extent", "20"},
    {"scene.corridor_width", "1.6"},
    {"scene.min_rooms", "3"},
    {"scene.max_rooms", "6"},
    {"scene.cell_size", "0.1"},
    {"data.poisson_r", "1"},
    {"data.poisson_c_min", "0.4"},
    {"data.edge_radius", "2"},
    {"data.min_geodesic", "5"},
    {"cam.width", "64"},
    {"cam.height", "64"},
    {"cam.hfov", "1.5707963267948966"},
    {"cam.wall_height", "2.5"},
    {"cam.eye_height", "1.25"},
    {"cam.max_depth", "20"},
    {"model.enc_mid", "8"},
    {"model.enc_out", "16"},
    {"model.c_o", "16"},
    {"model.patch", "4"},
    {"model.dim", "64"},
    {"model.spatial_layers", "2"},
    {"model.spatial_heads", "2"},
    {"model.temporal_layers", "2"},
    {"model.temporal_heads", "2"},
    {"model.history", "8"},
    {"model.hint_dim", "32"},
    {"model.ffn_mult", "2"},
    {"model.depth_norm", "20"},
    {"model.use_spatial", "1"},
    {"model.use_temporal", "1"},
    {"model.use_rgb", "1"},
    {"model.use_depth", "1"},
    {"train.lr", "0.001"},
    {"train.batch_size", "8"},
    {"train.epochs", "200"},
    {"train.dagger_iters", "3"},
    {"train.dagger_epochs", "30"},
    {"train.dagger_beta0", "0.75"},
    {"train.accuracy_stop", "0.95"},
    {"eval.max_steps", "500"},
};

struct RunConfig {
    std::map<std::string, std::string> values;

    static RunConfig with_defaults() {
        RunConfig rc;
        for (const auto& [k, v] : kConfigDefaults) rc.values[k] = v;
        return rc;
    }

    void set(const std::string& key, const std::string& value) {
        auto it = values.find(key);
        if (it == values.end()) throw ValidationError("config: unknown key '" + key + "'");
        it->second = value;
    }

    void apply_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("config: cannot read file " + path);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            auto trim = [](std::string s) {
                size_t a = s.find_first_not_of(" \t\r");
                size_t b = s.find_last_not_of(" \t\r");
                return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
            };
            std::string t = trim(line);
            if (t.empty()) continue;
            size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw ValidationError("config: " + path + ":" + std::to_string(lineno) +
                                      ": expected key = value");
            set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        }
    }

    void apply_sets(const std::vector<std::string>& sets) {
        for (const std::string& s : sets) {
            size_t eq = s.find('=');
            if (eq == std::string::npos)
                throw UsageError("--set expects key=value, got '" + s + "'");
            set(s.substr(0, eq), s.substr(eq + 1));
        }
    }

    double f(const std::string& key) const {
        try {
            return std::stod(values.at(key));
        } catch (const std::exception&) {
            throw ValidationError("config " + key + ": not a number");
        }
    }
    int i(const std::string& key) const {
        try {
            size_t pos = 0;
            int v = std::stoi(values.at(key), &pos);
            if (pos != values.at(key).size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw ValidationError("config " + key + ": not an integer");
        }
    }
    bool b(const std::string& key) const {
        const std::string& v = values.at(key);
        if (v == "1" || v == "true") return true;
        if (v == "0" || v == "false") return false;
        throw ValidationError("config " + key + ": not a boolean (0/1/true/false)");
    }
};

FloorplanParams floorplan_params(const RunConfig& rc) {
    FloorplanParams p;
    p.extent = rc.f("scene.extent");
    p.corridor_width = rc.f("scene.corridor_width");
    p.min_rooms = rc.i("scene.min_rooms");
    p.max_rooms = rc.i("scene.max_rooms");
    p.cell_size = rc.f("scene.cell_size");
    return p;
}

CameraModel camera_model(const RunConfig& rc) {
    CameraModel c;
    c.image_width = rc.i("cam.width");
    c.image_height = rc.i("cam.height");
    c.hfov = rc.f("cam.hfov");
    c.wall_height = rc.f("cam.wall_height");
    c.eye_height = rc.f("cam.eye_height");
    c.max_depth = rc.f("cam.max_depth");
    return c;
}

DatasetParams dataset_params(const RunConfig& rc) {
    DatasetParams p;
    p.poisson_r = rc.f("data.poisson_r");
    p.poisson_c_min = rc.f("data.poisson_c_min");
    p.edge_radius = rc.f("data.edge_radius");
    p.min_geodesic = rc.f("data.min_geodesic");
    p.cam = camera_model(rc);
    return p;
}

StartConfig start_config(const RunConfig& rc) {
    StartConfig c;
    c.image_h = rc.i("cam.height");
    c.image_w = rc.i("cam.width");
    c.enc_mid = rc.i("model.enc_mid");
    c.enc_out = rc.i("model.enc_out");
    c.c_o = rc.i("model.c_o");
    c.patch = rc.i("model.patch");
    c.dim = rc.i("model.dim");
    c.spatial_layers = rc.i("model.spatial_layers");
    c.spatial_heads = rc.i("model.spatial_heads");
    c.temporal_layers = rc.i("model.temporal_layers");
    c.temporal_heads = rc.i("model.temporal_heads");
    c.history = rc.i("model.history");
    c.hint_dim = rc.i("model.hint_dim");
    c.ffn_mult = rc.i("model.ffn_mult");
    c.depth_norm = rc.f("model.depth_norm");
    c.use_spatial = rc.b("model.use_spatial");
    c.use_temporal = rc.b("model.use_temporal");
    c.use_rgb = rc.b("model.use_rgb");
    c.use_depth = rc.b("model.use_depth");
    c.validate();
    return c;
}

TrainConfig train_config(const RunConfig& rc, uint64_t seed) {
    TrainConfig c;
    c.lr = rc.f("train.lr");
    c.batch_size = rc.i("train.batch_size");
    c.epochs = rc.i("train.epochs");
    c.dagger_iters = rc.i("train.dagger_iters");
    c.dagger_epochs = rc.i("train.dagger_epochs");
    c.dagger_beta0 = rc.f("train.dagger_beta0");
    c.accuracy_stop = rc.f("train.accuracy_stop");
    c.seed = seed;
    c.validate();
    return c;
}

std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ------------------------------------------------------------- subcommands

int cmd_gen_scenes(const RunConfig& rc, uint64_t seed, int count, const std::string& out_dir) {
    if (count < 0) throw UsageError("--count must be nonnegative");
    FloorplanParams fp = floorplan_params(rc);
    fs::create_directories(out_dir);
    ordered_json index;
    index["seed"] = seed;
    index["config"] = rc.values;
    index["scenes"] = ordered_json::array();
    for (int i = 0; i < count; ++i) {
        SceneMap scene = gen_floorplan(derive_seed(seed, "scene", static_cast<uint64_t>(i)), fp);
        char name[32];
        std::snprintf(name, sizeof name, "scene-%03d", i);
        scene.scene_id = name;
        std::string file = std::string(name) + ".json";
        std::string abs = (fs::path(out_dir) / file).string();
        save_scene(scene, abs);
        index["scenes"].push_back({{"file", file}, {"hash", hash_hex(hash_file(abs))}});
    }
    std::string index_path = (fs::path(out_dir) / "scenes_index.json").string();
    std::ofstream out(index_path);
    if (!out) throw ValidationError("cannot write scene index: " + index_path);
    out << index.dump(1) << "\n";
    std::cout << "wrote " << count << " scene(s) and index to " << out_dir << "\n";
    return 0;
}

std::vector<SceneMap> load_scene_dir(const std::string& dir) {
    std::string index_path = (fs::path(dir) / "scenes_index.json").string();
    std::ifstream in(index_path);
    if (!in) throw ValidationError("cannot read scene index: " + index_path);
    ordered_json index;
    try {
        in >> index;
    } catch (const std::exception& e) {
        throw ValidationError(std::string("scene index: malformed: ") + e.what());
    }
    std::vector<SceneMap> scenes;
    for (const auto& entry : index.at("scenes")) {
        std::string file = entry.at("file").get<std::string>();
        std::string abs = (fs::path(dir) / file).string();
        uint64_t expect = std::stoull(entry.at("hash").get<std::string>(), nullptr, 16);
        if (hash_file(abs) != expect)
            throw ValidationError("scene index: hash mismatch for " + file);
        scenes.push_back(load_scene(abs));
    }
    return scenes;
}

int cmd_gen_episodes(const RunConfig& rc, const std::string& scenes_dir, uint64_t seed,
                     int n_train, int n_val_seen, int n_val_unseen, const std::string& out_dir) {
    std::vector<SceneMap> scenes = load_scene_dir(scenes_dir);
    DatasetCounts counts{n_train, n_val_seen, n_val_unseen};
    fs::create_directories(out_dir);
    DatasetManifest m =
        build_dataset(scenes, counts, seed, out_dir, dataset_params(rc), rc.values);
    int total = 0;
    for (const auto& [split, files] : m.splits) total += static_cast<int>(files.size());
    std::cout << "wrote " << total << " episode(s) across " << m.splits.size() << " split(s) to "
              << out_dir << "\n";
    return 0;
}

// Annotated-scene storage for a set of training episodes. Episodes index
// scenes by id; each episode gets its own annotation (arrows are per-path).
struct PreparedData {
    std::vector<Episode> episodes;
    std::map<std::string, SceneMap> scenes;
    std::vector<SceneMap> annotated;
    std::vector<TrainItem> items;
};

PreparedData prepare_split(const std::string& dataset_dir, const std::string& split) {
    PreparedData d;
    DatasetManifest m = load_manifest((fs::path(dataset_dir) / "manifest.json").string());
    verify_manifest(m, dataset_dir);
    d.episodes = load_split(m, dataset_dir, split);
    d.scenes = load_scenes(m, dataset_dir);
    d.annotated.reserve(d.episodes.size());
    for (const Episode& ep : d.episodes) {
        auto it = d.scenes.find(ep.scene_id);
        if (it == d.scenes.end())
            throw ValidationError("dataset: episode references unknown scene " + ep.scene_id);
        d.annotated.push_back(annotate_signs(it->second, ep.gt_path, ep.goal_id));
    }
    for (size_t i = 0; i < d.episodes.size(); ++i)
        d.items.push_back({&d.annotated[i], &d.episodes[i]});
    return d;
}

int cmd_train(const RunConfig& rc, const std::string& dataset_dir, const std::string& stage,
              const std::string& out_path, const std::string& tf_ckpt, uint64_t seed,
              const std::string& log_path) {
    if (stage != "tf" && stage != "dagger")
        throw UsageError("--stage must be tf or dagger, got '" + stage + "'");
    PreparedData data = prepare_split(dataset_dir, "train");
    if (data.items.empty()) throw ValidationError("train split is empty");
    CameraModel cam = camera_model(rc);
    TrainConfig tc = train_config(rc, seed);

    std::string lp = log_path.empty() ? out_path + ".log" : log_path;
    if (fs::path(lp).has_parent_path()) fs::create_directories(fs::path(lp).parent_path());
    std::ofstream log(lp);
    if (!log) throw ValidationError("cannot write training log: " + lp);
    ordered_json echo{{"stage", stage}, {"seed", seed}, {"config", rc.values}};
    log << echo.dump() << "\n";

    if (fs::path(out_path).has_parent_path())
        fs::create_directories(fs::path(out_path).parent_path());

    if (stage == "tf") {
        StartModel model(start_config(rc), derive_seed(seed, "model-init"));
        std::vector<TrainStats> stats =
            train_teacher_forcing(model, data.items, tc, cam, "tf", &log);
        model.save(out_path);
        const TrainStats& last = stats.back();
        std::cout << "tf done: epochs=" << stats.size() << " loss=" << last.loss
                  << " accuracy=" << last.accuracy << "\ncheckpoint: " << out_path << "\n";
    } else {
        if (tf_ckpt.empty())
            throw UsageError("--ckpt (teacher-forcing checkpoint) is required for --stage dagger");
        std::shared_ptr<StartModel> model = StartModel::load(tf_ckpt);
        DaggerResult res = dagger_train(*model, data.items, tc, cam, &log);
        model->save(out_path);
        for (const DaggerIterationStats& it : res.iterations) {
            ordered_json j{{"stage", "dagger"},
                           {"iteration", it.iteration},
                           {"beta", it.beta},
                           {"aggregate_size", it.aggregate_size},
                           {"expert_coin_fraction", it.expert_coin_fraction},
                           {"executed_expert_fraction", it.executed_expert_fraction}};
            log << j.dump() << "\n";
        }
        std::cout << "dagger done: iterations=" << res.iterations.size()
                  << " aggregate=" << (res.iterations.empty()
                                           ? static_cast<int>(data.items.size())
                                           : res.iterations.back().aggregate_size)
                  << "\ncheckpoint: " << out_path << "\n";
    }
    std::cout << "log: " << lp << "\n";
    return 0;
}

PolicyFactory make_policy_factory(const std::string& name, std::shared_ptr<StartModel>* model_out,
                                  bool* oracle_assisted) {
    *oracle_assisted = false;
    if (name == "oracle") {
        return [](const SceneMap&, const Episode& ep) {
            return std::make_unique<OracleReplayPolicy>(ep);
        };
    }
    if (name == "rule") {
        *oracle_assisted = true;  // rule baseline stops on privileged distance
        return [](const SceneMap& annotated, const Episode& ep) {
            return std::make_unique<RulePolicy>(annotated, ep.goal_id);
        };
    }
    if (name.rfind("start:", 0) == 0) {
        std::string ckpt = name.substr(6);
        if (ckpt.empty()) throw UsageError("policy start: requires a checkpoint path");
        *model_out = StartModel::load(ckpt);
        std::shared_ptr<StartModel> model = *model_out;
        return [model](const SceneMap&, const Episode&) {
            return std::make_unique<StartPolicy>(model, /*sample=*/false, 0);
        };
    }
    throw UsageError("unknown policy '" + name + "' (expected oracle, rule, or start:CKPT)");
}

int cmd_eval(const RunConfig& rc, const std::string& dataset_dir, const std::string& split,
             const std::string& policy, const std::string& report_base,
             const std::string& plots_dir) {
    PreparedData data = prepare_split(dataset_dir, split);
    std::shared_ptr<StartModel> model;
    bool oracle_assisted = false;
    PolicyFactory factory = make_policy_factory(policy, &model, &oracle_assisted);
    EvalReport report = evaluate(data.episodes, data.scenes, factory, camera_model(rc),
                                 rc.i("eval.max_steps"));
    report.policy_name = policy;
    report.oracle_assisted_stop = oracle_assisted;

    std::cout << report_text(report);
    if (!report_base.empty()) {
        if (fs::path(report_base).has_parent_path())
            fs::create_directories(fs::path(report_base).parent_path());
        std::ofstream jf(report_base + ".json");
        if (!jf) throw ValidationError("cannot write report: " + report_base + ".json");
        jf << report_json(report);
        std::ofstream tf(report_base + ".txt");
        if (!tf) throw ValidationError("cannot write report: " + report_base + ".txt");
        tf << report_text(report);
        std::cout << "report: " << report_base << ".json, " << report_base << ".txt\n";
    }
    if (!plots_dir.empty()) {
        fs::create_directories(plots_dir);
        for (size_t i = 0; i < report.rows.size(); ++i) {
            const EpisodeEval& row = report.rows[i];
            std::string path = (fs::path(plots_dir) / (row.episode_id + ".svg")).string();
            std::ofstream sf(path);
            if (!sf) throw ValidationError("cannot write plot: " + path);
            sf << episode_svg(data.annotated[i], data.episodes[i], row.agent_traj);
        }
        std::cout << "plots: " << report.rows.size() << " svg file(s) in " << plots_dir << "\n";
    }
    return 0;
}

int cmd_rollout(const RunConfig& rc, const std::string& scene_path, const std::string& goal_id,
                const std::string& policy_name, uint64_t seed, const std::string& start_str,
                const std::string& trace_path, const std::string& dump_dir, int max_steps) {
    SceneMap scene = load_scene(scene_path);
    const Goal* goal = nullptr;
    for (const Goal& g : scene.goals)
        if (g.goal_id == goal_id) goal = &g;
    if (!goal) throw ValidationError("goal not found in scene: " + goal_id);

    DatasetParams dp = dataset_params(rc);
    std::vector<Vec2> samples =
        poisson_sample(scene, dp.poisson_r, dp.poisson_c_min, derive_seed(seed, "poisson"));
    NavGraph graph = build_graph(scene, samples, dp.edge_radius);

    // attach the goal once
    int gv = -1;
    double gd = 0;
    for (size_t i = 0; i < graph.vertices.size(); ++i) {
        double d = dist(graph.vertices[i], goal->position);
        if ((gv < 0 || d < gd) &&
            line_of_sight(scene, graph.vertices[i], goal->position, kAgentRadius)) {
            gv = static_cast<int>(i);
            gd = d;
        }
    }
    if (gv < 0) throw ValidationError("goal cannot be attached to the navigation graph");

    auto finish_waypoints = [&](std::vector<Vec2> wps) {
        if (dist(goal->position, wps.back()) > 1e-9) wps.push_back(goal->position);
        return wps;
    };

    Pose start;
    std::optional<SmoothPath> plan;
    std::vector<std::pair<Pose, ActionId>> transcript;  // oracle only
    bool want_oracle = policy_name == "oracle";

    if (!start_str.empty()) {
        double x, y, th;
        if (std::sscanf(start_str.c_str(), "%lf,%lf,%lf", &x, &y, &th) != 3)
            throw UsageError("--start expects x,y,theta");
        start = {x, y, th};
        int sv = -1;
        double sd = 0;
        for (size_t i = 0; i < graph.vertices.size(); ++i) {
            double d = dist(graph.vertices[i], start.position());
            if ((sv < 0 || d < sd) &&
                line_of_sight(scene, start.position(), graph.vertices[i], kAgentRadius)) {
                sv = static_cast<int>(i);
                sd = d;
            }
        }
        if (sv < 0) throw ValidationError("start pose cannot be attached to the graph");
        std::vector<int> via = shortest_path(graph, sv, gv);
        if (via.empty()) throw ValidationError("no path from start to goal");
        std::vector<Vec2> wps{start.position()};
        for (int v : via)
            if (dist(graph.vertices[v], wps.back()) > 1e-9) wps.push_back(graph.vertices[v]);
        wps = finish_waypoints(std::move(wps));
        if (wps.size() < 2) throw ValidationError("degenerate rollout path");
        plan = smooth_path(scene, wps);
        if (want_oracle) {
            SceneMap ann = annotate_signs(scene, *plan, goal_id);
            transcript = oracle_actions(ann, *plan, *goal);
            start = transcript.front().first;
        }
    } else {
        // rejection-sample a start vertex, mirroring dataset episode generation
        Rng rng(derive_seed(seed, "rollout-start"));
        auto goal_dists = dijkstra_dists(graph, gv);
        const int nv = static_cast<int>(graph.vertices.size());
        for (int attempt = 0; attempt < 100 && !plan; ++attempt) {
            int sv = static_cast<int>(rng.below(static_cast<uint64_t>(nv)));
            if (sv == gv || !std::isfinite(goal_dists[sv])) continue;
            if (goal_dists[sv] + dist(graph.vertices[gv], goal->position) < dp.min_geodesic)
                continue;
            std::vector<Vec2> wps;
            for (int v : shortest_path(graph, sv, gv)) wps.push_back(graph.vertices[v]);
            wps = finish_waypoints(std::move(wps));
            if (wps.size() < 2) continue;
            SmoothPath cand = smooth_path(scene, wps);
            if (want_oracle) {
                SceneMap ann = annotate_signs(scene, cand, goal_id);
                try {
                    transcript = oracle_actions(ann, cand, *goal);
                } catch (const ValidationError&) {
                    continue;  // pathological geometry; resample
                }
                start = transcript.front().first;
            } else {
                start = {cand.points.front().x, cand.points.front().y,
                         std::atan2(cand.tangents.front().y, cand.tangents.front().x)};
            }
            plan = std::move(cand);
        }
        if (!plan)
            throw ValidationError("no viable start vertex after 100 attempts; try another seed");
    }
    SceneMap annotated = annotate_signs(scene, *plan, goal_id);

    std::unique_ptr<Policy> policy;
    Episode oracle_ep;  // backing storage for the oracle replay
    std::shared_ptr<StartModel> model;
    if (want_oracle) {
        for (const auto& [pose, action] : transcript) {
            EpisodeStep st;
            st.pose = pose;
            st.action = action;
            oracle_ep.steps.push_back(st);
        }
        policy = std::make_unique<OracleReplayPolicy>(oracle_ep);
    } else if (policy_name == "rule") {
        policy = std::make_unique<RulePolicy>(annotated, goal_id);
    } else if (policy_name.rfind("start:", 0) == 0) {
        model = StartModel::load(policy_name.substr(6));
        policy = std::make_unique<StartPolicy>(model, false, 0);
    } else {
        throw UsageError("unknown policy '" + policy_name + "'");
    }

    if (!dump_dir.empty()) fs::create_directories(dump_dir);
    if (fs::path(trace_path).has_parent_path())
        fs::create_directories(fs::path(trace_path).parent_path());
    std::ofstream trace(trace_path);
    if (!trace) throw ValidationError("cannot write trace: " + trace_path);
    ordered_json header{{"scene_id", scene.scene_id},
                        {"goal_id", goal_id},
                        {"start", {start.x, start.y, start.theta}},
                        {"seed", seed}};
    trace << header.dump() << "\n";

    Env env(annotated, dp.cam);
    StepResult res = env.reset(goal_id, start, max_steps);
    policy->on_reset();
    int t = 0;
    while (!env.state().done) {
        if (!dump_dir.empty()) {
            char base[32];
            std::snprintf(base, sizeof base, "step-%04d", t);
            write_ppm(res.frame, (fs::path(dump_dir) / (std::string(base) + "-rgb.ppm")).string());
            write_depth_pgm(res.frame,
                            (fs::path(dump_dir) / (std::string(base) + "-depth.pgm")).string());
        }
        Pose pose = env.state().pose;
        ActionId a = policy->act(res.frame, env.state());
        ordered_json line{{"t", t},
                          {"pose", {pose.x, pose.y, pose.theta}},
                          {"action", to_string(a)}};
        trace << line.dump() << "\n";
        res = env.step(a);
        ++t;
    }
    ordered_json tail{{"outcome", to_string(env.state().outcome)},
                      {"steps", env.state().step_count}};
    trace << tail.dump() << "\n";
    std::cout << "rollout: " << to_string(env.state().outcome) << " in "
              << env.state().step_count << " step(s); trace: " << trace_path << "\n";
    return 0;
}

int run(int argc, char** argv) {
    CLI::App app{"SignNav research stack: scenes, episodes, START training, evaluation"};
    app.require_subcommand(1);
    app.fallthrough();  // --config/--set may appear after the subcommand name

    std::string config_file;
    std::vector<std::string> sets;
    app.add_option("--config", config_file, "flat key = value config file ('#' comments)");
    app.add_option("--set", sets, "override a config key (key=value, repeatable)");

    auto* gs = app.add_subcommand("gen-scenes", "generate procedural scenes + index");
    uint64_t gs_seed = 1;
    int gs_count = 3;
    std::string gs_out = "scenes";
    gs->add_option("--seed", gs_seed, "master seed");
    gs->add_option("--count", gs_count, "number of scenes");
    gs->add_option("--out", gs_out, "output directory");

    auto* ge = app.add_subcommand("gen-episodes", "build an episode dataset from scenes");
    std::string ge_scenes = "scenes", ge_out = "dataset";
    uint64_t ge_seed = 1;
    int ge_train = 40, ge_val_seen = 10, ge_val_unseen = 10;
    ge->add_option("--scenes", ge_scenes, "scene directory (from gen-scenes)");
    ge->add_option("--seed", ge_seed, "master seed");
    ge->add_option("--train", ge_train, "train episode count");
    ge->add_option("--val-seen", ge_val_seen, "val_seen episode count");
    ge->add_option("--val-unseen", ge_val_unseen, "val_unseen episode count");
    ge->add_option("--out", ge_out, "output dataset directory");

    auto* tr = app.add_subcommand("train", "train the START policy");
    std::string tr_dataset = "dataset", tr_stage = "tf", tr_out = "model.ckpt", tr_ckpt,
                tr_log;
    uint64_t tr_seed = 42;
    tr->add_option("--dataset", tr_dataset, "dataset directory");
    tr->add_option("--stage", tr_stage, "tf | dagger");
    tr->add_option("--out", tr_out, "output checkpoint path");
    tr->add_option("--ckpt", tr_ckpt, "existing tf checkpoint (dagger stage)");
    tr->add_option("--seed", tr_seed, "training seed");
    tr->add_option("--log", tr_log, "training log path (default <out>.log)");

    auto* ev = app.add_subcommand("eval", "evaluate a policy on a dataset split");
    std::string ev_dataset = "dataset", ev_split = "val_seen", ev_policy = "oracle", ev_report,
                ev_plots;
    ev->add_option("--dataset", ev_dataset, "dataset directory");
    ev->add_option("--split", ev_split, "train | val_seen | val_unseen");
    ev->add_option("--policy", ev_policy, "oracle | rule | start:CKPT");
    ev->add_option("--report", ev_report, "report base path (writes .json and .txt)");
    ev->add_option("--plots", ev_plots, "per-episode svg overlay directory");

    auto* ro = app.add_subcommand("rollout", "single rollout with trace/frame dumps");
    std::string ro_scene, ro_goal, ro_policy = "oracle", ro_start, ro_trace = "trace.jsonl",
                ro_dump;
    uint64_t ro_seed = 1;
    int ro_max_steps = kDefaultMaxSteps;
    ro->add_option("--scene", ro_scene, "scene json path")->required();
    ro->add_option("--goal", ro_goal, "goal id")->required();
    ro->add_option("--policy", ro_policy, "oracle | rule | start:CKPT");
    ro->add_option("--seed", ro_seed, "rollout seed");
    ro->add_option("--start", ro_start, "start pose x,y,theta (default: sampled)");
    ro->add_option("--trace", ro_trace, "trace output path");
    ro->add_option("--dump", ro_dump, "frame dump directory (ppm/pgm per step)");
    ro->add_option("--max-steps", ro_max_steps, "step budget");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    RunConfig rc = RunConfig::with_defaults();
    if (!config_file.empty()) rc.apply_file(config_file);
    rc.apply_sets(sets);

    if (gs->parsed()) return cmd_gen_scenes(rc, gs_seed, gs_count, gs_out);
    if (ge->parsed())
        return cmd_gen_episodes(rc, ge_scenes, ge_seed, ge_train, ge_val_seen, ge_val_unseen,
                                ge_out);
    if (tr->parsed()) return cmd_train(rc, tr_dataset, tr_stage, tr_out, tr_ckpt, tr_seed, tr_log);
    if (ev->parsed()) return cmd_eval(rc, ev_dataset, ev_split, ev_policy, ev_report, ev_plots);
    if (ro->parsed())
        return cmd_rollout(rc, ro_scene, ro_goal, ro_policy, ro_seed, ro_start, ro_trace, ro_dump,
                           ro_max_steps);
    throw UsageError("no subcommand");
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const InternalError& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
}
