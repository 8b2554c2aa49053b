#include "signav/navgraph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "signav/error.hpp"
#include "signav/rng.hpp"

namespace signav {

std::vector<Vec2> poisson_sample(const SceneMap& scene, double r, double c_min, uint64_t seed) {
    if (r <= 0) throw UsageError("poisson_sample: r must be positive");
    if (c_min < kAgentRadius)
        throw UsageError("poisson_sample: c_min must be at least the agent radius");

    auto clearance = clearance_field(scene);
    std::vector<int> eligible;  // flat cell indices
    for (int y = 0; y < scene.height; ++y)
        for (int x = 0; x < scene.width; ++x) {
            size_t i = static_cast<size_t>(y) * scene.width + x;
            if (!scene.occupancy[i] && clearance[i] >= c_min) eligible.push_back(static_cast<int>(i));
        }
    if (eligible.empty())
        throw ValidationError("poisson_sample: no free cell with clearance >= c_min");

    Rng rng(seed);
    const double cs = scene.cell_size;
    std::vector<Vec2> samples;
    std::vector<int> active;

    auto cell_ok = [&](Vec2 p) {
        int cx = scene.cell_x(p.x), cy = scene.cell_y(p.y);
        if (cx < 0 || cy < 0 || cx >= scene.width || cy >= scene.height) return false;
        size_t i = static_cast<size_t>(cy) * scene.width + cx;
        return !scene.occupancy[i] && clearance[i] >= c_min;
    };
    auto far_enough = [&](Vec2 p) {
        for (const auto& q : samples)
            if (dist(p, q) < r) return false;
        return true;
    };
    auto add = [&](Vec2 p) {
        samples.push_back(p);
        active.push_back(static_cast<int>(samples.size()) - 1);
    };
    auto run_bridson = [&] {
        while (!active.empty()) {
            size_t pick = static_cast<size_t>(rng.below(active.size()));
            Vec2 base = samples[active[pick]];
            bool found = false;
            for (int attempt = 0; attempt < 30; ++attempt) {
                double rad = r * (1.0 + rng.uniform());
                double ang = rng.uniform(0.0, kTwoPi);
                Vec2 cand = base + Vec2{std::cos(ang), std::sin(ang)} * rad;
                if (!cell_ok(cand) || !far_enough(cand)) continue;
                add(cand);
                found = true;
                break;
            }
            if (!found) {
                active[pick] = active.back();
                active.pop_back();
            }
        }
    };

    // Initial dart: uniform over eligible cells, uniform within the cell.
    int c0 = eligible[rng.below(eligible.size())];
    Vec2 p0{(c0 % scene.width + rng.uniform()) * cs, (c0 / scene.width + rng.uniform()) * cs};
    add(p0);
    run_bridson();

    // Reseed uncovered eligible pockets (deterministic row-major sweep).
    for (int idx : eligible) {
        Vec2 center{(idx % scene.width + 0.5) * cs, (idx / scene.width + 0.5) * cs};
        if (far_enough(center)) {
            add(center);
            run_bridson();
        }
    }
    return samples;
}

NavGraph build_graph(const SceneMap& scene, const std::vector<Vec2>& samples, double r_edge) {
    NavGraph g;
    g.vertices = samples;
    g.adj.assign(samples.size(), {});
    for (int i = 0; i < static_cast<int>(samples.size()); ++i)
        for (int j = i + 1; j < static_cast<int>(samples.size()); ++j) {
            double d = dist(samples[i], samples[j]);
            if (d > r_edge) continue;
            if (!line_of_sight(scene, samples[i], samples[j], kAgentRadius)) continue;
            g.edges.push_back({i, j, d});
            g.adj[i].emplace_back(j, d);
            g.adj[j].emplace_back(i, d);
        }
    return g;
}

std::vector<double> dijkstra_dists(const NavGraph& graph, int s) {
    const int n = static_cast<int>(graph.vertices.size());
    std::vector<double> d(n, std::numeric_limits<double>::infinity());
    d[s] = 0;
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    pq.push({0.0, s});
    while (!pq.empty()) {
        auto [du, u] = pq.top();
        pq.pop();
        if (du > d[u]) continue;
        for (auto [v, w] : graph.adj[u])
            if (du + w < d[v]) {
                d[v] = du + w;
                pq.push({d[v], v});
            }
    }
    return d;
}

std::vector<int> shortest_path(const NavGraph& graph, int s, int t) {
    const int n = static_cast<int>(graph.vertices.size());
    if (s < 0 || t < 0 || s >= n || t >= n) throw UsageError("shortest_path: vertex out of range");
    auto d = dijkstra_dists(graph, s);
    if (!std::isfinite(d[t])) throw ValidationError("shortest_path: no path between vertices");
    if (s == t) return {s};

    // Tight-edge DAG: (u,v) with d[u] + w == d[v]. Edge weights are positive,
    // so it is acyclic; the lexicographically smallest shortest path is the
    // greedy walk over tight successors that can still reach t.
    std::vector<std::vector<int>> tight(n), tight_rev(n);
    for (const auto& e : graph.edges) {
        if (d[e.i] + e.length == d[e.j]) {
            tight[e.i].push_back(e.j);
            tight_rev[e.j].push_back(e.i);
        }
        if (d[e.j] + e.length == d[e.i]) {
            tight[e.j].push_back(e.i);
            tight_rev[e.i].push_back(e.j);
        }
    }
    std::vector<uint8_t> reaches_t(n, 0);
    std::vector<int> stack{t};
    reaches_t[t] = 1;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int u : tight_rev[v])
            if (!reaches_t[u]) {
                reaches_t[u] = 1;
                stack.push_back(u);
            }
    }
    std::vector<int> path{s};
    int cur = s;
    while (cur != t) {
        int best = -1;
        for (int v : tight[cur])
            if (reaches_t[v] && (best < 0 || v < best)) best = v;
        if (best < 0) throw InternalError("shortest_path: tight-edge walk lost the target");
        path.push_back(best);
        cur = best;
    }
    return path;
}

}  // namespace signav
