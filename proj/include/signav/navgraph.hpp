#pragma once

#include <cstdint>
#include <vector>

#include "signav/geometry.hpp"
#include "signav/scene.hpp"

namespace signav {

struct NavGraph {
    std::vector<Vec2> vertices;
    struct Edge {
        int i, j;
        double length;
    };
    std::vector<Edge> edges;                      // i < j, undirected
    std::vector<std::vector<std::pair<int, double>>> adj;
};

// Bridson dart throwing over cells with clearance >= c_min. After the active
// list empties, eligible cells not covered within r reseed the process, so
// disconnected pockets (rooms behind doors) still receive samples.
std::vector<Vec2> poisson_sample(const SceneMap& scene, double r, double c_min, uint64_t seed);

NavGraph build_graph(const SceneMap& scene, const std::vector<Vec2>& samples, double r_edge);

// Minimal total length; exact ties broken by the lexicographically smallest
// vertex-index sequence.
std::vector<int> shortest_path(const NavGraph& graph, int s, int t);

// Single-source distances (used by the DAgger expert for replanning).
std::vector<double> dijkstra_dists(const NavGraph& graph, int s);

}  // namespace signav
