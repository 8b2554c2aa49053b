#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "signav/geometry.hpp"

namespace signav {

inline constexpr double kAgentRadius = 0.2;  // meters

enum class ArrowDir { Left = 0, Straight = 1, Right = 2 };

const char* to_string(ArrowDir d);
std::optional<ArrowDir> arrow_from_string(const std::string& s);

// 9x9 binary glyph in screen orientation (row 0 = top). Left points left,
// Straight points up, Right points right.
using Glyph = std::array<std::array<uint8_t, 9>, 9>;
const Glyph& arrow_glyph(ArrowDir d);

struct Goal {
    std::string goal_id;
    Vec2 position;
};

struct Sign {
    std::string sign_id;
    Vec2 position;  // on a wall face
    double normal = 0;  // radians, points into free space
    std::map<std::string, ArrowDir> arrows;  // goal_id -> direction
    double quad_width = 0.5;
    double mount_height_frac = 0.6;
};

struct SceneMap {
    std::string scene_id;
    double cell_size = 0.1;
    int width = 0;   // cells
    int height = 0;  // cells
    std::vector<uint8_t> occupancy;  // row-major, 1 = obstacle
    std::vector<Sign> signs;
    std::vector<Goal> goals;

    bool occupied(int cx, int cy) const {
        if (cx < 0 || cy < 0 || cx >= width || cy >= height) return true;
        return occupancy[static_cast<size_t>(cy) * width + cx] != 0;
    }
    bool occupied_at(Vec2 p) const { return occupied(cell_x(p.x), cell_y(p.y)); }
    int cell_x(double x) const { return static_cast<int>(std::floor(x / cell_size)); }
    int cell_y(double y) const { return static_cast<int>(std::floor(y / cell_size)); }
    Vec2 cell_center(int cx, int cy) const {
        return {(cx + 0.5) * cell_size, (cy + 0.5) * cell_size};
    }
    double extent_x() const { return width * cell_size; }
    double extent_y() const { return height * cell_size; }
    const Goal* find_goal(const std::string& goal_id) const;
};

// Throws ValidationError naming the offending field if any invariant fails.
void validate_scene(const SceneMap& scene);

// Exact Euclidean distance (meters) from each free cell's center to the
// nearest occupied cell center; 0 at occupied cells.
std::vector<double> clearance_field(const SceneMap& scene);

// Exact distance from a continuous point to the nearest occupied cell center.
// `clearance` must be the field for `scene`.
double point_clearance(const SceneMap& scene, const std::vector<double>& clearance, Vec2 p);

// True iff the capsule of `radius` from a to b intersects no occupied cell.
// radius = 0 degenerates to supercover segment traversal. Boundary grazing
// within 1e-9 counts as free.
bool line_of_sight(const SceneMap& scene, Vec2 a, Vec2 b, double radius);

// All cells the segment passes through (supercover: corner touches include
// both side cells).
std::vector<std::pair<int, int>> supercover_cells(const SceneMap& scene, Vec2 a, Vec2 b);

// Scene file round trip (JSON). save returns the serialized text.
std::string scene_to_json(const SceneMap& scene);
SceneMap scene_from_json(const std::string& text);
void save_scene(const SceneMap& scene, const std::string& path);
SceneMap load_scene(const std::string& path);

struct FloorplanParams {
    double extent = 20.0;          // side length, meters
    double corridor_width = 1.6;   // meters
    int min_rooms = 3;
    int max_rooms = 6;
    double cell_size = 0.1;
};

// Procedural corridor-and-room floorplan. Deterministic per seed.
SceneMap gen_floorplan(uint64_t seed, const FloorplanParams& params);

}  // namespace signav
