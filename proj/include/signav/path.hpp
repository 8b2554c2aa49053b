#pragma once

#include <vector>

#include "signav/geometry.hpp"
#include "signav/scene.hpp"

namespace signav {

struct SmoothPath {
    std::vector<Vec2> points;    // ~0.05 m arc-length spacing
    std::vector<Vec2> tangents;  // unit, finite differences
    std::vector<int> fallback_segments;  // waypoint intervals that reverted to straight lines

    double length() const {
        double s = 0;
        for (size_t i = 1; i < points.size(); ++i) s += dist(points[i - 1], points[i]);
        return s;
    }
};

// Centripetal Catmull-Rom through the waypoints (endpoints duplicated),
// resampled by arc length at 0.05 m. Segments whose smoothed points dip below
// agent-radius clearance fall back to the straight polyline.
SmoothPath smooth_path(const SceneMap& scene, const std::vector<Vec2>& waypoints);

}  // namespace signav
