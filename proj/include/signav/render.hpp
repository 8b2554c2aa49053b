#pragma once

#include <optional>
#include <string>
#include <vector>

#include "signav/geometry.hpp"
#include "signav/scene.hpp"

namespace signav {

struct CameraModel {
    int image_width = 64;
    int image_height = 64;
    double hfov = kPi / 2;
    double wall_height = 2.5;
    double eye_height = 1.25;
    double max_depth = 20.0;
};

struct BBox {
    int x_min = -1, y_min = -1, x_max = -1, y_max = -1;
};

struct Hint {
    std::vector<double> crop;  // 16*16*3, row-major, [0,1]
    BBox bbox;
    ArrowDir dir = ArrowDir::Straight;
};

struct Frame {
    int width = 0, height = 0;
    std::vector<double> rgb;    // height*width*3, [0,1]
    std::vector<double> depth;  // height*width, meters
    std::optional<Hint> hint;

    double& at_rgb(int y, int x, int c) { return rgb[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at_rgb(int y, int x, int c) const {
        return rgb[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
    double& at_depth(int y, int x) { return depth[static_cast<size_t>(y) * width + x]; }
    double at_depth(int y, int x) const { return depth[static_cast<size_t>(y) * width + x]; }
};

struct HintQuery {
    std::string goal_id;
    double max_hint_distance = 5.0;
    double max_face_angle = kPi / 3;
};

constexpr int kHintCropSize = 16;

Frame render(const SceneMap& scene, const Pose& pose, const CameraModel& cam);
std::optional<BBox> project_sign(const SceneMap& scene, const Pose& pose, const CameraModel& cam,
                                 const Sign& sign);
Frame render_with_hint(const SceneMap& scene, const Pose& pose, const CameraModel& cam,
                       const HintQuery& query);

// Debug exports (not part of the dataset format).
void write_ppm(const Frame& frame, const std::string& path);       // P6 8-bit RGB
void write_depth_pgm(const Frame& frame, const std::string& path); // P5 16-bit, millimeters

}  // namespace signav
