#include "signav/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "signav/error.hpp"

namespace signav {

namespace {

// Wall palette keyed on the orientation of the struck face (-x, +x, -y, +y).
constexpr double kWallPalette[4][3] = {
    {0.85, 0.55, 0.45},
    {0.45, 0.60, 0.80},
    {0.55, 0.75, 0.50},
    {0.80, 0.75, 0.50},
};
constexpr double kFloor[3] = {0.25, 0.25, 0.25};
constexpr double kCeiling[3] = {0.80, 0.80, 0.80};

struct RayHit {
    bool hit = false;
    double t = 0;   // distance along the ray to the entry face
    int face = 0;   // palette index
};

RayHit cast_ray(const SceneMap& scene, Vec2 origin, double angle, double max_t) {
    const double cs = scene.cell_size;
    Vec2 dir{std::cos(angle), std::sin(angle)};
    int cx = scene.cell_x(origin.x), cy = scene.cell_y(origin.y);
    int step_x = dir.x > 0 ? 1 : (dir.x < 0 ? -1 : 0);
    int step_y = dir.y > 0 ? 1 : (dir.y < 0 ? -1 : 0);
    constexpr double kInf = std::numeric_limits<double>::infinity();
    double t_max_x = kInf, t_max_y = kInf, t_dx = kInf, t_dy = kInf;
    if (step_x != 0) {
        double edge = (step_x > 0 ? (cx + 1) * cs : cx * cs);
        t_max_x = (edge - origin.x) / dir.x;
        t_dx = cs / std::abs(dir.x);
    }
    if (step_y != 0) {
        double edge = (step_y > 0 ? (cy + 1) * cs : cy * cs);
        t_max_y = (edge - origin.y) / dir.y;
        t_dy = cs / std::abs(dir.y);
    }
    int guard = 4 * (scene.width + scene.height) + 8;
    while (guard-- > 0) {
        double t;
        int face;
        if (t_max_x <= t_max_y) {
            t = t_max_x;
            cx += step_x;
            t_max_x += t_dx;
            face = step_x > 0 ? 0 : 1;  // entered through -x or +x face
        } else {
            t = t_max_y;
            cy += step_y;
            t_max_y += t_dy;
            face = step_y > 0 ? 2 : 3;
        }
        if (t > max_t) return {};
        if (scene.occupied(cx, cy)) return {true, t, face};
    }
    return {};
}

double focal_px(const CameraModel& cam) {
    return cam.image_width / (2.0 * std::tan(cam.hfov / 2.0));
}

double column_angle(const CameraModel& cam, int c) {
    return cam.hfov * (0.5 - (c + 0.5) / cam.image_width);
}

// Continuous pixel x-coordinate of the viewing angle beta (angular column map,
// matching the per-column ray directions).
double angle_to_px(const CameraModel& cam, double beta) {
    return cam.image_width * (0.5 - beta / cam.hfov);
}

struct SignView {
    BBox bbox;
    Vec2 center;
    Vec2 normal;
    Vec2 tangent;  // oriented so +tangent maps to screen right
    double z_center;
    double half;  // quad half extent
    double center_dist;
};

std::optional<SignView> project_sign_impl(const SceneMap& scene, const Pose& pose,
                                          const CameraModel& cam, const Sign& sign,
                                          double max_dist, double max_face_angle) {
    Vec2 p = pose.position();
    Vec2 n{std::cos(sign.normal), std::sin(sign.normal)};
    Vec2 to_agent = p - sign.position;
    double d = to_agent.norm();
    if (d > max_dist || d < 1e-9) return std::nullopt;
    if (dot(n, to_agent) < d * std::cos(max_face_angle)) return std::nullopt;

    Vec2 fwd{std::cos(pose.theta), std::sin(pose.theta)};
    Vec2 rel = sign.position - p;
    double f = dot(rel, fwd);
    double l = dot(rel, fwd.perp());  // left positive
    double beta = std::atan2(l, f);
    if (std::abs(beta) > cam.hfov / 2) return std::nullopt;

    // Pull the LOS target slightly off the wall face so the wall cell itself
    // does not count as an occluder.
    Vec2 target = sign.position + n * (scene.cell_size * 0.1);
    if (!line_of_sight(scene, p, target, 0.0)) return std::nullopt;

    SignView v;
    v.center = sign.position;
    v.normal = n;
    v.center_dist = d;
    v.z_center = sign.mount_height_frac * cam.wall_height;
    v.half = sign.quad_width / 2;

    Vec2 t = n.perp();
    // Orient the tangent so +tangent maps to increasing pixel x (screen right);
    // otherwise Left/Right glyphs would render mirrored.
    auto px_of = [&](Vec2 q) {
        Vec2 r = q - p;
        return angle_to_px(cam, std::atan2(dot(r, fwd.perp()), dot(r, fwd)));
    };
    if (px_of(sign.position + t * 0.01) < px_of(sign.position - t * 0.01)) t = t * -1.0;
    v.tangent = t;

    double fpx = focal_px(cam);
    double u_lo = std::numeric_limits<double>::infinity(), u_hi = -u_lo;
    double v_lo = u_lo, v_hi = u_hi;
    for (int i = 0; i < 4; ++i) {
        Vec2 corner2d = sign.position + t * ((i & 1) ? v.half : -v.half);
        double z = v.z_center + ((i & 2) ? v.half : -v.half);
        Vec2 r = corner2d - p;
        double cf = dot(r, fwd);
        if (cf < 1e-6) return std::nullopt;  // corner behind image plane
        double u = angle_to_px(cam, std::atan2(dot(r, fwd.perp()), cf));
        double vv = cam.image_height / 2.0 + fpx * (cam.eye_height - z) / cf;
        u_lo = std::min(u_lo, u);
        u_hi = std::max(u_hi, u);
        v_lo = std::min(v_lo, vv);
        v_hi = std::max(v_hi, vv);
    }
    int x0 = std::max(0, static_cast<int>(std::floor(u_lo)));
    int x1 = std::min(cam.image_width, static_cast<int>(std::ceil(u_hi)));
    int y0 = std::max(0, static_cast<int>(std::floor(v_lo)));
    int y1 = std::min(cam.image_height, static_cast<int>(std::ceil(v_hi)));
    if (x0 >= x1 || y0 >= y1) return std::nullopt;
    v.bbox = {x0, y0, x1, y1};
    return v;
}

void draw_sign(Frame& frame, const SceneMap& scene, const Pose& pose, const CameraModel& cam,
               const SignView& sv, ArrowDir dir) {
    (void)scene;
    Vec2 p = pose.position();
    Vec2 fwd{std::cos(pose.theta), std::sin(pose.theta)};
    const Glyph& glyph = arrow_glyph(dir);
    double fpx = focal_px(cam);
    const double qw = sv.half * 2;
    for (int c = sv.bbox.x_min; c < sv.bbox.x_max; ++c) {
        double alpha = column_angle(cam, c);
        Vec2 rdir{std::cos(pose.theta + alpha), std::sin(pose.theta + alpha)};
        double denom = dot(rdir, sv.normal);
        if (std::abs(denom) < 1e-12) continue;
        double t = dot(sv.center - p, sv.normal) / denom;
        if (t <= 0) continue;
        Vec2 hit = p + rdir * t;
        double s = dot(hit - sv.center, sv.tangent);
        if (std::abs(s) > sv.half) continue;
        double fc = dot(hit - p, fwd);
        if (fc < 1e-6) continue;
        // Occlusion: skip columns where a nearer wall hides the sign plane.
        if (frame.at_depth(0, c) < fc - scene.cell_size) continue;
        int gx = std::clamp(static_cast<int>(std::floor((s / qw + 0.5) * 9.0)), 0, 8);
        for (int r = sv.bbox.y_min; r < sv.bbox.y_max; ++r) {
            double z = cam.eye_height - (r + 0.5 - cam.image_height / 2.0) * fc / fpx;
            if (std::abs(z - sv.z_center) > sv.half) continue;
            int gy = std::clamp(static_cast<int>(std::floor((sv.z_center + sv.half - z) / qw * 9.0)),
                                0, 8);
            double v = glyph[gy][gx] ? 0.0 : 1.0;
            frame.at_rgb(r, c, 0) = v;
            frame.at_rgb(r, c, 1) = v;
            frame.at_rgb(r, c, 2) = v;
        }
    }
}

}  // namespace

Frame render(const SceneMap& scene, const Pose& pose, const CameraModel& cam) {
    if (scene.occupied_at(pose.position()))
        throw ValidationError("render: pose in occupied cell");
    Frame frame;
    frame.width = cam.image_width;
    frame.height = cam.image_height;
    frame.rgb.assign(static_cast<size_t>(cam.image_width) * cam.image_height * 3, 0.0);
    frame.depth.assign(static_cast<size_t>(cam.image_width) * cam.image_height, 0.0);

    const double horizon = cam.image_height / 2.0;
    for (int c = 0; c < cam.image_width; ++c) {
        double alpha = column_angle(cam, c);
        double cos_a = std::cos(alpha);
        RayHit hit = cast_ray(scene, pose.position(), pose.theta + alpha,
                              cam.max_depth / std::max(cos_a, 1e-9));
        double d = hit.hit ? hit.t * cos_a : cam.max_depth;
        d = std::min(d, cam.max_depth);
        double slice = cam.image_width * cam.wall_height /
                       (2.0 * std::tan(cam.hfov / 2.0) * std::max(d, 1e-9));
        double top = horizon - slice / 2, bottom = horizon + slice / 2;
        for (int r = 0; r < cam.image_height; ++r) {
            frame.at_depth(r, c) = d;
            double yc = r + 0.5;
            const double* color;
            if (hit.hit && yc >= top && yc < bottom)
                color = kWallPalette[hit.face];
            else if (yc < horizon)
                color = kCeiling;
            else
                color = kFloor;
            frame.at_rgb(r, c, 0) = color[0];
            frame.at_rgb(r, c, 1) = color[1];
            frame.at_rgb(r, c, 2) = color[2];
        }
    }
    return frame;
}

std::optional<BBox> project_sign(const SceneMap& scene, const Pose& pose, const CameraModel& cam,
                                 const Sign& sign) {
    HintQuery q;  // default thresholds
    auto v = project_sign_impl(scene, pose, cam, sign, q.max_hint_distance, q.max_face_angle);
    if (!v) return std::nullopt;
    return v->bbox;
}

Frame render_with_hint(const SceneMap& scene, const Pose& pose, const CameraModel& cam,
                       const HintQuery& query) {
    // Pure sign lookup: an id no sign carries (known goal or not) simply
    // yields no hint. Goal existence is the sim/dataset layers' contract.
    Frame frame = render(scene, pose, cam);

    const Sign* best = nullptr;
    std::optional<SignView> best_view;
    for (const auto& sign : scene.signs) {
        auto it = sign.arrows.find(query.goal_id);
        if (it == sign.arrows.end()) continue;
        auto v = project_sign_impl(scene, pose, cam, sign, query.max_hint_distance,
                                   query.max_face_angle);
        if (!v) continue;
        if (!best_view || v->center_dist < best_view->center_dist) {
            best = &sign;
            best_view = v;
        }
    }
    if (!best_view) return frame;

    ArrowDir dir = best->arrows.at(query.goal_id);
    draw_sign(frame, scene, pose, cam, *best_view, dir);

    Hint hint;
    hint.bbox = best_view->bbox;
    hint.dir = dir;
    hint.crop.assign(kHintCropSize * kHintCropSize * 3, 0.0);
    int bw = hint.bbox.x_max - hint.bbox.x_min;
    int bh = hint.bbox.y_max - hint.bbox.y_min;
    for (int i = 0; i < kHintCropSize; ++i) {
        int sy = hint.bbox.y_min + static_cast<int>(std::floor((i + 0.5) * bh / kHintCropSize));
        sy = std::min(sy, hint.bbox.y_max - 1);
        for (int j = 0; j < kHintCropSize; ++j) {
            int sx = hint.bbox.x_min + static_cast<int>(std::floor((j + 0.5) * bw / kHintCropSize));
            sx = std::min(sx, hint.bbox.x_max - 1);
            for (int ch = 0; ch < 3; ++ch)
                hint.crop[(static_cast<size_t>(i) * kHintCropSize + j) * 3 + ch] =
                    frame.at_rgb(sy, sx, ch);
        }
    }
    frame.hint = std::move(hint);
    return frame;
}

void write_ppm(const Frame& frame, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write image file: " + path);
    out << "P6\n" << frame.width << " " << frame.height << "\n255\n";
    for (int r = 0; r < frame.height; ++r)
        for (int c = 0; c < frame.width; ++c)
            for (int ch = 0; ch < 3; ++ch) {
                double v = std::clamp(frame.at_rgb(r, c, ch), 0.0, 1.0);
                out.put(static_cast<char>(static_cast<int>(std::lround(v * 255.0))));
            }
}

void write_depth_pgm(const Frame& frame, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write image file: " + path);
    out << "P5\n" << frame.width << " " << frame.height << "\n65535\n";
    for (int r = 0; r < frame.height; ++r)
        for (int c = 0; c < frame.width; ++c) {
            long mm = std::lround(std::clamp(frame.at_depth(r, c), 0.0, 65.535) * 1000.0);
            out.put(static_cast<char>((mm >> 8) & 0xff));
            out.put(static_cast<char>(mm & 0xff));
        }
}

}  // namespace signav
