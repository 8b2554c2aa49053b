#include "signav/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "signav/error.hpp"
#include "signav/util.hpp"

namespace signav {

namespace {

constexpr uint8_t U = 1;

// Up-pointing arrow; Left/Right are 90-degree rotations of it.
constexpr Glyph kUpGlyph = {{
    {0, 0, 0, 0, U, 0, 0, 0, 0},
    {0, 0, 0, U, U, U, 0, 0, 0},
    {0, 0, U, U, U, U, U, 0, 0},
    {0, U, U, U, U, U, U, U, 0},
    {0, 0, 0, U, U, U, 0, 0, 0},
    {0, 0, 0, U, U, U, 0, 0, 0},
    {0, 0, 0, U, U, U, 0, 0, 0},
    {0, 0, 0, U, U, U, 0, 0, 0},
    {0, 0, 0, U, U, U, 0, 0, 0},
}};

Glyph rotate_ccw(const Glyph& g) {
    Glyph out{};
    for (int r = 0; r < 9; ++r)
        for (int c = 0; c < 9; ++c) out[8 - c][r] = g[r][c];
    return out;
}

Glyph rotate_cw(const Glyph& g) {
    Glyph out{};
    for (int r = 0; r < 9; ++r)
        for (int c = 0; c < 9; ++c) out[c][8 - r] = g[r][c];
    return out;
}

const Glyph kLeftGlyph = rotate_ccw(kUpGlyph);
const Glyph kRightGlyph = rotate_cw(kUpGlyph);

}  // namespace

const char* to_string(ArrowDir d) {
    switch (d) {
        case ArrowDir::Left: return "Left";
        case ArrowDir::Straight: return "Straight";
        case ArrowDir::Right: return "Right";
    }
    return "?";
}

std::optional<ArrowDir> arrow_from_string(const std::string& s) {
    if (s == "Left") return ArrowDir::Left;
    if (s == "Straight") return ArrowDir::Straight;
    if (s == "Right") return ArrowDir::Right;
    return std::nullopt;
}

const Glyph& arrow_glyph(ArrowDir d) {
    switch (d) {
        case ArrowDir::Left: return kLeftGlyph;
        case ArrowDir::Right: return kRightGlyph;
        default: return kUpGlyph;
    }
}

const Goal* SceneMap::find_goal(const std::string& goal_id) const {
    for (const auto& g : goals)
        if (g.goal_id == goal_id) return &g;
    return nullptr;
}

void validate_scene(const SceneMap& scene) {
    if (scene.width <= 0 || scene.height <= 0)
        throw ValidationError("scene field width/height: must be positive");
    if (scene.cell_size <= 0) throw ValidationError("scene field cell_size: must be positive");
    if (scene.occupancy.size() != static_cast<size_t>(scene.width) * scene.height)
        throw ValidationError("scene field occupancy: size != width*height");

    for (int x = 0; x < scene.width; ++x)
        if (!scene.occupied(x, 0) || !scene.occupied(x, scene.height - 1))
            throw ValidationError("scene field occupancy: border cell free at row edge");
    for (int y = 0; y < scene.height; ++y)
        if (!scene.occupied(0, y) || !scene.occupied(scene.width - 1, y))
            throw ValidationError("scene field occupancy: border cell free at column edge");

    auto clearance = clearance_field(scene);
    for (size_t i = 0; i < scene.goals.size(); ++i) {
        const auto& g = scene.goals[i];
        if (scene.occupied_at(g.position))
            throw ValidationError("scene field goals[" + std::to_string(i) +
                                  "].position: not in free space");
        int cx = scene.cell_x(g.position.x), cy = scene.cell_y(g.position.y);
        if (clearance[static_cast<size_t>(cy) * scene.width + cx] < kAgentRadius)
            throw ValidationError("scene field goals[" + std::to_string(i) +
                                  "].position: clearance below agent radius");
    }

    const double eps = scene.cell_size * 0.25;
    for (size_t i = 0; i < scene.signs.size(); ++i) {
        const auto& s = scene.signs[i];
        Vec2 n{std::cos(s.normal), std::sin(s.normal)};
        if (scene.occupied_at(s.position + n * eps))
            throw ValidationError("scene field signs[" + std::to_string(i) +
                                  "].normal: does not point into free space");
        if (!scene.occupied_at(s.position - n * eps))
            throw ValidationError("scene field signs[" + std::to_string(i) +
                                  "].position: not on a wall face");
        for (const auto& [goal_id, dir] : s.arrows) {
            (void)dir;
            if (!scene.find_goal(goal_id))
                throw ValidationError("scene field signs[" + std::to_string(i) +
                                      "].arrows: unknown goal_id '" + goal_id + "'");
        }
    }
}

namespace {

// 1D squared distance transform (Felzenszwalb & Huttenlocher). Infinite
// samples never become hull vertices: an inf-vs-inf intersection is NaN in
// IEEE and silently corrupts the envelope, so they are skipped instead.
void dt1d(const std::vector<double>& f, int n, std::vector<double>& d, std::vector<int>& v,
          std::vector<double>& z) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        double s = -kInf;
        while (k >= 0) {
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
            if (s > z[k]) break;
            --k;
        }
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
        } else {
            ++k;
            v[k] = q;
            z[k] = s;
        }
        z[k + 1] = kInf;
    }
    if (k < 0) {  // no sites on this line
        std::fill(d.begin(), d.begin() + n, kInf);
        return;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        d[q] = (q - v[k]) * (q - v[k]) + f[v[k]];
    }
}

}  // namespace

std::vector<double> clearance_field(const SceneMap& scene) {
    const int w = scene.width, h = scene.height;
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> sq(static_cast<size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            sq[static_cast<size_t>(y) * w + x] = scene.occupied(x, y) ? 0.0 : kInf;

    int n = std::max(w, h);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);

    for (int x = 0; x < w; ++x) {  // columns
        for (int y = 0; y < h; ++y) f[y] = sq[static_cast<size_t>(y) * w + x];
        dt1d(f, h, d, v, z);
        for (int y = 0; y < h; ++y) sq[static_cast<size_t>(y) * w + x] = d[y];
    }
    for (int y = 0; y < h; ++y) {  // rows
        for (int x = 0; x < w; ++x) f[x] = sq[static_cast<size_t>(y) * w + x];
        dt1d(f, w, d, v, z);
        for (int x = 0; x < w; ++x) sq[static_cast<size_t>(y) * w + x] = d[x];
    }

    std::vector<double> out(sq.size());
    for (size_t i = 0; i < sq.size(); ++i)
        out[i] = std::isfinite(sq[i]) ? scene.cell_size * std::sqrt(sq[i])
                                      : std::numeric_limits<double>::infinity();
    return out;
}

double point_clearance(const SceneMap& scene, const std::vector<double>& clearance, Vec2 p) {
    int cx = scene.cell_x(p.x), cy = scene.cell_y(p.y);
    cx = std::clamp(cx, 0, scene.width - 1);
    cy = std::clamp(cy, 0, scene.height - 1);
    const double cs = scene.cell_size;
    // Upper bound: nearest center for this cell's center, plus in-cell offset.
    double best = clearance[static_cast<size_t>(cy) * scene.width + cx] + cs * 0.7071067811865476;
    int max_ring = std::max(scene.width, scene.height);
    for (int r = 0; r <= max_ring; ++r) {
        if ((r - 1) * cs > best) break;
        int x0 = cx - r, x1 = cx + r, y0 = cy - r, y1 = cy + r;
        auto visit = [&](int x, int y) {
            if (scene.occupied(x, y)) {
                // Out-of-bounds counts as occupied with its virtual center.
                Vec2 c{(x + 0.5) * cs, (y + 0.5) * cs};
                best = std::min(best, dist(p, c));
            }
        };
        if (r == 0) {
            visit(cx, cy);
            continue;
        }
        for (int x = x0; x <= x1; ++x) {
            visit(x, y0);
            visit(x, y1);
        }
        for (int y = y0 + 1; y < y1; ++y) {
            visit(x0, y);
            visit(x1, y);
        }
    }
    return best;
}

std::vector<std::pair<int, int>> supercover_cells(const SceneMap& scene, Vec2 a, Vec2 b) {
    const double cs = scene.cell_size;
    std::vector<std::pair<int, int>> out;
    int cx = scene.cell_x(a.x), cy = scene.cell_y(a.y);
    int ex = scene.cell_x(b.x), ey = scene.cell_y(b.y);
    Vec2 d = b - a;
    int step_x = d.x > 0 ? 1 : (d.x < 0 ? -1 : 0);
    int step_y = d.y > 0 ? 1 : (d.y < 0 ? -1 : 0);
    constexpr double kInf = std::numeric_limits<double>::infinity();
    double t_max_x = kInf, t_max_y = kInf, t_dx = kInf, t_dy = kInf;
    if (step_x != 0) {
        double edge = (step_x > 0 ? (cx + 1) * cs : cx * cs);
        t_max_x = (edge - a.x) / d.x;
        t_dx = cs / std::abs(d.x);
    }
    if (step_y != 0) {
        double edge = (step_y > 0 ? (cy + 1) * cs : cy * cs);
        t_max_y = (edge - a.y) / d.y;
        t_dy = cs / std::abs(d.y);
    }
    constexpr double kCornerEps = 1e-12;
    int guard = 4 * (scene.width + scene.height) + 8;
    while (guard-- > 0) {
        out.emplace_back(cx, cy);
        if (cx == ex && cy == ey) break;
        if (t_max_x > 1.0 + kCornerEps && t_max_y > 1.0 + kCornerEps) break;
        if (t_max_x < t_max_y - kCornerEps) {
            cx += step_x;
            t_max_x += t_dx;
        } else if (t_max_y < t_max_x - kCornerEps) {
            cy += step_y;
            t_max_y += t_dy;
        } else {  // exact corner crossing: include both side cells
            out.emplace_back(cx + step_x, cy);
            out.emplace_back(cx, cy + step_y);
            cx += step_x;
            cy += step_y;
            t_max_x += t_dx;
            t_max_y += t_dy;
        }
    }
    return out;
}

bool line_of_sight(const SceneMap& scene, Vec2 a, Vec2 b, double radius) {
    if (radius <= 0) {
        for (auto [cx, cy] : supercover_cells(scene, a, b))
            if (scene.occupied(cx, cy)) return false;
        return true;
    }
    const double cs = scene.cell_size;
    int x0 = std::max(0, scene.cell_x(std::min(a.x, b.x) - radius));
    int x1 = std::min(scene.width - 1, scene.cell_x(std::max(a.x, b.x) + radius));
    int y0 = std::max(0, scene.cell_y(std::min(a.y, b.y) - radius));
    int y1 = std::min(scene.height - 1, scene.cell_y(std::max(a.y, b.y) + radius));
    constexpr double kGrazeEps = 1e-9;
    for (int cy = y0; cy <= y1; ++cy)
        for (int cx = x0; cx <= x1; ++cx) {
            if (!scene.occupied(cx, cy)) continue;
            double d = segment_rect_dist(a, b, cx * cs, cy * cs, (cx + 1) * cs, (cy + 1) * cs);
            if (d < radius - kGrazeEps) return false;
        }
    return true;
}

std::string scene_to_json(const SceneMap& scene) {
    nlohmann::ordered_json j;
    j["scene_id"] = scene.scene_id;
    j["cell_size"] = round_sig9(scene.cell_size);
    j["width"] = scene.width;
    j["height"] = scene.height;
    std::vector<std::string> rows;
    rows.reserve(scene.height);
    for (int y = 0; y < scene.height; ++y) {
        std::string row(scene.width, '.');
        for (int x = 0; x < scene.width; ++x)
            if (scene.occupied(x, y)) row[x] = '#';
        rows.push_back(std::move(row));
    }
    j["occupancy"] = rows;
    j["signs"] = nlohmann::ordered_json::array();
    for (const auto& s : scene.signs) {
        nlohmann::ordered_json js;
        js["sign_id"] = s.sign_id;
        js["position"] = {round_sig9(s.position.x), round_sig9(s.position.y)};
        js["normal"] = round_sig9(s.normal);
        nlohmann::ordered_json arrows = nlohmann::ordered_json::object();
        for (const auto& [gid, dir] : s.arrows) arrows[gid] = to_string(dir);
        js["arrows"] = arrows;
        js["quad_width"] = round_sig9(s.quad_width);
        js["mount_height_frac"] = round_sig9(s.mount_height_frac);
        j["signs"].push_back(js);
    }
    j["goals"] = nlohmann::ordered_json::array();
    for (const auto& g : scene.goals) {
        nlohmann::ordered_json jg;
        jg["goal_id"] = g.goal_id;
        jg["position"] = {round_sig9(g.position.x), round_sig9(g.position.y)};
        j["goals"].push_back(jg);
    }
    return j.dump(1);
}

SceneMap scene_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("scene file: invalid JSON: ") + e.what());
    }
    SceneMap scene;
    try {
        scene.scene_id = j.at("scene_id").get<std::string>();
        scene.cell_size = j.at("cell_size").get<double>();
        scene.width = j.at("width").get<int>();
        scene.height = j.at("height").get<int>();
        const auto& rows = j.at("occupancy");
        if (static_cast<int>(rows.size()) != scene.height)
            throw ValidationError("scene field occupancy: row count != height");
        scene.occupancy.assign(static_cast<size_t>(scene.width) * scene.height, 0);
        for (int y = 0; y < scene.height; ++y) {
            const auto row = rows.at(y).get<std::string>();
            if (static_cast<int>(row.size()) != scene.width)
                throw ValidationError("scene field occupancy: row " + std::to_string(y) +
                                      " length != width");
            for (int x = 0; x < scene.width; ++x) {
                char c = row[x];
                if (c != '#' && c != '.')
                    throw ValidationError("scene field occupancy: invalid character '" +
                                          std::string(1, c) + "'");
                scene.occupancy[static_cast<size_t>(y) * scene.width + x] = (c == '#');
            }
        }
        for (const auto& js : j.value("signs", nlohmann::json::array())) {
            Sign s;
            s.sign_id = js.at("sign_id").get<std::string>();
            s.position = {js.at("position").at(0).get<double>(),
                          js.at("position").at(1).get<double>()};
            s.normal = js.at("normal").get<double>();
            if (js.contains("arrows"))
                for (const auto& [gid, val] : js.at("arrows").items()) {
                    auto dir = arrow_from_string(val.get<std::string>());
                    if (!dir)
                        throw ValidationError("scene field signs.arrows: invalid direction '" +
                                              val.get<std::string>() + "'");
                    s.arrows[gid] = *dir;
                }
            s.quad_width = js.value("quad_width", 0.5);
            s.mount_height_frac = js.value("mount_height_frac", 0.6);
            scene.signs.push_back(std::move(s));
        }
        for (const auto& jg : j.value("goals", nlohmann::json::array())) {
            Goal g;
            g.goal_id = jg.at("goal_id").get<std::string>();
            g.position = {jg.at("position").at(0).get<double>(),
                          jg.at("position").at(1).get<double>()};
            scene.goals.push_back(std::move(g));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("scene file: missing or mistyped field: ") + e.what());
    }
    validate_scene(scene);
    return scene;
}

void save_scene(const SceneMap& scene, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write scene file: " + path);
    out << scene_to_json(scene);
    out << "\n";
}

SceneMap load_scene(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read scene file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return scene_from_json(ss.str());
}

}  // namespace signav
