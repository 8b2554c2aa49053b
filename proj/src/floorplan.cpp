#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "signav/error.hpp"
#include "signav/rng.hpp"
#include "signav/scene.hpp"
#include "signav/util.hpp"

namespace signav {

namespace {

struct CellRect {  // half-open [x0,x1) x [y0,y1)
    int x0, y0, x1, y1;
};

void carve(SceneMap& s, const CellRect& r) {
    for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x)
            s.occupancy[static_cast<size_t>(y) * s.width + x] = 0;
}

bool any_free(const SceneMap& s, const CellRect& r) {
    for (int y = std::max(0, r.y0); y < std::min(s.height, r.y1); ++y)
        for (int x = std::max(0, r.x0); x < std::min(s.width, r.x1); ++x)
            if (!s.occupied(x, y)) return true;
    return false;
}

size_t flood_count(const SceneMap& s, int sx, int sy) {
    std::vector<uint8_t> seen(s.occupancy.size(), 0);
    std::vector<std::pair<int, int>> stack{{sx, sy}};
    seen[static_cast<size_t>(sy) * s.width + sx] = 1;
    size_t count = 0;
    while (!stack.empty()) {
        auto [x, y] = stack.back();
        stack.pop_back();
        ++count;
        const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
            int nx = x + dx[k], ny = y + dy[k];
            if (nx < 0 || ny < 0 || nx >= s.width || ny >= s.height) continue;
            size_t i = static_cast<size_t>(ny) * s.width + nx;
            if (!s.occupancy[i] && !seen[i]) {
                seen[i] = 1;
                stack.emplace_back(nx, ny);
            }
        }
    }
    return count;
}

}  // namespace

SceneMap gen_floorplan(uint64_t seed, const FloorplanParams& params) {
    const double cs = params.cell_size;
    if (cs <= 0) throw ValidationError("floorplan cell_size must be positive");
    if (params.corridor_width + 4 * cs > params.extent)
        throw ValidationError("corridor does not fit within extent");
    if (params.corridor_width < 3 * 2 * kAgentRadius)
        throw ValidationError("corridor_width must be at least three agent diameters");
    if (params.extent < 10.0) throw ValidationError("extent must be at least 10 m");
    if (params.min_rooms < 2 || params.max_rooms < params.min_rooms)
        throw ValidationError("room count range invalid (need min_rooms >= 2, max >= min)");

    const int n = static_cast<int>(std::llround(params.extent / cs));
    const int wc = std::max(1, static_cast<int>(std::llround(params.corridor_width / cs)));

    SceneMap scene;
    scene.scene_id = "scene-" + [&] {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(seed));
        return std::string(buf);
    }();
    scene.cell_size = cs;
    scene.width = n;
    scene.height = n;
    scene.occupancy.assign(static_cast<size_t>(n) * n, 1);

    Rng rng(derive_seed(seed, "floorplan", 0));

    // Ladder topology: nh full-span horizontal corridors joined by vertical
    // stems between adjacent pairs. Stems make T junctions, which are the
    // decision points where signage matters.
    const int mx = std::max(2, static_cast<int>(std::llround(1.5 / cs)));  // end margin cells
    const int nh = (params.extent >= 28.0) ? rng.range(2, 3) : 2;

    std::vector<int> cy(nh);  // corridor center rows
    for (int i = 0; i < nh; ++i) {
        int base = static_cast<int>(std::llround(static_cast<double>(n) * (i + 1) / (nh + 1)));
        int jitter = rng.range(-n / 25, n / 25);
        cy[i] = std::clamp(base + jitter, mx + wc, n - mx - wc);
    }
    std::sort(cy.begin(), cy.end());

    std::vector<CellRect> h_corr(nh);
    for (int i = 0; i < nh; ++i) {
        h_corr[i] = {mx, cy[i] - wc / 2, n - mx, cy[i] - wc / 2 + wc};
        carve(scene, h_corr[i]);
    }

    struct Stem {
        int cx;      // center column
        int lo, hi;  // joins h_corr[lo] and h_corr[hi] (hi = lo+1)
        CellRect rect;
    };
    std::vector<Stem> stems;
    for (int g = 0; g + 1 < nh; ++g) {
        int ns = rng.range(2, 3);
        for (int k = 0; k < ns; ++k) {
            int base = static_cast<int>(std::llround(static_cast<double>(n) * (k + 1) / (ns + 1)));
            int jitter = rng.range(-n / 20, n / 20);
            int cx = std::clamp(base + jitter, mx + wc, n - mx - wc);
            bool clash = false;
            for (const auto& st : stems)
                if (st.lo == g && std::abs(st.cx - cx) < 3 * wc) clash = true;
            if (clash) continue;
            Stem st;
            st.cx = cx;
            st.lo = g;
            st.hi = g + 1;
            st.rect = {cx - wc / 2, cy[g], cx - wc / 2 + wc, cy[g + 1]};
            carve(scene, st.rect);
            stems.push_back(st);
        }
    }
    if (stems.empty()) throw InternalError("floorplan: no stems placed");

    // Signs first, so room doors can be forbidden from knocking out their wall
    // cells. T junctions get a sign on the far wall of the horizontal corridor
    // (facing back up the stem); corridor dead ends get one facing back along
    // the corridor.
    struct PendingSign {
        Vec2 pos;
        double normal;
        std::pair<int, int> wall_cell;
    };
    std::vector<PendingSign> pending;
    std::set<std::pair<int, int>> sign_walls;
    auto add_sign = [&](Vec2 pos, double normal, int wx, int wy) {
        if (!scene.occupied(wx, wy)) return;                     // opening, not a wall
        if (!sign_walls.insert({wx, wy}).second) return;         // dedupe
        pending.push_back({pos, wrap_angle(normal), {wx, wy}});
    };
    for (const auto& st : stems) {
        // At the lower corridor: far wall is below it.
        int wall_y = h_corr[st.lo].y0 - 1;
        add_sign({(st.cx + 0.5) * cs, h_corr[st.lo].y0 * cs}, kPi / 2, st.cx, wall_y);
        // At the upper corridor: far wall is above it.
        wall_y = h_corr[st.hi].y1;
        add_sign({(st.cx + 0.5) * cs, h_corr[st.hi].y1 * cs}, -kPi / 2, st.cx, wall_y);
    }
    for (int i = 0; i < nh; ++i) {
        int row = cy[i];
        add_sign({mx * cs, (row + 0.5) * cs}, 0.0, mx - 1, row);
        add_sign({(n - mx) * cs, (row + 0.5) * cs}, kPi, n - mx, row);
    }

    // Rooms attach above/below a horizontal corridor, one wall cell apart,
    // with a door carved through that wall.
    const int door_w = std::max(3, static_cast<int>(std::llround(1.2 / cs)));
    struct Room {
        CellRect rect;
    };
    std::vector<Room> rooms;
    int want_rooms = rng.range(params.min_rooms, params.max_rooms);
    int attempts = 0;
    while (static_cast<int>(rooms.size()) < want_rooms && attempts < 120) {
        ++attempts;
        int ci = rng.range(0, nh - 1);
        bool below = rng.below(2) == 0;
        int rw = rng.range(static_cast<int>(2.5 / cs), static_cast<int>(5.0 / cs));
        int rd = rng.range(static_cast<int>(2.5 / cs), static_cast<int>(4.5 / cs));
        int x0 = rng.range(mx, n - mx - rw);
        CellRect r;
        if (below)
            r = {x0, h_corr[ci].y0 - 1 - rd, x0 + rw, h_corr[ci].y0 - 1};
        else
            r = {x0, h_corr[ci].y1 + 1, x0 + rw, h_corr[ci].y1 + 1 + rd};
        if (r.y0 < 1 || r.y1 > n - 1 || r.x0 < 1 || r.x1 > n - 1) continue;
        CellRect shell{r.x0 - 1, r.y0 - 1, r.x1 + 1, r.y1 + 1};
        if (any_free(scene, shell)) continue;
        // Door through the wall row between room and corridor.
        int dx0 = rng.range(r.x0, r.x1 - door_w);
        int wall_row = below ? h_corr[ci].y0 - 1 : h_corr[ci].y1;
        bool hits_sign = false;
        for (int x = dx0; x < dx0 + door_w; ++x)
            if (sign_walls.count({x, wall_row})) hits_sign = true;
        if (hits_sign) continue;
        carve(scene, r);
        carve(scene, {dx0, wall_row, dx0 + door_w, wall_row + 1});
        rooms.push_back({r});
    }
    if (rooms.size() < 2) throw ValidationError("rooms cannot fit within extent");

    for (size_t i = 0; i < rooms.size(); ++i) {
        const auto& r = rooms[i].rect;
        Goal g;
        g.goal_id = "G" + std::to_string(i);
        g.position = {round_sig9((r.x0 + r.x1) * 0.5 * cs), round_sig9((r.y0 + r.y1) * 0.5 * cs)};
        scene.goals.push_back(g);
    }

    int sidx = 0;
    for (const auto& p : pending) {
        Sign s;
        s.sign_id = "S" + std::to_string(sidx++);
        s.position = {round_sig9(p.pos.x), round_sig9(p.pos.y)};
        s.normal = round_sig9(p.normal);
        scene.signs.push_back(std::move(s));
    }

    size_t free_total = 0;
    for (auto c : scene.occupancy) free_total += (c == 0);
    int fx = h_corr[0].x0, fy = h_corr[0].y0;
    if (flood_count(scene, fx, fy) != free_total)
        throw InternalError("floorplan: free space is disconnected");

    validate_scene(scene);
    return scene;
}

}  // namespace signav
