#include "signav/path.hpp"

#include <algorithm>
#include <cmath>

#include "signav/error.hpp"

namespace signav {

namespace {

constexpr double kSpacing = 0.05;

// Barry-Goldman evaluation of one centripetal Catmull-Rom segment p1..p2 at
// u in [0,1]. Degenerate knot intervals (duplicated endpoints) get an epsilon.
Vec2 catmull_rom(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3, double u) {
    auto knot = [](Vec2 a, Vec2 b) { return std::max(std::sqrt(dist(a, b)), 1e-9); };
    double t0 = 0;
    double t1 = t0 + knot(p0, p1);
    double t2 = t1 + knot(p1, p2);
    double t3 = t2 + knot(p2, p3);
    double t = t1 + u * (t2 - t1);
    auto lerp = [](Vec2 a, Vec2 b, double ta, double tb, double t) {
        double w = (t - ta) / (tb - ta);
        return a * (1 - w) + b * w;
    };
    Vec2 a1 = lerp(p0, p1, t0, t1, t);
    Vec2 a2 = lerp(p1, p2, t1, t2, t);
    Vec2 a3 = lerp(p2, p3, t2, t3, t);
    Vec2 b1 = lerp(a1, a2, t0, t2, t);
    Vec2 b2 = lerp(a2, a3, t1, t3, t);
    return lerp(b1, b2, t1, t2, t);
}

std::vector<Vec2> resample(const std::vector<Vec2>& dense) {
    std::vector<double> cum(dense.size(), 0.0);
    for (size_t i = 1; i < dense.size(); ++i) cum[i] = cum[i - 1] + dist(dense[i - 1], dense[i]);
    double total = cum.back();
    std::vector<Vec2> out;
    out.push_back(dense.front());
    size_t seg = 0;
    for (double s = kSpacing; s < total; s += kSpacing) {
        while (seg + 1 < dense.size() && cum[seg + 1] < s) ++seg;
        double d = cum[seg + 1] - cum[seg];
        double w = d > 0 ? (s - cum[seg]) / d : 0.0;
        out.push_back(dense[seg] * (1 - w) + dense[seg + 1] * w);
    }
    if (out.size() > 1 && dist(out.back(), dense.back()) < kSpacing / 2) out.pop_back();
    out.push_back(dense.back());
    return out;
}

}  // namespace

SmoothPath smooth_path(const SceneMap& scene, const std::vector<Vec2>& waypoints) {
    if (waypoints.size() < 2) throw UsageError("smooth_path: need at least 2 waypoints");
    auto clearance = clearance_field(scene);
    const int m = static_cast<int>(waypoints.size());

    // Spline knots: the endpoints plus the midpoint of every polyline edge.
    // Interior corners are not knots, so the curve rounds them off (shorter
    // than the polyline) instead of passing through them.
    std::vector<Vec2> knots;
    knots.push_back(waypoints[0]);
    for (int i = 0; i + 1 < m; ++i) knots.push_back((waypoints[i] + waypoints[i + 1]) * 0.5);
    knots.push_back(waypoints[m - 1]);
    const int nk = static_cast<int>(knots.size());

    auto knot = [&](int i) {  // duplicated endpoints
        return knots[std::clamp(i, 0, nk - 1)];
    };

    SmoothPath sp;
    std::vector<Vec2> dense;
    for (int i = 0; i + 1 < nk; ++i) {
        Vec2 p0 = knot(i - 1), p1 = knot(i), p2 = knot(i + 1), p3 = knot(i + 2);
        int subdiv = std::max(16, static_cast<int>(std::ceil(dist(p1, p2) / 0.01)));
        std::vector<Vec2> seg;
        for (int k = (i == 0 ? 0 : 1); k <= subdiv; ++k)
            seg.push_back(catmull_rom(p0, p1, p2, p3, static_cast<double>(k) / subdiv));
        bool ok = true;
        for (const auto& q : resample([&] {
                 std::vector<Vec2> with_start = seg;
                 if (i != 0) with_start.insert(with_start.begin(), p1);
                 return with_start;
             }()))
            if (point_clearance(scene, clearance, q) < kAgentRadius) ok = false;
        if (!ok) {
            // Fall back to the polyline route between these knots: knots
            // 1..nk-2 are edge midpoints, so interior pairs run through the
            // original corner waypoint (which has LOS to both by contract).
            sp.fallback_segments.push_back(i);
            seg.clear();
            std::vector<Vec2> route{p1};
            if (i >= 1 && i + 2 < nk) route.push_back(waypoints[i]);
            route.push_back(p2);
            for (size_t leg = 0; leg + 1 < route.size(); ++leg) {
                int sub = std::max(8, static_cast<int>(std::ceil(dist(route[leg],
                                                                      route[leg + 1]) / 0.01)));
                int k0 = (leg == 0 && i == 0) ? 0 : 1;
                for (int k = k0; k <= sub; ++k) {
                    double w = static_cast<double>(k) / sub;
                    seg.push_back(route[leg] * (1 - w) + route[leg + 1] * w);
                }
            }
        }
        dense.insert(dense.end(), seg.begin(), seg.end());
    }

    sp.points = resample(dense);
    const auto& pts = sp.points;
    sp.tangents.resize(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
        Vec2 d;
        if (i == 0)
            d = pts[1] - pts[0];
        else if (i + 1 == pts.size())
            d = pts[i] - pts[i - 1];
        else
            d = pts[i + 1] - pts[i - 1];
        double n = d.norm();
        sp.tangents[i] = n > 0 ? d * (1.0 / n) : Vec2{1, 0};
    }
    return sp;
}

}  // namespace signav
