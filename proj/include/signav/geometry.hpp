#pragma once

#include <cmath>

namespace signav {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

struct Vec2 {
    double x = 0;
    double y = 0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double norm() const { return std::sqrt(x * x + y * y); }
    double norm2() const { return x * x + y * y; }
    Vec2 normalized() const {
        double n = norm();
        return n > 0 ? Vec2{x / n, y / n} : Vec2{0, 0};
    }
    // 90 degrees counterclockwise.
    Vec2 perp() const { return {-y, x}; }
};

inline double dist(Vec2 a, Vec2 b) { return (a - b).norm(); }
inline double dot(Vec2 a, Vec2 b) { return a.dot(b); }

// Wrap into [0, 2*pi).
inline double wrap_angle(double a) {
    a = std::fmod(a, kTwoPi);
    if (a < 0) a += kTwoPi;
    if (a >= kTwoPi) a = 0;  // fmod can land exactly on 2*pi after the add
    return a;
}

// Wrap into [-pi, pi).
inline double wrap_signed(double a) {
    a = std::fmod(a + kPi, kTwoPi);
    if (a < 0) a += kTwoPi;
    return a - kPi;
}

// theta = 0 faces +x, counterclockwise positive, normalized to [0, 2*pi).
struct Pose {
    double x = 0;
    double y = 0;
    double theta = 0;

    Vec2 position() const { return {x, y}; }
    Vec2 heading() const { return {std::cos(theta), std::sin(theta)}; }
};

// Distance from point p to segment [a, b].
inline double point_segment_dist(Vec2 p, Vec2 a, Vec2 b) {
    Vec2 ab = b - a;
    double len2 = ab.norm2();
    if (len2 == 0) return dist(p, a);
    double t = (p - a).dot(ab) / len2;
    t = t < 0 ? 0 : (t > 1 ? 1 : t);
    return dist(p, a + ab * t);
}

// Distance from segment [a, b] to the axis-aligned rectangle [x0,x1]x[y0,y1].
// Zero when they intersect.
inline double segment_rect_dist(Vec2 a, Vec2 b, double x0, double y0, double x1, double y1) {
    auto inside = [&](Vec2 p) { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; };
    if (inside(a) || inside(b)) return 0.0;

    Vec2 c[4] = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
    auto seg_seg_intersect = [](Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
        auto cross = [](Vec2 u, Vec2 v) { return u.x * v.y - u.y * v.x; };
        double d1 = cross(q2 - q1, p1 - q1);
        double d2 = cross(q2 - q1, p2 - q1);
        double d3 = cross(p2 - p1, q1 - p1);
        double d4 = cross(p2 - p1, q2 - p1);
        if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
            ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
            return true;
        auto on = [&](Vec2 p, Vec2 q, Vec2 r) {  // r collinear with pq and within bbox
            return std::min(p.x, q.x) <= r.x && r.x <= std::max(p.x, q.x) &&
                   std::min(p.y, q.y) <= r.y && r.y <= std::max(p.y, q.y);
        };
        if (d1 == 0 && on(q1, q2, p1)) return true;
        if (d2 == 0 && on(q1, q2, p2)) return true;
        if (d3 == 0 && on(p1, p2, q1)) return true;
        if (d4 == 0 && on(p1, p2, q2)) return true;
        return false;
    };
    for (int i = 0; i < 4; ++i)
        if (seg_seg_intersect(a, b, c[i], c[(i + 1) % 4])) return 0.0;

    // Disjoint: min over segment-to-edge distances.
    auto seg_seg_dist = [&](Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
        double d = point_segment_dist(p1, q1, q2);
        d = std::min(d, point_segment_dist(p2, q1, q2));
        d = std::min(d, point_segment_dist(q1, p1, p2));
        d = std::min(d, point_segment_dist(q2, p1, p2));
        return d;
    };
    double best = seg_seg_dist(a, b, c[0], c[1]);
    for (int i = 1; i < 4; ++i) best = std::min(best, seg_seg_dist(a, b, c[i], c[(i + 1) % 4]));
    return best;
}

}  // namespace signav
