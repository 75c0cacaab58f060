#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace svf {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  double& operator[](int i) { return (&x)[i]; }
  double operator[](int i) const { return (&x)[i]; }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }
inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double length(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalized(const Vec3& v) {
  double len = length(v);
  return len > 0.0 ? v / len : Vec3{0, 0, 0};
}
inline Vec3 cmul(const Vec3& a, const Vec3& b) { return {a.x * b.x, a.y * b.y, a.z * b.z}; }
inline double max_abs_component(const Vec3& v) {
  return std::max({std::fabs(v.x), std::fabs(v.y), std::fabs(v.z)});
}

struct AABB {
  Vec3 lo{0, 0, 0};
  Vec3 hi{0, 0, 0};

  Vec3 center() const { return (lo + hi) * 0.5; }
  Vec3 extent() const { return hi - lo; }
  bool contains(const Vec3& p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z;
  }
  static AABB cube(const Vec3& center, double half) {
    return {center - Vec3{half, half, half}, center + Vec3{half, half, half}};
  }
};

// Slab test; returns false on miss. tmin/tmax clamped to [t0, t1].
bool intersect_aabb(const AABB& box, const Vec3& origin, const Vec3& dir,
                    double t0, double t1, double& tmin, double& tmax);

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }
inline double sqr(double v) { return v * v; }

constexpr double kPi = 3.14159265358979323846;

} // namespace svf
