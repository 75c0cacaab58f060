#include "svf/math.hpp"

namespace svf {

bool intersect_aabb(const AABB& box, const Vec3& origin, const Vec3& dir,
                    double t0, double t1, double& tmin, double& tmax) {
  tmin = t0;
  tmax = t1;
  for (int a = 0; a < 3; ++a) {
    double inv = 1.0 / dir[a];
    double near = (box.lo[a] - origin[a]) * inv;
    double far = (box.hi[a] - origin[a]) * inv;
    if (inv < 0.0) std::swap(near, far);
    tmin = std::max(tmin, near);
    tmax = std::min(tmax, far);
    if (tmin > tmax) return false;
  }
  return true;
}

} // namespace svf
