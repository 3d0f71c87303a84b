#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace thermoforge {

using NodeId = std::int32_t;
using ElementId = std::int32_t;

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

// Local face index convention: 0:-x 1:+x 2:-y 3:+y 4:-z 5:+z.
struct FaceKey {
    ElementId element = -1;
    int local_face = -1;

    bool operator==(const FaceKey& o) const {
        return element == o.element && local_face == o.local_face;
    }
    bool operator<(const FaceKey& o) const {
        return element != o.element ? element < o.element : local_face < o.local_face;
    }
};

class SimulationError : public std::runtime_error {
public:
    explicit SimulationError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace thermoforge
