#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "thermoforge/core.hpp"
#include "thermoforge/mesh.hpp"

namespace thermoforge {

struct ToolpathSegment {
    double t_start = 0.0, t_end = 0.0;
    Vec3 p_start, p_end;
    bool laser_on = false;

    Vec3 position_at(double t) const {
        double span = t_end - t_start;
        double s = span > 0 ? (t - t_start) / span : 0.0;
        return p_start + (p_end - p_start) * s;
    }
};

enum class ScanStrategy { ZigZag, InwardFromBoundary };

struct Toolpath {
    std::vector<ToolpathSegment> segments;
    double scan_speed = 0.0;
    double layer_dwell = 0.0;

    double end_time() const { return segments.empty() ? 0.0 : segments.back().t_end; }
};

struct BirthSchedule {
    // element id -> first time step at which the element is active.
    std::vector<int> birth_step;
};

namespace detail {

struct LayerCells {
    int layer = 0;                          // build lattice k
    std::vector<std::array<int, 2>> cells;  // (i, j)
};

inline std::vector<LayerCells> build_layers(const HexMesh& mesh) {
    std::map<int, std::vector<std::array<int, 2>>> by_k;
    for (std::size_t e = 0; e < mesh.n_elements(); ++e)
        if (mesh.element_tag[e] == ElementTag::Build)
            by_k[mesh.elem_coord[e][2]].push_back(
                {mesh.elem_coord[e][0], mesh.elem_coord[e][1]});
    std::vector<LayerCells> layers;
    for (auto& [k, cells] : by_k) layers.push_back({k, std::move(cells)});
    return layers;
}

inline Vec3 cell_top_center(const HexMesh& mesh, int i, int j, int k) {
    return {(i + 0.5) * mesh.element_size.x, (j + 0.5) * mesh.element_size.y,
            (k + 1.0) * mesh.element_size.z};
}

// Groups a layer's visit order into polyline legs; consecutive cells in the
// same leg are laser-on neighbors.
using VisitOrder = std::vector<std::vector<std::array<int, 2>>>;

inline VisitOrder zigzag_order(std::vector<std::array<int, 2>> cells) {
    std::map<int, std::vector<int>> rows;
    for (auto& c : cells) rows[c[1]].push_back(c[0]);
    VisitOrder legs;
    int row_idx = 0;
    for (auto& [j, is] : rows) {
        std::sort(is.begin(), is.end());
        if (row_idx % 2 == 1) std::reverse(is.begin(), is.end());
        std::vector<std::array<int, 2>> leg;
        for (int i : is) leg.push_back({i, j});
        legs.push_back(std::move(leg));
        ++row_idx;
    }
    return legs;
}

inline VisitOrder inward_spiral_order(std::vector<std::array<int, 2>> cells) {
    int i0 = cells[0][0], i1 = cells[0][0], j0 = cells[0][1], j1 = cells[0][1];
    for (auto& c : cells) {
        i0 = std::min(i0, c[0]); i1 = std::max(i1, c[0]);
        j0 = std::min(j0, c[1]); j1 = std::max(j1, c[1]);
    }
    VisitOrder legs;
    while (i0 <= i1 && j0 <= j1) {
        std::vector<std::array<int, 2>> ring;
        for (int i = i0; i <= i1; ++i) ring.push_back({i, j0});
        for (int j = j0 + 1; j <= j1; ++j) ring.push_back({i1, j});
        if (j1 > j0)
            for (int i = i1 - 1; i >= i0; --i) ring.push_back({i, j1});
        if (i1 > i0)
            for (int j = j1 - 1; j > j0; --j) ring.push_back({i0, j});
        legs.push_back(std::move(ring));
        i0 += 1; i1 -= 1; j0 += 1; j1 -= 1;
    }
    return legs;
}

}  // namespace detail

inline Toolpath generate_toolpath(const HexMesh& mesh, ScanStrategy strategy,
                                  double scan_speed, double layer_dwell) {
    require(scan_speed > 0, "generate_toolpath: scan_speed must be > 0");
    require(layer_dwell >= 0, "generate_toolpath: layer_dwell must be >= 0");
    auto layers = detail::build_layers(mesh);
    require(!layers.empty(), "generate_toolpath: mesh has no build elements");

    Toolpath path;
    path.scan_speed = scan_speed;
    path.layer_dwell = layer_dwell;
    // Minimum dwell for a zero-length leg: time to traverse one element.
    const double spot_dwell = mesh.element_size.x / scan_speed;

    double t = 0.0;
    std::optional<Vec3> cursor;
    for (const auto& layer : layers) {
        auto order = strategy == ScanStrategy::ZigZag
                         ? detail::zigzag_order(layer.cells)
                         : detail::inward_spiral_order(layer.cells);
        bool first_leg_of_layer = true;
        for (const auto& leg : order) {
            Vec3 start = detail::cell_top_center(mesh, leg[0][0], leg[0][1], layer.layer);
            if (cursor) {
                // Laser-off connector (adds layer dwell when changing layers).
                double travel = (start - *cursor).norm() / scan_speed;
                if (first_leg_of_layer) travel += layer_dwell;
                if (travel <= 0) travel = spot_dwell;
                path.segments.push_back({t, t + travel, *cursor, start, false});
                t += travel;
            }
            Vec3 prev = start;
            for (std::size_t c = 1; c < leg.size(); ++c) {
                Vec3 next = detail::cell_top_center(mesh, leg[c][0], leg[c][1], layer.layer);
                double dt_leg = (next - prev).norm() / scan_speed;
                path.segments.push_back({t, t + dt_leg, prev, next, true});
                t += dt_leg;
                prev = next;
            }
            if (leg.size() == 1) {
                path.segments.push_back({t, t + spot_dwell, start, start, true});
                t += spot_dwell;
            }
            cursor = prev;
            first_leg_of_layer = false;
        }
    }
    return path;
}

// Boundary instants belong to the later segment; t = end time returns the
// final waypoint with the last segment's laser state.
inline std::pair<Vec3, bool> laser_state_at(const Toolpath& path, double t) {
    require(!path.segments.empty(), "laser_state_at: empty toolpath");
    if (t < 0.0 || t > path.end_time())
        throw std::out_of_range("laser_state_at: t outside toolpath time range");
    auto it = std::upper_bound(
        path.segments.begin(), path.segments.end(), t,
        [](double tv, const ToolpathSegment& s) { return tv < s.t_end; });
    if (it == path.segments.end()) it = std::prev(path.segments.end());
    return {it->position_at(t), it->laser_on};
}

namespace detail {

// Earliest time a linearly moving point enters the axis-aligned box
// |p - c| <= half (componentwise, x/y only), or nullopt.
inline std::optional<double> segment_box_entry(const ToolpathSegment& seg, Vec3 c,
                                               double hx, double hy) {
    double lo = 0.0, hi = 1.0;
    const double a[2] = {seg.p_start.x, seg.p_start.y};
    const double b[2] = {seg.p_end.x, seg.p_end.y};
    const double cc[2] = {c.x, c.y};
    const double h[2] = {hx, hy};
    for (int ax = 0; ax < 2; ++ax) {
        double d = b[ax] - a[ax];
        double min_c = cc[ax] - h[ax], max_c = cc[ax] + h[ax];
        if (std::abs(d) < 1e-30) {
            if (a[ax] < min_c || a[ax] > max_c) return std::nullopt;
        } else {
            double s0 = (min_c - a[ax]) / d, s1 = (max_c - a[ax]) / d;
            if (s0 > s1) std::swap(s0, s1);
            lo = std::max(lo, s0);
            hi = std::min(hi, s1);
            if (lo > hi) return std::nullopt;
        }
    }
    return seg.t_start + lo * (seg.t_end - seg.t_start);
}

}  // namespace detail

// birth step = floor(t_visit / dt), where t_visit is the first time a laser-on
// segment in the element's own layer passes within half an element of its
// top-center. Substrate elements are born at step 0.
inline BirthSchedule birth_schedule(const HexMesh& mesh, const Toolpath& path,
                                    double dt) {
    require(dt > 0, "birth_schedule: dt must be > 0");
    BirthSchedule sched;
    sched.birth_step.assign(mesh.n_elements(), 0);
    const double hx = 0.5 * mesh.element_size.x + 1e-12;
    const double hy = 0.5 * mesh.element_size.y + 1e-12;
    const double ztol = 0.5 * mesh.element_size.z;
    std::vector<ElementId> uncovered;
    for (std::size_t e = 0; e < mesh.n_elements(); ++e) {
        if (mesh.element_tag[e] != ElementTag::Build) continue;
        Vec3 c = detail::cell_top_center(mesh, mesh.elem_coord[e][0],
                                         mesh.elem_coord[e][1], mesh.elem_coord[e][2]);
        std::optional<double> visit;
        for (const auto& seg : path.segments) {
            if (!seg.laser_on) continue;
            if (std::abs(seg.p_start.z - c.z) > ztol) continue;
            if (auto tv = detail::segment_box_entry(seg, c, hx, hy)) {
                visit = *tv;
                break;
            }
        }
        if (!visit) {
            uncovered.push_back(static_cast<ElementId>(e));
            continue;
        }
        sched.birth_step[e] = static_cast<int>(std::floor(*visit / dt));
    }
    if (!uncovered.empty()) {
        std::string msg = "birth_schedule: toolpath never covers build element(s)";
        for (ElementId e : uncovered) msg += " " + std::to_string(e);
        throw SimulationError(msg);
    }
    return sched;
}

inline std::string toolpath_csv(const Toolpath& path) {
    std::string out = "t_start,t_end,x0,y0,z0,x1,y1,z1,on\n";
    char buf[256];
    for (const auto& s : path.segments) {
        std::snprintf(buf, sizeof(buf),
                      "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                      s.t_start, s.t_end, s.p_start.x, s.p_start.y, s.p_start.z,
                      s.p_end.x, s.p_end.y, s.p_end.z, s.laser_on ? 1 : 0);
        out += buf;
    }
    return out;
}

inline std::string birth_csv(const BirthSchedule& sched) {
    std::string out = "element_id,birth_step\n";
    for (std::size_t e = 0; e < sched.birth_step.size(); ++e)
        out += std::to_string(e) + "," + std::to_string(sched.birth_step[e]) + "\n";
    return out;
}

}  // namespace thermoforge
