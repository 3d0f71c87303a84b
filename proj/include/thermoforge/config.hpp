#pragma once

#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "thermoforge/core.hpp"
#include "thermoforge/design.hpp"
#include "thermoforge/fem.hpp"
#include "thermoforge/mesh.hpp"
#include "thermoforge/toolpath.hpp"

namespace thermoforge {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    // [mesh]
    std::string mesh_kind = "hourglass";  // hourglass | block
    std::vector<int> layer_half_widths = {4, 3, 2, 3, 4};
    int substrate_nx = 6, substrate_ny = 6, substrate_nz = 1;
    int block_nx = 3, block_ny = 3, block_nz = 2;
    double element_size = 1e-3;  // m, cubic cells

    // [path]
    std::string strategy = "zigzag";  // zigzag | inward
    double scan_speed = 0.01;         // m/s
    double layer_dwell = 0.0;         // s

    // [material]
    MaterialParams material;

    // [laser]
    LaserParams laser;

    // [sim]
    double dt = 0.0;  // 0 = auto (half the stability limit)
    int n_steps = 0;  // 0 = auto (cover the toolpath)
    int record_stride = 1;
    bool deterministic = true;
    bool allow_unstable = false;

    // [optimize]
    int case_id = 1;
    int iterations = 60;
    double lr = 0.0;  // 0 = per-case default (0.05 case 1, 1e-2 cases 2-3)
    std::uint64_t seed = 0;
    double init_lo = 0.5, init_hi = 1.5;
    double target_depth = 0.0;
    double delta_clamp = 1e-6;

    // [output]
    std::string output_dir = "out";
};

namespace config_detail {

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

struct KeyHandler {
    std::function<void(const std::string&)> set;
};

template <typename T>
T parse_number(const std::string& v) {
    std::istringstream ss(v);
    T out;
    ss >> out;
    if (ss.fail()) throw std::invalid_argument("not a number: '" + v + "'");
    auto pos = ss.tellg();  // -1 once eof is reached (all input consumed)
    std::size_t consumed = pos == -1 ? v.size() : static_cast<std::size_t>(pos);
    if (!trim(v.substr(consumed)).empty())
        throw std::invalid_argument("not a number: '" + v + "'");
    return out;
}

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("not a boolean: '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& v) {
    std::vector<int> out;
    std::istringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(trim(item)));
    if (out.empty()) throw std::invalid_argument("empty list");
    return out;
}

}  // namespace config_detail

// Strict flat INI: [section] headers, key = value pairs, '#' comments.
// Unknown sections or keys are hard errors with the offending line number.
inline RunConfig parse_config_text(const std::string& text) {
    using namespace config_detail;
    RunConfig c;
    std::map<std::string, std::map<std::string, KeyHandler>> schema;
    auto num = [](double& field) {
        return KeyHandler{[&field](const std::string& v) { field = parse_number<double>(v); }};
    };
    auto integer = [](int& field) {
        return KeyHandler{[&field](const std::string& v) { field = parse_number<int>(v); }};
    };
    auto boolean = [](bool& field) {
        return KeyHandler{[&field](const std::string& v) { field = parse_bool(v); }};
    };
    auto str = [](std::string& field) {
        return KeyHandler{[&field](const std::string& v) { field = v; }};
    };
    schema["mesh"] = {
        {"kind", str(c.mesh_kind)},
        {"layer_half_widths",
         {[&c](const std::string& v) { c.layer_half_widths = parse_int_list(v); }}},
        {"substrate_nx", integer(c.substrate_nx)},
        {"substrate_ny", integer(c.substrate_ny)},
        {"substrate_nz", integer(c.substrate_nz)},
        {"block_nx", integer(c.block_nx)},
        {"block_ny", integer(c.block_ny)},
        {"block_nz", integer(c.block_nz)},
        {"element_size", num(c.element_size)},
    };
    schema["path"] = {
        {"strategy", str(c.strategy)},
        {"scan_speed", num(c.scan_speed)},
        {"layer_dwell", num(c.layer_dwell)},
    };
    schema["material"] = {
        {"rho", num(c.material.rho)},
        {"cp", num(c.material.cp)},
        {"k", num(c.material.k)},
        {"h_conv", num(c.material.h_conv)},
        {"emissivity", num(c.material.emissivity)},
        {"T_amb", num(c.material.T_amb)},
        {"T_melt", num(c.material.T_melt)},
        {"T_deposit", num(c.material.T_deposit)},
        {"s_vol", num(c.material.s_vol)},
    };
    schema["laser"] = {
        {"power", num(c.laser.power)},
        {"beam_radius", num(c.laser.beam_radius)},
        {"absorptivity", num(c.laser.absorptivity)},
    };
    schema["sim"] = {
        {"dt", num(c.dt)},
        {"n_steps", integer(c.n_steps)},
        {"record_stride", integer(c.record_stride)},
        {"deterministic", boolean(c.deterministic)},
        {"allow_unstable", boolean(c.allow_unstable)},
    };
    schema["optimize"] = {
        {"case", integer(c.case_id)},
        {"iterations", integer(c.iterations)},
        {"lr", num(c.lr)},
        {"seed",
         {[&c](const std::string& v) { c.seed = parse_number<unsigned long long>(v); }}},
        {"init_lo", num(c.init_lo)},
        {"init_hi", num(c.init_hi)},
        {"target_depth", num(c.target_depth)},
        {"delta_clamp", num(c.delta_clamp)},
    };
    schema["output"] = {{"dir", str(c.output_dir)}};

    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto err = [line_no](const std::string& msg) {
            throw ConfigError("config line " + std::to_string(line_no) + ": " + msg);
        };
        if (line.front() == '[') {
            if (line.back() != ']') err("malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!schema.count(section)) err("unknown section [" + section + "]");
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) err("expected key = value");
        if (section.empty()) err("key outside any [section]");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        auto& keys = schema[section];
        auto it = keys.find(key);
        if (it == keys.end()) err("unknown key '" + key + "' in [" + section + "]");
        try {
            it->second.set(value);
        } catch (const std::exception& e) {
            err("[" + section + "]." + key + ": " + e.what());
        }
    }

    // Validation with section.key citations.
    auto check = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError("config: invalid value for " + what);
    };
    check(c.mesh_kind == "hourglass" || c.mesh_kind == "block" ||
              c.mesh_kind == "substrate",
          "[mesh].kind");
    check(c.element_size > 0, "[mesh].element_size");
    check(c.strategy == "zigzag" || c.strategy == "inward", "[path].strategy");
    check(c.scan_speed > 0, "[path].scan_speed");
    check(c.layer_dwell >= 0, "[path].layer_dwell");
    check(c.dt >= 0, "[sim].dt");
    check(c.n_steps >= 0, "[sim].n_steps");
    check(c.record_stride >= 1, "[sim].record_stride");
    check(c.case_id >= 1 && c.case_id <= 3, "[optimize].case");
    check(c.iterations >= 0, "[optimize].iterations");
    check(c.lr >= 0, "[optimize].lr");
    check(c.init_lo > 0 && c.init_hi > c.init_lo, "[optimize].init_lo/init_hi");
    try {
        c.material.validate();
        c.laser.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

struct Pipeline {
    HexMesh mesh;
    Toolpath path;
    BirthSchedule schedule;
    MaterialParams material;
    LaserParams laser;
    SimConfig sim;
};

inline Pipeline build_pipeline(const RunConfig& c) {
    Pipeline p;
    Vec3 size{c.element_size, c.element_size, c.element_size};
    if (c.mesh_kind == "hourglass") {
        HourglassSpec spec;
        spec.layer_half_widths = c.layer_half_widths;
        spec.substrate_extent = {c.substrate_nx, c.substrate_ny, c.substrate_nz};
        spec.element_size = size;
        p.mesh = build_hourglass_mesh(spec);
    } else if (c.mesh_kind == "block") {
        p.mesh = build_part_mesh(c.block_nx, c.block_ny, c.block_nz,
                                 {c.substrate_nx, c.substrate_ny, c.substrate_nz}, size);
    } else {
        p.mesh = build_block_mesh(c.substrate_nx, c.substrate_ny, c.substrate_nz, size,
                                  ElementTag::Substrate);
    }
    // Substrate-only meshes have no build elements and thus no toolpath.
    if (c.mesh_kind != "substrate")
        p.path = generate_toolpath(p.mesh,
                                   c.strategy == "zigzag"
                                       ? ScanStrategy::ZigZag
                                       : ScanStrategy::InwardFromBoundary,
                                   c.scan_speed, c.layer_dwell);
    p.material = c.material;
    p.laser = c.laser;
    p.sim.dt = c.dt;
    if (p.sim.dt == 0.0) {
        std::vector<ElementId> all(p.mesh.n_elements());
        for (std::size_t e = 0; e < all.size(); ++e) all[e] = static_cast<ElementId>(e);
        p.sim.dt = 0.5 * stability_limit(p.mesh, p.material, all);
    }
    p.schedule = birth_schedule(p.mesh, p.path, p.sim.dt);
    p.sim.n_steps = c.n_steps > 0
                        ? c.n_steps
                        : static_cast<int>(p.path.end_time() / p.sim.dt) + 1;
    p.sim.record_stride = c.record_stride;
    p.sim.deterministic = c.deterministic;
    p.sim.allow_unstable = c.allow_unstable;
    return p;
}

inline CaseSpec build_case_spec(const RunConfig& c) {
    Pipeline p = build_pipeline(c);
    CaseSpec spec;
    spec.case_id = c.case_id;
    spec.mesh = std::move(p.mesh);
    spec.path = std::move(p.path);
    spec.schedule = std::move(p.schedule);
    spec.material = p.material;
    spec.laser = p.laser;
    spec.sim = p.sim;
    spec.iterations = c.iterations;
    spec.lr = c.lr > 0 ? c.lr : (c.case_id == 1 ? 0.05 : 1e-2);
    spec.seed = c.seed;
    spec.init_lo = c.init_lo;
    spec.init_hi = c.init_hi;
    spec.target_depth = c.target_depth;
    spec.delta_clamp = c.delta_clamp;
    return spec;
}

}  // namespace thermoforge
