#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "thermoforge/core.hpp"
#include "thermoforge/mesh.hpp"

namespace thermoforge {

// Mesh JSON: nodes/elements/tags/element_size per the documented schema, plus
// the structured-grid metadata needed to rebuild lattice lookups. Finite
// doubles round-trip bit-exactly (shortest round-trip decimal encoding).
inline nlohmann::json mesh_to_json(const HexMesh& mesh) {
    nlohmann::json j;
    auto& nodes = j["nodes"] = nlohmann::json::array();
    for (const Vec3& n : mesh.nodes) nodes.push_back({n.x, n.y, n.z});
    auto& elements = j["elements"] = nlohmann::json::array();
    for (const auto& e : mesh.elements) elements.push_back(e);
    auto& tags = j["tags"] = nlohmann::json::array();
    for (ElementTag t : mesh.element_tag) tags.push_back(static_cast<int>(t));
    j["element_size"] = {mesh.element_size.x, mesh.element_size.y, mesh.element_size.z};
    j["grid"] = {{"nx", mesh.nx},
                 {"ny", mesh.ny},
                 {"kmin", mesh.kmin},
                 {"kmax", mesh.kmax},
                 {"elem_coord", mesh.elem_coord}};
    return j;
}

inline HexMesh mesh_from_json(const nlohmann::json& j) {
    HexMesh m;
    for (const auto& n : j.at("nodes"))
        m.nodes.push_back({n.at(0).get<double>(), n.at(1).get<double>(),
                           n.at(2).get<double>()});
    for (const auto& e : j.at("elements")) {
        std::array<NodeId, 8> conn;
        for (int i = 0; i < 8; ++i) conn[i] = e.at(i).get<NodeId>();
        m.elements.push_back(conn);
    }
    for (const auto& t : j.at("tags"))
        m.element_tag.push_back(static_cast<ElementTag>(t.get<int>()));
    const auto& s = j.at("element_size");
    m.element_size = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
    const auto& g = j.at("grid");
    m.nx = g.at("nx").get<int>();
    m.ny = g.at("ny").get<int>();
    m.kmin = g.at("kmin").get<int>();
    m.kmax = g.at("kmax").get<int>();
    for (const auto& c : g.at("elem_coord"))
        m.elem_coord.push_back({c.at(0).get<int>(), c.at(1).get<int>(), c.at(2).get<int>()});
    require(m.elements.size() == m.element_tag.size() &&
                m.elements.size() == m.elem_coord.size(),
            "mesh json: inconsistent element arrays");
    m.node_lut.assign(static_cast<std::size_t>(m.nx + 1) * (m.ny + 1) *
                          (m.kmax - m.kmin + 2),
                      -1);
    for (std::size_t e = 0; e < m.elements.size(); ++e)
        for (int c = 0; c < 8; ++c)
            m.node_lut[m.lut_index(m.elem_coord[e][0] + kHexCorner[c][0],
                                   m.elem_coord[e][1] + kHexCorner[c][1],
                                   m.elem_coord[e][2] + kHexCorner[c][2])] =
                m.elements[e][c];
    return m;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw SimulationError("cannot open for writing: " + path);
    f << content;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw SimulationError("cannot open for reading: " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace thermoforge
