#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <vector>

#include "thermoforge/core.hpp"

namespace thermoforge {

enum class ElementTag : std::uint8_t { Substrate = 0, Build = 1 };

// Local corner ordering: node c = (i + bit0, j + bit_xy, k + bit2) on the cell
// lattice, counterclockwise bottom then top: 0..3 at z=k, 4..7 at z=k+1.
inline constexpr int kHexCorner[8][3] = {
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
};

// Faces ordered -x,+x,-y,+y,-z,+z; corner loops counterclockwise viewed from
// outside the element (outward normals).
inline constexpr int kHexFace[6][4] = {
    {0, 4, 7, 3}, {1, 2, 6, 5}, {0, 1, 5, 4},
    {2, 3, 7, 6}, {0, 3, 2, 1}, {4, 5, 6, 7},
};

struct HexMesh {
    std::vector<Vec3> nodes;
    std::vector<std::array<NodeId, 8>> elements;
    std::vector<ElementTag> element_tag;
    Vec3 element_size;

    // Structured-lattice metadata. Cell (i,j,k) has k < 0 in the substrate and
    // k >= 0 in the build; node lattice points run i in [0,nx], j in [0,ny],
    // k in [kmin, kmax+1] with physical position (i*dx, j*dy, k*dz).
    int nx = 0, ny = 0, kmin = 0, kmax = 0;
    std::vector<NodeId> node_lut;                 // lattice point -> node id or -1
    std::vector<std::array<int, 3>> elem_coord;   // element -> cell (i,j,k)

    std::size_t n_nodes() const { return nodes.size(); }
    std::size_t n_elements() const { return elements.size(); }

    int lut_index(int i, int j, int k) const {
        return ((k - kmin) * (ny + 1) + j) * (nx + 1) + i;
    }
    NodeId node_at(int i, int j, int k) const {
        if (i < 0 || i > nx || j < 0 || j > ny || k < kmin || k > kmax + 1) return -1;
        return node_lut[lut_index(i, j, k)];
    }

    std::array<NodeId, 4> face_nodes(const FaceKey& f) const {
        const auto& e = elements[f.element];
        const int* loc = kHexFace[f.local_face];
        return {e[loc[0]], e[loc[1]], e[loc[2]], e[loc[3]]};
    }
};

struct HourglassSpec {
    std::vector<int> layer_half_widths;
    std::array<int, 3> substrate_extent{3, 3, 1};  // nx, ny, nz element counts
    Vec3 element_size{1e-3, 1e-3, 1e-3};
};

namespace detail {

// Shared builder: cells is a list of (i,j,k,tag) on a common lattice.
inline HexMesh assemble_lattice_mesh(const std::vector<std::array<int, 4>>& cells,
                                     Vec3 size) {
    require(size.x > 0 && size.y > 0 && size.z > 0, "mesh: element sizes must be > 0");
    require(!cells.empty(), "mesh: no cells");
    HexMesh m;
    m.element_size = size;
    int imax = 0, jmax = 0;
    m.kmin = cells[0][2];
    m.kmax = cells[0][2];
    for (const auto& c : cells) {
        require(c[0] >= 0 && c[1] >= 0, "mesh: negative lattice cell");
        imax = std::max(imax, c[0] + 1);
        jmax = std::max(jmax, c[1] + 1);
        m.kmin = std::min(m.kmin, c[2]);
        m.kmax = std::max(m.kmax, c[2]);
    }
    m.nx = imax;
    m.ny = jmax;
    m.node_lut.assign(static_cast<std::size_t>(m.nx + 1) * (m.ny + 1) *
                          (m.kmax - m.kmin + 2),
                      -1);
    // Mark lattice points used by some cell, then number them in k,j,i order.
    for (const auto& c : cells)
        for (const auto& corner : kHexCorner)
            m.node_lut[m.lut_index(c[0] + corner[0], c[1] + corner[1],
                                   c[2] + corner[2])] = 0;
    NodeId next = 0;
    for (int k = m.kmin; k <= m.kmax + 1; ++k)
        for (int j = 0; j <= m.ny; ++j)
            for (int i = 0; i <= m.nx; ++i) {
                int idx = m.lut_index(i, j, k);
                if (m.node_lut[idx] == 0) {
                    m.node_lut[idx] = next++;
                    m.nodes.push_back({i * size.x, j * size.y, k * size.z});
                }
            }
    for (const auto& c : cells) {
        std::array<NodeId, 8> conn;
        for (int n = 0; n < 8; ++n)
            conn[n] = m.node_lut[m.lut_index(c[0] + kHexCorner[n][0],
                                             c[1] + kHexCorner[n][1],
                                             c[2] + kHexCorner[n][2])];
        m.elements.push_back(conn);
        m.element_tag.push_back(static_cast<ElementTag>(c[3]));
        m.elem_coord.push_back({c[0], c[1], c[2]});
    }
    return m;
}

}  // namespace detail

inline HexMesh build_block_mesh(int nx, int ny, int nz, Vec3 size,
                                ElementTag tag = ElementTag::Build) {
    require(nx >= 1 && ny >= 1 && nz >= 1, "build_block_mesh: counts must be >= 1");
    std::vector<std::array<int, 4>> cells;
    int k0 = (tag == ElementTag::Substrate) ? -nz : 0;
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i)
                cells.push_back({i, j, k0 + k, static_cast<int>(tag)});
    return detail::assemble_lattice_mesh(cells, size);
}

// Hourglass: substrate slab below z = 0, then one build layer per entry of
// layer_half_widths. Footprint rule: layer l covers a square of
// half_widths[l] x half_widths[l] cells, offset floor((n - w)/2) from the
// substrate footprint edge (centered on the lattice).
inline HexMesh build_hourglass_mesh(const HourglassSpec& spec) {
    require(!spec.layer_half_widths.empty(), "hourglass: empty layer profile");
    const auto [snx, sny, snz] = spec.substrate_extent;
    require(snx >= 1 && sny >= 1 && snz >= 1, "hourglass: substrate counts must be >= 1");
    std::vector<std::array<int, 4>> cells;
    for (int k = 0; k < snz; ++k)
        for (int j = 0; j < sny; ++j)
            for (int i = 0; i < snx; ++i)
                cells.push_back({i, j, -snz + k, static_cast<int>(ElementTag::Substrate)});
    for (std::size_t l = 0; l < spec.layer_half_widths.size(); ++l) {
        int w = spec.layer_half_widths[l];
        require(w >= 1, "hourglass: layer widths must be >= 1");
        require(w <= snx && w <= sny, "hourglass: build wider than substrate");
        int oi = (snx - w) / 2, oj = (sny - w) / 2;
        for (int j = 0; j < w; ++j)
            for (int i = 0; i < w; ++i)
                cells.push_back({oi + i, oj + j, static_cast<int>(l),
                                 static_cast<int>(ElementTag::Build)});
    }
    return detail::assemble_lattice_mesh(cells, spec.element_size);
}

// Substrate slab with a centered rectangular build block on top.
inline HexMesh build_part_mesh(int bnx, int bny, int bnz,
                               std::array<int, 3> substrate_extent, Vec3 size) {
    require(bnx >= 1 && bny >= 1 && bnz >= 1, "build_part_mesh: counts must be >= 1");
    const auto [snx, sny, snz] = substrate_extent;
    require(snx >= bnx && sny >= bny, "build_part_mesh: build wider than substrate");
    std::vector<std::array<int, 4>> cells;
    for (int k = 0; k < snz; ++k)
        for (int j = 0; j < sny; ++j)
            for (int i = 0; i < snx; ++i)
                cells.push_back({i, j, -snz + k, static_cast<int>(ElementTag::Substrate)});
    int oi = (snx - bnx) / 2, oj = (sny - bny) / 2;
    for (int k = 0; k < bnz; ++k)
        for (int j = 0; j < bny; ++j)
            for (int i = 0; i < bnx; ++i)
                cells.push_back({oi + i, oj + j, k, static_cast<int>(ElementTag::Build)});
    return detail::assemble_lattice_mesh(cells, size);
}

// Faces of active elements not shared with another active element. Interior
// matching is by sorted node quadruple.
inline std::set<FaceKey> free_faces(const HexMesh& mesh,
                                    const std::set<ElementId>& active) {
    for (ElementId e : active)
        require(e >= 0 && static_cast<std::size_t>(e) < mesh.n_elements(),
                "free_faces: unknown element id");
    std::map<std::array<NodeId, 4>, std::vector<FaceKey>> by_quad;
    for (ElementId e : active) {
        for (int f = 0; f < 6; ++f) {
            FaceKey key{e, f};
            auto quad = mesh.face_nodes(key);
            std::sort(quad.begin(), quad.end());
            by_quad[quad].push_back(key);
        }
    }
    std::set<FaceKey> result;
    for (const auto& [quad, faces] : by_quad)
        if (faces.size() == 1) result.insert(faces[0]);
    return result;
}

}  // namespace thermoforge
