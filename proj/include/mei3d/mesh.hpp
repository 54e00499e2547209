#pragma once
#include <array>
#include <cstdint>
#include <vector>

#include "mei3d/vec3.hpp"

namespace mei3d {

using FaceIndices = std::array<int, 3>;

// Triangle mesh: vertex positions plus 0-based index triples.
// Immutable by convention once built; all derived structures copy what they need.
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<FaceIndices> faces;

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t face_count() const { return faces.size(); }
};

// Derived connectivity. Edges are unique undirected pairs (i < j), sorted
// lexicographically; neighbor lists are sorted ascending and symmetric.
struct Topology {
    std::vector<std::array<int, 2>> edges;
    std::vector<std::vector<int>> neighbors;

    std::size_t edge_count() const { return edges.size(); }
};

// Throws MeshError on out-of-range or repeated face indices.
void validate_mesh(const Mesh& mesh);

Topology build_topology(const Mesh& mesh);

// Icosphere: subdivided icosahedron, vertices projected to the given radius.
// subdivisions=0 is the raw icosahedron (12 vertices, 20 faces); each level
// quadruples the face count. Levels above the cap are rejected.
Mesh make_sphere(int subdivisions, double radius, int max_subdivisions = 7);

// Planar nx-by-ny vertex grid in the z=0 plane, centered at the origin,
// spanning extent x extent. Each quad splits along the same diagonal.
Mesh make_sheet(int nx, int ny, double extent);

// Closed torus around the z axis: tube of radius minor_r about the circle of
// radius major_r in the z=0 plane.
Mesh make_torus(double major_r, double minor_r, int n_major, int n_minor);

// Axis-aligned extent of the mesh (max component range), used for
// displacement bookkeeping.
double mesh_extent(const Mesh& mesh);

double mean_edge_length(const Mesh& mesh, const Topology& topo);

}  // namespace mei3d
