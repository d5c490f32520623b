#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace esi::mesh {

using Vec3 = Eigen::Vector3d;

// Triangulated source space. Immutable after construction; one source per
// element, located at the element centroid and oriented along the outward
// normal. All lengths in cm, areas in cm^2.
struct CorticalMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> elements;
  std::vector<std::vector<int>> adjacency;  // edge-sharing neighbor elements
  std::vector<double> element_areas;
  std::vector<Vec3> centroids;
  std::vector<Vec3> normals;  // outward unit normals
  double total_area = 0.0;

  int element_count() const { return int(elements.size()); }
  int vertex_count() const { return int(vertices.size()); }
};

// Connected set of elements grown from a seed.
struct Patch {
  std::vector<int> indices;  // sorted ascending, contains seed
  int seed = -1;
  double area = 0.0;  // sum of member element areas

  bool contains(int element) const;
};

// Computes adjacency, areas, centroids and outward normals, and verifies the
// element graph is a single connected component.
CorticalMesh build_mesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> elements);

// Breadth-first absorption from the seed until the accumulated area reaches
// target_area, stopping at the first element whose addition reaches or
// exceeds it. Within a BFS level, elements are absorbed in ascending
// (centroid distance to seed centroid, element index) order, which makes the
// result independent of adjacency storage order.
Patch grow_patch(const CorticalMesh& mesh, int seed, double target_area);

// Euclidean distance between element centroids, cm.
double patch_distance(const CorticalMesh& mesh, int i, int j);

enum class SphereBase { Tetrahedron, Octahedron, Icosahedron };

// Geodesic sphere: base solid subdivided `subdivisions` times with vertices
// projected onto the sphere of the given radius. Element count is
// base_faces * 4^subdivisions (4, 8 or 20 base faces).
CorticalMesh make_sphere_mesh(SphereBase base, int subdivisions, double radius_cm);

// Plain-text mesh format: first line "V E", then V lines "x y z", then E
// lines "i j k" with 0-based vertex indices.
CorticalMesh load_mesh(const std::string& path);
void save_mesh(const CorticalMesh& mesh, const std::string& path);

// Golden-angle spiral point set on a sphere, for synthetic electrode caps.
std::vector<Vec3> fibonacci_electrodes(int count, double radius_cm);

// Electrode file format: one "x y z" line per electrode.
std::vector<Vec3> load_electrodes(const std::string& path);
void save_electrodes(const std::vector<Vec3>& electrodes, const std::string& path);

}  // namespace esi::mesh
