#include "core/mesh.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "core/error.hpp"

namespace esi::mesh {

namespace {

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

void check_connected(const CorticalMesh& m) {
  const int n = m.element_count();
  std::vector<char> seen(std::size_t(n), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    const int e = stack.back();
    stack.pop_back();
    for (int nb : m.adjacency[std::size_t(e)]) {
      if (!seen[std::size_t(nb)]) {
        seen[std::size_t(nb)] = 1;
        ++reached;
        stack.push_back(nb);
      }
    }
  }
  if (reached != n)
    raise(ErrorCode::MeshDisconnected,
          "element graph has " + std::to_string(n - reached) + " unreachable elements");
}

}  // namespace

bool Patch::contains(int element) const {
  return std::binary_search(indices.begin(), indices.end(), element);
}

CorticalMesh build_mesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> elements) {
  if (vertices.size() < 4) raise(ErrorCode::InvalidArgument, "mesh needs at least 4 vertices");
  if (elements.size() < 4) raise(ErrorCode::InvalidArgument, "mesh needs at least 4 elements");
  const int nv = int(vertices.size());
  for (const auto& el : elements) {
    for (int idx : el) {
      if (idx < 0 || idx >= nv)
        raise(ErrorCode::InvalidArgument, "vertex index out of range: " + std::to_string(idx));
    }
  }

  CorticalMesh m;
  m.vertices = std::move(vertices);
  m.elements = std::move(elements);
  const int ne = m.element_count();

  Vec3 center = Vec3::Zero();
  for (const auto& v : m.vertices) center += v;
  center /= double(m.vertices.size());

  m.element_areas.resize(std::size_t(ne));
  m.centroids.resize(std::size_t(ne));
  m.normals.resize(std::size_t(ne));
  for (int e = 0; e < ne; ++e) {
    const auto& [i, j, k] = m.elements[std::size_t(e)];
    const Vec3 &a = m.vertices[std::size_t(i)], &b = m.vertices[std::size_t(j)],
               &c = m.vertices[std::size_t(k)];
    const double area = triangle_area(a, b, c);
    if (!(area > 0.0) || !std::isfinite(area))
      raise(ErrorCode::DegenerateElement, "element " + std::to_string(e) + " has zero area");
    m.element_areas[std::size_t(e)] = area;
    m.total_area += area;
    m.centroids[std::size_t(e)] = (a + b + c) / 3.0;
    Vec3 n = (b - a).cross(c - a).normalized();
    if (n.dot(m.centroids[std::size_t(e)] - center) < 0.0) n = -n;
    m.normals[std::size_t(e)] = n;
  }

  // Edge-sharing adjacency via an edge -> elements map.
  std::map<std::pair<int, int>, std::vector<int>> edge_elems;
  for (int e = 0; e < ne; ++e) {
    const auto& el = m.elements[std::size_t(e)];
    for (int s = 0; s < 3; ++s) {
      int u = el[std::size_t(s)], v = el[std::size_t((s + 1) % 3)];
      if (u > v) std::swap(u, v);
      edge_elems[{u, v}].push_back(e);
    }
  }
  m.adjacency.assign(std::size_t(ne), {});
  for (const auto& [edge, elems] : edge_elems) {
    for (std::size_t a = 0; a < elems.size(); ++a)
      for (std::size_t b = a + 1; b < elems.size(); ++b) {
        m.adjacency[std::size_t(elems[a])].push_back(elems[b]);
        m.adjacency[std::size_t(elems[b])].push_back(elems[a]);
      }
  }
  for (auto& nbrs : m.adjacency) {
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
  }

  check_connected(m);
  return m;
}

Patch grow_patch(const CorticalMesh& mesh, int seed, double target_area) {
  const int ne = mesh.element_count();
  if (seed < 0 || seed >= ne) raise(ErrorCode::InvalidArgument, "seed element out of range");
  if (!(target_area > 0.0)) raise(ErrorCode::InvalidArgument, "target_area must be positive");
  if (target_area > mesh.total_area * (1.0 + 1e-12))
    raise(ErrorCode::AreaUnreachable, "target area " + std::to_string(target_area) +
                                          " exceeds mesh area " + std::to_string(mesh.total_area));

  Patch p;
  p.seed = seed;
  std::vector<char> in_patch(std::size_t(ne), 0);
  auto absorb = [&](int e) {
    in_patch[std::size_t(e)] = 1;
    p.indices.push_back(e);
    p.area += mesh.element_areas[std::size_t(e)];
  };
  absorb(seed);

  const Vec3 seed_centroid = mesh.centroids[std::size_t(seed)];
  std::vector<int> level{seed};
  while (p.area < target_area) {
    // Next BFS level: unvisited neighbors of the current level.
    std::vector<int> next;
    for (int e : level)
      for (int nb : mesh.adjacency[std::size_t(e)])
        if (!in_patch[std::size_t(nb)]) {
          in_patch[std::size_t(nb)] = 1;  // marks queued
          next.push_back(nb);
        }
    std::sort(next.begin(), next.end(), [&](int a, int b) {
      const double da = (mesh.centroids[std::size_t(a)] - seed_centroid).squaredNorm();
      const double db = (mesh.centroids[std::size_t(b)] - seed_centroid).squaredNorm();
      if (da != db) return da < db;
      return a < b;
    });
    if (next.empty()) break;  // whole mesh absorbed (target within fp slack of total area)
    for (int e : next) {
      p.indices.push_back(e);
      p.area += mesh.element_areas[std::size_t(e)];
      if (p.area >= target_area) break;
    }
    level = std::move(next);
  }

  std::sort(p.indices.begin(), p.indices.end());
  return p;
}

double patch_distance(const CorticalMesh& mesh, int i, int j) {
  const int ne = mesh.element_count();
  if (i < 0 || i >= ne || j < 0 || j >= ne)
    raise(ErrorCode::InvalidArgument, "element index out of range");
  return (mesh.centroids[std::size_t(i)] - mesh.centroids[std::size_t(j)]).norm();
}

namespace {

struct SolidSeed {
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> faces;
};

SolidSeed base_solid(SphereBase base) {
  switch (base) {
    case SphereBase::Tetrahedron: {
      const double s = 1.0 / std::sqrt(3.0);
      return {{{s, s, s}, {s, -s, -s}, {-s, s, -s}, {-s, -s, s}},
              {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}}};
    }
    case SphereBase::Octahedron:
      return {{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}},
              {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4}, {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}}};
    case SphereBase::Icosahedron: {
      const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
      std::vector<Vec3> v = {{-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0}, {1, -phi, 0},
                             {0, -1, phi}, {0, 1, phi},   {0, -1, -phi}, {0, 1, -phi},
                             {phi, 0, -1}, {phi, 0, 1},   {-phi, 0, -1}, {-phi, 0, 1}};
      for (auto& p : v) p.normalize();
      return {std::move(v),
              {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},
               {5, 11, 4}, {11, 10, 2}, {10, 7, 6},  {7, 1, 8},  {3, 9, 4},   {3, 4, 2},
               {3, 2, 6},  {3, 6, 8},  {3, 8, 9},   {4, 9, 5},  {2, 4, 11},  {6, 2, 10},
               {8, 6, 7},  {9, 8, 1}}};
    }
  }
  raise(ErrorCode::InvalidArgument, "unknown sphere base");
}

}  // namespace

CorticalMesh make_sphere_mesh(SphereBase base, int subdivisions, double radius_cm) {
  if (subdivisions < 0 || subdivisions > 8)
    raise(ErrorCode::InvalidArgument, "subdivisions out of range");
  if (!(radius_cm > 0.0)) raise(ErrorCode::InvalidArgument, "radius must be positive");

  SolidSeed s = base_solid(base);
  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const int idx = int(s.verts.size());
      s.verts.push_back((s.verts[std::size_t(a)] + s.verts[std::size_t(b)]).normalized());
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> faces;
    faces.reserve(s.faces.size() * 4);
    for (const auto& [a, b, c] : s.faces) {
      const int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
      faces.push_back({a, ab, ca});
      faces.push_back({b, bc, ab});
      faces.push_back({c, ca, bc});
      faces.push_back({ab, bc, ca});
    }
    s.faces = std::move(faces);
  }

  // Order elements along a latitude-band spiral so that neighboring element
  // indices are also spatial neighbors; connected patches then occupy a few
  // contiguous index runs, which the strided spatial decoder can resolve.
  std::vector<int> order(s.faces.size());
  std::iota(order.begin(), order.end(), 0);
  const int bands = std::max(4, int(std::round(std::sqrt(double(s.faces.size())) / 1.5)));
  std::vector<std::pair<std::pair<int, double>, int>> keys;
  keys.reserve(s.faces.size());
  for (int f = 0; f < int(s.faces.size()); ++f) {
    const auto& [a, b, c] = s.faces[std::size_t(f)];
    const Vec3 centroid =
        (s.verts[std::size_t(a)] + s.verts[std::size_t(b)] + s.verts[std::size_t(c)]) / 3.0;
    const double polar = std::acos(std::clamp(centroid.normalized().z(), -1.0, 1.0));
    const double azimuth = std::atan2(centroid.y(), centroid.x());
    int band = int(polar / M_PI * bands);
    band = std::min(band, bands - 1);
    // serpentine within alternating bands keeps band transitions adjacent
    keys.push_back({{band, band % 2 == 0 ? azimuth : -azimuth}, f});
  }
  std::sort(keys.begin(), keys.end());
  std::vector<std::array<int, 3>> ordered;
  ordered.reserve(s.faces.size());
  for (const auto& k : keys) ordered.push_back(s.faces[std::size_t(k.second)]);

  for (auto& v : s.verts) v = v.normalized() * radius_cm;
  return build_mesh(std::move(s.verts), std::move(ordered));
}

CorticalMesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::Io, "cannot open mesh file: " + path);
  int nv = 0, ne = 0;
  if (!(in >> nv >> ne) || nv <= 0 || ne <= 0)
    raise(ErrorCode::FormatError, "bad mesh header in " + path);
  std::vector<Vec3> verts(static_cast<std::size_t>(nv));
  for (auto& v : verts)
    if (!(in >> v.x() >> v.y() >> v.z()))
      raise(ErrorCode::FormatError, "truncated vertex list in " + path);
  std::vector<std::array<int, 3>> elems(static_cast<std::size_t>(ne));
  for (auto& e : elems)
    if (!(in >> e[0] >> e[1] >> e[2]))
      raise(ErrorCode::FormatError, "truncated element list in " + path);
  return build_mesh(std::move(verts), std::move(elems));
}

void save_mesh(const CorticalMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::Io, "cannot open mesh file for writing: " + path);
  out << mesh.vertex_count() << ' ' << mesh.element_count() << '\n';
  char line[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(line, sizeof line, "%.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    out << line;
  }
  for (const auto& e : mesh.elements) out << e[0] << ' ' << e[1] << ' ' << e[2] << '\n';
  if (!out) raise(ErrorCode::Io, "write failed: " + path);
}

std::vector<Vec3> fibonacci_electrodes(int count, double radius_cm) {
  if (count < 1) raise(ErrorCode::InvalidArgument, "electrode count must be positive");
  std::vector<Vec3> pts;
  pts.reserve(std::size_t(count));
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - 2.0 * (double(i) + 0.5) / double(count);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double a = golden * double(i);
    pts.emplace_back(radius_cm * r * std::cos(a), radius_cm * r * std::sin(a), radius_cm * z);
  }
  return pts;
}

std::vector<Vec3> load_electrodes(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::Io, "cannot open electrode file: " + path);
  std::vector<Vec3> pts;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    Vec3 p;
    if (!(ss >> p.x() >> p.y() >> p.z()))
      raise(ErrorCode::FormatError, "bad electrode line in " + path + ": " + line);
    pts.push_back(p);
  }
  if (pts.empty()) raise(ErrorCode::FormatError, "no electrodes in " + path);
  return pts;
}

void save_electrodes(const std::vector<Vec3>& electrodes, const std::string& path) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::Io, "cannot open electrode file for writing: " + path);
  char line[128];
  for (const auto& p : electrodes) {
    std::snprintf(line, sizeof line, "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out << line;
  }
  if (!out) raise(ErrorCode::Io, "write failed: " + path);
}

}  // namespace esi::mesh
