#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "core/error.hpp"
#include "core/mesh.hpp"
#include "core/rng.hpp"

using namespace esi;
using mesh::CorticalMesh;
using mesh::Vec3;

namespace {

CorticalMesh unit_edge_tetrahedron() {
  const double s3 = std::sqrt(3.0), s6 = std::sqrt(6.0);
  std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {0.5, s3 / 2, 0}, {0.5, s3 / 6, s6 / 3}};
  return mesh::build_mesh(v, {{0, 2, 1}, {0, 1, 3}, {1, 2, 3}, {0, 3, 2}});
}

// O(E^2) edge-matching adjacency oracle: two elements are neighbors iff they
// share exactly two vertices.
std::vector<std::set<int>> adjacency_oracle(const CorticalMesh& m) {
  const int n = m.element_count();
  std::vector<std::set<int>> adj(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      int shared = 0;
      for (int va : m.elements[std::size_t(a)])
        for (int vb : m.elements[std::size_t(b)])
          if (va == vb) ++shared;
      if (shared == 2) {
        adj[std::size_t(a)].insert(b);
        adj[std::size_t(b)].insert(a);
      }
    }
  return adj;
}

// Level-by-level BFS growth oracle for uniform meshes, where the element
// count of the grown patch is known up front.
std::set<int> bfs_patch_oracle(const CorticalMesh& m, int seed, int want) {
  std::set<int> patch{seed};
  std::vector<int> level{seed};
  while (int(patch.size()) < want) {
    std::vector<int> next;
    for (int e : level)
      for (int nb : m.adjacency[std::size_t(e)])
        if (!patch.count(nb) && std::find(next.begin(), next.end(), nb) == next.end())
          next.push_back(nb);
    std::sort(next.begin(), next.end(), [&](int a, int b) {
      const double da = (m.centroids[std::size_t(a)] - m.centroids[std::size_t(seed)]).squaredNorm();
      const double db = (m.centroids[std::size_t(b)] - m.centroids[std::size_t(seed)]).squaredNorm();
      return da != db ? da < db : a < b;
    });
    for (int e : next) {
      patch.insert(e);
      if (int(patch.size()) == want) break;
    }
    level = next;
  }
  return patch;
}

}  // namespace

TEST_CASE("tetrahedron adjacency: every face neighbors every other") {
  const CorticalMesh m = unit_edge_tetrahedron();
  REQUIRE(m.element_count() == 4);
  for (const auto& nbrs : m.adjacency) CHECK(nbrs.size() == 3);
}

TEST_CASE("unit-edge tetrahedron face areas are sqrt(3)/4") {
  const CorticalMesh m = unit_edge_tetrahedron();
  for (double a : m.element_areas) CHECK(a == doctest::Approx(std::sqrt(3.0) / 4.0).epsilon(1e-12));
  CHECK(m.total_area == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
}

TEST_CASE("icosphere adjacency matches the brute-force edge-matching oracle") {
  const CorticalMesh m = mesh::make_sphere_mesh(mesh::SphereBase::Icosahedron, 2, 8.0);
  REQUIRE(m.element_count() == 320);
  const auto oracle = adjacency_oracle(m);
  for (int e = 0; e < m.element_count(); ++e) {
    const std::set<int> got(m.adjacency[std::size_t(e)].begin(), m.adjacency[std::size_t(e)].end());
    CHECK(got == oracle[std::size_t(e)]);
  }
  for (int e = 0; e < m.element_count(); ++e)
    for (int nb : m.adjacency[std::size_t(e)]) {
      const auto& back = m.adjacency[std::size_t(nb)];
      CHECK(std::find(back.begin(), back.end(), e) != back.end());
    }
}

TEST_CASE("degenerate element is rejected") {
  std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  try {
    mesh::build_mesh(v, {{0, 1, 2}, {0, 1, 3}, {1, 2, 3}, {0, 0, 2}});  // repeated vertex
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateElement);
  }
}

TEST_CASE("disconnected mesh is rejected") {
  const CorticalMesh t = unit_edge_tetrahedron();
  std::vector<Vec3> v = t.vertices;
  for (const auto& p : t.vertices) v.push_back(p + Vec3(100, 0, 0));
  std::vector<std::array<int, 3>> e = t.elements;
  for (auto f : t.elements) e.push_back({f[0] + 4, f[1] + 4, f[2] + 4});
  try {
    mesh::build_mesh(v, e);
    CHECK(false);
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::MeshDisconnected);
  }
}

TEST_CASE("grow_patch stops at the seed when the target is already covered") {
  const CorticalMesh m = unit_edge_tetrahedron();
  const mesh::Patch p = mesh::grow_patch(m, 2, m.element_areas[2] * 0.5);
  CHECK(p.indices == std::vector<int>{2});
  CHECK(p.seed == 2);
  CHECK(p.area == doctest::Approx(m.element_areas[2]));
}

TEST_CASE("grow_patch on a uniform icosahedron: target 5.5a gives 6 elements") {
  const CorticalMesh m = mesh::make_sphere_mesh(mesh::SphereBase::Icosahedron, 0, 5.0);
  REQUIRE(m.element_count() == 20);
  const double a = m.element_areas[0];
  for (double area : m.element_areas) CHECK(area == doctest::Approx(a).epsilon(1e-12));

  for (int seed : {0, 7, 13}) {
    const mesh::Patch p = mesh::grow_patch(m, seed, 5.5 * a);
    CHECK(p.indices.size() == 6);
    const auto oracle = bfs_patch_oracle(m, seed, 6);
    CHECK(std::set<int>(p.indices.begin(), p.indices.end()) == oracle);
  }
}

TEST_CASE("grow_patch exhausts the whole tetrahedron at the total area") {
  const CorticalMesh m = unit_edge_tetrahedron();
  const mesh::Patch p = mesh::grow_patch(m, 1, m.total_area);
  CHECK(p.indices == std::vector<int>{0, 1, 2, 3});
  CHECK(p.area == doctest::Approx(m.total_area));
}

TEST_CASE("grow_patch rejects targets beyond the mesh area") {
  const CorticalMesh m = unit_edge_tetrahedron();
  try {
    mesh::grow_patch(m, 0, m.total_area * 1.01);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AreaUnreachable);
  }
}

TEST_CASE("grow_patch is monotone in the target area") {
  const CorticalMesh m = mesh::make_sphere_mesh(mesh::SphereBase::Icosahedron, 2, 8.0);
  Rng rng(42);
  for (int trial = 0; trial < 25; ++trial) {
    const int seed = int(rng.uniform_index(std::uint64_t(m.element_count())));
    const double a1 = rng.uniform(0.5, 30.0);
    const double a2 = a1 + rng.uniform(0.0, 30.0);
    const mesh::Patch p1 = mesh::grow_patch(m, seed, a1);
    const mesh::Patch p2 = mesh::grow_patch(m, seed, a2);
    CHECK(std::includes(p2.indices.begin(), p2.indices.end(), p1.indices.begin(), p1.indices.end()));
  }
}

TEST_CASE("grow_patch is independent of adjacency storage order") {
  CorticalMesh m = mesh::make_sphere_mesh(mesh::SphereBase::Icosahedron, 2, 8.0);
  const mesh::Patch before = mesh::grow_patch(m, 17, 12.0);
  Rng rng(7);
  for (auto& nbrs : m.adjacency) {
    for (std::size_t i = nbrs.size(); i > 1; --i)
      std::swap(nbrs[i - 1], nbrs[std::size_t(rng.uniform_index(i))]);
  }
  const mesh::Patch after = mesh::grow_patch(m, 17, 12.0);
  CHECK(before.indices == after.indices);
}

TEST_CASE("grow_patch overshoot is bounded by one element") {
  const CorticalMesh m = mesh::make_sphere_mesh(mesh::SphereBase::Octahedron, 3, 8.0);
  const double max_area = *std::max_element(m.element_areas.begin(), m.element_areas.end());
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int seed = int(rng.uniform_index(std::uint64_t(m.element_count())));
    const double target = rng.uniform(0.1, 25.0);
    const mesh::Patch p = mesh::grow_patch(m, seed, target);
    CHECK(p.area >= target);
    CHECK(p.area - target < max_area);
  }
}

TEST_CASE("patch_distance: identity and Pythagorean cases") {
  const CorticalMesh tet = unit_edge_tetrahedron();
  CHECK(mesh::patch_distance(tet, 2, 2) == 0.0);

  // Planar strip whose first two element centroids differ by (3, 4, 0).
  std::vector<Vec3> v = {{0, 0, 0}, {3, 0, 0}, {0, 3, 0}, {9, 12, 0}, {0, -3, 0}, {-3, 0, 0}};
  const CorticalMesh strip = mesh::build_mesh(v, {{0, 1, 2}, {1, 3, 2}, {0, 4, 1}, {0, 2, 5}});
  CHECK(mesh::patch_distance(strip, 0, 1) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("patch_distance matches independent recomputation from raw vertices") {
  const CorticalMesh m = mesh::make_sphere_mesh(mesh::SphereBase::Icosahedron, 2, 8.0);
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const int i = int(rng.uniform_index(std::uint64_t(m.element_count())));
    const int j = int(rng.uniform_index(std::uint64_t(m.element_count())));
    Vec3 ci = Vec3::Zero(), cj = Vec3::Zero();
    for (int k = 0; k < 3; ++k) {
      ci += m.vertices[std::size_t(m.elements[std::size_t(i)][std::size_t(k)])];
      cj += m.vertices[std::size_t(m.elements[std::size_t(j)][std::size_t(k)])];
    }
    const double expected = (ci / 3.0 - cj / 3.0).norm();
    CHECK(mesh::patch_distance(m, i, j) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("mesh text format round trip") {
  const CorticalMesh m = mesh::make_sphere_mesh(mesh::SphereBase::Octahedron, 1, 8.0);
  const std::string path = "mesh_roundtrip.txt";
  mesh::save_mesh(m, path);
  const CorticalMesh back = mesh::load_mesh(path);
  REQUIRE(back.element_count() == m.element_count());
  REQUIRE(back.vertex_count() == m.vertex_count());
  for (int i = 0; i < m.vertex_count(); ++i)
    CHECK((back.vertices[std::size_t(i)] - m.vertices[std::size_t(i)]).norm() == 0.0);
  CHECK(back.elements == m.elements);
  std::remove(path.c_str());
}

TEST_CASE("electrode generation and file round trip") {
  const auto pts = mesh::fibonacci_electrodes(32, 10.0);
  CHECK(pts.size() == 32);
  for (const auto& p : pts) CHECK(p.norm() == doctest::Approx(10.0).epsilon(1e-12));
  const std::string path = "electrodes_roundtrip.txt";
  mesh::save_electrodes(pts, path);
  const auto back = mesh::load_electrodes(path);
  REQUIRE(back.size() == pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) CHECK((back[i] - pts[i]).norm() == 0.0);
  std::remove(path.c_str());

  std::ofstream bad("electrodes_bad.txt");
  bad << "1 2\n";
  bad.close();
  CHECK_THROWS_AS(mesh::load_electrodes("electrodes_bad.txt"), Error);
  std::remove("electrodes_bad.txt");
}
