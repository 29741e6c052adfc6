#pragma once

#include <cctype>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <unordered_map>

#include "trs/mc_tables.hpp"
#include "trs/nerf_field.hpp"

namespace trs {

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<Vec3> vertex_colors;  // empty or one per vertex

  bool empty() const { return faces.empty(); }

  void validate() const {
    for (const auto& f : faces) {
      for (int i : f)
        if (i < 0 || i >= int(vertices.size()))
          throw std::invalid_argument("mesh: face index out of range");
      if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
        throw std::invalid_argument("mesh: degenerate face");
    }
    if (!vertex_colors.empty() && vertex_colors.size() != vertices.size())
      throw std::invalid_argument("mesh: color count mismatch");
  }
};

struct PointCloud {
  std::vector<Vec3> points;
};

// Scalar density samples at the G^3 nodes of the cube [-extent, extent]^3.
// Node (i, j, k) sits at -extent + {i,j,k} * spacing.
struct DensityGrid {
  int resolution = 0;  // G
  Real extent = 0.87;
  std::vector<Real> values;  // index (i * G + j) * G + k for node (i, j, k) = (x, y, z)

  Real spacing() const { return 2 * extent / (resolution - 1); }
  Real at(int i, int j, int k) const {
    return values[(std::size_t(i) * resolution + j) * resolution + k];
  }
  Vec3 node(int i, int j, int k) const {
    Real s = spacing();
    return {-extent + i * s, -extent + j * s, -extent + k * s};
  }
};

// The renderer only ever evaluates the field inside the bounding sphere of
// radius `extent` (rays are clipped to it), so the field carries no signal
// beyond it; grid nodes outside that support read as zero density.
inline DensityGrid sample_density_grid(const Triplane& tp, const FieldParams& params, int G,
                                       int threads = 1) {
  if (G < 2) throw std::invalid_argument("sample_density_grid: G must be >= 2");
  DensityGrid grid;
  grid.resolution = G;
  grid.extent = tp.extent;
  grid.values.resize(std::size_t(G) * G * G);
  parallel_chunks(std::size_t(G) * G, threads, [&](std::size_t, std::size_t b, std::size_t e) {
    std::vector<Real> feats(3 * std::size_t(tp.channels));
    for (std::size_t ij = b; ij < e; ++ij) {
      int i = int(ij / G), j = int(ij % G);
      for (int k = 0; k < G; ++k) {
        Vec3 p = grid.node(i, j, k);
        Real sigma = 0;
        if (norm(p) <= tp.extent) {
          sample_features(tp, p, feats.data());
          sigma = field_forward(params, feats.data()).sigma;
        }
        grid.values[(std::size_t(i) * G + j) * G + k] = sigma;
      }
    }
  });
  return grid;
}

namespace detail {

// Bourke cube corner offsets (x, y, z).
inline constexpr int kMcCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                        {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
inline constexpr int kMcEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                       {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

}  // namespace detail

// Table-driven 15-case marching cubes with linear edge interpolation and
// vertex deduplication keyed by the global grid edge, so shared isosurface
// vertices are emitted once and closed surfaces come out watertight.
// Winding: outward normals point toward lower density. No ambiguity
// resolution (no asymptotic decider).
inline Mesh marching_cubes(const DensityGrid& grid, Real isolevel) {
  if (!std::isfinite(isolevel)) throw std::invalid_argument("marching_cubes: non-finite isolevel");
  const int G = grid.resolution;
  Mesh mesh;
  std::unordered_map<std::uint64_t, int> edge_vertex;

  auto node_id = [G](int i, int j, int k) {
    return (std::uint64_t(i) * G + j) * G + k;
  };

  auto vertex_on_edge = [&](int ci, int cj, int ck, int edge) {
    const int* a = detail::kMcCorner[detail::kMcEdge[edge][0]];
    const int* b = detail::kMcCorner[detail::kMcEdge[edge][1]];
    int ai = ci + a[0], aj = cj + a[1], ak = ck + a[2];
    int bi = ci + b[0], bj = cj + b[1], bk = ck + b[2];
    // Canonical key: lexicographically smaller endpoint + axis.
    std::uint64_t ida = node_id(ai, aj, ak), idb = node_id(bi, bj, bk);
    int axis = (ai != bi) ? 0 : (aj != bj) ? 1 : 2;
    std::uint64_t key = std::min(ida, idb) * 3 + axis;
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    Real va = grid.at(ai, aj, ak), vb = grid.at(bi, bj, bk);
    Real t = (vb != va) ? std::clamp<Real>((isolevel - va) / (vb - va), 0, 1) : 0.5;
    Vec3 pa = grid.node(ai, aj, ak), pb = grid.node(bi, bj, bk);
    int idx = int(mesh.vertices.size());
    mesh.vertices.push_back(pa + (pb - pa) * t);
    edge_vertex.emplace(key, idx);
    return idx;
  };

  for (int i = 0; i + 1 < G; ++i)
    for (int j = 0; j + 1 < G; ++j)
      for (int k = 0; k + 1 < G; ++k) {
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          const int* o = detail::kMcCorner[c];
          if (grid.at(i + o[0], j + o[1], k + o[2]) < isolevel) cube |= 1 << c;
        }
        if (detail::kMcEdgeTable[cube] == 0) continue;
        const int* tri = detail::kMcTriTable[cube];
        for (int t = 0; tri[t] != -1; t += 3) {
          int v0 = vertex_on_edge(i, j, k, tri[t]);
          int v1 = vertex_on_edge(i, j, k, tri[t + 1]);
          int v2 = vertex_on_edge(i, j, k, tri[t + 2]);
          if (v0 == v1 || v1 == v2 || v0 == v2) continue;  // snapped to a node
          mesh.faces.push_back({v0, v1, v2});
        }
      }
  return mesh;
}

// Area-weighted face selection, then uniform barycentric placement.
inline PointCloud sample_surface_points(const Mesh& mesh, int n, Rng& rng) {
  if (mesh.empty()) throw std::invalid_argument("sample_surface_points: empty mesh");
  if (n < 1) throw std::invalid_argument("sample_surface_points: n must be >= 1");
  std::vector<Real> cum(mesh.faces.size());
  Real total = 0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& face = mesh.faces[f];
    Vec3 e1 = mesh.vertices[face[1]] - mesh.vertices[face[0]];
    Vec3 e2 = mesh.vertices[face[2]] - mesh.vertices[face[0]];
    total += 0.5 * norm(cross(e1, e2));
    cum[f] = total;
  }
  PointCloud pc;
  pc.points.reserve(n);
  for (int s = 0; s < n; ++s) {
    Real r = rng.uniform() * total;
    std::size_t f = std::lower_bound(cum.begin(), cum.end(), r) - cum.begin();
    if (f >= mesh.faces.size()) f = mesh.faces.size() - 1;
    const auto& face = mesh.faces[f];
    Real u = rng.uniform(), v = rng.uniform();
    if (u + v > 1) {
      u = 1 - u;
      v = 1 - v;
    }
    pc.points.push_back(mesh.vertices[face[0]] * (1 - u - v) + mesh.vertices[face[1]] * u +
                        mesh.vertices[face[2]] * v);
  }
  return pc;
}

inline Mesh colorize_vertices(Mesh mesh, const Triplane& tp, const FieldParams& params) {
  mesh.vertex_colors.resize(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
    mesh.vertex_colors[i] = field_at_point(params, tp, mesh.vertices[i]).rgb;
  return mesh;
}

// ---- mesh file IO ----

enum class MeshFormat { OBJ, PLY };

inline MeshFormat mesh_format_for_path(const std::string& path) {
  auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  for (auto& c : ext) c = char(std::tolower(c));
  if (ext == "obj") return MeshFormat::OBJ;
  if (ext == "ply") return MeshFormat::PLY;
  throw std::invalid_argument("unsupported mesh extension: " + path);
}

inline void write_mesh(const Mesh& mesh, const std::string& path,
                       std::optional<MeshFormat> format = {}) {
  MeshFormat fmt = format ? *format : mesh_format_for_path(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  bool colors = !mesh.vertex_colors.empty();
  if (fmt == MeshFormat::OBJ) {
    out << std::setprecision(9);
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
      const Vec3& v = mesh.vertices[i];
      out << "v " << v.x << ' ' << v.y << ' ' << v.z;
      if (colors) {
        const Vec3& c = mesh.vertex_colors[i];
        out << ' ' << c.x << ' ' << c.y << ' ' << c.z;
      }
      out << '\n';
    }
    for (const auto& f : mesh.faces)
      out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  } else {
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << mesh.vertices.size() << '\n';
    out << "property float x\nproperty float y\nproperty float z\n";
    if (colors) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "element face " << mesh.faces.size() << '\n';
    out << "property list uchar int vertex_indices\nend_header\n";
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
      float xyz[3] = {float(mesh.vertices[i].x), float(mesh.vertices[i].y),
                      float(mesh.vertices[i].z)};
      out.write(reinterpret_cast<const char*>(xyz), sizeof xyz);
      if (colors) {
        unsigned char c[3];
        for (int k = 0; k < 3; ++k)
          c[k] = (unsigned char)std::lround(clamp01(mesh.vertex_colors[i][k]) * 255.0);
        out.write(reinterpret_cast<const char*>(c), 3);
      }
    }
    for (const auto& f : mesh.faces) {
      unsigned char count = 3;
      out.write(reinterpret_cast<const char*>(&count), 1);
      std::int32_t idx[3] = {f[0], f[1], f[2]};
      out.write(reinterpret_cast<const char*>(idx), sizeof idx);
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline Mesh read_mesh(const std::string& path, std::optional<MeshFormat> format = {}) {
  MeshFormat fmt = format ? *format : mesh_format_for_path(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  Mesh mesh;
  if (fmt == MeshFormat::OBJ) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::istringstream ls(line);
      std::string tag;
      if (!(ls >> tag)) continue;
      if (tag == "v") {
        Vec3 v;
        if (!(ls >> v.x >> v.y >> v.z))
          throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed vertex");
        Vec3 c;
        if (ls >> c.x >> c.y >> c.z) mesh.vertex_colors.push_back(c);
        mesh.vertices.push_back(v);
      } else if (tag == "f") {
        std::array<int, 3> f;
        for (int k = 0; k < 3; ++k) {
          std::string tok;
          if (!(ls >> tok))
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed face");
          f[k] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
        }
        mesh.faces.push_back(f);
      }
    }
    if (!mesh.vertex_colors.empty() && mesh.vertex_colors.size() != mesh.vertices.size())
      throw std::runtime_error(path + ": inconsistent vertex colors");
  } else {
    std::string line;
    std::size_t n_verts = 0, n_faces = 0;
    bool colors = false, binary_le = false;
    if (!std::getline(in, line) || line.substr(0, 3) != "ply")
      throw std::runtime_error(path + ": not a PLY file");
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::string tag;
      ls >> tag;
      if (tag == "format") {
        std::string f;
        ls >> f;
        binary_le = (f == "binary_little_endian");
      } else if (tag == "element") {
        std::string what;
        std::size_t n;
        ls >> what >> n;
        if (what == "vertex") n_verts = n;
        if (what == "face") n_faces = n;
      } else if (tag == "property") {
        std::string type, name;
        ls >> type >> name;
        if (name == "red") colors = true;
      } else if (tag == "end_header") {
        break;
      }
    }
    if (!binary_le) throw std::runtime_error(path + ": only binary little-endian PLY supported");
    mesh.vertices.resize(n_verts);
    if (colors) mesh.vertex_colors.resize(n_verts);
    for (std::size_t i = 0; i < n_verts; ++i) {
      float xyz[3];
      in.read(reinterpret_cast<char*>(xyz), sizeof xyz);
      mesh.vertices[i] = {xyz[0], xyz[1], xyz[2]};
      if (colors) {
        unsigned char c[3];
        in.read(reinterpret_cast<char*>(c), 3);
        mesh.vertex_colors[i] = {c[0] / 255.0, c[1] / 255.0, c[2] / 255.0};
      }
    }
    mesh.faces.resize(n_faces);
    for (std::size_t i = 0; i < n_faces; ++i) {
      unsigned char count;
      in.read(reinterpret_cast<char*>(&count), 1);
      if (count != 3)
        throw std::runtime_error(path + ": non-triangular face at offset " +
                                 std::to_string(in.tellg()));
      std::int32_t idx[3];
      in.read(reinterpret_cast<char*>(idx), sizeof idx);
      mesh.faces[i] = {idx[0], idx[1], idx[2]};
    }
    if (!in) throw std::runtime_error(path + ": truncated PLY payload");
  }
  mesh.validate();
  return mesh;
}

}  // namespace trs
