#include "seqop/mesh2d.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace seqop {

namespace {

constexpr double kGauss1 = 0.5773502691896257;  // 1/sqrt(3)

double quad_jacobian(const std::array<double, 2>& a, const std::array<double, 2>& b,
                     const std::array<double, 2>& c, const std::array<double, 2>& d, double xi,
                     double eta) {
  // bilinear shape derivatives
  const double dn[4][2] = {{-(1 - eta) / 4, -(1 - xi) / 4},
                           {(1 - eta) / 4, -(1 + xi) / 4},
                           {(1 + eta) / 4, (1 + xi) / 4},
                           {-(1 + eta) / 4, (1 - xi) / 4}};
  const std::array<double, 2> p[4] = {a, b, c, d};
  double j00 = 0, j01 = 0, j10 = 0, j11 = 0;
  for (int k = 0; k < 4; ++k) {
    j00 += dn[k][0] * p[k][0];
    j01 += dn[k][0] * p[k][1];
    j10 += dn[k][1] * p[k][0];
    j11 += dn[k][1] * p[k][1];
  }
  return j00 * j11 - j01 * j10;
}

}  // namespace

std::array<double, 4> Mesh2D::bounding_box() const {
  std::array<double, 4> bb = {nodes[0][0], nodes[0][0], nodes[0][1], nodes[0][1]};
  for (const auto& p : nodes) {
    bb[0] = std::min(bb[0], p[0]);
    bb[1] = std::max(bb[1], p[0]);
    bb[2] = std::min(bb[2], p[1]);
    bb[3] = std::max(bb[3], p[1]);
  }
  return bb;
}

double Mesh2D::min_jacobian() const {
  double mn = 1e300;
  for (const auto& q : quads) {
    for (double xi : {-kGauss1, kGauss1})
      for (double eta : {-kGauss1, kGauss1})
        mn = std::min(mn, quad_jacobian(nodes[q[0]], nodes[q[1]], nodes[q[2]], nodes[q[3]], xi, eta));
  }
  for (const auto& t : tris) {
    const auto &a = nodes[t[0]], &b = nodes[t[1]], &c = nodes[t[2]];
    const double twice_area = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    mn = std::min(mn, 0.5 * twice_area);
  }
  return mn;
}

double DogboneGeometry::half_width(double x) const {
  const double wg = 0.5 * grip_width;
  const double wn = 0.5 * gauge_width;
  const double grip_len = 0.5 * (length - gauge_length) - transition_length;
  if (grip_len < 0) throw std::invalid_argument("dog-bone sections exceed the specimen length");
  const double x1 = grip_len;                      // grip -> transition
  const double x2 = x1 + transition_length;        // transition -> gauge
  const double x3 = x2 + gauge_length;             // gauge -> transition
  const double x4 = x3 + transition_length;        // transition -> grip
  if (x <= x1 || x >= x4) return wg;
  if (x >= x2 && x <= x3) return wn;
  const double s = (x < x2) ? (x - x1) / transition_length : (x4 - x) / transition_length;
  // cosine blend, zero slope at both ends
  return wg + (wn - wg) * 0.5 * (1.0 - std::cos(M_PI * s));
}

Mesh2D build_dogbone_mesh(int target_elems, const DogboneGeometry& geom) {
  if (target_elems < 100) throw std::invalid_argument("dog-bone mesh target must be >= 100 elements");
  // pick grid counts for near-square elements: mean height is ~2*mean(half_width)
  double mean_w = 0.0;
  const int probes = 1000;
  for (int i = 0; i <= probes; ++i) mean_w += 2.0 * geom.half_width(geom.length * i / probes);
  mean_w /= probes + 1;
  const double aspect = geom.length / mean_w;
  int ny = std::max(2, static_cast<int>(std::lround(std::sqrt(target_elems / aspect))));
  int nx = std::max(1, static_cast<int>(std::lround(static_cast<double>(target_elems) / ny)));
  if (nx < 11) throw std::invalid_argument("mesh target too coarse to resolve the dog-bone profile");

  Mesh2D mesh;
  const double yc = 0.5 * geom.grip_width;
  mesh.nodes.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1));
  for (int i = 0; i <= nx; ++i) {
    const double x = geom.length * i / nx;
    const double w = geom.half_width(x);
    for (int j = 0; j <= ny; ++j) {
      const double eta = 2.0 * j / ny - 1.0;
      mesh.nodes.push_back({x, yc + w * eta});
    }
  }
  const auto node_id = [ny](int i, int j) { return i * (ny + 1) + j; };
  mesh.quads.reserve(static_cast<std::size_t>(nx) * ny);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      mesh.quads.push_back({node_id(i, j), node_id(i + 1, j), node_id(i + 1, j + 1), node_id(i, j + 1)});
  for (int j = 0; j <= ny; ++j) {
    mesh.left_nodes.push_back(node_id(0, j));
    mesh.right_nodes.push_back(node_id(nx, j));
  }
  if (mesh.min_jacobian() <= 0) throw std::runtime_error("dog-bone mesh has a non-positive Jacobian");
  return mesh;
}

Mesh2D build_rect_mesh(int nx, int ny, double length, double width) {
  Mesh2D mesh;
  for (int i = 0; i <= nx; ++i)
    for (int j = 0; j <= ny; ++j)
      mesh.nodes.push_back({length * i / nx, width * j / ny});
  const auto node_id = [ny](int i, int j) { return i * (ny + 1) + j; };
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      mesh.quads.push_back({node_id(i, j), node_id(i + 1, j), node_id(i + 1, j + 1), node_id(i, j + 1)});
  for (int j = 0; j <= ny; ++j) {
    mesh.left_nodes.push_back(node_id(0, j));
    mesh.right_nodes.push_back(node_id(nx, j));
  }
  return mesh;
}

void save_mesh_txt(const Mesh2D& mesh, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.precision(17);
  f << "seqop-mesh 1\n";
  f << "nodes " << mesh.nodes.size() << "\n";
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
    f << i << " " << mesh.nodes[i][0] << " " << mesh.nodes[i][1] << "\n";
  f << "elements " << mesh.n_elements() << "\n";
  std::size_t eid = 0;
  for (const auto& q : mesh.quads)
    f << eid++ << " q " << q[0] << " " << q[1] << " " << q[2] << " " << q[3] << "\n";
  for (const auto& t : mesh.tris) f << eid++ << " t " << t[0] << " " << t[1] << " " << t[2] << "\n";
  const auto dump_set = [&f](const char* name, const std::vector<int>& s) {
    f << name << " " << s.size();
    for (int n : s) f << " " << n;
    f << "\n";
  };
  dump_set("set left", mesh.left_nodes);
  dump_set("set right", mesh.right_nodes);
}

Mesh2D load_mesh_txt(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::string tag;
  int version = 0;
  f >> tag >> version;
  if (tag != "seqop-mesh" || version != 1) throw std::runtime_error(path + ": not a seqop mesh file");
  Mesh2D mesh;
  std::size_t count = 0;
  f >> tag >> count;
  if (tag != "nodes") throw std::runtime_error(path + ": expected node table");
  mesh.nodes.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t id;
    f >> id >> mesh.nodes[i][0] >> mesh.nodes[i][1];
  }
  f >> tag >> count;
  if (tag != "elements") throw std::runtime_error(path + ": expected element table");
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t id;
    std::string kind;
    f >> id >> kind;
    if (kind == "q") {
      std::array<int, 4> q;
      f >> q[0] >> q[1] >> q[2] >> q[3];
      mesh.quads.push_back(q);
    } else if (kind == "t") {
      std::array<int, 3> t;
      f >> t[0] >> t[1] >> t[2];
      mesh.tris.push_back(t);
    } else {
      throw std::runtime_error(path + ": unknown element kind " + kind);
    }
  }
  while (f >> tag && tag == "set") {
    std::string name;
    std::size_t n;
    f >> name >> n;
    std::vector<int>& s = (name == "left") ? mesh.left_nodes : mesh.right_nodes;
    s.resize(n);
    for (std::size_t i = 0; i < n; ++i) f >> s[i];
  }
  return mesh;
}

}  // namespace seqop
