#pragma once

#include <array>
#include <string>
#include <vector>

namespace seqop {

/// Plane mesh of 4-node quadrilaterals and 3-node triangles, lengths in mm.
/// left_nodes / right_nodes are the x = 0 and x = length edge sets.
struct Mesh2D {
  std::vector<std::array<double, 2>> nodes;
  std::vector<std::array<int, 4>> quads;  // CCW
  std::vector<std::array<int, 3>> tris;   // CCW
  std::vector<int> left_nodes, right_nodes;

  int n_nodes() const { return static_cast<int>(nodes.size()); }
  int n_elements() const { return static_cast<int>(quads.size() + tris.size()); }

  std::array<double, 4> bounding_box() const;  // xmin, xmax, ymin, ymax
  /// Smallest element Jacobian determinant (quads: at the 2x2 Gauss points).
  double min_jacobian() const;
};

/// Dog-bone outline parameters. The specimen spans x in [0, length] and
/// y in [0, grip_width], symmetric about y = grip_width/2.
struct DogboneGeometry {
  double length = 110.0;
  double grip_width = 30.0;
  double gauge_width = 20.0;
  double gauge_length = 40.0;
  double transition_length = 15.0;

  /// Half-width profile: grips at both ends, cosine blend into the gauge.
  double half_width(double x) const;
};

/// Structured quad mesh of the dog bone sized to roughly target_elems
/// elements. Throws when the target cannot resolve the geometry.
Mesh2D build_dogbone_mesh(int target_elems, const DogboneGeometry& geom = {});

/// Plain nx-by-ny rectangle, used by patch and verification tests.
Mesh2D build_rect_mesh(int nx, int ny, double length, double width);

/// Plain text format: node table then element table then boundary sets;
/// see README for the exact layout.
void save_mesh_txt(const Mesh2D& mesh, const std::string& path);
Mesh2D load_mesh_txt(const std::string& path);

}  // namespace seqop
