#pragma once

#include <vector>

#include "rde/env.hpp"

namespace rde {

enum class FaceLabel { kPositive, kNegative, kLateral, kTimeout };

// Planar face n.x = c with outward normal n; the interior is n.x < c.
struct Face {
  Vec normal;
  double offset = 0.0;
  FaceLabel label = FaceLabel::kLateral;
};

// Exit geometry as a finite intersection of half-spaces.  Covers the rotated
// box, the slab, the traversal tube, the 1-D interval and one-sided
// threshold pairs.
class Domain {
 public:
  static Domain box(const Mat& rotation, double depth_neg, double depth_pos,
                    double halfwidth);
  // Slab {|x.e1| < L}; both faces lateral-free: +L is positive, -L negative.
  static Domain slab(int dimension, double half_width);
  // Tube {lo < x.e1 < L, |x.ej| < h}; the x.e1 = L face is positive.
  static Domain tube(int dimension, double depth_lo, double length, double h);
  // Axis-aligned box centered at a point: |(x - center).e1| < depth,
  // |(x - center).ej| < halfwidth.
  static Domain box_at(const Vec& center, double depth, double halfwidth);
  static Domain interval(double lo, double hi);
  // {u_lo < x.l < u_hi} along direction l.
  static Domain thresholds(const Vec& direction, double u_lo, double u_hi);

  const std::vector<Face>& faces() const { return faces_; }
  int dimension() const { return dim_; }
  double diameter() const { return diameter_; }

  bool contains(const Vec& x) const {
    for (const Face& f : faces_)
      if (f.normal.dot(x) >= f.offset) return false;
    return true;
  }

  // Signed distance to the nearest face (positive outside).
  double boundary_violation(const Vec& x) const {
    double worst = -1e300;
    for (const Face& f : faces_)
      worst = std::max(worst, f.normal.dot(x) - f.offset);
    return worst;
  }

 private:
  std::vector<Face> faces_;
  int dim_ = 0;
  double diameter_ = 0.0;
};

}  // namespace rde
