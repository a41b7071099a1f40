#include "rde/domain.hpp"

#include <limits>

namespace rde {
namespace {

Vec axis(int d, int i, double sign) {
  Vec n = Vec::Zero(d);
  n[i] = sign;
  return n;
}

}  // namespace

Domain Domain::box(const Mat& rotation, double depth_neg, double depth_pos,
                   double halfwidth) {
  Domain dom;
  const int d = static_cast<int>(rotation.rows());
  dom.dim_ = d;
  // Interior R((-L^-, L^+) x (-Ltilde, Ltilde)^{d-1}); faces are planes with
  // normals R(e_i).
  const Vec l = rotation.col(0);
  dom.faces_.push_back({l, depth_pos, FaceLabel::kPositive});
  dom.faces_.push_back({Vec(-l), depth_neg, FaceLabel::kNegative});
  for (int j = 1; j < d; ++j) {
    const Vec e = rotation.col(j);
    dom.faces_.push_back({e, halfwidth, FaceLabel::kLateral});
    dom.faces_.push_back({Vec(-e), halfwidth, FaceLabel::kLateral});
  }
  double wide = depth_neg + depth_pos;
  if (d > 1) wide = std::max(wide, 2.0 * halfwidth);
  dom.diameter_ = wide;
  return dom;
}

Domain Domain::slab(int dimension, double half_width) {
  Domain dom;
  dom.dim_ = dimension;
  dom.faces_.push_back({axis(dimension, 0, 1.0), half_width,
                        FaceLabel::kPositive});
  dom.faces_.push_back({axis(dimension, 0, -1.0), half_width,
                        FaceLabel::kNegative});
  dom.diameter_ = 2.0 * half_width;
  return dom;
}

Domain Domain::tube(int dimension, double depth_lo, double length, double h) {
  Domain dom;
  dom.dim_ = dimension;
  dom.faces_.push_back({axis(dimension, 0, 1.0), length, FaceLabel::kPositive});
  dom.faces_.push_back({axis(dimension, 0, -1.0), depth_lo,
                        FaceLabel::kNegative});
  for (int j = 1; j < dimension; ++j) {
    dom.faces_.push_back({axis(dimension, j, 1.0), h, FaceLabel::kLateral});
    dom.faces_.push_back({axis(dimension, j, -1.0), h, FaceLabel::kLateral});
  }
  dom.diameter_ = std::max(length + depth_lo, dimension > 1 ? 2.0 * h : 0.0);
  return dom;
}

Domain Domain::box_at(const Vec& center, double depth, double halfwidth) {
  Domain dom;
  const int d = static_cast<int>(center.size());
  dom.dim_ = d;
  dom.faces_.push_back({axis(d, 0, 1.0), center[0] + depth,
                        FaceLabel::kPositive});
  dom.faces_.push_back({axis(d, 0, -1.0), -center[0] + depth,
                        FaceLabel::kNegative});
  for (int j = 1; j < d; ++j) {
    dom.faces_.push_back({axis(d, j, 1.0), center[j] + halfwidth,
                          FaceLabel::kLateral});
    dom.faces_.push_back({axis(d, j, -1.0), -center[j] + halfwidth,
                          FaceLabel::kLateral});
  }
  dom.diameter_ = std::max(2.0 * depth, d > 1 ? 2.0 * halfwidth : 0.0);
  return dom;
}

Domain Domain::interval(double lo, double hi) {
  Domain dom;
  dom.dim_ = 1;
  dom.faces_.push_back({axis(1, 0, 1.0), hi, FaceLabel::kPositive});
  dom.faces_.push_back({axis(1, 0, -1.0), -lo, FaceLabel::kNegative});
  dom.diameter_ = hi - lo;
  return dom;
}

Domain Domain::thresholds(const Vec& direction, double u_lo, double u_hi) {
  Domain dom;
  dom.dim_ = static_cast<int>(direction.size());
  Vec l = direction.normalized();
  dom.faces_.push_back({l, u_hi, FaceLabel::kPositive});
  dom.faces_.push_back({Vec(-l), -u_lo, FaceLabel::kNegative});
  dom.diameter_ = u_hi - u_lo;
  return dom;
}

}  // namespace rde
