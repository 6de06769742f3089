#pragma once

#include "stiffsearch/common.hpp"

#include <algorithm>
#include <vector>

namespace stiffsearch {

struct Rect {
  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double diagonal() const { return std::hypot(width(), height()); }
  bool contains(const Point& p) const {
    return p.x() >= xmin && p.x() <= xmax && p.y() >= ymin && p.y() <= ymax;
  }
  void validate() const {
    if (!(xmax > xmin) || !(ymax > ymin))
      throw Error("Rect: requires xmax > xmin and ymax > ymin");
  }
};

// Euclidean distance from p to the rectangle (0 if inside).
inline double rect_outside_distance(const Point& p, const Rect& r) {
  double dx = std::max({r.xmin - p.x(), 0.0, p.x() - r.xmax});
  double dy = std::max({r.ymin - p.y(), 0.0, p.y() - r.ymax});
  return std::hypot(dx, dy);
}

// Uniform lattice of cell centers over a rectangle. Values attached to the grid
// are stored row-major from ymin: linear index = iy*nx + ix.
class DomainGrid {
 public:
  DomainGrid() : DomainGrid(Rect{}, 2, 2) {}

  DomainGrid(const Rect& bounds, int nx, int ny) : bounds_(bounds), nx_(nx), ny_(ny) {
    bounds_.validate();
    if (nx_ < 2 || ny_ < 2) throw Error("DomainGrid: nx and ny must be at least 2");
  }

  const Rect& bounds() const { return bounds_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int size() const { return nx_ * ny_; }
  double dx() const { return bounds_.width() / nx_; }
  double dy() const { return bounds_.height() / ny_; }

  int index(int ix, int iy) const { return iy * nx_ + ix; }

  Point center(int ix, int iy) const {
    return {bounds_.xmin + (ix + 0.5) * dx(), bounds_.ymin + (iy + 0.5) * dy()};
  }
  Point center(int idx) const { return center(idx % nx_, idx / nx_); }

  std::vector<Point> centers() const {
    std::vector<Point> c;
    c.reserve(size());
    for (int iy = 0; iy < ny_; ++iy)
      for (int ix = 0; ix < nx_; ++ix) c.push_back(center(ix, iy));
    return c;
  }

  // Bilinear interpolation over the cell-center lattice; outside the outermost
  // centers the value is clamped (constant extension).
  double interpolate(const Eigen::VectorXd& values, const Point& p) const {
    if (values.size() != size())
      throw Error("DomainGrid::interpolate: value vector size does not match grid");
    double u = (p.x() - bounds_.xmin) / dx() - 0.5;
    double v = (p.y() - bounds_.ymin) / dy() - 0.5;
    u = std::clamp(u, 0.0, double(nx_ - 1));
    v = std::clamp(v, 0.0, double(ny_ - 1));
    int i0 = std::min(int(u), nx_ - 2);
    int j0 = std::min(int(v), ny_ - 2);
    double fu = std::clamp(u - i0, 0.0, 1.0);
    double fv = std::clamp(v - j0, 0.0, 1.0);
    double v00 = values[index(i0, j0)];
    double v10 = values[index(i0 + 1, j0)];
    double v01 = values[index(i0, j0 + 1)];
    double v11 = values[index(i0 + 1, j0 + 1)];
    return (1 - fu) * (1 - fv) * v00 + fu * (1 - fv) * v10 + (1 - fu) * fv * v01 +
           fu * fv * v11;
  }

 private:
  Rect bounds_;
  int nx_, ny_;
};

struct Region {
  Rect rect;
  std::vector<int> cells;  // linear cell indices of the owning DomainGrid
};

// Partition of the domain into rx*ry rectangular regions; every grid cell is
// assigned to exactly one region by its center.
class RegionGrid {
 public:
  RegionGrid(const DomainGrid& grid, int rx, int ry, double tumor_threshold,
             double confidence)
      : rx_(rx), ry_(ry), tumor_threshold_(tumor_threshold), confidence_(confidence) {
    if (rx_ < 1 || ry_ < 1) throw Error("RegionGrid: rx and ry must be at least 1");
    if (!(confidence_ > 0.0 && confidence_ < 1.0))
      throw Error("RegionGrid: confidence must lie in (0,1)");
    const Rect& b = grid.bounds();
    double rw = b.width() / rx_;
    double rh = b.height() / ry_;
    regions_.resize(rx_ * ry_);
    for (int j = 0; j < ry_; ++j)
      for (int i = 0; i < rx_; ++i)
        regions_[j * rx_ + i].rect = Rect{b.xmin + i * rw, b.xmin + (i + 1) * rw,
                                          b.ymin + j * rh, b.ymin + (j + 1) * rh};
    for (int idx = 0; idx < grid.size(); ++idx) {
      Point c = grid.center(idx);
      int i = std::min(int((c.x() - b.xmin) / rw), rx_ - 1);
      int j = std::min(int((c.y() - b.ymin) / rh), ry_ - 1);
      regions_[j * rx_ + i].cells.push_back(idx);
    }
  }

  const std::vector<Region>& regions() const { return regions_; }
  int rx() const { return rx_; }
  int ry() const { return ry_; }
  double tumor_threshold() const { return tumor_threshold_; }
  double confidence() const { return confidence_; }

 private:
  int rx_, ry_;
  double tumor_threshold_;
  double confidence_;
  std::vector<Region> regions_;
};

// A scalar acquisition surface sampled on the grid's cell centers.
struct AcquisitionField {
  Eigen::VectorXd values;
  bool normalized = false;
};

// Scale so the maximum is 1; for fields that can be negative (level-set
// ambiguity), shift by the minimum first. A constant-zero field stays zero.
inline void normalize_field(AcquisitionField& f, bool shift_min) {
  if (f.values.size() == 0) throw Error("normalize_field: empty field");
  if (shift_min) f.values.array() -= f.values.minCoeff();
  double m = f.values.maxCoeff();
  if (m > 0.0) f.values /= m;
  f.normalized = true;
}

// Index of the maximum; ties break to the lowest linear index.
inline int argmax_cell(const AcquisitionField& f) {
  if (f.values.size() == 0) throw Error("argmax_cell: empty field");
  int best = 0;
  for (int i = 1; i < f.values.size(); ++i)
    if (f.values[i] > f.values[best]) best = i;
  return best;
}

}  // namespace stiffsearch
