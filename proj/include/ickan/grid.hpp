#pragma once

#include <span>
#include <vector>

namespace ickan {

// Axis-aligned box; the domain of a layer and the image of its predecessor.
struct Hypercube {
  std::vector<double> lo, hi;

  Hypercube() = default;
  Hypercube(std::vector<double> l, std::vector<double> h);
  static Hypercube cube(double l, double h, int dim);

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(std::span<const double> x) const;
  std::vector<double> clamp(std::span<const double> x) const;

  // Interval endpoints for dimension k, widened when the interval is
  // degenerate so a lattice can always be built on it.
  void span_for(int k, double* l, double* h) const;
};

Hypercube interval_add(const Hypercube& a, const Hypercube& b);

// One trainable or fixed 1D vertex grid on an interval. Adaptive lattices
// are rebuilt from raw weights each step; this struct only carries the
// realized vertices.
struct Lattice1D {
  double lo = 0.0, hi = 1.0;
  std::vector<double> vertices;  // P+1, strictly increasing, [lo .. hi]

  int cells() const { return static_cast<int>(vertices.size()) - 1; }
  static Lattice1D uniform(double lo, double hi, int cells);
};

// Value-level counterpart of Tape::lattice_vertices: e_k = softplus(raw_k)
// + floor, vertices are normalized cumulative sums mapped onto [lo, hi].
std::vector<double> vertices_from_weights(std::span<const double> raw, double lo,
                                          double hi);

// Hat-function values (Psi_0 .. Psi_P) at x; the boundary hats are linearly
// extended outside [lo, hi]. Diagnostic / test utility; layer evaluation
// uses the equivalent two-nonzero local form.
std::vector<double> shape_values(double x, const Lattice1D& lattice);

}  // namespace ickan
