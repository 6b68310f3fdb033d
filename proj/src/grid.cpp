#include "ickan/grid.hpp"

#include <cmath>
#include <stdexcept>

#include "ickan/tape.hpp"

namespace ickan {

Hypercube::Hypercube(std::vector<double> l, std::vector<double> h)
    : lo(std::move(l)), hi(std::move(h)) {
  if (lo.size() != hi.size()) throw std::invalid_argument("hypercube: dim mismatch");
  for (size_t i = 0; i < lo.size(); ++i)
    if (lo[i] > hi[i]) throw std::invalid_argument("hypercube: lo > hi");
}

Hypercube Hypercube::cube(double l, double h, int dim) {
  return Hypercube(std::vector<double>(dim, l), std::vector<double>(dim, h));
}

bool Hypercube::contains(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim())
    throw std::invalid_argument("contains: dim mismatch");
  for (int i = 0; i < dim(); ++i)
    if (x[i] < lo[i] || x[i] > hi[i]) return false;
  return true;
}

std::vector<double> Hypercube::clamp(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim())
    throw std::invalid_argument("clamp: dim mismatch");
  std::vector<double> y(x.begin(), x.end());
  for (int i = 0; i < dim(); ++i) {
    if (y[i] < lo[i]) y[i] = lo[i];
    if (y[i] > hi[i]) y[i] = hi[i];
  }
  return y;
}

void Hypercube::span_for(int k, double* l, double* h) const {
  double a = lo[k], b = hi[k];
  if (a >= b) {
    const double c = a;
    const double eps = 1e-6 * (1.0 + std::abs(c));
    a = c - eps;
    b = c + eps;
  }
  *l = a;
  *h = b;
}

Hypercube interval_add(const Hypercube& a, const Hypercube& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("interval_add: dim mismatch");
  Hypercube r = a;
  for (int i = 0; i < a.dim(); ++i) {
    r.lo[i] += b.lo[i];
    r.hi[i] += b.hi[i];
  }
  return r;
}

Lattice1D Lattice1D::uniform(double lo, double hi, int cells) {
  if (lo >= hi) throw std::invalid_argument("lattice: lo >= hi");
  if (cells < 1) throw std::invalid_argument("lattice: cells < 1");
  Lattice1D l;
  l.lo = lo;
  l.hi = hi;
  l.vertices.resize(cells + 1);
  for (int p = 0; p <= cells; ++p)
    l.vertices[p] = lo + (hi - lo) * static_cast<double>(p) / cells;
  l.vertices[cells] = hi;
  return l;
}

std::vector<double> vertices_from_weights(std::span<const double> raw, double lo,
                                          double hi) {
  if (lo >= hi) throw std::invalid_argument("vertices_from_weights: lo >= hi");
  if (raw.empty()) throw std::invalid_argument("vertices_from_weights: P < 1");
  Tape tape;
  NodeId r = tape.constant(raw);
  NodeId v = tape.lattice_vertices(r, lo, hi);
  auto vals = tape.values(v);
  return {vals.begin(), vals.end()};
}

std::vector<double> shape_values(double x, const Lattice1D& lattice) {
  const auto& v = lattice.vertices;
  const int P = lattice.cells();
  std::vector<double> psi(P + 1, 0.0);
  double t = 0.0;
  const int p = locate_cell(x, v, &t);
  psi[p] = 1.0 - t;
  psi[p + 1] = t;
  return psi;
}

}  // namespace ickan
