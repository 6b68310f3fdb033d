#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ickan/param.hpp"

namespace ickan {

using NodeId = int32_t;

// Operation kinds recorded on the tape. Elementwise binary ops broadcast a
// length-1 operand against an array operand. The *Gather / Cell / Hermite
// kinds carry a per-sample cell index in the int aux pool; the index is
// frozen at record time (cell membership is piecewise constant in the
// inputs, so this is exact almost everywhere).
enum class OpKind : uint8_t {
  kConst,
  kLeaf,            // view of a Parameter subrange
  kAdd,
  kSub,
  kMul,
  kDiv,
  kMaxConst,        // max(x, c); derivative 0 at x == c
  kMaxElem,         // ties route the adjoint to the first argument
  kMinElem,         // ties route the adjoint to the first argument
  kSigmoid,
  kPowInt,          // x^k, integer k in {1,2,3}
  kCelu,            // x > 0 ? x : exp(x) - 1
  kSum,             // scalar
  kDot,             // scalar
  kMinAll,          // scalar; tie -> lowest index
  kMaxAll,          // scalar; tie -> lowest index
  kSlice,           // contiguous subrange copy
  kAffine,          // c0 + sum_i c_i * parent_i (scalar parents broadcast)
  kConvexSlopes,    // slope(bhat) + prefix sums of max(d_i, 0)
  kP1Values,        // convex nodal values from (b, slopes, delta)
  kCubicValues,     // cubic nodal values from (b, a1, g, delta)
  kLatticeVertices, // adaptive grid vertices from raw weights
  kCellCoord,       // local coordinate t inside the located cell
  kCellWidth,       // located cell width
  kLerpGather,      // a[p]*(1-t) + a[p+1]*t
  kGatherSlope,     // (a[p+1]-a[p]) / dx
  kHermiteMix,      // cubic Hermite patch value (linear outside the grid)
  kHermiteSlope,    // cubic Hermite patch derivative in x
  kDense,           // W (m x n) times X (n x batch)
  kAddRow,          // X (m x batch) plus per-row bias b (m)
  kConcat,          // concatenation of the parents
};

struct Node {
  OpKind kind;
  int32_t val = 0;       // offset into the value arena
  int32_t len = 0;
  int32_t par = 0;       // offset into the parent pool
  int32_t npar = 0;
  int32_t auxi = 0;      // offset into the int aux pool
  int32_t nauxi = 0;
  int32_t auxd = 0;      // offset into the double aux pool
  int32_t nauxd = 0;
  Parameter* param = nullptr;  // kLeaf
  int32_t param_ofs = 0;
};

// Append-only record of array-valued operations supporting one reverse
// sweep. Values live in a shared arena that is recycled by reset(), so a
// training loop does not reallocate after the first step.
class Tape {
 public:
  // --- leaves ---
  NodeId constant(std::span<const double> v);
  NodeId constant(double v);
  NodeId leaf(Parameter& p) { return leaf(p, 0, p.size()); }
  NodeId leaf(Parameter& p, int offset, int len);

  // --- elementwise / reductions ---
  NodeId add(NodeId a, NodeId b) { return binary(OpKind::kAdd, a, b); }
  NodeId sub(NodeId a, NodeId b) { return binary(OpKind::kSub, a, b); }
  NodeId mul(NodeId a, NodeId b) { return binary(OpKind::kMul, a, b); }
  NodeId div(NodeId a, NodeId b) { return binary(OpKind::kDiv, a, b); }
  NodeId max_elem(NodeId a, NodeId b) { return binary(OpKind::kMaxElem, a, b); }
  NodeId min_elem(NodeId a, NodeId b) { return binary(OpKind::kMinElem, a, b); }
  NodeId max_const(NodeId a, double c);
  NodeId sigmoid(NodeId a);
  NodeId pow_int(NodeId a, int k);
  NodeId celu(NodeId a);
  NodeId sum(NodeId a);
  NodeId dot(NodeId a, NodeId b);
  NodeId min_all(NodeId a);
  NodeId max_all(NodeId a);
  NodeId slice(NodeId a, int offset, int len);
  NodeId affine(std::span<const NodeId> parents, std::span<const double> coeffs,
                double c0 = 0.0);
  NodeId scale(NodeId a, double c, double c0 = 0.0) {
    NodeId p[1] = {a};
    double w[1] = {c};
    return affine(p, w, c0);
  }

  // --- fused spline kinds ---
  NodeId convex_slopes(NodeId bhat, NodeId d, bool first_layer);
  NodeId p1_values(NodeId b, NodeId slopes, NodeId delta);
  NodeId cubic_values(NodeId b, NodeId a1, NodeId g, NodeId delta);
  NodeId lattice_vertices(NodeId raw, double lo, double hi);
  NodeId cell_coord(NodeId x, NodeId v, std::span<const int32_t> idx);
  NodeId cell_width(NodeId v, std::span<const int32_t> idx);
  NodeId lerp_gather(NodeId a, NodeId t, std::span<const int32_t> idx);
  NodeId gather_slope(NodeId a, NodeId dx, std::span<const int32_t> idx);
  NodeId hermite_mix(NodeId a0, NodeId a1, NodeId t, NodeId dx,
                     std::span<const int32_t> idx);
  NodeId hermite_slope(NodeId a0, NodeId a1, NodeId t, NodeId dx,
                       std::span<const int32_t> idx);

  // --- dense kinds (ICNN) ---
  NodeId dense(NodeId w, NodeId x, int m, int n, int batch);
  NodeId add_row(NodeId x, NodeId b, int m, int batch);
  NodeId concat(std::span<const NodeId> parts);

  // Generic record entry point; named helpers funnel through this.
  NodeId record(OpKind kind, std::span<const NodeId> parents,
                std::span<const int32_t> auxi = {},
                std::span<const double> auxd = {});

  std::span<const double> values(NodeId n) const {
    const Node& nd = nodes_[n];
    return {storage_.data() + nd.val, static_cast<size_t>(nd.len)};
  }
  double value(NodeId n) const { return storage_[nodes_[n].val]; }
  int length(NodeId n) const { return nodes_[n].len; }

  // Reverse sweep from a scalar output. Zeroes the adjoints of every
  // parameter leaf reachable on this tape, then accumulates d output / d
  // parameter into Parameter::adjoint. Repeated calls give identical results.
  void backward(NodeId output);

  // Adjoint of an arbitrary node from the last backward() call.
  std::span<const double> adjoint(NodeId n) const {
    const Node& nd = nodes_[n];
    return {adjoint_.data() + nd.val, static_cast<size_t>(nd.len)};
  }

  void reset();
  size_t size() const { return nodes_.size(); }

 private:
  NodeId binary(OpKind kind, NodeId a, NodeId b);
  NodeId push_node(OpKind kind, int len, std::span<const NodeId> parents,
                   std::span<const int32_t> auxi, std::span<const double> auxd);
  void compute(Node& nd);
  void backprop(const Node& nd);

  std::vector<Node> nodes_;
  std::vector<double> storage_;
  std::vector<double> adjoint_;
  std::vector<NodeId> parents_;
  std::vector<int32_t> auxi_;
  std::vector<double> auxd_;
};

// Locate x in a strictly increasing vertex array (cells are left-closed,
// the last cell is closed). Out-of-domain points map to the boundary cells
// with t < 0 or t > 1. Returns the cell index, writes the local coordinate.
int locate_cell(double x, std::span<const double> vertices, double* t);

}  // namespace ickan
