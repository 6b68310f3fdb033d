#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "ickan/grid.hpp"
#include "ickan/param.hpp"
#include "ickan/rng.hpp"
#include "ickan/tape.hpp"

namespace ickan {

// One convex KAN layer (piecewise-linear or cubic Hermite). Each (output k,
// input j) pair owns scalars b, bhat and the increment vector d (plus gate
// logits g for the cubic variant); each input dimension owns one lattice,
// shared across outputs. Parameters live in the model's store.
struct ConvexLayer {
  int in = 0, out = 0, cells = 0;
  bool first = false;   // first layer: slope(bhat) = bhat, else max(bhat, 0)
  bool cubic = false;
  Parameter* b = nullptr;     // out*in
  Parameter* bhat = nullptr;  // out*in
  Parameter* d = nullptr;     // out*in*(cells-1) for P1, out*in*cells for cubic
  Parameter* g = nullptr;     // out*in*cells, cubic only
  Parameter* e = nullptr;     // in*cells raw grid weights, adaptive only

  // Explicit vertex override per input dimension (used by the exact
  // max-affine construction); empty vectors fall back to the box grid.
  std::vector<std::vector<double>> fixed_vertices;

  int pair_d_len() const { return cubic ? cells : cells - 1; }
};

// Unconstrained P1-KAN layer (the nonconvex side channel of PICKAN): free
// nodal values per (k, j) pair.
struct KanLayer {
  int in = 0, out = 0, cells = 0;
  Parameter* a = nullptr;  // out*in*(cells+1)
  Parameter* e = nullptr;  // adaptive raw weights, in*cells
};

struct LayerForwardOpts {
  bool want_jacobian = false;
  bool want_box_nodes = false;  // cubic layers always build lower-bound nodes
  bool clip = true;             // cubic only; the final stacked layer is unclipped
};

struct LayerEval {
  std::vector<NodeId> y;             // out, batch arrays
  std::vector<NodeId> jac;           // out*in batch arrays (unclipped), optional
  std::vector<NodeId> clip_mask;     // out, constant 0/1 arrays when clipping hit
  std::vector<NodeId> box_lo, box_hi;  // out, scalar nodes, optional
};

ConvexLayer make_convex_layer(ParameterStore& store, const std::string& prefix,
                              int in, int out, int cells, bool first, bool cubic,
                              bool adapt, Rng& rng);
KanLayer make_kan_layer(ParameterStore& store, const std::string& prefix, int in,
                        int out, int cells, bool adapt, Rng& rng);

LayerEval p1_layer_forward(Tape& tape, const ConvexLayer& layer,
                           const Hypercube& in_box, std::span<const NodeId> x,
                           const LayerForwardOpts& opts = {});
LayerEval cubic_layer_forward(Tape& tape, const ConvexLayer& layer,
                              const Hypercube& in_box, std::span<const NodeId> x,
                              const LayerForwardOpts& opts = {});
LayerEval kan_layer_forward(Tape& tape, const KanLayer& layer,
                            const Hypercube& in_box, std::span<const NodeId> x,
                            const LayerForwardOpts& opts = {});

// Image hypercube of a layer over in_box, from current parameter values.
Hypercube convex_layer_image(const ConvexLayer& layer, const Hypercube& in_box);
Hypercube kan_layer_image(const KanLayer& layer, const Hypercube& in_box);

// Realized lattice of input dimension j on the given interval.
Lattice1D layer_lattice(const ConvexLayer& layer, int j, double lo, double hi);
Lattice1D kan_lattice(const KanLayer& layer, int j, double lo, double hi);

// Nodal values of the (k, j) one-dimensional function (value level).
std::vector<double> p1_nodal_values(const ConvexLayer& layer, const Lattice1D& lat,
                                    int k, int j);
// Returns {a0 (values), a1 (derivatives)}.
std::array<std::vector<double>, 2> cubic_nodal_values(const ConvexLayer& layer,
                                                      const Lattice1D& lat, int k,
                                                      int j);

// The four cubic Hermite basis polynomials (h00, h10, h01, h11) at t.
std::array<double, 4> hermite_basis(double t);

}  // namespace ickan
