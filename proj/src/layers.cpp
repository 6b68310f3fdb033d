#include "ickan/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace ickan {

namespace {

// Per-input-dimension evaluation state shared by all outputs.
struct DimEval {
  NodeId v = -1;      // vertices, cells+1
  NodeId delta = -1;  // vertex gaps, cells
  NodeId t = -1;      // local coordinates, batch
  NodeId dx = -1;     // located cell widths, batch
  std::vector<int32_t> idx;
};

NodeId build_vertices(Tape& tape, Parameter* e, int j, int cells, double lo,
                      double hi, const std::vector<std::vector<double>>& fixed) {
  if (j < static_cast<int>(fixed.size()) && !fixed[j].empty())
    return tape.constant(fixed[j]);
  if (e != nullptr) return tape.lattice_vertices(tape.leaf(*e, j * cells, cells), lo, hi);
  return tape.constant(Lattice1D::uniform(lo, hi, cells).vertices);
}

DimEval build_dim(Tape& tape, Parameter* e, int j, int cells, const Hypercube& box,
                  NodeId xj, const std::vector<std::vector<double>>& fixed,
                  bool need_width) {
  double lo, hi;
  box.span_for(j, &lo, &hi);
  DimEval dim;
  dim.v = build_vertices(tape, e, j, cells, lo, hi, fixed);
  {
    NodeId parts[2] = {tape.slice(dim.v, 1, cells), tape.slice(dim.v, 0, cells)};
    double coeffs[2] = {1.0, -1.0};
    dim.delta = tape.affine(parts, coeffs);
  }
  const int batch = tape.length(xj);
  dim.idx.resize(batch);
  {
    auto vv = tape.values(dim.v);
    auto xv = tape.values(xj);
    for (int s = 0; s < batch; ++s) dim.idx[s] = locate_cell(xv[s], vv, nullptr);
  }
  dim.t = tape.cell_coord(xj, dim.v, dim.idx);
  if (need_width) dim.dx = tape.cell_width(dim.v, dim.idx);
  return dim;
}

NodeId sum_over_inputs(Tape& tape, std::span<const NodeId> parts) {
  std::vector<double> ones(parts.size(), 1.0);
  return tape.affine(parts, ones);
}

void check_shape(int in, std::span<const NodeId> x) {
  if (static_cast<int>(x.size()) != in)
    throw std::invalid_argument("layer forward: input dimension mismatch");
}

}  // namespace

std::array<double, 4> hermite_basis(double t) {
  const double t2 = t * t, t3 = t2 * t;
  return {2 * t3 - 3 * t2 + 1, t3 - 2 * t2 + t, -2 * t3 + 3 * t2, t3 - t2};
}

ConvexLayer make_convex_layer(ParameterStore& store, const std::string& prefix,
                              int in, int out, int cells, bool first, bool cubic,
                              bool adapt, Rng& rng) {
  if (in < 1 || out < 1 || cells < 1)
    throw std::invalid_argument("make_convex_layer: bad shape");
  ConvexLayer l;
  l.in = in;
  l.out = out;
  l.cells = cells;
  l.first = first;
  l.cubic = cubic;
  l.b = store.create(prefix + ".b", rng.uniform_vec(out * in, -0.1, 0.1));
  l.bhat = store.create(prefix + ".bhat", rng.uniform_vec(out * in, 0.0, 1.0 / in));
  l.d = store.create(prefix + ".d",
                     rng.uniform_vec(out * in * l.pair_d_len(), 0.0, 0.1 / cells));
  if (cubic) l.g = store.create(prefix + ".g", std::vector<double>(out * in * cells, 0.0));
  if (adapt) l.e = store.create(prefix + ".e", std::vector<double>(in * cells, 0.0));
  return l;
}

KanLayer make_kan_layer(ParameterStore& store, const std::string& prefix, int in,
                        int out, int cells, bool adapt, Rng& rng) {
  if (in < 1 || out < 1 || cells < 1)
    throw std::invalid_argument("make_kan_layer: bad shape");
  KanLayer l;
  l.in = in;
  l.out = out;
  l.cells = cells;
  l.a = store.create(prefix + ".a", rng.uniform_vec(out * in * (cells + 1), -0.1, 0.1));
  if (adapt) l.e = store.create(prefix + ".e", std::vector<double>(in * cells, 0.0));
  return l;
}

LayerEval p1_layer_forward(Tape& tape, const ConvexLayer& layer,
                           const Hypercube& in_box, std::span<const NodeId> x,
                           const LayerForwardOpts& opts) {
  check_shape(layer.in, x);
  if (in_box.dim() != layer.in)
    throw std::invalid_argument("p1_layer_forward: box dimension mismatch");
  const int P = layer.cells;

  std::vector<DimEval> dims(layer.in);
  for (int j = 0; j < layer.in; ++j)
    dims[j] = build_dim(tape, layer.e, j, P, in_box, x[j], layer.fixed_vertices,
                        opts.want_jacobian);

  LayerEval ev;
  ev.y.resize(layer.out);
  if (opts.want_jacobian) ev.jac.resize(layer.out * layer.in);
  if (opts.want_box_nodes) {
    ev.box_lo.resize(layer.out);
    ev.box_hi.resize(layer.out);
  }

  std::vector<NodeId> contrib(layer.in), lo_parts(layer.in), hi_parts(layer.in);
  for (int k = 0; k < layer.out; ++k) {
    for (int j = 0; j < layer.in; ++j) {
      const int pair = k * layer.in + j;
      NodeId slopes = tape.convex_slopes(tape.leaf(*layer.bhat, pair, 1),
                                         tape.leaf(*layer.d, pair * (P - 1), P - 1),
                                         layer.first);
      NodeId a = tape.p1_values(tape.leaf(*layer.b, pair, 1), slopes, dims[j].delta);
      contrib[j] = tape.lerp_gather(a, dims[j].t, dims[j].idx);
      if (opts.want_jacobian)
        ev.jac[pair] = tape.gather_slope(a, dims[j].dx, dims[j].idx);
      if (opts.want_box_nodes) {
        lo_parts[j] = tape.min_all(a);
        hi_parts[j] = tape.max_elem(tape.slice(a, 0, 1), tape.slice(a, P, 1));
      }
    }
    ev.y[k] = sum_over_inputs(tape, contrib);
    if (opts.want_box_nodes) {
      ev.box_lo[k] = sum_over_inputs(tape, lo_parts);
      ev.box_hi[k] = sum_over_inputs(tape, hi_parts);
    }
  }
  return ev;
}

LayerEval cubic_layer_forward(Tape& tape, const ConvexLayer& layer,
                              const Hypercube& in_box, std::span<const NodeId> x,
                              const LayerForwardOpts& opts) {
  check_shape(layer.in, x);
  if (in_box.dim() != layer.in)
    throw std::invalid_argument("cubic_layer_forward: box dimension mismatch");
  const int P = layer.cells;
  const int batch = tape.length(x[0]);

  std::vector<DimEval> dims(layer.in);
  for (int j = 0; j < layer.in; ++j)
    dims[j] = build_dim(tape, layer.e, j, P, in_box, x[j], layer.fixed_vertices, true);

  LayerEval ev;
  ev.y.resize(layer.out);
  if (opts.want_jacobian) ev.jac.resize(layer.out * layer.in);
  const bool need_lo = opts.clip || opts.want_box_nodes;
  if (need_lo) ev.box_lo.resize(layer.out);
  if (opts.want_box_nodes) ev.box_hi.resize(layer.out);
  if (opts.clip) ev.clip_mask.assign(layer.out, -1);

  std::vector<NodeId> contrib(layer.in), lo_parts(layer.in), hi_parts(layer.in);
  for (int k = 0; k < layer.out; ++k) {
    for (int j = 0; j < layer.in; ++j) {
      const int pair = k * layer.in + j;
      NodeId a1 = tape.convex_slopes(tape.leaf(*layer.bhat, pair, 1),
                                     tape.leaf(*layer.d, pair * P, P), layer.first);
      NodeId a0 = tape.cubic_values(tape.leaf(*layer.b, pair, 1), a1,
                                    tape.leaf(*layer.g, pair * P, P), dims[j].delta);
      contrib[j] = tape.hermite_mix(a0, a1, dims[j].t, dims[j].dx, dims[j].idx);
      if (opts.want_jacobian)
        ev.jac[pair] = tape.hermite_slope(a0, a1, dims[j].t, dims[j].dx, dims[j].idx);
      if (need_lo) lo_parts[j] = tape.min_all(a0);
      if (opts.want_box_nodes)
        hi_parts[j] = tape.max_elem(tape.slice(a0, 0, 1), tape.slice(a0, P, 1));
    }
    NodeId yhat = sum_over_inputs(tape, contrib);
    if (need_lo) ev.box_lo[k] = sum_over_inputs(tape, lo_parts);
    if (opts.want_box_nodes) ev.box_hi[k] = sum_over_inputs(tape, hi_parts);
    if (opts.clip) {
      // Only the minimum needs truncation: convexity puts the maximum on
      // the domain boundary.
      NodeId clipped = tape.max_elem(yhat, ev.box_lo[k]);
      if (opts.want_jacobian) {
        std::vector<double> mask(batch);
        auto yv = tape.values(yhat);
        const double lo = tape.value(ev.box_lo[k]);
        for (int s = 0; s < batch; ++s) mask[s] = yv[s] >= lo ? 1.0 : 0.0;
        ev.clip_mask[k] = tape.constant(mask);
      }
      ev.y[k] = clipped;
    } else {
      ev.y[k] = yhat;
    }
  }
  return ev;
}

LayerEval kan_layer_forward(Tape& tape, const KanLayer& layer,
                            const Hypercube& in_box, std::span<const NodeId> x,
                            const LayerForwardOpts& opts) {
  check_shape(layer.in, x);
  if (in_box.dim() != layer.in)
    throw std::invalid_argument("kan_layer_forward: box dimension mismatch");
  const int P = layer.cells;

  std::vector<DimEval> dims(layer.in);
  for (int j = 0; j < layer.in; ++j)
    dims[j] = build_dim(tape, layer.e, j, P, in_box, x[j], {}, opts.want_jacobian);

  LayerEval ev;
  ev.y.resize(layer.out);
  if (opts.want_jacobian) ev.jac.resize(layer.out * layer.in);
  if (opts.want_box_nodes) {
    ev.box_lo.resize(layer.out);
    ev.box_hi.resize(layer.out);
  }

  std::vector<NodeId> contrib(layer.in), lo_parts(layer.in), hi_parts(layer.in);
  for (int k = 0; k < layer.out; ++k) {
    for (int j = 0; j < layer.in; ++j) {
      const int pair = k * layer.in + j;
      NodeId a = tape.leaf(*layer.a, pair * (P + 1), P + 1);
      contrib[j] = tape.lerp_gather(a, dims[j].t, dims[j].idx);
      if (opts.want_jacobian)
        ev.jac[pair] = tape.gather_slope(a, dims[j].dx, dims[j].idx);
      if (opts.want_box_nodes) {
        lo_parts[j] = tape.min_all(a);
        hi_parts[j] = tape.max_all(a);
      }
    }
    ev.y[k] = sum_over_inputs(tape, contrib);
    if (opts.want_box_nodes) {
      ev.box_lo[k] = sum_over_inputs(tape, lo_parts);
      ev.box_hi[k] = sum_over_inputs(tape, hi_parts);
    }
  }
  return ev;
}

Lattice1D layer_lattice(const ConvexLayer& layer, int j, double lo, double hi) {
  if (j < static_cast<int>(layer.fixed_vertices.size()) &&
      !layer.fixed_vertices[j].empty()) {
    Lattice1D lat;
    lat.lo = layer.fixed_vertices[j].front();
    lat.hi = layer.fixed_vertices[j].back();
    lat.vertices = layer.fixed_vertices[j];
    return lat;
  }
  if (layer.e != nullptr) {
    Lattice1D lat;
    lat.lo = lo;
    lat.hi = hi;
    lat.vertices = vertices_from_weights(
        std::span<const double>(layer.e->value.data() + j * layer.cells, layer.cells),
        lo, hi);
    return lat;
  }
  return Lattice1D::uniform(lo, hi, layer.cells);
}

Lattice1D kan_lattice(const KanLayer& layer, int j, double lo, double hi) {
  if (layer.e != nullptr) {
    Lattice1D lat;
    lat.lo = lo;
    lat.hi = hi;
    lat.vertices = vertices_from_weights(
        std::span<const double>(layer.e->value.data() + j * layer.cells, layer.cells),
        lo, hi);
    return lat;
  }
  return Lattice1D::uniform(lo, hi, layer.cells);
}

std::vector<double> p1_nodal_values(const ConvexLayer& layer, const Lattice1D& lat,
                                    int k, int j) {
  const int P = layer.cells;
  const int pair = k * layer.in + j;
  const double b = layer.b->value[pair];
  const double bh = layer.bhat->value[pair];
  const double s0 = layer.first ? bh : std::max(bh, 0.0);
  std::vector<double> a(P + 1);
  a[0] = b;
  double slope = s0;
  for (int p = 1; p <= P; ++p) {
    if (p >= 2) slope += std::max(layer.d->value[pair * (P - 1) + p - 2], 0.0);
    a[p] = a[p - 1] + slope * (lat.vertices[p] - lat.vertices[p - 1]);
  }
  return a;
}

std::array<std::vector<double>, 2> cubic_nodal_values(const ConvexLayer& layer,
                                                      const Lattice1D& lat, int k,
                                                      int j) {
  const int P = layer.cells;
  const int pair = k * layer.in + j;
  const double b = layer.b->value[pair];
  const double bh = layer.bhat->value[pair];
  std::vector<double> a1(P + 1), a0(P + 1);
  a1[0] = layer.first ? bh : std::max(bh, 0.0);
  for (int p = 1; p <= P; ++p)
    a1[p] = a1[p - 1] + std::max(layer.d->value[pair * P + p - 1], 0.0);
  a0[0] = b;
  for (int p = 1; p <= P; ++p) {
    const double dl = lat.vertices[p] - lat.vertices[p - 1];
    const double sg = 1.0 / (1.0 + std::exp(-layer.g->value[pair * P + p - 1]));
    a0[p] = a0[p - 1] +
            dl / 3.0 * (2.0 * a1[p - 1] + a1[p] + sg * (a1[p] - a1[p - 1]));
  }
  return {a0, a1};
}

Hypercube convex_layer_image(const ConvexLayer& layer, const Hypercube& in_box) {
  Hypercube out;
  out.lo.assign(layer.out, 0.0);
  out.hi.assign(layer.out, 0.0);
  for (int j = 0; j < layer.in; ++j) {
    double lo, hi;
    in_box.span_for(j, &lo, &hi);
    Lattice1D lat = layer_lattice(layer, j, lo, hi);
    for (int k = 0; k < layer.out; ++k) {
      std::vector<double> a = layer.cubic ? cubic_nodal_values(layer, lat, k, j)[0]
                                          : p1_nodal_values(layer, lat, k, j);
      double mn = a[0];
      for (double v : a) mn = std::min(mn, v);
      out.lo[k] += mn;
      out.hi[k] += std::max(a.front(), a.back());
    }
  }
  return out;
}

Hypercube kan_layer_image(const KanLayer& layer, const Hypercube& in_box) {
  const int P = layer.cells;
  Hypercube out;
  out.lo.assign(layer.out, 0.0);
  out.hi.assign(layer.out, 0.0);
  for (int j = 0; j < layer.in; ++j) {
    (void)in_box;
    for (int k = 0; k < layer.out; ++k) {
      const int pair = k * layer.in + j;
      const double* a = layer.a->value.data() + pair * (P + 1);
      double mn = a[0], mx = a[0];
      for (int p = 1; p <= P; ++p) {
        mn = std::min(mn, a[p]);
        mx = std::max(mx, a[p]);
      }
      out.lo[k] += mn;
      out.hi[k] += mx;
    }
  }
  return out;
}

}  // namespace ickan
