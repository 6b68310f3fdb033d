#include "ickan/network.hpp"

#include <cmath>
#include <stdexcept>

namespace ickan {

std::string family_name(Family f) {
  switch (f) {
    case Family::p1: return "p1";
    case Family::cubic: return "cubic";
    case Family::pickan: return "pickan";
    case Family::icnn: return "icnn";
  }
  return "?";
}

Family family_from_name(const std::string& s) {
  if (s == "p1") return Family::p1;
  if (s == "cubic") return Family::cubic;
  if (s == "pickan") return Family::pickan;
  if (s == "icnn") return Family::icnn;
  throw std::invalid_argument("unknown family: " + s);
}

void NetworkSpec::validate() const {
  if (domain.dim() < 1) throw std::invalid_argument("spec: empty domain");
  for (int i = 0; i < domain.dim(); ++i)
    if (!(domain.lo[i] < domain.hi[i]))
      throw std::invalid_argument("spec: degenerate domain box");
  for (int w : hidden)
    if (w < 1) throw std::invalid_argument("spec: hidden width < 1");
  if (cells < 1) throw std::invalid_argument("spec: P < 1");
  if (family == Family::pickan) {
    if (nx < 1 || ny < 1 || nx + ny != domain.dim())
      throw std::invalid_argument("spec: pickan split does not match domain");
    if (hidden.empty()) throw std::invalid_argument("spec: pickan needs depth >= 1");
    for (int w : hidden)
      if (w != hidden[0])
        throw std::invalid_argument("spec: pickan uses one shared width");
  }
  if (family == Family::icnn && hidden.empty())
    throw std::invalid_argument("spec: icnn needs at least one hidden layer");
}

Model Model::make(const NetworkSpec& spec, uint64_t seed) {
  spec.validate();
  Model m;
  m.spec_ = spec;
  m.store_ = std::make_shared<ParameterStore>();
  Rng rng(seed);
  const int d = spec.input_dim();

  switch (spec.family) {
    case Family::p1:
    case Family::cubic: {
      const bool cubic = spec.family == Family::cubic;
      int prev = d;
      const int total = static_cast<int>(spec.hidden.size()) + 1;
      for (int l = 0; l < total; ++l) {
        const int width = l + 1 < total ? spec.hidden[l] : 1;
        m.convex_.push_back(make_convex_layer(*m.store_, "l" + std::to_string(l),
                                              prev, width, spec.cells, l == 0,
                                              cubic, spec.adapt, rng));
        prev = width;
      }
      break;
    }
    case Family::pickan: {
      const int L = static_cast<int>(spec.hidden.size());
      const int M = spec.hidden[0];
      m.kan_.push_back(make_kan_layer(*m.store_, "rho0", spec.nx, M, spec.cells,
                                      spec.adapt, rng));
      for (int i = 1; i < L; ++i)
        m.kan_.push_back(make_kan_layer(*m.store_, "rho" + std::to_string(i), M, M,
                                        spec.cells, spec.adapt, rng));
      m.convex_.push_back(make_convex_layer(*m.store_, "kap0", spec.ny, M,
                                            spec.cells, true, false, spec.adapt, rng));
      for (int i = 1; i < L; ++i)
        m.convex_.push_back(make_convex_layer(*m.store_, "kap" + std::to_string(i),
                                              M, M, spec.cells, false, false,
                                              spec.adapt, rng));
      m.convex_.push_back(make_convex_layer(*m.store_, "kap" + std::to_string(L), M,
                                            1, spec.cells, false, false, spec.adapt,
                                            rng));
      break;
    }
    case Family::icnn: {
      const int L = static_cast<int>(spec.hidden.size());
      int prev = 0;
      for (int l = 0; l <= L; ++l) {
        const int width = l < L ? spec.hidden[l] : 1;
        IcnnLayer layer;
        layer.in_z = prev;
        layer.out = width;
        const std::string pre = "icnn" + std::to_string(l);
        if (l > 0)
          layer.W = m.store_->create(pre + ".W",
                                     rng.uniform_vec(width * prev, 0.0, 1.0 / prev));
        layer.A = m.store_->create(
            pre + ".A", rng.uniform_vec(width * d, -1.0 / std::sqrt(double(d)),
                                        1.0 / std::sqrt(double(d))));
        layer.bias = m.store_->create(pre + ".bias", std::vector<double>(width, 0.0));
        m.icnn_.push_back(layer);
        prev = width;
      }
      break;
    }
  }
  m.refresh_boxes();
  return m;
}

void Model::refresh_boxes() {
  switch (spec_.family) {
    case Family::p1:
    case Family::cubic: {
      boxes_.assign(1, spec_.domain);
      for (auto& layer : convex_)
        boxes_.push_back(convex_layer_image(layer, boxes_.back()));
      break;
    }
    case Family::pickan: {
      Hypercube dom_x, dom_y;
      dom_x.lo.assign(spec_.domain.lo.begin(), spec_.domain.lo.begin() + spec_.nx);
      dom_x.hi.assign(spec_.domain.hi.begin(), spec_.domain.hi.begin() + spec_.nx);
      dom_y.lo.assign(spec_.domain.lo.begin() + spec_.nx, spec_.domain.lo.end());
      dom_y.hi.assign(spec_.domain.hi.begin() + spec_.nx, spec_.domain.hi.end());
      boxes_x_.assign(1, dom_x);
      for (auto& rho : kan_)
        boxes_x_.push_back(kan_layer_image(rho, boxes_x_.back()));
      boxes_.assign(1, dom_y);
      const int L = static_cast<int>(kan_.size());
      for (int i = 0; i < L; ++i) {
        Hypercube img = convex_layer_image(convex_[i], boxes_[i]);
        boxes_.push_back(interval_add(boxes_x_[i + 1], img));
      }
      break;
    }
    case Family::icnn:
      boxes_.assign(1, spec_.domain);
      break;
  }
}

void Model::project_constraints() {
  for (auto& layer : icnn_) {
    if (!layer.W) continue;
    for (auto& w : layer.W->value)
      if (w < 0.0) w = 0.0;
  }
}

void Model::check_inside(Tape& tape, std::span<const NodeId> x) const {
  if (spec_.extrapolate) return;
  for (size_t j = 0; j < x.size(); ++j) {
    const double lo = spec_.domain.lo[j], hi = spec_.domain.hi[j];
    const double slack = 1e-9 * (1.0 + std::abs(hi - lo));
    for (double v : tape.values(x[j]))
      if (v < lo - slack || v > hi + slack)
        throw std::invalid_argument(
            "forward: input outside the domain box (enable extrapolation)");
  }
}

NodeId Model::forward(Tape& tape, std::span<const NodeId> x,
                      std::vector<NodeId>* grad) {
  if (static_cast<int>(x.size()) != spec_.input_dim())
    throw std::invalid_argument("forward: input width mismatch");
  check_inside(tape, x);
  switch (spec_.family) {
    case Family::p1:
    case Family::cubic:
      return forward_ickan(tape, x, grad);
    case Family::icnn:
      if (grad) throw std::invalid_argument("forward: icnn has no gradient path");
      return forward_icnn(tape, x);
    case Family::pickan:
      throw std::invalid_argument("forward: pickan needs forward_xy");
  }
  return -1;
}

NodeId Model::forward_ickan(Tape& tape, std::span<const NodeId> x,
                            std::vector<NodeId>* grad) {
  const bool cubic = spec_.family == Family::cubic;
  const int total = total_layers();
  std::vector<NodeId> cur(x.begin(), x.end());
  std::vector<LayerEval> evals;
  evals.reserve(total);
  for (int l = 0; l < total; ++l) {
    LayerForwardOpts opts;
    opts.want_jacobian = grad != nullptr;
    opts.clip = l + 1 < total;  // the stacked output layer is the hat operator
    LayerEval ev = cubic ? cubic_layer_forward(tape, convex_[l], boxes_[l], cur, opts)
                         : p1_layer_forward(tape, convex_[l], boxes_[l], cur, opts);
    cur = ev.y;
    evals.push_back(std::move(ev));
  }
  if (grad) {
    // chain rule down the stack: g_j = sum_k J[k][j] * g_k, masking clipped
    // outputs of intermediate cubic layers
    std::vector<NodeId> gnext;  // d output / d (outputs of layer l)
    for (int l = total - 1; l >= 0; --l) {
      const LayerEval& ev = evals[l];
      const int out = static_cast<int>(ev.y.size());
      const int in = convex_[l].in;
      std::vector<NodeId> gmask(out);  // -1 stands for the scalar seed 1
      for (int k = 0; k < out; ++k) {
        NodeId gk = (l == total - 1) ? -1 : gnext[k];
        if (!ev.clip_mask.empty() && ev.clip_mask[k] >= 0)
          gk = gk >= 0 ? tape.mul(gk, ev.clip_mask[k]) : ev.clip_mask[k];
        gmask[k] = gk;
      }
      std::vector<NodeId> gprev(in);
      for (int j = 0; j < in; ++j) {
        std::vector<NodeId> terms(out);
        for (int k = 0; k < out; ++k) {
          NodeId jkj = ev.jac[k * in + j];
          terms[k] = gmask[k] >= 0 ? tape.mul(jkj, gmask[k]) : jkj;
        }
        if (out == 1) {
          gprev[j] = terms[0];
        } else {
          std::vector<double> ones(out, 1.0);
          gprev[j] = tape.affine(terms, ones);
        }
      }
      gnext = std::move(gprev);
    }
    *grad = std::move(gnext);
  }
  return cur[0];
}

NodeId Model::forward_xy(Tape& tape, std::span<const NodeId> x,
                         std::span<const NodeId> y) {
  if (spec_.family != Family::pickan)
    throw std::invalid_argument("forward_xy: not a pickan model");
  if (static_cast<int>(x.size()) != spec_.nx ||
      static_cast<int>(y.size()) != spec_.ny)
    throw std::invalid_argument("forward_xy: width mismatch");
  const int L = static_cast<int>(kan_.size());

  std::vector<NodeId> xi(x.begin(), x.end());
  std::vector<NodeId> yi;
  for (int i = 0; i <= L; ++i) {
    if (i < L) {
      LayerEval rho = kan_layer_forward(tape, kan_[i], boxes_x_[i], xi);
      xi = rho.y;
    }
    if (i == 0) {
      LayerEval kap = p1_layer_forward(tape, convex_[0], boxes_[0], y);
      yi.resize(kap.y.size());
      for (size_t k = 0; k < kap.y.size(); ++k) yi[k] = tape.add(xi[k], kap.y[k]);
    } else if (i < L) {
      LayerEval kap = p1_layer_forward(tape, convex_[i], boxes_[i], yi);
      for (size_t k = 0; k < kap.y.size(); ++k) yi[k] = tape.add(xi[k], kap.y[k]);
    } else {
      LayerEval kap = p1_layer_forward(tape, convex_[L], boxes_[L], yi);
      return kap.y[0];
    }
  }
  return -1;
}

NodeId Model::forward_icnn(Tape& tape, std::span<const NodeId> x) {
  const int batch = tape.length(x[0]);
  const int d = spec_.input_dim();
  NodeId xmat = tape.concat(x);
  NodeId z = -1;
  int zwidth = 0;
  for (size_t l = 0; l < icnn_.size(); ++l) {
    const IcnnLayer& layer = icnn_[l];
    NodeId pre = tape.dense(tape.leaf(*layer.A), xmat, layer.out, d, batch);
    if (layer.W) {
      NodeId wz = tape.dense(tape.leaf(*layer.W), z, layer.out, zwidth, batch);
      pre = tape.add(pre, wz);
    }
    pre = tape.add_row(pre, tape.leaf(*layer.bias), layer.out, batch);
    if (l + 1 < icnn_.size())
      z = spec_.act == Act::relu ? tape.max_const(pre, 0.0) : tape.celu(pre);
    else
      z = pre;  // linear output layer
    zwidth = layer.out;
  }
  return z;  // width 1 x batch
}

std::vector<NodeId> Model::batch_inputs(Tape& tape, std::span<const double> pts,
                                        int batch, int dim) {
  std::vector<NodeId> nodes(dim);
  std::vector<double> col(batch);
  for (int j = 0; j < dim; ++j) {
    for (int s = 0; s < batch; ++s) col[s] = pts[s * dim + j];
    nodes[j] = tape.constant(col);
  }
  return nodes;
}

std::vector<double> Model::eval_batch(std::span<const double> pts, int batch) {
  const int d = spec_.input_dim();
  Tape tape;
  auto x = batch_inputs(tape, pts, batch, d);
  if (spec_.family == Family::pickan) {
    NodeId out = forward_xy(tape, std::span<const NodeId>(x.data(), spec_.nx),
                            std::span<const NodeId>(x.data() + spec_.nx, spec_.ny));
    auto v = tape.values(out);
    return {v.begin(), v.end()};
  }
  NodeId out = forward(tape, x);
  auto v = tape.values(out);
  return {v.begin(), v.end()};
}

std::vector<double> Model::grad_batch(std::span<const double> pts, int batch,
                                      std::vector<double>* values) {
  const int d = spec_.input_dim();
  Tape tape;
  auto x = batch_inputs(tape, pts, batch, d);
  std::vector<NodeId> gnodes;
  NodeId out = forward(tape, x, &gnodes);
  if (values) {
    auto v = tape.values(out);
    values->assign(v.begin(), v.end());
  }
  std::vector<double> g(batch * d);
  for (int j = 0; j < d; ++j) {
    auto v = tape.values(gnodes[j]);
    for (int s = 0; s < batch; ++s) g[s * d + j] = v[s];
  }
  return g;
}

double Model::eval1(std::span<const double> x) { return eval_batch(x, 1)[0]; }

std::vector<double> Model::grad1(std::span<const double> x) {
  return grad_batch(x, 1);
}

Model construct_max_affine_p1(std::span<const double> alpha1, double beta1,
                              std::span<const double> alpha2, double beta2,
                              const Hypercube& domain) {
  const int n = domain.dim();
  if (static_cast<int>(alpha1.size()) != n || static_cast<int>(alpha2.size()) != n)
    throw std::invalid_argument("construct_max_affine_p1: dimension mismatch");

  NetworkSpec spec;
  spec.family = Family::p1;
  spec.hidden = {3, 2};
  spec.cells = 2;
  spec.adapt = false;
  spec.domain = domain;
  Model m = Model::make(spec, 0);

  auto zero_all = [&](ConvexLayer& l) {
    std::fill(l.b->value.begin(), l.b->value.end(), 0.0);
    std::fill(l.bhat->value.begin(), l.bhat->value.end(), 0.0);
    std::fill(l.d->value.begin(), l.d->value.end(), 0.0);
  };
  auto& layers = m.convex_layers();
  for (auto& l : layers) zero_all(l);

  // Layer 0: three affine neurons a1.x + b1, -(a2.x + b2), a2.x + b2.
  // With nodal recursion a_p = b + bhat (x_p - lo), the 1D value at x is
  // b + bhat (x - lo), so fold the lo offsets into the first b.
  double a1lo = 0.0, a2lo = 0.0;
  for (int j = 0; j < n; ++j) {
    a1lo += alpha1[j] * domain.lo[j];
    a2lo += alpha2[j] * domain.lo[j];
  }
  ConvexLayer& l0 = layers[0];
  l0.b->value[0 * n + 0] = beta1 + a1lo;
  l0.b->value[1 * n + 0] = -(beta2 + a2lo);
  l0.b->value[2 * n + 0] = beta2 + a2lo;
  for (int j = 0; j < n; ++j) {
    l0.bhat->value[0 * n + j] = alpha1[j];
    l0.bhat->value[1 * n + j] = -alpha2[j];
    l0.bhat->value[2 * n + j] = alpha2[j];
  }
  m.refresh_boxes();

  // Layer 1: neuron 0 sums inputs 1 and 2 (giving (a1-a2).x + b1-b2),
  // neuron 1 passes input 3 through. Identity on [lo, hi] is b = lo,
  // bhat = 1.
  ConvexLayer& l1 = layers[1];
  const Hypercube& g1 = m.boxes()[1];
  double lo0, hi0;
  for (int j = 0; j < 2; ++j) {
    g1.span_for(j, &lo0, &hi0);
    l1.b->value[0 * 3 + j] = lo0;
    l1.bhat->value[0 * 3 + j] = 1.0;
  }
  g1.span_for(2, &lo0, &hi0);
  l1.b->value[1 * 3 + 2] = lo0;
  l1.bhat->value[1 * 3 + 2] = 1.0;
  m.refresh_boxes();

  // Layer 2: max(u1, 0) + u2. The kink needs an interior vertex at zero;
  // when zero is not interior to u1's image the map degenerates to the
  // identity (image >= 0) or to the zero function (image <= 0).
  ConvexLayer& l2 = layers[2];
  const Hypercube& g2 = m.boxes()[2];
  double lo1, hi1;
  g2.span_for(0, &lo1, &hi1);
  l2.fixed_vertices.assign(2, {});
  if (lo1 < 0.0 && 0.0 < hi1) {
    l2.fixed_vertices[0] = {lo1, 0.0, hi1};
    l2.d->value[0 * 2 + 0] = 1.0;  // pair (k=0, j=0), d_1
  } else if (lo1 >= 0.0) {
    l2.b->value[0 * 2 + 0] = lo1;
    l2.bhat->value[0 * 2 + 0] = 1.0;
  }
  // else: image <= 0, max(u1, 0) = 0, keep the zero parameters
  double lo2, hi2;
  g2.span_for(1, &lo2, &hi2);
  l2.b->value[0 * 2 + 1] = lo2;
  l2.bhat->value[0 * 2 + 1] = 1.0;
  m.refresh_boxes();
  return m;
}

KanStack KanStack::make(int input_dim, const std::vector<int>& widths, int cells,
                        bool adapt, const Hypercube& domain, uint64_t seed) {
  KanStack s;
  s.store_ = std::make_shared<ParameterStore>();
  s.domain_ = domain;
  Rng rng(seed);
  int prev = input_dim;
  for (size_t l = 0; l < widths.size(); ++l) {
    s.layers_.push_back(make_kan_layer(*s.store_, "rho" + std::to_string(l), prev,
                                       widths[l], cells, adapt, rng));
    prev = widths[l];
  }
  s.refresh_boxes();
  return s;
}

void KanStack::refresh_boxes() {
  boxes_.assign(1, domain_);
  for (auto& l : layers_) boxes_.push_back(kan_layer_image(l, boxes_.back()));
}

NodeId KanStack::forward(Tape& tape, std::span<const NodeId> x) {
  std::vector<NodeId> cur(x.begin(), x.end());
  for (size_t l = 0; l < layers_.size(); ++l) {
    LayerEval ev = kan_layer_forward(tape, layers_[l], boxes_[l], cur);
    cur = ev.y;
  }
  return cur[0];
}

}  // namespace ickan
