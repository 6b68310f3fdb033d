#include "ickan/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace ickan {

namespace {

constexpr double kWeightFloor = 1e-3;  // softplus floor for grid weights

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}
inline double sigmoid_fn(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct HermiteBasis {
  double h00, h10, h01, h11;
};
inline HermiteBasis hermite(double t) {
  const double t2 = t * t, t3 = t2 * t;
  return {2 * t3 - 3 * t2 + 1, t3 - 2 * t2 + t, -2 * t3 + 3 * t2, t3 - t2};
}
inline HermiteBasis hermite_d1(double t) {
  const double t2 = t * t;
  return {6 * t2 - 6 * t, 3 * t2 - 4 * t + 1, -6 * t2 + 6 * t, 3 * t2 - 2 * t};
}
inline HermiteBasis hermite_d2(double t) {
  return {12 * t - 6, 6 * t - 4, -12 * t + 6, 6 * t - 2};
}

}  // namespace

int locate_cell(double x, std::span<const double> vertices, double* t) {
  const int cells = static_cast<int>(vertices.size()) - 1;
  int p;
  if (x < vertices[0]) {
    p = 0;
  } else if (x >= vertices[cells]) {
    p = cells - 1;
  } else {
    // first vertex strictly greater than x, minus one
    p = static_cast<int>(std::upper_bound(vertices.begin(), vertices.end(), x) -
                         vertices.begin()) -
        1;
    p = std::min(p, cells - 1);
  }
  if (t) *t = (x - vertices[p]) / (vertices[p + 1] - vertices[p]);
  return p;
}

NodeId Tape::push_node(OpKind kind, int len, std::span<const NodeId> parents,
                       std::span<const int32_t> auxi,
                       std::span<const double> auxd) {
  Node nd;
  nd.kind = kind;
  nd.len = len;
  nd.val = static_cast<int32_t>(storage_.size());
  storage_.resize(storage_.size() + len);
  nd.par = static_cast<int32_t>(parents_.size());
  nd.npar = static_cast<int32_t>(parents.size());
  parents_.insert(parents_.end(), parents.begin(), parents.end());
  nd.auxi = static_cast<int32_t>(auxi_.size());
  nd.nauxi = static_cast<int32_t>(auxi.size());
  auxi_.insert(auxi_.end(), auxi.begin(), auxi.end());
  nd.auxd = static_cast<int32_t>(auxd_.size());
  nd.nauxd = static_cast<int32_t>(auxd.size());
  auxd_.insert(auxd_.end(), auxd.begin(), auxd.end());
  for (NodeId p : parents) {
    if (p < 0 || p >= static_cast<NodeId>(nodes_.size()))
      throw std::invalid_argument("tape: invalid parent handle");
  }
  nodes_.push_back(nd);
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::record(OpKind kind, std::span<const NodeId> parents,
                    std::span<const int32_t> auxi,
                    std::span<const double> auxd) {
  switch (kind) {
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul:
    case OpKind::kDiv:
    case OpKind::kMaxElem:
    case OpKind::kMinElem:
      if (parents.size() != 2) throw std::invalid_argument("binary op needs 2 parents");
      return binary(kind, parents[0], parents[1]);
    case OpKind::kMaxConst:
      return max_const(parents[0], auxd.empty() ? 0.0 : auxd[0]);
    case OpKind::kSigmoid:
      return sigmoid(parents[0]);
    case OpKind::kPowInt:
      return pow_int(parents[0], auxi.empty() ? 2 : auxi[0]);
    case OpKind::kCelu:
      return celu(parents[0]);
    case OpKind::kSum:
      return sum(parents[0]);
    case OpKind::kDot:
      return dot(parents[0], parents[1]);
    case OpKind::kMinAll:
      return min_all(parents[0]);
    case OpKind::kMaxAll:
      return max_all(parents[0]);
    case OpKind::kAffine:
      return affine(parents, auxd.subspan(1), auxd[0]);
    default:
      throw std::invalid_argument("tape: unknown or non-generic op kind");
  }
}

void Tape::reset() {
  nodes_.clear();
  storage_.clear();
  adjoint_.clear();
  parents_.clear();
  auxi_.clear();
  auxd_.clear();
}

NodeId Tape::constant(std::span<const double> v) {
  NodeId id = push_node(OpKind::kConst, static_cast<int>(v.size()), {}, {}, {});
  std::copy(v.begin(), v.end(), storage_.begin() + nodes_[id].val);
  return id;
}

NodeId Tape::constant(double v) { return constant(std::span<const double>(&v, 1)); }

NodeId Tape::leaf(Parameter& p, int offset, int len) {
  if (offset < 0 || len < 0 || offset + len > p.size())
    throw std::invalid_argument("leaf: subrange out of bounds for " + p.name);
  NodeId id = push_node(OpKind::kLeaf, len, {}, {}, {});
  Node& nd = nodes_[id];
  nd.param = &p;
  nd.param_ofs = offset;
  std::copy(p.value.begin() + offset, p.value.begin() + offset + len,
            storage_.begin() + nd.val);
  return id;
}

NodeId Tape::binary(OpKind kind, NodeId a, NodeId b) {
  const int la = nodes_[a].len, lb = nodes_[b].len;
  if (la != lb && la != 1 && lb != 1)
    throw std::invalid_argument("tape: shape mismatch in elementwise op");
  NodeId ps[2] = {a, b};
  NodeId id = push_node(kind, std::max(la, lb), ps, {}, {});
  compute(nodes_[id]);
  return id;
}

NodeId Tape::max_const(NodeId a, double c) {
  NodeId ps[1] = {a};
  double cv[1] = {c};
  NodeId id = push_node(OpKind::kMaxConst, nodes_[a].len, ps, {}, cv);
  compute(nodes_[id]);
  return id;
}

NodeId Tape::sigmoid(NodeId a) {
  NodeId ps[1] = {a};
  NodeId id = push_node(OpKind::kSigmoid, nodes_[a].len, ps, {}, {});
  compute(nodes_[id]);
  return id;
}

NodeId Tape::pow_int(NodeId a, int k) {
  if (k < 1 || k > 3) throw std::invalid_argument("pow_int: exponent must be 1..3");
  NodeId ps[1] = {a};
  int32_t kv[1] = {k};
  NodeId id = push_node(OpKind::kPowInt, nodes_[a].len, ps, kv, {});
  compute(nodes_[id]);
  return id;
}

NodeId Tape::celu(NodeId a) {
  NodeId ps[1] = {a};
  NodeId id = push_node(OpKind::kCelu, nodes_[a].len, ps, {}, {});
  compute(nodes_[id]);
  return id;
}

NodeId Tape::sum(NodeId a) {
  NodeId ps[1] = {a};
  NodeId id = push_node(OpKind::kSum, 1, ps, {}, {});
  compute(nodes_[id]);
  return id;
}

NodeId Tape::dot(NodeId a, NodeId b) {
  if (nodes_[a].len != nodes_[b].len)
    throw std::invalid_argument("dot: shape mismatch");
  NodeId ps[2] = {a, b};
  NodeId id = push_node(OpKind::kDot, 1, ps, {}, {});
  compute(nodes_[id]);
  return id;
}

NodeId Tape::min_all(NodeId a) {
  NodeId ps[1] = {a};
  NodeId id = push_node(OpKind::kMinAll, 1, ps, {}, {});
  compute(nodes_[id]);
  return id;
}

NodeId Tape::max_all(NodeId a) {
  NodeId ps[1] = {a};
  NodeId id = push_node(OpKind::kMaxAll, 1, ps, {}, {});
  compute(nodes_[id]);
  return id;
}

NodeId Tape::slice(NodeId a, int offset, int len) {
  if (offset < 0 || len < 0 || offset + len > nodes_[a].len)
    throw std::invalid_argument("slice: out of bounds");
  NodeId ps[1] = {a};
  int32_t av[1] = {offset};
  NodeId id = push_node(OpKind::kSlice, len, ps, av, {});
  compute(nodes_[id]);
  return id;
}

NodeId Tape::affine(std::span<const NodeId> parents,
                    std::span<const double> coeffs, double c0) {
  if (parents.size() != coeffs.size())
    throw std::invalid_argument("affine: coeff count mismatch");
  int len = 1;
  for (NodeId p : parents) {
    const int l = nodes_[p].len;
    if (l != 1) {
      if (len != 1 && l != len)
        throw std::invalid_argument("affine: shape mismatch");
      len = l;
    }
  }
  std::vector<double> aux(coeffs.size() + 1);
  aux[0] = c0;
  std::copy(coeffs.begin(), coeffs.end(), aux.begin() + 1);
  NodeId id = push_node(OpKind::kAffine, len, parents, {}, aux);
  compute(nodes_[id]);
  return id;
}

NodeId Tape::convex_slopes(NodeId bhat, NodeId d, bool first_layer) {
  if (nodes_[bhat].len != 1) throw std::invalid_argument("convex_slopes: bhat not scalar");
  NodeId ps[2] = {bhat, d};
  int32_t av[1] = {first_layer ? 1 : 0};
  NodeId id = push_node(OpKind::kConvexSlopes, nodes_[d].len + 1, ps, av, {});
  compute(nodes_[id]);
  return id;
}

NodeId Tape::p1_values(NodeId b, NodeId slopes, NodeId delta) {
  if (nodes_[slopes].len != nodes_[delta].len)
    throw std::invalid_argument("p1_values: slopes/delta mismatch");
  NodeId ps[3] = {b, slopes, delta};
  NodeId id = push_node(OpKind::kP1Values, nodes_[delta].len + 1, ps, {}, {});
  compute(nodes_[id]);
  return id;
}

NodeId Tape::cubic_values(NodeId b, NodeId a1, NodeId g, NodeId delta) {
  const int cells = nodes_[delta].len;
  if (nodes_[a1].len != cells + 1 || nodes_[g].len != cells)
    throw std::invalid_argument("cubic_values: shape mismatch");
  NodeId ps[4] = {b, a1, g, delta};
  NodeId id = push_node(OpKind::kCubicValues, cells + 1, ps, {}, {});
  compute(nodes_[id]);
  return id;
}

NodeId Tape::lattice_vertices(NodeId raw, double lo, double hi) {
  if (lo >= hi) throw std::invalid_argument("lattice_vertices: lo >= hi");
  NodeId ps[1] = {raw};
  double av[2] = {lo, hi};
  NodeId id = push_node(OpKind::kLatticeVertices, nodes_[raw].len + 1, ps, {}, av);
  compute(nodes_[id]);
  return id;
}

NodeId Tape::cell_coord(NodeId x, NodeId v, std::span<const int32_t> idx) {
  if (static_cast<int>(idx.size()) != nodes_[x].len)
    throw std::invalid_argument("cell_coord: idx size mismatch");
  NodeId ps[2] = {x, v};
  NodeId id = push_node(OpKind::kCellCoord, nodes_[x].len, ps, idx, {});
  compute(nodes_[id]);
  return id;
}

NodeId Tape::cell_width(NodeId v, std::span<const int32_t> idx) {
  NodeId ps[1] = {v};
  NodeId id = push_node(OpKind::kCellWidth, static_cast<int>(idx.size()), ps, idx, {});
  compute(nodes_[id]);
  return id;
}

NodeId Tape::lerp_gather(NodeId a, NodeId t, std::span<const int32_t> idx) {
  if (static_cast<int>(idx.size()) != nodes_[t].len)
    throw std::invalid_argument("lerp_gather: idx size mismatch");
  NodeId ps[2] = {a, t};
  NodeId id = push_node(OpKind::kLerpGather, nodes_[t].len, ps, idx, {});
  compute(nodes_[id]);
  return id;
}

NodeId Tape::gather_slope(NodeId a, NodeId dx, std::span<const int32_t> idx) {
  if (static_cast<int>(idx.size()) != nodes_[dx].len)
    throw std::invalid_argument("gather_slope: idx size mismatch");
  NodeId ps[2] = {a, dx};
  NodeId id = push_node(OpKind::kGatherSlope, nodes_[dx].len, ps, idx, {});
  compute(nodes_[id]);
  return id;
}

NodeId Tape::hermite_mix(NodeId a0, NodeId a1, NodeId t, NodeId dx,
                         std::span<const int32_t> idx) {
  NodeId ps[4] = {a0, a1, t, dx};
  NodeId id = push_node(OpKind::kHermiteMix, nodes_[t].len, ps, idx, {});
  compute(nodes_[id]);
  return id;
}

NodeId Tape::hermite_slope(NodeId a0, NodeId a1, NodeId t, NodeId dx,
                           std::span<const int32_t> idx) {
  NodeId ps[4] = {a0, a1, t, dx};
  NodeId id = push_node(OpKind::kHermiteSlope, nodes_[t].len, ps, idx, {});
  compute(nodes_[id]);
  return id;
}

NodeId Tape::dense(NodeId w, NodeId x, int m, int n, int batch) {
  if (nodes_[w].len != m * n || nodes_[x].len != n * batch)
    throw std::invalid_argument("dense: shape mismatch");
  NodeId ps[2] = {w, x};
  int32_t av[3] = {m, n, batch};
  NodeId id = push_node(OpKind::kDense, m * batch, ps, av, {});
  compute(nodes_[id]);
  return id;
}

NodeId Tape::add_row(NodeId x, NodeId b, int m, int batch) {
  if (nodes_[x].len != m * batch || nodes_[b].len != m)
    throw std::invalid_argument("add_row: shape mismatch");
  NodeId ps[2] = {x, b};
  int32_t av[2] = {m, batch};
  NodeId id = push_node(OpKind::kAddRow, m * batch, ps, av, {});
  compute(nodes_[id]);
  return id;
}

NodeId Tape::concat(std::span<const NodeId> parts) {
  int len = 0;
  for (NodeId p : parts) len += nodes_[p].len;
  NodeId id = push_node(OpKind::kConcat, len, parts, {}, {});
  compute(nodes_[id]);
  return id;
}

void Tape::compute(Node& nd) {
  double* out = storage_.data() + nd.val;
  const NodeId* par = parents_.data() + nd.par;
  const int32_t* auxi = auxi_.data() + nd.auxi;
  const double* auxd = auxd_.data() + nd.auxd;
  auto pv = [&](int i) { return storage_.data() + nodes_[par[i]].val; };
  auto plen = [&](int i) { return nodes_[par[i]].len; };

  switch (nd.kind) {
    case OpKind::kConst:
    case OpKind::kLeaf:
      break;
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul:
    case OpKind::kDiv:
    case OpKind::kMaxElem:
    case OpKind::kMinElem: {
      const double* a = pv(0);
      const double* b = pv(1);
      const int sa = plen(0) == 1 ? 0 : 1, sb = plen(1) == 1 ? 0 : 1;
      for (int i = 0; i < nd.len; ++i) {
        const double x = a[i * sa], y = b[i * sb];
        switch (nd.kind) {
          case OpKind::kAdd: out[i] = x + y; break;
          case OpKind::kSub: out[i] = x - y; break;
          case OpKind::kMul: out[i] = x * y; break;
          case OpKind::kDiv: out[i] = x / y; break;
          case OpKind::kMaxElem: out[i] = x >= y ? x : y; break;
          default: out[i] = x <= y ? x : y; break;
        }
      }
      break;
    }
    case OpKind::kMaxConst: {
      const double* a = pv(0);
      const double c = auxd[0];
      for (int i = 0; i < nd.len; ++i) out[i] = a[i] > c ? a[i] : c;
      break;
    }
    case OpKind::kSigmoid: {
      const double* a = pv(0);
      for (int i = 0; i < nd.len; ++i) out[i] = sigmoid_fn(a[i]);
      break;
    }
    case OpKind::kPowInt: {
      const double* a = pv(0);
      const int k = auxi[0];
      for (int i = 0; i < nd.len; ++i)
        out[i] = k == 1 ? a[i] : (k == 2 ? a[i] * a[i] : a[i] * a[i] * a[i]);
      break;
    }
    case OpKind::kCelu: {
      const double* a = pv(0);
      for (int i = 0; i < nd.len; ++i)
        out[i] = a[i] > 0.0 ? a[i] : std::expm1(a[i]);
      break;
    }
    case OpKind::kSum: {
      const double* a = pv(0);
      double s = 0.0;
      for (int i = 0; i < plen(0); ++i) s += a[i];
      out[0] = s;
      break;
    }
    case OpKind::kDot: {
      const double* a = pv(0);
      const double* b = pv(1);
      double s = 0.0;
      for (int i = 0; i < plen(0); ++i) s += a[i] * b[i];
      out[0] = s;
      break;
    }
    case OpKind::kMinAll: {
      const double* a = pv(0);
      double s = a[0];
      for (int i = 1; i < plen(0); ++i)
        if (a[i] < s) s = a[i];
      out[0] = s;
      break;
    }
    case OpKind::kMaxAll: {
      const double* a = pv(0);
      double s = a[0];
      for (int i = 1; i < plen(0); ++i)
        if (a[i] > s) s = a[i];
      out[0] = s;
      break;
    }
    case OpKind::kSlice: {
      const double* a = pv(0) + auxi[0];
      std::copy(a, a + nd.len, out);
      break;
    }
    case OpKind::kAffine: {
      const double c0 = auxd[0];
      for (int i = 0; i < nd.len; ++i) out[i] = c0;
      for (int p = 0; p < nd.npar; ++p) {
        const double c = auxd[1 + p];
        const double* a = pv(p);
        if (plen(p) == 1) {
          const double v = c * a[0];
          for (int i = 0; i < nd.len; ++i) out[i] += v;
        } else {
          for (int i = 0; i < nd.len; ++i) out[i] += c * a[i];
        }
      }
      break;
    }
    case OpKind::kConvexSlopes: {
      const double bh = pv(0)[0];
      const double* d = pv(1);
      const double s0 = auxi[0] ? bh : (bh > 0.0 ? bh : 0.0);
      out[0] = s0;
      double acc = s0;
      for (int i = 1; i < nd.len; ++i) {
        acc += d[i - 1] > 0.0 ? d[i - 1] : 0.0;
        out[i] = acc;
      }
      break;
    }
    case OpKind::kP1Values: {
      const double b = pv(0)[0];
      const double* s = pv(1);
      const double* dl = pv(2);
      out[0] = b;
      double acc = b;
      for (int i = 1; i < nd.len; ++i) {
        acc += s[i - 1] * dl[i - 1];
        out[i] = acc;
      }
      break;
    }
    case OpKind::kCubicValues: {
      const double b = pv(0)[0];
      const double* a1 = pv(1);
      const double* g = pv(2);
      const double* dl = pv(3);
      out[0] = b;
      double acc = b;
      for (int i = 1; i < nd.len; ++i) {
        const double sg = sigmoid_fn(g[i - 1]);
        acc += dl[i - 1] / 3.0 *
               (2.0 * a1[i - 1] + a1[i] + sg * (a1[i] - a1[i - 1]));
        out[i] = acc;
      }
      break;
    }
    case OpKind::kLatticeVertices: {
      const double lo = auxd[0], hi = auxd[1];
      const double* raw = pv(0);
      const int cells = nd.len - 1;
      double tot = 0.0;
      for (int i = 0; i < cells; ++i) tot += softplus(raw[i]) + kWeightFloor;
      out[0] = lo;
      double acc = 0.0;
      for (int p = 1; p < cells; ++p) {
        acc += softplus(raw[p - 1]) + kWeightFloor;
        out[p] = lo + (hi - lo) * (acc / tot);
      }
      out[cells] = hi;
      break;
    }
    case OpKind::kCellCoord: {
      const double* x = pv(0);
      const double* v = pv(1);
      for (int i = 0; i < nd.len; ++i) {
        const int p = auxi[i];
        out[i] = (x[i] - v[p]) / (v[p + 1] - v[p]);
      }
      break;
    }
    case OpKind::kCellWidth: {
      const double* v = pv(0);
      for (int i = 0; i < nd.len; ++i) {
        const int p = auxi[i];
        out[i] = v[p + 1] - v[p];
      }
      break;
    }
    case OpKind::kLerpGather: {
      const double* a = pv(0);
      const double* t = pv(1);
      for (int i = 0; i < nd.len; ++i) {
        const int p = auxi[i];
        out[i] = a[p] + (a[p + 1] - a[p]) * t[i];
      }
      break;
    }
    case OpKind::kGatherSlope: {
      const double* a = pv(0);
      const double* dx = pv(1);
      for (int i = 0; i < nd.len; ++i) {
        const int p = auxi[i];
        out[i] = (a[p + 1] - a[p]) / dx[i];
      }
      break;
    }
    case OpKind::kHermiteMix: {
      const double* a0 = pv(0);
      const double* a1 = pv(1);
      const double* t = pv(2);
      const double* dx = pv(3);
      const int last = nodes_[par[0]].len - 1;
      for (int i = 0; i < nd.len; ++i) {
        const int p = auxi[i];
        const double u = t[i], w = dx[i];
        if (u < 0.0 && p == 0) {
          out[i] = a0[0] + a1[0] * u * w;
        } else if (u > 1.0 && p == last - 1) {
          out[i] = a0[last] + a1[last] * (u - 1.0) * w;
        } else {
          const HermiteBasis h = hermite(u);
          out[i] = a0[p] * h.h00 + a1[p] * h.h10 * w + a0[p + 1] * h.h01 +
                   a1[p + 1] * h.h11 * w;
        }
      }
      break;
    }
    case OpKind::kHermiteSlope: {
      const double* a0 = pv(0);
      const double* a1 = pv(1);
      const double* t = pv(2);
      const double* dx = pv(3);
      const int last = nodes_[par[0]].len - 1;
      for (int i = 0; i < nd.len; ++i) {
        const int p = auxi[i];
        const double u = t[i], w = dx[i];
        if (u < 0.0 && p == 0) {
          out[i] = a1[0];
        } else if (u > 1.0 && p == last - 1) {
          out[i] = a1[last];
        } else {
          const HermiteBasis h = hermite_d1(u);
          out[i] = (a0[p] * h.h00 + a0[p + 1] * h.h01) / w + a1[p] * h.h10 +
                   a1[p + 1] * h.h11;
        }
      }
      break;
    }
    case OpKind::kDense: {
      const int m = auxi[0], n = auxi[1], batch = auxi[2];
      const double* w = pv(0);
      const double* x = pv(1);
      for (int k = 0; k < m; ++k) {
        double* o = out + k * batch;
        std::fill(o, o + batch, 0.0);
        for (int j = 0; j < n; ++j) {
          const double wkj = w[k * n + j];
          const double* xj = x + j * batch;
          for (int s = 0; s < batch; ++s) o[s] += wkj * xj[s];
        }
      }
      break;
    }
    case OpKind::kAddRow: {
      const int m = auxi[0], batch = auxi[1];
      const double* x = pv(0);
      const double* b = pv(1);
      for (int k = 0; k < m; ++k)
        for (int s = 0; s < batch; ++s) out[k * batch + s] = x[k * batch + s] + b[k];
      break;
    }
    case OpKind::kConcat: {
      int ofs = 0;
      for (int p = 0; p < nd.npar; ++p) {
        const double* a = pv(p);
        std::copy(a, a + plen(p), out + ofs);
        ofs += plen(p);
      }
      break;
    }
  }
}

void Tape::backward(NodeId output) {
  if (nodes_[output].len != 1)
    throw std::invalid_argument("backward: output must be scalar");
  adjoint_.assign(storage_.size(), 0.0);
  adjoint_[nodes_[output].val] = 1.0;

  // Zero the adjoints of every parameter leaf on this tape first so that
  // repeated sweeps produce identical results.
  std::unordered_set<Parameter*> seen;
  for (NodeId i = 0; i <= output; ++i) {
    if (nodes_[i].kind == OpKind::kLeaf && seen.insert(nodes_[i].param).second)
      nodes_[i].param->zero_adjoint();
  }
  for (NodeId i = output; i >= 0; --i) backprop(nodes_[i]);
}

void Tape::backprop(const Node& nd) {
  const double* g = adjoint_.data() + nd.val;
  const NodeId* par = parents_.data() + nd.par;
  const int32_t* auxi = auxi_.data() + nd.auxi;
  const double* auxd = auxd_.data() + nd.auxd;
  auto pv = [&](int i) { return storage_.data() + nodes_[par[i]].val; };
  auto pg = [&](int i) { return adjoint_.data() + nodes_[par[i]].val; };
  auto plen = [&](int i) { return nodes_[par[i]].len; };

  switch (nd.kind) {
    case OpKind::kConst:
      break;
    case OpKind::kLeaf: {
      double* pa = nd.param->adjoint.data() + nd.param_ofs;
      for (int i = 0; i < nd.len; ++i) pa[i] += g[i];
      break;
    }
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul:
    case OpKind::kDiv:
    case OpKind::kMaxElem:
    case OpKind::kMinElem: {
      const double* a = pv(0);
      const double* b = pv(1);
      double* ga = pg(0);
      double* gb = pg(1);
      const int sa = plen(0) == 1 ? 0 : 1, sb = plen(1) == 1 ? 0 : 1;
      for (int i = 0; i < nd.len; ++i) {
        const double x = a[i * sa], y = b[i * sb], gi = g[i];
        switch (nd.kind) {
          case OpKind::kAdd:
            ga[i * sa] += gi;
            gb[i * sb] += gi;
            break;
          case OpKind::kSub:
            ga[i * sa] += gi;
            gb[i * sb] -= gi;
            break;
          case OpKind::kMul:
            ga[i * sa] += gi * y;
            gb[i * sb] += gi * x;
            break;
          case OpKind::kDiv:
            ga[i * sa] += gi / y;
            gb[i * sb] -= gi * x / (y * y);
            break;
          case OpKind::kMaxElem:
            if (x >= y) ga[i * sa] += gi; else gb[i * sb] += gi;
            break;
          default:
            if (x <= y) ga[i * sa] += gi; else gb[i * sb] += gi;
            break;
        }
      }
      break;
    }
    case OpKind::kMaxConst: {
      const double* a = pv(0);
      double* ga = pg(0);
      const double c = auxd[0];
      for (int i = 0; i < nd.len; ++i)
        if (a[i] > c) ga[i] += g[i];
      break;
    }
    case OpKind::kSigmoid: {
      const double* o = storage_.data() + nd.val;
      double* ga = pg(0);
      for (int i = 0; i < nd.len; ++i) ga[i] += g[i] * o[i] * (1.0 - o[i]);
      break;
    }
    case OpKind::kPowInt: {
      const double* a = pv(0);
      double* ga = pg(0);
      const int k = auxi[0];
      for (int i = 0; i < nd.len; ++i)
        ga[i] += g[i] * (k == 1 ? 1.0 : (k == 2 ? 2.0 * a[i] : 3.0 * a[i] * a[i]));
      break;
    }
    case OpKind::kCelu: {
      const double* a = pv(0);
      double* ga = pg(0);
      for (int i = 0; i < nd.len; ++i)
        ga[i] += g[i] * (a[i] > 0.0 ? 1.0 : std::exp(a[i]));
      break;
    }
    case OpKind::kSum: {
      double* ga = pg(0);
      for (int i = 0; i < plen(0); ++i) ga[i] += g[0];
      break;
    }
    case OpKind::kDot: {
      const double* a = pv(0);
      const double* b = pv(1);
      double* ga = pg(0);
      double* gb = pg(1);
      for (int i = 0; i < plen(0); ++i) {
        ga[i] += g[0] * b[i];
        gb[i] += g[0] * a[i];
      }
      break;
    }
    case OpKind::kMinAll: {
      const double* a = pv(0);
      int arg = 0;
      for (int i = 1; i < plen(0); ++i)
        if (a[i] < a[arg]) arg = i;
      pg(0)[arg] += g[0];
      break;
    }
    case OpKind::kMaxAll: {
      const double* a = pv(0);
      int arg = 0;
      for (int i = 1; i < plen(0); ++i)
        if (a[i] > a[arg]) arg = i;
      pg(0)[arg] += g[0];
      break;
    }
    case OpKind::kSlice: {
      double* ga = pg(0) + auxi[0];
      for (int i = 0; i < nd.len; ++i) ga[i] += g[i];
      break;
    }
    case OpKind::kAffine: {
      for (int p = 0; p < nd.npar; ++p) {
        const double c = auxd[1 + p];
        double* ga = pg(p);
        if (plen(p) == 1) {
          double s = 0.0;
          for (int i = 0; i < nd.len; ++i) s += g[i];
          ga[0] += c * s;
        } else {
          for (int i = 0; i < nd.len; ++i) ga[i] += c * g[i];
        }
      }
      break;
    }
    case OpKind::kConvexSlopes: {
      const double bh = pv(0)[0];
      const double* d = pv(1);
      double* gbh = pg(0);
      double* gd = pg(1);
      // suffix sums of the outgoing adjoint
      double suf = 0.0;
      for (int i = nd.len - 1; i >= 1; --i) {
        suf += g[i];
        if (d[i - 1] > 0.0) gd[i - 1] += suf;
      }
      suf += g[0];
      if (auxi[0] || bh > 0.0) gbh[0] += suf;
      break;
    }
    case OpKind::kP1Values: {
      const double* s = pv(1);
      const double* dl = pv(2);
      double* gb = pg(0);
      double* gs = pg(1);
      double* gdl = pg(2);
      double suf = 0.0;
      for (int i = nd.len - 1; i >= 1; --i) {
        suf += g[i];
        gs[i - 1] += suf * dl[i - 1];
        gdl[i - 1] += suf * s[i - 1];
      }
      gb[0] += suf + g[0];
      break;
    }
    case OpKind::kCubicValues: {
      const double* a1 = pv(1);
      const double* gt = pv(2);
      const double* dl = pv(3);
      double* gb = pg(0);
      double* ga1 = pg(1);
      double* gg = pg(2);
      double* gdl = pg(3);
      double suf = 0.0;
      for (int i = nd.len - 1; i >= 1; --i) {
        suf += g[i];
        const double sg = sigmoid_fn(gt[i - 1]);
        const double diff = a1[i] - a1[i - 1];
        gdl[i - 1] += suf * (2.0 * a1[i - 1] + a1[i] + sg * diff) / 3.0;
        ga1[i - 1] += suf * dl[i - 1] / 3.0 * (2.0 - sg);
        ga1[i] += suf * dl[i - 1] / 3.0 * (1.0 + sg);
        gg[i - 1] += suf * dl[i - 1] / 3.0 * sg * (1.0 - sg) * diff;
      }
      gb[0] += suf + g[0];
      break;
    }
    case OpKind::kLatticeVertices: {
      const double lo = auxd[0], hi = auxd[1];
      const double* raw = pv(0);
      double* graw = pg(0);
      const int cells = nd.len - 1;
      double tot = 0.0;
      for (int i = 0; i < cells; ++i) tot += softplus(raw[i]) + kWeightFloor;
      // d out[p] / d e_k = (hi-lo)/tot * (1{k<=p} - ratio_p); e = softplus + floor
      double sum_g_r = 0.0;  // sum_p g[p] * ratio_p
      double acc = 0.0;
      std::vector<double> suffix(cells + 1, 0.0);  // sum_{p>=k, p<=cells-1} g[p]
      for (int p = cells - 1; p >= 1; --p) suffix[p] = suffix[p + 1] + g[p];
      for (int p = 1; p < cells; ++p) {
        acc += softplus(raw[p - 1]) + kWeightFloor;
        sum_g_r += g[p] * (acc / tot);
      }
      for (int k = 0; k < cells; ++k) {
        const double de = sigmoid_fn(raw[k]);  // d softplus
        graw[k] += de * (hi - lo) / tot * (suffix[k + 1] - sum_g_r);
      }
      break;
    }
    case OpKind::kCellCoord: {
      const double* x = pv(0);
      const double* v = pv(1);
      const double* o = storage_.data() + nd.val;
      double* gx = pg(0);
      double* gv = pg(1);
      (void)x;
      for (int i = 0; i < nd.len; ++i) {
        const int p = auxi[i];
        const double w = 1.0 / (v[p + 1] - v[p]);
        gx[i] += g[i] * w;
        gv[p] += g[i] * (o[i] - 1.0) * w;
        gv[p + 1] += g[i] * (-o[i]) * w;
      }
      break;
    }
    case OpKind::kCellWidth: {
      double* gv = pg(0);
      for (int i = 0; i < nd.len; ++i) {
        const int p = auxi[i];
        gv[p] -= g[i];
        gv[p + 1] += g[i];
      }
      break;
    }
    case OpKind::kLerpGather: {
      const double* a = pv(0);
      const double* t = pv(1);
      double* ga = pg(0);
      double* gt = pg(1);
      for (int i = 0; i < nd.len; ++i) {
        const int p = auxi[i];
        ga[p] += g[i] * (1.0 - t[i]);
        ga[p + 1] += g[i] * t[i];
        gt[i] += g[i] * (a[p + 1] - a[p]);
      }
      break;
    }
    case OpKind::kGatherSlope: {
      const double* dx = pv(1);
      const double* o = storage_.data() + nd.val;
      double* ga = pg(0);
      double* gdx = pg(1);
      for (int i = 0; i < nd.len; ++i) {
        const int p = auxi[i];
        const double w = 1.0 / dx[i];
        ga[p + 1] += g[i] * w;
        ga[p] -= g[i] * w;
        gdx[i] -= g[i] * o[i] * w;
      }
      break;
    }
    case OpKind::kHermiteMix: {
      const double* a0 = pv(0);
      const double* a1 = pv(1);
      const double* t = pv(2);
      const double* dx = pv(3);
      double* ga0 = pg(0);
      double* ga1 = pg(1);
      double* gt = pg(2);
      double* gdx = pg(3);
      const int last = nodes_[par[0]].len - 1;
      for (int i = 0; i < nd.len; ++i) {
        const int p = auxi[i];
        const double u = t[i], w = dx[i], gi = g[i];
        if (u < 0.0 && p == 0) {
          ga0[0] += gi;
          ga1[0] += gi * u * w;
          gt[i] += gi * a1[0] * w;
          gdx[i] += gi * a1[0] * u;
        } else if (u > 1.0 && p == last - 1) {
          ga0[last] += gi;
          ga1[last] += gi * (u - 1.0) * w;
          gt[i] += gi * a1[last] * w;
          gdx[i] += gi * a1[last] * (u - 1.0);
        } else {
          const HermiteBasis h = hermite(u);
          const HermiteBasis hd = hermite_d1(u);
          ga0[p] += gi * h.h00;
          ga1[p] += gi * h.h10 * w;
          ga0[p + 1] += gi * h.h01;
          ga1[p + 1] += gi * h.h11 * w;
          gt[i] += gi * (a0[p] * hd.h00 + a1[p] * hd.h10 * w +
                         a0[p + 1] * hd.h01 + a1[p + 1] * hd.h11 * w);
          gdx[i] += gi * (a1[p] * h.h10 + a1[p + 1] * h.h11);
        }
      }
      break;
    }
    case OpKind::kHermiteSlope: {
      const double* a0 = pv(0);
      const double* a1 = pv(1);
      const double* t = pv(2);
      const double* dx = pv(3);
      double* ga0 = pg(0);
      double* ga1 = pg(1);
      double* gt = pg(2);
      double* gdx = pg(3);
      const int last = nodes_[par[0]].len - 1;
      for (int i = 0; i < nd.len; ++i) {
        const int p = auxi[i];
        const double u = t[i], w = dx[i], gi = g[i];
        if (u < 0.0 && p == 0) {
          ga1[0] += gi;
        } else if (u > 1.0 && p == last - 1) {
          ga1[last] += gi;
        } else {
          const HermiteBasis hd = hermite_d1(u);
          const HermiteBasis h2 = hermite_d2(u);
          ga0[p] += gi * hd.h00 / w;
          ga0[p + 1] += gi * hd.h01 / w;
          ga1[p] += gi * hd.h10;
          ga1[p + 1] += gi * hd.h11;
          gt[i] += gi * ((a0[p] * h2.h00 + a0[p + 1] * h2.h01) / w +
                         a1[p] * h2.h10 + a1[p + 1] * h2.h11);
          gdx[i] -= gi * (a0[p] * hd.h00 + a0[p + 1] * hd.h01) / (w * w);
        }
      }
      break;
    }
    case OpKind::kDense: {
      const int m = auxi[0], n = auxi[1], batch = auxi[2];
      const double* w = pv(0);
      const double* x = pv(1);
      double* gw = pg(0);
      double* gx = pg(1);
      for (int k = 0; k < m; ++k) {
        const double* gk = g + k * batch;
        for (int j = 0; j < n; ++j) {
          const double* xj = x + j * batch;
          double* gxj = gx + j * batch;
          const double wkj = w[k * n + j];
          double s = 0.0;
          for (int sIdx = 0; sIdx < batch; ++sIdx) {
            s += gk[sIdx] * xj[sIdx];
            gxj[sIdx] += wkj * gk[sIdx];
          }
          gw[k * n + j] += s;
        }
      }
      break;
    }
    case OpKind::kAddRow: {
      const int m = auxi[0], batch = auxi[1];
      double* gx = pg(0);
      double* gb = pg(1);
      for (int k = 0; k < m; ++k) {
        double s = 0.0;
        for (int sIdx = 0; sIdx < batch; ++sIdx) {
          gx[k * batch + sIdx] += g[k * batch + sIdx];
          s += g[k * batch + sIdx];
        }
        gb[k] += s;
      }
      break;
    }
    case OpKind::kConcat: {
      int ofs = 0;
      for (int p = 0; p < nd.npar; ++p) {
        double* ga = pg(p);
        for (int i = 0; i < plen(p); ++i) ga[i] += g[ofs + i];
        ofs += plen(p);
      }
      break;
    }
  }
}

}  // namespace ickan
