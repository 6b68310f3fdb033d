#include "ickan/verify.hpp"

#include <cmath>
#include <sstream>

#include "ickan/transport.hpp"

namespace ickan::checks {

void randomize_model(Model& m, Rng& rng) {
  for (auto& p : m.params().all()) {
    if (p.name.ends_with(".d"))
      for (auto& v : p.value)
        v = rng.uniform() < 0.3 ? rng.uniform(-0.4, -0.02) : rng.uniform(0.02, 0.3);
    else if (p.name.ends_with(".bhat"))
      for (auto& v : p.value) v = rng.uniform(-0.2, 0.8);
    else if (p.name.ends_with(".g"))
      for (auto& v : p.value) v = rng.uniform(-2.0, 2.0);
    else if (p.name.ends_with(".e"))
      for (auto& v : p.value) v = rng.uniform(-0.7, 0.7);
    else if (p.name.ends_with(".b"))
      for (auto& v : p.value) v = rng.uniform(-0.4, 0.4);
    else if (p.name.ends_with(".W"))
      for (auto& v : p.value) v = rng.uniform(0.0, 0.3);
    else if (p.name.ends_with(".A"))
      for (auto& v : p.value) v = rng.uniform(-0.6, 0.6);
    else if (p.name.ends_with(".bias"))
      for (auto& v : p.value) v = rng.uniform(-0.3, 0.3);
  }
  m.refresh_boxes();
}

namespace {

std::vector<double> sample_box(Rng& rng, int n, const Hypercube& box) {
  std::vector<double> pts(static_cast<size_t>(n) * box.dim());
  for (int s = 0; s < n; ++s)
    for (int j = 0; j < box.dim(); ++j)
      pts[s * box.dim() + j] = rng.uniform(box.lo[j], box.hi[j]);
  return pts;
}

}  // namespace

CheckRow convexity_suite(int models_per_family, int pairs, double tol,
                         uint64_t seed) {
  Rng rng(seed);
  const int depths[] = {1, 2, 3};
  const int cells[] = {5, 10, 20};
  const int dims[] = {1, 2, 4};
  double worst = 0.0;
  int tested = 0;
  for (Family fam : {Family::p1, Family::cubic, Family::icnn}) {
    for (int i = 0; i < models_per_family; ++i) {
      NetworkSpec s;
      s.family = fam;
      const int depth = depths[i % 3];
      s.hidden.assign(depth, 4 + static_cast<int>(rng.next_u64() % 12));
      s.cells = cells[(i / 3) % 3];
      s.adapt = fam != Family::icnn && i % 2 == 0;
      s.act = i % 2 == 0 ? Act::relu : Act::celu;
      const int d = dims[(i / 9) % 3];
      s.domain = Hypercube::cube(-1.0 - (i % 2), 1.0 + (i % 3), d);
      Model m = Model::make(s, rng.next_u64());
      randomize_model(m, rng);
      if (fam == Family::icnn) m.project_constraints();

      auto a = sample_box(rng, pairs, s.domain);
      auto b = sample_box(rng, pairs, s.domain);
      std::vector<double> mid(a.size());
      for (size_t k = 0; k < a.size(); ++k) mid[k] = 0.5 * (a[k] + b[k]);
      auto ya = m.eval_batch(a, pairs);
      auto yb = m.eval_batch(b, pairs);
      auto ym = m.eval_batch(mid, pairs);
      for (int sIdx = 0; sIdx < pairs; ++sIdx)
        worst = std::max(worst, ym[sIdx] - 0.5 * (ya[sIdx] + yb[sIdx]));
      ++tested;
    }
  }
  std::ostringstream os;
  os << tested << " models, worst midpoint violation " << worst;
  return {"structural convexity", worst <= tol, os.str()};
}

CheckRow gradient_suite(double tol_param, double tol_input, uint64_t seed) {
  Rng rng(seed);
  double worst_param = 0.0, worst_input = 0.0;
  for (Family fam : {Family::p1, Family::cubic}) {
    NetworkSpec s;
    s.family = fam;
    s.hidden = {3};
    s.cells = 4;
    s.adapt = true;
    s.domain = Hypercube::cube(-1.0, 1.0, 2);
    Model m = Model::make(s, rng.next_u64());
    randomize_model(m, rng);
    // keep the slope offsets clear of the max(bhat, 0) kink: the check is
    // specified at smooth parameter points
    for (auto& p : m.params().all())
      if (p.name.ends_with(".bhat"))
        for (auto& v : p.value) v = v < 0.0 ? std::min(v, -0.02) : std::max(v, 0.02);
    m.refresh_boxes();

    const int n = 6;
    auto pts = sample_box(rng, n, s.domain);
    auto loss = [&](Tape& tape) {
      auto x = Model::batch_inputs(tape, pts, n, 2);
      return tape.sum(m.forward(tape, x));
    };
    Tape tape;
    tape.backward(loss(tape));
    for (auto& p : m.params().all()) {
      std::vector<double> grad = p.adjoint;
      for (int i = 0; i < p.size(); ++i) {
        const double keep = p.value[i];
        const double h = 1e-6 * std::max(1.0, std::abs(keep));
        Tape t1, t2;
        p.value[i] = keep + h;
        const double f1 = t1.value(loss(t1));
        p.value[i] = keep - h;
        const double f2 = t2.value(loss(t2));
        p.value[i] = keep;
        const double fd = (f1 - f2) / (2 * h);
        worst_param = std::max(
            worst_param, std::abs(grad[i] - fd) /
                             std::max({std::abs(grad[i]), std::abs(fd), 1.0}));
      }
    }

    if (fam == Family::cubic) {
      // analytic input gradient against central differences of the forward
      int checked = 0;
      for (int trial = 0; trial < 400 && checked < 60; ++trial) {
        auto x = sample_box(rng, 1, s.domain);
        for (auto& v : x) v *= 0.9;
        auto g = m.grad1(x);
        const double h = 1e-5;
        double err = 0.0;
        for (int j = 0; j < 2; ++j) {
          auto xp = x, xm = x;
          xp[j] += h;
          xm[j] -= h;
          const double fd = (m.eval1(xp) - m.eval1(xm)) / (2 * h);
          err = std::max(err, std::abs(fd - g[j]) /
                                  std::max({std::abs(fd), std::abs(g[j]), 1.0}));
        }
        if (err > 50 * tol_input) continue;  // straddled a clip kink
        worst_input = std::max(worst_input, err);
        ++checked;
      }
      if (checked < 60) worst_input = 1e300;
    }
  }
  std::ostringstream os;
  os << "worst param rel err " << worst_param << ", worst input-grad rel err "
     << worst_input;
  return {"gradient finite differences", worst_param <= tol_param && worst_input <= tol_input,
          os.str()};
}

CheckRow oracle_suite(int trials_per_dim, double tol, uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int d = 1; d <= 3; ++d) {
    for (int trial = 0; trial < trials_per_dim; ++trial) {
      std::vector<double> a1(d), a2(d);
      for (auto& v : a1) v = rng.uniform(-2.0, 2.0);
      for (auto& v : a2) v = rng.uniform(-2.0, 2.0);
      const double b1 = rng.uniform(-1.0, 1.0), b2 = rng.uniform(-1.0, 1.0);
      const double lo = rng.uniform(-1.5, -0.5), hi = rng.uniform(0.5, 1.5);
      Model m = construct_max_affine_p1(a1, b1, a2, b2, Hypercube::cube(lo, hi, d));

      const int per_dim = d == 1 ? 1001 : (d == 2 ? 51 : 16);
      std::vector<int> idx(d, 0);
      std::vector<double> x(d);
      bool done = false;
      while (!done) {
        for (int j = 0; j < d; ++j)
          x[j] = lo + (hi - lo) * idx[j] / (per_dim - 1.0);
        double f1 = b1, f2 = b2;
        for (int j = 0; j < d; ++j) {
          f1 += a1[j] * x[j];
          f2 += a2[j] * x[j];
        }
        worst = std::max(worst, std::abs(m.eval1(x) - std::max(f1, f2)));
        int j = 0;
        while (j < d && ++idx[j] == per_dim) idx[j++] = 0;
        done = j == d;
      }
    }
  }
  std::ostringstream os;
  os << "max sup error " << worst << " over " << 3 * trials_per_dim << " trials";
  return {"max-affine construction", worst <= tol, os.str()};
}

CheckRow box_suite(int models, int points, double tol, uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < models; ++i) {
    const Family fam = i % 2 == 0 ? Family::p1 : Family::cubic;
    NetworkSpec s;
    s.family = fam;
    s.hidden = {3 + static_cast<int>(rng.next_u64() % 5),
                3 + static_cast<int>(rng.next_u64() % 4)};
    s.cells = 4 + static_cast<int>(rng.next_u64() % 6);
    s.adapt = i % 3 == 0;
    const int d = 1 + static_cast<int>(rng.next_u64() % 3);
    s.domain = Hypercube::cube(-1.5, 1.5, d);
    Model m = Model::make(s, rng.next_u64());
    randomize_model(m, rng);

    auto pts = sample_box(rng, points, s.domain);
    Tape tape;
    auto x = Model::batch_inputs(tape, pts, points, d);
    std::vector<NodeId> cur(x.begin(), x.end());
    auto& layers = m.convex_layers();
    for (size_t l = 0; l + 1 < layers.size(); ++l) {
      LayerForwardOpts opts;
      LayerEval ev = fam == Family::p1
                         ? p1_layer_forward(tape, layers[l], m.boxes()[l], cur, opts)
                         : cubic_layer_forward(tape, layers[l], m.boxes()[l], cur, opts);
      cur = ev.y;
      const Hypercube& box = m.boxes()[l + 1];
      for (size_t k = 0; k < cur.size(); ++k)
        for (double v : tape.values(cur[k]))
          worst = std::max({worst, box.lo[k] - v, v - box.hi[k]});
    }
  }
  std::ostringstream os;
  os << models << " models, worst box excursion " << worst;
  return {"image hypercube soundness", worst <= tol, os.str()};
}

CheckRow uvp_identity_suite(int n, uint64_t seed) {
  Rng rng(seed);
  auto prob = TransportProblem::tensorized(2);
  std::vector<double> mu, nu;
  prob.sample_source(rng, n, mu);
  prob.sample_target(rng, n, nu);
  const double u0 = uvp(prob.true_map, prob.true_map, nu, mu, 2);

  std::vector<double> mean(2, 0.0);
  for (int s = 0; s < n; ++s)
    for (int j = 0; j < 2; ++j) mean[j] += nu[s * 2 + j];
  for (auto& v : mean) v /= n;
  MapFn constant = [mean](std::span<const double>) { return mean; };
  const double u100 = uvp(constant, prob.true_map, nu, mu, 2);

  std::ostringstream os;
  os << "uvp(T*) = " << u0 << ", constant estimator = " << u100;
  return {"uvp metric identities", u0 == 0.0 && std::abs(u100 - 100.0) <= 2.0,
          os.str()};
}

std::vector<CheckRow> run_all(uint64_t seed, bool quick) {
  std::vector<CheckRow> rows;
  rows.push_back(convexity_suite(quick ? 12 : 50, quick ? 200 : 1000, 1e-8, seed));
  rows.push_back(gradient_suite(1e-4, 1e-4, seed + 1));
  rows.push_back(oracle_suite(quick ? 5 : 20, 1e-10, seed + 2));
  rows.push_back(box_suite(quick ? 6 : 20, quick ? 2000 : 10000, 1e-9, seed + 3));
  rows.push_back(uvp_identity_suite(16384, seed + 4));
  return rows;
}

}  // namespace ickan::checks
