#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "ickan/network.hpp"

using namespace ickan;

namespace {

NetworkSpec basic_spec(Family fam, int d, std::vector<int> hidden, int P,
                       bool adapt, double lo = -1.0, double hi = 1.0) {
  NetworkSpec s;
  s.family = fam;
  s.hidden = std::move(hidden);
  s.cells = P;
  s.adapt = adapt;
  s.domain = Hypercube::cube(lo, hi, d);
  return s;
}

std::vector<double> random_points(Rng& rng, int n, const Hypercube& box) {
  std::vector<double> pts(n * box.dim());
  for (int s = 0; s < n; ++s)
    for (int j = 0; j < box.dim(); ++j)
      pts[s * box.dim() + j] = rng.uniform(box.lo[j], box.hi[j]);
  return pts;
}

void randomize(Model& m, Rng& rng, double d_lo = 0.02, double d_hi = 0.2) {
  for (auto& p : m.params().all()) {
    if (p.name.ends_with(".d"))
      for (auto& v : p.value)
        v = rng.uniform() < 0.3 ? rng.uniform(-0.4, -d_lo) : rng.uniform(d_lo, d_hi);
    else if (p.name.ends_with(".bhat"))
      for (auto& v : p.value) v = rng.uniform(0.05, 0.8);
    else if (p.name.ends_with(".g"))
      for (auto& v : p.value) v = rng.uniform(-1.5, 1.5);
    else if (p.name.ends_with(".e"))
      for (auto& v : p.value) v = rng.uniform(-0.5, 0.5);
    else if (p.name.ends_with(".b"))
      for (auto& v : p.value) v = rng.uniform(-0.3, 0.3);
  }
  m.refresh_boxes();
}

}  // namespace

TEST_CASE("ickan: depth-1 model equals a single convex layer") {
  for (Family fam : {Family::p1, Family::cubic}) {
    Model m = Model::make(basic_spec(fam, 2, {}, 4, false), 11);
    Rng rng(12);
    randomize(m, rng);
    auto pts = random_points(rng, 50, m.spec().domain);
    auto y = m.eval_batch(pts, 50);

    // direct single-layer evaluation through the layer op
    Tape tape;
    auto x = Model::batch_inputs(tape, pts, 50, 2);
    LayerForwardOpts opts;
    opts.clip = false;
    LayerEval ev = fam == Family::p1
                       ? p1_layer_forward(tape, m.convex_layers()[0],
                                          m.spec().domain, x, opts)
                       : cubic_layer_forward(tape, m.convex_layers()[0],
                                             m.spec().domain, x, opts);
    auto direct = tape.values(ev.y[0]);
    for (int s = 0; s < 50; ++s) CHECK(y[s] == doctest::Approx(direct[s]).epsilon(1e-14));
  }
}

TEST_CASE("ickan: full-model midpoint convexity") {
  Rng rng(13);
  for (int trial = 0; trial < 8; ++trial) {
    const Family fam = trial % 2 == 0 ? Family::p1 : Family::cubic;
    Model m = Model::make(
        basic_spec(fam, 1 + trial % 3, {5, 4}, 4 + trial % 3, trial % 3 == 0), 100 + trial);
    Rng r2(17 + trial);
    randomize(m, r2);
    const int n = 300;
    auto a = random_points(r2, n, m.spec().domain);
    auto b = random_points(r2, n, m.spec().domain);
    std::vector<double> mid(a.size());
    for (size_t i = 0; i < a.size(); ++i) mid[i] = 0.5 * (a[i] + b[i]);
    auto ya = m.eval_batch(a, n);
    auto yb = m.eval_batch(b, n);
    auto ym = m.eval_batch(mid, n);
    for (int s = 0; s < n; ++s) CHECK(ym[s] <= 0.5 * (ya[s] + yb[s]) + 1e-8);
  }
}

TEST_CASE("ickan: box threading is sound on random points") {
  Rng rng(14);
  for (int trial = 0; trial < 6; ++trial) {
    const Family fam = trial % 2 == 0 ? Family::p1 : Family::cubic;
    Model m = Model::make(basic_spec(fam, 2, {4, 3}, 5, trial % 3 == 0), 200 + trial);
    Rng r2(31 + trial);
    randomize(m, r2);

    const int n = 2000;
    auto pts = random_points(r2, n, m.spec().domain);
    Tape tape;
    auto x = Model::batch_inputs(tape, pts, n, 2);
    std::vector<NodeId> cur(x.begin(), x.end());
    const auto& layers = m.convex_layers();
    for (size_t l = 0; l + 1 < layers.size(); ++l) {
      LayerForwardOpts opts;
      LayerEval ev = fam == Family::p1
                         ? p1_layer_forward(tape, layers[l], m.boxes()[l], cur, opts)
                         : cubic_layer_forward(tape, layers[l], m.boxes()[l], cur, opts);
      cur = ev.y;
      const Hypercube& box = m.boxes()[l + 1];
      for (size_t k = 0; k < cur.size(); ++k) {
        for (double v : tape.values(cur[k])) {
          CHECK(v >= box.lo[k] - 1e-9);
          CHECK(v <= box.hi[k] + 1e-9);
        }
      }
    }
  }
}

TEST_CASE("ickan: input gradient of an affine model is the composed slope") {
  // d == 0 and fixed grids make every 1D function affine
  Model m = Model::make(basic_spec(Family::p1, 2, {3}, 4, false), 15);
  for (auto& p : m.params().all()) {
    if (p.name.ends_with(".d"))
      std::fill(p.value.begin(), p.value.end(), 0.0);
    if (p.name.ends_with(".bhat"))
      for (auto& v : p.value) v = 0.3 + 0.1 * (&v - p.value.data());
  }
  m.refresh_boxes();
  Rng rng(16);
  auto pts = random_points(rng, 20, m.spec().domain);
  auto g = m.grad_batch(pts, 20);
  for (int s = 1; s < 20; ++s) {
    CHECK(g[2 * s] == doctest::Approx(g[0]).epsilon(1e-12));
    CHECK(g[2 * s + 1] == doctest::Approx(g[1]).epsilon(1e-12));
  }
  // and matches finite differences of the forward
  std::vector<double> x0 = {0.2, -0.4};
  auto gr = m.grad1(x0);
  const double h = 1e-6;
  for (int j = 0; j < 2; ++j) {
    auto xp = x0, xm = x0;
    xp[j] += h;
    xm[j] -= h;
    const double fd = (m.eval1(xp) - m.eval1(xm)) / (2 * h);
    CHECK(gr[j] == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("ickan: analytic input gradient matches finite differences (cubic)") {
  Rng rng(17);
  Model m = Model::make(basic_spec(Family::cubic, 3, {5, 4}, 5, true), 18);
  randomize(m, rng);
  int checked = 0;
  for (int trial = 0; trial < 200 && checked < 40; ++trial) {
    std::vector<double> x(3);
    for (auto& v : x) v = rng.uniform(-0.9, 0.9);
    auto g = m.grad1(x);
    bool ok = true;
    const double h = 1e-5;
    std::vector<double> fd(3);
    for (int j = 0; j < 3; ++j) {
      auto xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      fd[j] = (m.eval1(xp) - m.eval1(xm)) / (2 * h);
      // skip probes that straddle a clip kink
      if (std::abs(fd[j] - g[j]) >
          1e-4 * std::max({std::abs(fd[j]), std::abs(g[j]), 1.0})) ok = false;
    }
    if (ok) ++checked;
  }
  // cubic pieces are smooth; nearly every random probe must validate
  CHECK(checked >= 40);
}

TEST_CASE("ickan: p1 input gradient equals the active cell slope") {
  Rng rng(19);
  Model m = Model::make(basic_spec(Family::p1, 2, {4}, 5, false), 20);
  randomize(m, rng);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> x = {rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)};
    auto g = m.grad1(x);
    const double h = 1e-7;  // small enough to stay inside one cell a.s.
    for (int j = 0; j < 2; ++j) {
      auto xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const double fd = (m.eval1(xp) - m.eval1(xm)) / (2 * h);
      CHECK(std::abs(g[j] - fd) <=
            1e-5 * std::max({std::abs(g[j]), std::abs(fd), 1.0}));
    }
  }
}

TEST_CASE("ickan: gradient map is monotone") {
  Rng rng(21);
  for (Family fam : {Family::p1, Family::cubic}) {
    Model m = Model::make(basic_spec(fam, 2, {5}, 6, false), 22);
    randomize(m, rng);
    for (int trial = 0; trial < 300; ++trial) {
      auto a = random_points(rng, 1, m.spec().domain);
      auto b = random_points(rng, 1, m.spec().domain);
      auto ga = m.grad1(a);
      auto gb = m.grad1(b);
      double dotp = 0.0;
      for (int j = 0; j < 2; ++j) dotp += (ga[j] - gb[j]) * (a[j] - b[j]);
      CHECK(dotp >= -1e-8);
    }
  }
}

TEST_CASE("ickan: gradients of a loss containing the input gradient match FD") {
  Rng rng(23);
  for (Family fam : {Family::p1, Family::cubic}) {
    Model m = Model::make(basic_spec(fam, 2, {3}, 3, true), 24);
    randomize(m, rng);
    const int n = 5;
    auto pts = random_points(rng, n, m.spec().domain);

    auto loss = [&](Tape& tape) {
      auto x = Model::batch_inputs(tape, pts, n, 2);
      std::vector<NodeId> grad;
      m.forward(tape, x, &grad);
      NodeId sq0 = tape.pow_int(grad[0], 2);
      NodeId sq1 = tape.pow_int(grad[1], 2);
      return tape.add(tape.sum(sq0), tape.sum(sq1));
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
        const double err = std::abs(grad[i] - fd) /
                           std::max({std::abs(grad[i]), std::abs(fd), 1.0});
        INFO("family ", family_name(fam), " param ", p.name, "[", i, "]");
        CHECK(err <= 1e-3);
      }
    }
  }
}

TEST_CASE("pickan: forward runs and is convex in y at fixed x") {
  NetworkSpec s;
  s.family = Family::pickan;
  s.hidden = {6, 6};
  s.cells = 5;
  s.nx = 1;
  s.ny = 1;
  s.domain = Hypercube::cube(-2.0, 2.0, 2);
  Model m = Model::make(s, 25);
  Rng rng(26);
  randomize(m, rng);

  for (int trial = 0; trial < 200; ++trial) {
    const double x = rng.uniform(-2.0, 2.0);
    const double y1 = rng.uniform(-2.0, 2.0), y2 = rng.uniform(-2.0, 2.0);
    std::vector<double> p1v = {x, y1}, p2v = {x, y2}, pm = {x, 0.5 * (y1 + y2)};
    const double f1 = m.eval_batch(p1v, 1)[0];
    const double f2 = m.eval_batch(p2v, 1)[0];
    const double fm = m.eval_batch(pm, 1)[0];
    CHECK(fm <= 0.5 * (f1 + f2) + 1e-9);
  }
}

TEST_CASE("pickan: zeroed rho channel reduces exactly to an ICKAN in y") {
  NetworkSpec s;
  s.family = Family::pickan;
  s.hidden = {5, 5};
  s.cells = 4;
  s.nx = 2;
  s.ny = 2;
  s.domain = Hypercube::cube(-1.0, 1.0, 4);
  Model m = Model::make(s, 27);
  Rng rng(28);
  randomize(m, rng);
  for (auto& p : m.params().all())
    if (p.name.starts_with("rho")) std::fill(p.value.begin(), p.value.end(), 0.0);
  m.refresh_boxes();

  NetworkSpec si = basic_spec(Family::p1, 2, {5, 5}, 4, false);
  Model ick = Model::make(si, 29);
  for (auto& p : ick.params().all()) {
    // l{i}.* takes its values from kap{i}.*
    std::string src = "kap" + p.name.substr(1);
    Parameter* q = m.params().find(src);
    REQUIRE(q != nullptr);
    p.value = q->value;
  }
  ick.refresh_boxes();

  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> xy = {rng.uniform(-1, 1), rng.uniform(-1, 1),
                              rng.uniform(-1, 1), rng.uniform(-1, 1)};
    std::vector<double> y = {xy[2], xy[3]};
    const double a = m.eval_batch(xy, 1)[0];
    const double b = ick.eval_batch(y, 1)[0];
    CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)));
  }
}

TEST_CASE("pickan: zeroed kappa channel reduces exactly to a P1-KAN in x") {
  NetworkSpec s;
  s.family = Family::pickan;
  s.hidden = {4, 4};
  s.cells = 4;
  s.nx = 2;
  s.ny = 1;
  s.domain = Hypercube::cube(-1.0, 1.0, 3);
  Model m = Model::make(s, 30);
  Rng rng(31);
  randomize(m, rng);
  // kappa layers vanish; the final kappa picks the first coordinate
  for (auto& p : m.params().all())
    if (p.name.starts_with("kap")) std::fill(p.value.begin(), p.value.end(), 0.0);
  m.refresh_boxes();
  {
    ConvexLayer& last = m.convex_layers().back();
    const Hypercube& in_box = m.boxes()[m.convex_layers().size() - 1];
    double lo, hi;
    in_box.span_for(0, &lo, &hi);
    last.b->value[0] = lo;  // identity on [lo, hi]: b = lo, bhat = 1
    last.bhat->value[0] = 1.0;
    m.refresh_boxes();
  }

  // separately built P1-KAN stack sharing the rho parameters
  KanStack ks = KanStack::make(2, {4, 4}, 4, false, Hypercube::cube(-1.0, 1.0, 2), 32);
  for (auto& p : ks.params().all()) {
    Parameter* q = m.params().find(p.name);
    REQUIRE(q != nullptr);
    p.value = q->value;
  }
  ks.refresh_boxes();

  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> xy = {rng.uniform(-1, 1), rng.uniform(-1, 1),
                              rng.uniform(-1, 1)};
    const double a = m.eval_batch(xy, 1)[0];
    Tape tape;
    std::vector<double> x2 = {xy[0], xy[1]};
    auto xn = Model::batch_inputs(tape, x2, 1, 2);
    const double b = tape.value(ks.forward(tape, xn));
    CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)));
  }
}

TEST_CASE("icnn: zero hidden weights give an affine model; convexity holds") {
  NetworkSpec s = basic_spec(Family::icnn, 2, {8, 6}, 1, false);
  Model m = Model::make(s, 33);
  Rng rng(34);
  for (auto& p : m.params().all())
    if (p.name.ends_with(".W")) std::fill(p.value.begin(), p.value.end(), 0.0);

  // affine: second differences vanish everywhere
  std::vector<double> x = {0.3, -0.2};
  const double h = 0.2;
  for (int j = 0; j < 2; ++j) {
    auto xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    CHECK(std::abs(m.eval1(xp) + m.eval1(xm) - 2 * m.eval1(x)) <= 1e-12);
  }

  // random nonnegative hidden weights keep midpoint convexity (relu and celu)
  for (Act act : {Act::relu, Act::celu}) {
    NetworkSpec s2 = s;
    s2.act = act;
    Model m2 = Model::make(s2, 35);
    for (int trial = 0; trial < 200; ++trial) {
      auto a = random_points(rng, 1, s.domain);
      auto b = random_points(rng, 1, s.domain);
      std::vector<double> mid = {0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])};
      CHECK(m2.eval1(mid) <= 0.5 * (m2.eval1(a) + m2.eval1(b)) + 1e-10);
    }
  }

  // projection clamps constrained weights
  Parameter* w = m.params().find("icnn1.W");
  REQUIRE(w != nullptr);
  w->value[0] = -0.5;
  w->value[1] = 0.25;
  m.project_constraints();
  CHECK(w->value[0] == 0.0);
  CHECK(w->value[1] == 0.25);
}

TEST_CASE("construct_max_affine_p1: |x| is represented exactly") {
  std::vector<double> a1 = {1.0}, a2 = {-1.0};
  Model m = construct_max_affine_p1(a1, 0.0, a2, 0.0, Hypercube::cube(-1.0, 1.0, 1));
  Rng rng(36);
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.uniform(-1.0, 1.0);
    std::vector<double> xv = {x};
    CHECK(std::abs(m.eval1(xv) - std::abs(x)) <= 1e-12);
  }
}

TEST_CASE("construct_max_affine_p1: degenerate equal slopes give the affine map") {
  std::vector<double> a = {0.7, -0.3};
  Model m = construct_max_affine_p1(a, 0.4, a, 0.4, Hypercube::cube(0.0, 1.0, 2));
  Rng rng(37);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> x = {rng.uniform(0, 1), rng.uniform(0, 1)};
    const double expect = 0.7 * x[0] - 0.3 * x[1] + 0.4;
    CHECK(std::abs(m.eval1(x) - expect) <= 1e-12);
  }
}

TEST_CASE("construct_max_affine_p1: random 2D pairs on a dense grid") {
  Rng rng(38);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> a1 = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
    std::vector<double> a2 = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
    const double b1 = rng.uniform(-1, 1), b2 = rng.uniform(-1, 1);
    Model m = construct_max_affine_p1(a1, b1, a2, b2, Hypercube::cube(0.0, 1.0, 2));
    double worst = 0.0;
    for (int i = 0; i < 50; ++i)
      for (int j = 0; j < 50; ++j) {
        std::vector<double> x = {i / 49.0, j / 49.0};
        const double f = std::max(a1[0] * x[0] + a1[1] * x[1] + b1,
                                  a2[0] * x[0] + a2[1] * x[1] + b2);
        worst = std::max(worst, std::abs(m.eval1(x) - f));
      }
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("extrapolated evaluation: affine continuation and convexity") {
  // inside the domain extrapolated evaluation is the plain forward
  Rng rng(39);
  NetworkSpec s = basic_spec(Family::cubic, 1, {4}, 4, false);
  s.extrapolate = true;
  Model m = Model::make(s, 40);
  randomize(m, rng);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> x = {rng.uniform(-1, 1)};
    CHECK(m.eval1(x) == m.eval1(x));  // smoke: no throw
  }

  // a purely affine model extends exactly
  NetworkSpec sa = basic_spec(Family::p1, 1, {2}, 3, false, 0.0, 1.0);
  sa.extrapolate = true;
  Model ma = Model::make(sa, 41);
  for (auto& p : ma.params().all())
    if (p.name.ends_with(".d")) std::fill(p.value.begin(), p.value.end(), 0.0);
  ma.refresh_boxes();
  std::vector<double> x0 = {0.0}, x1 = {1.0}, x2 = {2.0};
  const double f0 = ma.eval1(x0), f1 = ma.eval1(x1);
  CHECK(ma.eval1(x2) == doctest::Approx(f1 + (f1 - f0)).epsilon(1e-10));

  // midpoint convexity across the boundary
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a = {rng.uniform(-1, 1)};
    std::vector<double> b = {rng.uniform(1.0, 3.0)};  // outside
    std::vector<double> mid = {0.5 * (a[0] + b[0])};
    CHECK(m.eval1(mid) <= 0.5 * (m.eval1(a) + m.eval1(b)) + 1e-9);
  }

  // without extrapolation, out-of-domain points are rejected
  NetworkSpec sn = basic_spec(Family::p1, 1, {2}, 3, false);
  Model mn = Model::make(sn, 42);
  std::vector<double> far = {4.0};
  CHECK_THROWS(mn.eval1(far));
}

TEST_CASE("checkpoint: round-trip and corruption") {
  Rng rng(43);
  for (Family fam : {Family::p1, Family::cubic, Family::icnn}) {
    NetworkSpec s = basic_spec(fam, 2, {4, 3}, 5, fam != Family::icnn);
    Model m = Model::make(s, 44);
    if (fam != Family::icnn) randomize(m, rng);

    std::string text = checkpoint_to_string(m);
    Model r = checkpoint_from_string(text);
    auto pts = random_points(rng, 20, s.domain);
    auto y1 = m.eval_batch(pts, 20);
    auto y2 = r.eval_batch(pts, 20);
    for (int i = 0; i < 20; ++i)
      CHECK(std::abs(y1[i] - y2[i]) <= 1e-12 * std::max(1.0, std::abs(y1[i])));
  }

  CHECK_THROWS(checkpoint_from_string("{ not json"));
  CHECK_THROWS(checkpoint_from_string("{\"family\":\"p1\"}"));
}

TEST_CASE("pickan checkpoint round-trips") {
  NetworkSpec s;
  s.family = Family::pickan;
  s.hidden = {4, 4};
  s.cells = 3;
  s.nx = 1;
  s.ny = 1;
  s.domain = Hypercube::cube(-2.0, 2.0, 2);
  Model m = Model::make(s, 45);
  Rng rng(46);
  randomize(m, rng);
  Model r = checkpoint_from_string(checkpoint_to_string(m));
  for (int i = 0; i < 30; ++i) {
    std::vector<double> xy = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
    CHECK(m.eval_batch(xy, 1)[0] == doctest::Approx(r.eval_batch(xy, 1)[0]).epsilon(1e-13));
  }
}
