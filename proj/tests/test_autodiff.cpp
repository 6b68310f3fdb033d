#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ickan/param.hpp"
#include "ickan/rng.hpp"
#include "ickan/tape.hpp"

using namespace ickan;

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-10});
}

}  // namespace

TEST_CASE("record: forward values of elementary kinds") {
  Tape t;
  NodeId a = t.constant(2.0), b = t.constant(3.0);
  CHECK(t.value(t.mul(a, b)) == doctest::Approx(6.0));
  CHECK(t.value(t.max_const(t.constant(-1.0), 0.0)) == 0.0);
  CHECK(t.value(t.sigmoid(t.constant(0.0))) == doctest::Approx(0.5));
  CHECK(t.value(t.add(a, b)) == 5.0);
  CHECK(t.value(t.sub(a, b)) == -1.0);
  CHECK(t.value(t.div(a, b)) == doctest::Approx(2.0 / 3.0));
  CHECK(t.value(t.pow_int(b, 3)) == 27.0);
  double arr[3] = {1.0, -2.0, 4.0};
  NodeId v = t.constant(std::span<const double>(arr, 3));
  CHECK(t.value(t.sum(v)) == 3.0);
  CHECK(t.value(t.min_all(v)) == -2.0);
  CHECK(t.value(t.max_all(v)) == 4.0);
  CHECK(t.value(t.dot(v, v)) == doctest::Approx(21.0));
}

TEST_CASE("record: errors") {
  Tape t;
  double a2[2] = {1.0, 2.0};
  double a3[3] = {1.0, 2.0, 3.0};
  NodeId x = t.constant(std::span<const double>(a2, 2));
  NodeId y = t.constant(std::span<const double>(a3, 3));
  CHECK_THROWS(t.add(x, y));
  CHECK_THROWS(t.dot(x, y));
  NodeId ps[2] = {x, y};
  CHECK_THROWS(t.record(static_cast<OpKind>(255), ps));
  CHECK_THROWS(t.pow_int(x, 4));
}

TEST_CASE("backward: basic derivatives and subgradient conventions") {
  ParameterStore store;
  Parameter* p = store.create("p", {3.0});

  Tape t;
  NodeId out = t.pow_int(t.leaf(*p), 2);
  t.backward(out);
  CHECK(p->adjoint[0] == doctest::Approx(6.0));

  // max(p, 0) at p = 0 has derivative 0 by convention
  p->value[0] = 0.0;
  t.reset();
  t.backward(t.max_const(t.leaf(*p), 0.0));
  CHECK(p->adjoint[0] == 0.0);

  // sigma'(0) = 1/4
  t.reset();
  t.backward(t.sigmoid(t.leaf(*p)));
  CHECK(p->adjoint[0] == doctest::Approx(0.25));

  // binary max ties route to the first argument
  ParameterStore s2;
  Parameter* a = s2.create("a", {1.0});
  Parameter* b = s2.create("b", {1.0});
  t.reset();
  t.backward(t.max_elem(t.leaf(*a), t.leaf(*b)));
  CHECK(a->adjoint[0] == 1.0);
  CHECK(b->adjoint[0] == 0.0);

  t.reset();
  CHECK_THROWS(t.backward(t.constant(std::vector<double>{1.0, 2.0})));
}

TEST_CASE("backward: smooth graphs match central finite differences") {
  Rng rng(20240811);
  for (int trial = 0; trial < 20; ++trial) {
    ParameterStore store;
    Parameter* p = store.create("p", rng.uniform_vec(5, -1.5, 1.5));
    Parameter* q = store.create("q", rng.uniform_vec(5, 0.5, 2.0));

    auto eval = [&](Tape& t) {
      NodeId np = t.leaf(*p);
      NodeId nq = t.leaf(*q);
      NodeId m = t.mul(np, nq);
      NodeId s = t.sigmoid(t.sub(m, np));
      NodeId d = t.div(np, nq);
      NodeId w[3] = {m, s, d};
      double c[3] = {0.7, -1.3, 0.4};
      NodeId mix = t.affine(w, c, 0.25);
      NodeId cube = t.pow_int(mix, 3);
      return t.add(t.sum(cube), t.dot(m, s));
    };

    Tape t;
    NodeId out = eval(t);
    t.backward(out);
    std::vector<double> gp = p->adjoint, gq = q->adjoint;

    const double h = 1e-5;
    for (int i = 0; i < 5; ++i) {
      for (Parameter* par : {p, q}) {
        double* g = (par == p) ? &gp[i] : &gq[i];
        const double keep = par->value[i];
        Tape t1, t2;
        par->value[i] = keep + h;
        const double f1 = t1.value(eval(t1));
        par->value[i] = keep - h;
        const double f2 = t2.value(eval(t2));
        par->value[i] = keep;
        const double fd = (f1 - f2) / (2 * h);
        CHECK(rel_err(*g, fd) <= 1e-5);
      }
    }
  }
}

TEST_CASE("backward: repeated sweeps give identical adjoints") {
  ParameterStore store;
  Parameter* p = store.create("p", {0.3, -0.7, 1.1});
  Tape t;
  NodeId out = t.sum(t.pow_int(t.sigmoid(t.leaf(*p)), 2));
  t.backward(out);
  std::vector<double> first = p->adjoint;
  t.backward(out);
  CHECK(p->adjoint == first);
}

TEST_CASE("adam: single step with unit gradient moves by ~lr") {
  // Hand evaluation: m-hat = 1, v-hat = 1, so the step is lr / (1 + eps).
  ParameterStore store;
  Parameter* p = store.create("p", {1.0});
  Adam opt(AdamConfig{1e-3, 0.9, 0.999, 1e-8});
  p->adjoint[0] = 1.0;
  CHECK(opt.step(store));
  const double expected = 1.0 - 1e-3 / (1.0 + 1e-8);
  CHECK(p->value[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(p->adjoint[0] == 0.0);  // zeroed afterward

  // Second identical step: bias corrections cancel again, monotone decrease.
  const double after_one = p->value[0];
  p->adjoint[0] = 1.0;
  CHECK(opt.step(store));
  CHECK(p->value[0] < after_one);
  CHECK(p->value[0] == doctest::Approx(1.0 - 2.0 * 1e-3 / (1.0 + 1e-8)).epsilon(1e-9));
}

TEST_CASE("adam: zero gradient and zero learning rate are identities") {
  ParameterStore store;
  Parameter* p = store.create("p", {0.5, -0.25});
  Adam opt;
  for (int i = 0; i < 3; ++i) CHECK(opt.step(store));
  CHECK(p->value[0] == 0.5);
  CHECK(p->value[1] == -0.25);

  Adam frozen(AdamConfig{0.0, 0.9, 0.999, 1e-8});
  p->adjoint = {1.0, -2.0};
  CHECK(frozen.step(store));
  CHECK(p->value[0] == 0.5);
  CHECK(p->value[1] == -0.25);
}

TEST_CASE("adam: non-finite gradient skips the step and reports") {
  ParameterStore store;
  Parameter* p = store.create("p", {1.0});
  Adam opt;
  p->adjoint[0] = std::nan("");
  CHECK_FALSE(opt.step(store));
  CHECK(opt.skipped() == 1);
  CHECK(opt.steps() == 0);
  CHECK(p->value[0] == 1.0);
  CHECK(p->adjoint[0] == 0.0);
}

TEST_CASE("fused kinds: gradients match finite differences") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    ParameterStore store;
    Parameter* bhat = store.create("bhat", {rng.uniform(0.2, 1.0)});
    Parameter* b = store.create("b", {rng.uniform(-0.5, 0.5)});
    Parameter* d = store.create("d", rng.uniform_vec(4, 0.05, 0.6));
    Parameter* g = store.create("g", rng.uniform_vec(4, -1.0, 1.0));
    Parameter* raw = store.create("raw", rng.uniform_vec(4, -0.8, 0.8));
    std::vector<double> xs = rng.uniform_vec(6, -0.3, 1.3);

    auto eval = [&](Tape& t) {
      NodeId v = t.lattice_vertices(t.leaf(*raw), 0.0, 1.0);
      NodeId dl = t.affine(std::vector<NodeId>{t.slice(v, 1, 4), t.slice(v, 0, 4)},
                           std::vector<double>{1.0, -1.0});
      NodeId a1 = t.convex_slopes(t.leaf(*bhat), t.leaf(*d), trial % 2 == 0);
      NodeId a0 = t.cubic_values(t.leaf(*b), a1, t.leaf(*g), dl);
      NodeId x = t.constant(xs);
      std::vector<int32_t> idx(xs.size());
      auto vv = t.values(v);
      for (size_t i = 0; i < xs.size(); ++i) idx[i] = locate_cell(xs[i], vv, nullptr);
      NodeId tt = t.cell_coord(x, v, idx);
      NodeId dx = t.cell_width(v, idx);
      NodeId mix = t.hermite_mix(a0, a1, tt, dx, idx);
      NodeId slope = t.hermite_slope(a0, a1, tt, dx, idx);
      NodeId lerp = t.lerp_gather(a0, tt, idx);
      NodeId gsl = t.gather_slope(a0, dx, idx);
      NodeId parts[4] = {t.sum(mix), t.sum(slope), t.sum(lerp), t.sum(gsl)};
      double c[4] = {1.0, 0.31, 0.57, 0.11};
      return t.affine(parts, c, 0.0);
    };

    Tape t;
    t.backward(eval(t));
    std::vector<Parameter*> ps = {bhat, b, d, g, raw};
    std::vector<std::vector<double>> grads;
    for (auto* par : ps) grads.push_back(par->adjoint);

    const double h = 1e-6;
    for (size_t pi = 0; pi < ps.size(); ++pi) {
      for (int i = 0; i < ps[pi]->size(); ++i) {
        const double keep = ps[pi]->value[i];
        Tape t1, t2;
        ps[pi]->value[i] = keep + h;
        const double f1 = t1.value(eval(t1));
        ps[pi]->value[i] = keep - h;
        const double f2 = t2.value(eval(t2));
        ps[pi]->value[i] = keep;
        const double fd = (f1 - f2) / (2 * h);
        INFO("param ", ps[pi]->name, " index ", i);
        CHECK(rel_err(grads[pi][i], fd) <= 2e-4);
      }
    }
  }
}
