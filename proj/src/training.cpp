#include "ickan/training.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace ickan {

std::vector<double> kms_matrix(int d) {
  std::vector<double> a(d * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a[i * d + j] = std::pow(0.5, std::abs(i - j));
  return a;
}

double target_quadratic_kink(std::span<const double> x, std::span<const double> A) {
  const int d = static_cast<int>(x.size());
  double s = 0.0;
  for (int i = 0; i < d; ++i) s += std::abs(x[i]) + std::abs(1.0 - x[i]);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) s += x[i] * A[i * d + j] * x[j];
  return s;
}

double target_wrong_convexity(std::span<const double> x) {
  const int d = static_cast<int>(x.size());
  double s = 1.0;
  for (double v : x) s += 2.0 * v;
  if (d == 1) {
    s += -0.5 * x[0] * x[0];
  } else if (d == 2) {
    s += x[0] * x[0] - 0.5 * x[1] * x[1];
  } else {
    throw std::invalid_argument("target_wrong_convexity: printed Q only for d in {1,2}");
  }
  return s;
}

double target_partial(std::span<const double> xy) {
  if (xy.size() != 2) throw std::invalid_argument("target_partial: needs (x, y)");
  const double x = xy[0], y = xy[1];
  return std::abs(y + 1.0) * std::abs(x + 2.0 * x * x * x);
}

double appendix_target(int i, double x) {
  switch (i) {
    case 1: return x * x;
    case 2: return x * x + 10.0 * (x < 0.0 ? std::exp(x) - 1.0 : x);
    case 3: {
      const double q = x * x + 1.0;
      return q * q;
    }
    case 4: return (std::abs(x) <= 3.0 ? std::abs(x) : 0.0) + (x * x - 3.0) / 2.0;
    default: throw std::invalid_argument("appendix_target: i must be 1..4");
  }
}

std::vector<double> eval_chunked(Model& model, std::span<const double> pts,
                                 int batch, int chunk) {
  const int d = model.spec().input_dim();
  std::vector<double> out;
  out.reserve(batch);
  for (int ofs = 0; ofs < batch; ofs += chunk) {
    const int n = std::min(chunk, batch - ofs);
    auto y = model.eval_batch(pts.subspan(ofs * d, n * d), n);
    out.insert(out.end(), y.begin(), y.end());
  }
  return out;
}

namespace {

double validation_mse(Model& model, std::span<const double> pts,
                      std::span<const double> targets) {
  const int n = static_cast<int>(targets.size());
  auto y = eval_chunked(model, pts, n);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = y[i] - targets[i];
    s += e * e;
  }
  return s / n;
}

NodeId record_forward(Model& model, Tape& tape, std::span<const NodeId> x) {
  if (model.spec().family == Family::pickan) {
    const int nx = model.spec().nx;
    return model.forward_xy(tape, x.subspan(0, nx), x.subspan(nx));
  }
  return model.forward(tape, x);
}

}  // namespace

FitResult mse_fit(Model& model, const TargetFn& target, const Hypercube& domain,
                  const FitConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  const int d = domain.dim();
  Rng rng(cfg.seed);

  std::vector<double> val_pts(static_cast<size_t>(cfg.val_size) * d);
  for (int s = 0; s < cfg.val_size; ++s)
    for (int j = 0; j < d; ++j)
      val_pts[s * d + j] = rng.uniform(domain.lo[j], domain.hi[j]);
  std::vector<double> val_t(cfg.val_size);
  for (int s = 0; s < cfg.val_size; ++s)
    val_t[s] = target(std::span<const double>(val_pts.data() + s * d, d));

  Adam opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  FitResult res;
  Tape tape;
  std::vector<double> pts(static_cast<size_t>(cfg.batch) * d), tv(cfg.batch);
  int nan_streak = 0;
  for (int64_t it = 0; it < cfg.iters; ++it) {
    for (int s = 0; s < cfg.batch; ++s)
      for (int j = 0; j < d; ++j) pts[s * d + j] = rng.uniform(domain.lo[j], domain.hi[j]);
    for (int s = 0; s < cfg.batch; ++s)
      tv[s] = target(std::span<const double>(pts.data() + s * d, d));

    tape.reset();
    auto x = Model::batch_inputs(tape, pts, cfg.batch, d);
    NodeId y = record_forward(model, tape, x);
    NodeId diff = tape.sub(y, tape.constant(tv));
    NodeId loss = tape.scale(tape.sum(tape.pow_int(diff, 2)), 1.0 / cfg.batch);

    if (!std::isfinite(tape.value(loss))) {
      ++res.skipped;
      if (++nan_streak > cfg.nan_streak_abort)
        throw std::runtime_error("mse_fit: non-finite loss streak, aborting run");
      continue;
    }
    nan_streak = 0;
    tape.backward(loss);
    if (opt.step(model.params())) {
      model.project_constraints();
      model.refresh_boxes();
    } else {
      ++res.skipped;
    }

    if (cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0)
      res.history.emplace_back(it + 1, validation_mse(model, val_pts, val_t));
  }
  res.val_mse = validation_mse(model, val_pts, val_t);
  res.skipped += opt.skipped();
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return res;
}

Mat2 mat2_mul(const Mat2& a, const Mat2& b) {
  return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
          a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]};
}
Mat2 mat2_add(const Mat2& a, const Mat2& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]};
}
Mat2 mat2_sub(const Mat2& a, const Mat2& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]};
}
Mat2 mat2_transpose(const Mat2& a) { return {a[0], a[2], a[1], a[3]}; }
Mat2 mat2_inverse(const Mat2& a) {
  const double det = a[0] * a[3] - a[1] * a[2];
  if (std::abs(det) < 1e-300) throw std::runtime_error("mat2_inverse: singular");
  return {a[3] / det, -a[1] / det, -a[2] / det, a[0] / det};
}
double mat2_trace(const Mat2& a) { return a[0] + a[3]; }
std::array<double, 2> mat2_vec(const Mat2& a, std::span<const double> x) {
  return {a[0] * x[0] + a[1] * x[1], a[2] * x[0] + a[3] * x[1]};
}
double quad_form(const Mat2& m, std::span<const double> x) {
  auto mx = mat2_vec(m, x);
  return x[0] * mx[0] + x[1] * mx[1];
}

RiccatiSolution riccati(const LQProblem& prob) {
  const int N = prob.horizon;
  RiccatiSolution sol;
  sol.P.assign(N + 1, Mat2{});
  sol.K.assign(N, Mat2{});
  sol.r.assign(N + 1, 0.0);
  sol.P[N] = prob.Qf;
  const Mat2 At = mat2_transpose(prob.A);
  const Mat2 Bt = mat2_transpose(prob.B);
  for (int t = N - 1; t >= 0; --t) {
    const Mat2& Pn = sol.P[t + 1];
    const Mat2 BtP = mat2_mul(Bt, Pn);
    const Mat2 S = mat2_add(mat2_mul(BtP, prob.B), prob.R);
    const Mat2 Sinv = mat2_inverse(S);
    const Mat2 BtPA = mat2_mul(BtP, prob.A);
    Mat2 K = mat2_mul(Sinv, BtPA);
    for (auto& v : K) v = -v;
    sol.K[t] = K;
    const Mat2 AtP = mat2_mul(At, Pn);
    sol.P[t] = mat2_add(
        mat2_sub(mat2_mul(AtP, prob.A),
                 mat2_mul(mat2_mul(mat2_transpose(BtPA), Sinv), BtPA)),
        prob.Q);
    sol.r[t] = sol.r[t + 1] + mat2_trace(mat2_mul(prob.W, Pn));
  }
  return sol;
}

double lq_cost_sample(const LQProblem& prob, const RiccatiSolution& sol,
                      std::span<const double> x0, std::span<const double> noises) {
  const int N = prob.horizon;
  std::array<double, 2> x = {x0[0], x0[1]};
  double cost = 0.0;
  for (int t = 0; t < N; ++t) {
    const auto u = mat2_vec(sol.K[t], x);
    cost += quad_form(prob.Q, x) + quad_form(prob.R, u);
    const auto ax = mat2_vec(prob.A, x);
    const auto bu = mat2_vec(prob.B, u);
    x = {ax[0] + bu[0] + noises[2 * t], ax[1] + bu[1] + noises[2 * t + 1]};
  }
  cost += quad_form(prob.Qf, x);
  return cost;
}

namespace {

// Cholesky factor of a symmetric PSD 2x2 (lower triangular).
Mat2 chol2(const Mat2& w) {
  const double l00 = std::sqrt(std::max(w[0], 0.0));
  const double l10 = l00 > 0 ? w[2] / l00 : 0.0;
  const double l11 = std::sqrt(std::max(w[3] - l10 * l10, 0.0));
  return {l00, 0.0, l10, l11};
}

}  // namespace

LQFitResult lq_error_grid(Model& model, const LQProblem& prob,
                          const RiccatiSolution& sol, int grid_n) {
  LQFitResult res;
  res.grid.reserve(grid_n * grid_n);
  for (int i = 0; i < grid_n; ++i)
    for (int j = 0; j < grid_n; ++j) {
      std::vector<double> x = {
          prob.x0_box.lo[0] + (prob.x0_box.hi[0] - prob.x0_box.lo[0]) * i / (grid_n - 1.0),
          prob.x0_box.lo[1] + (prob.x0_box.hi[1] - prob.x0_box.lo[1]) * j / (grid_n - 1.0)};
      const double truth = sol.optimal_cost(x);
      const double rel = std::abs(model.eval1(x) - truth) / std::abs(truth);
      res.grid.push_back({x[0], x[1], rel});
      res.max_rel_err = std::max(res.max_rel_err, rel);
    }
  std::vector<double> origin = {0.0, 0.0};
  res.value_at_origin = model.eval1(origin);
  return res;
}

LQFitResult lq_fit(Model& model, const LQProblem& prob, const FitConfig& cfg,
                   int grid_n) {
  const RiccatiSolution sol = riccati(prob);
  const Mat2 L = chol2(prob.W);
  const int N = prob.horizon;

  // regress on noisy trajectory costs: the conditional mean is J*(x0)
  Rng noise_rng(cfg.seed ^ 0x5bd1e995u);
  std::vector<double> noises(2 * N);
  TargetFn cost_target = [&](std::span<const double> x0) {
    for (int t = 0; t < N; ++t) {
      const double z0 = noise_rng.normal(), z1 = noise_rng.normal();
      noises[2 * t] = L[0] * z0;
      noises[2 * t + 1] = L[2] * z0 + L[3] * z1;
    }
    return lq_cost_sample(prob, sol, x0, noises);
  };

  FitResult fit = mse_fit(model, cost_target, prob.x0_box, cfg);
  LQFitResult res = lq_error_grid(model, prob, sol, grid_n);
  res.fit = std::move(fit);
  return res;
}

}  // namespace ickan
