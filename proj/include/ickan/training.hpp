#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ickan/network.hpp"

namespace ickan {

using TargetFn = std::function<double(std::span<const double>)>;

// --- synthetic regression targets ---

// Kac-Murdock-Szego matrix 0.5^|i-j|; deterministic positive-definite choice
// for the quadratic part of the kink target.
std::vector<double> kms_matrix(int d);

// sum_i (|x_i| + |1 - x_i|) + x^T A x, A row-major d x d
double target_quadratic_kink(std::span<const double> x, std::span<const double> A);
// A + 2 1^T x + x^T Q x with Q = -0.5 (d=1) or diag(1, -0.5) (d=2), A = 1
double target_wrong_convexity(std::span<const double> x);
// |y + 1| |x + 2 x^3| on [-2, 2]^2; argument is (x, y)
double target_partial(std::span<const double> xy);
// the four 1D benchmark functions on [-10, 10]
double appendix_target(int i, double x);

struct FitConfig {
  int batch = 1000;
  int64_t iters = 20000;
  double lr = 1e-3;
  uint64_t seed = 0;
  int val_size = 100000;
  int64_t eval_every = 1000;
  int nan_streak_abort = 50;
};

struct FitResult {
  double val_mse = 0.0;
  std::vector<std::pair<int64_t, double>> history;  // (step, validation mse)
  int64_t skipped = 0;
  double wall_seconds = 0.0;
};

// Adam on the empirical MSE with fresh uniform batches; returns the final
// validation MSE on a held-out uniform sample.
FitResult mse_fit(Model& model, const TargetFn& target, const Hypercube& domain,
                  const FitConfig& cfg);

// Batched model evaluation in bounded-memory chunks (sample-major points).
std::vector<double> eval_chunked(Model& model, std::span<const double> pts,
                                 int batch, int chunk = 4096);

// --- linear-quadratic control ---

using Mat2 = std::array<double, 4>;  // row-major 2x2

Mat2 mat2_mul(const Mat2& a, const Mat2& b);
Mat2 mat2_add(const Mat2& a, const Mat2& b);
Mat2 mat2_sub(const Mat2& a, const Mat2& b);
Mat2 mat2_transpose(const Mat2& a);
Mat2 mat2_inverse(const Mat2& a);
double mat2_trace(const Mat2& a);
std::array<double, 2> mat2_vec(const Mat2& a, std::span<const double> x);
double quad_form(const Mat2& m, std::span<const double> x);

struct LQProblem {
  Mat2 A{1, 0, 0, 1}, B{1, 0, 0, 1}, Q{1, 0, 0, 1}, R{1, 0, 0, 1},
      Qf{1, 0, 0, 1}, W{1, 0, 0, 1};
  int horizon = 5;
  Hypercube x0_box = Hypercube::cube(-3.0, 3.0, 2);
};

struct RiccatiSolution {
  std::vector<Mat2> P;  // P_0 .. P_N
  std::vector<Mat2> K;  // K_0 .. K_{N-1}
  std::vector<double> r;  // r_0 .. r_N
  double optimal_cost(std::span<const double> x0) const {
    return quad_form(P[0], x0) + r[0];
  }
};

RiccatiSolution riccati(const LQProblem& prob);

// Cost of one trajectory under the optimal feedback gains; noises holds N
// stacked 2-vectors.
double lq_cost_sample(const LQProblem& prob, const RiccatiSolution& sol,
                      std::span<const double> x0, std::span<const double> noises);

struct LQFitResult {
  double max_rel_err = 0.0;
  double value_at_origin = 0.0;
  std::vector<std::array<double, 3>> grid;  // (x1, x2, rel_error)
  FitResult fit;
};

// Relative error |model - J*| / J* on a grid over the x0 box.
LQFitResult lq_error_grid(Model& model, const LQProblem& prob,
                          const RiccatiSolution& sol, int grid_n = 41);

// Regress the model on sampled trajectory costs and report the relative
// error field against the Riccati ground truth on a grid.
LQFitResult lq_fit(Model& model, const LQProblem& prob, const FitConfig& cfg,
                   int grid_n = 41);

}  // namespace ickan
