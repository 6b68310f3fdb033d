#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ickan/network.hpp"

namespace ickan {

using MapFn = std::function<std::vector<double>(std::span<const double>)>;
using SamplerFn = std::function<void(Rng&, std::span<double>)>;

// Source sampler, target sampler (pushforward of the source through a known
// map for the synthetic benchmarks), and the ground-truth map when known.
struct TransportProblem {
  int dim = 1;
  std::string name;
  SamplerFn source;
  MapFn true_map;  // empty when unknown

  void sample_source(Rng& rng, int n, std::vector<double>& out) const;
  // target samples: fresh source draws pushed through the true map
  void sample_target(Rng& rng, int n, std::vector<double>& out) const;

  static TransportProblem identity_uniform(int d);
  static TransportProblem tensorized(int d);
  static TransportProblem product(int d);
};

struct MinimaxConfig {
  int64_t outer = 3000;  // I_ext
  int inner = 15;        // I_int
  int batch = 1024;
  double lr = 1e-3;
  int64_t eval_every = 100;
  int test_size = 4096;
  int val_size = 16384;  // 2^14
  int64_t pretrain_steps = 2000;
  int pilot_size = 16384;
  double box_margin = 0.05;
  uint64_t seed = 0;
  double divergence_uvp = 1e4;
};

struct MinimaxResult {
  double best_uvp = 1e300;
  double final_uvp = 1e300;
  double validation_uvp = 1e300;  // best parameters, fresh 2^14 sample
  std::vector<std::pair<int64_t, double>> trace;  // (outer iter, test uvp)
  int64_t outer_iters = 0;
  double pretrain_err_phi = 0.0, pretrain_err_psi = 0.0;
  double wall_seconds = 0.0;
};

// Percentage of unexplained variance of the candidate map against the truth:
// 100 * mean_mu |T*(x) - That(x)|^2 / tr Cov(nu-samples).
double uvp(const MapFn& candidate, const MapFn& truth,
           std::span<const double> nu_samples, std::span<const double> mu_samples,
           int d);
// Same metric with the candidate map given by grad psi (batched evaluation).
double uvp_model(Model& psi, const MapFn& truth, std::span<const double> nu_samples,
                 std::span<const double> mu_samples, int d);

// Symmetric eigendecomposition by cyclic Jacobi rotations; eigvecs is
// column-major (column k = k-th eigenvector).
void jacobi_eigh(std::span<const double> S, int d, std::vector<double>& eigvals,
                 std::vector<double>& eigvecs);
// PSD square root; eigenvalues below -1e-10 are rejected, small negatives
// clipped to zero.
std::vector<double> sqrtm_psd(std::span<const double> S, int d);

struct LinearMap {
  int d = 0;
  std::vector<double> A;        // d x d
  std::vector<double> m1, m2;   // source / target means
  bool regularized = false;     // Sigma1 needed a ridge
  std::vector<double> apply(std::span<const double> x) const;
  MapFn as_fn() const;
};

// A = S1^{-1/2} (S1^{1/2} S2 S1^{1/2})^{1/2} S1^{-1/2} from empirical moments.
LinearMap linear_map_fit(std::span<const double> mu_samples, int n1,
                         std::span<const double> nu_samples, int n2, int d);

// Componentwise benchmark map T_i(x_i) = x_i + 1/(6 - cos(2 pi x_i)) - 0.2.
std::vector<double> tensorized_map(std::span<const double> x);
// Product potential f(x) = 3^-d prod_i (x_i^2 + x_i + 1) and its gradient map.
double product_potential(std::span<const double> x);
std::vector<double> product_map(std::span<const double> x);

// Domain box for a potential from the min/max of a pilot sample, inflated by
// the given margin.
Hypercube pilot_box(std::span<const double> samples, int n, int d, double margin);

// Minimize mean |grad psi(x) - x|^2 over x ~ U(domain); returns the achieved
// mean squared identity error on a fresh sample.
double identity_pretrain(Model& psi, const Hypercube& domain, int64_t steps,
                         int batch, double lr, Rng& rng);

// Algorithm: inner loop adapts psi (the map's potential), outer loop takes
// one ascent step on phi; every eval_every outer iterations the UVP of
// grad psi is measured on the test set and the best-scoring parameters of
// both potentials are retained (and restored before returning).
MinimaxResult minimax_train(Model& phi, Model& psi, const TransportProblem& prob,
                            const MinimaxConfig& cfg);

// Network sizing used by the synthetic benchmarks.
struct OtSetup {
  Family family = Family::cubic;
  std::vector<int> hidden;  // empty: {max(2d, 10), max(d, 5)}
  int cells = 10;
  bool adapt = true;
};

struct OtRunResult {
  MinimaxResult mm;
  double linear_uvp = 1e300;  // linear baseline on the validation sets
  Model phi, psi;
};

// Full benchmark run: pilot boxes, identity pretraining of both potentials,
// minimax training, linear-map baseline on the validation sample.
OtRunResult ot_run(const TransportProblem& prob, const OtSetup& setup,
                   const MinimaxConfig& cfg);

struct MarginalReport {
  int dim = 0;
  int bins = 0;
  std::vector<double> edges;       // dim x (bins+1)
  std::vector<double> counts;      // dim x bins
  std::vector<double> grid;        // dim x grid_n
  std::vector<double> kde;         // dim x grid_n
  std::vector<double> bandwidth;   // per marginal (Scott's rule)
};

MarginalReport marginal_report(std::span<const double> samples, int n, int d,
                               int bins = 50, int grid_n = 200);

}  // namespace ickan
