#include "ickan/transport.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace ickan {

void TransportProblem::sample_source(Rng& rng, int n, std::vector<double>& out) const {
  out.resize(static_cast<size_t>(n) * dim);
  for (int s = 0; s < n; ++s) source(rng, std::span<double>(out.data() + s * dim, dim));
}

void TransportProblem::sample_target(Rng& rng, int n, std::vector<double>& out) const {
  sample_source(rng, n, out);
  std::vector<double> y;
  for (int s = 0; s < n; ++s) {
    y = true_map(std::span<const double>(out.data() + s * dim, dim));
    std::copy(y.begin(), y.end(), out.begin() + s * dim);
  }
}

namespace {
SamplerFn uniform01(int d) {
  return [d](Rng& rng, std::span<double> out) {
    for (int j = 0; j < d; ++j) out[j] = rng.uniform();
  };
}
}  // namespace

TransportProblem TransportProblem::identity_uniform(int d) {
  TransportProblem p;
  p.dim = d;
  p.name = "identity";
  p.source = uniform01(d);
  p.true_map = [](std::span<const double> x) {
    return std::vector<double>(x.begin(), x.end());
  };
  return p;
}

TransportProblem TransportProblem::tensorized(int d) {
  TransportProblem p;
  p.dim = d;
  p.name = "tensorized";
  p.source = uniform01(d);
  p.true_map = [](std::span<const double> x) { return tensorized_map(x); };
  return p;
}

TransportProblem TransportProblem::product(int d) {
  TransportProblem p;
  p.dim = d;
  p.name = "product";
  p.source = uniform01(d);
  p.true_map = [](std::span<const double> x) { return product_map(x); };
  return p;
}

std::vector<double> tensorized_map(std::span<const double> x) {
  std::vector<double> y(x.size());
  for (size_t i = 0; i < x.size(); ++i)
    y[i] = x[i] + 1.0 / (6.0 - std::cos(2.0 * M_PI * x[i])) - 0.2;
  return y;
}

double product_potential(std::span<const double> x) {
  const int d = static_cast<int>(x.size());
  double f = std::pow(3.0, -d);
  for (double v : x) f *= v * v + v + 1.0;
  return f;
}

std::vector<double> product_map(std::span<const double> x) {
  const int d = static_cast<int>(x.size());
  std::vector<double> g(d);
  const double scale = std::pow(3.0, -d);
  for (int k = 0; k < d; ++k) {
    double prod = scale * (2.0 * x[k] + 1.0);
    for (int i = 0; i < d; ++i)
      if (i != k) prod *= x[i] * x[i] + x[i] + 1.0;
    g[k] = prod;
  }
  return g;
}

double uvp(const MapFn& candidate, const MapFn& truth,
           std::span<const double> nu_samples, std::span<const double> mu_samples,
           int d) {
  const int n_nu = static_cast<int>(nu_samples.size()) / d;
  const int n_mu = static_cast<int>(mu_samples.size()) / d;
  if (n_nu < 1 || n_mu < 1) throw std::invalid_argument("uvp: empty sample");

  double second = 0.0;
  std::vector<double> mean(d, 0.0);
  for (int s = 0; s < n_nu; ++s)
    for (int j = 0; j < d; ++j) {
      const double v = nu_samples[s * d + j];
      second += v * v;
      mean[j] += v;
    }
  second /= n_nu;
  double mean_sq = 0.0;
  for (int j = 0; j < d; ++j) {
    mean[j] /= n_nu;
    mean_sq += mean[j] * mean[j];
  }
  const double denom = second - mean_sq;  // trace of the empirical covariance

  double num = 0.0;
  for (int s = 0; s < n_mu; ++s) {
    std::span<const double> x(mu_samples.data() + s * d, d);
    const auto a = truth(x);
    const auto b = candidate(x);
    for (int j = 0; j < d; ++j) num += (a[j] - b[j]) * (a[j] - b[j]);
  }
  num /= n_mu;
  return 100.0 * num / denom;
}

double uvp_model(Model& psi, const MapFn& truth, std::span<const double> nu_samples,
                 std::span<const double> mu_samples, int d) {
  const int n_mu = static_cast<int>(mu_samples.size()) / d;
  const int n_nu = static_cast<int>(nu_samples.size()) / d;
  if (n_nu < 1 || n_mu < 1) throw std::invalid_argument("uvp: empty sample");

  double second = 0.0;
  std::vector<double> mean(d, 0.0);
  for (int s = 0; s < n_nu; ++s)
    for (int j = 0; j < d; ++j) {
      const double v = nu_samples[s * d + j];
      second += v * v;
      mean[j] += v;
    }
  second /= n_nu;
  double mean_sq = 0.0;
  for (int j = 0; j < d; ++j) {
    mean[j] /= n_nu;
    mean_sq += mean[j] * mean[j];
  }
  const double denom = second - mean_sq;

  double num = 0.0;
  const int chunk = 4096;
  for (int ofs = 0; ofs < n_mu; ofs += chunk) {
    const int n = std::min(chunk, n_mu - ofs);
    auto g = psi.grad_batch(mu_samples.subspan(ofs * d, n * d), n);
    for (int s = 0; s < n; ++s) {
      const auto t = truth(std::span<const double>(mu_samples.data() + (ofs + s) * d, d));
      for (int j = 0; j < d; ++j)
        num += (t[j] - g[s * d + j]) * (t[j] - g[s * d + j]);
    }
  }
  num /= n_mu;
  return 100.0 * num / denom;
}

void jacobi_eigh(std::span<const double> S, int d, std::vector<double>& eigvals,
                 std::vector<double>& eigvecs) {
  std::vector<double> a(S.begin(), S.end());
  eigvecs.assign(d * d, 0.0);
  for (int i = 0; i < d; ++i) eigvecs[i * d + i] = 1.0;

  auto off = [&] {
    double s = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j) s += a[i * d + j] * a[i * d + j];
    return s;
  };
  double norm = 0.0;
  for (double v : a) norm += v * v;
  const double tol = 1e-30 * std::max(norm, 1e-300);

  for (int sweep = 0; sweep < 100 && off() > tol; ++sweep) {
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < d; ++k) {
          const double akp = a[k * d + p], akq = a[k * d + q];
          a[k * d + p] = c * akp - s * akq;
          a[k * d + q] = s * akp + c * akq;
        }
        for (int k = 0; k < d; ++k) {
          const double apk = a[p * d + k], aqk = a[q * d + k];
          a[p * d + k] = c * apk - s * aqk;
          a[q * d + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < d; ++k) {
          const double vkp = eigvecs[k * d + p], vkq = eigvecs[k * d + q];
          eigvecs[k * d + p] = c * vkp - s * vkq;
          eigvecs[k * d + q] = s * vkp + c * vkq;
        }
      }
  }
  eigvals.resize(d);
  for (int i = 0; i < d; ++i) eigvals[i] = a[i * d + i];
}

namespace {

std::vector<double> eig_power(std::span<const double> S, int d, double expo) {
  std::vector<double> vals, vecs;
  jacobi_eigh(S, d, vals, vecs);
  for (double& v : vals) {
    if (v < -1e-10) throw std::invalid_argument("sqrtm_psd: matrix not PSD");
    v = std::pow(std::max(v, 0.0), expo);
  }
  std::vector<double> out(d * d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += vecs[i * d + k] * vals[k] * vecs[j * d + k];
      out[i * d + j] = s;
    }
  return out;
}

std::vector<double> mat_mul(std::span<const double> a, std::span<const double> b,
                            int d) {
  std::vector<double> c(d * d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) {
      const double aik = a[i * d + k];
      for (int j = 0; j < d; ++j) c[i * d + j] += aik * b[k * d + j];
    }
  return c;
}

}  // namespace

std::vector<double> sqrtm_psd(std::span<const double> S, int d) {
  return eig_power(S, d, 0.5);
}

std::vector<double> LinearMap::apply(std::span<const double> x) const {
  std::vector<double> y(d);
  for (int i = 0; i < d; ++i) {
    double s = m2[i];
    for (int j = 0; j < d; ++j) s += A[i * d + j] * (x[j] - m1[j]);
    y[i] = s;
  }
  return y;
}

MapFn LinearMap::as_fn() const {
  LinearMap copy = *this;
  return [copy](std::span<const double> x) { return copy.apply(x); };
}

LinearMap linear_map_fit(std::span<const double> mu_samples, int n1,
                         std::span<const double> nu_samples, int n2, int d) {
  LinearMap lm;
  lm.d = d;
  lm.m1.assign(d, 0.0);
  lm.m2.assign(d, 0.0);
  std::vector<double> S1(d * d, 0.0), S2(d * d, 0.0);
  for (int s = 0; s < n1; ++s)
    for (int j = 0; j < d; ++j) lm.m1[j] += mu_samples[s * d + j];
  for (double& v : lm.m1) v /= n1;
  for (int s = 0; s < n2; ++s)
    for (int j = 0; j < d; ++j) lm.m2[j] += nu_samples[s * d + j];
  for (double& v : lm.m2) v /= n2;
  for (int s = 0; s < n1; ++s)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        S1[i * d + j] += (mu_samples[s * d + i] - lm.m1[i]) *
                         (mu_samples[s * d + j] - lm.m1[j]);
  for (int s = 0; s < n2; ++s)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        S2[i * d + j] += (nu_samples[s * d + i] - lm.m2[i]) *
                         (nu_samples[s * d + j] - lm.m2[j]);
  for (double& v : S1) v /= n1;
  for (double& v : S2) v /= n2;

  {
    std::vector<double> vals, vecs;
    jacobi_eigh(S1, d, vals, vecs);
    double mn = vals[0];
    for (double v : vals) mn = std::min(mn, v);
    if (mn < 1e-12) {
      for (int i = 0; i < d; ++i) S1[i * d + i] += 1e-9;
      lm.regularized = true;
    }
  }

  const auto S1h = sqrtm_psd(S1, d);
  const auto S1mh = eig_power(S1, d, -0.5);
  const auto inner = sqrtm_psd(mat_mul(mat_mul(S1h, S2, d), S1h, d), d);
  lm.A = mat_mul(mat_mul(S1mh, inner, d), S1mh, d);
  return lm;
}

Hypercube pilot_box(std::span<const double> samples, int n, int d, double margin) {
  Hypercube box;
  box.lo.assign(d, 1e300);
  box.hi.assign(d, -1e300);
  for (int s = 0; s < n; ++s)
    for (int j = 0; j < d; ++j) {
      box.lo[j] = std::min(box.lo[j], samples[s * d + j]);
      box.hi[j] = std::max(box.hi[j], samples[s * d + j]);
    }
  for (int j = 0; j < d; ++j) {
    const double w = box.hi[j] - box.lo[j];
    box.lo[j] -= margin * w;
    box.hi[j] += margin * w;
  }
  return box;
}

namespace {

// mean |grad psi(x) - x|^2 recorded on the tape
NodeId identity_loss(Model& psi, Tape& tape, std::span<const double> pts, int n) {
  const int d = psi.spec().input_dim();
  auto x = Model::batch_inputs(tape, pts, n, d);
  std::vector<NodeId> grad;
  psi.forward(tape, x, &grad);
  std::vector<NodeId> parts(d);
  for (int j = 0; j < d; ++j)
    parts[j] = tape.sum(tape.pow_int(tape.sub(grad[j], x[j]), 2));
  std::vector<double> ones(d, 1.0);
  return tape.scale(tape.affine(parts, ones), 1.0 / n);
}

}  // namespace

double identity_pretrain(Model& psi, const Hypercube& domain, int64_t steps,
                         int batch, double lr, Rng& rng) {
  const int d = domain.dim();
  Adam opt(AdamConfig{lr, 0.9, 0.999, 1e-8});
  Tape tape;
  std::vector<double> pts(static_cast<size_t>(batch) * d);
  for (int64_t it = 0; it < steps; ++it) {
    for (int s = 0; s < batch; ++s)
      for (int j = 0; j < d; ++j)
        pts[s * d + j] = rng.uniform(domain.lo[j], domain.hi[j]);
    tape.reset();
    NodeId loss = identity_loss(psi, tape, pts, batch);
    if (!std::isfinite(tape.value(loss))) continue;
    tape.backward(loss);
    if (opt.step(psi.params())) psi.refresh_boxes();
  }
  for (int s = 0; s < batch; ++s)
    for (int j = 0; j < d; ++j)
      pts[s * d + j] = rng.uniform(domain.lo[j], domain.hi[j]);
  tape.reset();
  return tape.value(identity_loss(psi, tape, pts, batch));
}

MinimaxResult minimax_train(Model& phi, Model& psi, const TransportProblem& prob,
                            const MinimaxConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  const int d = prob.dim;
  Rng rng(cfg.seed);
  MinimaxResult res;

  // fixed test sets for the model-selection metric
  std::vector<double> mu_test, nu_test;
  prob.sample_source(rng, cfg.test_size, mu_test);
  prob.sample_target(rng, cfg.test_size, nu_test);

  Adam opt_psi(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  Adam opt_phi(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});

  std::vector<std::vector<double>> best_psi = psi.params().snapshot();
  std::vector<std::vector<double>> best_phi = phi.params().snapshot();

  Tape tape;
  std::vector<double> spts, vpts;

  // objective at the current batch: mean[phi(grad psi(S)) - <S, grad psi(S)>
  // (- phi(V) when V is given)]
  auto record_objective = [&](std::span<const double> S, int n,
                              const double* V) -> NodeId {
    auto x = Model::batch_inputs(tape, S, n, d);
    std::vector<NodeId> grad;
    psi.forward(tape, x, &grad);
    NodeId phi_at_grad = phi.forward(tape, grad);
    std::vector<NodeId> prods(d);
    for (int j = 0; j < d; ++j) prods[j] = tape.mul(x[j], grad[j]);
    std::vector<double> ones(d, 1.0);
    NodeId inner = tape.affine(prods, ones);
    NodeId per_sample = tape.sub(phi_at_grad, inner);
    NodeId obj = tape.sum(per_sample);
    if (V) {
      auto xv = Model::batch_inputs(tape, std::span<const double>(V, n * d), n, d);
      NodeId phi_v = phi.forward(tape, xv);
      obj = tape.sub(obj, tape.sum(phi_v));
    }
    return tape.scale(obj, 1.0 / n);
  };

  const MapFn truth = prob.true_map;
  for (int64_t it = 0; it < cfg.outer; ++it) {
    for (int j = 0; j < cfg.inner; ++j) {
      prob.sample_source(rng, cfg.batch, spts);
      tape.reset();
      NodeId loss = record_objective(spts, cfg.batch, nullptr);
      if (!std::isfinite(tape.value(loss))) continue;
      tape.backward(loss);
      if (opt_psi.step(psi.params())) psi.refresh_boxes();
    }
    prob.sample_source(rng, cfg.batch, spts);
    prob.sample_target(rng, cfg.batch, vpts);
    tape.reset();
    NodeId obj = record_objective(spts, cfg.batch, vpts.data());
    NodeId loss = tape.scale(obj, -1.0);  // ascent on phi
    if (std::isfinite(tape.value(loss))) {
      tape.backward(loss);
      if (opt_phi.step(phi.params())) phi.refresh_boxes();
    }

    if (cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0) {
      const double u = uvp_model(psi, truth, nu_test, mu_test, d);
      res.trace.emplace_back(it + 1, u);
      res.final_uvp = u;
      if (u < res.best_uvp) {
        res.best_uvp = u;
        best_psi = psi.params().snapshot();
        best_phi = phi.params().snapshot();
      }
      if (u > cfg.divergence_uvp)
        throw std::runtime_error("minimax_train: diverged (UVP " +
                                 std::to_string(u) + ")");
    }
  }
  res.outer_iters = cfg.outer;
  if (res.trace.empty()) {
    const double u = uvp_model(psi, truth, nu_test, mu_test, d);
    res.final_uvp = u;
    if (u < res.best_uvp) {
      res.best_uvp = u;
      best_psi = psi.params().snapshot();
      best_phi = phi.params().snapshot();
    }
  }

  // keep the networks with the lowest test error
  psi.params().restore(best_psi);
  phi.params().restore(best_phi);
  psi.refresh_boxes();
  phi.refresh_boxes();

  std::vector<double> mu_val, nu_val;
  prob.sample_source(rng, cfg.val_size, mu_val);
  prob.sample_target(rng, cfg.val_size, nu_val);
  res.validation_uvp = uvp_model(psi, truth, nu_val, mu_val, d);
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return res;
}

OtRunResult ot_run(const TransportProblem& prob, const OtSetup& setup,
                   const MinimaxConfig& cfg) {
  const int d = prob.dim;
  Rng rng(cfg.seed ^ 0xB5297A4D0F1E2D3CULL);

  std::vector<double> mu_pilot, nu_pilot;
  prob.sample_source(rng, cfg.pilot_size, mu_pilot);
  prob.sample_target(rng, cfg.pilot_size, nu_pilot);

  NetworkSpec spec;
  spec.family = setup.family;
  spec.hidden = setup.hidden.empty()
                    ? std::vector<int>{std::max(2 * d, 10), std::max(d, 5)}
                    : setup.hidden;
  spec.cells = setup.cells;
  spec.adapt = setup.adapt;
  spec.extrapolate = true;

  // psi transports mu onto nu, so it lives on the source box; phi is
  // evaluated at target samples and at grad psi values
  spec.domain = pilot_box(mu_pilot, cfg.pilot_size, d, cfg.box_margin);
  Model psi = Model::make(spec, rng.next_u64());
  spec.domain = pilot_box(nu_pilot, cfg.pilot_size, d, cfg.box_margin);
  Model phi = Model::make(spec, rng.next_u64());

  OtRunResult out{MinimaxResult{}, 1e300, std::move(phi), std::move(psi)};
  MinimaxResult mm;
  mm.pretrain_err_psi = identity_pretrain(out.psi, out.psi.spec().domain,
                                          cfg.pretrain_steps, cfg.batch, cfg.lr, rng);
  mm.pretrain_err_phi = identity_pretrain(out.phi, out.phi.spec().domain,
                                          cfg.pretrain_steps, cfg.batch, cfg.lr, rng);

  MinimaxResult trained = minimax_train(out.phi, out.psi, prob, cfg);
  trained.pretrain_err_psi = mm.pretrain_err_psi;
  trained.pretrain_err_phi = mm.pretrain_err_phi;
  out.mm = trained;

  // linear benchmark at validation size
  std::vector<double> mu_fit, nu_fit, mu_val, nu_val;
  prob.sample_source(rng, cfg.val_size, mu_fit);
  prob.sample_target(rng, cfg.val_size, nu_fit);
  prob.sample_source(rng, cfg.val_size, mu_val);
  prob.sample_target(rng, cfg.val_size, nu_val);
  LinearMap lm = linear_map_fit(mu_fit, cfg.val_size, nu_fit, cfg.val_size, d);
  out.linear_uvp = uvp(lm.as_fn(), prob.true_map, nu_val, mu_val, d);
  return out;
}

MarginalReport marginal_report(std::span<const double> samples, int n, int d,
                               int bins, int grid_n) {
  if (n < 1 || d < 1) throw std::invalid_argument("marginal_report: empty sample");
  MarginalReport rep;
  rep.dim = d;
  rep.bins = bins;
  rep.edges.resize(d * (bins + 1));
  rep.counts.assign(d * bins, 0.0);
  rep.grid.resize(d * grid_n);
  rep.kde.resize(d * grid_n);
  rep.bandwidth.resize(d);

  for (int j = 0; j < d; ++j) {
    double lo = 1e300, hi = -1e300, mean = 0.0;
    for (int s = 0; s < n; ++s) {
      const double v = samples[s * d + j];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      mean += v;
    }
    mean /= n;
    double var = 0.0;
    for (int s = 0; s < n; ++s) {
      const double v = samples[s * d + j] - mean;
      var += v * v;
    }
    var /= std::max(n - 1, 1);
    const double sigma = std::sqrt(var);
    const double bw = sigma * std::pow(static_cast<double>(n), -0.2);
    rep.bandwidth[j] = bw;
    if (hi <= lo) hi = lo + 1.0;

    for (int b = 0; b <= bins; ++b)
      rep.edges[j * (bins + 1) + b] = lo + (hi - lo) * b / bins;
    for (int s = 0; s < n; ++s) {
      int b = static_cast<int>((samples[s * d + j] - lo) / (hi - lo) * bins);
      b = std::min(std::max(b, 0), bins - 1);
      rep.counts[j * bins + b] += 1.0;
    }

    const double glo = lo - 3.0 * bw, ghi = hi + 3.0 * bw;
    for (int i = 0; i < grid_n; ++i) {
      const double x = glo + (ghi - glo) * i / (grid_n - 1.0);
      rep.grid[j * grid_n + i] = x;
      double acc = 0.0;
      for (int s = 0; s < n; ++s) {
        const double z = (x - samples[s * d + j]) / bw;
        acc += std::exp(-0.5 * z * z);
      }
      rep.kde[j * grid_n + i] = acc / (n * bw * std::sqrt(2.0 * M_PI));
    }
  }
  return rep;
}

}  // namespace ickan
