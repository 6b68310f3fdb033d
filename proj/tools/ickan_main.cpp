#include <filesystem>
#include <functional>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "ickan/io.hpp"
#include "ickan/training.hpp"
#include "ickan/transport.hpp"
#include "ickan/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ickan;

namespace {

struct CommonOpts {
  std::string out = "out";
  uint64_t seed = 0;
  int runs = 1;
  bool parallel = false;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--seed", c.seed, "base seed");
  cmd->add_option("--runs", c.runs, "independent runs");
  cmd->add_flag("--parallel", c.parallel, "run the independent runs concurrently");
}

uint64_t run_seed(const CommonOpts& c, const std::string& exp, int run) {
  return Rng::derive_seed(exp + "#" + std::to_string(c.seed), run);
}

// Runs one closure per run index, optionally on threads. Exceptions abort.
void for_each_run(const CommonOpts& c, const std::function<void(int)>& body) {
  if (!c.parallel || c.runs == 1) {
    for (int r = 0; r < c.runs; ++r) body(r);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(c.runs);
  for (int r = 0; r < c.runs; ++r)
    threads.emplace_back([&, r] {
      try {
        body(r);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    });
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

json g_manifest_artifacts = json::object();

void note_artifact(const std::string& path) {
  g_manifest_artifacts[path] = hex64(fnv1a64_file(path));
}

void write_manifest(const CommonOpts& c, const std::string& exp, const json& cfg) {
  json m;
  m["experiment"] = exp;
  m["config"] = cfg;
  m["config"]["seed"] = c.seed;
  m["config"]["runs"] = c.runs;
  m["artifacts"] = g_manifest_artifacts;
  const std::string path = c.out + "/manifest.json";
  std::ofstream f(path);
  f << m.dump(1) << "\n";
}

std::string method_name(Family fam, bool adapt) {
  std::string s = family_name(fam);
  if (fam == Family::p1) s = "p1-ickan";
  if (fam == Family::cubic) s = "cubic-ickan";
  if (fam == Family::pickan) s = "pickan";
  if (adapt && fam != Family::icnn) s += "-adapt";
  return s;
}

struct FitOpts {
  CommonOpts common;
  std::string family = "p1";
  int dim = 3;
  int layers = 2;
  int neurons = 20;
  int cells = 20;
  bool adapt = false;
  int64_t iters = 20000;
  int batch = 1000;
  double lr = 1e-3;
  int val_size = 100000;
};

void add_fit_flags(CLI::App* cmd, FitOpts& o) {
  add_common(cmd, o.common);
  cmd->add_option("--family", o.family, "p1 | cubic | icnn | pickan");
  cmd->add_option("--dim", o.dim, "input dimension");
  cmd->add_option("--layers", o.layers, "hidden layers");
  cmd->add_option("--neurons", o.neurons, "neurons per hidden layer");
  cmd->add_option("--P", o.cells, "mesh cells per 1D function");
  cmd->add_flag("--adapt", o.adapt, "adaptive grids");
  cmd->add_option("--iters", o.iters, "Adam steps");
  cmd->add_option("--batch", o.batch, "batch size");
  cmd->add_option("--lr", o.lr, "learning rate");
  cmd->add_option("--val-size", o.val_size, "validation sample size");
}

NetworkSpec spec_from_fit(const FitOpts& o, const Hypercube& domain) {
  NetworkSpec s;
  s.family = family_from_name(o.family);
  s.hidden.assign(o.layers, o.neurons);
  s.cells = o.cells;
  s.adapt = o.adapt;
  s.domain = domain;
  if (s.family == Family::pickan) {
    s.nx = 1;
    s.ny = domain.dim() - 1;
  }
  return s;
}

json fit_config_json(const FitOpts& o) {
  return json{{"family", o.family}, {"dim", o.dim},   {"layers", o.layers},
              {"neurons", o.neurons}, {"P", o.cells}, {"adapt", o.adapt},
              {"iters", o.iters},     {"batch", o.batch}, {"lr", o.lr},
              {"val_size", o.val_size}};
}

int cmd_fit(const FitOpts& o) {
  fs::create_directories(o.common.out);
  const auto A = kms_matrix(o.dim);
  TargetFn target = [&A](std::span<const double> x) {
    return target_quadratic_kink(x, A);
  };
  const Hypercube domain = Hypercube::cube(-2.0, 2.0, o.dim);

  CsvWriter csv(o.common.out + "/results.csv",
                "method,layers,neurons,P,run,iterations,mse,wall_seconds");
  std::vector<FitResult> results(o.common.runs);
  for_each_run(o.common, [&](int r) {
    Model m = Model::make(spec_from_fit(o, domain), run_seed(o.common, "fit", r));
    FitConfig cfg;
    cfg.batch = o.batch;
    cfg.iters = o.iters;
    cfg.lr = o.lr;
    cfg.val_size = o.val_size;
    cfg.eval_every = 0;
    cfg.seed = run_seed(o.common, "fit-data", r);
    results[r] = mse_fit(m, target, domain, cfg);
    const std::string ck = o.common.out + "/fit_run" + std::to_string(r) + ".ckpt.json";
    save_checkpoint(m, ck);
  });
  for (int r = 0; r < o.common.runs; ++r) {
    csv.row(method_name(family_from_name(o.family), o.adapt), o.layers, o.neurons,
            o.cells, r, o.iters, results[r].val_mse, results[r].wall_seconds);
    std::cout << "run " << r << ": validation mse " << results[r].val_mse << "\n";
  }
  for (int r = 0; r < o.common.runs; ++r)
    note_artifact(o.common.out + "/fit_run" + std::to_string(r) + ".ckpt.json");
  note_artifact(csv.path());
  write_manifest(o.common, "fit", fit_config_json(o));
  return 0;
}

int cmd_wrong_convexity(const FitOpts& o) {
  fs::create_directories(o.common.out);
  if (o.dim != 1 && o.dim != 2)
    throw CLI::ValidationError("--dim", "wrong-convexity is printed for d in {1,2}");
  TargetFn target = [](std::span<const double> x) {
    return target_wrong_convexity(x);
  };
  const Hypercube domain = Hypercube::cube(-2.0, 2.0, o.dim);

  CsvWriter csv(o.common.out + "/results.csv",
                "method,layers,neurons,P,run,iterations,mse,wall_seconds");
  for (int r = 0; r < o.common.runs; ++r) {
    Model m = Model::make(spec_from_fit(o, domain), run_seed(o.common, "wrongcvx", r));
    FitConfig cfg;
    cfg.batch = o.batch;
    cfg.iters = o.iters;
    cfg.lr = o.lr;
    cfg.val_size = o.val_size;
    cfg.eval_every = 0;
    cfg.seed = run_seed(o.common, "wrongcvx-data", r);
    FitResult res = mse_fit(m, target, domain, cfg);
    csv.row(method_name(family_from_name(o.family), o.adapt), o.layers, o.neurons,
            o.cells, r, o.iters, res.val_mse, res.wall_seconds);

    if (o.dim == 1) {
      CsvWriter curve(o.common.out + "/curve_run" + std::to_string(r) + ".csv",
                      "x,target,fit");
      for (int i = 0; i <= 400; ++i) {
        const double x = -2.0 + 4.0 * i / 400.0;
        std::vector<double> xv = {x};
        curve.row(x, target_wrong_convexity(xv), m.eval1(xv));
      }
      note_artifact(curve.path());
    } else {
      CsvWriter grid(o.common.out + "/error_grid_run" + std::to_string(r) + ".csv",
                     "x1,x2,error");
      for (int i = 0; i <= 80; ++i)
        for (int j = 0; j <= 80; ++j) {
          std::vector<double> xv = {-2.0 + 4.0 * i / 80.0, -2.0 + 4.0 * j / 80.0};
          grid.row(xv[0], xv[1], target_wrong_convexity(xv) - m.eval1(xv));
        }
      note_artifact(grid.path());
    }
  }
  note_artifact(csv.path());
  write_manifest(o.common, "wrong-convexity", fit_config_json(o));
  return 0;
}

int cmd_lq(const FitOpts& o) {
  fs::create_directories(o.common.out);
  LQProblem prob;
  CsvWriter csv(o.common.out + "/results.csv",
                "method,layers,neurons,P,run,iterations,mse,wall_seconds");
  for (int r = 0; r < o.common.runs; ++r) {
    Model m = Model::make(spec_from_fit(o, prob.x0_box), run_seed(o.common, "lq", r));
    FitConfig cfg;
    cfg.batch = o.batch;
    cfg.iters = o.iters;
    cfg.lr = o.lr;
    cfg.val_size = o.val_size;
    cfg.eval_every = 0;
    cfg.seed = run_seed(o.common, "lq-data", r);
    LQFitResult res = lq_fit(m, prob, cfg);
    csv.row(method_name(family_from_name(o.family), o.adapt), o.layers, o.neurons,
            o.cells, r, o.iters, res.fit.val_mse, res.fit.wall_seconds);

    CsvWriter grid(o.common.out + "/rel_error_run" + std::to_string(r) + ".csv",
                   "x1,x2,rel_error");
    for (const auto& row : res.grid) grid.row(row[0], row[1], row[2]);
    note_artifact(grid.path());
    const std::string ck = o.common.out + "/lq_run" + std::to_string(r) + ".ckpt.json";
    save_checkpoint(m, ck);
    note_artifact(ck);
    const auto sol = riccati(prob);
    std::cout << "run " << r << ": max rel err " << res.max_rel_err
              << ", value(0) " << res.value_at_origin << " vs r0 " << sol.r[0]
              << "\n";
  }
  note_artifact(csv.path());
  write_manifest(o.common, "lq", fit_config_json(o));
  return 0;
}

int cmd_pickan_fit(const FitOpts& o) {
  fs::create_directories(o.common.out);
  TargetFn target = [](std::span<const double> xy) { return target_partial(xy); };
  const Hypercube domain = Hypercube::cube(-2.0, 2.0, 2);

  CsvWriter csv(o.common.out + "/results.csv",
                "method,layers,neurons,P,run,iterations,mse,wall_seconds");
  std::vector<FitResult> results(o.common.runs);
  for_each_run(o.common, [&](int r) {
    FitOpts po = o;
    po.family = "pickan";
    Model m = Model::make(spec_from_fit(po, domain), run_seed(o.common, "pickan", r));
    FitConfig cfg;
    cfg.batch = o.batch;
    cfg.iters = o.iters;
    cfg.lr = o.lr;
    cfg.val_size = o.val_size;
    cfg.eval_every = 0;
    cfg.seed = run_seed(o.common, "pickan-data", r);
    results[r] = mse_fit(m, target, domain, cfg);
    save_checkpoint(m, o.common.out + "/pickan_run" + std::to_string(r) + ".ckpt.json");
  });
  for (int r = 0; r < o.common.runs; ++r) {
    csv.row(method_name(Family::pickan, o.adapt), o.layers, o.neurons, o.cells, r,
            o.iters, results[r].val_mse, results[r].wall_seconds);
    note_artifact(o.common.out + "/pickan_run" + std::to_string(r) + ".ckpt.json");
    std::cout << "run " << r << ": validation mse " << results[r].val_mse << "\n";
  }
  note_artifact(csv.path());
  write_manifest(o.common, "pickan-fit", fit_config_json(o));
  return 0;
}

struct OtOpts {
  CommonOpts common;
  std::string benchmark = "tensorized";
  std::string family = "cubic";
  int dim = 2;
  int cells = 10;
  int neurons = 0;  // 0: benchmark default sizing
  bool no_adapt = false;
  int64_t outer = 3000;
  int inner = 15;
  int batch = 1024;
  double lr = 1e-3;
  int64_t eval_every = 100;
  int test_size = 4096;
  int val_size = 16384;
  int64_t pretrain = 2000;
};

TransportProblem make_problem(const std::string& benchmark, int d) {
  if (benchmark == "identity") return TransportProblem::identity_uniform(d);
  if (benchmark == "tensorized") return TransportProblem::tensorized(d);
  if (benchmark == "product") return TransportProblem::product(d);
  throw CLI::ValidationError("--benchmark", "unknown benchmark " + benchmark);
}

int cmd_ot(const OtOpts& o) {
  fs::create_directories(o.common.out);
  TransportProblem prob = make_problem(o.benchmark, o.dim);

  OtSetup setup;
  setup.family = family_from_name(o.family);
  setup.cells = o.cells;
  setup.adapt = !o.no_adapt;
  if (o.neurons > 0) setup.hidden = {o.neurons, std::max(o.neurons / 2, 1)};

  CsvWriter csv(o.common.out + "/ot_results.csv",
                "benchmark,method,d,P,neurons,run,best_uvp,final_uvp,outer_iters");
  CsvWriter lcsv(o.common.out + "/linear_baseline.csv", "benchmark,d,run,uvp");
  for (int r = 0; r < o.common.runs; ++r) {
    MinimaxConfig cfg;
    cfg.outer = o.outer;
    cfg.inner = o.inner;
    cfg.batch = o.batch;
    cfg.lr = o.lr;
    cfg.eval_every = o.eval_every;
    cfg.test_size = o.test_size;
    cfg.val_size = o.val_size;
    cfg.pretrain_steps = o.pretrain;
    cfg.seed = run_seed(o.common, "ot-" + o.benchmark, r);
    OtRunResult res = ot_run(prob, setup, cfg);

    const int shown_neurons =
        o.neurons > 0 ? o.neurons : std::max(2 * o.dim, 10);
    csv.row(o.benchmark, method_name(setup.family, setup.adapt), o.dim, o.cells,
            shown_neurons, r, res.mm.best_uvp, res.mm.validation_uvp,
            res.mm.outer_iters);
    lcsv.row(o.benchmark, o.dim, r, res.linear_uvp);
    std::cout << "run " << r << ": best uvp " << res.mm.best_uvp
              << "%, validation uvp " << res.mm.validation_uvp
              << "%, linear baseline " << res.linear_uvp << "%\n";

    const std::string tag = "_run" + std::to_string(r);
    save_checkpoint(res.psi, o.common.out + "/psi" + tag + ".ckpt.json");
    save_checkpoint(res.phi, o.common.out + "/phi" + tag + ".ckpt.json");
    note_artifact(o.common.out + "/psi" + tag + ".ckpt.json");
    note_artifact(o.common.out + "/phi" + tag + ".ckpt.json");

    // marginal densities of the target, the fitted pushforward, and the
    // linear-map pushforward
    Rng rng(cfg.seed ^ 0x51ed2701);
    const int n = o.val_size;
    std::vector<double> mu, nu;
    prob.sample_source(rng, n, mu);
    prob.sample_target(rng, n, nu);
    std::vector<double> push(n * o.dim), lin(n * o.dim);
    for (int ofs = 0; ofs < n; ofs += 4096) {
      const int m = std::min(4096, n - ofs);
      auto g = res.psi.grad_batch(
          std::span<const double>(mu.data() + ofs * o.dim, m * o.dim), m);
      std::copy(g.begin(), g.end(), push.begin() + ofs * o.dim);
    }
    {
      std::vector<double> mu_fit, nu_fit;
      prob.sample_source(rng, n, mu_fit);
      prob.sample_target(rng, n, nu_fit);
      LinearMap lm = linear_map_fit(mu_fit, n, nu_fit, n, o.dim);
      for (int s = 0; s < n; ++s) {
        auto y = lm.apply(std::span<const double>(mu.data() + s * o.dim, o.dim));
        std::copy(y.begin(), y.end(), lin.begin() + s * o.dim);
      }
    }
    CsvWriter kcsv(o.common.out + "/marginals" + tag + ".csv",
                   "source,dim,x,kde");
    CsvWriter hcsv(o.common.out + "/marginal_hist" + tag + ".csv",
                   "source,dim,bin_center,count");
    const char* names[3] = {"target", "model", "linear"};
    const std::vector<double>* sets[3] = {&nu, &push, &lin};
    for (int si = 0; si < 3; ++si) {
      auto rep = marginal_report(*sets[si], n, o.dim);
      for (int j = 0; j < o.dim; ++j) {
        for (size_t i = 0; i < rep.grid.size() / o.dim; ++i)
          kcsv.row(names[si], j, rep.grid[j * (rep.grid.size() / o.dim) + i],
                   rep.kde[j * (rep.grid.size() / o.dim) + i]);
        for (int b = 0; b < rep.bins; ++b)
          hcsv.row(names[si], j,
                   0.5 * (rep.edges[j * (rep.bins + 1) + b] +
                          rep.edges[j * (rep.bins + 1) + b + 1]),
                   rep.counts[j * rep.bins + b]);
      }
    }
    note_artifact(kcsv.path());
    note_artifact(hcsv.path());

    // 1D slices of the fitted map along each axis, other coordinates at 0.5
    if (prob.true_map) {
      CsvWriter scsv(o.common.out + "/map_slice" + tag + ".csv",
                     "axis,x,true_component,fitted_component");
      for (int axis = 0; axis < o.dim; ++axis) {
        for (int i = 0; i <= 200; ++i) {
          std::vector<double> x(o.dim, 0.5);
          x[axis] = i / 200.0;
          const auto t = prob.true_map(x);
          const auto g = res.psi.grad1(x);
          scsv.row(axis, x[axis], t[axis], g[axis]);
        }
      }
      note_artifact(scsv.path());
    }
  }
  note_artifact(csv.path());
  note_artifact(lcsv.path());
  write_manifest(o.common, "ot",
                 json{{"benchmark", o.benchmark}, {"family", o.family},
                      {"dim", o.dim},           {"P", o.cells},
                      {"neurons", o.neurons},   {"adapt", !o.no_adapt},
                      {"outer", o.outer},       {"inner", o.inner},
                      {"batch", o.batch},       {"lr", o.lr}});
  return 0;
}

int cmd_appendix_1d(const FitOpts& o, int fn_index) {
  fs::create_directories(o.common.out);
  TargetFn target = [fn_index](std::span<const double> x) {
    return appendix_target(fn_index, x[0]);
  };
  const Hypercube domain = Hypercube::cube(-10.0, 10.0, 1);

  CsvWriter csv(o.common.out + "/results.csv",
                "method,layers,neurons,P,run,iterations,mse,wall_seconds");
  for (int r = 0; r < o.common.runs; ++r) {
    NetworkSpec s;
    s.family = family_from_name(o.family);
    s.hidden = {};  // one layer, one convex 1D function
    s.cells = o.cells;
    s.adapt = true;
    s.domain = domain;
    Model m = Model::make(s, run_seed(o.common, "appendix", r));
    FitConfig cfg;
    cfg.batch = o.batch;
    cfg.iters = o.iters;
    cfg.lr = o.lr;
    cfg.val_size = o.val_size;
    cfg.eval_every = 0;
    cfg.seed = run_seed(o.common, "appendix-data", r);
    FitResult res = mse_fit(m, target, domain, cfg);
    csv.row(method_name(s.family, true) + "-f" + std::to_string(fn_index), 0, 1,
            o.cells, r, o.iters, res.val_mse, res.wall_seconds);

    const std::string tag = "_f" + std::to_string(fn_index) + "_run" + std::to_string(r);
    CsvWriter curve(o.common.out + "/curve" + tag + ".csv", "x,target,fit");
    for (int i = 0; i <= 800; ++i) {
      const double x = -10.0 + 20.0 * i / 800.0;
      std::vector<double> xv = {x};
      curve.row(x, appendix_target(fn_index, x), m.eval1(xv));
    }
    CsvWriter verts(o.common.out + "/vertices" + tag + ".csv", "index,x");
    Lattice1D lat = layer_lattice(m.convex_layers()[0], 0, -10.0, 10.0);
    for (int p = 0; p <= lat.cells(); ++p) verts.row(p, lat.vertices[p]);
    note_artifact(curve.path());
    note_artifact(verts.path());
    std::cout << "f" << fn_index << " run " << r << ": validation mse "
              << res.val_mse << "\n";
  }
  note_artifact(csv.path());
  json cfg = fit_config_json(o);
  cfg["fn"] = fn_index;
  write_manifest(o.common, "appendix-1d", cfg);
  return 0;
}

int cmd_oracle(const CommonOpts& c, int dim, int trials) {
  fs::create_directories(c.out);
  Rng rng(run_seed(c, "oracle", 0));
  double worst = 0.0;
  int failures = 0;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<double> a1(dim), a2(dim);
    for (auto& v : a1) v = rng.uniform(-2.0, 2.0);
    for (auto& v : a2) v = rng.uniform(-2.0, 2.0);
    const double b1 = rng.uniform(-1.0, 1.0), b2 = rng.uniform(-1.0, 1.0);
    Model m = construct_max_affine_p1(a1, b1, a2, b2,
                                      Hypercube::cube(-1.0, 1.0, dim));
    double sup = 0.0;
    const int per_dim = dim == 1 ? 1001 : (dim == 2 ? 51 : 16);
    std::vector<int> idx(dim, 0);
    std::vector<double> x(dim);
    bool done = false;
    while (!done) {
      for (int j = 0; j < dim; ++j) x[j] = -1.0 + 2.0 * idx[j] / (per_dim - 1.0);
      double f1 = b1, f2 = b2;
      for (int j = 0; j < dim; ++j) {
        f1 += a1[j] * x[j];
        f2 += a2[j] * x[j];
      }
      sup = std::max(sup, std::abs(m.eval1(x) - std::max(f1, f2)));
      int j = 0;
      while (j < dim && ++idx[j] == per_dim) idx[j++] = 0;
      done = j == dim;
    }
    worst = std::max(worst, sup);
    const bool ok = sup <= 1e-10;
    failures += ok ? 0 : 1;
    std::cout << (ok ? "PASS" : "FAIL") << " trial " << trial << " sup-error "
              << sup << "\n";
  }
  std::cout << "max sup-error over " << trials << " trials: " << worst << "\n";
  write_manifest(c, "oracle-maxaffine", json{{"dim", dim}, {"trials", trials}});
  return failures == 0 ? 0 : 1;
}

int cmd_verify(uint64_t seed, bool full) {
  auto rows = checks::run_all(seed, !full);
  bool all = true;
  for (const auto& row : rows) {
    std::cout << (row.pass ? "PASS  " : "FAIL  ") << row.name << " — "
              << row.detail << "\n";
    all = all && row.pass;
  }
  std::cout << (all ? "all checks passed" : "some checks FAILED") << "\n";
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"input-convex Kolmogorov-Arnold networks: experiment runner"};
  app.require_subcommand(1);
  app.set_config("--config", "", "flat key=value config file");

  FitOpts fit_o;
  auto* fit = app.add_subcommand("fit", "convex regression on the kink+quadratic target");
  add_fit_flags(fit, fit_o);

  FitOpts wc_o;
  wc_o.dim = 1;
  wc_o.cells = 10;
  wc_o.adapt = true;
  auto* wc = app.add_subcommand("wrong-convexity",
                                "fit a concave-direction target with a convex model");
  add_fit_flags(wc, wc_o);

  FitOpts lq_o;
  lq_o.family = "cubic";
  lq_o.dim = 2;
  lq_o.layers = 2;
  lq_o.neurons = 10;
  lq_o.cells = 10;
  lq_o.adapt = true;
  auto* lq = app.add_subcommand("lq", "linear-quadratic control value function fit");
  add_fit_flags(lq, lq_o);

  FitOpts pk_o;
  pk_o.layers = 2;
  pk_o.neurons = 40;
  pk_o.cells = 40;
  auto* pk = app.add_subcommand("pickan-fit", "partially convex regression");
  add_fit_flags(pk, pk_o);

  OtOpts ot_o;
  auto* ot = app.add_subcommand("ot", "optimal transport minimax estimation");
  add_common(ot, ot_o.common);
  ot->add_option("--benchmark", ot_o.benchmark, "identity | tensorized | product");
  ot->add_option("--family", ot_o.family, "cubic | p1");
  ot->add_option("--dim", ot_o.dim, "dimension");
  ot->add_option("--P", ot_o.cells, "mesh cells");
  ot->add_option("--neurons", ot_o.neurons, "first hidden width (0 = default sizing)");
  ot->add_flag("--no-adapt", ot_o.no_adapt, "fixed grids");
  ot->add_option("--outer", ot_o.outer, "outer iterations");
  ot->add_option("--inner", ot_o.inner, "inner iterations");
  ot->add_option("--batch", ot_o.batch, "batch size");
  ot->add_option("--lr", ot_o.lr, "learning rate");
  ot->add_option("--eval-every", ot_o.eval_every, "evaluation cadence");
  ot->add_option("--test-size", ot_o.test_size, "test set size");
  ot->add_option("--val-size", ot_o.val_size, "validation set size");
  ot->add_option("--pretrain", ot_o.pretrain, "identity pretraining steps");

  FitOpts ap_o;
  ap_o.family = "p1";
  ap_o.cells = 10;
  ap_o.iters = 20000;
  ap_o.batch = 1000;
  int ap_fn = 1;
  auto* ap = app.add_subcommand("appendix-1d", "one-layer adaptive 1D fits");
  add_fit_flags(ap, ap_o);
  ap->add_option("--fn", ap_fn, "target index 1..4");

  CommonOpts or_common;
  int or_dim = 2, or_trials = 20;
  auto* orc = app.add_subcommand("oracle-maxaffine",
                                 "exact max-affine construction check");
  add_common(orc, or_common);
  orc->add_option("--dim", or_dim, "dimension");
  orc->add_option("--trials", or_trials, "number of random affine pairs");

  uint64_t verify_seed = 20240811;
  bool verify_full = false;
  auto* ver = app.add_subcommand("verify", "run the invariant and property suite");
  ver->add_option("--seed", verify_seed, "suite seed");
  ver->add_flag("--full", verify_full, "acceptance-scale sizes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed()) return cmd_fit(fit_o);
    if (wc->parsed()) return cmd_wrong_convexity(wc_o);
    if (lq->parsed()) return cmd_lq(lq_o);
    if (pk->parsed()) return cmd_pickan_fit(pk_o);
    if (ot->parsed()) return cmd_ot(ot_o);
    if (ap->parsed()) return cmd_appendix_1d(ap_o, ap_fn);
    if (orc->parsed()) return cmd_oracle(or_common, or_dim, or_trials);
    if (ver->parsed()) return cmd_verify(verify_seed, verify_full);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
