#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ickan/training.hpp"
#include "ickan/transport.hpp"
#include "ickan/verify.hpp"

namespace py = pybind11;
using namespace ickan;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::pair<std::span<const double>, int> as_points(const Array& a, int dim) {
  if (a.ndim() == 1) {
    if (a.shape(0) != dim) throw std::invalid_argument("point has wrong dimension");
    return {{a.data(), static_cast<size_t>(dim)}, 1};
  }
  if (a.ndim() != 2 || a.shape(1) != dim)
    throw std::invalid_argument("points must be (batch, dim)");
  return {{a.data(), static_cast<size_t>(a.size())}, static_cast<int>(a.shape(0))};
}

NetworkSpec make_spec(const std::string& family, std::vector<int> hidden, int cells,
                      bool adapt, Array lo, Array hi, int nx, int ny,
                      const std::string& act, bool extrapolate) {
  NetworkSpec s;
  s.family = family_from_name(family);
  s.hidden = std::move(hidden);
  s.cells = cells;
  s.adapt = adapt;
  s.domain = Hypercube(std::vector<double>(lo.data(), lo.data() + lo.size()),
                       std::vector<double>(hi.data(), hi.data() + hi.size()));
  s.nx = nx;
  s.ny = ny;
  s.act = act == "celu" ? Act::celu : Act::relu;
  s.extrapolate = extrapolate;
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "input-convex Kolmogorov-Arnold networks (C++ core)";

  py::class_<Hypercube>(m, "Hypercube")
      .def(py::init<std::vector<double>, std::vector<double>>())
      .def_static("cube", &Hypercube::cube)
      .def_readonly("lo", &Hypercube::lo)
      .def_readonly("hi", &Hypercube::hi)
      .def("contains",
           [](const Hypercube& b, Array x) {
             auto [pts, n] = as_points(x, b.dim());
             return b.contains(pts.subspan(0, b.dim()));
           })
      .def("clamp", [](const Hypercube& b, Array x) {
        auto [pts, n] = as_points(x, b.dim());
        return b.clamp(pts.subspan(0, b.dim()));
      });

  py::class_<Model>(m, "Model")
      .def_static(
          "make",
          [](const std::string& family, std::vector<int> hidden, int cells,
             bool adapt, Array lo, Array hi, uint64_t seed, int nx, int ny,
             const std::string& act, bool extrapolate) {
            return Model::make(make_spec(family, std::move(hidden), cells, adapt,
                                         lo, hi, nx, ny, act, extrapolate),
                               seed);
          },
          py::arg("family"), py::arg("hidden"), py::arg("cells"), py::arg("adapt"),
          py::arg("lo"), py::arg("hi"), py::arg("seed") = 0, py::arg("nx") = 0,
          py::arg("ny") = 0, py::arg("act") = "relu",
          py::arg("extrapolate") = false)
      .def("__call__",
           [](Model& mo, Array x) {
             auto [pts, n] = as_points(x, mo.spec().input_dim());
             auto y = mo.eval_batch(pts, n);
             py::array_t<double> out(std::vector<py::ssize_t>{n});
             std::copy(y.begin(), y.end(), out.mutable_data());
             return out;
           })
      .def("grad",
           [](Model& mo, Array x) {
             const int d = mo.spec().input_dim();
             auto [pts, n] = as_points(x, d);
             auto g = mo.grad_batch(pts, n);
             py::array_t<double> out({n, d});
             std::copy(g.begin(), g.end(), out.mutable_data());
             return out;
           })
      .def("family", [](const Model& mo) { return family_name(mo.spec().family); })
      .def("input_dim", [](const Model& mo) { return mo.spec().input_dim(); })
      .def("parameter_count", [](const Model& mo) {
        int64_t n = 0;
        for (const auto& p : mo.params().all()) n += p.size();
        return n;
      });

  m.def("save_checkpoint", &save_checkpoint);
  m.def("load_checkpoint", &load_checkpoint);
  m.def("construct_max_affine",
        [](std::vector<double> a1, double b1, std::vector<double> a2, double b2,
           Array lo, Array hi) {
          Hypercube box(std::vector<double>(lo.data(), lo.data() + lo.size()),
                        std::vector<double>(hi.data(), hi.data() + hi.size()));
          return construct_max_affine_p1(a1, b1, a2, b2, box);
        });

  m.def(
      "mse_fit",
      [](Model& mo, const std::function<double(std::vector<double>)>& target,
         Array lo, Array hi, int batch, int64_t iters, double lr, uint64_t seed,
         int val_size) {
        Hypercube domain(std::vector<double>(lo.data(), lo.data() + lo.size()),
                         std::vector<double>(hi.data(), hi.data() + hi.size()));
        TargetFn fn = [&target](std::span<const double> x) {
          return target(std::vector<double>(x.begin(), x.end()));
        };
        FitConfig cfg;
        cfg.batch = batch;
        cfg.iters = iters;
        cfg.lr = lr;
        cfg.seed = seed;
        cfg.val_size = val_size;
        cfg.eval_every = 0;
        FitResult res = mse_fit(mo, fn, domain, cfg);
        return py::make_tuple(res.val_mse, res.skipped, res.wall_seconds);
      },
      py::arg("model"), py::arg("target"), py::arg("lo"), py::arg("hi"),
      py::arg("batch") = 256, py::arg("iters") = 1000, py::arg("lr") = 1e-3,
      py::arg("seed") = 0, py::arg("val_size") = 4096);

  m.def("kms_matrix", &kms_matrix);
  m.def("target_quadratic_kink", [](Array x, std::vector<double> A) {
    return target_quadratic_kink(std::span<const double>(x.data(), x.size()), A);
  });
  m.def("target_wrong_convexity", [](Array x) {
    return target_wrong_convexity(std::span<const double>(x.data(), x.size()));
  });
  m.def("target_partial", [](Array xy) {
    return target_partial(std::span<const double>(xy.data(), xy.size()));
  });
  m.def("appendix_target", &appendix_target);

  py::class_<LQProblem>(m, "LQProblem").def(py::init<>());
  m.def("riccati", [](const LQProblem& prob) {
    auto sol = riccati(prob);
    return py::make_tuple(sol.P, sol.K, sol.r);
  });
  m.def("lq_optimal_cost", [](const LQProblem& prob, Array x0) {
    auto sol = riccati(prob);
    return sol.optimal_cost(std::span<const double>(x0.data(), 2));
  });

  m.def("tensorized_map", [](Array x) {
    return tensorized_map(std::span<const double>(x.data(), x.size()));
  });
  m.def("product_potential", [](Array x) {
    return product_potential(std::span<const double>(x.data(), x.size()));
  });
  m.def("product_map", [](Array x) {
    return product_map(std::span<const double>(x.data(), x.size()));
  });
  m.def("sqrtm_psd", [](Array S) {
    const int d = static_cast<int>(S.shape(0));
    auto r = sqrtm_psd(std::span<const double>(S.data(), d * d), d);
    py::array_t<double> out({d, d});
    std::copy(r.begin(), r.end(), out.mutable_data());
    return out;
  });
  m.def("linear_map_fit", [](Array mu, Array nu) {
    const int d = static_cast<int>(mu.shape(1));
    LinearMap lm = linear_map_fit({mu.data(), static_cast<size_t>(mu.size())},
                                  static_cast<int>(mu.shape(0)),
                                  {nu.data(), static_cast<size_t>(nu.size())},
                                  static_cast<int>(nu.shape(0)), d);
    py::array_t<double> A({d, d});
    std::copy(lm.A.begin(), lm.A.end(), A.mutable_data());
    return py::make_tuple(A, lm.m1, lm.m2);
  });
  m.def("uvp_grad_map",
        [](Model& psi, const std::string& benchmark, int d, Array nu, Array mu) {
          TransportProblem prob =
              benchmark == "identity"  ? TransportProblem::identity_uniform(d)
              : benchmark == "product" ? TransportProblem::product(d)
                                       : TransportProblem::tensorized(d);
          return uvp_model(psi, prob.true_map,
                           {nu.data(), static_cast<size_t>(nu.size())},
                           {mu.data(), static_cast<size_t>(mu.size())}, d);
        });
  m.def("identity_pretrain",
        [](Model& psi, int64_t steps, int batch, double lr, uint64_t seed) {
          Rng rng(seed);
          return identity_pretrain(psi, psi.spec().domain, steps, batch, lr, rng);
        },
        py::arg("model"), py::arg("steps") = 500, py::arg("batch") = 256,
        py::arg("lr") = 1e-3, py::arg("seed") = 0);

  m.def("verify_quick", [](uint64_t seed) {
    auto rows = checks::run_all(seed, true);
    py::list out;
    for (const auto& r : rows) out.append(py::make_tuple(r.name, r.pass, r.detail));
    return out;
  });
}
