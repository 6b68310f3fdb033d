#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ickan/grid.hpp"
#include "ickan/layers.hpp"
#include "ickan/param.hpp"
#include "ickan/rng.hpp"
#include "ickan/tape.hpp"

namespace ickan {

enum class Family { p1, cubic, pickan, icnn };
enum class Act { relu, celu };

std::string family_name(Family f);
Family family_from_name(const std::string& s);

struct NetworkSpec {
  Family family = Family::p1;
  std::vector<int> hidden;  // widths n_0 .. n_{L-1}; the output layer is width 1
  int cells = 10;           // P
  bool adapt = false;
  Hypercube domain;         // input box (x-part then y-part for PICKAN)
  int nx = 0, ny = 0;       // PICKAN split
  Act act = Act::relu;      // ICNN activation
  bool extrapolate = false;

  int input_dim() const { return domain.dim(); }
  void validate() const;
};

struct IcnnLayer {
  Parameter* W = nullptr;     // out x in_z, constrained >= 0 (absent on layer 0)
  Parameter* A = nullptr;     // out x d passthrough
  Parameter* bias = nullptr;  // out
  int in_z = 0, out = 0;
};

// A stacked model with per-layer domain boxes threaded through. Boxes are
// cached and refreshed after every optimizer step; forward passes within a
// step use the step-start boxes.
class Model {
 public:
  static Model make(const NetworkSpec& spec, uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  ParameterStore& params() { return *store_; }
  const ParameterStore& params() const { return *store_; }

  // Recorded forward pass; x holds one batch node per input dimension.
  // When grad is non-null the analytic input-gradient is built inside the
  // same graph (per-layer Jacobians chained), so one reverse sweep yields
  // parameter gradients of any function of the gradient. Not available for
  // PICKAN / ICNN.
  NodeId forward(Tape& tape, std::span<const NodeId> x,
                 std::vector<NodeId>* grad = nullptr);
  NodeId forward_xy(Tape& tape, std::span<const NodeId> x,
                    std::span<const NodeId> y);

  // Recompute the cached image boxes from current parameters.
  void refresh_boxes();
  // Project constrained parameters (ICNN hidden weights to >= 0).
  void project_constraints();

  // Value-level evaluation; pts is sample-major (batch x dim).
  std::vector<double> eval_batch(std::span<const double> pts, int batch);
  // Returns gradients, sample-major (batch x dim); values optionally out.
  std::vector<double> grad_batch(std::span<const double> pts, int batch,
                                 std::vector<double>* values = nullptr);
  double eval1(std::span<const double> x);
  std::vector<double> grad1(std::span<const double> x);

  int total_layers() const { return static_cast<int>(spec_.hidden.size()) + 1; }
  const std::vector<Hypercube>& boxes() const { return boxes_; }
  const std::vector<Hypercube>& boxes_x() const { return boxes_x_; }
  std::vector<ConvexLayer>& convex_layers() { return convex_; }
  std::vector<KanLayer>& kan_layers() { return kan_; }

  // Split a sample-major point block into per-dimension constant nodes.
  static std::vector<NodeId> batch_inputs(Tape& tape, std::span<const double> pts,
                                          int batch, int dim);

 private:
  NetworkSpec spec_;
  std::shared_ptr<ParameterStore> store_;  // stable addresses for layer pointers
  std::vector<ConvexLayer> convex_;        // ickan layers / pickan kappa chain
  std::vector<KanLayer> kan_;              // pickan rho chain
  std::vector<IcnnLayer> icnn_;
  std::vector<Hypercube> boxes_;    // ickan: G^0..; pickan: y-chain boxes
  std::vector<Hypercube> boxes_x_;  // pickan: x-chain boxes

  NodeId forward_ickan(Tape& tape, std::span<const NodeId> x,
                       std::vector<NodeId>* grad);
  NodeId forward_icnn(Tape& tape, std::span<const NodeId> x);
  void check_inside(Tape& tape, std::span<const NodeId> x) const;
};

// Exact three-layer P1-ICKAN representation of max(a1.x + b1, a2.x + b2) on
// the given box (P = 2, interior kink vertex placed at zero).
Model construct_max_affine_p1(std::span<const double> alpha1, double beta1,
                              std::span<const double> alpha2, double beta2,
                              const Hypercube& domain);

// Plain (nonconvex) P1-KAN stack used to cross-check the PICKAN reduction:
// rho^{L} o ... o rho^0, output = first coordinate of the last layer.
class KanStack {
 public:
  static KanStack make(int input_dim, const std::vector<int>& widths, int cells,
                       bool adapt, const Hypercube& domain, uint64_t seed);
  NodeId forward(Tape& tape, std::span<const NodeId> x);
  void refresh_boxes();
  ParameterStore& params() { return *store_; }
  std::vector<KanLayer>& layers() { return layers_; }

 private:
  std::shared_ptr<ParameterStore> store_;
  std::vector<KanLayer> layers_;
  std::vector<Hypercube> boxes_;
  Hypercube domain_;
};

// Checkpoint I/O (flat key -> array JSON document). Round-trip preserves
// parameter values to <= 1e-12 relative.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);
std::string checkpoint_to_string(const Model& model);
Model checkpoint_from_string(const std::string& text);

}  // namespace ickan
