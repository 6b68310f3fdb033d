#pragma once

#include <string>
#include <vector>

#include "ickan/network.hpp"

namespace ickan::checks {

struct CheckRow {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Fill every parameter with draws that exercise the clamps (negative d's,
// mixed gate logits, random grid weights) and refresh the boxes.
void randomize_model(Model& m, Rng& rng);

// Midpoint convexity over random model instantiations of all three convex
// families (depths 1..3, P in {5,10,20}, d in {1,2,4}).
CheckRow convexity_suite(int models_per_family, int pairs, double tol,
                         uint64_t seed);
// Parameter gradients (incl. adaptive grid weights and gate logits) against
// central finite differences; analytic input gradient against forward
// differences for the cubic family.
CheckRow gradient_suite(double tol_param, double tol_input, uint64_t seed);
// Exact max-affine construction over dense grids in d = 1, 2, 3.
CheckRow oracle_suite(int trials_per_dim, double tol, uint64_t seed);
// Intermediate layer outputs stay inside the threaded hypercubes.
CheckRow box_suite(int models, int points, double tol, uint64_t seed);
// UVP(T*) = 0 and the constant-mean estimator scores ~100.
CheckRow uvp_identity_suite(int n, uint64_t seed);

std::vector<CheckRow> run_all(uint64_t seed, bool quick);

}  // namespace ickan::checks
