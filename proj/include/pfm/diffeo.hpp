#pragma once

#include <string>

#include "pfm/nn.hpp"
#include "pfm/ode.hpp"
#include "pfm/tensor.hpp"
#include "pfm/util.hpp"

namespace pfm {

// The learned chart phi = [psi^-1, I_{d-d'}] . phi_theta . T_mu with psi the
// identity chart on Euclidean R^{d'}: phi(x) = ode_forward(x - mu).
struct DiffeoModel {
  MlpParams field;
  Tensor mu;  // 1 x d, frozen training-data mean
  int d = 0;
  int d_prime = 0;
  int n_steps = 10;
  std::string chart = "euclidean";
  std::string config_hash;

  void validate() const;
};

// Batched: X is n x d, one sample per row.
Tensor phi(const DiffeoModel& m, const Tensor& X);
Tensor phi_inverse(const DiffeoModel& m, const Tensor& Z);

// Copies the first d' coordinates, zeroes the complement.
Tensor project_submanifold(const Tensor& Z, int d_prime);

json diffeo_to_json(const DiffeoModel& m);
DiffeoModel diffeo_from_json(const json& j);
void save_diffeo(const DiffeoModel& m, const std::string& path);
DiffeoModel load_diffeo(const std::string& path);

json mlp_to_json(const MlpParams& p);
MlpParams mlp_from_json(const json& j);

}  // namespace pfm
