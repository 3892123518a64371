#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pfm/datasets.hpp"
#include "pfm/diffeo.hpp"
#include "pfm/geometry.hpp"
#include "pfm/graph.hpp"
#include "pfm/rng.hpp"

namespace pfm {

// Three training modes: ambient CFM (Data), PFM in the full latent (Latent),
// d'-PFM on the submanifold chart (Submanifold, fields live in R^{d'}).
struct FlowModel {
  MlpParams vt;
  GeoSpace space = GeoSpace::Data;
  int dim = 0;               // width of the operating space
  double sigma_min = 1e-4;
  int n_steps = 10;          // simulation steps used by sample()
  std::string diffeo_hash;   // binds latent flows to the chart they trained in
  std::string config_hash;

  void validate() const;
};

struct FlowTrainConfig {
  std::string mode = "cfm";  // cfm | pfm | dprime_pfm
  int epochs = 5000;
  int batch_size = 64;
  double learning_rate = 5e-4;
  bool cosine = true;
  double lr_min = 5e-6;
  double sigma_min = 1e-4;
  int n_simulation_steps = 10;
  int hidden = 64;
  int layers = 10;
  double init_scale = 1.0;
  uint64_t seed = 0;

  void validate() const;
};

struct FlowEpochLog {
  int epoch = 0;
  double train_mse = 0;
  double test_mse = 0;
  double lr = 0;
  bool is_best = false;
};

struct FlowTrainReport {
  std::vector<FlowEpochLog> history;
  int best_epoch = -1;
  double best_test_mse = 0;
};

// Straight conditional path x_t = (1 - (1 - sigma_min) t) x0 + t x1 with
// target velocity u_t = x1 - (1 - sigma_min) x0 (constant along the path).
// x0/x1 are row batches; t applies to every row.
std::pair<Tensor, Tensor> cfm_target(const Tensor& x0, const Tensor& x1, double t,
                                     double sigma_min);

// Latent interpolant z_t = kappa(t) z0 + (1 - kappa(t)) z1, kappa(t) = 1 - t,
// between encoded endpoints; u = z1 - z0. x0/x1 are data-space rows;
// Submanifold operates on the first d' coordinates.
std::pair<Tensor, Tensor> pfm_target(const DiffeoModel& m, const Tensor& x0, const Tensor& x1,
                                     double t, GeoSpace space);

struct FlowResult {
  FlowModel model;
  FlowTrainReport report;
};

// diffeo required for pfm/dprime_pfm (frozen; only used to encode data).
FlowResult train_flow(const PointCloud& data, const DiffeoModel* diffeo,
                      const FlowTrainConfig& cfg, const std::vector<int>& train_idx,
                      const std::vector<int>& test_idx);

// Integrates n base draws z ~ N(0, I) through the learned field over t in
// [0, 1] and decodes to data space (identity for Data, phi^-1 for Latent,
// zero-padded phi^-1 for Submanifold). Returns n x d data-space rows.
Tensor flow_sample(const FlowModel& fm, const DiffeoModel* diffeo, int n, Rng& rng);

// Data-space frames of the same integration at n_times uniform times
// (including t = 0 and t = 1); frames[k] is an n x d batch.
std::vector<Tensor> flow_trajectory(const FlowModel& fm, const DiffeoModel* diffeo,
                                    const Tensor& z0, int n_times);

json flow_to_json(const FlowModel& fm);
FlowModel flow_from_json(const json& j);
void save_flow(const FlowModel& fm, const std::string& path);
FlowModel load_flow(const std::string& path);

}  // namespace pfm
