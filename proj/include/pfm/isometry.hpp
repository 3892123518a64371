#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pfm/adam.hpp"
#include "pfm/datasets.hpp"
#include "pfm/diffeo.hpp"
#include "pfm/graph.hpp"
#include "pfm/seq.hpp"
#include "pfm/tape.hpp"

namespace pfm {

struct IsometryTrainConfig {
  double alpha1 = 1.0, alpha2 = 1.0, alpha3 = 1.0, alpha4 = 0.01;
  int epochs = 1000;
  int warmup_epochs = 50;
  double split_fraction = 0.8;  // consumed by the pipeline layer
  int batch_size = 64;
  double learning_rate = 1e-4;
  bool cosine = false;
  double lr_min = 0.0;
  uint64_t seed = 0;
  int d_prime = 1;
  int n_steps = 10;
  int hidden = 64;
  int layers = 5;
  double init_scale = 0.05;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  // weighted contributions (alpha * term); alpha1/alpha2 forced 0 in warmup
  double train_l1 = 0, train_l2 = 0, train_l3 = 0, train_l4 = 0, train_total = 0;
  double test_l1 = 0, test_l2 = 0, test_l3 = 0, test_l4 = 0, test_total = 0;
  double lr = 0;
  bool is_best = false;
};

struct TrainReport {
  std::vector<EpochLog> history;
  int best_epoch = -1;
  double best_test_loss = 0;
  double eps_inv = 0, eps_ld = 0, eps_iso = 0;
};

// Loss values of a frozen model on one batch (evaluation path, no autodiff).
// batch: rows in data space; d_sub: distances restricted to the batch.
double loss_global_isometry(const DiffeoModel& m, const Tensor& batch, const Tensor& d_sub);
double loss_graph_matching(const DiffeoModel& m, const Tensor& batch, const Tensor& d_sub);
double loss_submanifold(const DiffeoModel& m, const Tensor& batch);
double loss_stability(const DiffeoModel& m, const Tensor& batch, Rng& rng);

// Tape-level builders shared by the trainer and the gradient tests.
// z: latent batch node; d_sub: target distances for the batch.
int loss_global_isometry_node(Tape& tape, int z, const Tensor& d_sub);
int loss_graph_matching_node(Tape& tape, int z, const Tensor& d_sub);
int loss_submanifold_node(Tape& tape, int z, int d_prime);
// states: step-start state nodes from ode_solve_tape; draws one fresh eps row
// per sample per step from rng. States enter detached (values only).
int loss_stability_node(Tape& tape, const MlpNodes& field, const std::vector<int>& states,
                        int n_steps, int d, Rng& rng);

struct IsometryResult {
  DiffeoModel model;
  TrainReport report;
  SequenceCodec codec;  // sequence pipeline only
};

IsometryResult train_isometry(const PointCloud& data, const DistanceMatrix& dm,
                              const IsometryTrainConfig& cfg, const std::vector<int>& train_idx,
                              const std::vector<int>& test_idx);

// Joint training of the embedding table and the field. codec gives the
// initial table; the returned codec carries the trained snapshot.
IsometryResult train_isometry_seq(const SequenceDataset& ds, const SequenceCodec& codec,
                                  const DistanceMatrix& dm, const IsometryTrainConfig& cfg,
                                  const std::vector<int>& train_idx,
                                  const std::vector<int>& test_idx);

// eps_inv, eps_ld, eps_iso on a holdout set; d_sub is the holdout-restricted
// distance matrix (eps_iso averages over all ordered pairs incl. diagonal).
struct AblationMetrics {
  double eps_inv = 0, eps_ld = 0, eps_iso = 0;
};
AblationMetrics ablation_metrics(const DiffeoModel& m, const Tensor& holdout,
                                 const Tensor& d_sub);

}  // namespace pfm
