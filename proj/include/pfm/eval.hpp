#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pfm/datasets.hpp"
#include "pfm/diffeo.hpp"
#include "pfm/geometry.hpp"
#include "pfm/graph.hpp"
#include "pfm/seq.hpp"

namespace pfm {

struct InterpolationReport {
  std::vector<double> per_pair;  // RMSE per evaluated pair, selection order
  double mean = 0;
  double stdev = 0;
};

// Protocol: take the n_pairs test-test pairs with the largest graph-geodesic
// distance, walk each pair's shortest path, and compare the interpolant at
// the intermediate vertices' arc-length fractions against those vertices.
// Per-pair RMSE averages squared deviation over vertices and coordinates.
// `space` selects the curve (Data = straight line, no model needed).
InterpolationReport interpolation_rmse(const DiffeoModel* m, const PointCloud& data,
                                       const DistanceMatrix& dm, GeoSpace space,
                                       const std::vector<int>& test_idx, int n_pairs);

// Leave-one-out 1-NN two-sample accuracy over the union of both sets.
// Distance ties resolve to the lower global index (gen rows first).
double one_nn_accuracy(const Tensor& gen, const Tensor& ref);

struct KsResult {
  double d = 0;
  double p = 1;
};

// Two-sample Kolmogorov-Smirnov with the asymptotic p-value
// p = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2), lambda = sqrt(na nb / (na + nb)) D.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

// Per-coordinate population std of the encoded training rows (1 x d).
Tensor latent_std(const DiffeoModel& m, const Tensor& X_train);

// One analogue per base row: x' = phi^-1(phi(x) + tau * sigma_z . eps).
Tensor analogue_generate(const DiffeoModel& m, const Tensor& base, const Tensor& sigma_z,
                         double tau, Rng& rng);

struct AnalogueRow {
  double tau = 0;
  std::string base_id, base_seq, analogue_seq;
  bool in_data = false;  // analogue sequence occurs in the dataset
};

struct AnalogueTauReport {
  double tau = 0;
  int total = 0;    // unique analogue sequences
  int in_data = 0;  // of those, present in the dataset
  int novel = 0;
  // per property in kAllSeqProperties order: novel analogues vs their bases
  std::vector<double> ks_d, ks_p;
  std::vector<bool> significant;  // p < 0.05
};

// Full scan: one analogue per dataset sequence at every tau (tau index picks
// the rng substream). sigma_z comes from the training split's encodings.
// KS compares each property over the unique novel analogues against the base
// sequences they came from; no novel analogues gives D = 0, p = 1.
std::vector<AnalogueTauReport> analogue_scan(const DiffeoModel& m, const SequenceCodec& codec,
                                             const SequenceDataset& ds, const PropertyConfig& pcfg,
                                             const std::vector<int>& train_idx,
                                             const std::vector<double>& taus, uint64_t seed,
                                             std::vector<AnalogueRow>* rows = nullptr);

}  // namespace pfm
