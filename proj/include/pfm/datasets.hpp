#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pfm/rng.hpp"
#include "pfm/seq.hpp"
#include "pfm/tensor.hpp"
#include "pfm/util.hpp"

namespace pfm {

struct PointCloud {
  Tensor X;  // n x d
  std::vector<std::string> ids;  // optional
  int n() const { return X.rows; }
  int d() const { return X.cols; }
};

// Half circle with noise: y = (sin(pi x / 2), cos(pi x / 2)) + a,
// x ~ U(-1, 1), a ~ N(0, noise_sigma^2 I).
PointCloud gen_arch(int n, double noise_sigma, Rng& rng);

// Point of the Swiss-roll surface at parameters (t, h).
void swiss_point(double t, double h, double out[3]);

// (t cos t, h, t sin t) with t ~ U(1.5 pi, 4.5 pi), h ~ U(0, 10), Gaussian
// noise, then a fixed rotation applied to every sample.
PointCloud gen_swiss_roll(int n, double noise_sigma, const Tensor& rotation, Rng& rng);
Tensor default_swiss_rotation();

// Random sequences over `alphabet` with length ~ U{min_len..max_len}.
SequenceDataset gen_synthetic_sequences(int n, int min_len, int max_len,
                                        const std::string& alphabet, Rng& rng);

// Seed-deterministic shuffle split; train gets floor(fraction * n) indices.
// Both halves are returned sorted ascending.
std::pair<std::vector<int>, std::vector<int>> split_indices(int n, double fraction, uint64_t seed);

PointCloud load_pointcloud_csv(const std::string& path);
void save_pointcloud_csv(const PointCloud& pc, const std::string& path);

// CSV with header id,sequence[,activity]
SequenceDataset load_sequence_csv(const std::string& path);
void save_sequence_csv(const SequenceDataset& ds, const std::string& path);

// Scale all coordinates by 1 / rms where rms = sqrt(mean ||x - mean||^2 / d).
// Shape-preserving isotropic rescale; returns the factor applied.
double standardize_pointcloud(PointCloud& pc);

}  // namespace pfm
