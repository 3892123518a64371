#include "pfm/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pfm {

PointCloud gen_arch(int n, double noise_sigma, Rng& rng) {
  if (n < 1) throw std::invalid_argument("gen_arch: n >= 1");
  PointCloud pc;
  pc.X = Tensor(n, 2);
  const double half_pi = 0.5 * 3.14159265358979323846;
  for (int i = 0; i < n; ++i) {
    double x = rng.uniform(-1.0, 1.0);
    double a1 = rng.normal() * noise_sigma;
    double a2 = rng.normal() * noise_sigma;
    pc.X.at(i, 0) = std::sin(half_pi * x) + a1;
    pc.X.at(i, 1) = std::cos(half_pi * x) + a2;
  }
  return pc;
}

void swiss_point(double t, double h, double out[3]) {
  out[0] = t * std::cos(t);
  out[1] = h;
  out[2] = t * std::sin(t);
}

Tensor default_swiss_rotation() {
  // Rx(0.3) * Rz(0.4), a fixed generic rotation so no data axis is special
  double a = 0.4, b = 0.3;
  double rz[3][3] = {{std::cos(a), -std::sin(a), 0}, {std::sin(a), std::cos(a), 0}, {0, 0, 1}};
  double rx[3][3] = {{1, 0, 0}, {0, std::cos(b), -std::sin(b)}, {0, std::sin(b), std::cos(b)}};
  Tensor R(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += rx[i][k] * rz[k][j];
      R.at(i, j) = s;
    }
  return R;
}

PointCloud gen_swiss_roll(int n, double noise_sigma, const Tensor& rotation, Rng& rng) {
  if (n < 1) throw std::invalid_argument("gen_swiss_roll: n >= 1");
  if (rotation.rows != 3 || rotation.cols != 3)
    throw std::invalid_argument("gen_swiss_roll: rotation must be 3x3");
  const double pi = 3.14159265358979323846;
  PointCloud pc;
  pc.X = Tensor(n, 3);
  for (int i = 0; i < n; ++i) {
    double t = rng.uniform(1.5 * pi, 4.5 * pi);
    double h = rng.uniform(0.0, 10.0);
    double p[3];
    swiss_point(t, h, p);
    for (int c = 0; c < 3; ++c) p[c] += rng.normal() * noise_sigma;
    for (int r = 0; r < 3; ++r) {
      double s = 0;
      for (int c = 0; c < 3; ++c) s += rotation.at(r, c) * p[c];
      pc.X.at(i, r) = s;
    }
  }
  return pc;
}

SequenceDataset gen_synthetic_sequences(int n, int min_len, int max_len,
                                        const std::string& alphabet, Rng& rng) {
  if (min_len < 1 || max_len < min_len) throw std::invalid_argument("bad sequence length range");
  if (alphabet.empty()) throw std::invalid_argument("empty alphabet");
  SequenceDataset ds;
  for (int i = 0; i < n; ++i) {
    int len = min_len + int(rng.below(uint64_t(max_len - min_len + 1)));
    std::string s;
    for (int p = 0; p < len; ++p) s += alphabet[rng.below(alphabet.size())];
    ds.seqs.push_back(std::move(s));
    ds.ids.push_back("s" + std::to_string(i));
  }
  return ds;
}

std::pair<std::vector<int>, std::vector<int>> split_indices(int n, double fraction,
                                                            uint64_t seed) {
  if (fraction <= 0.0 || fraction >= 1.0) throw std::invalid_argument("split: 0 < fraction < 1");
  Rng rng(seed);
  std::vector<int> perm = rng.permutation(n);
  int n_train = int(std::floor(fraction * n));
  std::vector<int> train(perm.begin(), perm.begin() + n_train);
  std::vector<int> test(perm.begin() + n_train, perm.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

PointCloud load_pointcloud_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && rows.back().size() != row.size())
      throw std::runtime_error("ragged csv: " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("empty point cloud csv: " + path);
  PointCloud pc;
  pc.X = Tensor(int(rows.size()), int(rows[0].size()));
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c) pc.X.at(int(r), int(c)) = rows[r][c];
  return pc;
}

void save_pointcloud_csv(const PointCloud& pc, const std::string& path) {
  std::ostringstream ss;
  ss.precision(17);
  for (int r = 0; r < pc.n(); ++r) {
    for (int c = 0; c < pc.d(); ++c) ss << (c ? "," : "") << pc.X.at(r, c);
    ss << "\n";
  }
  atomic_write_file(path, ss.str());
}

SequenceDataset load_sequence_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty sequence csv: " + path);
  std::vector<std::string> header;
  {
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2 || header[0] != "id" || header[1] != "sequence")
    throw std::runtime_error("sequence csv must start with header id,sequence: " + path);
  bool has_activity = header.size() > 2 && header[2] == "activity";
  SequenceDataset ds;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id, s, act;
    std::getline(ls, id, ',');
    std::getline(ls, s, ',');
    ds.ids.push_back(id);
    ds.seqs.push_back(s);
    if (has_activity && std::getline(ls, act, ',')) ds.activity.push_back(std::stod(act));
  }
  return ds;
}

void save_sequence_csv(const SequenceDataset& ds, const std::string& path) {
  std::ostringstream ss;
  ss.precision(17);
  bool has_activity = !ds.activity.empty();
  ss << "id,sequence" << (has_activity ? ",activity" : "") << "\n";
  for (int i = 0; i < ds.n(); ++i) {
    ss << (ds.ids.empty() ? "s" + std::to_string(i) : ds.ids[i]) << "," << ds.seqs[i];
    if (has_activity) ss << "," << ds.activity[i];
    ss << "\n";
  }
  atomic_write_file(path, ss.str());
}

double standardize_pointcloud(PointCloud& pc) {
  int n = pc.n(), d = pc.d();
  std::vector<double> mean(d, 0.0);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) mean[c] += pc.X.at(r, c);
  for (double& m : mean) m /= n;
  double ss = 0;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) {
      double diff = pc.X.at(r, c) - mean[c];
      ss += diff * diff;
    }
  double rms = std::sqrt(ss / (double(n) * d));
  if (rms == 0.0) return 1.0;
  double factor = 1.0 / rms;
  for (double& x : pc.X.data) x *= factor;
  return factor;
}

}  // namespace pfm
