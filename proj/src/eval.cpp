#include "pfm/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <unordered_set>

namespace pfm {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;

CMap cm(const Tensor& t) { return CMap(t.ptr(), t.rows, t.cols); }

}  // namespace

InterpolationReport interpolation_rmse(const DiffeoModel* m, const PointCloud& data,
                                       const DistanceMatrix& dm, GeoSpace space,
                                       const std::vector<int>& test_idx, int n_pairs) {
  if (space != GeoSpace::Data && !m)
    throw std::invalid_argument("interpolation_rmse: latent spaces need a model");
  if (dm.provenance != "isomap" || dm.k < 1)
    throw std::invalid_argument("interpolation_rmse: needs graph-geodesic distances (isomap)");
  if (dm.n != data.n()) throw std::invalid_argument("interpolation_rmse: distance matrix size");
  if (n_pairs < 1) throw std::invalid_argument("interpolation_rmse: n_pairs must be >= 1");
  if (test_idx.size() < 2)
    throw std::invalid_argument("interpolation_rmse: need at least two holdout points");

  // longest pairs probe the curve far from its endpoints
  struct Pair {
    double dist;
    int i, j;
  };
  std::vector<Pair> pairs;
  for (size_t a = 0; a < test_idx.size(); ++a)
    for (size_t b = a + 1; b < test_idx.size(); ++b)
      pairs.push_back({dm.at(test_idx[a], test_idx[b]), test_idx[a], test_idx[b]});
  std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
    if (x.dist != y.dist) return x.dist > y.dist;
    if (x.i != y.i) return x.i < y.i;
    return x.j < y.j;
  });
  if (int(pairs.size()) > n_pairs) pairs.resize(size_t(n_pairs));

  KnnGraph g = knn_graph(data.X, dm.k);

  InterpolationReport rep;
  for (const Pair& pr : pairs) {
    std::vector<int> path = dijkstra_path(g, pr.i, pr.j);
    int inner = int(path.size()) - 2;
    if (inner <= 0) {
      rep.per_pair.push_back(0.0);
      continue;
    }
    std::vector<double> cum(path.size(), 0.0);
    for (size_t v = 1; v < path.size(); ++v)
      cum[v] = cum[v - 1] +
               (cm(data.X).row(path[v]) - cm(data.X).row(path[v - 1])).norm();
    double total = cum.back();
    std::vector<double> ts(size_t(inner), 0.0);
    for (int v = 0; v < inner; ++v) ts[size_t(v)] = cum[size_t(v) + 1] / total;

    Tensor xi = data.X.row_slice(pr.i);
    Tensor xj = data.X.row_slice(pr.j);
    Tensor curve;
    if (space == GeoSpace::Data && !m) {
      curve = Tensor(inner, data.d());
      for (int v = 0; v < inner; ++v)
        for (int c = 0; c < data.d(); ++c)
          curve.at(v, c) = (1.0 - ts[size_t(v)]) * xi.data[c] + ts[size_t(v)] * xj.data[c];
    } else {
      curve = pullback_geodesic(*m, xi, xj, ts, space);
    }
    double acc = 0;
    for (int v = 0; v < inner; ++v)
      acc += (cm(curve).row(v) - cm(data.X).row(path[size_t(v) + 1])).squaredNorm();
    rep.per_pair.push_back(std::sqrt(acc / (double(inner) * data.d())));
  }

  double n = double(rep.per_pair.size());
  for (double v : rep.per_pair) rep.mean += v;
  rep.mean /= n;
  if (rep.per_pair.size() > 1) {
    double ss = 0;
    for (double v : rep.per_pair) ss += (v - rep.mean) * (v - rep.mean);
    rep.stdev = std::sqrt(ss / (n - 1));
  }
  return rep;
}

double one_nn_accuracy(const Tensor& gen, const Tensor& ref) {
  if (gen.cols != ref.cols) throw std::invalid_argument("one_nn_accuracy: width mismatch");
  if (gen.rows < 1 || ref.rows < 1)
    throw std::invalid_argument("one_nn_accuracy: empty sample set");
  int ng = gen.rows, n = ng + ref.rows;
  auto row = [&](int p) { return p < ng ? cm(gen).row(p) : cm(ref).row(p - ng); };
  int correct = 0;
  for (int p = 0; p < n; ++p) {
    int best = -1;
    double best_d = 0;
    for (int q = 0; q < n; ++q) {
      if (q == p) continue;
      double dq = (row(p) - row(q)).squaredNorm();
      if (best < 0 || dq < best_d) {  // ties keep the lower index
        best = q;
        best_d = dq;
      }
    }
    if ((p < ng) == (best < ng)) ++correct;
  }
  return double(correct) / n;
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  size_t ia = 0, ib = 0;
  double na = double(a.size()), nb = double(b.size());
  KsResult r;
  while (ia < a.size() && ib < b.size()) {
    double x = std::min(a[ia], b[ib]);
    while (ia < a.size() && a[ia] <= x) ++ia;
    while (ib < b.size() && b[ib] <= x) ++ib;
    r.d = std::max(r.d, std::abs(double(ia) / na - double(ib) / nb));
  }
  double lambda = std::sqrt(na * nb / (na + nb)) * r.d;
  if (lambda < 1e-9) {
    r.p = 1.0;
    return r;
  }
  double p = 0;
  for (int j = 1; j <= 100; ++j) {
    double term = 2.0 * (j % 2 == 1 ? 1.0 : -1.0) * std::exp(-2.0 * j * j * lambda * lambda);
    p += term;
    if (std::abs(term) < 1e-12) break;
  }
  r.p = std::min(1.0, std::max(0.0, p));
  return r;
}

Tensor latent_std(const DiffeoModel& m, const Tensor& X_train) {
  if (X_train.rows < 1) throw std::invalid_argument("latent_std: empty input");
  Tensor Z = phi(m, X_train);
  Tensor out(1, Z.cols);
  for (int c = 0; c < Z.cols; ++c) {
    double mean = 0;
    for (int i = 0; i < Z.rows; ++i) mean += Z.at(i, c);
    mean /= Z.rows;
    double ss = 0;
    for (int i = 0; i < Z.rows; ++i) ss += (Z.at(i, c) - mean) * (Z.at(i, c) - mean);
    out.data[size_t(c)] = std::sqrt(ss / Z.rows);
  }
  return out;
}

Tensor analogue_generate(const DiffeoModel& m, const Tensor& base, const Tensor& sigma_z,
                         double tau, Rng& rng) {
  if (sigma_z.rows != 1 || sigma_z.cols != m.d)
    throw std::invalid_argument("analogue_generate: sigma_z must be 1 x d");
  if (tau < 0) throw std::invalid_argument("analogue_generate: tau must be >= 0");
  Tensor Z = phi(m, base);
  for (int i = 0; i < Z.rows; ++i)
    for (int c = 0; c < Z.cols; ++c) Z.at(i, c) += tau * sigma_z.data[size_t(c)] * rng.normal();
  return phi_inverse(m, Z);
}

std::vector<AnalogueTauReport> analogue_scan(const DiffeoModel& m, const SequenceCodec& codec,
                                             const SequenceDataset& ds, const PropertyConfig& pcfg,
                                             const std::vector<int>& train_idx,
                                             const std::vector<double>& taus, uint64_t seed,
                                             std::vector<AnalogueRow>* rows) {
  if (ds.n() == 0) throw std::invalid_argument("analogue_scan: empty dataset");
  if (train_idx.empty()) throw std::invalid_argument("analogue_scan: empty training split");
  Tensor X = codec.encode_all(ds.seqs);
  std::vector<std::string> train_seqs;
  for (int i : train_idx) train_seqs.push_back(ds.seqs[i]);
  Tensor sigma = latent_std(m, codec.encode_all(train_seqs));

  std::unordered_set<std::string> corpus(ds.seqs.begin(), ds.seqs.end());
  Rng base_rng(seed);

  std::vector<AnalogueTauReport> out;
  for (size_t ti = 0; ti < taus.size(); ++ti) {
    Rng rng = base_rng.substream(ti);
    Tensor Xp = analogue_generate(m, X, sigma, taus[ti], rng);

    AnalogueTauReport rep;
    rep.tau = taus[ti];
    std::set<std::string> seen;
    std::vector<std::string> novel_seqs;
    std::vector<int> novel_base;
    for (int i = 0; i < ds.n(); ++i) {
      std::string sq = codec.decode(Xp.row_slice(i));
      bool in_data = corpus.count(sq) > 0;
      if (rows) rows->push_back({taus[ti], ds.ids[i], ds.seqs[i], sq, in_data});
      if (!seen.insert(sq).second) continue;  // one count per unique analogue
      ++rep.total;
      if (in_data) {
        ++rep.in_data;
      } else {
        ++rep.novel;
        novel_seqs.push_back(sq);
        novel_base.push_back(i);
      }
    }

    for (SeqProperty p : kAllSeqProperties) {
      if (novel_seqs.empty()) {
        rep.ks_d.push_back(0.0);
        rep.ks_p.push_back(1.0);
        rep.significant.push_back(false);
        continue;
      }
      std::vector<double> va, vb;
      for (size_t q = 0; q < novel_seqs.size(); ++q) {
        va.push_back(property_value(p, novel_seqs[q], pcfg));
        vb.push_back(property_value(p, ds.seqs[size_t(novel_base[q])], pcfg));
      }
      KsResult ks = ks_two_sample(va, vb);
      rep.ks_d.push_back(ks.d);
      rep.ks_p.push_back(ks.p);
      rep.significant.push_back(ks.p < 0.05);
    }
    out.push_back(rep);
  }
  return out;
}

}  // namespace pfm
