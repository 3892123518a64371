#include "pfm/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "pfm/util.hpp"

namespace pfm {

KnnGraph knn_graph(const Tensor& points, int k) {
  int n = points.rows;
  if (k < 1 || k >= n) throw std::invalid_argument("knn_graph: need 1 <= k < n");
  KnnGraph g;
  g.n = n;
  g.k = k;
  g.adj.assign(n, {});

  std::vector<std::vector<char>> has(n, std::vector<char>(n, 0));
  std::vector<std::pair<double, int>> cand(n - 1);
  for (int i = 0; i < n; ++i) {
    int m = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double s = 0;
      for (int c = 0; c < points.cols; ++c) {
        double diff = points.at(i, c) - points.at(j, c);
        s += diff * diff;
      }
      cand[m++] = {std::sqrt(s), j};
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());  // ties: lower index first
    for (int t = 0; t < k; ++t) {
      int j = cand[t].second;
      double w = cand[t].first;
      if (!has[i][j]) {
        has[i][j] = has[j][i] = 1;
        g.adj[i].push_back({j, w});
        g.adj[j].push_back({i, w});
      }
    }
  }
  for (auto& lst : g.adj) std::sort(lst.begin(), lst.end());
  return g;
}

std::vector<double> dijkstra(const KnnGraph& g, int src, std::vector<int>* pred) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(g.n, inf);
  if (pred) pred->assign(g.n, -1);
  std::vector<char> done(g.n, 0);
  using QE = std::pair<double, int>;
  std::priority_queue<QE, std::vector<QE>, std::greater<QE>> pq;
  dist[src] = 0;
  pq.push({0.0, src});
  while (!pq.empty()) {
    auto [du, u] = pq.top();
    pq.pop();
    if (done[u]) continue;
    done[u] = 1;
    for (auto [v, w] : g.adj[u]) {
      double nd = du + w;
      if (nd < dist[v]) {
        dist[v] = nd;
        if (pred) (*pred)[v] = u;
        pq.push({nd, v});
      }
    }
  }
  return dist;
}

std::vector<int> dijkstra_path(const KnnGraph& g, int src, int dst) {
  std::vector<int> pred;
  std::vector<double> dist = dijkstra(g, src, &pred);
  if (!std::isfinite(dist[dst]))
    throw std::runtime_error("dijkstra_path: no path between " + std::to_string(src) + " and " +
                             std::to_string(dst));
  std::vector<int> path{dst};
  while (path.back() != src) path.push_back(pred[path.back()]);
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<std::vector<int>> graph_components(const KnnGraph& g) {
  std::vector<std::vector<int>> comps;
  std::vector<char> seen(g.n, 0);
  for (int s = 0; s < g.n; ++s) {
    if (seen[s]) continue;
    std::vector<int> comp, stack{s};
    seen[s] = 1;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      comp.push_back(u);
      for (auto [v, w] : g.adj[u])
        if (!seen[v]) {
          seen[v] = 1;
          stack.push_back(v);
        }
    }
    std::sort(comp.begin(), comp.end());
    comps.push_back(std::move(comp));
  }
  return comps;
}

DistanceMatrix graph_geodesics(const KnnGraph& g, int n_threads) {
  auto comps = graph_components(g);
  if (comps.size() > 1) {
    std::ostringstream ss;
    ss << "knn graph is disconnected: " << comps.size() << " components of sizes [";
    for (size_t i = 0; i < comps.size(); ++i) ss << (i ? ", " : "") << comps[i].size();
    ss << "] at k=" << g.k << "; increase k to connect them";
    throw std::runtime_error(ss.str());
  }
  DistanceMatrix m;
  m.init(g.n);
  m.provenance = "isomap";
  m.k = g.k;

  auto run_range = [&](int lo, int hi) {
    for (int s = lo; s < hi; ++s) {
      std::vector<double> dist = dijkstra(g, s);
      for (int j = 0; j < g.n; ++j) m.at(s, j) = dist[j];
    }
  };
  n_threads = std::max(1, n_threads);
  if (n_threads == 1 || g.n < 4 * n_threads) {
    run_range(0, g.n);
  } else {
    std::vector<std::thread> workers;
    int chunk = (g.n + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t) {
      int lo = t * chunk, hi = std::min(g.n, lo + chunk);
      if (lo < hi) workers.emplace_back(run_range, lo, hi);
    }
    for (auto& w : workers) w.join();
  }
  // opposite-direction sums can differ by ulps; the lower triangle is authoritative
  for (int i = 1; i < g.n; ++i)
    for (int j = 0; j < i; ++j) m.at(j, i) = m.at(i, j);
  return m;
}

void save_distance_matrix(const DistanceMatrix& m, const std::string& base_path) {
  std::string bin;
  bin.reserve(12 + sizeof(double) * size_t(m.n) * (m.n - 1) / 2);
  bin.append("PFMD", 4);
  int64_t n64 = m.n;
  bin.append(reinterpret_cast<const char*>(&n64), sizeof(n64));
  for (int i = 1; i < m.n; ++i)
    for (int j = 0; j < i; ++j) {
      double v = m.at(i, j);
      bin.append(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  atomic_write_file(base_path + ".bin", bin);
  json side = {{"n", m.n}, {"provenance", m.provenance}, {"k", m.k}, {"dataset_hash", m.dataset_hash}};
  write_json(base_path + ".json", side);
}

DistanceMatrix load_distance_matrix(const std::string& base_path) {
  std::string bin = read_file(base_path + ".bin");
  if (bin.size() < 12 || std::memcmp(bin.data(), "PFMD", 4) != 0)
    throw std::runtime_error("bad distance matrix file: " + base_path + ".bin");
  int64_t n64;
  std::memcpy(&n64, bin.data() + 4, sizeof(n64));
  size_t need = 12 + sizeof(double) * size_t(n64) * (n64 - 1) / 2;
  if (bin.size() != need) throw std::runtime_error("truncated distance matrix: " + base_path);
  DistanceMatrix m;
  m.init(int(n64));
  const char* p = bin.data() + 12;
  for (int i = 1; i < m.n; ++i)
    for (int j = 0; j < i; ++j) {
      double v;
      std::memcpy(&v, p, sizeof(v));
      p += sizeof(v);
      m.at(i, j) = v;
      m.at(j, i) = v;
    }
  json side = load_json(base_path + ".json");
  if (side.at("n") != m.n) throw std::runtime_error("distance matrix sidecar disagrees on n");
  m.provenance = side.at("provenance");
  m.k = side.at("k");
  m.dataset_hash = side.value("dataset_hash", "");
  return m;
}

}  // namespace pfm
