#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pfm/tensor.hpp"

namespace pfm {

struct KnnGraph {
  int n = 0;
  int k = 0;
  // adj[i]: (neighbor, Euclidean weight), symmetrized, no self-edges
  std::vector<std::vector<std::pair<int, double>>> adj;
};

// Symmetrized k-NN graph under Euclidean distance; ties broken by lower index.
KnnGraph knn_graph(const Tensor& points, int k);

struct DistanceMatrix {
  int n = 0;
  std::vector<double> d;  // dense n x n, row-major
  std::string provenance = "custom";  // isomap | custom | file
  int k = 0;
  std::string dataset_hash;

  double at(int i, int j) const { return d[size_t(i) * n + j]; }
  double& at(int i, int j) { return d[size_t(i) * n + j]; }
  void init(int n_) {
    n = n_;
    d.assign(size_t(n_) * n_, 0.0);
  }
};

// All-pairs shortest paths (Dijkstra per source). Throws on a disconnected
// graph, naming the component sizes and suggesting a larger k.
DistanceMatrix graph_geodesics(const KnnGraph& g, int n_threads = 1);

// Single-source distances; optionally fills predecessor array (-1 at source
// and unreachable nodes).
std::vector<double> dijkstra(const KnnGraph& g, int src, std::vector<int>* pred = nullptr);

// Vertex sequence src -> dst along the shortest-path tree.
std::vector<int> dijkstra_path(const KnnGraph& g, int src, int dst);

std::vector<std::vector<int>> graph_components(const KnnGraph& g);

// Binary layout: magic "PFMD", int64 n, then the strict lower triangle
// (row-major: d(1,0), d(2,0), d(2,1), ...). A JSON sidecar <base>.json holds
// n, provenance, k, dataset_hash.
void save_distance_matrix(const DistanceMatrix& m, const std::string& base_path);
DistanceMatrix load_distance_matrix(const std::string& base_path);

}  // namespace pfm
