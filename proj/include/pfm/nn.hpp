#pragma once

#include <map>
#include <vector>

#include "pfm/rng.hpp"
#include "pfm/tape.hpp"
#include "pfm/tensor.hpp"

namespace pfm {

constexpr int kTimeEmbedDim = 16;  // 8 sine-cosine pairs

// Embedding of a scalar time: [sin(f_k t), cos(f_k t)], f_k geometric 1..1000.
Tensor time_embedding(double t);

struct MlpParams {
  std::vector<Tensor> W;  // layer l: in_l x out_l
  std::vector<Tensor> b;  // 1 x out_l
  int layers() const { return int(W.size()); }
  int in_dim() const { return W.empty() ? 0 : W.front().rows; }
  int out_dim() const { return W.empty() ? 0 : W.back().cols; }
  long n_params() const;
};

// Uniform-width MLP: in -> hidden (x n_hidden, Swish) -> out (no activation).
// Hidden weights ~ N(0, init_scale / sqrt(fan_in)); the final layer is
// zero-initialized so an ODE field starts at f = 0 (identity flow).
MlpParams make_mlp(int in, int hidden, int n_hidden, int out, Rng& rng, double init_scale,
                   bool zero_last = true);

// Plain (no tape) forward pass: rows of x processed as a batch.
// If with_time, time_embedding(t) is appended to every input row.
Tensor mlp_eval(const MlpParams& p, const Tensor& x, bool with_time = false, double t = 0.0);

// Tape-side handles for a parameter set pushed onto a tape.
struct MlpNodes {
  std::vector<int> W, b;
};
MlpNodes push_mlp(Tape& tape, const MlpParams& p, bool requires_grad = true);

// Cache of time-embedding input constants per (t, rows) so a training step
// does not recompute/clone them for every field evaluation.
class EmbedCache {
 public:
  // node id of an embedding block with `rows` identical rows, as tape input
  int node(Tape& tape, double t, int rows);
  void reset() { ids_.clear(); }

 private:
  std::map<std::pair<double, int>, int> ids_;
  std::map<std::pair<double, int>, Tensor> tensors_;
};

// Forward through the MLP on the tape. If emb >= 0 it is concatenated to x
// first. Writes hidden-layer pre-activation node ids to `preacts` if given.
int mlp_forward(Tape& tape, const MlpNodes& nodes, int x, int emb = -1,
                std::vector<int>* preacts = nullptr);

// Squared vector-Jacobian norm sum_i ||eps_i^T d f / d x_i||^2 for the MLP at
// the (detached) input rows x, expressed in tape ops so it is differentiable
// w.r.t. the parameters. x_dim: width of the x block (the Jacobian is taken
// w.r.t. x only, not the appended embedding columns).
int mlp_vjp_sumsq(Tape& tape, const MlpNodes& nodes, const Tensor& x, const Tensor& emb_rows,
                  const Tensor& eps, int x_dim);

}  // namespace pfm
