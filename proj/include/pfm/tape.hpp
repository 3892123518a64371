#pragma once

#include <cstdint>
#include <vector>

#include "pfm/tensor.hpp"

namespace pfm {

// Reverse-mode autodiff over a flat list of nodes. Creation order is
// topological order; backward() walks it in reverse. One Tape instance is
// built per optimization step and discarded (clear() reuses the storage).
class Tape {
 public:
  enum class Op : uint8_t {
    Input,
    Add,
    Sub,
    Mul,
    Scale,
    AddScaled,
    Matmul,
    MatmulNT,
    Linear,
    Swish,
    SwishDeriv,
    Sum,
    SumSq,
    SumAbs,
    ColSum,
    SliceCols,
    ConcatCols,
    Reshape,
    PairwiseDist,
    GatherRows,
  };

  struct Node {
    Tensor val;
    Tensor grad;  // allocated on demand during backward
    Tensor aux;   // op-specific saved forward state
    std::vector<int> idx;
    Op op = Op::Input;
    bool needs_grad = false;
    int a = -1, b = -1, c = -1;
    int i0 = 0, i1 = 0;
    double s = 0.0;
  };

  int input(Tensor v, bool requires_grad);

  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);                    // elementwise
  int scale(int a, double s);               // s * a
  int add_scaled(int a, int b, double s);   // a + s * b
  int matmul(int a, int b);                 // A * B
  int matmul_nt(int a, int b);              // A * B^T
  int linear(int x, int W, int bias);       // X * W + 1 b^T
  int swish(int a);                         // x * sigmoid(x)
  int swish_deriv(int a);                   // d/dx swish(x), as a primitive
  int sum(int a);                           // scalar
  int sumsq(int a);                         // scalar, sum of squares
  int sum_abs(int a);                       // scalar, sum of |x|
  int colsum(int a);                        // 1 x cols
  int slice_cols(int a, int c0, int c1);    // columns [c0, c1)
  int concat_cols(int a, int b);
  int reshape(int a, int rows, int cols);
  int pairwise_dist(int a);                 // n x n Euclidean distances of rows
  int gather_rows(int table, std::vector<int> rows);

  const Tensor& val(int id) const { return nodes_[id].val; }
  double value(int id) const;  // scalar nodes only
  const Tensor& grad(int id) const;

  // Seeds d(root)/d(root) = 1 and accumulates gradients into every node
  // reachable from inputs flagged requires_grad. Root must be scalar.
  void backward(int root);

  void clear();
  size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
  int push(Node n);
  void backprop_node(int id);
  Tensor& grad_buf(int id);
};

}  // namespace pfm
