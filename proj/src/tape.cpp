#include "pfm/tape.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace pfm {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

CMap cmap(const Tensor& t) { return CMap(t.ptr(), t.rows, t.cols); }
Map map(Tensor& t) { return Map(t.ptr(), t.rows, t.cols); }

const char* op_name(Tape::Op op) {
  switch (op) {
    case Tape::Op::Input: return "Input";
    case Tape::Op::Add: return "Add";
    case Tape::Op::Sub: return "Sub";
    case Tape::Op::Mul: return "Mul";
    case Tape::Op::Scale: return "Scale";
    case Tape::Op::AddScaled: return "AddScaled";
    case Tape::Op::Matmul: return "Matmul";
    case Tape::Op::MatmulNT: return "MatmulNT";
    case Tape::Op::Linear: return "Linear";
    case Tape::Op::Swish: return "Swish";
    case Tape::Op::SwishDeriv: return "SwishDeriv";
    case Tape::Op::Sum: return "Sum";
    case Tape::Op::SumSq: return "SumSq";
    case Tape::Op::SumAbs: return "SumAbs";
    case Tape::Op::ColSum: return "ColSum";
    case Tape::Op::SliceCols: return "SliceCols";
    case Tape::Op::ConcatCols: return "ConcatCols";
    case Tape::Op::Reshape: return "Reshape";
    case Tape::Op::PairwiseDist: return "PairwiseDist";
    case Tape::Op::GatherRows: return "GatherRows";
  }
  return "?";
}

}  // namespace

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

int Tape::input(Tensor v, bool requires_grad) {
  Node n;
  n.op = Op::Input;
  n.val = std::move(v);
  n.needs_grad = requires_grad;
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  check_shape(nodes_[a].val, nodes_[b].val, "add");
  Node n;
  n.op = Op::Add;
  n.a = a;
  n.b = b;
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  n.val = nodes_[a].val;
  map(n.val) += cmap(nodes_[b].val);
  return push(std::move(n));
}

int Tape::sub(int a, int b) {
  check_shape(nodes_[a].val, nodes_[b].val, "sub");
  Node n;
  n.op = Op::Sub;
  n.a = a;
  n.b = b;
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  n.val = nodes_[a].val;
  map(n.val) -= cmap(nodes_[b].val);
  return push(std::move(n));
}

int Tape::mul(int a, int b) {
  check_shape(nodes_[a].val, nodes_[b].val, "mul");
  Node n;
  n.op = Op::Mul;
  n.a = a;
  n.b = b;
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  n.val = nodes_[a].val;
  map(n.val).array() *= cmap(nodes_[b].val).array();
  return push(std::move(n));
}

int Tape::scale(int a, double s) {
  Node n;
  n.op = Op::Scale;
  n.a = a;
  n.s = s;
  n.needs_grad = nodes_[a].needs_grad;
  n.val = nodes_[a].val;
  map(n.val) *= s;
  return push(std::move(n));
}

int Tape::add_scaled(int a, int b, double s) {
  check_shape(nodes_[a].val, nodes_[b].val, "add_scaled");
  Node n;
  n.op = Op::AddScaled;
  n.a = a;
  n.b = b;
  n.s = s;
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  n.val = nodes_[a].val;
  map(n.val) += s * cmap(nodes_[b].val);
  return push(std::move(n));
}

int Tape::matmul(int a, int b) {
  const Tensor& A = nodes_[a].val;
  const Tensor& B = nodes_[b].val;
  if (A.cols != B.rows) throw std::invalid_argument("matmul: inner dims differ");
  Node n;
  n.op = Op::Matmul;
  n.a = a;
  n.b = b;
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  n.val = Tensor(A.rows, B.cols);
  map(n.val).noalias() = cmap(A) * cmap(B);
  return push(std::move(n));
}

int Tape::matmul_nt(int a, int b) {
  const Tensor& A = nodes_[a].val;
  const Tensor& B = nodes_[b].val;
  if (A.cols != B.cols) throw std::invalid_argument("matmul_nt: inner dims differ");
  Node n;
  n.op = Op::MatmulNT;
  n.a = a;
  n.b = b;
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  n.val = Tensor(A.rows, B.rows);
  map(n.val).noalias() = cmap(A) * cmap(B).transpose();
  return push(std::move(n));
}

int Tape::linear(int x, int W, int bias) {
  const Tensor& X = nodes_[x].val;
  const Tensor& Wv = nodes_[W].val;
  const Tensor& bv = nodes_[bias].val;
  if (X.cols != Wv.rows) throw std::invalid_argument("linear: inner dims differ");
  if (bv.rows != 1 || bv.cols != Wv.cols) throw std::invalid_argument("linear: bias shape");
  Node n;
  n.op = Op::Linear;
  n.a = x;
  n.b = W;
  n.c = bias;
  n.needs_grad = nodes_[x].needs_grad || nodes_[W].needs_grad || nodes_[bias].needs_grad;
  n.val = Tensor(X.rows, Wv.cols);
  Map out = map(n.val);
  out.noalias() = cmap(X) * cmap(Wv);
  out.rowwise() += cmap(bv).row(0);
  return push(std::move(n));
}

int Tape::swish(int a) {
  const Tensor& x = nodes_[a].val;
  Node n;
  n.op = Op::Swish;
  n.a = a;
  n.needs_grad = nodes_[a].needs_grad;
  n.val = Tensor(x.rows, x.cols);
  n.aux = Tensor(x.rows, x.cols);  // sigmoid(x)
  for (int i = 0; i < x.size(); ++i) {
    double s = 1.0 / (1.0 + std::exp(-x.data[i]));
    n.aux.data[i] = s;
    n.val.data[i] = x.data[i] * s;
  }
  return push(std::move(n));
}

int Tape::swish_deriv(int a) {
  const Tensor& x = nodes_[a].val;
  Node n;
  n.op = Op::SwishDeriv;
  n.a = a;
  n.needs_grad = nodes_[a].needs_grad;
  n.val = Tensor(x.rows, x.cols);
  n.aux = Tensor(x.rows, x.cols);  // sigmoid(x)
  for (int i = 0; i < x.size(); ++i) {
    double s = 1.0 / (1.0 + std::exp(-x.data[i]));
    n.aux.data[i] = s;
    n.val.data[i] = s + x.data[i] * s * (1.0 - s);
  }
  return push(std::move(n));
}

int Tape::sum(int a) {
  const Tensor& x = nodes_[a].val;
  Node n;
  n.op = Op::Sum;
  n.a = a;
  n.needs_grad = nodes_[a].needs_grad;
  n.val = Tensor::scalar(x.size() == 0 ? 0.0 : cmap(x).sum());
  return push(std::move(n));
}

int Tape::sumsq(int a) {
  const Tensor& x = nodes_[a].val;
  Node n;
  n.op = Op::SumSq;
  n.a = a;
  n.needs_grad = nodes_[a].needs_grad;
  n.val = Tensor::scalar(x.size() == 0 ? 0.0 : cmap(x).squaredNorm());
  return push(std::move(n));
}

int Tape::sum_abs(int a) {
  const Tensor& x = nodes_[a].val;
  Node n;
  n.op = Op::SumAbs;
  n.a = a;
  n.needs_grad = nodes_[a].needs_grad;
  n.val = Tensor::scalar(x.size() == 0 ? 0.0 : cmap(x).array().abs().sum());
  return push(std::move(n));
}

int Tape::colsum(int a) {
  const Tensor& x = nodes_[a].val;
  Node n;
  n.op = Op::ColSum;
  n.a = a;
  n.needs_grad = nodes_[a].needs_grad;
  n.val = Tensor(1, x.cols);
  map(n.val).row(0) = cmap(x).colwise().sum();
  return push(std::move(n));
}

int Tape::slice_cols(int a, int c0, int c1) {
  const Tensor& x = nodes_[a].val;
  if (c0 < 0 || c1 > x.cols || c0 > c1) throw std::invalid_argument("slice_cols: bad range");
  Node n;
  n.op = Op::SliceCols;
  n.a = a;
  n.i0 = c0;
  n.i1 = c1;
  n.needs_grad = nodes_[a].needs_grad;
  n.val = Tensor(x.rows, c1 - c0);
  map(n.val) = cmap(x).middleCols(c0, c1 - c0);
  return push(std::move(n));
}

int Tape::concat_cols(int a, int b) {
  const Tensor& A = nodes_[a].val;
  const Tensor& B = nodes_[b].val;
  if (A.rows != B.rows) throw std::invalid_argument("concat_cols: row mismatch");
  Node n;
  n.op = Op::ConcatCols;
  n.a = a;
  n.b = b;
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  n.val = Tensor(A.rows, A.cols + B.cols);
  map(n.val).leftCols(A.cols) = cmap(A);
  map(n.val).rightCols(B.cols) = cmap(B);
  return push(std::move(n));
}

int Tape::reshape(int a, int rows, int cols) {
  const Tensor& x = nodes_[a].val;
  if (rows * cols != x.size()) throw std::invalid_argument("reshape: size mismatch");
  Node n;
  n.op = Op::Reshape;
  n.a = a;
  n.needs_grad = nodes_[a].needs_grad;
  n.val = x;
  n.val.rows = rows;
  n.val.cols = cols;
  return push(std::move(n));
}

int Tape::pairwise_dist(int a) {
  const Tensor& X = nodes_[a].val;
  int m = X.rows;
  Node n;
  n.op = Op::PairwiseDist;
  n.a = a;
  n.needs_grad = nodes_[a].needs_grad;
  n.val = Tensor(m, m);
  CMap xm = cmap(X);
  for (int i = 0; i < m; ++i) {
    n.val.at(i, i) = 0.0;
    for (int j = i + 1; j < m; ++j) {
      double d = (xm.row(i) - xm.row(j)).norm();
      n.val.at(i, j) = d;
      n.val.at(j, i) = d;
    }
  }
  return push(std::move(n));
}

int Tape::gather_rows(int table, std::vector<int> rows) {
  const Tensor& T = nodes_[table].val;
  Node n;
  n.op = Op::GatherRows;
  n.a = table;
  n.needs_grad = nodes_[table].needs_grad;
  n.val = Tensor(int(rows.size()), T.cols);
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= T.rows) throw std::invalid_argument("gather_rows: index");
    for (int c = 0; c < T.cols; ++c) n.val.at(int(r), c) = T.at(rows[r], c);
  }
  n.idx = std::move(rows);
  return push(std::move(n));
}

double Tape::value(int id) const {
  const Tensor& t = nodes_[id].val;
  if (t.size() != 1) throw std::logic_error("Tape::value: node not scalar");
  return t.data[0];
}

const Tensor& Tape::grad(int id) const {
  const Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    static thread_local Tensor zero;
    zero = Tensor(n.val.rows, n.val.cols, 0.0);
    return zero;
  }
  return n.grad;
}

Tensor& Tape::grad_buf(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Tensor(n.val.rows, n.val.cols, 0.0);
  return n.grad;
}

void Tape::backward(int root) {
  if (nodes_[root].val.size() != 1) throw std::logic_error("backward: root not scalar");
  double rv = nodes_[root].val.data[0];
  if (!std::isfinite(rv))
    throw std::runtime_error("backward: non-finite loss at node " + std::to_string(root) + " (" +
                             op_name(nodes_[root].op) + ")");
  grad_buf(root).data[0] = 1.0;
  for (int id = root; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    backprop_node(id);
  }
}

void Tape::backprop_node(int id) {
  Node& n = nodes_[id];
  const Tensor& g = n.grad;
  auto gm = cmap(g);
  auto want = [&](int p) { return p >= 0 && nodes_[p].needs_grad; };

  switch (n.op) {
    case Op::Input:
      break;
    case Op::Add:
      if (want(n.a)) map(grad_buf(n.a)) += gm;
      if (want(n.b)) map(grad_buf(n.b)) += gm;
      break;
    case Op::Sub:
      if (want(n.a)) map(grad_buf(n.a)) += gm;
      if (want(n.b)) map(grad_buf(n.b)) -= gm;
      break;
    case Op::Mul:
      if (want(n.a)) map(grad_buf(n.a)).array() += gm.array() * cmap(nodes_[n.b].val).array();
      if (want(n.b)) map(grad_buf(n.b)).array() += gm.array() * cmap(nodes_[n.a].val).array();
      break;
    case Op::Scale:
      if (want(n.a)) map(grad_buf(n.a)) += n.s * gm;
      break;
    case Op::AddScaled:
      if (want(n.a)) map(grad_buf(n.a)) += gm;
      if (want(n.b)) map(grad_buf(n.b)) += n.s * gm;
      break;
    case Op::Matmul:
      if (want(n.a)) map(grad_buf(n.a)).noalias() += gm * cmap(nodes_[n.b].val).transpose();
      if (want(n.b)) map(grad_buf(n.b)).noalias() += cmap(nodes_[n.a].val).transpose() * gm;
      break;
    case Op::MatmulNT:
      if (want(n.a)) map(grad_buf(n.a)).noalias() += gm * cmap(nodes_[n.b].val);
      if (want(n.b)) map(grad_buf(n.b)).noalias() += gm.transpose() * cmap(nodes_[n.a].val);
      break;
    case Op::Linear:
      if (want(n.a)) map(grad_buf(n.a)).noalias() += gm * cmap(nodes_[n.b].val).transpose();
      if (want(n.b)) map(grad_buf(n.b)).noalias() += cmap(nodes_[n.a].val).transpose() * gm;
      if (want(n.c)) map(grad_buf(n.c)).row(0) += gm.colwise().sum();
      break;
    case Op::Swish: {
      if (!want(n.a)) break;
      const Tensor& x = nodes_[n.a].val;
      Tensor& ga = grad_buf(n.a);
      for (int i = 0; i < x.size(); ++i) {
        double s = n.aux.data[i];
        ga.data[i] += g.data[i] * (s + x.data[i] * s * (1.0 - s));
      }
      break;
    }
    case Op::SwishDeriv: {
      if (!want(n.a)) break;
      const Tensor& x = nodes_[n.a].val;
      Tensor& ga = grad_buf(n.a);
      for (int i = 0; i < x.size(); ++i) {
        double s = n.aux.data[i];
        ga.data[i] += g.data[i] * (s * (1.0 - s) * (2.0 + x.data[i] * (1.0 - 2.0 * s)));
      }
      break;
    }
    case Op::Sum:
      if (want(n.a)) map(grad_buf(n.a)).array() += g.data[0];
      break;
    case Op::SumSq:
      if (want(n.a)) map(grad_buf(n.a)) += 2.0 * g.data[0] * cmap(nodes_[n.a].val);
      break;
    case Op::SumAbs: {
      if (!want(n.a)) break;
      const Tensor& x = nodes_[n.a].val;
      Tensor& ga = grad_buf(n.a);
      for (int i = 0; i < x.size(); ++i) {
        double sign = x.data[i] > 0 ? 1.0 : (x.data[i] < 0 ? -1.0 : 0.0);
        ga.data[i] += g.data[0] * sign;
      }
      break;
    }
    case Op::ColSum:
      if (want(n.a)) map(grad_buf(n.a)).rowwise() += gm.row(0);
      break;
    case Op::SliceCols:
      if (want(n.a)) map(grad_buf(n.a)).middleCols(n.i0, n.i1 - n.i0) += gm;
      break;
    case Op::ConcatCols: {
      int ca = nodes_[n.a].val.cols;
      if (want(n.a)) map(grad_buf(n.a)) += gm.leftCols(ca);
      if (want(n.b)) map(grad_buf(n.b)) += gm.rightCols(nodes_[n.b].val.cols);
      break;
    }
    case Op::Reshape: {
      if (!want(n.a)) break;
      Tensor& ga = grad_buf(n.a);
      for (int i = 0; i < ga.size(); ++i) ga.data[i] += g.data[i];
      break;
    }
    case Op::PairwiseDist: {
      if (!want(n.a)) break;
      const Tensor& X = nodes_[n.a].val;
      Tensor& ga = grad_buf(n.a);
      int m = X.rows, d = X.cols;
      for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
          double dij = n.val.at(i, j);
          if (dij < 1e-12) continue;  // subgradient 0 at coincident rows
          double w = (g.at(i, j) + g.at(j, i)) / dij;
          if (w == 0.0) continue;
          for (int c = 0; c < d; ++c) {
            double diff = w * (X.at(i, c) - X.at(j, c));
            ga.at(i, c) += diff;
            ga.at(j, c) -= diff;
          }
        }
      break;
    }
    case Op::GatherRows: {
      if (!want(n.a)) break;
      Tensor& ga = grad_buf(n.a);
      int c = ga.cols;
      for (size_t r = 0; r < n.idx.size(); ++r)
        for (int k = 0; k < c; ++k) ga.at(n.idx[r], k) += g.at(int(r), k);
      break;
    }
  }
}

void Tape::clear() { nodes_.clear(); }

}  // namespace pfm
