#include "pfm/ode.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace pfm {

namespace {
using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

Tensor axpy(const Tensor& a, const Tensor& b, double s) {
  Tensor out = a;
  Map(out.ptr(), out.rows, out.cols) += s * CMap(b.ptr(), b.rows, b.cols);
  return out;
}
}  // namespace

Tensor rk4_integrate(const std::function<Tensor(const Tensor&, double)>& field, const Tensor& z0,
                     double t0, double t1, int n_steps, std::vector<Tensor>* states) {
  if (n_steps < 1) throw std::invalid_argument("rk4_integrate: n_steps < 1");
  double h = (t1 - t0) / n_steps;
  Tensor z = z0;
  if (states) states->push_back(z);
  for (int k = 0; k < n_steps; ++k) {
    double t = t0 + k * h;
    Tensor k1 = field(z, t);
    Tensor k2 = field(axpy(z, k1, 0.5 * h), t + 0.5 * h);
    Tensor k3 = field(axpy(z, k2, 0.5 * h), t + 0.5 * h);
    Tensor k4 = field(axpy(z, k3, h), t + h);
    Map zm(z.ptr(), z.rows, z.cols);
    zm += (h / 6.0) * (CMap(k1.ptr(), k1.rows, k1.cols) + 2.0 * CMap(k2.ptr(), k2.rows, k2.cols) +
                       2.0 * CMap(k3.ptr(), k3.rows, k3.cols) + CMap(k4.ptr(), k4.rows, k4.cols));
    if (!z.all_finite())
      throw std::runtime_error("rk4_integrate: non-finite state after step " + std::to_string(k));
    if (states) states->push_back(z);
  }
  return z;
}

Tensor ode_solve(const MlpParams& field, const Tensor& z0, bool forward, int n_steps) {
  auto f = [&](const Tensor& z, double t) { return mlp_eval(field, z, true, t); };
  return forward ? rk4_integrate(f, z0, 0.0, 1.0, n_steps)
                 : rk4_integrate(f, z0, 1.0, 0.0, n_steps);
}

int ode_solve_tape(Tape& tape, const MlpNodes& field, int z0, int n_steps, EmbedCache& cache,
                   std::vector<int>* step_states) {
  int rows = tape.val(z0).rows;
  double h = 1.0 / n_steps;
  int z = z0;
  auto eval = [&](int state, double t) {
    return mlp_forward(tape, field, state, cache.node(tape, t, rows));
  };
  for (int k = 0; k < n_steps; ++k) {
    if (step_states) step_states->push_back(z);
    double t = k * h;
    int k1 = eval(z, t);
    int k2 = eval(tape.add_scaled(z, k1, 0.5 * h), t + 0.5 * h);
    int k3 = eval(tape.add_scaled(z, k2, 0.5 * h), t + 0.5 * h);
    int k4 = eval(tape.add_scaled(z, k3, h), t + h);
    z = tape.add_scaled(z, k1, h / 6.0);
    z = tape.add_scaled(z, k2, h / 3.0);
    z = tape.add_scaled(z, k3, h / 3.0);
    z = tape.add_scaled(z, k4, h / 6.0);
  }
  return z;
}

}  // namespace pfm
