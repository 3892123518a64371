#include "pfm/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace pfm {

double CosineSchedule::lr_at(long s) const {
  if (!enabled) return lr0;
  long T = total_steps > 1 ? total_steps - 1 : 1;
  if (s > T) s = T;
  double x = double(s) / double(T);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(3.14159265358979323846 * x));
}

void Adam::init(const std::vector<Tensor*>& params) {
  m.clear();
  v.clear();
  for (const Tensor* p : params) {
    m.emplace_back(p->rows, p->cols, 0.0);
    v.emplace_back(p->rows, p->cols, 0.0);
  }
  t_ = 0;
}

double Adam::current_lr() const { return sched_.enabled ? sched_.lr_at(t_) : lr_; }

void Adam::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
  if (params.size() != m.size() || grads.size() != m.size())
    throw std::invalid_argument("Adam::step: parameter count mismatch");
  double lr = current_lr();
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, double(t_));
  double bc2 = 1.0 - std::pow(beta2_, double(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    if (!p.same_shape(g)) throw std::invalid_argument("Adam::step: grad shape mismatch");
    for (int k = 0; k < p.size(); ++k) {
      double gk = g.data[k];
      m[i].data[k] = beta1_ * m[i].data[k] + (1.0 - beta1_) * gk;
      v[i].data[k] = beta2_ * v[i].data[k] + (1.0 - beta2_) * gk * gk;
      double mh = m[i].data[k] / bc1;
      double vh = v[i].data[k] / bc2;
      p.data[k] -= lr * mh / (std::sqrt(vh) + eps_);
    }
  }
}

}  // namespace pfm
