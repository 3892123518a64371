#pragma once

#include <vector>

#include "pfm/tensor.hpp"

namespace pfm {

struct CosineSchedule {
  bool enabled = false;
  double lr0 = 1e-3;
  double lr_min = 0.0;
  long total_steps = 1;

  // learning rate at step s (0-based); reaches lr_min exactly at the last step
  double lr_at(long s) const;
};

// Standard Adam with bias correction; optional per-step cosine decay.
class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void set_schedule(CosineSchedule s) { sched_ = s; }

  void init(const std::vector<Tensor*>& params);

  // params[i] updated in place with grads[i]; steps the counter once
  void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

  long step_count() const { return t_; }
  double current_lr() const;  // lr the NEXT step will use

  // deep snapshot/restore of moment state for checkpointing
  std::vector<Tensor> m, v;

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  CosineSchedule sched_;
};

}  // namespace pfm
