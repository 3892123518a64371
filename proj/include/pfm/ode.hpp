#pragma once

#include <functional>
#include <vector>

#include "pfm/nn.hpp"
#include "pfm/tape.hpp"
#include "pfm/tensor.hpp"

namespace pfm {

// Classical RK4 with fixed step h = 1/n_steps over t in [0,1].
// forward integrates t: 0 -> 1; backward mirrors the grid (t from 1, step -h)
// through the same field.
Tensor ode_solve(const MlpParams& field, const Tensor& z0, bool forward, int n_steps);

// Generic RK4 for an arbitrary batch field (used by flow sampling).
Tensor rk4_integrate(const std::function<Tensor(const Tensor&, double)>& field, const Tensor& z0,
                     double t0, double t1, int n_steps,
                     std::vector<Tensor>* states = nullptr);

// Tape-side forward integration. Returns the final-state node; optionally
// records the node id of the state at the start of each step (n_steps
// entries, beginning with z0's node).
int ode_solve_tape(Tape& tape, const MlpNodes& field, int z0, int n_steps, EmbedCache& cache,
                   std::vector<int>* step_states = nullptr);

}  // namespace pfm
