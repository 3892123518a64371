#pragma once

#include <string>
#include <vector>

#include "pfm/diffeo.hpp"

namespace pfm {

enum class GeoSpace { Data, Latent, Submanifold };

GeoSpace geo_space_from_string(const std::string& s);
std::string to_string(GeoSpace s);

// d_phi(x_i, x_j) = ||phi(x_i) - phi(x_j)||_2
double pullback_distance(const DiffeoModel& m, const Tensor& xi, const Tensor& xj);

// gamma(t) = phi^-1((1-t) phi(x_i) + t phi(x_j)); Submanifold projects the
// encoded endpoints to M_{d'} x 0 first; Data is the straight ambient line.
// Returns len(ts) x d, one curve point per row.
Tensor pullback_geodesic(const DiffeoModel& m, const Tensor& xi, const Tensor& xj,
                         const std::vector<double>& ts, GeoSpace space);

// Time derivative of the latent interpolant: phi(x_j) - phi(x_i) (constant in
// t for the Euclidean latent chart), in the operating space of the flow model
// (d coords for Latent, first d' for Submanifold, ambient difference for Data).
Tensor geodesic_velocity(const DiffeoModel& m, const Tensor& xi, const Tensor& xj, double t,
                         GeoSpace space);

void write_geodesic_csv(const std::string& path, const std::vector<double>& ts,
                        const Tensor& points);

}  // namespace pfm
