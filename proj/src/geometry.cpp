#include "pfm/geometry.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pfm/util.hpp"

namespace pfm {

GeoSpace geo_space_from_string(const std::string& s) {
  if (s == "data") return GeoSpace::Data;
  if (s == "latent") return GeoSpace::Latent;
  if (s == "submanifold") return GeoSpace::Submanifold;
  throw std::invalid_argument("unknown geodesic space: " + s);
}

std::string to_string(GeoSpace s) {
  switch (s) {
    case GeoSpace::Data: return "data";
    case GeoSpace::Latent: return "latent";
    case GeoSpace::Submanifold: return "submanifold";
  }
  return "?";
}

double pullback_distance(const DiffeoModel& m, const Tensor& xi, const Tensor& xj) {
  Tensor both(2, m.d);
  for (int c = 0; c < m.d; ++c) {
    both.at(0, c) = xi.data[c];
    both.at(1, c) = xj.data[c];
  }
  Tensor z = phi(m, both);
  double s = 0;
  for (int c = 0; c < m.d; ++c) {
    double diff = z.at(0, c) - z.at(1, c);
    s += diff * diff;
  }
  return std::sqrt(s);
}

Tensor pullback_geodesic(const DiffeoModel& m, const Tensor& xi, const Tensor& xj,
                         const std::vector<double>& ts, GeoSpace space) {
  if (ts.size() < 1) throw std::invalid_argument("pullback_geodesic: empty time list");
  for (double t : ts)
    if (t < 0.0 || t > 1.0) throw std::domain_error("pullback_geodesic: t outside [0,1]");
  int d = int(xi.size());
  if (space == GeoSpace::Data) {
    Tensor out(int(ts.size()), d);
    for (size_t r = 0; r < ts.size(); ++r)
      for (int c = 0; c < d; ++c)
        out.at(int(r), c) = (1.0 - ts[r]) * xi.data[c] + ts[r] * xj.data[c];
    return out;
  }
  Tensor both(2, d);
  for (int c = 0; c < d; ++c) {
    both.at(0, c) = xi.data[c];
    both.at(1, c) = xj.data[c];
  }
  Tensor z = phi(m, both);
  if (space == GeoSpace::Submanifold) z = project_submanifold(z, m.d_prime);
  Tensor zt(int(ts.size()), d);
  for (size_t r = 0; r < ts.size(); ++r)
    for (int c = 0; c < d; ++c)
      zt.at(int(r), c) = (1.0 - ts[r]) * z.at(0, c) + ts[r] * z.at(1, c);
  return phi_inverse(m, zt);
}

Tensor geodesic_velocity(const DiffeoModel& m, const Tensor& xi, const Tensor& xj, double t,
                         GeoSpace space) {
  if (t < 0.0 || t > 1.0) throw std::domain_error("geodesic_velocity: t outside [0,1]");
  int d = int(xi.size());
  if (space == GeoSpace::Data) {
    Tensor v(1, d);
    for (int c = 0; c < d; ++c) v.data[c] = xj.data[c] - xi.data[c];
    return v;
  }
  Tensor both(2, d);
  for (int c = 0; c < d; ++c) {
    both.at(0, c) = xi.data[c];
    both.at(1, c) = xj.data[c];
  }
  Tensor z = phi(m, both);
  if (space == GeoSpace::Submanifold) {
    Tensor v(1, m.d_prime);
    for (int c = 0; c < m.d_prime; ++c) v.data[c] = z.at(1, c) - z.at(0, c);
    return v;
  }
  Tensor v(1, d);
  for (int c = 0; c < d; ++c) v.data[c] = z.at(1, c) - z.at(0, c);
  return v;
}

void write_geodesic_csv(const std::string& path, const std::vector<double>& ts,
                        const Tensor& points) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "t";
  for (int c = 0; c < points.cols; ++c) ss << ",x_" << (c + 1);
  ss << "\n";
  for (size_t r = 0; r < ts.size(); ++r) {
    ss << ts[r];
    for (int c = 0; c < points.cols; ++c) ss << "," << points.at(int(r), c);
    ss << "\n";
  }
  atomic_write_file(path, ss.str());
}

}  // namespace pfm
