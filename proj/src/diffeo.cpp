#include "pfm/diffeo.hpp"

#include <stdexcept>

namespace pfm {

void DiffeoModel::validate() const {
  if (d_prime < 1 || d_prime > d) throw std::invalid_argument("DiffeoModel: need 1 <= d' <= d");
  if (n_steps < 1) throw std::invalid_argument("DiffeoModel: n_steps >= 1");
  if (mu.size() != d) throw std::invalid_argument("DiffeoModel: mu length != d");
  if (!mu.all_finite()) throw std::invalid_argument("DiffeoModel: non-finite mu");
}

Tensor phi(const DiffeoModel& m, const Tensor& X) {
  if (X.cols != m.d) throw std::invalid_argument("phi: input width != d");
  Tensor centered = X;
  for (int r = 0; r < X.rows; ++r)
    for (int c = 0; c < X.cols; ++c) centered.at(r, c) -= m.mu.data[c];
  return ode_solve(m.field, centered, true, m.n_steps);
}

Tensor phi_inverse(const DiffeoModel& m, const Tensor& Z) {
  if (Z.cols != m.d) throw std::invalid_argument("phi_inverse: input width != d");
  Tensor x = ode_solve(m.field, Z, false, m.n_steps);
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < x.cols; ++c) x.at(r, c) += m.mu.data[c];
  return x;
}

Tensor project_submanifold(const Tensor& Z, int d_prime) {
  if (d_prime < 0 || d_prime > Z.cols) throw std::invalid_argument("project_submanifold: d'");
  Tensor out = Z;
  for (int r = 0; r < out.rows; ++r)
    for (int c = d_prime; c < out.cols; ++c) out.at(r, c) = 0.0;
  return out;
}

json mlp_to_json(const MlpParams& p) {
  json layers = json::array();
  for (int l = 0; l < p.layers(); ++l) {
    layers.push_back({{"in", p.W[l].rows},
                      {"out", p.W[l].cols},
                      {"W", p.W[l].data},
                      {"b", p.b[l].data}});
  }
  return {{"layers", layers}};
}

MlpParams mlp_from_json(const json& j) {
  MlpParams p;
  for (const auto& layer : j.at("layers")) {
    int in = layer.at("in"), out = layer.at("out");
    Tensor W(in, out), b(1, out);
    layer.at("W").get_to(W.data);
    layer.at("b").get_to(b.data);
    if (int(W.data.size()) != in * out || int(b.data.size()) != out)
      throw std::runtime_error("mlp_from_json: layer size mismatch");
    p.W.push_back(std::move(W));
    p.b.push_back(std::move(b));
  }
  return p;
}

json diffeo_to_json(const DiffeoModel& m) {
  return {{"kind", "diffeo"},
          {"version", 1},
          {"d", m.d},
          {"d_prime", m.d_prime},
          {"n_steps", m.n_steps},
          {"chart", m.chart},
          {"mu", m.mu.data},
          {"config_hash", m.config_hash},
          {"field", mlp_to_json(m.field)}};
}

DiffeoModel diffeo_from_json(const json& j) {
  if (j.at("kind") != "diffeo") throw std::runtime_error("not a diffeo model file");
  DiffeoModel m;
  m.d = j.at("d");
  m.d_prime = j.at("d_prime");
  m.n_steps = j.at("n_steps");
  m.chart = j.at("chart");
  m.mu = Tensor::row(j.at("mu").get<std::vector<double>>());
  m.config_hash = j.value("config_hash", "");
  m.field = mlp_from_json(j.at("field"));
  m.validate();
  return m;
}

void save_diffeo(const DiffeoModel& m, const std::string& path) {
  write_json(path, diffeo_to_json(m));
}

DiffeoModel load_diffeo(const std::string& path) { return diffeo_from_json(load_json(path)); }

}  // namespace pfm
