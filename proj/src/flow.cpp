#include "pfm/flow.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "pfm/adam.hpp"
#include "pfm/ode.hpp"
#include "pfm/tape.hpp"
#include "pfm/util.hpp"

namespace pfm {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

CMap cm(const Tensor& t) { return CMap(t.ptr(), t.rows, t.cols); }
Map mm(Tensor& t) { return Map(t.ptr(), t.rows, t.cols); }

Tensor gather(const Tensor& X, const std::vector<int>& idx) {
  Tensor out(int(idx.size()), X.cols);
  for (size_t r = 0; r < idx.size(); ++r)
    std::copy(X.ptr() + size_t(idx[r]) * X.cols, X.ptr() + size_t(idx[r] + 1) * X.cols,
              out.ptr() + r * X.cols);
  return out;
}

GeoSpace mode_space(const std::string& mode) {
  if (mode == "cfm") return GeoSpace::Data;
  if (mode == "pfm") return GeoSpace::Latent;
  if (mode == "dprime_pfm") return GeoSpace::Submanifold;
  throw std::invalid_argument("flow config: mode must be cfm, pfm or dprime_pfm");
}

// raw batched field evaluation with one embedding row per sample
Tensor eval_rows(const MlpParams& p, const Tensor& x, const Tensor& emb) {
  Tensor h(x.rows, x.cols + emb.cols);
  mm(h).leftCols(x.cols) = cm(x);
  mm(h).rightCols(emb.cols) = cm(emb);
  int L = p.layers();
  for (int l = 0; l < L; ++l) {
    Tensor nx(h.rows, p.W[l].cols);
    mm(nx) = cm(h) * cm(p.W[l]);
    mm(nx).rowwise() += cm(p.b[l]).row(0);
    if (l + 1 < L) mm(nx).array() /= 1.0 + (-cm(nx).array()).exp();
    h = nx;
  }
  return h;
}

Tensor embed_per_row(const std::vector<double>& ts) {
  Tensor out(int(ts.size()), kTimeEmbedDim);
  for (size_t i = 0; i < ts.size(); ++i) out.set_row(int(i), time_embedding(ts[i]));
  return out;
}

std::string diffeo_fingerprint(const DiffeoModel& m) { return sha256_hex(diffeo_to_json(m).dump()); }

// operating-space targets for one endpoint batch: Data keeps rows, Latent
// encodes, Submanifold encodes and keeps the first d' coordinates
Tensor to_operating(const DiffeoModel* diffeo, const Tensor& X, GeoSpace space) {
  if (space == GeoSpace::Data) return X;
  Tensor z = phi(*diffeo, X);
  if (space == GeoSpace::Latent) return z;
  Tensor out(z.rows, diffeo->d_prime);
  mm(out) = cm(z).leftCols(diffeo->d_prime);
  return out;
}

Tensor decode_operating(const FlowModel& fm, const DiffeoModel* diffeo, const Tensor& Z) {
  if (fm.space == GeoSpace::Data) return Z;
  if (fm.space == GeoSpace::Latent) return phi_inverse(*diffeo, Z);
  Tensor full(Z.rows, diffeo->d);
  mm(full).leftCols(Z.cols) = cm(Z);
  return phi_inverse(*diffeo, full);
}

void require_diffeo(const FlowModel& fm, const DiffeoModel* diffeo) {
  if (fm.space == GeoSpace::Data) return;
  if (!diffeo) throw std::invalid_argument("flow: latent-space model needs a diffeomorphism");
  if (!fm.diffeo_hash.empty() && fm.diffeo_hash != diffeo_fingerprint(*diffeo))
    throw std::runtime_error("flow: diffeomorphism does not match the one this flow trained in");
}

}  // namespace

void FlowModel::validate() const {
  if (dim < 1) throw std::invalid_argument("flow model: dim must be >= 1");
  if (vt.layers() < 1) throw std::invalid_argument("flow model: empty field");
  if (vt.in_dim() != dim + kTimeEmbedDim || vt.out_dim() != dim)
    throw std::invalid_argument("flow model: field width does not match dim");
  if (!(sigma_min >= 0 && sigma_min < 1))
    throw std::invalid_argument("flow model: sigma_min must be in [0, 1)");
  if (n_steps < 1) throw std::invalid_argument("flow model: n_steps must be >= 1");
}

void FlowTrainConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("flow config: " + field + " " + why);
  };
  mode_space(mode);
  if (epochs < 0) bad("epochs", "must be >= 0");
  if (batch_size < 1) bad("batch_size", "must be >= 1");
  if (!(learning_rate > 0)) bad("learning_rate", "must be > 0");
  if (!(lr_min >= 0)) bad("lr_min", "must be >= 0");
  if (!(sigma_min >= 0 && sigma_min < 1)) bad("sigma_min", "must be in [0, 1)");
  if (n_simulation_steps < 1) bad("n_simulation_steps", "must be >= 1");
  if (hidden < 1) bad("hidden", "must be >= 1");
  if (layers < 1) bad("layers", "must be >= 1");
  if (!(init_scale > 0)) bad("init_scale", "must be > 0");
}

std::pair<Tensor, Tensor> cfm_target(const Tensor& x0, const Tensor& x1, double t,
                                     double sigma_min) {
  check_shape(x0, x1, "cfm_target");
  if (!(t >= 0 && t <= 1)) throw std::invalid_argument("cfm_target: t outside [0, 1]");
  if (!(sigma_min >= 0 && sigma_min < 1))
    throw std::invalid_argument("cfm_target: sigma_min must be in [0, 1)");
  if (t == 1.0 && sigma_min == 0.0)
    throw std::invalid_argument("cfm_target: t = 1 with sigma_min = 0 collapses the path");
  Tensor xt(x0.rows, x0.cols), ut(x0.rows, x0.cols);
  double a = 1.0 - (1.0 - sigma_min) * t;
  mm(xt) = a * cm(x0) + t * cm(x1);
  mm(ut) = cm(x1) - (1.0 - sigma_min) * cm(x0);
  return {xt, ut};
}

std::pair<Tensor, Tensor> pfm_target(const DiffeoModel& m, const Tensor& x0, const Tensor& x1,
                                     double t, GeoSpace space) {
  check_shape(x0, x1, "pfm_target");
  if (!(t >= 0 && t <= 1)) throw std::invalid_argument("pfm_target: t outside [0, 1]");
  if (space == GeoSpace::Data)
    throw std::invalid_argument("pfm_target: space must be latent or submanifold");
  Tensor z0 = to_operating(&m, x0, space);
  Tensor z1 = to_operating(&m, x1, space);
  // kappa(t) = 1 - t
  Tensor zt(z0.rows, z0.cols), ut(z0.rows, z0.cols);
  mm(zt) = (1.0 - t) * cm(z0) + t * cm(z1);
  mm(ut) = cm(z1) - cm(z0);
  return {zt, ut};
}

FlowResult train_flow(const PointCloud& data, const DiffeoModel* diffeo,
                      const FlowTrainConfig& cfg, const std::vector<int>& train_idx,
                      const std::vector<int>& test_idx) {
  cfg.validate();
  GeoSpace space = mode_space(cfg.mode);
  if (space != GeoSpace::Data) {
    if (!diffeo) throw std::invalid_argument("train_flow: mode " + cfg.mode + " needs a diffeo");
    if (diffeo->d != data.d())
      throw std::invalid_argument("train_flow: diffeo dim does not match data");
  }
  if (train_idx.empty()) throw std::invalid_argument("train_flow: empty training split");
  for (int i : train_idx)
    if (i < 0 || i >= data.n()) throw std::out_of_range("train_flow: train index out of range");
  for (int i : test_idx)
    if (i < 0 || i >= data.n()) throw std::out_of_range("train_flow: test index out of range");

  Tensor z1_train = to_operating(diffeo, gather(data.X, train_idx), space);
  Tensor z1_test;
  if (!test_idx.empty()) z1_test = to_operating(diffeo, gather(data.X, test_idx), space);
  int dim = z1_train.cols;

  Rng base(cfg.seed);
  Rng init_rng = base.substream(0);
  Rng perm_rng = base.substream(1);
  Rng draw_rng = base.substream(2);
  Rng test_rng = base.substream(3);

  MlpParams vt = make_mlp(dim + kTimeEmbedDim, cfg.hidden, cfg.layers, dim, init_rng,
                          cfg.init_scale, true);
  std::vector<Tensor*> params;
  for (size_t l = 0; l < vt.W.size(); ++l) {
    params.push_back(&vt.W[l]);
    params.push_back(&vt.b[l]);
  }

  int n_train = int(train_idx.size());
  int bsz = std::min(cfg.batch_size, n_train);
  int n_batches = n_train / bsz;

  Adam opt(cfg.learning_rate);
  if (cfg.cosine) {
    CosineSchedule s;
    s.enabled = true;
    s.lr0 = cfg.learning_rate;
    s.lr_min = cfg.lr_min;
    s.total_steps = long(cfg.epochs) * n_batches;
    opt.set_schedule(s);
  }
  opt.init(params);

  // one fixed conditional draw per validation sample keeps the early-stopping
  // signal comparable across epochs
  int n_test = int(test_idx.size());
  Tensor x0_test;
  std::vector<double> t_test(n_test);
  Tensor emb_test;
  Tensor xt_test, ut_test;
  if (n_test > 0) {
    x0_test = Tensor(n_test, dim);
    test_rng.fill_normal(x0_test);
    for (int i = 0; i < n_test; ++i) t_test[i] = test_rng.uniform();
    emb_test = embed_per_row(t_test);
    xt_test = Tensor(n_test, dim);
    ut_test = Tensor(n_test, dim);
    for (int i = 0; i < n_test; ++i) {
      double t = t_test[i];
      if (space == GeoSpace::Data) {
        double a = 1.0 - (1.0 - cfg.sigma_min) * t;
        mm(xt_test).row(i) = a * cm(x0_test).row(i) + t * cm(z1_test).row(i);
        mm(ut_test).row(i) = cm(z1_test).row(i) - (1.0 - cfg.sigma_min) * cm(x0_test).row(i);
      } else {
        mm(xt_test).row(i) = (1.0 - t) * cm(x0_test).row(i) + t * cm(z1_test).row(i);
        mm(ut_test).row(i) = cm(z1_test).row(i) - cm(x0_test).row(i);
      }
    }
  }

  Tape tape;
  FlowTrainReport report;
  std::vector<Tensor> best_params;
  bool have_best = false;
  double best_mse = 0;

  Tensor x0(bsz, dim), xt(bsz, dim), ut(bsz, dim);
  std::vector<double> ts(bsz);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> perm = perm_rng.permutation(n_train);
    FlowEpochLog log;
    log.epoch = epoch;
    log.lr = opt.current_lr();

    for (int bi = 0; bi < n_batches; ++bi) {
      draw_rng.fill_normal(x0);
      for (int j = 0; j < bsz; ++j) ts[j] = draw_rng.uniform();
      for (int j = 0; j < bsz; ++j) {
        int r = perm[bi * bsz + j];  // row into z1_train
        double t = ts[j];
        if (space == GeoSpace::Data) {
          double a = 1.0 - (1.0 - cfg.sigma_min) * t;
          mm(xt).row(j) = a * cm(x0).row(j) + t * cm(z1_train).row(r);
          mm(ut).row(j) = cm(z1_train).row(r) - (1.0 - cfg.sigma_min) * cm(x0).row(j);
        } else {
          mm(xt).row(j) = (1.0 - t) * cm(x0).row(j) + t * cm(z1_train).row(r);
          mm(ut).row(j) = cm(z1_train).row(r) - cm(x0).row(j);
        }
      }

      tape.clear();
      MlpNodes nodes = push_mlp(tape, vt, true);
      int x_node = tape.input(xt, false);
      int emb_node = tape.input(embed_per_row(ts), false);
      int pred = mlp_forward(tape, nodes, x_node, emb_node);
      int loss = tape.scale(tape.sumsq(tape.sub(pred, tape.input(ut, false))), 1.0 / bsz);
      double lv = tape.value(loss);
      if (!std::isfinite(lv))
        throw std::runtime_error("train_flow: non-finite loss at epoch " + std::to_string(epoch) +
                                 " batch " + std::to_string(bi));
      log.train_mse += lv;
      tape.backward(loss);
      std::vector<Tensor> grad_store;
      grad_store.reserve(params.size());
      for (size_t l = 0; l < vt.W.size(); ++l) {
        grad_store.push_back(tape.grad(nodes.W[l]));
        grad_store.push_back(tape.grad(nodes.b[l]));
      }
      std::vector<const Tensor*> gp;
      for (const Tensor& g : grad_store) gp.push_back(&g);
      opt.step(params, gp);
    }
    log.train_mse /= n_batches;

    if (n_test > 0) {
      Tensor pred = eval_rows(vt, xt_test, emb_test);
      log.test_mse = (cm(pred) - cm(ut_test)).squaredNorm() / n_test;
      if (!std::isfinite(log.test_mse))
        throw std::runtime_error("train_flow: non-finite validation loss at epoch " +
                                 std::to_string(epoch));
      if (!have_best || log.test_mse < best_mse) {
        have_best = true;
        best_mse = log.test_mse;
        report.best_epoch = epoch;
        best_params.clear();
        for (Tensor* p : params) best_params.push_back(*p);
        log.is_best = true;
      }
    }
    report.history.push_back(log);
  }

  if (have_best) {
    for (size_t i = 0; i < params.size(); ++i) *params[i] = best_params[i];
    report.best_test_mse = best_mse;
  } else if (cfg.epochs > 0) {
    report.best_epoch = cfg.epochs - 1;
  }

  FlowResult out;
  out.model.vt = vt;
  out.model.space = space;
  out.model.dim = dim;
  out.model.sigma_min = cfg.sigma_min;
  out.model.n_steps = cfg.n_simulation_steps;
  if (space != GeoSpace::Data) out.model.diffeo_hash = diffeo_fingerprint(*diffeo);
  out.report = report;
  return out;
}

Tensor flow_sample(const FlowModel& fm, const DiffeoModel* diffeo, int n, Rng& rng) {
  fm.validate();
  require_diffeo(fm, diffeo);
  if (n < 1) throw std::invalid_argument("flow_sample: n must be >= 1");
  Tensor z0(n, fm.dim);
  rng.fill_normal(z0);
  auto f = [&](const Tensor& z, double t) { return mlp_eval(fm.vt, z, true, t); };
  Tensor z1 = rk4_integrate(f, z0, 0.0, 1.0, fm.n_steps);
  return decode_operating(fm, diffeo, z1);
}

std::vector<Tensor> flow_trajectory(const FlowModel& fm, const DiffeoModel* diffeo,
                                    const Tensor& z0, int n_times) {
  fm.validate();
  require_diffeo(fm, diffeo);
  if (n_times < 2) throw std::invalid_argument("flow_trajectory: n_times must be >= 2");
  if (z0.cols != fm.dim) throw std::invalid_argument("flow_trajectory: z0 width mismatch");
  auto f = [&](const Tensor& z, double t) { return mlp_eval(fm.vt, z, true, t); };

  std::vector<Tensor> frames;
  int segs = n_times - 1;
  if (fm.n_steps % segs == 0) {
    // frame times sit on the simulation grid: one pass, bitwise equal to
    // flow_sample's integration
    std::vector<Tensor> states;
    rk4_integrate(f, z0, 0.0, 1.0, fm.n_steps, &states);
    int stride = fm.n_steps / segs;
    for (int k = 0; k <= segs; ++k) frames.push_back(states[size_t(k) * stride]);
  } else {
    int per_seg = (fm.n_steps + segs - 1) / segs;
    Tensor z = z0;
    frames.push_back(z);
    for (int k = 0; k < segs; ++k) {
      z = rk4_integrate(f, z, double(k) / segs, double(k + 1) / segs, per_seg);
      frames.push_back(z);
    }
  }
  std::vector<Tensor> out;
  out.reserve(frames.size());
  for (const Tensor& fz : frames) out.push_back(decode_operating(fm, diffeo, fz));
  return out;
}

json flow_to_json(const FlowModel& fm) {
  json j;
  j["kind"] = "flow";
  j["version"] = 1;
  j["space"] = to_string(fm.space);
  j["dim"] = fm.dim;
  j["sigma_min"] = fm.sigma_min;
  j["n_steps"] = fm.n_steps;
  j["diffeo_hash"] = fm.diffeo_hash;
  j["config_hash"] = fm.config_hash;
  j["vt"] = mlp_to_json(fm.vt);
  return j;
}

FlowModel flow_from_json(const json& j) {
  if (j.value("kind", "") != "flow") throw std::runtime_error("flow_from_json: not a flow file");
  FlowModel fm;
  fm.space = geo_space_from_string(j.at("space").get<std::string>());
  fm.dim = j.at("dim").get<int>();
  fm.sigma_min = j.at("sigma_min").get<double>();
  fm.n_steps = j.at("n_steps").get<int>();
  fm.diffeo_hash = j.value("diffeo_hash", "");
  fm.config_hash = j.value("config_hash", "");
  fm.vt = mlp_from_json(j.at("vt"));
  fm.validate();
  return fm;
}

void save_flow(const FlowModel& fm, const std::string& path) {
  write_json(path, flow_to_json(fm));
}

FlowModel load_flow(const std::string& path) { return flow_from_json(load_json(path)); }

}  // namespace pfm
