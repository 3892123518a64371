#include "pfm/isometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "pfm/ode.hpp"

namespace pfm {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

CMap cm(const Tensor& t) { return CMap(t.ptr(), t.rows, t.cols); }
Map mm(Tensor& t) { return Map(t.ptr(), t.rows, t.cols); }

Tensor gather(const Tensor& X, const std::vector<int>& idx) {
  Tensor out(int(idx.size()), X.cols);
  for (size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= X.rows) throw std::out_of_range("gather: row index out of range");
    std::copy(X.ptr() + size_t(idx[r]) * X.cols, X.ptr() + size_t(idx[r] + 1) * X.cols,
              out.ptr() + r * X.cols);
  }
  return out;
}

Tensor restrict_dm(const DistanceMatrix& dm, const std::vector<int>& idx) {
  Tensor out(int(idx.size()), int(idx.size()));
  for (size_t i = 0; i < idx.size(); ++i)
    for (size_t j = 0; j < idx.size(); ++j) out.at(int(i), int(j)) = dm.at(idx[i], idx[j]);
  return out;
}

Tensor mean_row(const Tensor& X) {
  if (X.rows == 0) throw std::invalid_argument("mean_row: empty input");
  Tensor mu(1, X.cols);
  mm(mu) = cm(X).colwise().mean();
  return mu;
}

Tensor center(const Tensor& X, const Tensor& mu) {
  Tensor out = X;
  mm(out).rowwise() -= cm(mu).row(0);
  return out;
}

Tensor embed_rows(double t, int rows) {
  Tensor e = time_embedding(t);
  Tensor out(rows, kTimeEmbedDim);
  for (int r = 0; r < rows; ++r) out.set_row(r, e);
  return out;
}

Tensor tile_rows(const Tensor& block, int times) {
  Tensor out(block.rows * times, block.cols);
  for (int r = 0; r < times; ++r)
    std::copy(block.ptr(), block.ptr() + block.size(), out.ptr() + size_t(r) * block.size());
  return out;
}

// raw vector-Jacobian product of the field MLP w.r.t. its x block
double vjp_sumsq_raw(const MlpParams& p, const Tensor& x, double t, const Tensor& eps) {
  int L = p.layers();
  Tensor emb = embed_rows(t, x.rows);
  Tensor h(x.rows, x.cols + kTimeEmbedDim);
  mm(h).leftCols(x.cols) = cm(x);
  mm(h).rightCols(kTimeEmbedDim) = cm(emb);
  std::vector<Tensor> pre(L - 1);
  for (int l = 0; l < L; ++l) {
    Tensor nx(h.rows, p.W[l].cols);
    mm(nx) = cm(h) * cm(p.W[l]);
    mm(nx).rowwise() += cm(p.b[l]).row(0);
    if (l + 1 < L) {
      pre[l] = nx;
      mm(nx).array() /= 1.0 + (-cm(nx).array()).exp();  // swish
    }
    h = nx;
  }
  Tensor g = eps;
  for (int l = L - 1; l >= 0; --l) {
    Tensor gx(g.rows, p.W[l].rows);
    mm(gx) = cm(g) * cm(p.W[l]).transpose();
    g = gx;
    if (l > 0) {
      auto z = cm(pre[l - 1]).array();
      auto s = 1.0 / (1.0 + (-z).exp());
      mm(g).array() *= (s + z * s * (1.0 - s));
    }
  }
  return cm(g).leftCols(x.cols).squaredNorm();
}

}  // namespace

void IsometryTrainConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("isometry config: " + field + " " + why);
  };
  if (!(alpha1 >= 0)) bad("alpha1", "must be >= 0");
  if (!(alpha2 >= 0)) bad("alpha2", "must be >= 0");
  if (!(alpha3 >= 0)) bad("alpha3", "must be >= 0");
  if (!(alpha4 >= 0)) bad("alpha4", "must be >= 0");
  if (epochs < 0) bad("epochs", "must be >= 0");
  if (warmup_epochs < 0) bad("warmup_epochs", "must be >= 0");
  if (warmup_epochs > epochs) bad("warmup_epochs", "must be <= epochs");
  if (!(split_fraction > 0 && split_fraction < 1)) bad("split_fraction", "must be in (0, 1)");
  if (batch_size < 1) bad("batch_size", "must be >= 1");
  if (!(learning_rate > 0)) bad("learning_rate", "must be > 0");
  if (!(lr_min >= 0)) bad("lr_min", "must be >= 0");
  if (d_prime < 1) bad("d_prime", "must be >= 1");
  if (n_steps < 1) bad("n_steps", "must be >= 1");
  if (hidden < 1) bad("hidden", "must be >= 1");
  if (layers < 1) bad("layers", "must be >= 1");
  if (!(init_scale > 0)) bad("init_scale", "must be > 0");
}

int loss_global_isometry_node(Tape& tape, int z, const Tensor& d_sub) {
  int b = tape.val(z).rows;
  if (d_sub.rows != b || d_sub.cols != b)
    throw std::invalid_argument("loss_global_isometry: distance block shape mismatch");
  int D = tape.pairwise_dist(z);
  int E = tape.sub(D, tape.input(d_sub, false));
  return tape.scale(tape.sumsq(E), 1.0 / (double(b) * b));
}

int loss_graph_matching_node(Tape& tape, int z, const Tensor& d_sub) {
  int b = tape.val(z).rows;
  if (d_sub.rows != b || d_sub.cols != b)
    throw std::invalid_argument("loss_graph_matching: distance block shape mismatch");
  int D = tape.pairwise_dist(z);
  int E = tape.sub(D, tape.input(d_sub, false));
  // (1/b) sum_{i != j} ||E_i - E_j||^2 = (2 b sumsq(E) - 2 sumsq(colsum(E))) / b
  int s1 = tape.sumsq(E);
  int s2 = tape.sumsq(tape.colsum(E));
  return tape.add_scaled(tape.scale(s1, 2.0), s2, -2.0 / b);
}

int loss_submanifold_node(Tape& tape, int z, int d_prime) {
  const Tensor& zv = tape.val(z);
  if (d_prime < 0 || d_prime > zv.cols)
    throw std::invalid_argument("loss_submanifold: d_prime out of range");
  int sl = tape.slice_cols(z, d_prime, zv.cols);
  return tape.scale(tape.sum_abs(sl), 1.0 / zv.rows);
}

int loss_stability_node(Tape& tape, const MlpNodes& field, const std::vector<int>& states,
                        int n_steps, int d, Rng& rng) {
  if (int(states.size()) != n_steps)
    throw std::invalid_argument("loss_stability: expected one state per step");
  double h = 1.0 / n_steps;
  int b = tape.val(states[0]).rows;
  int total = -1;
  for (int k = 0; k < n_steps; ++k) {
    const Tensor& zk = tape.val(states[k]);  // value copy, detached
    Tensor eps(b, d);
    rng.fill_normal(eps);
    int term = mlp_vjp_sumsq(tape, field, zk, embed_rows(k * h, b), eps, d);
    total = total < 0 ? term : tape.add(total, term);
  }
  return tape.scale(total, 1.0 / (double(b) * n_steps));
}

double loss_global_isometry(const DiffeoModel& m, const Tensor& batch, const Tensor& d_sub) {
  Tensor z = phi(m, batch);
  int b = z.rows;
  double acc = 0;
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j) {
      double dz = (cm(z).row(i) - cm(z).row(j)).norm();
      double e = dz - d_sub.at(i, j);
      acc += e * e;
    }
  return acc / (double(b) * b);
}

double loss_graph_matching(const DiffeoModel& m, const Tensor& batch, const Tensor& d_sub) {
  // direct definition, O(b^3); the tape builder uses the O(b^2) identity
  Tensor z = phi(m, batch);
  int b = z.rows;
  Tensor E(b, b);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j)
      E.at(i, j) = (cm(z).row(i) - cm(z).row(j)).norm() - d_sub.at(i, j);
  double acc = 0;
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j) {
      if (i == j) continue;
      acc += (cm(E).row(i) - cm(E).row(j)).squaredNorm();
    }
  return acc / b;
}

double loss_submanifold(const DiffeoModel& m, const Tensor& batch) {
  Tensor z = phi(m, batch);
  double acc = 0;
  for (int i = 0; i < z.rows; ++i)
    for (int c = m.d_prime; c < z.cols; ++c) acc += std::abs(z.at(i, c));
  return acc / z.rows;
}

double loss_stability(const DiffeoModel& m, const Tensor& batch, Rng& rng) {
  Tensor x = center(batch, m.mu);
  std::vector<Tensor> states;
  auto f = [&](const Tensor& z, double t) { return mlp_eval(m.field, z, true, t); };
  rk4_integrate(f, x, 0.0, 1.0, m.n_steps, &states);
  double h = 1.0 / m.n_steps;
  int b = batch.rows;
  double acc = 0;
  for (int k = 0; k < m.n_steps; ++k) {
    Tensor eps(b, m.d);
    rng.fill_normal(eps);
    acc += vjp_sumsq_raw(m.field, states[k], k * h, eps);
  }
  return acc / (double(b) * m.n_steps);
}

AblationMetrics ablation_metrics(const DiffeoModel& m, const Tensor& holdout,
                                 const Tensor& d_sub) {
  int n = holdout.rows;
  if (d_sub.rows != n || d_sub.cols != n)
    throw std::invalid_argument("ablation_metrics: distance block shape mismatch");
  Tensor Z = phi(m, holdout);
  Tensor Xr = phi_inverse(m, Z);
  AblationMetrics out;
  for (int i = 0; i < n; ++i) {
    out.eps_inv += (cm(holdout).row(i) - cm(Xr).row(i)).squaredNorm();
    double l1 = 0;
    for (int c = m.d_prime; c < Z.cols; ++c) l1 += std::abs(Z.at(i, c));
    out.eps_ld += l1 * l1;
    for (int j = 0; j < n; ++j) {
      double e = d_sub.at(i, j) - (cm(Z).row(i) - cm(Z).row(j)).norm();
      out.eps_iso += e * e;
    }
  }
  out.eps_inv /= n;
  out.eps_ld /= n;
  out.eps_iso /= double(n) * n;
  return out;
}

namespace {

struct SeqCtx {
  const SequenceDataset* ds = nullptr;
  SequenceCodec codec;                   // table updated in place during training
  std::vector<std::vector<int>> rows;    // padded symbol rows per sequence
  Tensor pos;                            // max_len x emb_dim positional block
};

IsometryResult train_core(const Tensor& X, SeqCtx* seq, const DistanceMatrix& dm,
                          const IsometryTrainConfig& cfg, const std::vector<int>& train_idx,
                          const std::vector<int>& test_idx) {
  cfg.validate();
  int n = seq ? seq->ds->n() : X.rows;
  if (dm.n != n) throw std::invalid_argument("train_isometry: distance matrix size mismatch");
  if (train_idx.empty()) throw std::invalid_argument("train_isometry: empty training split");
  for (int i : train_idx)
    if (i < 0 || i >= n) throw std::out_of_range("train_isometry: train index out of range");
  for (int i : test_idx)
    if (i < 0 || i >= n) throw std::out_of_range("train_isometry: test index out of range");

  int d = seq ? seq->codec.d() : X.cols;
  if (cfg.d_prime > d) throw std::invalid_argument("isometry config: d_prime exceeds data dim");

  // frozen centering mean from the initial encoding of the training split
  Tensor mu;
  if (seq) {
    std::vector<std::string> train_seqs;
    for (int i : train_idx) train_seqs.push_back(seq->ds->seqs[i]);
    mu = mean_row(seq->codec.encode_all(train_seqs));
  } else {
    mu = mean_row(gather(X, train_idx));
  }

  Rng base(cfg.seed);
  Rng init_rng = base.substream(0);
  Rng perm_rng = base.substream(1);
  Rng eps_rng = base.substream(2);
  Rng test_eps_rng = base.substream(3);

  MlpParams field = make_mlp(d + kTimeEmbedDim, cfg.hidden, cfg.layers, d, init_rng,
                             cfg.init_scale, true);

  std::vector<Tensor*> params;
  for (size_t l = 0; l < field.W.size(); ++l) {
    params.push_back(&field.W[l]);
    params.push_back(&field.b[l]);
  }
  if (seq) params.push_back(&seq->codec.table);

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

  Tensor centered_X;        // pointcloud path only
  if (!seq) centered_X = center(X, mu);
  Tensor test_dm = test_idx.empty() ? Tensor() : restrict_dm(dm, test_idx);
  Tensor mu_tile_test, pos_tile_test, mu_tile_batch, pos_tile_batch;
  if (seq) {
    pos_tile_batch = tile_rows(seq->pos, bsz);
    mu_tile_batch = tile_rows(mu, bsz);
    if (!test_idx.empty()) {
      pos_tile_test = tile_rows(seq->pos, int(test_idx.size()));
      mu_tile_test = tile_rows(mu, int(test_idx.size()));
    }
  }

  Tape tape;
  EmbedCache cache;

  // builds the centered batch node; in sequence mode the batch flows from the
  // trainable table so the embedding learns jointly with the field
  auto push_batch = [&](const std::vector<int>& rows, int table_node, const Tensor& pos_tile,
                        const Tensor& mu_tile) {
    if (!seq) return tape.input(gather(centered_X, rows), false);
    std::vector<int> flat;
    flat.reserve(rows.size() * size_t(seq->codec.max_len));
    for (int r : rows) flat.insert(flat.end(), seq->rows[r].begin(), seq->rows[r].end());
    int g = tape.gather_rows(table_node, std::move(flat));
    g = tape.add(g, tape.input(pos_tile, false));
    g = tape.reshape(g, int(rows.size()), d);
    return tape.sub(g, tape.input(mu_tile, false));
  };

  struct Parts {
    double l1 = 0, l2 = 0, l3 = 0, l4 = 0;
    double total() const { return l1 + l2 + l3 + l4; }
  };

  // builds the full loss graph; returns root node (-1 when every weight is 0)
  auto build_loss = [&](const std::vector<int>& rows, const Tensor& d_sub, double w1, double w2,
                        int table_node, const Tensor& pos_tile, const Tensor& mu_tile,
                        const MlpNodes& fnodes, Rng& erng, Parts& parts) {
    int x = push_batch(rows, table_node, pos_tile, mu_tile);
    std::vector<int> states;
    int z = ode_solve_tape(tape, fnodes, x, cfg.n_steps, cache, &states);
    int root = -1;
    auto add_term = [&](int node, double w, double& slot) {
      slot = w * tape.value(node);
      int sn = tape.scale(node, w);
      root = root < 0 ? sn : tape.add(root, sn);
    };
    if (w1 != 0) add_term(loss_global_isometry_node(tape, z, d_sub), w1, parts.l1);
    if (w2 != 0) add_term(loss_graph_matching_node(tape, z, d_sub), w2, parts.l2);
    if (cfg.alpha3 != 0) add_term(loss_submanifold_node(tape, z, cfg.d_prime), cfg.alpha3, parts.l3);
    if (cfg.alpha4 != 0)
      add_term(loss_stability_node(tape, fnodes, states, cfg.n_steps, d, erng), cfg.alpha4,
               parts.l4);
    return root;
  };

  TrainReport report;
  std::vector<Tensor> best_params;
  bool have_best = false;
  double best_loss = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double w1 = epoch < cfg.warmup_epochs ? 0.0 : cfg.alpha1;
    double w2 = epoch < cfg.warmup_epochs ? 0.0 : cfg.alpha2;
    std::vector<int> perm = perm_rng.permutation(n_train);

    EpochLog log;
    log.epoch = epoch;
    log.lr = opt.current_lr();

    for (int bi = 0; bi < n_batches; ++bi) {
      std::vector<int> rows(bsz);
      for (int j = 0; j < bsz; ++j) rows[j] = train_idx[perm[bi * bsz + j]];
      Tensor d_sub = restrict_dm(dm, rows);

      tape.clear();
      cache.reset();
      MlpNodes fnodes = push_mlp(tape, field, true);
      int table_node = seq ? tape.input(seq->codec.table, true) : -1;

      Parts parts;
      int root;
      try {
        root = build_loss(rows, d_sub, w1, w2, table_node, pos_tile_batch, mu_tile_batch, fnodes,
                          eps_rng, parts);
      } catch (const std::exception& e) {
        throw std::runtime_error("train_isometry: epoch " + std::to_string(epoch) + " batch " +
                                 std::to_string(bi) + ": " + e.what());
      }
      double total = parts.total();
      if (!std::isfinite(total))
        throw std::runtime_error("train_isometry: non-finite loss at epoch " +
                                 std::to_string(epoch) + " batch " + std::to_string(bi));
      log.train_l1 += parts.l1;
      log.train_l2 += parts.l2;
      log.train_l3 += parts.l3;
      log.train_l4 += parts.l4;

      if (root >= 0) {
        tape.backward(root);
        std::vector<Tensor> grad_store;
        grad_store.reserve(params.size());
        auto take = [&](int id, const Tensor& like) {
          const Tensor& g = tape.grad(id);
          grad_store.push_back(g.same_shape(like) ? g : Tensor(like.rows, like.cols));
        };
        for (size_t l = 0; l < field.W.size(); ++l) {
          take(fnodes.W[l], field.W[l]);
          take(fnodes.b[l], field.b[l]);
        }
        if (seq) take(table_node, seq->codec.table);
        std::vector<const Tensor*> gp;
        for (const Tensor& g : grad_store) gp.push_back(&g);
        opt.step(params, gp);
      }
    }
    log.train_l1 /= n_batches;
    log.train_l2 /= n_batches;
    log.train_l3 /= n_batches;
    log.train_l4 /= n_batches;
    log.train_total = log.train_l1 + log.train_l2 + log.train_l3 + log.train_l4;

    if (!test_idx.empty()) {
      tape.clear();
      cache.reset();
      MlpNodes fnodes = push_mlp(tape, field, false);
      int table_node = seq ? tape.input(seq->codec.table, false) : -1;
      Parts parts;
      // validation always scores the post-warmup objective
      build_loss(test_idx, test_dm, cfg.alpha1, cfg.alpha2, table_node, pos_tile_test,
                 mu_tile_test, fnodes, test_eps_rng, parts);
      log.test_l1 = parts.l1;
      log.test_l2 = parts.l2;
      log.test_l3 = parts.l3;
      log.test_l4 = parts.l4;
      log.test_total = parts.total();
      if (!std::isfinite(log.test_total))
        throw std::runtime_error("train_isometry: non-finite validation loss at epoch " +
                                 std::to_string(epoch));
      if (!have_best || log.test_total < best_loss) {
        have_best = true;
        best_loss = log.test_total;
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
    report.best_test_loss = best_loss;
  } else if (cfg.epochs > 0) {
    report.best_epoch = cfg.epochs - 1;
  }

  IsometryResult out;
  out.model.field = field;
  out.model.mu = mu;
  out.model.d = d;
  out.model.d_prime = cfg.d_prime;
  out.model.n_steps = cfg.n_steps;
  if (seq) out.codec = seq->codec;

  if (!test_idx.empty()) {
    Tensor holdout;
    if (seq) {
      std::vector<std::string> test_seqs;
      for (int i : test_idx) test_seqs.push_back(seq->ds->seqs[i]);
      holdout = seq->codec.encode_all(test_seqs);
    } else {
      holdout = gather(X, test_idx);
    }
    AblationMetrics m = ablation_metrics(out.model, holdout, test_dm);
    report.eps_inv = m.eps_inv;
    report.eps_ld = m.eps_ld;
    report.eps_iso = m.eps_iso;
  }
  out.report = report;
  return out;
}

}  // namespace

IsometryResult train_isometry(const PointCloud& data, const DistanceMatrix& dm,
                              const IsometryTrainConfig& cfg, const std::vector<int>& train_idx,
                              const std::vector<int>& test_idx) {
  return train_core(data.X, nullptr, dm, cfg, train_idx, test_idx);
}

IsometryResult train_isometry_seq(const SequenceDataset& ds, const SequenceCodec& codec,
                                  const DistanceMatrix& dm, const IsometryTrainConfig& cfg,
                                  const std::vector<int>& train_idx,
                                  const std::vector<int>& test_idx) {
  SeqCtx ctx;
  ctx.ds = &ds;
  ctx.codec = codec;
  ctx.rows.reserve(ds.seqs.size());
  for (const std::string& s : ds.seqs) ctx.rows.push_back(codec.padded_rows(s));
  ctx.pos = positional_embedding(codec.max_len, codec.emb_dim);
  return train_core(Tensor(), &ctx, dm, cfg, train_idx, test_idx);
}

}  // namespace pfm
