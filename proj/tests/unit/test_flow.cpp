#include "doctest.h"

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "pfm/datasets.hpp"
#include "pfm/diffeo.hpp"
#include "pfm/flow.hpp"
#include "pfm/nn.hpp"
#include "pfm/ode.hpp"
#include "pfm/rng.hpp"
#include "pfm/tensor.hpp"

using namespace pfm;

namespace {

// zero final layer makes the field vanish, so phi(x) = x - mu exactly
DiffeoModel identity_diffeo(int d, int d_prime, double mu_fill) {
  Rng r(0);
  DiffeoModel m;
  m.field = make_mlp(d + kTimeEmbedDim, 4, 1, d, r, 0.05, true);
  m.mu = Tensor(1, d, mu_fill);
  m.d = d;
  m.d_prime = d_prime;
  m.n_steps = 4;
  return m;
}

DiffeoModel random_diffeo(uint64_t seed, int d, int d_prime) {
  Rng r(seed);
  DiffeoModel m;
  m.field = make_mlp(d + kTimeEmbedDim, 8, 2, d, r, 0.3, false);
  m.mu = Tensor(1, d);
  r.fill_uniform(m.mu, -0.2, 0.2);
  m.d = d;
  m.d_prime = d_prime;
  m.n_steps = 5;
  return m;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.rows == b.rows && a.cols == b.cols &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

struct FlowFixture {
  PointCloud cloud;
  std::vector<int> train_idx, test_idx;
  FlowFixture() {
    Rng r(6);
    cloud = gen_arch(24, 0.05, r);
    auto sp = split_indices(24, 0.75, 5);
    train_idx = sp.first;
    test_idx = sp.second;
  }
};

FlowTrainConfig tiny_flow_config(const std::string& mode) {
  FlowTrainConfig cfg;
  cfg.mode = mode;
  cfg.epochs = 5;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-3;
  cfg.hidden = 8;
  cfg.layers = 2;
  cfg.n_simulation_steps = 4;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("cfm target matches the closed form and is constant along the path") {
  Tensor x0(1, 2), x1(1, 2);
  x0.at(0, 0) = 1.0;
  x0.at(0, 1) = 2.0;
  x1.at(0, 0) = 3.0;
  x1.at(0, 1) = 4.0;

  auto [xt, ut] = cfm_target(x0, x1, 0.5, 0.1);
  CHECK(xt.at(0, 0) == doctest::Approx(2.05).epsilon(1e-15));
  CHECK(xt.at(0, 1) == doctest::Approx(3.1).epsilon(1e-15));
  CHECK(ut.at(0, 0) == doctest::Approx(2.1).epsilon(1e-15));
  CHECK(ut.at(0, 1) == doctest::Approx(2.2).epsilon(1e-15));

  SUBCASE("endpoints") {
    auto [x_start, u0] = cfm_target(x0, x1, 0.0, 0.1);
    CHECK(same_bits(x_start, x0));
    auto [x_end, u1] = cfm_target(x0, x1, 1.0, 0.1);
    CHECK(x_end.at(0, 0) == doctest::Approx(0.1 * 1.0 + 3.0).epsilon(1e-15));
    CHECK(same_bits(u0, u1));
  }

  SUBCASE("velocity is constant in t and equals the path derivative") {
    Rng rng(3);
    Tensor a(4, 3), b(4, 3);
    rng.fill_normal(a);
    rng.fill_normal(b);
    auto [xt0, u_ref] = cfm_target(a, b, 0.37, 1e-4);
    for (double t : {0.0, 0.11, 0.5, 0.93, 1.0}) {
      auto [x_t, u_t] = cfm_target(a, b, t, 1e-4);
      for (int i = 0; i < u_t.size(); ++i)
        CHECK(std::abs(u_t.data[i] - u_ref.data[i]) < 1e-12);
    }
    const double h = 1e-5;
    auto [xp, up] = cfm_target(a, b, 0.37 + h, 1e-4);
    auto [xm, um] = cfm_target(a, b, 0.37 - h, 1e-4);
    for (int i = 0; i < u_ref.size(); ++i) {
      double fd = (xp.data[i] - xm.data[i]) / (2 * h);
      CHECK(fd == doctest::Approx(u_ref.data[i]).epsilon(1e-7));
    }
  }

  SUBCASE("domain rejections") {
    CHECK_THROWS_WITH_AS(cfm_target(x0, x1, 1.0, 0.0), doctest::Contains("collapses"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(cfm_target(x0, x1, 1.2, 0.1), doctest::Contains("outside"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(cfm_target(x0, x1, 0.5, 1.0), doctest::Contains("sigma_min"),
                         std::invalid_argument);
    Tensor bad(2, 2);
    CHECK_THROWS_WITH_AS(cfm_target(x0, bad, 0.5, 0.1), doctest::Contains("shape"),
                         std::invalid_argument);
  }
}

TEST_CASE("pfm target interpolates encoded endpoints linearly") {
  DiffeoModel m = random_diffeo(9, 3, 2);
  Rng rng(10);
  Tensor x0(4, 3), x1(4, 3);
  rng.fill_uniform(x0, -0.5, 0.5);
  rng.fill_uniform(x1, -0.5, 0.5);
  Tensor z0 = phi(m, x0);
  Tensor z1 = phi(m, x1);

  double t = 0.3;
  auto [zt, ut] = pfm_target(m, x0, x1, t, GeoSpace::Latent);
  REQUIRE(zt.cols == 3);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 3; ++c) {
      CHECK(zt.at(r, c) ==
            doctest::Approx((1 - t) * z0.at(r, c) + t * z1.at(r, c)).epsilon(1e-12));
      CHECK(ut.at(r, c) == doctest::Approx(z1.at(r, c) - z0.at(r, c)).epsilon(1e-12));
    }

  SUBCASE("velocity equals the finite-difference path derivative") {
    const double h = 1e-5;
    auto [zp, up] = pfm_target(m, x0, x1, t + h, GeoSpace::Latent);
    auto [zm, um] = pfm_target(m, x0, x1, t - h, GeoSpace::Latent);
    for (int i = 0; i < ut.size(); ++i) {
      double fd = (zp.data[i] - zm.data[i]) / (2 * h);
      CHECK(fd == doctest::Approx(ut.data[i]).epsilon(1e-6));
    }
  }

  SUBCASE("submanifold mode keeps the first d-prime coordinates") {
    auto [zs, us] = pfm_target(m, x0, x1, t, GeoSpace::Submanifold);
    REQUIRE(zs.cols == 2);
    REQUIRE(us.cols == 2);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 2; ++c) {
        CHECK(zs.at(r, c) == doctest::Approx(zt.at(r, c)).epsilon(1e-12));
        CHECK(us.at(r, c) == doctest::Approx(ut.at(r, c)).epsilon(1e-12));
      }
  }

  SUBCASE("rejections") {
    CHECK_THROWS_WITH_AS(pfm_target(m, x0, x1, t, GeoSpace::Data),
                         doctest::Contains("latent or submanifold"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(pfm_target(m, x0, x1, -0.1, GeoSpace::Latent),
                         doctest::Contains("outside"), std::invalid_argument);
  }
}

TEST_CASE("flow config validation names the offending field") {
  FlowTrainConfig cfg = tiny_flow_config("cfm");
  CHECK_NOTHROW(cfg.validate());
  SUBCASE("mode") {
    cfg.mode = "diffusion";
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("mode"), std::invalid_argument);
  }
  SUBCASE("sigma_min") {
    cfg.sigma_min = 1.0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("sigma_min"), std::invalid_argument);
  }
  SUBCASE("simulation steps") {
    cfg.n_simulation_steps = 0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("n_simulation_steps"),
                         std::invalid_argument);
  }
  SUBCASE("learning rate") {
    cfg.learning_rate = -1.0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("learning_rate"),
                         std::invalid_argument);
  }
}

TEST_CASE("flow trainer is bitwise deterministic") {
  FlowFixture fx;
  FlowTrainConfig cfg = tiny_flow_config("cfm");
  FlowResult a = train_flow(fx.cloud, nullptr, cfg, fx.train_idx, fx.test_idx);
  FlowResult b = train_flow(fx.cloud, nullptr, cfg, fx.train_idx, fx.test_idx);

  REQUIRE(a.model.vt.layers() == b.model.vt.layers());
  for (int l = 0; l < a.model.vt.layers(); ++l) {
    CHECK(same_bits(a.model.vt.W[l], b.model.vt.W[l]));
    CHECK(same_bits(a.model.vt.b[l], b.model.vt.b[l]));
  }
  CHECK(a.report.best_epoch == b.report.best_epoch);
  CHECK(a.report.best_test_mse == b.report.best_test_mse);
  REQUIRE(a.report.history.size() == b.report.history.size());
  for (size_t i = 0; i < a.report.history.size(); ++i) {
    CHECK(a.report.history[i].train_mse == b.report.history[i].train_mse);
    CHECK(a.report.history[i].test_mse == b.report.history[i].test_mse);
  }

  SUBCASE("early stopping restores the minimum validation mse") {
    double best = a.report.history[0].test_mse;
    int last_best = -1;
    for (size_t i = 0; i < a.report.history.size(); ++i) {
      best = std::min(best, a.report.history[i].test_mse);
      if (a.report.history[i].is_best) last_best = int(i);
    }
    CHECK(a.report.best_test_mse == best);
    CHECK(a.report.best_epoch == last_best);
  }
}

TEST_CASE("flow trainer wires the three modes to their operating spaces") {
  FlowFixture fx;
  DiffeoModel dm = random_diffeo(14, 2, 1);

  SUBCASE("cfm trains in data space without a diffeo") {
    FlowResult r = train_flow(fx.cloud, nullptr, tiny_flow_config("cfm"), fx.train_idx,
                              fx.test_idx);
    CHECK(r.model.space == GeoSpace::Data);
    CHECK(r.model.dim == 2);
    CHECK(r.model.diffeo_hash.empty());
  }
  SUBCASE("pfm trains in the full latent") {
    FlowResult r = train_flow(fx.cloud, &dm, tiny_flow_config("pfm"), fx.train_idx, fx.test_idx);
    CHECK(r.model.space == GeoSpace::Latent);
    CHECK(r.model.dim == 2);
    CHECK(r.model.diffeo_hash.size() == 64);
  }
  SUBCASE("dprime_pfm trains on the chart") {
    FlowResult r = train_flow(fx.cloud, &dm, tiny_flow_config("dprime_pfm"), fx.train_idx,
                              fx.test_idx);
    CHECK(r.model.space == GeoSpace::Submanifold);
    CHECK(r.model.dim == 1);
    CHECK(r.model.vt.in_dim() == 1 + kTimeEmbedDim);
  }
  SUBCASE("latent modes require a diffeo") {
    CHECK_THROWS_WITH_AS(
        train_flow(fx.cloud, nullptr, tiny_flow_config("pfm"), fx.train_idx, fx.test_idx),
        doctest::Contains("needs a diffeo"), std::invalid_argument);
  }
  SUBCASE("diffeo dimension must match the data") {
    DiffeoModel wrong = random_diffeo(15, 3, 1);
    CHECK_THROWS_WITH_AS(
        train_flow(fx.cloud, &wrong, tiny_flow_config("pfm"), fx.train_idx, fx.test_idx),
        doctest::Contains("does not match"), std::invalid_argument);
  }
  SUBCASE("split validation") {
    CHECK_THROWS_WITH_AS(train_flow(fx.cloud, nullptr, tiny_flow_config("cfm"), {}, fx.test_idx),
                         doctest::Contains("empty training split"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(
        train_flow(fx.cloud, nullptr, tiny_flow_config("cfm"), {0, 99}, fx.test_idx),
        doctest::Contains("train index"), std::out_of_range);
  }
}

TEST_CASE("chart flow is far smaller than the ambient flow at reference widths") {
  // reference widths: ambient and latent flows use 64 hidden units, the chart
  // flow 16; ten hidden layers each
  Rng r1(1), r2(2);
  MlpParams ambient = make_mlp(2 + kTimeEmbedDim, 64, 10, 2, r1, 1.0, true);
  MlpParams chart = make_mlp(1 + kTimeEmbedDim, 16, 10, 1, r2, 1.0, true);
  CHECK(ambient.n_params() == 38786);
  CHECK(chart.n_params() == 2753);
  CHECK(5 * chart.n_params() < ambient.n_params());
}

TEST_CASE("zero-field flow transports the base draw unchanged") {
  FlowFixture fx;
  FlowTrainConfig cfg = tiny_flow_config("cfm");
  cfg.epochs = 0;  // zero-initialized final layer leaves the field at zero
  FlowResult r = train_flow(fx.cloud, nullptr, cfg, fx.train_idx, fx.test_idx);

  Rng s1(4), s2(4);
  Tensor out = flow_sample(r.model, nullptr, 5, s1);
  Tensor z0(5, 2);
  s2.fill_normal(z0);
  CHECK(same_bits(out, z0));

  SUBCASE("latent decode adds the frozen mean back") {
    DiffeoModel dm = identity_diffeo(2, 1, 0.75);
    FlowTrainConfig pcfg = tiny_flow_config("pfm");
    pcfg.epochs = 0;
    FlowResult pr = train_flow(fx.cloud, &dm, pcfg, fx.train_idx, fx.test_idx);
    Rng s3(4), s4(4);
    Tensor pout = flow_sample(pr.model, &dm, 5, s3);
    Tensor base(5, 2);
    s4.fill_normal(base);
    for (int i = 0; i < pout.size(); ++i)
      CHECK(pout.data[i] == doctest::Approx(base.data[i] + 0.75).epsilon(1e-14));
  }

  SUBCASE("chart decode zero-pads the dropped coordinates") {
    DiffeoModel dm3 = identity_diffeo(3, 1, 0.25);
    PointCloud pc3;
    pc3.X = Tensor(12, 3);
    Rng r3(8);
    r3.fill_uniform(pc3.X, -1.0, 1.0);
    FlowTrainConfig scfg = tiny_flow_config("dprime_pfm");
    scfg.epochs = 0;
    FlowResult sr = train_flow(pc3, &dm3, scfg, {0, 1, 2, 3, 4, 5, 6, 7}, {8, 9, 10, 11});
    REQUIRE(sr.model.dim == 1);
    Rng s5(4), s6(4);
    Tensor sout = flow_sample(sr.model, &dm3, 6, s5);
    Tensor base(6, 1);
    s6.fill_normal(base);
    REQUIRE(sout.cols == 3);
    for (int i = 0; i < 6; ++i) {
      CHECK(sout.at(i, 0) == doctest::Approx(base.at(i, 0) + 0.25).epsilon(1e-14));
      CHECK(sout.at(i, 1) == doctest::Approx(0.25).epsilon(1e-14));
      CHECK(sout.at(i, 2) == doctest::Approx(0.25).epsilon(1e-14));
    }
  }
}

TEST_CASE("flow sampling is deterministic and validates inputs") {
  FlowFixture fx;
  FlowTrainConfig cfg = tiny_flow_config("cfm");
  FlowResult r = train_flow(fx.cloud, nullptr, cfg, fx.train_idx, fx.test_idx);

  Rng s1(21), s2(21);
  Tensor a = flow_sample(r.model, nullptr, 7, s1);
  Tensor b = flow_sample(r.model, nullptr, 7, s2);
  CHECK(same_bits(a, b));
  CHECK(a.rows == 7);
  CHECK(a.cols == 2);
  CHECK(a.all_finite());

  CHECK_THROWS_WITH_AS(flow_sample(r.model, nullptr, 0, s1), doctest::Contains("n must be"),
                       std::invalid_argument);
}

TEST_CASE("trajectory frames agree with single-pass integration on the grid") {
  FlowFixture fx;
  FlowTrainConfig cfg = tiny_flow_config("cfm");
  cfg.n_simulation_steps = 8;
  cfg.epochs = 3;
  FlowResult r = train_flow(fx.cloud, nullptr, cfg, fx.train_idx, fx.test_idx);

  Tensor z0(5, 2);
  Rng rng(33);
  rng.fill_normal(z0);

  // segs = 4 and segs = 8 both divide n_steps = 8, so every frame set comes
  // from the same one-pass integration
  std::vector<Tensor> f5 = flow_trajectory(r.model, nullptr, z0, 5);
  std::vector<Tensor> f9 = flow_trajectory(r.model, nullptr, z0, 9);
  REQUIRE(f5.size() == 5);
  REQUIRE(f9.size() == 9);
  CHECK(same_bits(f5.front(), z0));
  CHECK(same_bits(f9.front(), z0));
  CHECK(same_bits(f5.back(), f9.back()));
  for (int k = 0; k < 5; ++k) CHECK(same_bits(f5[size_t(k)], f9[size_t(2 * k)]));

  // endpoint equals the sample integration of the same draw
  auto f = [&](const Tensor& z, double t) { return mlp_eval(r.model.vt, z, true, t); };
  Tensor z1 = rk4_integrate(f, z0, 0.0, 1.0, 8);
  CHECK(same_bits(f5.back(), z1));

  SUBCASE("non-divisible frame count still covers both endpoints") {
    std::vector<Tensor> f4 = flow_trajectory(r.model, nullptr, z0, 4);
    REQUIRE(f4.size() == 4);
    CHECK(same_bits(f4.front(), z0));
    for (const Tensor& fr : f4) CHECK(fr.all_finite());
  }

  SUBCASE("rejections") {
    CHECK_THROWS_WITH_AS(flow_trajectory(r.model, nullptr, z0, 1), doctest::Contains("n_times"),
                         std::invalid_argument);
    Tensor wide(5, 3);
    CHECK_THROWS_WITH_AS(flow_trajectory(r.model, nullptr, wide, 3),
                         doctest::Contains("width mismatch"), std::invalid_argument);
  }
}

TEST_CASE("latent flows are bound to the diffeomorphism they trained in") {
  FlowFixture fx;
  DiffeoModel dm = identity_diffeo(2, 1, 0.5);
  FlowResult r = train_flow(fx.cloud, &dm, tiny_flow_config("pfm"), fx.train_idx, fx.test_idx);

  Rng rng(2);
  CHECK_NOTHROW(flow_sample(r.model, &dm, 3, rng));

  DiffeoModel other = identity_diffeo(2, 1, 0.6);
  CHECK_THROWS_WITH_AS(flow_sample(r.model, &other, 3, rng), doctest::Contains("does not match"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(flow_sample(r.model, nullptr, 3, rng),
                       doctest::Contains("needs a diffeomorphism"), std::invalid_argument);

  SUBCASE("the binding survives serialization") {
    save_flow(r.model, "/tmp/pfm_test_flow_bound.json");
    FlowModel loaded = load_flow("/tmp/pfm_test_flow_bound.json");
    CHECK_NOTHROW(flow_sample(loaded, &dm, 3, rng));
    CHECK_THROWS_WITH_AS(flow_sample(loaded, &other, 3, rng), doctest::Contains("does not match"),
                         std::runtime_error);
  }
}

TEST_CASE("flow serialization round trips bitwise") {
  FlowFixture fx;
  FlowTrainConfig cfg = tiny_flow_config("cfm");
  FlowResult r = train_flow(fx.cloud, nullptr, cfg, fx.train_idx, fx.test_idx);
  r.model.config_hash = "cafe01";

  save_flow(r.model, "/tmp/pfm_test_flow.json");
  FlowModel loaded = load_flow("/tmp/pfm_test_flow.json");

  CHECK(loaded.space == r.model.space);
  CHECK(loaded.dim == r.model.dim);
  CHECK(loaded.sigma_min == r.model.sigma_min);
  CHECK(loaded.n_steps == r.model.n_steps);
  CHECK(loaded.config_hash == "cafe01");
  REQUIRE(loaded.vt.layers() == r.model.vt.layers());
  for (int l = 0; l < loaded.vt.layers(); ++l) {
    CHECK(same_bits(loaded.vt.W[l], r.model.vt.W[l]));
    CHECK(same_bits(loaded.vt.b[l], r.model.vt.b[l]));
  }

  // identical integration after reload
  Rng s1(5), s2(5);
  CHECK(same_bits(flow_sample(r.model, nullptr, 4, s1), flow_sample(loaded, nullptr, 4, s2)));

  SUBCASE("wrong kind is rejected") {
    json j = flow_to_json(r.model);
    j["kind"] = "mystery";
    CHECK_THROWS_WITH_AS(flow_from_json(j), doctest::Contains("not a flow file"),
                         std::runtime_error);
  }
  SUBCASE("model validation catches inconsistent widths") {
    json j = flow_to_json(r.model);
    j["dim"] = 3;
    CHECK_THROWS_WITH_AS(flow_from_json(j), doctest::Contains("width"), std::invalid_argument);
  }
}
