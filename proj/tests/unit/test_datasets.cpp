#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "pfm/datasets.hpp"

using namespace pfm;

TEST_CASE("noise-free arch points lie on the unit half circle") {
  Rng rng(1);
  PointCloud pc = gen_arch(200, 0.0, rng);
  REQUIRE(pc.n() == 200);
  REQUIRE(pc.d() == 2);
  for (int i = 0; i < pc.n(); ++i) {
    double y1 = pc.X.at(i, 0), y2 = pc.X.at(i, 1);
    CHECK(std::hypot(y1, y2) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(y2 >= 0.0);  // upper half: cos(pi x / 2) >= 0 for x in [-1, 1]
    CHECK(y1 >= -1.0);
    CHECK(y1 <= 1.0);
  }
}

TEST_CASE("arch parameterization endpoints") {
  // x = 0 -> (0, 1), x = 1 -> (1, 0): check via a zero-noise cloud's extremes
  Rng rng(2);
  PointCloud pc = gen_arch(2000, 0.0, rng);
  double max_y1 = -2, max_y2 = -2;
  for (int i = 0; i < pc.n(); ++i) {
    max_y1 = std::max(max_y1, pc.X.at(i, 0));
    max_y2 = std::max(max_y2, pc.X.at(i, 1));
  }
  CHECK(max_y1 == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(max_y2 == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("noisy arch keeps a small mean radial residual") {
  Rng rng(3);
  PointCloud pc = gen_arch(500, 0.1, rng);
  double acc = 0;
  for (int i = 0; i < pc.n(); ++i)
    acc += std::abs(std::hypot(pc.X.at(i, 0), pc.X.at(i, 1)) - 1.0);
  CHECK(acc / pc.n() < 0.15);
}

TEST_CASE("arch generation is deterministic and rejects bad n") {
  Rng a(7), b(7);
  PointCloud p1 = gen_arch(50, 0.1, a);
  PointCloud p2 = gen_arch(50, 0.1, b);
  for (size_t i = 0; i < p1.X.data.size(); ++i) CHECK(p1.X.data[i] == p2.X.data[i]);
  Rng c(7);
  CHECK_THROWS_AS(gen_arch(0, 0.1, c), std::invalid_argument);
}

TEST_CASE("swiss point follows the parameterization") {
  double p[3];
  swiss_point(3.0, 7.0, p);
  CHECK(p[0] == 3.0 * std::cos(3.0));
  CHECK(p[1] == 7.0);
  CHECK(p[2] == 3.0 * std::sin(3.0));
}

TEST_CASE("default swiss rotation is orthonormal with determinant one") {
  Tensor r = default_swiss_rotation();
  REQUIRE(r.rows == 3);
  REQUIRE(r.cols == 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dot = 0;
      for (int k = 0; k < 3; ++k) dot += r.at(k, i) * r.at(k, j);
      CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-14));
    }
  double det = r.at(0, 0) * (r.at(1, 1) * r.at(2, 2) - r.at(1, 2) * r.at(2, 1)) -
               r.at(0, 1) * (r.at(1, 0) * r.at(2, 2) - r.at(1, 2) * r.at(2, 0)) +
               r.at(0, 2) * (r.at(1, 0) * r.at(2, 1) - r.at(1, 1) * r.at(2, 0));
  CHECK(det == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("rotation preserves norms of swiss roll samples") {
  Tensor eye(3, 3);
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Rng a(11), b(11);
  PointCloud plain = gen_swiss_roll(100, 0.0, eye, a);
  PointCloud rotated = gen_swiss_roll(100, 0.0, default_swiss_rotation(), b);
  for (int i = 0; i < 100; ++i) {
    double n1 = 0, n2 = 0;
    for (int c = 0; c < 3; ++c) {
      n1 += plain.X.at(i, c) * plain.X.at(i, c);
      n2 += rotated.X.at(i, c) * rotated.X.at(i, c);
    }
    CHECK(std::sqrt(n1) == doctest::Approx(std::sqrt(n2)).epsilon(1e-12));
  }
  // unrotated coordinates obey the parameter ranges
  const double pi = 3.14159265358979323846;
  for (int i = 0; i < 100; ++i) {
    double radius = std::hypot(plain.X.at(i, 0), plain.X.at(i, 2));
    CHECK(radius >= 1.5 * pi - 1e-9);
    CHECK(radius <= 4.5 * pi + 1e-9);
    CHECK(plain.X.at(i, 1) >= 0.0);
    CHECK(plain.X.at(i, 1) <= 10.0);
  }
}

TEST_CASE("swiss roll is deterministic and validates inputs") {
  Rng a(4), b(4);
  Tensor r = default_swiss_rotation();
  PointCloud p1 = gen_swiss_roll(30, 0.05, r, a);
  PointCloud p2 = gen_swiss_roll(30, 0.05, r, b);
  for (size_t i = 0; i < p1.X.data.size(); ++i) CHECK(p1.X.data[i] == p2.X.data[i]);
  Rng c(4);
  CHECK_THROWS_AS(gen_swiss_roll(10, 0.0, Tensor(2, 3), c), std::invalid_argument);
  CHECK_THROWS_AS(gen_swiss_roll(0, 0.0, r, c), std::invalid_argument);
}

TEST_CASE("split indices are disjoint, exhaustive and deterministic") {
  auto [train, test] = split_indices(10, 0.8, 123);
  CHECK(train.size() == 8);
  CHECK(test.size() == 2);
  CHECK(std::is_sorted(train.begin(), train.end()));
  CHECK(std::is_sorted(test.begin(), test.end()));
  std::set<int> all(train.begin(), train.end());
  all.insert(test.begin(), test.end());
  CHECK(all.size() == 10);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 9);

  auto [train2, test2] = split_indices(10, 0.8, 123);
  CHECK(train == train2);
  CHECK(test == test2);
  auto [train3, test3] = split_indices(10, 0.8, 124);
  CHECK(train != train3);

  CHECK_THROWS_AS(split_indices(10, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(split_indices(10, 1.0, 1), std::invalid_argument);

  auto [tr500, te500] = split_indices(500, 0.8, 0);
  CHECK(tr500.size() == 400);
  CHECK(te500.size() == 100);
}

TEST_CASE("point cloud CSV round trip is exact") {
  Rng rng(21);
  PointCloud pc;
  pc.X = Tensor(17, 3);
  rng.fill_normal(pc.X, 2.5);
  std::string path = "/tmp/pfm_test_pc.csv";
  save_pointcloud_csv(pc, path);
  PointCloud r = load_pointcloud_csv(path);
  REQUIRE(r.n() == 17);
  REQUIRE(r.d() == 3);
  for (size_t i = 0; i < pc.X.data.size(); ++i) CHECK(r.X.data[i] == pc.X.data[i]);
}

TEST_CASE("malformed point cloud CSVs are rejected") {
  std::string path = "/tmp/pfm_test_bad.csv";
  atomic_write_file(path, "1.0,2.0\n3.0\n");
  CHECK_THROWS_WITH_AS(load_pointcloud_csv(path), doctest::Contains("ragged"), std::runtime_error);
  atomic_write_file(path, "");
  CHECK_THROWS_WITH_AS(load_pointcloud_csv(path), doctest::Contains("empty"), std::runtime_error);
}

TEST_CASE("sequence CSV round trip preserves ids, sequences and activity") {
  SequenceDataset ds;
  ds.seqs = {"AGKW", "KKA", ""};
  ds.ids = {"a1", "a2", "a3"};
  ds.activity = {0.5, -1.25, 3.0};
  std::string path = "/tmp/pfm_test_seq.csv";
  save_sequence_csv(ds, path);
  SequenceDataset r = load_sequence_csv(path);
  CHECK(r.seqs == ds.seqs);
  CHECK(r.ids == ds.ids);
  REQUIRE(r.activity.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(r.activity[i] == ds.activity[i]);

  SUBCASE("activity column is optional") {
    ds.activity.clear();
    save_sequence_csv(ds, path);
    SequenceDataset r2 = load_sequence_csv(path);
    CHECK(r2.seqs == ds.seqs);
    CHECK(r2.activity.empty());
  }
}

TEST_CASE("sequence CSVs without the expected header are rejected") {
  std::string path = "/tmp/pfm_test_seq_bad.csv";
  atomic_write_file(path, "name,seq\nx,AG\n");
  CHECK_THROWS_WITH_AS(load_sequence_csv(path), doctest::Contains("header"), std::runtime_error);
  atomic_write_file(path, "");
  CHECK_THROWS_WITH_AS(load_sequence_csv(path), doctest::Contains("empty"), std::runtime_error);
}

TEST_CASE("standardize scales the cloud to unit rms") {
  Rng rng(31);
  PointCloud pc;
  pc.X = Tensor(40, 3);
  rng.fill_normal(pc.X, 3.0);
  for (int i = 0; i < 40; ++i) pc.X.at(i, 1) += 10.0;  // off-center mean
  Tensor before = pc.X;
  double factor = standardize_pointcloud(pc);
  CHECK(factor > 0.0);
  // every coordinate is scaled by the same factor (shape preserving)
  for (size_t i = 0; i < pc.X.data.size(); ++i)
    CHECK(pc.X.data[i] == doctest::Approx(before.data[i] * factor).epsilon(1e-15));
  // rms of the standardized cloud is 1
  int n = pc.n(), d = pc.d();
  std::vector<double> mean(d, 0.0);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) mean[c] += pc.X.at(r, c);
  for (double& m : mean) m /= n;
  double ss = 0;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) {
      double diff = pc.X.at(r, c) - mean[c];
      ss += diff * diff;
    }
  CHECK(std::sqrt(ss / (double(n) * d)) == doctest::Approx(1.0).epsilon(1e-12));

  SUBCASE("a constant cloud is left unchanged") {
    PointCloud flat;
    flat.X = Tensor(5, 2, 4.0);
    CHECK(standardize_pointcloud(flat) == 1.0);
    for (double v : flat.X.data) CHECK(v == 4.0);
  }
}

TEST_CASE("synthetic sequences respect the length range and alphabet") {
  Rng rng(41);
  SequenceDataset ds = gen_synthetic_sequences(2000, 6, 10, "AGKW", rng);
  REQUIRE(ds.n() == 2000);
  CHECK(ds.ids[0] == "s0");
  CHECK(ds.ids[1999] == "s1999");
  std::vector<int> len_count(11, 0);
  for (const std::string& s : ds.seqs) {
    REQUIRE(s.size() >= 6);
    REQUIRE(s.size() <= 10);
    ++len_count[s.size()];
    for (char c : s) CHECK(std::string("AGKW").find(c) != std::string::npos);
  }
  // lengths are roughly uniform over {6..10}
  for (int l = 6; l <= 10; ++l) {
    CHECK(len_count[l] > 300);
    CHECK(len_count[l] < 500);
  }

  Rng r2(41);
  SequenceDataset ds2 = gen_synthetic_sequences(2000, 6, 10, "AGKW", r2);
  CHECK(ds2.seqs == ds.seqs);

  Rng r3(41);
  CHECK_THROWS_AS(gen_synthetic_sequences(10, 0, 5, "AG", r3), std::invalid_argument);
  CHECK_THROWS_AS(gen_synthetic_sequences(10, 5, 4, "AG", r3), std::invalid_argument);
  CHECK_THROWS_AS(gen_synthetic_sequences(10, 1, 5, "", r3), std::invalid_argument);
}
