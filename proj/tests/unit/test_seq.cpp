#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "pfm/rng.hpp"
#include "pfm/seq.hpp"

using namespace pfm;

namespace {

// Full-matrix DP oracle with traceback: returns the edit script length and
// verifies the script actually transforms a into b.
int lev_oracle(const std::string& a, const std::string& b) {
  int na = int(a.size()), nb = int(b.size());
  std::vector<std::vector<int>> dp(na + 1, std::vector<int>(nb + 1, 0));
  for (int i = 0; i <= na; ++i) dp[i][0] = i;
  for (int j = 0; j <= nb; ++j) dp[0][j] = j;
  for (int i = 1; i <= na; ++i)
    for (int j = 1; j <= nb; ++j)
      dp[i][j] = std::min({dp[i - 1][j] + 1, dp[i][j - 1] + 1,
                           dp[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
  // traceback: apply the recovered edits to a and count them
  std::string s = a;
  int i = na, j = nb, edits = 0;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && a[i - 1] == b[j - 1] && dp[i][j] == dp[i - 1][j - 1]) {
      --i, --j;
    } else if (i > 0 && j > 0 && dp[i][j] == dp[i - 1][j - 1] + 1) {
      s[i - 1] = b[j - 1];
      --i, --j, ++edits;
    } else if (i > 0 && dp[i][j] == dp[i - 1][j] + 1) {
      s.erase(i - 1, 1);
      --i, ++edits;
    } else {
      s.insert(i, 1, b[j - 1]);
      --j, ++edits;
    }
  }
  REQUIRE(s == b);
  REQUIRE(edits == dp[na][nb]);
  return dp[na][nb];
}

std::string random_seq(Rng& rng, int max_len) {
  static const std::string alpha = "AGKW";
  int len = int(rng.below(uint64_t(max_len + 1)));
  std::string s;
  for (int i = 0; i < len; ++i) s += alpha[rng.below(4)];
  return s;
}

PropertyConfig test_config() {
  return load_property_config(std::string(PFM_REPO_DIR) + "/configs/aa_properties.json");
}

}  // namespace

TEST_CASE("levenshtein matches the pinned examples") {
  CHECK(levenshtein("ACDE", "ACDE") == 0);
  CHECK(levenshtein("", "ACD") == 3);
  CHECK(levenshtein("ACD", "") == 3);
  CHECK(levenshtein("", "") == 0);
  CHECK(levenshtein("AG", "GA") == 2);
  CHECK(levenshtein("KITTEN", "SITTING") == 3);
}

TEST_CASE("levenshtein equals the traceback DP oracle on 50 random pairs") {
  Rng rng(2024);
  for (int t = 0; t < 50; ++t) {
    std::string a = random_seq(rng, 12), b = random_seq(rng, 12);
    CHECK(levenshtein(a, b) == lev_oracle(a, b));
  }
}

TEST_CASE("levenshtein satisfies metric axioms on 200 random triples") {
  Rng rng(77);
  for (int t = 0; t < 200; ++t) {
    std::string a = random_seq(rng, 10), b = random_seq(rng, 10), c = random_seq(rng, 10);
    int ab = levenshtein(a, b), ba = levenshtein(b, a);
    CHECK(ab == ba);
    CHECK(levenshtein(a, a) == 0);
    CHECK((ab == 0) == (a == b));
    CHECK(levenshtein(a, c) <= ab + levenshtein(b, c));
  }
}

TEST_CASE("property config ships all 20 canonical residues") {
  PropertyConfig cfg = test_config();
  const std::string canon = "ACDEFGHIKLMNPQRSTVWY";
  CHECK(cfg.alphabet == canon);
  for (char c : canon) {
    CHECK(cfg.hydropathy.count(c) == 1);
    std::string s(1, c);
    for (SeqProperty p : kAllSeqProperties) CHECK(std::isfinite(property_value(p, s, cfg)));
  }
  CHECK(cfg.pka_side.size() == 7);
  CHECK(cfg.helix_angle_deg == 100.0);
  CHECK_THROWS_AS(cfg.validate_sequence("AXG"), std::invalid_argument);
}

TEST_CASE("property values match independently computed oracles") {
  PropertyConfig cfg = test_config();
  // frozen from a hand calculation over the shipped tables
  CHECK(property_value(SeqProperty::Hydrophobicity, "AGKW", cfg) == doctest::Approx(-0.85).epsilon(1e-12));
  CHECK(property_value(SeqProperty::HydrophobicMoment, "AGKW", cfg) ==
        doctest::Approx(5.367119018911915).epsilon(1e-12));
  CHECK(property_value(SeqProperty::NetCharge, "AGKW", cfg) ==
        doctest::Approx(0.989813975948987).epsilon(1e-12));
  CHECK(property_value(SeqProperty::IsoelectricPoint, "AGKW", cfg) ==
        doctest::Approx(9.765003204345703).epsilon(1e-6));
  CHECK(property_value(SeqProperty::Length, "AGKW", cfg) == 4.0);

  // order matters only for the moment
  CHECK(property_value(SeqProperty::HydrophobicMoment, "KWAG", cfg) ==
        doctest::Approx(5.752422878503256).epsilon(1e-12));
  CHECK(property_distance(SeqProperty::Hydrophobicity, "AGKW", "KWAG", cfg) == 0.0);

  CHECK(property_value(SeqProperty::HydrophobicMoment, "GG", cfg) ==
        doctest::Approx(0.5142300877492315).epsilon(1e-12));
  CHECK(property_value(SeqProperty::NetCharge, "DKE", cfg) ==
        doctest::Approx(-1.0079644171501982).epsilon(1e-12));
  CHECK(property_value(SeqProperty::IsoelectricPoint, "DKE", cfg) ==
        doctest::Approx(3.9605445861816406).epsilon(1e-6));

  // empty-sequence conventions
  CHECK(property_value(SeqProperty::Hydrophobicity, "", cfg) == 0.0);
  CHECK(property_value(SeqProperty::NetCharge, "", cfg) == 0.0);
  CHECK(property_value(SeqProperty::IsoelectricPoint, "", cfg) == 7.0);
}

TEST_CASE("table-mean distance oracle from a two-letter table") {
  PropertyConfig cfg;
  cfg.hydropathy = {{'A', 1.0}, {'G', 0.0}};
  cfg.alphabet = "AG";
  CHECK(property_distance(SeqProperty::Hydrophobicity, "AA", "AG", cfg) == doctest::Approx(0.5));
  CHECK(property_distance(SeqProperty::Hydrophobicity, "AA", "AA", cfg) == 0.0);
  // all-equal table entries make the mean constant across same-length sequences
  cfg.hydropathy = {{'A', 2.0}, {'G', 2.0}};
  CHECK(property_distance(SeqProperty::Hydrophobicity, "AG", "GA", cfg) == 0.0);
  CHECK(property_distance(SeqProperty::Hydrophobicity, "AAA", "GGG", cfg) == 0.0);
}

TEST_CASE("net charge is strictly decreasing in pH and vanishes at the pI") {
  PropertyConfig cfg = test_config();
  for (const std::string s : {"GG", "DKE", "AGKW"}) {
    double prev = net_charge(s, cfg, 0.0);
    for (double ph = 0.5; ph <= 14.0; ph += 0.5) {
      double q = net_charge(s, cfg, ph);
      CHECK(q < prev);
      prev = q;
    }
    double pi = isoelectric_point(s, cfg);
    CHECK(std::abs(net_charge(s, cfg, pi)) < 1e-3);
  }
  // no ionizable side chains: termini alone give pI = (9 + 2) / 2 exactly
  CHECK(isoelectric_point("GG", cfg) == doctest::Approx(5.5).epsilon(1e-4));
}

TEST_CASE("composite distance matches the exhaustive hand oracle") {
  PropertyConfig cfg = test_config();
  std::vector<std::string> train = {"AG", "GK", "AGK"};
  CompositeNormalizers norm = fit_normalizers(train, cfg);
  CHECK(norm.lev_max == 2.0);
  CHECK(norm.prop_max[0] == doctest::Approx(2.8499999999999996).epsilon(1e-12));
  CHECK(norm.prop_max[1] == doctest::Approx(3.7030041412301147).epsilon(1e-12));
  CHECK(norm.prop_max[2] == doctest::Approx(0.9997049661479959).epsilon(1e-12));
  CHECK(norm.prop_max[3] == doctest::Approx(4.264984130859375).epsilon(1e-6));
  CHECK(norm.skipped.empty());
  CHECK(composite_distance("AG", "GK", cfg, norm) == doctest::Approx(4.523961390397683).epsilon(1e-9));
  CHECK(composite_distance("AG", "AGK", cfg, norm) == doctest::Approx(4.038011695906433).epsilon(1e-9));
  CHECK(composite_distance("AG", "AG", cfg, norm) == 0.0);

  SUBCASE("standardized terms reach exactly 1 on the max-attaining pair") {
    // over training pairs each term is <= its max, so each summand <= 1
    double best = 0;
    for (size_t i = 0; i < train.size(); ++i)
      for (size_t j = i + 1; j < train.size(); ++j) {
        double lev_term = levenshtein(train[i], train[j]) / norm.lev_max;
        CHECK(lev_term <= 1.0);
        best = std::max(best, lev_term);
      }
    CHECK(best == 1.0);
  }
}

TEST_CASE("composite distance is symmetric and satisfies the triangle inequality") {
  PropertyConfig cfg = test_config();
  Rng rng(15);
  std::vector<std::string> train;
  for (int i = 0; i < 8; ++i) train.push_back(random_seq(rng, 8));
  CompositeNormalizers norm = fit_normalizers(train, cfg);
  for (int t = 0; t < 100; ++t) {
    std::string a = random_seq(rng, 8), b = random_seq(rng, 8), c = random_seq(rng, 8);
    double ab = composite_distance(a, b, cfg, norm);
    CHECK(ab == composite_distance(b, a, cfg, norm));
    CHECK(composite_distance(a, c, cfg, norm) <= ab + composite_distance(b, c, cfg, norm) + 1e-12);
  }
}

TEST_CASE("constant terms are skipped by the normalizers") {
  PropertyConfig cfg = test_config();
  // same multiset of residues: mean, charge and pI all tie; moment and edit distance differ
  std::vector<std::string> train = {"AGK", "GAK"};
  CompositeNormalizers norm = fit_normalizers(train, cfg);
  CHECK(norm.lev_max == 2.0);
  CHECK(norm.prop_max[0] == 0.0);
  CHECK(norm.prop_max[1] > 0.0);
  CHECK(norm.prop_max[2] == 0.0);
  CHECK(norm.prop_max[3] == 0.0);
  REQUIRE(norm.skipped.size() == 3);
  CHECK(norm.skipped[0] == "hydrophobicity");
  CHECK(norm.skipped[1] == "net_charge");
  CHECK(norm.skipped[2] == "isoelectric_point");
  // skipped terms contribute nothing but the rest still count
  CHECK(composite_distance("AGK", "GAK", cfg, norm) > 0.0);

  // identical training sequences: every term is constant
  CompositeNormalizers all_zero = fit_normalizers({"AGK", "AGK"}, cfg);
  CHECK(all_zero.skipped.size() == 5);
  CHECK(composite_distance("AGK", "GKA", cfg, all_zero) == 0.0);
}

TEST_CASE("composite matrix agrees with pairwise composite distances") {
  PropertyConfig cfg = test_config();
  std::vector<std::string> seqs = {"AG", "GK", "AGK", "KA", "GGG"};
  std::vector<int> train_idx = {0, 1, 2};
  DistanceMatrix m = composite_matrix(seqs, train_idx, cfg);
  CHECK(m.n == 5);
  CHECK(m.provenance == "custom");
  std::vector<std::string> train = {"AG", "GK", "AGK"};
  CompositeNormalizers norm = fit_normalizers(train, cfg);
  for (int i = 0; i < 5; ++i) {
    CHECK(m.at(i, i) == 0.0);
    for (int j = 0; j < 5; ++j) {
      CHECK(m.at(i, j) == m.at(j, i));
      CHECK(m.at(i, j) == doctest::Approx(composite_distance(seqs[i], seqs[j], cfg, norm)).epsilon(1e-12));
    }
  }
}

TEST_CASE("codec round trips every sequence") {
  Rng rng(31);
  SequenceCodec c = make_codec("AGKW", 8, 12, rng);
  CHECK(c.table.rows == 5);
  CHECK(c.table.cols == 8);
  CHECK(c.d() == 96);
  CHECK(c.min_row_gap() > 0.0);
  Rng seq_rng(99);
  for (int t = 0; t < 100; ++t) {
    std::string s = random_seq(seq_rng, 12);
    CHECK(c.decode(c.encode(s)) == s);
  }
  CHECK(c.decode(c.encode("")) == "");
}

TEST_CASE("decoding tolerates perturbations within half the min row gap") {
  Rng rng(37);
  SequenceCodec c = make_codec("AGKW", 8, 6, rng);
  double margin = 0.5 * c.min_row_gap();
  Rng noise_rng(7);
  for (int t = 0; t < 50; ++t) {
    std::string s = random_seq(noise_rng, 6);
    Tensor p = c.encode(s);
    // per position, add a perturbation of Euclidean norm 0.9 * margin
    for (int pos = 0; pos < c.max_len; ++pos) {
      Tensor dir(1, c.emb_dim);
      noise_rng.fill_normal(dir);
      double nrm = 0;
      for (double v : dir.data) nrm += v * v;
      nrm = std::sqrt(nrm);
      for (int e = 0; e < c.emb_dim; ++e)
        p.data[pos * c.emb_dim + e] += dir.data[e] / nrm * 0.9 * margin;
    }
    CHECK(c.decode(p) == s);
  }
}

TEST_CASE("decode stops at the first pad position") {
  Rng rng(41);
  SequenceCodec c = make_codec("AG", 4, 4, rng);
  // rows A, pad, G, pad: everything after the first pad is ignored
  Tensor p(1, c.d());
  std::vector<int> rows = {0, c.pad_row(), 1, c.pad_row()};
  for (int pos = 0; pos < 4; ++pos)
    for (int e = 0; e < c.emb_dim; ++e)
      p.data[pos * c.emb_dim + e] = c.table.at(rows[pos], e) + c.positional.at(pos, e);
  CHECK(c.decode(p) == "A");
}

TEST_CASE("a zero pad row decodes the bare positional field as empty") {
  Rng rng(43);
  SequenceCodec c = make_codec("AG", 4, 3, rng);
  for (int e = 0; e < c.emb_dim; ++e) c.table.at(c.pad_row(), e) = 0.0;
  Tensor p(1, c.d());
  for (int pos = 0; pos < c.max_len; ++pos)
    for (int e = 0; e < c.emb_dim; ++e) p.data[pos * c.emb_dim + e] = c.positional.at(pos, e);
  CHECK(c.decode(p) == "");
}

TEST_CASE("encoding differences are confined to the edited position block") {
  Rng rng(47);
  SequenceCodec c = make_codec("AGKW", 8, 6, rng);
  Tensor a = c.encode("AGKW");
  Tensor b = c.encode("AWKW");  // position 1 edited
  for (int pos = 0; pos < c.max_len; ++pos)
    for (int e = 0; e < c.emb_dim; ++e) {
      double diff = std::abs(a.data[pos * c.emb_dim + e] - b.data[pos * c.emb_dim + e]);
      if (pos == 1)
        CHECK(diff == doctest::Approx(std::abs(c.table.at(1, e) - c.table.at(3, e))).epsilon(1e-12));
      else
        CHECK(diff == 0.0);
    }
}

TEST_CASE("codec rejects invalid input") {
  Rng rng(53);
  SequenceCodec c = make_codec("AG", 4, 3, rng);
  CHECK_THROWS_AS(c.encode("AGX"), std::invalid_argument);
  CHECK_THROWS_AS(c.encode("AGAG"), std::invalid_argument);  // longer than max_len
  CHECK_THROWS_AS(c.decode(Tensor(1, 5)), std::invalid_argument);
  CHECK_NOTHROW(c.encode("AGA"));
}

TEST_CASE("positional embedding interleaves sines and cosines") {
  Tensor pe = positional_embedding(5, 8);
  for (int e = 0; e < 8; e += 2) {
    CHECK(pe.at(0, e) == 0.0);
    CHECK(pe.at(0, e + 1) == 1.0);
  }
  CHECK(pe.at(1, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
  CHECK(pe.at(1, 2) == doctest::Approx(std::sin(1.0 / std::pow(10000.0, 2.0 / 8.0))).epsilon(1e-15));
  CHECK(pe.at(3, 5) == doctest::Approx(std::cos(3.0 / std::pow(10000.0, 4.0 / 8.0))).epsilon(1e-15));
}

TEST_CASE("codec JSON round trip is bitwise") {
  Rng rng(61);
  SequenceCodec c = make_codec("AGKW", 8, 12, rng);
  json j = codec_to_json(c);
  SequenceCodec r = codec_from_json(j);
  CHECK(r.alphabet == c.alphabet);
  CHECK(r.emb_dim == c.emb_dim);
  CHECK(r.max_len == c.max_len);
  REQUIRE(r.table.data.size() == c.table.data.size());
  for (size_t i = 0; i < c.table.data.size(); ++i) CHECK(r.table.data[i] == c.table.data[i]);
  for (size_t i = 0; i < c.positional.data.size(); ++i)
    CHECK(r.positional.data[i] == c.positional.data[i]);

  json bad = j;
  bad["kind"] = "something_else";
  CHECK_THROWS_AS(codec_from_json(bad), std::runtime_error);
  json truncated = j;
  truncated["table"] = std::vector<double>{1.0, 2.0};
  CHECK_THROWS_AS(codec_from_json(truncated), std::runtime_error);
}
