#include "pfm/seq.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace pfm {

int levenshtein(const std::string& a, const std::string& b) {
  int na = int(a.size()), nb = int(b.size());
  std::vector<int> prev(nb + 1), cur(nb + 1);
  for (int j = 0; j <= nb; ++j) prev[j] = j;
  for (int i = 1; i <= na; ++i) {
    cur[0] = i;
    for (int j = 1; j <= nb; ++j) {
      int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[nb];
}

void PropertyConfig::validate_sequence(const std::string& s) const {
  for (char c : s)
    if (alphabet.find(c) == std::string::npos)
      throw std::invalid_argument(std::string("unknown residue '") + c + "' in sequence " + s);
}

PropertyConfig load_property_config(const std::string& path) {
  json j = load_json(path);
  PropertyConfig cfg;
  for (auto& [key, val] : j.at("hydropathy").items()) cfg.hydropathy[key[0]] = val.get<double>();
  for (auto& [key, val] : j.at("side_chain_pka").items()) {
    cfg.pka_side[key[0]] = val.at("pka").get<double>();
    cfg.side_sign[key[0]] = val.at("sign").get<int>();
  }
  cfg.pka_nterm = j.at("terminal_pka").at("n");
  cfg.pka_cterm = j.at("terminal_pka").at("c");
  cfg.helix_angle_deg = j.value("helix_angle_deg", 100.0);
  for (auto& [key, val] : j.at("hydropathy").items()) cfg.alphabet += key[0];
  std::sort(cfg.alphabet.begin(), cfg.alphabet.end());
  return cfg;
}

std::string to_string(SeqProperty p) {
  switch (p) {
    case SeqProperty::Hydrophobicity: return "hydrophobicity";
    case SeqProperty::HydrophobicMoment: return "hydrophobic_moment";
    case SeqProperty::NetCharge: return "net_charge";
    case SeqProperty::IsoelectricPoint: return "isoelectric_point";
    case SeqProperty::Length: return "length";
  }
  return "?";
}

namespace {

double table_mean(const std::string& seq, const std::map<char, double>& table) {
  if (seq.empty()) return 0.0;
  double s = 0;
  for (char c : seq) {
    auto it = table.find(c);
    if (it == table.end())
      throw std::invalid_argument(std::string("residue '") + c + "' missing from table");
    s += it->second;
  }
  return s / double(seq.size());
}

double hydrophobic_moment(const std::string& seq, const PropertyConfig& cfg) {
  double delta = cfg.helix_angle_deg * 3.14159265358979323846 / 180.0;
  double sx = 0, sy = 0;
  for (size_t n = 0; n < seq.size(); ++n) {
    auto it = cfg.hydropathy.find(seq[n]);
    if (it == cfg.hydropathy.end())
      throw std::invalid_argument(std::string("residue '") + seq[n] + "' missing from table");
    sx += it->second * std::cos(delta * double(n));
    sy += it->second * std::sin(delta * double(n));
  }
  return std::sqrt(sx * sx + sy * sy);
}

}  // namespace

double net_charge(const std::string& seq, const PropertyConfig& cfg, double ph) {
  if (seq.empty()) return 0.0;
  // Henderson-Hasselbalch per ionizable group, plus the two termini
  double q = 1.0 / (1.0 + std::pow(10.0, ph - cfg.pka_nterm));
  q -= 1.0 / (1.0 + std::pow(10.0, cfg.pka_cterm - ph));
  for (char c : seq) {
    auto it = cfg.pka_side.find(c);
    if (it == cfg.pka_side.end()) continue;
    if (cfg.side_sign.at(c) > 0)
      q += 1.0 / (1.0 + std::pow(10.0, ph - it->second));
    else
      q -= 1.0 / (1.0 + std::pow(10.0, it->second - ph));
  }
  return q;
}

double isoelectric_point(const std::string& seq, const PropertyConfig& cfg) {
  if (seq.empty()) return 7.0;
  double lo = 0.0, hi = 14.0;
  // net charge is strictly decreasing in pH
  while (hi - lo > 1e-4) {
    double mid = 0.5 * (lo + hi);
    if (net_charge(seq, cfg, mid) > 0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double property_value(SeqProperty p, const std::string& seq, const PropertyConfig& cfg) {
  switch (p) {
    case SeqProperty::Hydrophobicity: return table_mean(seq, cfg.hydropathy);
    case SeqProperty::HydrophobicMoment: return hydrophobic_moment(seq, cfg);
    case SeqProperty::NetCharge: return net_charge(seq, cfg, 7.0);
    case SeqProperty::IsoelectricPoint: return isoelectric_point(seq, cfg);
    case SeqProperty::Length: return double(seq.size());
  }
  return 0.0;
}

double property_distance(SeqProperty p, const std::string& a, const std::string& b,
                         const PropertyConfig& cfg) {
  return std::abs(property_value(p, a, cfg) - property_value(p, b, cfg));
}

CompositeNormalizers fit_normalizers(const std::vector<std::string>& train_seqs,
                                     const PropertyConfig& cfg) {
  CompositeNormalizers norm;
  int n = int(train_seqs.size());
  std::vector<std::array<double, 4>> vals(n);
  for (int i = 0; i < n; ++i) {
    cfg.validate_sequence(train_seqs[i]);
    for (int p = 0; p < 4; ++p)
      vals[i][p] = property_value(kAllSeqProperties[p], train_seqs[i], cfg);
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      norm.lev_max = std::max(norm.lev_max, double(levenshtein(train_seqs[i], train_seqs[j])));
      for (int p = 0; p < 4; ++p)
        norm.prop_max[p] = std::max(norm.prop_max[p], std::abs(vals[i][p] - vals[j][p]));
    }
  if (norm.lev_max == 0.0) norm.skipped.push_back("levenshtein");
  for (int p = 0; p < 4; ++p)
    if (norm.prop_max[p] == 0.0) norm.skipped.push_back(to_string(kAllSeqProperties[p]));
  for (const auto& s : norm.skipped)
    std::cerr << "warning: composite metric term '" << s
              << "' is constant on the training set and will be skipped\n";
  return norm;
}

double composite_distance(const std::string& a, const std::string& b, const PropertyConfig& cfg,
                          const CompositeNormalizers& norm) {
  double d = 0;
  if (norm.lev_max > 0) d += double(levenshtein(a, b)) / norm.lev_max;
  for (int p = 0; p < 4; ++p)
    if (norm.prop_max[p] > 0)
      d += property_distance(kAllSeqProperties[p], a, b, cfg) / norm.prop_max[p];
  return d;
}

DistanceMatrix composite_matrix(const std::vector<std::string>& seqs,
                                const std::vector<int>& train_idx, const PropertyConfig& cfg) {
  std::vector<std::string> train;
  train.reserve(train_idx.size());
  for (int i : train_idx) train.push_back(seqs[i]);
  CompositeNormalizers norm = fit_normalizers(train, cfg);

  int n = int(seqs.size());
  std::vector<std::array<double, 4>> vals(n);
  for (int i = 0; i < n; ++i) {
    cfg.validate_sequence(seqs[i]);
    for (int p = 0; p < 4; ++p) vals[i][p] = property_value(kAllSeqProperties[p], seqs[i], cfg);
  }
  DistanceMatrix m;
  m.init(n);
  m.provenance = "custom";
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double d = 0;
      if (norm.lev_max > 0) d += double(levenshtein(seqs[i], seqs[j])) / norm.lev_max;
      for (int p = 0; p < 4; ++p)
        if (norm.prop_max[p] > 0) d += std::abs(vals[i][p] - vals[j][p]) / norm.prop_max[p];
      m.at(i, j) = d;
      m.at(j, i) = d;
    }
  return m;
}

int SequenceCodec::symbol_row(char c) const {
  size_t pos = alphabet.find(c);
  if (pos == std::string::npos)
    throw std::invalid_argument(std::string("symbol '") + c + "' not in codec alphabet");
  return int(pos);
}

std::vector<int> SequenceCodec::padded_rows(const std::string& seq) const {
  if (int(seq.size()) > max_len)
    throw std::invalid_argument("sequence longer than codec max_len: " + seq);
  std::vector<int> rows(max_len, pad_row());
  for (size_t i = 0; i < seq.size(); ++i) rows[i] = symbol_row(seq[i]);
  return rows;
}

Tensor SequenceCodec::encode(const std::string& seq) const {
  std::vector<int> rows = padded_rows(seq);
  Tensor out(1, d());
  for (int p = 0; p < max_len; ++p)
    for (int e = 0; e < emb_dim; ++e)
      out.data[p * emb_dim + e] = table.at(rows[p], e) + positional.at(p, e);
  return out;
}

Tensor SequenceCodec::encode_all(const std::vector<std::string>& seqs) const {
  Tensor out(int(seqs.size()), d());
  for (size_t i = 0; i < seqs.size(); ++i) {
    Tensor row = encode(seqs[i]);
    out.set_row(int(i), row);
  }
  return out;
}

std::string SequenceCodec::decode(const Tensor& point) const {
  if (point.size() != d()) throw std::invalid_argument("decode: point width mismatch");
  std::string out;
  for (int p = 0; p < max_len; ++p) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int r = 0; r <= int(alphabet.size()); ++r) {
      double s = 0;
      for (int e = 0; e < emb_dim; ++e) {
        double diff = point.data[p * emb_dim + e] - positional.at(p, e) - table.at(r, e);
        s += diff * diff;
      }
      if (s < best_d) {  // strict: ties keep the lower row index
        best_d = s;
        best = r;
      }
    }
    if (best == pad_row()) break;
    out += alphabet[best];
  }
  return out;
}

double SequenceCodec::min_row_gap() const {
  double g = std::numeric_limits<double>::infinity();
  for (int r = 0; r < table.rows; ++r)
    for (int s = r + 1; s < table.rows; ++s) {
      double d2 = 0;
      for (int e = 0; e < emb_dim; ++e) {
        double diff = table.at(r, e) - table.at(s, e);
        d2 += diff * diff;
      }
      g = std::min(g, std::sqrt(d2));
    }
  return g;
}

Tensor positional_embedding(int max_len, int emb_dim) {
  Tensor pe(max_len, emb_dim);
  for (int p = 0; p < max_len; ++p)
    for (int i = 0; i < emb_dim; ++i) {
      double angle = double(p) / std::pow(10000.0, double(2 * (i / 2)) / double(emb_dim));
      pe.at(p, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

SequenceCodec make_codec(const std::string& alphabet, int emb_dim, int max_len, Rng& rng,
                         double init_scale) {
  SequenceCodec c;
  c.alphabet = alphabet;
  c.emb_dim = emb_dim;
  c.max_len = max_len;
  c.table = Tensor(int(alphabet.size()) + 1, emb_dim);
  rng.fill_normal(c.table, init_scale);
  c.positional = positional_embedding(max_len, emb_dim);
  return c;
}

json codec_to_json(const SequenceCodec& c) {
  return {{"kind", "sequence_codec"},
          {"alphabet", c.alphabet},
          {"emb_dim", c.emb_dim},
          {"max_len", c.max_len},
          {"table", c.table.data}};
}

SequenceCodec codec_from_json(const json& j) {
  if (j.at("kind") != "sequence_codec") throw std::runtime_error("not a codec file");
  SequenceCodec c;
  c.alphabet = j.at("alphabet");
  c.emb_dim = j.at("emb_dim");
  c.max_len = j.at("max_len");
  c.table = Tensor(int(c.alphabet.size()) + 1, c.emb_dim);
  j.at("table").get_to(c.table.data);
  if (int(c.table.data.size()) != c.table.rows * c.table.cols)
    throw std::runtime_error("codec table size mismatch");
  c.positional = positional_embedding(c.max_len, c.emb_dim);
  return c;
}

}  // namespace pfm
