#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "pfm/graph.hpp"
#include "pfm/rng.hpp"
#include "pfm/tensor.hpp"
#include "pfm/util.hpp"

namespace pfm {

struct SequenceDataset {
  std::vector<std::string> seqs;
  std::vector<std::string> ids;       // optional, empty or per-sequence
  std::vector<double> activity;       // optional, empty or per-sequence
  int n() const { return int(seqs.size()); }
};

int levenshtein(const std::string& a, const std::string& b);

// Residue parameter tables. These are standard biochemistry inputs shipped as
// config data (configs/aa_properties.json), not values from any one study.
struct PropertyConfig {
  std::map<char, double> hydropathy;             // per-residue scale
  std::map<char, double> pka_side;               // ionizable side chains
  std::map<char, int> side_sign;                 // +1 basic, -1 acidic
  double pka_nterm = 9.0;
  double pka_cterm = 2.0;
  double helix_angle_deg = 100.0;                // hydrophobic moment angle
  std::string alphabet;                          // residues covered

  void validate_sequence(const std::string& s) const;
};

PropertyConfig load_property_config(const std::string& path);

enum class SeqProperty { Hydrophobicity, HydrophobicMoment, NetCharge, IsoelectricPoint, Length };

constexpr std::array<SeqProperty, 5> kAllSeqProperties = {
    SeqProperty::Hydrophobicity, SeqProperty::HydrophobicMoment, SeqProperty::NetCharge,
    SeqProperty::IsoelectricPoint, SeqProperty::Length};

std::string to_string(SeqProperty p);

// Scalar property value of one sequence. Length stands in for the edit-
// distance component (Levenshtein distance to the empty sequence).
double property_value(SeqProperty p, const std::string& seq, const PropertyConfig& cfg);

// |f(a) - f(b)| for the four tabulated properties.
double property_distance(SeqProperty p, const std::string& a, const std::string& b,
                         const PropertyConfig& cfg);

double net_charge(const std::string& seq, const PropertyConfig& cfg, double ph);
double isoelectric_point(const std::string& seq, const PropertyConfig& cfg);  // bisection, tol 1e-4

// Per-term maxima over training pairs; a zero max disables (skips) the term.
struct CompositeNormalizers {
  double lev_max = 0.0;
  std::array<double, 4> prop_max = {0, 0, 0, 0};  // first four properties
  std::vector<std::string> skipped;               // names of zero-max terms
};

CompositeNormalizers fit_normalizers(const std::vector<std::string>& train_seqs,
                                     const PropertyConfig& cfg);

double composite_distance(const std::string& a, const std::string& b, const PropertyConfig& cfg,
                          const CompositeNormalizers& norm);

// Dense matrix of composite distances over all sequences, with normalizers
// fitted on the subset train_idx.
DistanceMatrix composite_matrix(const std::vector<std::string>& seqs,
                                const std::vector<int>& train_idx, const PropertyConfig& cfg);

// Embedding codec: per position, a learned table row (alphabet + pad) plus a
// fixed sine-cosine positional term; sequences flatten to 1 x (max_len * emb_dim).
struct SequenceCodec {
  std::string alphabet;
  int emb_dim = 8;
  int max_len = 25;
  Tensor table;       // (alphabet.size() + 1) x emb_dim, last row = pad
  Tensor positional;  // max_len x emb_dim, fixed

  int pad_row() const { return int(alphabet.size()); }
  int d() const { return max_len * emb_dim; }

  int symbol_row(char c) const;
  std::vector<int> padded_rows(const std::string& seq) const;

  Tensor encode(const std::string& seq) const;
  Tensor encode_all(const std::vector<std::string>& seqs) const;
  std::string decode(const Tensor& point) const;  // nearest row, first pad ends

  double min_row_gap() const;
};

SequenceCodec make_codec(const std::string& alphabet, int emb_dim, int max_len, Rng& rng,
                         double init_scale = 1.0);
Tensor positional_embedding(int max_len, int emb_dim);

json codec_to_json(const SequenceCodec& c);
SequenceCodec codec_from_json(const json& j);

}  // namespace pfm
