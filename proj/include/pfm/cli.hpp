#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pfm/flow.hpp"
#include "pfm/isometry.hpp"
#include "pfm/util.hpp"

namespace pfm {

struct DatasetSpec {
  std::string kind;  // arch | swiss | synthetic_seq | pointcloud_csv | sequence_csv
  int n = 0;
  double noise_sigma = 0.0;
  bool standardize = false;  // per-column zero mean, unit population std
  int min_len = 0, max_len = 0;
  std::string alphabet;
  std::string path;  // csv kinds read from here
};

struct MetricSpec {
  std::string kind;        // isomap | composite_seq | file
  int k = 0;               // isomap neighbourhood size
  std::string properties;  // composite_seq: residue parameter table
  std::string path;        // file: precomputed matrix base path
};

struct CodecSpec {
  int emb_dim = 8;
  int max_len = 0;
  double init_scale = 1.0;
};

struct GenerateSpec {
  int n_samples = 0;
  int n_trajectories = 0;
  int n_times = 2;
};

struct EvaluateSpec {
  int n_pairs = 0;                  // interpolation pairs, 0 skips the block
  std::vector<std::string> spaces;  // data | latent | submanifold
  bool generation = false;          // 1-NN of samples.csv against the holdout
};

struct AnalogueSpec {
  std::vector<double> taus;
};

// One schema drives every stage; a single seed (overridable on the command
// line) derives the dataset draw, the split, all trainer streams, and the
// sampling streams, so one config plus one integer pins the whole pipeline.
struct ExperimentConfig {
  std::string name;
  uint64_t seed = 0;
  std::string out_dir;
  double split_fraction = 0.8;
  DatasetSpec dataset;
  MetricSpec metric;
  IsometryTrainConfig isometry;
  FlowTrainConfig flow;
  CodecSpec codec;
  GenerateSpec generate;
  EvaluateSpec evaluate;
  AnalogueSpec analogue;
  bool has_isometry = false, has_flow = false, has_codec = false;
  bool has_generate = false, has_evaluate = false, has_analogue = false;
};

ExperimentConfig config_from_json(const json& j);
json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::string& path);

// Stage-scoped validation; throws std::invalid_argument naming the field.
void validate_for_stage(const ExperimentConfig& cfg, const std::string& stage);

// Loaders shared by stages and tests. Paths resolve inside cfg.out_dir except
// csv datasets and file metrics, which read the configured source directly.
std::string dataset_path(const ExperimentConfig& cfg);
std::string distances_base(const ExperimentConfig& cfg);
PointCloud load_config_pointcloud(const ExperimentConfig& cfg);
SequenceDataset load_config_sequences(const ExperimentConfig& cfg);
bool sequence_dataset(const ExperimentConfig& cfg);

void cmd_make_dataset(const ExperimentConfig& cfg);
void cmd_distances(const ExperimentConfig& cfg);
void cmd_train_isometry(const ExperimentConfig& cfg);
void cmd_train_flow(const ExperimentConfig& cfg);
void cmd_generate(const ExperimentConfig& cfg);
void cmd_evaluate(const ExperimentConfig& cfg);
void cmd_analogue(const ExperimentConfig& cfg);

// Parses argv, runs one subcommand, reports failures as
// "pfm <stage>: <what>" on stderr; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace pfm
