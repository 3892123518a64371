#include "pfm/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "pfm/datasets.hpp"
#include "pfm/eval.hpp"
#include "pfm/graph.hpp"

namespace pfm {

namespace {

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (item.key() == a) ok = true;
    if (!ok)
      throw std::invalid_argument("config: unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
T field(const json& j, const std::string& where, const char* key, T fallback) {
  try {
    return j.value(key, fallback);
  } catch (const json::exception&) {
    throw std::invalid_argument("config: " + where + "." + key + " has the wrong type");
  }
}

std::string basename_of(const std::string& path) {
  size_t pos = path.find_last_of('/');
  return pos == std::string::npos ? path : path.substr(pos + 1);
}

int env_threads() {
  const char* v = std::getenv("PFM_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  long t = std::strtol(v, &end, 10);
  if (!end || *end != '\0' || t < 1)
    throw std::invalid_argument("PFM_THREADS must be a positive integer");
  return int(t);
}

void update_manifest(const ExperimentConfig& cfg, const std::string& stage,
                     const std::vector<std::string>& inputs,
                     const std::vector<std::string>& outputs) {
  std::string path = cfg.out_dir + "/manifest.json";
  json m = file_exists(path) ? load_json(path) : json::object();
  m["name"] = cfg.name;
  json s;
  s["config"] = config_to_json(cfg);
  s["config_hash"] = sha256_hex(config_to_json(cfg).dump());
  s["seed"] = cfg.seed;
  json in = json::object(), out = json::object();
  for (const std::string& p : inputs) in[basename_of(p)] = sha256_file(p);
  for (const std::string& p : outputs) out[basename_of(p)] = sha256_file(p);
  s["inputs"] = in;
  s["outputs"] = out;
  m["stages"][stage] = s;
  write_json(path, m);
}

std::pair<std::vector<int>, std::vector<int>> config_split(const ExperimentConfig& cfg, int n) {
  return split_indices(n, cfg.split_fraction, cfg.seed);
}

Tensor take_rows(const Tensor& X, const std::vector<int>& idx) {
  Tensor out(int(idx.size()), X.cols);
  for (size_t i = 0; i < idx.size(); ++i) out.set_row(int(i), X.row_slice(idx[i]));
  return out;
}

std::string derive_alphabet(const SequenceDataset& ds) {
  std::set<char> chars;
  for (const std::string& s : ds.seqs)
    for (char c : s) chars.insert(c);
  return std::string(chars.begin(), chars.end());
}

SequenceCodec build_codec(const ExperimentConfig& cfg, const SequenceDataset& ds) {
  std::string alphabet =
      cfg.dataset.alphabet.empty() ? derive_alphabet(ds) : cfg.dataset.alphabet;
  Rng crng = Rng(cfg.seed).substream(4);  // trainers own substreams 0..3
  return make_codec(alphabet, cfg.codec.emb_dim, cfg.codec.max_len, crng,
                    cfg.codec.init_scale);
}

std::string fmt_csv(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

GeoSpace space_from_string(const std::string& s) {
  if (s == "data") return GeoSpace::Data;
  if (s == "latent") return GeoSpace::Latent;
  if (s == "submanifold") return GeoSpace::Submanifold;
  throw std::invalid_argument("config: evaluate.spaces entries must be data, latent or submanifold");
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  check_keys(j, "config",
             {"name", "seed", "out_dir", "split_fraction", "dataset", "metric", "isometry",
              "flow", "codec", "generate", "evaluate", "analogue"});
  ExperimentConfig c;
  c.name = field<std::string>(j, "config", "name", "");
  c.seed = field<uint64_t>(j, "config", "seed", 0);
  c.out_dir = field<std::string>(j, "config", "out_dir", "");
  c.split_fraction = field<double>(j, "config", "split_fraction", 0.8);

  if (!j.contains("dataset")) throw std::invalid_argument("config: missing dataset section");
  {
    const json& d = j.at("dataset");
    check_keys(d, "dataset",
               {"kind", "n", "noise_sigma", "standardize", "min_len", "max_len", "alphabet",
                "path"});
    c.dataset.kind = field<std::string>(d, "dataset", "kind", "");
    c.dataset.n = field<int>(d, "dataset", "n", 0);
    c.dataset.noise_sigma = field<double>(d, "dataset", "noise_sigma", 0.0);
    c.dataset.standardize = field<bool>(d, "dataset", "standardize", false);
    c.dataset.min_len = field<int>(d, "dataset", "min_len", 0);
    c.dataset.max_len = field<int>(d, "dataset", "max_len", 0);
    c.dataset.alphabet = field<std::string>(d, "dataset", "alphabet", "");
    c.dataset.path = field<std::string>(d, "dataset", "path", "");
  }
  if (j.contains("metric")) {
    const json& m = j.at("metric");
    check_keys(m, "metric", {"kind", "k", "properties", "path"});
    c.metric.kind = field<std::string>(m, "metric", "kind", "");
    c.metric.k = field<int>(m, "metric", "k", 0);
    c.metric.properties = field<std::string>(m, "metric", "properties", "");
    c.metric.path = field<std::string>(m, "metric", "path", "");
  }
  if (j.contains("isometry")) {
    c.has_isometry = true;
    const json& i = j.at("isometry");
    check_keys(i, "isometry",
               {"alpha1", "alpha2", "alpha3", "alpha4", "epochs", "warmup_epochs", "batch_size",
                "learning_rate", "cosine", "lr_min", "d_prime", "n_steps", "hidden", "layers",
                "init_scale"});
    IsometryTrainConfig& t = c.isometry;
    t.alpha1 = field<double>(i, "isometry", "alpha1", t.alpha1);
    t.alpha2 = field<double>(i, "isometry", "alpha2", t.alpha2);
    t.alpha3 = field<double>(i, "isometry", "alpha3", t.alpha3);
    t.alpha4 = field<double>(i, "isometry", "alpha4", t.alpha4);
    t.epochs = field<int>(i, "isometry", "epochs", t.epochs);
    t.warmup_epochs = field<int>(i, "isometry", "warmup_epochs", t.warmup_epochs);
    t.batch_size = field<int>(i, "isometry", "batch_size", t.batch_size);
    t.learning_rate = field<double>(i, "isometry", "learning_rate", t.learning_rate);
    t.cosine = field<bool>(i, "isometry", "cosine", t.cosine);
    t.lr_min = field<double>(i, "isometry", "lr_min", t.lr_min);
    t.d_prime = field<int>(i, "isometry", "d_prime", t.d_prime);
    t.n_steps = field<int>(i, "isometry", "n_steps", t.n_steps);
    t.hidden = field<int>(i, "isometry", "hidden", t.hidden);
    t.layers = field<int>(i, "isometry", "layers", t.layers);
    t.init_scale = field<double>(i, "isometry", "init_scale", t.init_scale);
  }
  if (j.contains("flow")) {
    c.has_flow = true;
    const json& f = j.at("flow");
    check_keys(f, "flow",
               {"mode", "epochs", "batch_size", "learning_rate", "cosine", "lr_min", "sigma_min",
                "n_simulation_steps", "hidden", "layers", "init_scale"});
    FlowTrainConfig& t = c.flow;
    t.mode = field<std::string>(f, "flow", "mode", t.mode);
    t.epochs = field<int>(f, "flow", "epochs", t.epochs);
    t.batch_size = field<int>(f, "flow", "batch_size", t.batch_size);
    t.learning_rate = field<double>(f, "flow", "learning_rate", t.learning_rate);
    t.cosine = field<bool>(f, "flow", "cosine", t.cosine);
    t.lr_min = field<double>(f, "flow", "lr_min", t.lr_min);
    t.sigma_min = field<double>(f, "flow", "sigma_min", t.sigma_min);
    t.n_simulation_steps = field<int>(f, "flow", "n_simulation_steps", t.n_simulation_steps);
    t.hidden = field<int>(f, "flow", "hidden", t.hidden);
    t.layers = field<int>(f, "flow", "layers", t.layers);
    t.init_scale = field<double>(f, "flow", "init_scale", t.init_scale);
  }
  if (j.contains("codec")) {
    c.has_codec = true;
    const json& k = j.at("codec");
    check_keys(k, "codec", {"emb_dim", "max_len", "init_scale"});
    c.codec.emb_dim = field<int>(k, "codec", "emb_dim", c.codec.emb_dim);
    c.codec.max_len = field<int>(k, "codec", "max_len", c.codec.max_len);
    c.codec.init_scale = field<double>(k, "codec", "init_scale", c.codec.init_scale);
  }
  if (j.contains("generate")) {
    c.has_generate = true;
    const json& g = j.at("generate");
    check_keys(g, "generate", {"n_samples", "n_trajectories", "n_times"});
    c.generate.n_samples = field<int>(g, "generate", "n_samples", 0);
    c.generate.n_trajectories = field<int>(g, "generate", "n_trajectories", 0);
    c.generate.n_times = field<int>(g, "generate", "n_times", 2);
  }
  if (j.contains("evaluate")) {
    c.has_evaluate = true;
    const json& e = j.at("evaluate");
    check_keys(e, "evaluate", {"n_pairs", "spaces", "generation"});
    c.evaluate.n_pairs = field<int>(e, "evaluate", "n_pairs", 0);
    c.evaluate.spaces = field<std::vector<std::string>>(e, "evaluate", "spaces", {});
    c.evaluate.generation = field<bool>(e, "evaluate", "generation", false);
  }
  if (j.contains("analogue")) {
    c.has_analogue = true;
    const json& a = j.at("analogue");
    check_keys(a, "analogue", {"taus"});
    c.analogue.taus = field<std::vector<double>>(a, "analogue", "taus", {});
  }
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["split_fraction"] = c.split_fraction;
  j["dataset"] = {{"kind", c.dataset.kind},
                  {"n", c.dataset.n},
                  {"noise_sigma", c.dataset.noise_sigma},
                  {"standardize", c.dataset.standardize},
                  {"min_len", c.dataset.min_len},
                  {"max_len", c.dataset.max_len},
                  {"alphabet", c.dataset.alphabet},
                  {"path", c.dataset.path}};
  j["metric"] = {{"kind", c.metric.kind},
                 {"k", c.metric.k},
                 {"properties", c.metric.properties},
                 {"path", c.metric.path}};
  if (c.has_isometry)
    j["isometry"] = {{"alpha1", c.isometry.alpha1},
                     {"alpha2", c.isometry.alpha2},
                     {"alpha3", c.isometry.alpha3},
                     {"alpha4", c.isometry.alpha4},
                     {"epochs", c.isometry.epochs},
                     {"warmup_epochs", c.isometry.warmup_epochs},
                     {"batch_size", c.isometry.batch_size},
                     {"learning_rate", c.isometry.learning_rate},
                     {"cosine", c.isometry.cosine},
                     {"lr_min", c.isometry.lr_min},
                     {"d_prime", c.isometry.d_prime},
                     {"n_steps", c.isometry.n_steps},
                     {"hidden", c.isometry.hidden},
                     {"layers", c.isometry.layers},
                     {"init_scale", c.isometry.init_scale}};
  if (c.has_flow)
    j["flow"] = {{"mode", c.flow.mode},
                 {"epochs", c.flow.epochs},
                 {"batch_size", c.flow.batch_size},
                 {"learning_rate", c.flow.learning_rate},
                 {"cosine", c.flow.cosine},
                 {"lr_min", c.flow.lr_min},
                 {"sigma_min", c.flow.sigma_min},
                 {"n_simulation_steps", c.flow.n_simulation_steps},
                 {"hidden", c.flow.hidden},
                 {"layers", c.flow.layers},
                 {"init_scale", c.flow.init_scale}};
  if (c.has_codec)
    j["codec"] = {{"emb_dim", c.codec.emb_dim},
                  {"max_len", c.codec.max_len},
                  {"init_scale", c.codec.init_scale}};
  if (c.has_generate)
    j["generate"] = {{"n_samples", c.generate.n_samples},
                     {"n_trajectories", c.generate.n_trajectories},
                     {"n_times", c.generate.n_times}};
  if (c.has_evaluate)
    j["evaluate"] = {{"n_pairs", c.evaluate.n_pairs},
                     {"spaces", c.evaluate.spaces},
                     {"generation", c.evaluate.generation}};
  if (c.has_analogue) j["analogue"] = {{"taus", c.analogue.taus}};
  return j;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  if (!file_exists(path))
    throw std::invalid_argument("config file does not exist: " + path);
  ExperimentConfig cfg = config_from_json(load_json(path));
  // File references inside a config resolve relative to the config itself,
  // so a shipped corpus works from any working directory.
  auto base = std::filesystem::absolute(std::filesystem::path(path)).parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative())
      p = (base / p).string();
  };
  resolve(cfg.dataset.path);
  resolve(cfg.metric.properties);
  resolve(cfg.metric.path);
  return cfg;
}

bool sequence_dataset(const ExperimentConfig& cfg) {
  return cfg.dataset.kind == "synthetic_seq" || cfg.dataset.kind == "sequence_csv";
}

std::string dataset_path(const ExperimentConfig& cfg) {
  if (cfg.dataset.kind == "pointcloud_csv" || cfg.dataset.kind == "sequence_csv")
    return cfg.dataset.path;
  return cfg.out_dir + "/dataset.csv";
}

std::string distances_base(const ExperimentConfig& cfg) {
  return cfg.metric.kind == "file" ? cfg.metric.path : cfg.out_dir + "/distances";
}

PointCloud load_config_pointcloud(const ExperimentConfig& cfg) {
  if (sequence_dataset(cfg))
    throw std::invalid_argument("config: this stage needs a point-cloud dataset");
  return load_pointcloud_csv(dataset_path(cfg));
}

SequenceDataset load_config_sequences(const ExperimentConfig& cfg) {
  if (!sequence_dataset(cfg))
    throw std::invalid_argument("config: this stage needs a sequence dataset");
  return load_sequence_csv(dataset_path(cfg));
}

void validate_for_stage(const ExperimentConfig& cfg, const std::string& stage) {
  if (cfg.name.empty()) throw std::invalid_argument("config: name must be set");
  if (cfg.out_dir.empty()) throw std::invalid_argument("config: out_dir must be set");
  if (!(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0))
    throw std::invalid_argument("config: split_fraction must be in (0, 1)");

  const DatasetSpec& d = cfg.dataset;
  bool generated = d.kind == "arch" || d.kind == "swiss" || d.kind == "synthetic_seq";
  if (d.kind != "arch" && d.kind != "swiss" && d.kind != "synthetic_seq" &&
      d.kind != "pointcloud_csv" && d.kind != "sequence_csv")
    throw std::invalid_argument(
        "config: dataset.kind must be one of arch, swiss, synthetic_seq, pointcloud_csv, "
        "sequence_csv");
  if (generated) {
    if (d.n < 2) throw std::invalid_argument("config: dataset.n must be >= 2");
    if (d.noise_sigma < 0)
      throw std::invalid_argument("config: dataset.noise_sigma must be >= 0");
  } else {
    if (d.path.empty()) throw std::invalid_argument("config: dataset.path must be set");
    if (!file_exists(d.path))
      throw std::invalid_argument("config: dataset.path does not exist: " + d.path);
  }
  if (d.kind == "synthetic_seq") {
    if (d.min_len < 1 || d.max_len < d.min_len)
      throw std::invalid_argument("config: dataset needs 1 <= min_len <= max_len");
    if (d.alphabet.empty()) throw std::invalid_argument("config: dataset.alphabet must be set");
  }
  if (d.standardize && d.kind != "arch" && d.kind != "swiss")
    throw std::invalid_argument(
        "config: dataset.standardize applies to generated point clouds only");

  auto need_metric = [&](bool for_distances) {
    const MetricSpec& m = cfg.metric;
    if (m.kind == "isomap") {
      if (sequence_dataset(cfg))
        throw std::invalid_argument("config: metric.kind isomap needs a point-cloud dataset");
      if (m.k < 1) throw std::invalid_argument("config: metric.k must be >= 1");
    } else if (m.kind == "composite_seq") {
      if (!sequence_dataset(cfg))
        throw std::invalid_argument("config: metric.kind composite_seq needs a sequence dataset");
      if (m.properties.empty())
        throw std::invalid_argument("config: metric.properties must be set");
      if (!file_exists(m.properties))
        throw std::invalid_argument("config: metric.properties does not exist: " + m.properties);
    } else if (m.kind == "file") {
      if (for_distances)
        throw std::invalid_argument(
            "config: metric.kind file points at a precomputed matrix; nothing to compute");
      if (m.path.empty()) throw std::invalid_argument("config: metric.path must be set");
      if (!file_exists(m.path + ".json"))
        throw std::invalid_argument("config: metric.path does not exist: " + m.path + ".json");
    } else {
      throw std::invalid_argument(
          "config: metric.kind must be one of isomap, composite_seq, file");
    }
  };

  if (stage == "make-dataset") {
    if (!generated)
      throw std::invalid_argument("config: dataset.kind " + d.kind +
                                  " loads an external file; make-dataset needs a generated kind");
  } else if (stage == "distances") {
    need_metric(true);
  } else if (stage == "train-isometry") {
    if (!cfg.has_isometry) throw std::invalid_argument("config: missing isometry section");
    cfg.isometry.validate();
    need_metric(false);
    if (sequence_dataset(cfg)) {
      if (!cfg.has_codec) throw std::invalid_argument("config: missing codec section");
      if (cfg.codec.emb_dim < 1) throw std::invalid_argument("config: codec.emb_dim must be >= 1");
      if (cfg.codec.max_len < 1) throw std::invalid_argument("config: codec.max_len must be >= 1");
      if (!(cfg.codec.init_scale > 0))
        throw std::invalid_argument("config: codec.init_scale must be > 0");
    }
  } else if (stage == "train-flow") {
    if (!cfg.has_flow) throw std::invalid_argument("config: missing flow section");
    cfg.flow.validate();
    if (sequence_dataset(cfg))
      throw std::invalid_argument("config: flows train on point-cloud datasets");
  } else if (stage == "generate") {
    if (!cfg.has_generate) throw std::invalid_argument("config: missing generate section");
    if (cfg.generate.n_samples < 1)
      throw std::invalid_argument("config: generate.n_samples must be >= 1");
    if (cfg.generate.n_trajectories < 0)
      throw std::invalid_argument("config: generate.n_trajectories must be >= 0");
    if (cfg.generate.n_trajectories > 0 && cfg.generate.n_times < 2)
      throw std::invalid_argument("config: generate.n_times must be >= 2");
  } else if (stage == "evaluate") {
    if (!cfg.has_evaluate) throw std::invalid_argument("config: missing evaluate section");
    if (sequence_dataset(cfg))
      throw std::invalid_argument("config: evaluate operates on point-cloud datasets");
    if (cfg.evaluate.n_pairs < 0)
      throw std::invalid_argument("config: evaluate.n_pairs must be >= 0");
    for (const std::string& s : cfg.evaluate.spaces) space_from_string(s);
    bool interp = cfg.evaluate.n_pairs > 0 && !cfg.evaluate.spaces.empty();
    if (!interp && !cfg.evaluate.generation)
      throw std::invalid_argument(
          "config: evaluate needs interpolation (n_pairs and spaces) or generation");
    if (interp) need_metric(false);
  } else if (stage == "analogue") {
    if (!cfg.has_analogue) throw std::invalid_argument("config: missing analogue section");
    if (!sequence_dataset(cfg))
      throw std::invalid_argument("config: analogue needs a sequence dataset");
    if (cfg.analogue.taus.empty())
      throw std::invalid_argument("config: analogue.taus must be nonempty");
    for (double t : cfg.analogue.taus)
      if (t < 0) throw std::invalid_argument("config: analogue.taus must be nonnegative");
    if (cfg.metric.properties.empty())
      throw std::invalid_argument("config: analogue needs metric.properties");
    if (!file_exists(cfg.metric.properties))
      throw std::invalid_argument("config: metric.properties does not exist: " +
                                  cfg.metric.properties);
  } else {
    throw std::invalid_argument("unknown stage: " + stage);
  }
}

void cmd_make_dataset(const ExperimentConfig& cfg) {
  ensure_dir(cfg.out_dir);
  Rng rng(cfg.seed);
  int n = cfg.dataset.n;
  std::string data_file = cfg.out_dir + "/dataset.csv";
  if (cfg.dataset.kind == "synthetic_seq") {
    SequenceDataset ds = gen_synthetic_sequences(n, cfg.dataset.min_len, cfg.dataset.max_len,
                                                 cfg.dataset.alphabet, rng);
    save_sequence_csv(ds, data_file);
  } else {
    PointCloud pc = cfg.dataset.kind == "arch"
                        ? gen_arch(n, cfg.dataset.noise_sigma, rng)
                        : gen_swiss_roll(n, cfg.dataset.noise_sigma, default_swiss_rotation(),
                                         rng);
    if (cfg.dataset.standardize) {
      for (int c = 0; c < pc.d(); ++c) {
        double mean = 0;
        for (int i = 0; i < n; ++i) mean += pc.X.at(i, c);
        mean /= n;
        double ss = 0;
        for (int i = 0; i < n; ++i) ss += (pc.X.at(i, c) - mean) * (pc.X.at(i, c) - mean);
        double sd = std::sqrt(ss / n);
        if (sd == 0.0)
          throw std::runtime_error("make-dataset: column " + std::to_string(c) +
                                   " is constant, cannot standardize");
        for (int i = 0; i < n; ++i) pc.X.at(i, c) = (pc.X.at(i, c) - mean) / sd;
      }
    }
    save_pointcloud_csv(pc, data_file);
  }
  auto [train_idx, test_idx] = config_split(cfg, n);
  write_json(cfg.out_dir + "/split.json", json{{"train", train_idx}, {"test", test_idx}});
  update_manifest(cfg, "make-dataset", {}, {data_file, cfg.out_dir + "/split.json"});
}

void cmd_distances(const ExperimentConfig& cfg) {
  ensure_dir(cfg.out_dir);
  int threads = env_threads();
  DistanceMatrix dm;
  if (cfg.metric.kind == "isomap") {
    PointCloud pc = load_config_pointcloud(cfg);
    dm = graph_geodesics(knn_graph(pc.X, cfg.metric.k), threads);
  } else {
    SequenceDataset ds = load_config_sequences(cfg);
    PropertyConfig pcfg = load_property_config(cfg.metric.properties);
    auto [train_idx, test_idx] = config_split(cfg, ds.n());
    dm = composite_matrix(ds.seqs, train_idx, pcfg);
  }
  dm.dataset_hash = sha256_file(dataset_path(cfg));
  std::string base = cfg.out_dir + "/distances";
  save_distance_matrix(dm, base);
  std::vector<std::string> inputs = {dataset_path(cfg)};
  if (cfg.metric.kind == "composite_seq") inputs.push_back(cfg.metric.properties);
  update_manifest(cfg, "distances", inputs, {base + ".json", base + ".bin"});
}

namespace {

void write_isometry_artifacts(const ExperimentConfig& cfg, const IsometryResult& r,
                              bool with_codec, const std::vector<std::string>& inputs) {
  save_diffeo(r.model, cfg.out_dir + "/diffeo.json");
  std::vector<std::string> outputs = {cfg.out_dir + "/diffeo.json"};
  if (with_codec) {
    write_json(cfg.out_dir + "/codec.json", codec_to_json(r.codec));
    outputs.push_back(cfg.out_dir + "/codec.json");
  }
  json rep = {{"best_epoch", r.report.best_epoch},
              {"best_test_loss", r.report.best_test_loss},
              {"eps_inv", r.report.eps_inv},
              {"eps_ld", r.report.eps_ld},
              {"eps_iso", r.report.eps_iso},
              {"epochs", r.report.history.size()}};
  write_json(cfg.out_dir + "/isometry_report.json", rep);
  outputs.push_back(cfg.out_dir + "/isometry_report.json");

  std::ostringstream ss;
  ss << "epoch,train_l1,train_l2,train_l3,train_l4,train_total,"
     << "test_l1,test_l2,test_l3,test_l4,test_total,lr,is_best\n";
  for (const EpochLog& e : r.report.history) {
    ss << e.epoch << ',' << fmt_csv(e.train_l1) << ',' << fmt_csv(e.train_l2) << ','
       << fmt_csv(e.train_l3) << ',' << fmt_csv(e.train_l4) << ',' << fmt_csv(e.train_total)
       << ',' << fmt_csv(e.test_l1) << ',' << fmt_csv(e.test_l2) << ',' << fmt_csv(e.test_l3)
       << ',' << fmt_csv(e.test_l4) << ',' << fmt_csv(e.test_total) << ',' << fmt_csv(e.lr)
       << ',' << (e.is_best ? 1 : 0) << '\n';
  }
  atomic_write_file(cfg.out_dir + "/isometry_history.csv", ss.str());
  outputs.push_back(cfg.out_dir + "/isometry_history.csv");
  update_manifest(cfg, "train-isometry", inputs, outputs);
}

}  // namespace

void cmd_train_isometry(const ExperimentConfig& cfg) {
  ensure_dir(cfg.out_dir);
  std::string base = distances_base(cfg);
  DistanceMatrix dm = load_distance_matrix(base);
  IsometryTrainConfig icfg = cfg.isometry;
  icfg.seed = cfg.seed;
  icfg.split_fraction = cfg.split_fraction;
  std::vector<std::string> inputs = {dataset_path(cfg), base + ".json", base + ".bin"};
  if (sequence_dataset(cfg)) {
    SequenceDataset ds = load_config_sequences(cfg);
    SequenceCodec codec = build_codec(cfg, ds);
    auto [train_idx, test_idx] = config_split(cfg, ds.n());
    IsometryResult r = train_isometry_seq(ds, codec, dm, icfg, train_idx, test_idx);
    write_isometry_artifacts(cfg, r, true, inputs);
  } else {
    PointCloud pc = load_config_pointcloud(cfg);
    auto [train_idx, test_idx] = config_split(cfg, pc.n());
    IsometryResult r = train_isometry(pc, dm, icfg, train_idx, test_idx);
    write_isometry_artifacts(cfg, r, false, inputs);
  }
}

void cmd_train_flow(const ExperimentConfig& cfg) {
  ensure_dir(cfg.out_dir);
  PointCloud pc = load_config_pointcloud(cfg);
  FlowTrainConfig fcfg = cfg.flow;
  fcfg.seed = cfg.seed;
  DiffeoModel diffeo;
  const DiffeoModel* dp = nullptr;
  std::vector<std::string> inputs = {dataset_path(cfg)};
  if (fcfg.mode != "cfm") {
    diffeo = load_diffeo(cfg.out_dir + "/diffeo.json");
    dp = &diffeo;
    inputs.push_back(cfg.out_dir + "/diffeo.json");
  }
  auto [train_idx, test_idx] = config_split(cfg, pc.n());
  FlowResult r = train_flow(pc, dp, fcfg, train_idx, test_idx);
  r.model.config_hash = sha256_hex(config_to_json(cfg).dump());
  save_flow(r.model, cfg.out_dir + "/flow.json");

  json rep = {{"best_epoch", r.report.best_epoch},
              {"best_test_mse", r.report.best_test_mse},
              {"mode", fcfg.mode},
              {"dim", r.model.dim},
              {"n_params", r.model.vt.n_params()},
              {"epochs", r.report.history.size()}};
  write_json(cfg.out_dir + "/flow_report.json", rep);

  std::ostringstream ss;
  ss << "epoch,train_mse,test_mse,lr,is_best\n";
  for (const FlowEpochLog& e : r.report.history)
    ss << e.epoch << ',' << fmt_csv(e.train_mse) << ',' << fmt_csv(e.test_mse) << ','
       << fmt_csv(e.lr) << ',' << (e.is_best ? 1 : 0) << '\n';
  atomic_write_file(cfg.out_dir + "/flow_history.csv", ss.str());

  update_manifest(cfg, "train-flow", inputs,
                  {cfg.out_dir + "/flow.json", cfg.out_dir + "/flow_report.json",
                   cfg.out_dir + "/flow_history.csv"});
}

void cmd_generate(const ExperimentConfig& cfg) {
  ensure_dir(cfg.out_dir);
  FlowModel fm = load_flow(cfg.out_dir + "/flow.json");
  DiffeoModel diffeo;
  const DiffeoModel* dp = nullptr;
  std::vector<std::string> inputs = {cfg.out_dir + "/flow.json"};
  if (fm.space != GeoSpace::Data) {
    diffeo = load_diffeo(cfg.out_dir + "/diffeo.json");
    dp = &diffeo;
    inputs.push_back(cfg.out_dir + "/diffeo.json");
  }
  Rng base(cfg.seed);
  Rng srng = base.substream(5);  // trainer streams 0..3, codec 4
  Tensor samples = flow_sample(fm, dp, cfg.generate.n_samples, srng);
  PointCloud out;
  out.X = samples;
  save_pointcloud_csv(out, cfg.out_dir + "/samples.csv");
  std::vector<std::string> outputs = {cfg.out_dir + "/samples.csv"};

  if (cfg.generate.n_trajectories > 0) {
    Rng trng = base.substream(6);
    Tensor z0(cfg.generate.n_trajectories, fm.dim);
    trng.fill_normal(z0);
    std::vector<Tensor> frames = flow_trajectory(fm, dp, z0, cfg.generate.n_times);
    std::ostringstream ss;
    ss << "frame,t,sample";
    for (int c = 0; c < frames.front().cols; ++c) ss << ",x" << c;
    ss << "\n";
    for (size_t f = 0; f < frames.size(); ++f) {
      double t = double(f) / double(frames.size() - 1);
      for (int i = 0; i < frames[f].rows; ++i) {
        ss << f << ',' << fmt_csv(t) << ',' << i;
        for (int c = 0; c < frames[f].cols; ++c) ss << ',' << fmt_csv(frames[f].at(i, c));
        ss << '\n';
      }
    }
    atomic_write_file(cfg.out_dir + "/trajectories.csv", ss.str());
    outputs.push_back(cfg.out_dir + "/trajectories.csv");
  }
  update_manifest(cfg, "generate", inputs, outputs);
}

void cmd_evaluate(const ExperimentConfig& cfg) {
  ensure_dir(cfg.out_dir);
  PointCloud pc = load_config_pointcloud(cfg);
  auto [train_idx, test_idx] = config_split(cfg, pc.n());
  json ev;
  std::vector<std::string> inputs = {dataset_path(cfg)};
  std::vector<std::string> outputs = {cfg.out_dir + "/evaluation.json"};

  bool interp = cfg.evaluate.n_pairs > 0 && !cfg.evaluate.spaces.empty();
  if (interp) {
    std::string base = distances_base(cfg);
    DistanceMatrix dm = load_distance_matrix(base);
    inputs.push_back(base + ".json");
    inputs.push_back(base + ".bin");
    DiffeoModel model;
    bool have_model = false;
    for (const std::string& s : cfg.evaluate.spaces) {
      GeoSpace space = space_from_string(s);
      const DiffeoModel* mp = nullptr;
      if (space != GeoSpace::Data) {
        if (!have_model) {
          model = load_diffeo(cfg.out_dir + "/diffeo.json");
          have_model = true;
          inputs.push_back(cfg.out_dir + "/diffeo.json");
        }
        mp = &model;
      }
      InterpolationReport rep =
          interpolation_rmse(mp, pc, dm, space, test_idx, cfg.evaluate.n_pairs);
      ev["interpolation"][s] = {{"mean", rep.mean},
                                {"stdev", rep.stdev},
                                {"n_pairs", rep.per_pair.size()}};
      std::ostringstream ss;
      ss << "pair,rmse\n";
      for (size_t i = 0; i < rep.per_pair.size(); ++i)
        ss << i << ',' << fmt_csv(rep.per_pair[i]) << '\n';
      std::string csv = cfg.out_dir + "/interpolation_" + s + ".csv";
      atomic_write_file(csv, ss.str());
      outputs.push_back(csv);
    }
  }

  if (cfg.evaluate.generation) {
    PointCloud samples = load_pointcloud_csv(cfg.out_dir + "/samples.csv");
    inputs.push_back(cfg.out_dir + "/samples.csv");
    Tensor ref = take_rows(pc.X, test_idx);
    double acc = one_nn_accuracy(samples.X, ref);
    ev["generation"] = {{"one_nn", acc},
                        {"n_generated", samples.n()},
                        {"n_reference", ref.rows}};
  }

  write_json(cfg.out_dir + "/evaluation.json", ev);
  update_manifest(cfg, "evaluate", inputs, outputs);
}

void cmd_analogue(const ExperimentConfig& cfg) {
  ensure_dir(cfg.out_dir);
  SequenceDataset ds = load_config_sequences(cfg);
  DiffeoModel model = load_diffeo(cfg.out_dir + "/diffeo.json");
  SequenceCodec codec = codec_from_json(load_json(cfg.out_dir + "/codec.json"));
  PropertyConfig pcfg = load_property_config(cfg.metric.properties);
  auto [train_idx, test_idx] = config_split(cfg, ds.n());

  std::vector<AnalogueRow> rows;
  std::vector<AnalogueTauReport> reports =
      analogue_scan(model, codec, ds, pcfg, train_idx, cfg.analogue.taus, cfg.seed, &rows);

  json out = json::array();
  for (const AnalogueTauReport& r : reports) {
    json ks = json::object();
    for (size_t p = 0; p < kAllSeqProperties.size(); ++p)
      ks[to_string(kAllSeqProperties[p])] = {{"d", r.ks_d[p]},
                                             {"p", r.ks_p[p]},
                                             {"significant", bool(r.significant[p])}};
    out.push_back({{"tau", r.tau},
                   {"total", r.total},
                   {"in_data", r.in_data},
                   {"novel", r.novel},
                   {"ks", ks}});
  }
  write_json(cfg.out_dir + "/analogue_report.json", out);

  std::ostringstream ss;
  ss << "tau,base_id,base_seq,analogue_seq,in_data\n";
  for (const AnalogueRow& r : rows)
    ss << fmt_csv(r.tau) << ',' << r.base_id << ',' << r.base_seq << ',' << r.analogue_seq
       << ',' << (r.in_data ? 1 : 0) << '\n';
  atomic_write_file(cfg.out_dir + "/analogue_rows.csv", ss.str());

  update_manifest(cfg, "analogue",
                  {dataset_path(cfg), cfg.out_dir + "/diffeo.json", cfg.out_dir + "/codec.json",
                   cfg.metric.properties},
                  {cfg.out_dir + "/analogue_report.json", cfg.out_dir + "/analogue_rows.csv"});
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"pullback flow matching experiment driver"};
  app.require_subcommand(1);
  static const std::vector<std::pair<std::string, std::string>> stages = {
      {"make-dataset", "generate a dataset and split"},
      {"distances", "build the target distance matrix"},
      {"train-isometry", "train the latent diffeomorphism"},
      {"train-flow", "train a generative flow"},
      {"generate", "sample the flow and export trajectories"},
      {"evaluate", "interpolation and generation metrics"},
      {"analogue", "latent jitter analogue scan"}};
  std::string config_path, out_dir;
  uint64_t seed = 0;
  for (const auto& [name, desc] : stages) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_path, "experiment config file")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out_dir, "override the config output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string stage = sub->get_name();
  try {
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (sub->count("--seed")) cfg.seed = seed;
    if (sub->count("--out")) cfg.out_dir = out_dir;
    validate_for_stage(cfg, stage);
    if (stage == "make-dataset")
      cmd_make_dataset(cfg);
    else if (stage == "distances")
      cmd_distances(cfg);
    else if (stage == "train-isometry")
      cmd_train_isometry(cfg);
    else if (stage == "train-flow")
      cmd_train_flow(cfg);
    else if (stage == "generate")
      cmd_generate(cfg);
    else if (stage == "evaluate")
      cmd_evaluate(cfg);
    else
      cmd_analogue(cfg);
  } catch (const std::exception& e) {
    std::cerr << "pfm " << stage << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace pfm
