#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "anydim/training.hpp"

namespace anydim {

struct ResultRecord {
  std::string task;
  std::string mode;
  Index run = 0;
  Index dimension = 0;
  std::string metric;  // mse | mse_per_entry | squared_sine
  double value = 0.0;
  double wall_ms = 0.0;
};

inline constexpr const char* kResultsCsvHeader = "task,mode,run,dimension,metric,value,wall_ms";

// Appends records to a stable-schema CSV; the header is written once when the
// file is created and rows are flushed as they are produced so that partial
// results survive an aborted run.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    out_.open(path, std::ios::app);
    if (!out_) throw ConfigError("cannot open '" + path.string() + "' for writing");
    if (fresh) out_ << kResultsCsvHeader << "\n" << std::flush;
  }

  void write(const ResultRecord& r) {
    out_ << r.task << ',' << r.mode << ',' << r.run << ',' << r.dimension << ',' << r.metric << ','
         << format_double(r.value) << ',' << format_double(r.wall_ms) << "\n"
         << std::flush;
  }

  static std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
  }

 private:
  std::ofstream out_;
};

struct ExperimentConfig {
  Task task = Task::trace;
  std::vector<BasisMode> modes = {BasisMode::compatible};
  Index n0 = 5;
  std::vector<Index> dims;
  Index runs = 1;
  Index train_samples = 3000;
  Index test_samples = 1000;
  TrainHyperparams hyper;
  std::uint64_t seed = 1;
  std::string output_dir = "results";
  bool save_models = true;

  void validate() const {
    if (dims.empty()) throw ConfigError("config: need at least one evaluation dimension");
    if (runs < 1) throw ConfigError("config: runs must be >= 1");
    if (n0 < 1) throw ConfigError("config: n0 must be >= 1");
    if (train_samples < 1) throw ConfigError("config: train_samples must be >= 1");
    if (test_samples < 1) throw ConfigError("config: test_samples must be >= 1");
    for (Index d : dims)
      if (d < 1) throw ConfigError("config: dimensions must be >= 1");
  }
};

// "2..12" or "2,5,7" or a number.
inline std::vector<Index> parse_dims(const std::string& text) {
  std::vector<Index> dims;
  std::size_t at = 0;
  while (at < text.size()) {
    std::size_t comma = text.find(',', at);
    if (comma == std::string::npos) comma = text.size();
    const std::string piece = text.substr(at, comma - at);
    const std::size_t dots = piece.find("..");
    try {
      if (dots != std::string::npos) {
        const Index lo = std::stoll(piece.substr(0, dots));
        const Index hi = std::stoll(piece.substr(dots + 2));
        if (hi < lo) throw ConfigError("empty dimension range '" + piece + "'");
        for (Index d = lo; d <= hi; ++d) dims.push_back(d);
      } else if (!piece.empty()) {
        dims.push_back(std::stoll(piece));
      }
    } catch (const std::invalid_argument&) {
      throw ConfigError("cannot parse dimension list '" + text + "'");
    }
    at = comma + 1;
  }
  if (dims.empty()) throw ConfigError("cannot parse dimension list '" + text + "'");
  return dims;
}

inline TrainHyperparams hyperparams_from_json(const nlohmann::json& j) {
  TrainHyperparams hp;
  hp.lr = j.value("lr", hp.lr);
  hp.beta1 = j.value("beta1", hp.beta1);
  hp.beta2 = j.value("beta2", hp.beta2);
  hp.eps = j.value("eps", hp.eps);
  hp.epochs = j.value("epochs", hp.epochs);
  hp.patience = j.value("patience", hp.patience);
  hp.batch = j.value("batch", hp.batch);
  hp.fix_bilinear_coefficients = j.value("fix_bilinear", hp.fix_bilinear_coefficients);
  return hp;
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    c.task = task_from_string(j.at("task").get<std::string>());
    const std::string mode = j.value("mode", "compatible");
    if (mode == "both")
      c.modes = {BasisMode::free, BasisMode::compatible};
    else
      c.modes = {basis_mode_from_string(mode)};
    c.n0 = j.at("n0").get<Index>();
    if (j.at("dims").is_string())
      c.dims = parse_dims(j.at("dims").get<std::string>());
    else
      c.dims = j.at("dims").get<std::vector<Index>>();
    c.runs = j.value("runs", c.runs);
    c.train_samples = j.value("train_samples", c.train_samples);
    c.test_samples = j.value("test_samples", c.test_samples);
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.save_models = j.value("save_models", c.save_models);
    if (j.contains("hyperparams")) c.hyper = hyperparams_from_json(j.at("hyperparams"));
    c.hyper.allow_underdetermined = j.value("allow_underdetermined", false);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return experiment_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Model files.

inline nlohmann::json network_to_json(const TrainedNetwork& net, const std::string& task_name) {
  nlohmann::json j;
  j["format"] = "anydim-model";
  j["version"] = 1;
  if (!task_name.empty()) j["task"] = task_name;
  nlohmann::json spec;
  spec["family"] = net.spec().family.name();
  spec["mode"] = to_string(net.spec().mode);
  spec["loss"] = to_string(net.spec().loss);
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.spec().layers)
    layers.push_back({{"in", l.in.to_string()},
                      {"out", l.out.to_string()},
                      {"activation", l.activation.name()}});
  spec["layers"] = std::move(layers);
  j["spec"] = std::move(spec);
  j["level"] = net.level();
  nlohmann::json coeffs = nlohmann::json::array();
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    const auto& p = net.params()[i];
    nlohmann::json lj;
    lj["weight_coefficients"] = std::vector<double>(
        p.weight_coefficients.data(), p.weight_coefficients.data() + p.weight_coefficients.size());
    lj["bias_coefficients"] = std::vector<double>(
        p.bias_coefficients.data(), p.bias_coefficients.data() + p.bias_coefficients.size());
    lj["activation_coefficients"] =
        std::vector<double>(p.activation_coefficients.data(),
                            p.activation_coefficients.data() + p.activation_coefficients.size());
    lj["weight_basis_checksum"] = net.instance().layers[i].weights.checksum();
    lj["bias_basis_checksum"] = net.instance().layers[i].biases.checksum();
    coeffs.push_back(std::move(lj));
  }
  j["layers"] = std::move(coeffs);
  return j;
}

inline void save_network(const TrainedNetwork& net, const std::string& path,
                         const std::string& task_name = "") {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  f << network_to_json(net, task_name).dump(2);
}

struct LoadedNetwork {
  TrainedNetwork net;
  std::string task_name;  // empty when the file does not record one
};

inline LoadedNetwork load_network(const std::string& path, const BasisOptions& opts = {}) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open model '" + path + "'");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != "anydim-model") throw ConfigError("not a model file");
  if (j.value("version", 0) != 1) throw ConfigError("unsupported model file version");
  NetworkSpec spec;
  const auto& sj = j.at("spec");
  spec.family = GroupFamily::parse(sj.at("family").get<std::string>());
  spec.mode = basis_mode_from_string(sj.at("mode").get<std::string>());
  spec.loss = loss_from_string(sj.at("loss").get<std::string>());
  for (const auto& lj : sj.at("layers"))
    spec.layers.push_back({SeqExpr::parse(lj.at("in").get<std::string>()),
                           SeqExpr::parse(lj.at("out").get<std::string>()),
                           ActivationSpec::parse(lj.at("activation").get<std::string>())});
  const Index level = j.at("level").get<Index>();
  NetworkInstance inst = NetworkInstance::build(spec, level, opts);
  std::vector<LayerParams> params;
  const auto& layers = j.at("layers");
  if (layers.size() != spec.layers.size()) throw ConfigError("model layer count mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& lj = layers[i];
    auto to_vec = [](const nlohmann::json& a) {
      Eigen::VectorXd v(a.size());
      for (std::size_t k = 0; k < a.size(); ++k) v[static_cast<Index>(k)] = a[k].get<double>();
      return v;
    };
    LayerParams p;
    p.weight_coefficients = to_vec(lj.at("weight_coefficients"));
    p.bias_coefficients = to_vec(lj.at("bias_coefficients"));
    p.activation_coefficients = to_vec(lj.at("activation_coefficients"));
    if (lj.contains("weight_basis_checksum") &&
        lj.at("weight_basis_checksum").get<std::uint64_t>() != inst.layers[i].weights.checksum())
      throw ConfigError("layer " + std::to_string(i) +
                        ": weight basis checksum mismatch; the model was saved against a "
                        "different basis");
    if (lj.contains("bias_basis_checksum") &&
        lj.at("bias_basis_checksum").get<std::uint64_t>() != inst.layers[i].biases.checksum())
      throw ConfigError("layer " + std::to_string(i) + ": bias basis checksum mismatch");
    params.push_back(std::move(p));
  }
  LoadedNetwork out{TrainedNetwork::create(std::move(inst), std::move(params)),
                    j.value("task", "")};
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation across dimensions.

inline double evaluate_metric(LossKind kind, const Eigen::MatrixXd& yhat,
                              const Eigen::MatrixXd& y) {
  double total = 0.0;
  for (Index s = 0; s < y.cols(); ++s) total += loss_value(kind, yhat.col(s), y.col(s));
  return total / static_cast<double>(y.cols());
}

struct EvaluationFailure {
  Index dimension = 0;
  std::string message;
};

// Extends the network to each requested dimension and measures the task
// metric on fresh data; a failed dimension is recorded and skipped without
// aborting the rest.
inline std::vector<ResultRecord> evaluate_across_dims(const TrainedNetwork& net, Task task,
                                                      const std::vector<Index>& dims,
                                                      Index samples_per_dim, std::uint64_t seed,
                                                      const BasisOptions& opts = {},
                                                      std::vector<EvaluationFailure>* failures = nullptr,
                                                      CsvWriter* csv = nullptr, Index run = 0) {
  const TaskInfo info = task_info(task);
  std::vector<ResultRecord> records;
  for (Index dim : dims) {
    const auto start = std::chrono::steady_clock::now();
    try {
      const TrainedNetwork at_dim = extend_network(net, dim, opts);
      const Dataset test =
          make_dataset(task, dim, samples_per_dim, Rng::derive(seed, static_cast<std::uint64_t>(dim)));
      const Eigen::MatrixXd out = at_dim.forward_batch(test.inputs);
      const double value = evaluate_metric(info.loss, out, test.targets);
      const double ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - start)
                            .count();
      ResultRecord r{info.name, to_string(net.spec().mode), run, dim, info.metric, value, ms};
      if (csv) csv->write(r);
      records.push_back(std::move(r));
    } catch (const std::exception& e) {
      if (failures) failures->push_back({dim, e.what()});
      std::cerr << "evaluation at dimension " << dim << " failed: " << e.what() << "\n";
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// Full experiment driver: train at n0, extend everywhere, evaluate, persist.

struct ExperimentOutput {
  std::vector<ResultRecord> records;
  std::vector<EvaluationFailure> failures;
  nlohmann::json summary;
};

inline ExperimentOutput run_experiment(const ExperimentConfig& config,
                                       const BasisOptions& opts = {}) {
  config.validate();
  const TaskInfo info = task_info(config.task);
  std::filesystem::create_directories(config.output_dir);
  CsvWriter csv(std::filesystem::path(config.output_dir) / "results.csv");

  ExperimentOutput output;
  nlohmann::json run_log = nlohmann::json::array();

  for (Index run = 0; run < config.runs; ++run) {
    for (BasisMode mode : config.modes) {
      const std::uint64_t run_seed = Rng::derive(config.seed, static_cast<std::uint64_t>(run),
                                                 mode == BasisMode::free ? 0x0Fu : 0x0Cu);
      NetworkSpec spec = default_network_spec(config.task, mode);
      TrainHyperparams hp = config.hyper;

      const auto train_start = std::chrono::steady_clock::now();
      const Dataset dataset =
          make_dataset(config.task, config.n0, config.train_samples, Rng::derive(run_seed, 0xDA7A));
      TrainReport report;
      TrainedNetwork net;
      try {
        net = train(spec, dataset, hp, run_seed, opts, &report);
      } catch (const std::exception& e) {
        throw NumericalError("stage 1 (training, task " + info.name + ", mode " +
                             to_string(mode) + ", run " + std::to_string(run) + "): " + e.what());
      }
      const double train_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - train_start)
              .count();

      if (config.save_models) {
        const std::string model_path =
            (std::filesystem::path(config.output_dir) /
             ("model_" + info.name + "_" + to_string(mode) + "_run" + std::to_string(run) + ".json"))
                .string();
        save_network(net, model_path, info.name);
      }

      auto records = evaluate_across_dims(net, config.task, config.dims, config.test_samples,
                                          Rng::derive(run_seed, 0x7E57), opts, &output.failures,
                                          &csv, run);
      output.records.insert(output.records.end(), records.begin(), records.end());

      nlohmann::json entry;
      entry["run"] = run;
      entry["mode"] = to_string(mode);
      entry["train_wall_ms"] = train_ms;
      entry["epochs_run"] = report.epochs_run;
      entry["best_validation_loss"] = report.best_validation_loss;
      entry["required_level_for_unique_extension"] = required_training_level(spec);
      entry["non_unique_extension"] = config.n0 < required_training_level(spec);
      run_log.push_back(std::move(entry));
    }
  }

  // Summary: min / mean / max over runs per (mode, dimension).
  std::map<std::pair<std::string, Index>, std::vector<double>> grouped;
  for (const auto& r : output.records) grouped[{r.mode, r.dimension}].push_back(r.value);
  nlohmann::json per_dim = nlohmann::json::array();
  for (const auto& [key, values] : grouped) {
    double lo = values.front(), hi = values.front(), sum = 0.0;
    for (double v : values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
    per_dim.push_back({{"mode", key.first},
                       {"dimension", key.second},
                       {"metric", info.metric},
                       {"min", lo},
                       {"mean", sum / static_cast<double>(values.size())},
                       {"max", hi},
                       {"runs", values.size()}});
  }
  output.summary["task"] = info.name;
  output.summary["n0"] = config.n0;
  output.summary["per_dimension"] = std::move(per_dim);
  output.summary["training"] = std::move(run_log);
  if (!output.failures.empty()) {
    nlohmann::json fj = nlohmann::json::array();
    for (const auto& f : output.failures) fj.push_back({{"dimension", f.dimension}, {"message", f.message}});
    output.summary["failures"] = std::move(fj);
  }
  std::ofstream sf(std::filesystem::path(config.output_dir) / ("summary_" + info.name + ".json"));
  sf << output.summary.dump(2);
  return output;
}

}  // namespace anydim
