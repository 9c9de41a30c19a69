// Command-line front end: run full experiments from a JSON config, inspect
// basis dimensions, and extend or evaluate saved models across dimensions.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <string>

#include "anydim/experiment.hpp"

namespace {

int run_command(const std::string& config_path, const std::string& output_override,
                std::uint64_t seed_override, bool has_seed) {
  anydim::ExperimentConfig config = anydim::load_experiment_config(config_path);
  if (!output_override.empty()) config.output_dir = output_override;
  if (has_seed) config.seed = seed_override;
  const auto out = anydim::run_experiment(config);
  std::cout << out.summary.dump(2) << "\n";
  return out.failures.empty() ? 0 : 3;
}

std::string degrees_string(const anydim::SeqExpr& e) {
  const auto d = e.degrees();
  std::string s = "generation " + std::to_string(d.generation) + ", presentation " +
                  std::to_string(d.presentation);
  if (d.presentation_assumed) s += " (assumed)";
  return s;
}

int basis_command(const std::string& in, const std::string& out, const std::string& group,
                  anydim::Index level, const std::string& mode_name, bool bias,
                  const std::string& save_path) {
  const anydim::GroupFamily family = anydim::GroupFamily::parse(group);
  const anydim::BasisMode mode = anydim::basis_mode_from_string(mode_name);
  const anydim::SeqExpr out_expr = anydim::SeqExpr::parse(out);
  anydim::EqBasis basis;
  if (bias) {
    basis = anydim::bias_basis(out_expr, family, level, mode);
    std::cout << "bias space of " << out_expr.to_string() << " [" << degrees_string(out_expr)
              << "]\n";
  } else if (in.empty()) {
    if (mode == anydim::BasisMode::compatible)
      throw anydim::ConfigError("compatible invariant vectors are bias spaces; pass --bias");
    basis = anydim::invariant_basis(out_expr, family, level);
    std::cout << "invariant space of " << out_expr.to_string() << " [" << degrees_string(out_expr)
              << "]\n";
  } else {
    const anydim::SeqExpr in_expr = anydim::SeqExpr::parse(in);
    basis = anydim::weight_basis(in_expr, out_expr, family, level, mode);
    const anydim::SeqExpr product = anydim::SeqExpr::tensor({in_expr, out_expr});
    std::cout << "map space " << in_expr.to_string() << " -> " << out_expr.to_string() << " ["
              << degrees_string(product) << "]\n";
  }
  std::cout << "group " << family.name() << ", level " << level << ", mode " << mode_name << "\n";
  std::cout << "basis dimension: " << basis.count() << "\n";
  if (!save_path.empty()) {
    basis.save(save_path);
    std::cout << "saved to " << save_path << "\n";
  }
  return 0;
}

int extend_command(const std::string& model_path, anydim::Index to, std::string save_path) {
  const auto loaded = anydim::load_network(model_path);
  const anydim::TrainedNetwork extended = anydim::extend_network(loaded.net, to);
  if (save_path.empty()) {
    const std::filesystem::path p(model_path);
    save_path = (p.parent_path() / (p.stem().string() + "_n" + std::to_string(to) + ".json")).string();
  }
  anydim::save_network(extended, save_path, loaded.task_name);
  std::cout << "extended " << loaded.net.level() << " -> " << to << ", saved to " << save_path
            << "\n";
  return 0;
}

int eval_command(const std::string& model_path, const std::string& dims_text,
                 anydim::Index samples, std::uint64_t seed, const std::string& task_override,
                 const std::string& csv_path) {
  const auto loaded = anydim::load_network(model_path);
  const std::string task_name = task_override.empty() ? loaded.task_name : task_override;
  if (task_name.empty())
    throw anydim::ConfigError("model file does not record a task; pass --task");
  const anydim::Task task = anydim::task_from_string(task_name);
  const auto dims = anydim::parse_dims(dims_text);
  std::vector<anydim::EvaluationFailure> failures;
  std::unique_ptr<anydim::CsvWriter> csv;
  if (!csv_path.empty()) csv = std::make_unique<anydim::CsvWriter>(csv_path);
  const auto records =
      anydim::evaluate_across_dims(loaded.net, task, dims, samples, seed, {}, &failures, csv.get());
  std::cout << anydim::kResultsCsvHeader << "\n";
  for (const auto& r : records)
    std::cout << r.task << ',' << r.mode << ',' << r.run << ',' << r.dimension << ',' << r.metric
              << ',' << anydim::CsvWriter::format_double(r.value) << ','
              << anydim::CsvWriter::format_double(r.wall_ms) << "\n";
  return failures.empty() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"any-dimension equivariant networks: train once, extend everywhere"};
  app.require_subcommand(1);

  std::string config_path, output_dir;
  std::uint64_t seed = 0;
  auto* run = app.add_subcommand("run", "run an experiment from a JSON config");
  run->add_option("--config", config_path, "experiment config file")->required();
  run->add_option("--output-dir", output_dir, "override the output directory");
  auto* seed_opt = run->add_option("--seed", seed, "override the config seed");

  std::string in_expr, out_expr, group = "Sn", mode = "free", save_path;
  anydim::Index level = 5;
  bool bias = false;
  auto* basis = app.add_subcommand("basis", "compute a basis and print its dimension");
  basis->add_option("--in", in_expr, "input sequence expression (omit for invariant vectors)");
  basis->add_option("--out", out_expr, "output/space sequence expression")->required();
  basis->add_option("--group", group, "group family: Sn, On, SOn, Bn, trivial");
  basis->add_option("--level", level, "level n")->required();
  basis->add_option("--mode", mode, "free or compatible");
  basis->add_flag("--bias", bias, "bias space instead of a map space");
  basis->add_option("--save", save_path, "write the basis to this file");

  std::string model_path;
  anydim::Index to_level = 0;
  auto* extend = app.add_subcommand("extend", "extend a saved model to another dimension");
  extend->add_option("--model", model_path, "model file")->required();
  extend->add_option("--to", to_level, "target dimension")->required();
  extend->add_option("--save", save_path, "output model file");

  std::string dims_text = "2..10", task_override, csv_path;
  anydim::Index samples = 1000;
  std::uint64_t eval_seed = 7;
  auto* eval = app.add_subcommand("eval", "evaluate a saved model across dimensions");
  eval->add_option("--model", model_path, "model file")->required();
  eval->add_option("--dims", dims_text, "dimensions, e.g. 2..15 or 3,5,8");
  eval->add_option("--samples", samples, "test samples per dimension");
  eval->add_option("--seed", eval_seed, "test data seed");
  eval->add_option("--task", task_override, "task providing ground truth");
  eval->add_option("--csv", csv_path, "append records to this CSV file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_command(config_path, output_dir, seed, seed_opt->count() > 0);
    if (basis->parsed())
      return basis_command(in_expr, out_expr, group, level, mode, bias, save_path);
    if (extend->parsed()) return extend_command(model_path, to_level, save_path);
    if (eval->parsed())
      return eval_command(model_path, dims_text, samples, eval_seed, task_override, csv_path);
  } catch (const anydim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
