#include "cli.hpp"

#include "CLI11.hpp"

#include "spudrf/config.hpp"
#include "spudrf/dataset.hpp"
#include "spudrf/errors.hpp"
#include "spudrf/model_io.hpp"
#include "spudrf/report.hpp"
#include "spudrf/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <ostream>

namespace spudrf::cli {
namespace {

namespace fs = std::filesystem;

struct LoadedData {
  Dataset train;
  Dataset test;
};

LoadedData load_data(const DataSource& src) {
  if (src.train_csv) return {load_csv(*src.train_csv), load_csv(*src.test_csv)};
  const Dataset all = src.csv ? load_csv(*src.csv) : generate_synthetic(src.synthetic.value_or(SyntheticSpec{}));
  auto split = split_train_test(all, src.train_fraction, src.split_seed);
  return {std::move(split.train), std::move(split.test)};
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

TrainResult train_and_write(const RunConfig& rc, const LoadedData& data, const fs::path& dir,
                            std::ostream& err) {
  ensure_dir(dir);
  auto result = train(rc.train, data.train, data.test, [&](const std::string& m) { err << m << '\n'; });
  RunConfig echoed = rc;
  echoed.train = effective_config(rc.train);
  result.report.effective_config = to_json(echoed);
  save_model(result.model, dir / "model.json");
  emit_trace(result.report.trace, dir / "trace.csv");
  emit_summary(result.report, dir / "summary.json");
  return result;
}

int cmd_generate(const std::string& spec_path, const std::string& out_path) {
  const auto text = read_text_file(spec_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(spec_path + ": invalid JSON: " + e.what());
  }
  save_csv(generate_synthetic(parse_synthetic_spec(j)), out_path);
  return kExitOk;
}

int cmd_train(const std::string& config_path, const fs::path& out_dir, std::ostream& err) {
  const auto rc = load_run_config(config_path);
  const auto data = load_data(rc.data);
  train_and_write(rc, data, out_dir, err);
  return kExitOk;
}

int cmd_evaluate(const std::string& model_path, const std::string& data_path, double cs_level,
                 std::ostream& out) {
  if (!(cs_level >= 0.0)) throw ConfigError("invalid value for '--cs-level': must be non-negative");
  const auto model = load_model(model_path);
  const auto data = load_csv(data_path);
  if (data.feature_dim != model.backbone.input_dim())
    throw InputError(data_path + ": feature width " + std::to_string(data.feature_dim) +
                     " does not match model input width " + std::to_string(model.backbone.input_dim()));
  const auto ev = evaluate(model, data, cs_level);
  nlohmann::json j;
  j["mae"] = ev.mae;
  j["cs"] = ev.cs;
  out << j.dump() << '\n';
  return kExitOk;
}

int cmd_ablate(const std::string& config_path, const fs::path& out_dir, std::ostream& err) {
  const auto rc = load_run_config(config_path);
  const auto data = load_data(rc.data);
  ensure_dir(out_dir);
  std::string table = "arm,test_mae,test_cs,rare_region_mae\n";
  for (auto mode : {TrainMode::kDrf, TrainMode::kSpDrf, TrainMode::kSpudrf}) {
    RunConfig arm = rc;
    arm.train.mode = mode;
    const std::string name(mode_name(mode));
    err << "ablation arm " << name << '\n';
    const auto result = train_and_write(arm, data, out_dir / name, err);
    const auto& f = result.report.final_metrics;
    table += name + ',' + fmt(f.test_mae) + ',' + fmt(f.test_cs) + ',' + fmt(f.rare_region_mae) + '\n';
  }
  write_text_file(out_dir / "ablation.csv", table);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-paced deep regression forests with entropy-aware sample selection", "spudrf"};
  app.require_subcommand(1);

  std::string spec_path, out_path, config_path, out_dir, model_path, data_path;
  double cs_level = 5.0;

  auto* generate = app.add_subcommand("generate", "Write a synthetic imbalanced dataset as CSV");
  generate->add_option("--spec", spec_path, "Synthetic spec JSON")->required();
  generate->add_option("--out", out_path, "Output CSV")->required();

  auto* train_cmd = app.add_subcommand("train", "Train one model; writes model.json, trace.csv, summary.json");
  train_cmd->add_option("--config", config_path, "Run config JSON")->required();
  train_cmd->add_option("--out-dir", out_dir, "Output directory")->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "Print MAE and CS of a model on a CSV as JSON");
  eval_cmd->add_option("--model", model_path, "Model JSON")->required();
  eval_cmd->add_option("--data", data_path, "Dataset CSV")->required();
  eval_cmd->add_option("--cs-level", cs_level, "Cumulative-score error level L");

  auto* ablate = app.add_subcommand("ablate", "Run DRF, SP-DRF and SPUDRF with a shared seed");
  ablate->add_option("--config", config_path, "Run config JSON")->required();
  ablate->add_option("--out-dir", out_dir, "Output directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "spudrf: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (generate->parsed()) return cmd_generate(spec_path, out_path);
    if (train_cmd->parsed()) return cmd_train(config_path, out_dir, err);
    if (eval_cmd->parsed()) return cmd_evaluate(model_path, data_path, cs_level, out);
    if (ablate->parsed()) return cmd_ablate(config_path, out_dir, err);
  } catch (const ConfigError& e) {
    err << "spudrf: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "spudrf: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "spudrf: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InputError& e) {
    err << "spudrf: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "spudrf: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace spudrf::cli
