#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "kdistill/pipeline.hpp"

namespace {

using kdistill::json;
using kdistill::RunConfig;

std::vector<double> parse_values_csv(const std::string& csv) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto comma = csv.find(',', start);
    const std::string part = csv.substr(start, comma - start);
    if (!part.empty()) {
      try {
        out.push_back(std::stod(part));
      } catch (const std::exception&) {
        throw kdistill::ConfigError("--values: cannot parse '" + part + "' as a number");
      }
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kdistill: knowledge injection via context distillation on a toy LM"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string editor;
  std::string axis;
  std::string values_csv;
  long long seed = -1;
  int entities = -1;
  std::vector<std::string> overrides;

  app.add_option("--config", config_path, "JSON config file")->expected(1);
  app.add_option("--seed", seed, "global seed override");
  app.add_option("--out", out_dir, "run directory override");
  app.add_option("--editor", editor, "run a single editor kind");
  app.add_option("--entities", entities, "number of novel entities to edit/evaluate");
  app.add_option("--set", overrides, "config override as section.key=value (repeatable)");

  auto* sweep_cmd = app.add_subcommand("sweep", "edit+eval across one axis");
  sweep_cmd->add_option("--axis", axis, "n_entities | learning_rate | n_continuations")->required();
  sweep_cmd->add_option("--values", values_csv, "comma-separated axis values")->required();

  for (const char* name : {"gen-world", "pretrain", "gen-transfer", "edit", "eval", "ablate"}) {
    app.add_subcommand(name, "");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    json j = json::object();
    if (!config_path.empty()) {
      try {
        j = json::parse(kdistill::read_file(config_path));
      } catch (const nlohmann::json::parse_error& e) {
        throw kdistill::ConfigError("config parse error: " + std::string(e.what()));
      }
    }
    for (const auto& kv : overrides) j = RunConfig::apply_override(j, kv);
    if (seed >= 0) j = RunConfig::apply_override(j, "seed=" + std::to_string(seed));
    if (!out_dir.empty()) j["out"] = out_dir;
    if (entities >= 0) j = RunConfig::apply_override(j, "edit.entities=" + std::to_string(entities));
    if (!editor.empty()) j["edit"]["editors"] = json::array({editor});

    const RunConfig cfg = RunConfig::from_json(j);

    if (app.got_subcommand("gen-world")) {
      kdistill::cmd_gen_world(cfg);
    } else if (app.got_subcommand("pretrain")) {
      kdistill::cmd_pretrain(cfg);
    } else if (app.got_subcommand("gen-transfer")) {
      kdistill::cmd_gen_transfer(cfg);
    } else if (app.got_subcommand("edit")) {
      kdistill::cmd_edit(cfg);
    } else if (app.got_subcommand("eval")) {
      kdistill::cmd_eval(cfg);
    } else if (app.got_subcommand("sweep")) {
      kdistill::cmd_sweep(cfg, axis, parse_values_csv(values_csv));
    } else if (app.got_subcommand("ablate")) {
      kdistill::cmd_ablate(cfg);
    }
    return 0;
  } catch (const kdistill::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const kdistill::MissingArtifactError& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return 3;
  } catch (const kdistill::CheckpointError& e) {
    std::cerr << "bad artifact: " << e.what() << "\n";
    return 3;
  } catch (const kdistill::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
