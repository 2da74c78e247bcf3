#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kssp/pipeline.hpp"

namespace {

struct GlobalArgs {
  std::string config;
  std::string out = "out";
  std::optional<uint64_t> seed;
};

int dispatch(const std::string& command, const GlobalArgs& args) {
  kssp::PipelineConfig cfg = kssp::parse_config(args.config, args.seed);
  if (command == "simulate") return kssp::cmd_simulate(cfg, args.out);
  if (command == "fit") return kssp::cmd_fit(cfg, args.out);
  if (command == "program") return kssp::cmd_program(cfg, args.out);
  if (command == "verify") return kssp::cmd_verify(cfg, args.out);
  return kssp::cmd_pipeline(cfg, args.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman steady-state programming: simulate, fit, program, verify"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs args;
  uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "override every block seed");
  app.add_option("--config", args.config, "pipeline configuration JSON")->required();
  app.add_option("--out", args.out, "artifact directory (default ./out)");

  const std::array<std::pair<const char*, const char*>, 5> commands = {{
      {"simulate", "generate the trajectory dataset"},
      {"fit", "fit the model and run the multi-step prediction test"},
      {"program", "solve the steady-state program for each target"},
      {"verify", "compare the programmed input against the true simulator"},
      {"pipeline", "run simulate, fit, program and verify in sequence"},
  }};
  for (const auto& [name, description] : commands) app.add_subcommand(name, description);

  CLI11_PARSE(app, argc, argv);
  if (seed_opt->count() > 0) args.seed = seed_value;

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return dispatch(command, args);
  } catch (const kssp::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const kssp::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const kssp::NumericsError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
