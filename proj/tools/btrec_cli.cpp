#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "btrec/error.hpp"
#include "btrec/pipeline.hpp"

namespace {

int exit_code(btrec::ErrorKind kind) {
  switch (kind) {
    case btrec::ErrorKind::usage: return 2;
    case btrec::ErrorKind::data: return 3;
    case btrec::ErrorKind::internal: return 1;
  }
  return 1;
}

const char* kind_name(btrec::ErrorKind kind) {
  switch (kind) {
    case btrec::ErrorKind::usage: return "usage";
    case btrec::ErrorKind::data: return "data";
    case btrec::ErrorKind::internal: return "internal";
  }
  return "internal";
}

// Single line: error kind=<kind> name=<Name> message=<text>
void report(const char* kind, const std::string& name, std::string message) {
  for (char& c : message) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cerr << "error kind=" << kind << " name=" << name << " message=" << message << '\n';
}

const std::map<std::string, std::string> kCommandHelp = {
    {"synth", "generate a synthetic check-in world"},
    {"ingest", "parse a check-in log into trajectories"},
    {"split", "time-ordered train/validation/test split"},
    {"train", "train an encoder on the training split"},
    {"sweep", "train while selecting the epoch count on validation"},
    {"recommend", "recommend one itinerary"},
    {"evaluate", "score a model on a split"},
    {"bench", "sweep, train and evaluate every model"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BTREC itinerary recommender: corpus building, training, decoding and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("btrec ") + btrec::kToolVersion);

  std::map<std::string, std::string> values;
  std::map<std::string, CLI::App*> commands;
  std::string config_file;
  for (const auto& name : btrec::command_names()) {
    CLI::App* sub = app.add_subcommand(name, kCommandHelp.at(name));
    sub->add_option("--config", config_file, "INI configuration file ([section] key = value)");
    for (const auto& s : btrec::settings()) {
      if (s.is_switch) {
        sub->add_flag_callback("--" + s.flag, [&values, key = s.key] { values[key] = "true"; }, s.help);
      } else {
        sub->add_option_function<std::string>(
            "--" + s.flag, [&values, key = s.key](const std::string& v) { values[key] = v; },
            s.help + (s.default_value.empty() ? "" : " [" + s.default_value + "]"));
      }
    }
    commands[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report("usage", "UsageError", e.what());
    return 2;
  }

  try {
    std::string command;
    for (const auto& [name, sub] : commands) {
      if (sub->parsed()) command = name;
    }
    std::optional<std::filesystem::path> cfg_path;
    if (!config_file.empty()) cfg_path = config_file;
    const auto cfg = btrec::RunConfig::resolve(values, cfg_path);
    btrec::run_command(command, cfg, std::cout);
  } catch (const btrec::Error& e) {
    report(kind_name(e.kind()), e.name(), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    report("internal", "InternalError", e.what());
    return 1;
  }
  return 0;
}
