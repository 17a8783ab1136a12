// lungdn: command-line front end for corpus preparation, noise mixing,
// training, inference, evaluation, ablation and reporting.

#include <fstream>
#include <iostream>
#include <list>
#include <map>

#include "CLI11.hpp"
#include "lungdn/errors.hpp"
#include "lungdn/model.hpp"
#include "lungdn/pipeline.hpp"

namespace {

using lungdn::pipeline::Json;

const std::map<std::string, std::string> kDescriptions = {
    {"fixtures", "write synthetic lung, heart and hospital WAV fixtures"},
    {"prepare", "filter, resample, normalize, segment and split a WAV directory"},
    {"mix", "mix clean segments with noise at the configured SNR grid"},
    {"train", "train one model variant on a mixed corpus"},
    {"denoise", "run a checkpoint over a directory of segments"},
    {"eval", "score a checkpoint (or denoised files) on the test split"},
    {"ablate", "train and evaluate several variants on one corpus"},
    {"report", "render SNR-improvement charts from an ablation table"},
    {"pipeline", "fixtures, prepare, mix, train and eval in one run"},
};

std::string flag_name(const std::string& key) {
  std::string s = "--" + key;
  for (auto& c : s)
    if (c == '_') c = '-';
  return s;
}

// Storage for one generated option; the value is copied into the argument
// object only when the flag was given.
struct Binding {
  std::string key;
  CLI::Option* opt = nullptr;
  std::string s;
  double d = 0;
  long long i = 0;
  bool b = false;
  std::vector<std::string> list;
  Json::value_t type;
  bool numeric_list = false;
};

struct Command {
  std::string name;
  CLI::App* app = nullptr;
  std::string args_file;
  std::list<Binding> bindings;
};

void bind_options(Command& cmd) {
  const auto defaults = lungdn::pipeline::default_args(cmd.name);
  cmd.app->add_option("--args", cmd.args_file, "JSON file with arguments (flags override it)");
  for (auto it = defaults.begin(); it != defaults.end(); ++it) {
    if (it.value().is_object()) continue;
    auto& b = cmd.bindings.emplace_back();
    b.key = it.key();
    b.type = it.value().type();
    const auto flag = flag_name(b.key);
    const auto help = "default: " + it.value().dump();
    switch (b.type) {
      case Json::value_t::string: b.opt = cmd.app->add_option(flag, b.s, help); break;
      case Json::value_t::boolean:
        b.opt = cmd.app->add_flag(flag + ",!--no-" + flag.substr(2), b.b, help);
        break;
      case Json::value_t::number_float: b.opt = cmd.app->add_option(flag, b.d, help); break;
      case Json::value_t::number_integer:
      case Json::value_t::number_unsigned: b.opt = cmd.app->add_option(flag, b.i, help); break;
      case Json::value_t::array:
        b.numeric_list = b.key == "levels";
        b.opt = cmd.app->add_option(flag, b.list, help + " (comma separated)")->delimiter(',');
        break;
      default: break;
    }
  }
}

Json collect(const Command& cmd) {
  Json args = Json::object();
  if (!cmd.args_file.empty()) {
    std::ifstream in(cmd.args_file);
    if (!in) throw lungdn::IoError("cannot open " + cmd.args_file);
    try {
      args = Json::parse(in);
    } catch (const Json::exception& e) {
      throw lungdn::ParseError(cmd.args_file + ": " + e.what());
    }
    if (args.contains("command") && args.contains("args")) args = args.at("args");
  }
  for (const auto& b : cmd.bindings) {
    if (!b.opt || b.opt->count() == 0) continue;
    switch (b.type) {
      case Json::value_t::string: args[b.key] = b.s; break;
      case Json::value_t::boolean: args[b.key] = b.b; break;
      case Json::value_t::number_float: args[b.key] = b.d; break;
      case Json::value_t::number_integer:
      case Json::value_t::number_unsigned:
        if (b.i < 0) throw lungdn::ConfigError(flag_name(b.key) + " must not be negative");
        args[b.key] = b.i;
        break;
      case Json::value_t::array:
        if (b.numeric_list) {
          std::vector<double> v;
          for (const auto& s : b.list) {
            try {
              v.push_back(std::stod(s));
            } catch (const std::exception&) {
              throw lungdn::ConfigError(flag_name(b.key) + ": not a number: " + s);
            }
          }
          args[b.key] = v;
        } else {
          args[b.key] = b.list;
        }
        break;
      default: break;
    }
  }
  return args;
}

int print_params(const std::string& variant) {
  const auto cfg = lungdn::model::ModelConfig::variant(variant);
  lungdn::model::Uformer<float> net(cfg);
  for (const auto& l : net.itemize()) std::cout << l.layer << ',' << l.parameters << '\n';
  std::cout << "total," << net.parameter_count() << "\ntrainable," << net.trainable_count() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lung-sound denoising toolkit"};
  app.require_subcommand(1);
  std::list<Command> commands;
  for (const auto& name : lungdn::pipeline::commands()) {
    auto& c = commands.emplace_back();
    c.name = name;
    c.app = app.add_subcommand(name, kDescriptions.count(name) ? kDescriptions.at(name) : name);
    bind_options(c);
  }
  auto* replay = app.add_subcommand("replay", "re-run a command from its runspec.json");
  std::string runspec, replay_out;
  replay->add_option("runspec", runspec, "runspec.json written by an earlier run")->required();
  replay->add_option("--out", replay_out, "write to this directory instead of the recorded one");
  auto* params = app.add_subcommand("params", "print the per-layer parameter itemization");
  std::string variant = "uformer";
  params->add_option("--variant", variant, "noformer, uformer or uformer+");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (replay->parsed()) {
      lungdn::pipeline::replay(runspec, replay_out, std::cerr);
      return 0;
    }
    if (params->parsed()) return print_params(variant);
    for (auto& c : commands) {
      if (!c.app->parsed()) continue;
      const auto summary = lungdn::pipeline::run(c.name, collect(c), std::cerr);
      std::cout << summary.dump(2) << '\n';
    }
    return 0;
  } catch (const lungdn::Error& e) {
    std::cerr << "lungdn: " << e.what() << '\n';
    return e.contract() ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "lungdn: internal error: " << e.what() << '\n';
    return 1;
  }
}
