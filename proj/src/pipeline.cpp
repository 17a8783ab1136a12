#include "lungdn/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>

#include "lungdn/checkpoint.hpp"
#include "lungdn/corpus.hpp"
#include "lungdn/errors.hpp"
#include "lungdn/fixtures.hpp"
#include "lungdn/kernels.hpp"
#include "lungdn/parallel.hpp"
#include "lungdn/report.hpp"
#include "lungdn/trainer.hpp"

namespace lungdn::pipeline {

namespace fs = std::filesystem;
using noise::NoiseKind;

namespace {

Json train_defaults() {
  return {{"variant", "uformer"}, {"kinds", Json::array()}, {"epochs", 500},       {"batch_size", 150},
          {"lr", 1e-4},           {"patience", 5},          {"seed", 111},         {"precision", "f64"},
          {"early_stopping", true}, {"deterministic", false}, {"eval_batch_size", 16}, {"model", Json::object()}};
}

Json with(Json base, const Json& extra) {
  for (auto it = extra.begin(); it != extra.end(); ++it) base[it.key()] = it.value();
  return base;
}

std::vector<NoiseKind> kinds_of(const Json& args) {
  std::vector<NoiseKind> out;
  for (const auto& k : args.at("kinds")) out.push_back(noise::parse_kind(k.get<std::string>()));
  return out;
}

fs::path path_arg(const Json& args, const char* key) {
  const auto s = args.at(key).get<std::string>();
  if (s.empty()) throw ConfigError(std::string("missing required argument '") + key + "'");
  return fs::path(s);
}

std::size_t worker_count(const Json& args) {
  if (args.contains("deterministic") && args.at("deterministic").get<bool>()) return 1;
  return thread_count();
}

void write_runspec(const fs::path& dir, const std::string& command, const Json& args) {
  fs::create_directories(dir);
  Json spec = {{"command", command},
               {"args", args},
               {"environment",
                {{"threads", thread_count()}, {"isa", std::string(kernels::isa_name(kernels::active_isa()))}}}};
  std::ofstream(dir / "runspec.json") << spec.dump(2) << '\n';
}

void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

train::TrainConfig train_config(const Json& a) {
  train::TrainConfig cfg;
  cfg.model = model::ModelConfig::variant(a.at("variant").get<std::string>());
  // Layer overrides on top of the named variant, e.g. a narrow network for smoke runs.
  if (a.contains("model") && !a.at("model").empty()) {
    auto base = cfg.model.to_json();
    for (auto it = a.at("model").begin(); it != a.at("model").end(); ++it) {
      if (!base.contains(it.key())) throw ConfigError("unknown model setting '" + it.key() + "'");
      base[it.key()] = it.value();
    }
    cfg.model = model::ModelConfig::from_json(base);
  }
  cfg.epochs = a.at("epochs").get<std::size_t>();
  cfg.batch_size = a.at("batch_size").get<std::size_t>();
  cfg.lr = a.at("lr").get<double>();
  cfg.patience = a.at("patience").get<std::size_t>();
  cfg.seed = a.at("seed").get<std::uint64_t>();
  cfg.precision = model::parse_precision(a.at("precision").get<std::string>());
  cfg.early_stopping = a.at("early_stopping").get<bool>();
  cfg.validate();
  return cfg;
}

void log_report(const metrics::MetricReport& rep, std::ostream& log) {
  for (const auto& g : rep.aggregates)
    log << "  " << g.kind << " " << g.level_db << " dB: pred_snr " << g.pred_snr_db << " dB, improvement "
        << g.snr_improvement_db << " dB, prd " << g.prd << ", rmse " << g.rmse << " (" << g.count << " segments)\n";
}

void save_report(const metrics::MetricReport& rep, const fs::path& out) {
  fs::create_directories(out);
  rep.write_csv(out / "metrics.csv");
  write_json(out / "metrics.json", rep.to_json());
}

// ---------------------------------------------------------------- commands

Json cmd_fixtures(const Json& a, std::ostream& log) {
  const auto out = path_arg(a, "out");
  fixtures::FixtureConfig cfg;
  cfg.lung_clips = a.at("lung_clips");
  cfg.heart_clips = a.at("heart_clips");
  cfg.hospital_clips = a.at("hospital_clips");
  cfg.min_seconds = a.at("min_seconds");
  cfg.max_seconds = a.at("max_seconds");
  cfg.seed = a.at("seed");
  fixtures::write_fixture_set(out, cfg);
  write_runspec(out, "fixtures", a);
  log << "fixtures: " << cfg.lung_clips << " lung, " << cfg.heart_clips << " heart, " << cfg.hospital_clips
      << " hospital clips in " << out.string() << "\n";
  return {{"out", out.string()}};
}

Json cmd_prepare(const Json& a, std::ostream& log) {
  const auto in = path_arg(a, "in"), out = path_arg(a, "out");
  corpus::PrepareConfig cfg;
  cfg.split.seed = a.at("seed");
  cfg.split.train_frac = a.at("train_frac");
  cfg.split.val_frac_of_train = a.at("val_frac");
  cfg.dataset = a.at("dataset");
  cfg.normalize = corpus::parse_normalize(a.at("normalize"));
  cfg.low_hz = a.at("low_hz");
  cfg.high_hz = a.at("high_hz");
  cfg.filter_order = a.at("filter_order");
  auto rep = corpus::prepare_corpus(in, out, cfg);
  write_runspec(out, "prepare", a);
  for (const auto& [file, err] : rep.failures) log << "prepare: skipped " << file << ": " << err << "\n";
  log << "prepare: " << rep.clips << "/" << rep.files << " clips, " << rep.segments << " segments\n";
  return rep.to_json();
}

Json cmd_mix(const Json& a, std::ostream& log) {
  const auto corpus_dir = path_arg(a, "corpus");
  corpus::MixConfig cfg;
  cfg.kinds = kinds_of(a);
  if (cfg.kinds.empty()) cfg.kinds = {NoiseKind::wgn};
  cfg.levels = a.at("levels").get<std::vector<double>>();
  cfg.seed = a.at("seed");
  cfg.threads = worker_count(a);
  const auto pools = load_pools(a.at("heart_pool").get<std::string>(), a.at("hospital_pool").get<std::string>());
  const auto records = corpus::build_noisy_corpus(corpus_dir, pools, cfg);
  write_runspec(corpus_dir / "noisy", "mix", a);
  Json summary = {{"noisy_segments", records.size()}};
  log << "mix: " << records.size() << " noisy segments\n";
  if (a.at("audit").get<bool>()) {
    const auto audit = corpus::audit_mixes(corpus_dir);
    summary["audit"] = {{"checked", audit.checked},
                        {"max_record_error_db", audit.max_record_error_db},
                        {"max_target_error_db", audit.max_target_error_db}};
    log << "mix audit: " << audit.checked << " records, max |recomputed - recorded| = " << audit.max_record_error_db
        << " dB, max |recomputed - target| (exact kinds) = " << audit.max_target_error_db << " dB\n";
  }
  return summary;
}

Json cmd_train(const Json& a, std::ostream& log) {
  const auto corpus_dir = path_arg(a, "corpus"), out = path_arg(a, "out");
  const auto cfg = train_config(a);
  const auto data = corpus::load_pairs(corpus_dir, kinds_of(a));
  write_runspec(out, "train", a);
  log << "train: " << cfg.model.variant_name() << ", " << data.train.size() << " train / " << data.val.size()
      << " val pairs, " << model::precision_name(cfg.precision) << "\n";
  auto result = train::train(data, cfg, out, [&](const train::EpochRecord& e) {
    log << "  epoch " << e.epoch << ": train " << e.train_loss << ", val " << e.val_loss << " (" << e.seconds
        << " s)\n";
    return true;
  });
  log << "train: best epoch " << result.log.best_epoch << " (val " << result.log.best_val_loss << "), stopped by "
      << train::stop_reason_name(result.log.stop_reason) << "\n";
  return result.log.to_json();
}

Json cmd_denoise(const Json& a, std::ostream& log) {
  const auto ckpt = path_arg(a, "checkpoint"), in = path_arg(a, "in"), out = path_arg(a, "out");
  if (!fs::is_directory(in)) throw IoError("not a directory: " + in.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(in)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".f64" || ext == ".wav")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::vector<double>> noisy;
  for (const auto& f : files)
    noisy.push_back(f.extension() == ".f64" ? corpus::read_f64(f) : audio::read_wav(f).samples);
  const auto denoised = train::denoise(ckpt, noisy, a.at("batch_size"), worker_count(a));
  fs::create_directories(out);
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto stem = files[i].stem().string();
    corpus::write_f64(out / (stem + ".f64"), denoised[i]);
    audio::write_wav(audio::AudioClip{denoised[i], corpus::kSampleRate, stem}, out / (stem + ".wav"));
  }
  write_runspec(out, "denoise", a);
  log << "denoise: " << files.size() << " segments written to " << out.string() << "\n";
  return {{"segments", files.size()}};
}

Json cmd_eval(const Json& a, std::ostream& log) {
  const auto corpus_dir = path_arg(a, "corpus"), out = path_arg(a, "out");
  const auto ckpt = a.at("checkpoint").get<std::string>(), denoised = a.at("denoised").get<std::string>();
  if (ckpt.empty() == denoised.empty()) throw ConfigError("eval needs exactly one of --checkpoint or --denoised");
  const auto rep = ckpt.empty() ? evaluate_denoised(corpus_dir, denoised, kinds_of(a))
                                : evaluate_corpus(ckpt, corpus_dir, kinds_of(a), a.at("batch_size"), worker_count(a));
  save_report(rep, out);
  write_runspec(out, "eval", a);
  log << "eval: " << rep.rows.size() << " segments\n";
  log_report(rep, log);
  return rep.to_json();
}

Json run_variants(const fs::path& corpus_dir, const fs::path& out, const Json& a, const std::vector<std::string>& variants,
                  std::ostream& log) {
  std::vector<metrics::MetricReport> reports;
  Json summary = Json::object();
  for (const auto& v : variants) {
    auto targs = a;
    targs["variant"] = v;
    const auto run_dir = out / v;
    const auto cfg = train_config(targs);
    const auto data = corpus::load_pairs(corpus_dir, kinds_of(a));
    log << "train " << v << ": " << data.train.size() << " train / " << data.val.size() << " val pairs\n";
    auto result = train::train(data, cfg, run_dir, [&](const train::EpochRecord& e) {
      log << "  epoch " << e.epoch << ": train " << e.train_loss << ", val " << e.val_loss << " (" << e.seconds
          << " s)\n";
      return true;
    });
    auto rep = evaluate_corpus(result.checkpoint, corpus_dir, kinds_of(a), a.at("eval_batch_size"), worker_count(a));
    save_report(rep, run_dir);
    log << "eval " << v << ":\n";
    log_report(rep, log);
    summary[v] = {{"runlog", result.log.to_json()}, {"metrics", rep.to_json()}};
    reports.push_back(std::move(rep));
  }
  const auto table = report::combine(variants, reports);
  report::write_ablation_csv(table, out / "ablation.csv");
  report::write_report(table, out / "report");
  return summary;
}

Json cmd_ablate(const Json& a, std::ostream& log) {
  const auto corpus_dir = path_arg(a, "corpus"), out = path_arg(a, "out");
  write_runspec(out, "ablate", a);
  return run_variants(corpus_dir, out, a, a.at("variants").get<std::vector<std::string>>(), log);
}

Json cmd_report(const Json& a, std::ostream& log) {
  const auto in = path_arg(a, "in"), out = path_arg(a, "out");
  const auto table = report::read_ablation_csv(in);
  const auto svgs = report::write_report(table, out);
  write_runspec(out, "report", a);
  log << "report: " << svgs.size() << " chart(s) in " << out.string() << "\n";
  Json files = Json::array();
  for (const auto& s : svgs) files.push_back(s.filename().string());
  return {{"svg", files}};
}

Json cmd_pipeline(const Json& a, std::ostream& log) {
  const auto out = path_arg(a, "out");
  write_runspec(out, "pipeline", a);
  auto fx = a.at("fixtures");
  fx["out"] = (out / "fixtures").string();
  cmd_fixtures(fx, log);
  auto prep = a.at("prepare");
  prep["in"] = (out / "fixtures" / "lung").string();
  prep["out"] = (out / "corpus").string();
  cmd_prepare(prep, log);
  auto mx = a.at("mix");
  mx["corpus"] = (out / "corpus").string();
  if (mx.at("heart_pool").get<std::string>().empty()) mx["heart_pool"] = (out / "fixtures" / "heart").string();
  if (mx.at("hospital_pool").get<std::string>().empty())
    mx["hospital_pool"] = (out / "fixtures" / "hospital").string();
  cmd_mix(mx, log);
  return run_variants(out / "corpus", out / "runs", a.at("train"), a.at("variants").get<std::vector<std::string>>(),
                      log);
}

using Handler = Json (*)(const Json&, std::ostream&);

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> h = {
      {"fixtures", cmd_fixtures}, {"prepare", cmd_prepare}, {"mix", cmd_mix},       {"train", cmd_train},
      {"denoise", cmd_denoise},   {"eval", cmd_eval},       {"ablate", cmd_ablate}, {"report", cmd_report},
      {"pipeline", cmd_pipeline}};
  return h;
}

Json fixtures_defaults() {
  return {{"out", ""},        {"lung_clips", 12},   {"heart_clips", 4}, {"hospital_clips", 4},
          {"min_seconds", 2.0}, {"max_seconds", 6.0}, {"seed", 111}};
}
Json prepare_defaults() {
  return {{"in", ""},         {"out", ""},        {"seed", 111},       {"dataset", "fixture"},
          {"normalize", "per-clip"}, {"train_frac", 0.8}, {"val_frac", 0.1}, {"low_hz", 50.0},
          {"high_hz", 2500.0}, {"filter_order", 6}};
}
Json mix_defaults() {
  return {{"corpus", ""},    {"kinds", Json::array({"WGN"})}, {"levels", Json::array()}, {"seed", 111},
          {"heart_pool", ""}, {"hospital_pool", ""},           {"audit", false},          {"deterministic", false}};
}

void check_keys(const std::string& where, const Json& defaults, const Json& args) {
  if (!args.is_object()) throw ConfigError(where + ": arguments must be a JSON object");
  for (auto it = args.begin(); it != args.end(); ++it) {
    if (!defaults.contains(it.key())) throw ConfigError(where + ": unknown argument '" + it.key() + "'");
    const auto& d = defaults.at(it.key());
    if (d.is_object() && !d.empty()) check_keys(where + "." + it.key(), defaults.at(it.key()), it.value());
  }
}

Json merge(Json defaults, const Json& args) {
  for (auto it = args.begin(); it != args.end(); ++it) {
    if (defaults[it.key()].is_object() && it.value().is_object())
      defaults[it.key()] = merge(defaults[it.key()], it.value());
    else
      defaults[it.key()] = it.value();
  }
  return defaults;
}

}  // namespace

const std::vector<std::string>& commands() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [k, v] : handlers()) n.push_back(k);
    return n;
  }();
  return names;
}

Json default_args(const std::string& command) {
  if (command == "fixtures") return fixtures_defaults();
  if (command == "prepare") return prepare_defaults();
  if (command == "mix") return mix_defaults();
  if (command == "train") return with(train_defaults(), {{"corpus", ""}, {"out", ""}});
  if (command == "denoise")
    return {{"checkpoint", ""}, {"in", ""}, {"out", ""}, {"batch_size", 16}, {"deterministic", false}};
  if (command == "eval")
    return {{"corpus", ""}, {"checkpoint", ""}, {"denoised", ""}, {"out", ""},
            {"kinds", Json::array()}, {"batch_size", 16}, {"deterministic", false}};
  if (command == "ablate")
    return with(train_defaults(),
                {{"corpus", ""}, {"out", ""}, {"variants", Json::array({"noformer", "uformer", "uformer+"})}});
  if (command == "report") return {{"in", ""}, {"out", ""}};
  if (command == "pipeline") {
    Json fx = fixtures_defaults(), prep = prepare_defaults(), mx = mix_defaults();
    fx.erase("out");
    prep.erase("in");
    prep.erase("out");
    mx.erase("corpus");
    return {{"out", ""},      {"fixtures", fx},
            {"prepare", prep}, {"mix", mx},
            {"train", train_defaults()}, {"variants", Json::array({"uformer"})}};
  }
  throw ConfigError("unknown command '" + command + "'");
}

Json resolve_args(const std::string& command, const Json& args) {
  const auto defaults = default_args(command);
  if (args.is_null()) return defaults;
  check_keys(command, defaults, args);
  return merge(defaults, args);
}

Json run(const std::string& command, const Json& args, std::ostream& log) {
  const auto it = handlers().find(command);
  if (it == handlers().end()) throw ConfigError("unknown command '" + command + "'");
  const auto resolved = resolve_args(command, args);
  try {
    return it->second(resolved, log);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(command + ": bad argument: " + e.what());
  }
}

Json replay(const fs::path& runspec, const fs::path& out_override, std::ostream& log) {
  std::ifstream in(runspec);
  if (!in) throw IoError("cannot open " + runspec.string());
  Json spec;
  try {
    spec = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(runspec.string() + ": " + e.what());
  }
  if (!spec.contains("command") || !spec.contains("args")) throw ConfigError(runspec.string() + " is not a runspec");
  auto args = spec.at("args");
  if (!out_override.empty()) {
    if (!args.contains("out")) throw ConfigError("command '" + spec.at("command").get<std::string>() + "' has no output directory to redirect");
    args["out"] = out_override.string();
  }
  return run(spec.at("command").get<std::string>(), args, log);
}

noise::NoisePools load_pools(const fs::path& heart_dir, const fs::path& hospital_dir) {
  auto load = [](const fs::path& dir) {
    std::vector<audio::AudioClip> clips;
    if (dir.empty()) return clips;
    for (const auto& f : corpus::list_wavs(dir)) {
      auto c = audio::read_wav(f);
      c.source_id = f.stem().string();
      clips.push_back(std::move(c));
    }
    if (clips.empty()) throw PoolError("no WAV files in noise pool " + dir.string());
    return clips;
  };
  return noise::NoisePools::from_clips(load(heart_dir), load(hospital_dir));
}

namespace {
struct TestItem {
  noise::MixRecord record;
  std::vector<double> noisy, clean;
};

std::vector<TestItem> load_test_items(const fs::path& corpus_dir, const std::vector<NoiseKind>& kinds) {
  std::vector<TestItem> items;
  std::map<std::string, std::vector<double>> clean_cache;
  for (auto& r : corpus::read_mix_records(corpus_dir / "mixes.jsonl")) {
    if (r.split != "test") continue;
    if (!kinds.empty() && std::find(kinds.begin(), kinds.end(), r.kind) == kinds.end()) continue;
    auto it = clean_cache.find(r.clean_seg_id);
    if (it == clean_cache.end()) {
      const auto path = corpus_dir / "clean" / (r.clean_seg_id + ".f64");
      if (!fs::exists(path)) throw ManifestError("missing clean counterpart " + r.clean_seg_id + " for " + r.noisy_id);
      it = clean_cache.emplace(r.clean_seg_id, corpus::read_f64(path)).first;
    }
    TestItem item{std::move(r), {}, it->second};
    item.noisy = corpus::read_f64(corpus_dir / "noisy" / (item.record.noisy_id + ".f64"), item.clean.size());
    items.push_back(std::move(item));
  }
  if (items.empty()) throw ManifestError("no test-split mixes in " + corpus_dir.string());
  return items;
}

metrics::MetricReport score_items(const std::vector<TestItem>& items, const std::vector<std::vector<double>>& denoised,
                                  std::size_t threads) {
  std::vector<metrics::MetricRow> rows(items.size());
  parallel_for(items.size(), threads, [&](std::size_t i) {
    const auto& r = items[i].record;
    rows[i] = metrics::score(r.noisy_id, r.clean_seg_id, noise::kind_name(r.kind), r.target_snr_db, denoised[i],
                             items[i].noisy, items[i].clean);
  });
  return metrics::aggregate(std::move(rows));
}
}  // namespace

metrics::MetricReport evaluate_corpus(const fs::path& checkpoint, const fs::path& corpus_dir,
                                      const std::vector<NoiseKind>& kinds, std::size_t batch_size,
                                      std::size_t threads) {
  const auto items = load_test_items(corpus_dir, kinds);
  std::vector<std::vector<double>> noisy;
  noisy.reserve(items.size());
  for (const auto& it : items) noisy.push_back(it.noisy);
  return score_items(items, train::denoise(checkpoint, noisy, batch_size, threads), threads);
}

metrics::MetricReport evaluate_denoised(const fs::path& corpus_dir, const fs::path& denoised_dir,
                                        const std::vector<NoiseKind>& kinds) {
  const auto items = load_test_items(corpus_dir, kinds);
  std::vector<std::vector<double>> denoised;
  for (const auto& it : items) {
    const auto f64 = denoised_dir / (it.record.noisy_id + ".f64");
    const auto wav = denoised_dir / (it.record.noisy_id + ".wav");
    if (fs::exists(f64))
      denoised.push_back(corpus::read_f64(f64, it.clean.size()));
    else if (fs::exists(wav))
      denoised.push_back(audio::read_wav(wav).samples);
    else
      throw ManifestError("no denoised output for " + it.record.noisy_id + " in " + denoised_dir.string());
    if (denoised.back().size() != it.clean.size())
      throw ShapeError("denoised " + it.record.noisy_id + " has the wrong length");
  }
  return score_items(items, denoised, 1);
}

}  // namespace lungdn::pipeline
