#include "lungdn/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "lungdn/errors.hpp"
#include "lungdn/parallel.hpp"

namespace lungdn::corpus {

namespace fs = std::filesystem;
using noise::MixRecord;
using noise::NoiseKind;

void write_f64(const fs::path& path, std::span<const double> samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(samples.data()), std::streamsize(samples.size_bytes()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<double> read_f64(const fs::path& path, std::size_t expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = std::size_t(in.tellg());
  in.seekg(0);
  if (bytes % sizeof(double) != 0) throw IoError(path.string() + " is not a whole number of doubles");
  std::vector<double> v(bytes / sizeof(double));
  in.read(reinterpret_cast<char*>(v.data()), std::streamsize(bytes));
  if (!in) throw IoError("short read from " + path.string());
  if (expected && v.size() != expected)
    throw ShapeError(path.string() + " holds " + std::to_string(v.size()) + " samples, expected " +
                     std::to_string(expected));
  return v;
}

std::vector<fs::path> list_wavs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    if (ext == ".wav") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string normalize_name(Normalize n) { return n == Normalize::per_clip ? "per-clip" : "per-segment"; }

Normalize parse_normalize(const std::string& s) {
  if (s == "per-clip") return Normalize::per_clip;
  if (s == "per-segment") return Normalize::per_segment;
  throw ConfigError("unknown normalization '" + s + "' (expected per-clip or per-segment)");
}

nlohmann::json PrepareConfig::to_json() const {
  return {{"seed", split.seed},
          {"train_frac", split.train_frac},
          {"val_frac_of_train", split.val_frac_of_train},
          {"dataset", dataset},
          {"normalize", normalize_name(normalize)},
          {"low_hz", low_hz},
          {"high_hz", high_hz},
          {"filter_order", filter_order}};
}

audio::AudioClip preprocess(const audio::AudioClip& clip, const PrepareConfig& cfg) {
  auto spec = audio::BandpassSpec::for_rate(clip.sample_rate, cfg.low_hz, cfg.high_hz, cfg.filter_order);
  auto filtered = audio::bandpass(clip, spec);
  return audio::normalize_peak(audio::resample(filtered, kSampleRate));
}

nlohmann::json PrepareReport::to_json() const {
  nlohmann::json f = nlohmann::json::array();
  for (const auto& [file, err] : failures) f.push_back({{"file", file}, {"error", err}});
  return {{"files", files}, {"clips", clips}, {"segments", segments}, {"failures", f}};
}

PrepareReport prepare_corpus(const fs::path& in_dir, const fs::path& corpus_dir, const PrepareConfig& cfg) {
  PrepareReport report;
  const auto files = list_wavs(in_dir);
  report.files = files.size();
  std::vector<audio::AudioClip> clips;
  for (const auto& f : files) {
    try {
      auto clip = audio::read_wav(f);
      clip.source_id = f.stem().string();
      clips.push_back(preprocess(clip, cfg));
    } catch (const Error& e) {
      report.failures.emplace_back(f.filename().string(), e.what());
    }
  }
  report.clips = clips.size();
  if (clips.size() < 3)
    throw CorpusTooSmall(std::to_string(clips.size()) + " usable clips in " + in_dir.string() + " (" +
                         std::to_string(files.size()) + " WAV files, " + std::to_string(report.failures.size()) +
                         " failed); at least 3 are needed");

  auto manifest = build_manifest(clips, cfg.split, cfg.dataset);
  std::map<std::string, std::vector<double>> samples;
  for (const auto& clip : clips)
    for (auto& seg : segment_clip(clip)) {
      if (cfg.normalize == Normalize::per_segment) {
        double peak = 0.0;
        for (double v : seg.samples) peak = std::max(peak, std::abs(v));
        if (peak > 0.0)
          for (double& v : seg.samples) v /= peak;
      }
      samples[seg.id()] = std::move(seg.samples);
    }
  // Silent segments cannot be mixed at a finite SNR.
  std::erase_if(manifest.entries, [&](const ManifestEntry& e) {
    const auto& s = samples.at(e.seg_id);
    return std::all_of(s.begin(), s.end(), [](double v) { return v == 0.0; });
  });

  fs::create_directories(corpus_dir);
  // New clean segments invalidate any earlier mixes.
  fs::remove_all(corpus_dir / "clean");
  fs::remove_all(corpus_dir / "noisy");
  fs::remove(corpus_dir / "mixes.jsonl");
  fs::create_directories(corpus_dir / "clean");
  for (const auto& e : manifest.entries) write_f64(corpus_dir / "clean" / (e.seg_id + ".f64"), samples.at(e.seg_id));
  write_manifest(manifest, corpus_dir / "manifest.jsonl");
  report.segments = manifest.entries.size();
  auto j = report.to_json();
  j["config"] = cfg.to_json();
  std::ofstream(corpus_dir / "prepare.json") << j.dump(2) << '\n';
  return report;
}

std::vector<Segment> load_clean_segments(const fs::path& corpus_dir, const CorpusManifest& manifest) {
  std::vector<Segment> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    const auto idx_pos = e.seg_id.rfind("_s");
    Segment s;
    s.samples = read_f64(corpus_dir / "clean" / (e.seg_id + ".f64"), kSegmentLength);
    s.parent_id = e.parent;
    s.segment_index = idx_pos == std::string::npos ? 0 : std::stoul(e.seg_id.substr(idx_pos + 2));
    if (s.id() != e.seg_id) throw ManifestError("segment id " + e.seg_id + " does not match its parent " + e.parent);
    out.push_back(std::move(s));
  }
  return out;
}

nlohmann::json MixConfig::to_json() const {
  nlohmann::json k = nlohmann::json::array();
  for (auto kind : kinds) k.push_back(noise::kind_name(kind));
  return {{"kinds", k}, {"levels", levels}, {"seed", seed}};
}

void write_mix_records(const std::vector<MixRecord>& records, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : records) out << r.to_json().dump() << '\n';
}

std::vector<MixRecord> read_mix_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open mix records " + path.string());
  std::vector<MixRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(MixRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ManifestError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<MixRecord> build_noisy_corpus(const fs::path& corpus_dir, const noise::NoisePools& pools,
                                          const MixConfig& cfg) {
  if (cfg.kinds.empty()) throw ConfigError("no noise kinds requested");
  for (auto kind : cfg.kinds) {
    if ((kind == NoiseKind::heart || kind == NoiseKind::heart_plus_hospital) && pools.heart.empty())
      throw PoolError(noise::kind_name(kind) + " noise requested without a heart-sound pool");
    if (kind == NoiseKind::heart_plus_hospital && pools.hospital.empty())
      throw PoolError("HeartPlusHospital noise requested without a hospital-noise pool");
  }
  const auto manifest = read_manifest(corpus_dir / "manifest.jsonl");
  const auto segments = load_clean_segments(corpus_dir, manifest);

  struct Job {
    std::size_t segment;
    NoiseKind kind;
    double level;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& split = manifest.entries[i].split;
    const auto levels =
        !cfg.levels.empty() ? cfg.levels : (split == "test" ? noise::testing_levels() : noise::training_levels());
    for (auto kind : cfg.kinds)
      for (double level : levels) jobs.push_back({i, kind, level});
  }

  fs::remove_all(corpus_dir / "noisy");
  fs::create_directories(corpus_dir / "noisy");
  std::vector<MixRecord> records(jobs.size());
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t j) {
    const auto& job = jobs[j];
    const auto& seg = segments[job.segment];
    const auto seed = noise::stream_seed(cfg.seed, seg.id(), job.kind, job.level);
    auto result = noise::mix(seg, {job.kind, job.level, seed}, pools);
    result.record.split = manifest.entries[job.segment].split;
    write_f64(corpus_dir / "noisy" / (result.record.noisy_id + ".f64"), result.noisy);
    records[j] = std::move(result.record);
  });
  write_mix_records(records, corpus_dir / "mixes.jsonl");
  return records;
}

AuditResult audit_mixes(const fs::path& corpus_dir) {
  AuditResult a;
  for (const auto& r : read_mix_records(corpus_dir / "mixes.jsonl")) {
    const auto clean = read_f64(corpus_dir / "clean" / (r.clean_seg_id + ".f64"));
    const auto noisy = read_f64(corpus_dir / "noisy" / (r.noisy_id + ".f64"), clean.size());
    std::vector<double> n(clean.size());
    for (std::size_t i = 0; i < n.size(); ++i) n[i] = noisy[i] - clean[i];
    const double realized = noise::snr_db(clean, n);
    a.max_record_error_db = std::max(a.max_record_error_db, std::abs(realized - r.realized_snr_db));
    if (r.kind != NoiseKind::wgn)
      a.max_target_error_db = std::max(a.max_target_error_db, std::abs(realized - r.target_snr_db));
    ++a.checked;
  }
  return a;
}

train::TrainData load_pairs(const fs::path& corpus_dir, const std::vector<NoiseKind>& kinds) {
  train::TrainData data;
  std::map<std::string, std::vector<double>> clean_cache;
  for (const auto& r : read_mix_records(corpus_dir / "mixes.jsonl")) {
    if (r.split != "train" && r.split != "val") continue;
    if (!kinds.empty() && std::find(kinds.begin(), kinds.end(), r.kind) == kinds.end()) continue;
    auto it = clean_cache.find(r.clean_seg_id);
    if (it == clean_cache.end()) {
      const auto path = corpus_dir / "clean" / (r.clean_seg_id + ".f64");
      if (!fs::exists(path)) throw ManifestError("missing clean segment " + r.clean_seg_id + " for " + r.noisy_id);
      it = clean_cache.emplace(r.clean_seg_id, read_f64(path)).first;
    }
    auto noisy = read_f64(corpus_dir / "noisy" / (r.noisy_id + ".f64"), it->second.size());
    (r.split == "train" ? data.train : data.val).add(r.noisy_id, std::move(noisy), it->second);
  }
  return data;
}

}  // namespace lungdn::corpus
