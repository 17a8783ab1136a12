#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "lungdn/corpus.hpp"
#include "lungdn/signal_io.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Result cli(const std::string& args) {
  static int n = 0;
  const auto dir = testutil::temp_dir("cli_io");
  const auto out = dir / ("out" + std::to_string(n)), err = dir / ("err" + std::to_string(n++));
  const std::string cmd = std::string(LUNGDN_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

void write_tone_clip(const fs::path& path, double seconds, std::uint64_t seed) {
  const std::size_t n = std::size_t(std::lround(seconds * 8000));
  auto v = testutil::random_vector(n, seed, -0.2, 0.2);
  for (std::size_t i = 0; i < n; ++i) v[i] += 0.5 * std::sin(2 * M_PI * 300.0 * double(i) / 8000.0);
  lungdn::audio::write_wav({v, 8000, path.stem().string()}, path);
}

// Same cells, numeric fields equal to 1e-9 relative.
bool csv_close(const fs::path& a, const fs::path& b) {
  std::istringstream sa(slurp(a)), sb(slurp(b));
  std::string la, lb;
  std::size_t lines = 0;
  while (std::getline(sa, la)) {
    if (!std::getline(sb, lb)) return false;
    std::istringstream ca(la), cb(lb);
    std::string x, y;
    while (std::getline(ca, x, ',')) {
      if (!std::getline(cb, y, ',')) return false;
      if (x == y) continue;
      char* end = nullptr;
      const double dx = std::strtod(x.c_str(), &end), dy = std::strtod(y.c_str(), nullptr);
      if (*end != '\0' || std::abs(dx - dy) > 1e-9 * std::max(1.0, std::abs(dx))) return false;
    }
    ++lines;
  }
  return lines > 1 && !std::getline(sb, lb);
}

// Narrow network at the real segment length; trains in seconds.
json small_model() {
  return {{"encoder_filters", {4, 4, 4, 4, 4}}, {"bottleneck_filters", 8}, {"decoder_filters", {4, 4, 4, 4}},
          {"kernel", 9}, {"heads", 2}, {"key_dim", 4}, {"ffn_units", 8}};
}

}  // namespace

TEST_CASE("cli usage errors exit with 2") {
  CHECK(cli("").code == 2);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("train --epochs notanumber").code == 2);
  auto r = cli("train --epochs 3");
  CHECK(r.code == 2);
  CHECK(r.err.find("corpus") != std::string::npos);
  CHECK(cli("--help").code == 0);
}

TEST_CASE("params prints the itemization and published totals") {
  auto r = cli("params --variant uformer+");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("total,1405217") != std::string::npos);
  CHECK(cli("params --variant noformer").out.find("total,1131889") != std::string::npos);
  CHECK(cli("params --variant bogus").code == 2);
}

TEST_CASE("prepare, mix, train, denoise, eval and replay through the cli") {
  const auto dir = testutil::temp_dir("cli");
  const auto wavs = dir / "wavs", corpus = dir / "corpus";
  fs::create_directories(wavs);
  write_tone_clip(wavs / "a.wav", 1.0, 1);
  write_tone_clip(wavs / "b.wav", 2.5, 2);
  write_tone_clip(wavs / "c.wav", 0.45, 3);

  auto r = cli("prepare --in " + wavs.string() + " --out " + corpus.string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(lungdn::corpus::read_manifest(corpus / "manifest.jsonl").entries.size() == 4);
  const auto bytes = slurp(corpus / "manifest.jsonl");
  REQUIRE(cli("prepare --in " + wavs.string() + " --out " + corpus.string()).code == 0);
  CHECK(slurp(corpus / "manifest.jsonl") == bytes);

  // Every split needs segments for training below.
  write_tone_clip(wavs / "c.wav", 1.5, 3);
  REQUIRE(cli("prepare --in " + wavs.string() + " --out " + corpus.string()).code == 0);
  const auto manifest = lungdn::corpus::read_manifest(corpus / "manifest.jsonl");
  REQUIRE(manifest.entries.size() == 6);

  fs::create_directories(dir / "empty");
  CHECK(cli("prepare --in " + (dir / "empty").string() + " --out " + (dir / "c2").string()).code == 2);

  r = cli("mix --corpus " + corpus.string() + " --kinds WGN --levels -10,-5,0,5,10,15 --audit");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(corpus / "noisy"))
    if (e.path().extension() == ".f64") ++files;
  CHECK(files == 36);
  const auto summary = json::parse(r.out);
  CHECK(summary.at("audit").at("max_record_error_db").get<double>() < 1e-9);

  r = cli("mix --corpus " + corpus.string() + " --kinds HeartPlusHospital");
  CHECK(r.code == 2);
  CHECK(r.err.find("pool") != std::string::npos);
  // A failed mix leaves the previous noisy corpus untouched.
  CHECK(lungdn::corpus::read_mix_records(corpus / "mixes.jsonl").size() == 36);

  const json train_args = {{"corpus", corpus.string()}, {"out", (dir / "run").string()}, {"epochs", 2},
                           {"batch_size", 4},          {"model", small_model()},       {"deterministic", true}};
  std::ofstream(dir / "train.json") << train_args.dump();
  r = cli("train --args " + (dir / "train.json").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  for (const char* f : {"config.json", "runlog.csv", "best.ckpt", "runspec.json"}) CHECK(fs::exists(dir / "run" / f));
  std::ofstream(dir / "bad.json") << json{{"corpus", corpus.string()}, {"model", {{"depth", 3}}}}.dump();
  CHECK(cli("train --args " + (dir / "bad.json").string() + " --out " + (dir / "x").string()).code == 2);

  const auto ckpt = (dir / "run" / "best.ckpt").string();
  r = cli("denoise --checkpoint " + ckpt + " --in " + (corpus / "noisy").string() + " --out " + (dir / "den").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(json::parse(r.out).at("segments") == 36);
  const auto clip = lungdn::audio::read_wav(dir / "den" / (manifest.entries[0].seg_id + "_WGN_0dB.wav"));
  CHECK(clip.sample_rate == 8000);
  CHECK(clip.samples.size() == 8000);

  r = cli("eval --corpus " + corpus.string() + " --checkpoint " + ckpt + " --out " + (dir / "eval").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  r = cli("eval --corpus " + corpus.string() + " --denoised " + (dir / "den").string() + " --out " +
          (dir / "eval2").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(csv_close(dir / "eval" / "metrics.csv", dir / "eval2" / "metrics.csv"));
  CHECK(cli("eval --corpus " + corpus.string() + " --out " + (dir / "eval3").string()).code == 2);

  r = cli("replay " + (dir / "run" / "runspec.json").string() + " --out " + (dir / "run2").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(slurp(dir / "run" / "best.ckpt") == slurp(dir / "run2" / "best.ckpt"));
  CHECK(cli("replay " + (dir / "nope.json").string()).code == 2);
}

TEST_CASE("fixtures, ablate and report through the cli") {
  const auto dir = testutil::temp_dir("cli_ablate");
  auto r = cli("fixtures --out " + (dir / "fx").string() +
               " --lung-clips 5 --heart-clips 2 --hospital-clips 2 --min-seconds 2 --max-seconds 3");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(lungdn::corpus::list_wavs(dir / "fx" / "lung").size() == 5);
  CHECK(lungdn::corpus::list_wavs(dir / "fx" / "heart").size() == 2);

  const auto corpus = dir / "corpus";
  REQUIRE(cli("prepare --in " + (dir / "fx" / "lung").string() + " --out " + corpus.string()).code == 0);
  r = cli("mix --corpus " + corpus.string() + " --kinds WGN,Heart --levels 0,10 --heart-pool " +
          (dir / "fx" / "heart").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);

  const json args = {{"corpus", corpus.string()},
                     {"out", (dir / "abl").string()},
                     {"variants", {"noformer", "uformer"}},
                     {"kinds", {"WGN"}},
                     {"epochs", 1},
                     {"batch_size", 4},
                     {"model", small_model()}};
  std::ofstream(dir / "ablate.json") << args.dump();
  r = cli("ablate --args " + (dir / "ablate.json").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(dir / "abl" / "noformer" / "metrics.csv"));
  CHECK(fs::exists(dir / "abl" / "ablation.csv"));
  CHECK(fs::exists(dir / "abl" / "report" / "snr_improvement_WGN.svg"));

  r = cli("report --in " + (dir / "abl" / "ablation.csv").string() + " --out " + (dir / "rep").string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(slurp(dir / "rep" / "snr_improvement_WGN.svg") == slurp(dir / "abl" / "report" / "snr_improvement_WGN.svg"));
}
