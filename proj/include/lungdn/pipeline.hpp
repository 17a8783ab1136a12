#pragma once

// Command implementations behind the CLI. Every command takes a JSON object
// of resolved arguments, writes it to <out>/runspec.json, and can be replayed
// from that file alone.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "lungdn/metrics.hpp"
#include "lungdn/noise_forge.hpp"

namespace lungdn::pipeline {

using Json = nlohmann::json;

/// Names of all commands run() accepts.
const std::vector<std::string>& commands();

/// Default arguments for a command. Required paths default to "".
Json default_args(const std::string& command);

/// Defaults overlaid with `args`. Unknown keys raise ConfigError.
Json resolve_args(const std::string& command, const Json& args);

/// Runs a command with (partial) arguments; returns a JSON summary.
Json run(const std::string& command, const Json& args, std::ostream& log);

/// Re-runs the command recorded in a runspec.json, optionally redirecting
/// its output directory.
Json replay(const std::filesystem::path& runspec, const std::filesystem::path& out_override, std::ostream& log);

noise::NoisePools load_pools(const std::filesystem::path& heart_dir, const std::filesystem::path& hospital_dir);

/// Denoises every test-split mix in the corpus (optionally restricted to some
/// kinds) and scores it against its clean segment.
metrics::MetricReport evaluate_corpus(const std::filesystem::path& checkpoint, const std::filesystem::path& corpus_dir,
                                      const std::vector<noise::NoiseKind>& kinds = {}, std::size_t batch_size = 16,
                                      std::size_t threads = 1);

/// Scores already denoised files (<noisy_id>.f64 or .wav) in `denoised_dir`.
metrics::MetricReport evaluate_denoised(const std::filesystem::path& corpus_dir,
                                        const std::filesystem::path& denoised_dir,
                                        const std::vector<noise::NoiseKind>& kinds = {});

}  // namespace lungdn::pipeline
