#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "freqlens/cka.hpp"
#include "freqlens/network.hpp"
#include "freqlens/spectral.hpp"
#include "freqlens/training.hpp"

namespace freqlens {

/// Tool version plus `git describe` of the source tree at configure time.
std::string tool_version();

uint64_t fnv1a64(std::string_view bytes);
std::string hex64(uint64_t v);

/// (config hash, seed, version) attached to every emitted file.
struct Provenance {
  std::string config_hash;
  uint64_t seed = 0;
  std::string version;

  nlohmann::json to_json() const;
};

/// Writes `<path>.prov.json` next to an artifact.
void write_sidecar(const std::filesystem::path& artifact, const Provenance& prov, const nlohmann::json& extra = {});

// ---- checkpoints ----------------------------------------------------------
//
// Layout: "FQL1", u64 LE metadata length, UTF-8 JSON metadata, then every
// state tensor as little-endian float32 in Network::state() order.

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

nlohmann::json spec_to_json(const LayerSpec& spec);
LayerSpec spec_from_json(const nlohmann::json& j);

void save_checkpoint(const Network& net, const std::filesystem::path& path, const nlohmann::json& meta = {});

struct Checkpoint {
  Network net;
  nlohmann::json meta;  // user metadata passed to save_checkpoint
};

Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Header only: metadata, tensor names and shapes.
nlohmann::json inspect_checkpoint(const std::filesystem::path& path);

// ---- tables and images ----------------------------------------------------

/// Shortest round-trip decimal form of a double.
std::string fmt_double(double v);

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

void write_run_report_csv(const RunReport& report, const std::filesystem::path& path);
void write_eval_csv(const std::vector<EvalRow>& rows, const std::filesystem::path& path);
void write_ratio_csv(const RunReport& report, const std::filesystem::path& path);
void write_cka_csv(const CkaMatrix& m, const std::filesystem::path& path);
void write_spectrum_csv(const SpectrumMap& m, const std::filesystem::path& path);

/// Binary 16-bit graymap (P5, maxval 65535, big-endian samples). Values are
/// clamped to [0,1] first.
void write_pgm16(const std::filesystem::path& path, int64_t height, int64_t width, std::span<const double> values);
/// Reads back a 16-bit P5 file as values in [0,1].
std::vector<double> read_pgm16(const std::filesystem::path& path, int64_t& height, int64_t& width);

}  // namespace freqlens
