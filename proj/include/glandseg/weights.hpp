#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <json.hpp>
#include <string>
#include <vector>

namespace glandseg::weights {

namespace fs = std::filesystem;

using NamedTensors = std::map<std::string, torch::Tensor>;

/// A portable checkpoint: `manifest.json` lists (name, shape, dtype, blob,
/// offset, nbytes) and free-form metadata; tensor bytes live in `weights.bin`.
struct Manifest {
  nlohmann::json metadata = nlohmann::json::object();
  NamedTensors tensors;
};

/// Parameters and buffers of `module`, recursively, by dotted name.
NamedTensors state_of(const torch::nn::Module& module);

void save(const fs::path& dir, const NamedTensors& tensors, const nlohmann::json& metadata = nlohmann::json::object());
void save(const fs::path& dir, const torch::nn::Module& module, const nlohmann::json& metadata = nlohmann::json::object());
Manifest load(const fs::path& dir);
nlohmann::json load_metadata(const fs::path& dir);
bool exists(const fs::path& dir);

enum class Mode { Strict, Permissive };

/// Source tensors named `from + rest` populate target `to + rest`. Several
/// rules may read the same source prefix, which duplicates weights. The first
/// rule whose `to` prefixes a target name wins; unmatched names map to
/// themselves.
struct PrefixRule {
  std::string from;
  std::string to;
};

struct Mismatch {
  std::string name;
  std::vector<std::int64_t> expected;
  std::vector<std::int64_t> found;
};

struct LoadReport {
  std::vector<std::string> loaded;
  std::vector<std::string> resized;     // position tables interpolated to the target grid
  std::vector<std::string> missing;     // target entries with no source
  std::vector<std::string> unexpected;  // source entries nobody consumed
  std::vector<Mismatch> mismatched;

  bool complete() const { return missing.empty() && unexpected.empty() && mismatched.empty(); }
  std::string summary() const;
};

/// Copies `source` into the module's parameters and buffers in place.
/// Entries whose name ends in "pos_embed" are resampled when only their token
/// count differs. Strict mode throws std::runtime_error listing every
/// offender; permissive mode leaves offenders untouched and reports them.
LoadReport apply(torch::nn::Module& module, const NamedTensors& source, Mode mode,
                 const std::vector<PrefixRule>& rules = {});

/// FNV-1a over the raw bytes of every tensor, in name order.
std::uint64_t checksum(const NamedTensors& tensors);
std::uint64_t checksum(const torch::Tensor& t);

/// Deep copy, detached.
NamedTensors snapshot(const torch::nn::Module& module);

bool bitwise_equal(const torch::Tensor& a, const torch::Tensor& b);

}  // namespace glandseg::weights
