#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ktts/audio_features.hpp"
#include "ktts/model.hpp"
#include "ktts/training.hpp"

namespace ktts {

/// Everything a run depends on, stored as one `key = value` text file.
///
///     # comments and blank lines are ignored
///     preset = small
///     mel.hop = 256
///     train.schedule = 0:1e-3, 50000:5e-4, 100000:3e-4
///     syntax.categories = NP, VP
///
/// `preset` (default or small) is applied before any other key, wherever
/// it appears. Unknown keys and malformed values raise ConfigError with the
/// line number.
struct FullConfig {
  std::string preset = "default";
  audio::MelConfig mel;
  model::ModelConfig model;
  training::TrainConfig train;
  std::set<std::string> categories = {"NP", "VP"};

  static FullConfig from_preset(const std::string& name);
  static FullConfig parse(std::string_view text);
  static FullConfig load(const std::string& path);

  /// Every key, one per line, in a fixed order. parse(to_text()) == *this.
  std::string to_text() const;
  void save(const std::string& path) const;
  std::uint64_t hash() const;

  /// Sub-config checks plus cross-checks (decoder bands match the mel bands).
  void validate() const;

  /// All recognised keys, in to_text() order.
  static std::vector<std::string> keys();
};

}  // namespace ktts
