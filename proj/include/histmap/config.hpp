#pragma once

// Flat "key = value" run configuration. '#' starts a comment; unknown keys,
// duplicate keys and ill-typed values are schema errors naming the line.

#include <filesystem>
#include <string>

#include "histmap/linker.hpp"
#include "histmap/model.hpp"
#include "histmap/synth.hpp"
#include "histmap/train.hpp"

namespace histmap {

struct Settings {
  uint64_t seed = 0;
  // genmap
  int map_size = 128;
  int n_maps = 10;
  int n_buildings = 8;
  // synth (rect_size is shared with genmap)
  SynthConfig synth;
  ModelConfig model;
  TrainConfig train;
  int val_count = -1;  // -1: a fifth of the dataset, at least one video when there are two or more
  PromptProvider prompts;

  /// Cross-field checks; throws a schema error naming `origin`.
  void validate(const std::string& origin = "config") const;
};

Settings parse_settings(const std::string& text, const std::string& origin = "<config>", Settings base = {});
Settings load_settings(const std::filesystem::path& path, Settings base = {});

/// Every key in sorted order, one "key = value" line each.
std::string dump_settings(const Settings& s);

}  // namespace histmap
