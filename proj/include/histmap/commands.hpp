#pragma once

// The subcommands behind the `histmap` tool. Each writes its artifacts and
// exactly one run_manifest.json into its output directory.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "histmap/config.hpp"

namespace histmap {

inline constexpr const char* kToolVersion = "0.3.0";

struct ItemStatus {
  std::string name;
  std::string status = "ok";
  std::vector<std::string> flags;
};

struct RunManifest {
  std::string command;
  std::string config;  // dump_settings snapshot
  uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string tool_version = kToolVersion;
  double wall_clock_s = 0.0;
  std::vector<ItemStatus> items;
};

nlohmann::json manifest_to_json(const RunManifest& m);
void write_run_manifest(const std::filesystem::path& out_dir, const RunManifest& m);

struct RunContext {
  Settings settings;
  std::filesystem::path out;
  std::ostream* log = nullptr;  // progress lines; null when quiet
};

/// n_maps single-frame annotated maps as video directories map_0000, ...
RunManifest cmd_genmap(const RunContext& ctx);

/// One two-frame chronological pseudo video per input item (its latest frame).
RunManifest cmd_synth(const RunContext& ctx, const std::filesystem::path& in_dir);

/// Writes model.ckpt and metrics.jsonl. The last val_count videos (name
/// order) are held out for checkpoint selection.
RunManifest cmd_train(const RunContext& ctx, const std::filesystem::path& dataset);

/// Video mode: per-object tracks with prompts from settings.prompts.
/// Tileset mode: one prompt-free mask per item, streamed in name order.
RunManifest cmd_infer(const RunContext& ctx, const std::filesystem::path& checkpoint,
                      const std::filesystem::path& input);

/// Writes report.json and per_item.json; prints a table to the log.
/// Video report keys: precision, recall, f1, tp, fp, fn.
/// Tileset report keys: iou, intersection, union.
RunManifest cmd_eval(const RunContext& ctx, const std::filesystem::path& pred_dir,
                     const std::filesystem::path& gt_dir);

enum class BankDemoPolicy { self_sorting, fifo };

/// Replays {"embeddings": [{"vector": [...], "confidence": c}, ...]} through a
/// bank and writes trace.jsonl (one state per step).
RunManifest cmd_bankdemo(const RunContext& ctx, const std::filesystem::path& embeddings, BankDemoPolicy policy);

}  // namespace histmap
