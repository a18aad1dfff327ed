#pragma once

#include <filesystem>
#include <string>

#include "stum/streamsim/stream.hpp"

namespace stum::sim {

// On-disk dataset: manifest.json plus frames.stumt / audio.stumt /
// labels.stumt in the STUMT1 blob format. Hidden ground truth (labels,
// fixation and segment records) rides along for grading only.
struct Dataset {
  uint64_t dataset_seed = 0;
  uint64_t split_seed = 0;
  uint64_t stream_seed = 0;
  int k = 0;
  StreamConfig stream_config;
  SplitConfig split_config;
  std::vector<CategorySplit> splits;
  MultimodalStream stream;
  std::string config_hash;

  World world() const { return World::derive(dataset_seed, k); }
};

// Generates the full dataset in memory.
Dataset build_dataset(uint64_t dataset_seed, uint64_t split_seed, uint64_t stream_seed, int k,
                      const SplitConfig& split_cfg, const StreamConfig& stream_cfg,
                      const std::string& config_hash);

// Writes manifest + blobs. Refuses a non-empty directory unless force.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds, bool force);

Dataset load_dataset(const std::filesystem::path& dir);

// ---- image-directory adapter (COIL-style ring-ordered image sets) ----

struct IngestedRing {
  int category_id = 0;
  std::vector<int> angles;
  std::vector<num::Tensor> views;  // [3,S,S]
};

// Reads `manifest.json` ({"categories":[{"id":N,"files":[...],"angles":[...]?}]})
// plus PNG files from dir; resizes to image_size. Rings are built in manifest
// order. Errors on missing/unreadable files and rings with < 8 views.
std::vector<IngestedRing> ingest_image_directory(const std::filesystem::path& dir,
                                                 int image_size);

// Writes rings as PNGs plus a manifest that ingest_image_directory accepts.
void export_ring_directory(const std::filesystem::path& dir,
                           const std::vector<IngestedRing>& rings);

// Bilinear resize of a [3,H,W] tensor.
num::Tensor resize_rgb(const num::Tensor& src, int out_size);

}  // namespace stum::sim
