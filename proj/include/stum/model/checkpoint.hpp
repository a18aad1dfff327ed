#pragma once

#include <filesystem>

#include "stum/model/stum_model.hpp"

namespace stum::model {

// Checkpoint directory: model.json (configs, seed, step counts, config hash)
// plus one STUMT1 blob per parameter / norm buffer / optimizer moment, named
// by parameter identifier. save -> load -> save is byte-identical.
void save_checkpoint(const std::filesystem::path& dir, StumModel& model,
                     const std::string& config_hash);

StumModel load_checkpoint(const std::filesystem::path& dir);

std::string checkpoint_config_hash(const std::filesystem::path& dir);

}  // namespace stum::model
