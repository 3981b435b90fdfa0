#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"

#include "spotv2/matrix.hpp"
#include "spotv2/nn/optim.hpp"

namespace spotv2::nn {

struct Checkpoint {
    nlohmann::json config;
    std::map<std::string, Mat> tensors;
};

/// Writes `path` (JSON manifest: config, names, shapes, offsets) and
/// `path.bin` (little-endian float64 values in manifest order).
void save_checkpoint(const std::filesystem::path& path, const ParamSet& params,
                     const nlohmann::json& config);

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies stored values into params by name; shapes must match.
void restore(ParamSet& params, const Checkpoint& ckpt);

}  // namespace spotv2::nn
