#pragma once

#include <filesystem>
#include <string>

#include "cmcd/model.hpp"

namespace cmcd {

/// Parameter checkpoints use the container layout of container.hpp with kind
/// "encoder" or "head". `config_hash` identifies the configuration that
/// produced the parameters.
void save_encoder(const EncoderParams& params, const std::filesystem::path& path,
                  const std::string& config_hash = {});
EncoderParams load_encoder(const std::filesystem::path& path,
                           std::string* config_hash = nullptr);

void save_head(const HeadParams& params, const std::filesystem::path& path,
               const std::string& config_hash = {});
HeadParams load_head(const std::filesystem::path& path,
                     std::string* config_hash = nullptr);

}  // namespace cmcd
