#pragma once

// Plain-text key-value run configuration (INI sections data, model, optim,
// ssl, augment, run). Keys are addressed as "section.key".

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cgmatch/trainer.hpp"

namespace cgmatch::config {

using Override = std::pair<std::string, std::string>;

// "section.key=value" -> {"section.key", "value"}.
Override parse_override(const std::string& text);

// Parses INI text, applies overrides (which win), validates, and rejects
// unknown keys. data.kind is required unless data.file is given; a relative
// data.file is resolved against base_dir.
trainer::RunConfig parse_run_config(const std::string& ini_text,
                                    const std::vector<Override>& overrides = {},
                                    const std::filesystem::path& base_dir = {});

trainer::RunConfig load_run_config(const std::filesystem::path& file,
                                   const std::vector<Override>& overrides = {});

// Every field written out, in a fixed order.
std::string format_run_config(const trainer::RunConfig& config);

}  // namespace cgmatch::config
