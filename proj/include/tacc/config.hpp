#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tacc/loops.hpp"

namespace tacc {

/// Settings shared by the run/bench subcommands.
struct RunConfig {
  loops::TilingConfig tiling;
  int workers = 1;
};

/// `key = value` lines, `#` comments. Keys: mc nc kc mr nr l1 l2 l3
/// transpose_tile workers.
std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text);

/// Cache-derived defaults, then `file_entries`, then `overrides` (each a
/// `key=value` string). Cache keys re-derive the blocking unless mc/nc/kc are
/// given explicitly. Throws InvalidConfig.
RunConfig resolve_config(const std::vector<std::pair<std::string, std::string>>& file_entries,
                         const std::vector<std::string>& overrides);

/// Reads `path`, or $TACC_CONFIG when `path` is empty, then resolves.
RunConfig load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides);

}  // namespace tacc
