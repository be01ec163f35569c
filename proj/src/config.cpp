#include "tacc/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "tacc/error.hpp"

namespace tacc {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {"mc", "nc", "kc", "mr", "nr", "l1", "l2", "l3", "transpose_tile",
                                             "workers"};
  return keys;
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  std::int64_t v = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, v);
  // Allow binary size suffixes for cache sizes.
  if (ec == std::errc() && ptr != end && end - ptr == 1) {
    switch (*ptr) {
      case 'K': case 'k': v *= 1024; ++ptr; break;
      case 'M': case 'm': v *= 1024 * 1024; ++ptr; break;
      default: break;
    }
  }
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorKind::InvalidConfig, "config key '" + key + "' expects an integer, got '" + value + "'");
  }
  return v;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::InvalidConfig, "config line " + std::to_string(lineno) + ": expected key = value");
    }
    out.emplace_back(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
  }
  return out;
}

RunConfig resolve_config(const std::vector<std::pair<std::string, std::string>>& file_entries,
                         const std::vector<std::string>& overrides) {
  std::map<std::string, std::int64_t> values;
  auto put = [&](const std::string& key, const std::string& value) {
    if (!known_keys().contains(key)) throw Error(ErrorKind::InvalidConfig, "unknown config key '" + key + "'");
    values[key] = parse_int(key, value);
  };
  for (const auto& [k, v] : file_entries) put(k, v);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::InvalidConfig, "override '" + o + "' is not key=value");
    put(trim(std::string_view(o).substr(0, eq)), trim(std::string_view(o).substr(eq + 1)));
  }

  const loops::TilingConfig defaults;
  auto get = [&](const char* key, std::int64_t fallback) {
    auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
  };
  RunConfig cfg;
  cfg.tiling = loops::derive_tiling(get("l1", defaults.cache_l1), get("l2", defaults.cache_l2),
                                    get("l3", defaults.cache_l3));
  auto& t = cfg.tiling;
  t.mr = get("mr", t.mr);
  t.nr = get("nr", t.nr);
  // Keep derived blocks aligned to a changed register block.
  if (t.mr > 0) t.mc = std::max(t.mr, t.mc / t.mr * t.mr);
  if (t.nr > 0) t.nc = std::max(t.nr, t.nc / t.nr * t.nr);
  t.mc = get("mc", t.mc);
  t.nc = get("nc", t.nc);
  t.kc = get("kc", t.kc);
  t.transpose_tile = get("transpose_tile", t.transpose_tile);
  cfg.workers = static_cast<int>(get("workers", 1));
  if (cfg.workers < 1) throw Error(ErrorKind::InvalidConfig, "workers must be >= 1");
  loops::check_tiling(t);
  return cfg;
}

RunConfig load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides) {
  std::optional<std::filesystem::path> file = path;
  if (!file) {
    if (const char* env = std::getenv("TACC_CONFIG"); env != nullptr && *env != '\0') file = env;
  }
  std::vector<std::pair<std::string, std::string>> entries;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw Error(ErrorKind::IoError, "cannot open config '" + file->string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    entries = parse_config_text(ss.str());
  }
  return resolve_config(entries, overrides);
}

}  // namespace tacc
