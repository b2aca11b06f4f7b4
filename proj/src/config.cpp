#include "cdnet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace cdnet {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError(fmt::format("cannot parse '{}'", text));
  }
  return value;
}

double parse_real(std::string_view text) {
  const std::string s(text);
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) {
    throw ConfigError(fmt::format("cannot parse '{}'", text));
  }
  return value;
}

std::string choice(std::string_view text,
                   std::initializer_list<std::string_view> allowed) {
  for (std::string_view a : allowed) {
    if (text == a) return std::string(text);
  }
  throw ConfigError(fmt::format("'{}' is not one of {}", text, fmt::join(allowed, "|")));
}

using Setter = std::function<void(RunConfig&, std::string_view)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Field {
  Setter set;
  Getter get;
};

template <typename T>
Field integer(T RunConfig::*member) {
  return {[member](RunConfig& c, std::string_view v) { c.*member = parse_number<T>(v); },
          [member](const RunConfig& c) { return fmt::format("{}", c.*member); }};
}

Field real(double RunConfig::*member) {
  return {[member](RunConfig& c, std::string_view v) { c.*member = parse_real(v); },
          [member](const RunConfig& c) { return fmt::format("{}", c.*member); }};
}

Field text(std::string RunConfig::*member) {
  return {[member](RunConfig& c, std::string_view v) { c.*member = std::string(v); },
          [member](const RunConfig& c) { return c.*member; }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed", integer(&RunConfig::seed)},
      {"data_dir", text(&RunConfig::data_dir)},
      {"split",
       {[](RunConfig& c, std::string_view v) { c.split = choice(v, {"train", "test"}); },
        [](const RunConfig& c) { return c.split; }}},
      {"out_dir", text(&RunConfig::out_dir)},
      {"architecture", text(&RunConfig::architecture)},
      {"resume", text(&RunConfig::resume)},
      {"image_size", integer(&RunConfig::image_size)},
      {"steps", integer(&RunConfig::steps)},
      {"batch_size", integer(&RunConfig::batch_size)},
      {"lr", real(&RunConfig::lr)},
      {"beta1", real(&RunConfig::beta1)},
      {"beta2", real(&RunConfig::beta2)},
      {"d_lr", real(&RunConfig::d_lr)},
      {"disc_channels",
       {[](RunConfig& c, std::string_view v) {
          std::vector<std::size_t> out;
          std::string item;
          std::istringstream in{std::string(v)};
          while (std::getline(in, item, ',')) {
            out.push_back(parse_number<std::size_t>(trim(item)));
          }
          if (out.empty()) throw ConfigError("empty list");
          c.disc_channels = std::move(out);
        },
        [](const RunConfig& c) { return fmt::format("{}", fmt::join(c.disc_channels, ",")); }}},
      {"w_l1", real(&RunConfig::w_l1)},
      {"w_var", real(&RunConfig::w_var)},
      {"w_gan", real(&RunConfig::w_gan)},
      {"mask_fraction", real(&RunConfig::mask_fraction)},
      {"threshold", real(&RunConfig::threshold)},
      {"gate",
       {[](RunConfig& c, std::string_view v) { c.gate = choice(v, {"sigmoid", "identity"}); },
        [](const RunConfig& c) { return c.gate; }}},
      {"slope", real(&RunConfig::slope)},
      {"mode",
       {[](RunConfig& c, std::string_view v) {
          c.mode = choice(v, {"selection", "baseline"});
        },
        [](const RunConfig& c) { return c.mode; }}},
      {"checkpoint_every", integer(&RunConfig::checkpoint_every)},
      {"log_every", integer(&RunConfig::log_every)},
  };
  return table;
}

void validate(const RunConfig& c) {
  if (c.batch_size == 0) throw ConfigError("config key 'batch_size' must be positive");
  if (c.log_every == 0) throw ConfigError("config key 'log_every' must be positive");
  if (!(c.lr > 0.0)) throw ConfigError("config key 'lr' must be positive");
  if (!(c.d_lr > 0.0)) throw ConfigError("config key 'd_lr' must be positive");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0)) throw ConfigError("config key 'beta1' outside [0, 1)");
  if (!(c.beta2 >= 0.0 && c.beta2 < 1.0)) throw ConfigError("config key 'beta2' outside [0, 1)");
  if (!(c.mask_fraction >= 0.0 && c.mask_fraction < 1.0)) {
    throw ConfigError("config key 'mask_fraction' outside [0, 1)");
  }
  if (!(c.threshold >= 0.0)) throw ConfigError("config key 'threshold' must be >= 0");
  if (c.image_size == 0 || c.image_size % 8 != 0) {
    throw ConfigError("config key 'image_size' must be a positive multiple of 8");
  }
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  for (const auto& [name, field] : fields()) {
    if (name != key) continue;
    try {
      field.set(*this, trim(value));
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("config key '{}': {}", key, e.what()));
    }
    return;
  }
  throw ConfigError(fmt::format("unknown config key '{}'", key));
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [name, field] : fields()) out += fmt::format("{} = {}\n", name, field.get(*this));
  return out;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& entry : fields()) out.push_back(entry.first);
    return out;
  }();
  return names;
}

RunConfig RunConfig::parse(std::istream& in) {
  RunConfig config;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("config line {}: expected 'key = value'", number));
    }
    const std::string_view key = trim(view.substr(0, eq));
    try {
      config.set(key, view.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("config line {}: {}", number, e.what()));
    }
  }
  validate(config);
  return config;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path));
  try {
    return parse(in);
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path, e.what()));
  }
}

void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides) {
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("override '{}' is not key=value", o));
    }
    config.set(trim(std::string_view(o).substr(0, eq)), std::string_view(o).substr(eq + 1));
  }
  validate(config);
}

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t global, std::string_view component) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (char ch : component) {
    hash ^= static_cast<unsigned char>(ch);
    hash *= 0x100000001b3ULL;
  }
  return mix_seed(global ^ hash);
}

}  // namespace cdnet
