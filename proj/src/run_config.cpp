#include "sargan/run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "sargan/errors.hpp"

namespace sargan {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw UsageError("config key '" + key + "': cannot parse '" + text + "' as a number");
  }
  return value;
}

}  // namespace

RunConfig::RunConfig(std::vector<ConfigKey> schema) : schema_(std::move(schema)) {
  for (const ConfigKey& k : schema_) values_[k.name] = k.default_value;
}

bool RunConfig::knows(std::string_view key) const { return values_.find(key) != values_.end(); }

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) {
    std::string legal;
    for (const ConfigKey& k : schema_) legal += (legal.empty() ? "" : ", ") + k.name;
    throw UsageError("unknown config key '" + key + "'; accepted keys: " + legal);
  }
  it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
  return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  return parse_number<std::int64_t>(key, get(key));
}

std::uint64_t RunConfig::get_uint(const std::string& key) const {
  const std::string& text = get(key);
  if (!text.empty() && text[0] == '-') {
    throw UsageError("config key '" + key + "' must be non-negative, got '" + text + "'");
  }
  return parse_number<std::uint64_t>(key, text);
}

double RunConfig::get_double(const std::string& key) const {
  return parse_number<double>(key, get(key));
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError("config key '" + key + "': expected true or false, got '" + v + "'");
}

void RunConfig::merge_text(std::string_view text, const std::string& origin) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    for (std::size_t i = 1; i < body.size(); ++i) {
      if (body[i] == '#' && (body[i - 1] == ' ' || body[i - 1] == '\t')) {
        body = trim(body.substr(0, i));
        break;
      }
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw UsageError(origin + ":" + std::to_string(line_no) + ": expected key=value, got '" +
                       body + "'");
    }
    const std::string key = trim(body.substr(0, eq));
    try {
      set(key, trim(body.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw UsageError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const ConfigKey& k : schema_) out += k.name + "=" + values_.at(k.name) + "\n";
  return out;
}

void RunConfig::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_text();
}

}  // namespace sargan
