#include "fingerloc/kv.hpp"

#include "fingerloc/types.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fingerloc {

std::string_view trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

std::vector<std::string_view> split_fields(std::string_view line, char delimiter) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delimiter, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text == "nan" || text == "NaN" || text == "NAN") return std::nan("");
  if (text == "inf" || text == "+inf" || text == "Inf") return HUGE_VAL;
  if (text == "-inf" || text == "-Inf") return -HUGE_VAL;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::optional<long long> parse_int(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return std::nullopt;
  long long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

KeyValueFile KeyValueFile::parse(std::string_view text, std::string_view origin) {
  KeyValueFile kv;
  kv.origin_ = std::string(origin);
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(start, end - start));
    ++line_no;
    start = end + 1;
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw DataError(kv.origin_ + ":" + std::to_string(line_no) + ": unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw DataError(kv.origin_ + ":" + std::to_string(line_no) + ": expected 'key = value'");
    auto key = std::string(trim(line.substr(0, eq)));
    if (key.empty())
      throw DataError(kv.origin_ + ":" + std::to_string(line_no) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    auto value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    kv.set(std::move(key), std::string(value));
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

std::string KeyValueFile::to_string() const {
  std::string out;
  for (const auto& key : order_) {
    out += key;
    out += " = ";
    out += values_.find(key)->second;
    out += '\n';
  }
  return out;
}

void KeyValueFile::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << to_string();
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

bool KeyValueFile::contains(std::string_view key) const {
  return values_.find(key) != values_.end();
}

std::optional<std::string> KeyValueFile::get(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueFile::require(std::string_view key) const {
  auto v = get(key);
  if (!v) throw DataError(origin_ + ": missing key '" + std::string(key) + "'");
  return *v;
}

double KeyValueFile::require_double(std::string_view key) const {
  auto v = parse_double(require(key));
  if (!v) throw DataError(origin_ + ": key '" + std::string(key) + "' is not a number");
  return *v;
}

long long KeyValueFile::require_int(std::string_view key) const {
  auto v = parse_int(require(key));
  if (!v) throw DataError(origin_ + ": key '" + std::string(key) + "' is not an integer");
  return *v;
}

double KeyValueFile::get_double(std::string_view key, double fallback) const {
  return contains(key) ? require_double(key) : fallback;
}

long long KeyValueFile::get_int(std::string_view key, long long fallback) const {
  return contains(key) ? require_int(key) : fallback;
}

std::string KeyValueFile::get_string(std::string_view key, std::string_view fallback) const {
  auto v = get(key);
  return v ? *v : std::string(fallback);
}

void KeyValueFile::set(std::string key, std::string value) {
  auto it = values_.find(key);
  if (it != values_.end()) {
    it->second = std::move(value);
    return;
  }
  order_.push_back(key);
  values_.emplace(std::move(key), std::move(value));
}

void KeyValueFile::set(std::string key, double value) { set(std::move(key), format_double(value)); }

void KeyValueFile::set(std::string key, long long value) {
  set(std::move(key), std::to_string(value));
}

std::vector<std::string> KeyValueFile::keys_under(std::string_view prefix) const {
  std::vector<std::string> out;
  const std::string p = std::string(prefix) + ".";
  for (const auto& key : order_)
    if (key.rfind(p, 0) == 0) out.push_back(key.substr(p.size()));
  return out;
}

} // namespace fingerloc
