// Copyright 2026 The fusioncm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fusioncm/config.hpp"

#include <fstream>
#include <sstream>

#include "fusioncm/errors.hpp"

namespace fusioncm {

namespace {

std::string Trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string ReadText(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kIo, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

constexpr int kMaxIncludeDepth = 16;

}  // namespace

Config Config::Parse(const std::string &text, const std::filesystem::path &base_dir) {
  Config c;
  c.ParseInto(text, base_dir, 0, "<text>");
  return c;
}

Config Config::Load(const std::filesystem::path &path) {
  Config c;
  c.ParseInto(ReadText(path), path.parent_path(), 0, path.string());
  return c;
}

void Config::ParseInto(const std::string &text, const std::filesystem::path &base_dir, int depth,
                       const std::string &origin) {
  if (depth > kMaxIncludeDepth) Fail(ErrorKind::kConfig, "include nesting too deep at " + origin);
  std::istringstream in(text);
  std::string raw;
  for (std::size_t n = 1; std::getline(in, raw); ++n) {
    const std::string line = Trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(n);
    if (line.rfind("include", 0) == 0 && line.find('=') == std::string::npos) {
      const std::string rel = Trim(line.substr(7));
      if (rel.empty()) Fail(ErrorKind::kConfig, where + ": include needs a path");
      const std::filesystem::path p = base_dir / rel;
      ParseInto(ReadText(p), p.parent_path(), depth + 1, p.string());
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) Fail(ErrorKind::kConfig, where + ": expected key = value");
    const std::string key = Trim(line.substr(0, eq));
    if (key.empty()) Fail(ErrorKind::kConfig, where + ": empty key");
    values_[key] = Trim(line.substr(eq + 1));
  }
}

std::string Config::GetString(const std::string &key, const std::string &fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::GetDouble(const std::string &key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(it->second, &used);
  } catch (const std::exception &) {
    used = 0;
  }
  if (used == 0 || used != it->second.size()) {
    Fail(ErrorKind::kConfig, key + ": '" + it->second + "' is not a number");
  }
  return v;
}

std::int64_t Config::GetInt(const std::string &key, std::int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(it->second, &used);
  } catch (const std::exception &) {
    used = 0;
  }
  if (used == 0 || used != it->second.size()) {
    Fail(ErrorKind::kConfig, key + ": '" + it->second + "' is not an integer");
  }
  return v;
}

std::size_t Config::GetSize(const std::string &key, std::size_t fallback) const {
  const std::int64_t v = GetInt(key, static_cast<std::int64_t>(fallback));
  if (v < 0) Fail(ErrorKind::kConfig, key + " must not be negative");
  return static_cast<std::size_t>(v);
}

bool Config::GetBool(const std::string &key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string &v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  Fail(ErrorKind::kConfig, key + ": '" + v + "' is not a boolean");
}

void Config::RejectUnknown(const std::set<std::string> &known) const {
  for (const auto &[k, v] : values_) {
    if (!known.count(k)) Fail(ErrorKind::kConfig, "unknown config key '" + k + "'");
  }
}

}  // namespace fusioncm
