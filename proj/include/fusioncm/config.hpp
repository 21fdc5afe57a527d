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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace fusioncm {

// Flat key=value settings. '#' starts a comment. A line of the form
// `include <path>` pulls in another file (relative to the including file);
// later assignments override earlier ones.
class Config {
 public:
  static Config Parse(const std::string &text, const std::filesystem::path &base_dir = ".");
  static Config Load(const std::filesystem::path &path);

  bool Has(const std::string &key) const { return values_.count(key) != 0; }
  void Set(const std::string &key, const std::string &value) { values_[key] = value; }

  std::string GetString(const std::string &key, const std::string &fallback) const;
  double GetDouble(const std::string &key, double fallback) const;
  std::int64_t GetInt(const std::string &key, std::int64_t fallback) const;
  std::size_t GetSize(const std::string &key, std::size_t fallback) const;
  bool GetBool(const std::string &key, bool fallback) const;

  const std::map<std::string, std::string> &values() const { return values_; }

  // Throws kConfig naming the first key not in `known`.
  void RejectUnknown(const std::set<std::string> &known) const;

 private:
  void ParseInto(const std::string &text, const std::filesystem::path &base_dir, int depth,
                 const std::string &origin);

  std::map<std::string, std::string> values_;
};

}  // namespace fusioncm
