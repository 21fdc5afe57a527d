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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <unistd.h>

#include "fusioncm/rng.hpp"
#include "fusioncm/tensor.hpp"

namespace fusioncm::testing {

inline nn::Tensor RandomTensor(nn::Shape shape, Rng &rng, double lo = -1.0, double hi = 1.0) {
  nn::Tensor t(std::move(shape));
  for (double &v : t.data) v = rng.Uniform(lo, hi);
  return t;
}

// Magnitudes in [0.1, 1] with random sign, so kinks at zero stay far
// outside the finite-difference step.
inline nn::Tensor AwayFromZero(nn::Shape shape, Rng &rng) {
  nn::Tensor t(std::move(shape));
  for (double &v : t.data) v = (rng.Uniform() < 0.5 ? -1.0 : 1.0) * rng.Uniform(0.1, 1.0);
  return t;
}

inline std::string ReadBytes(const std::filesystem::path &p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string &tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("fusioncm_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(Counter()++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;
  const std::filesystem::path &path() const { return path_; }

 private:
  static std::uint64_t &Counter() {
    static std::uint64_t n = 0;
    return n;
  }
  std::filesystem::path path_;
};

}  // namespace fusioncm::testing
