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

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fusioncm/metrics.hpp"

namespace fusioncm {

enum class Subset { kTrain, kDev, kEval };

Subset ParseSubset(const std::string &name);
const char *SubsetName(Subset subset);

// One protocol line: speaker utterance system attack key. "-" marks an empty
// field; the key may be "-" only in eval lists.
struct Trial {
  std::string speaker_id;
  std::string utterance_id;
  std::string system_id;
  std::string attack_id;
  std::optional<TrialKey> key;
};

struct TrialList {
  Subset subset = Subset::kTrain;
  std::vector<Trial> trials;

  std::size_t size() const { return trials.size(); }
};

TrialList ParseProtocol(std::istream &in, Subset subset);
TrialList LoadProtocol(const std::filesystem::path &path, Subset subset);
void WriteProtocol(std::ostream &out, const TrialList &list);

}  // namespace fusioncm
