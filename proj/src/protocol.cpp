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

#include "fusioncm/protocol.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "fusioncm/errors.hpp"

namespace fusioncm {

Subset ParseSubset(const std::string &name) {
  if (name == "train") return Subset::kTrain;
  if (name == "dev") return Subset::kDev;
  if (name == "eval") return Subset::kEval;
  Fail(ErrorKind::kParameter, "unknown subset '" + name + "' (train|dev|eval)");
}

const char *SubsetName(Subset subset) {
  switch (subset) {
    case Subset::kTrain: return "train";
    case Subset::kDev: return "dev";
    case Subset::kEval: return "eval";
  }
  return "?";
}

TrialList ParseProtocol(std::istream &in, Subset subset) {
  TrialList list;
  list.subset = subset;
  std::set<std::string> seen;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    std::istringstream is(line);
    std::vector<std::string> f;
    for (std::string w; is >> w;) f.push_back(w);
    if (f.empty()) continue;
    const std::string where = "protocol line " + std::to_string(n);
    if (f.size() != 5) {
      Fail(ErrorKind::kParse, where + ": expected 5 fields, got " + std::to_string(f.size()));
    }
    auto field = [](const std::string &s) { return s == "-" ? std::string() : s; };
    Trial t;
    t.speaker_id = field(f[0]);
    t.utterance_id = field(f[1]);
    t.system_id = field(f[2]);
    t.attack_id = field(f[3]);
    if (t.utterance_id.empty()) Fail(ErrorKind::kParse, where + ": missing utterance id");
    if (f[4] != "-") {
      try {
        t.key = ParseTrialKey(f[4]);
      } catch (const Error &e) {
        Fail(ErrorKind::kParse, where + ": " + e.what());
      }
    } else if (subset != Subset::kEval) {
      Fail(ErrorKind::kParse, where + ": key is required outside the eval subset");
    }
    if (!seen.insert(t.utterance_id).second) {
      Fail(ErrorKind::kIntegrity, where + ": duplicate utterance '" + t.utterance_id + "'");
    }
    list.trials.push_back(std::move(t));
  }
  return list;
}

TrialList LoadProtocol(const std::filesystem::path &path, Subset subset) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kIo, "cannot open protocol " + path.string());
  return ParseProtocol(in, subset);
}

void WriteProtocol(std::ostream &out, const TrialList &list) {
  auto field = [](const std::string &s) { return s.empty() ? std::string("-") : s; };
  for (const Trial &t : list.trials) {
    out << field(t.speaker_id) << ' ' << t.utterance_id << ' ' << field(t.system_id) << ' '
        << field(t.attack_id) << ' ' << (t.key ? TrialKeyName(*t.key) : "-") << '\n';
  }
}

}  // namespace fusioncm
