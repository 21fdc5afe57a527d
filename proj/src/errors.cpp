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

#include "fusioncm/errors.hpp"

namespace fusioncm {

std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kFormat: return "format-error";
    case ErrorKind::kUnsupportedEncoding: return "unsupported-encoding";
    case ErrorKind::kParameter: return "parameter-error";
    case ErrorKind::kInputTooShort: return "input-too-short";
    case ErrorKind::kShape: return "shape-error";
    case ErrorKind::kState: return "state-error";
    case ErrorKind::kNumeric: return "numeric-error";
    case ErrorKind::kEvaluation: return "evaluation-error";
    case ErrorKind::kParse: return "parse-error";
    case ErrorKind::kIntegrity: return "integrity-error";
    case ErrorKind::kTraining: return "training-error";
    case ErrorKind::kConfig: return "config-error";
    case ErrorKind::kIo: return "io-error";
  }
  return "error";
}

}  // namespace fusioncm
