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

// Command-line front end: synth-data, extract, train, score, evaluate,
// pipeline.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fusioncm/config.hpp"
#include "fusioncm/errors.hpp"
#include "fusioncm/metrics.hpp"
#include "fusioncm/pipeline.hpp"

namespace {

using namespace fusioncm;

struct CommonOptions {
  std::string config_path;
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void AddCommon(CLI::App *cmd, CommonOptions &o) {
  cmd->add_option("--config", o.config_path, "key=value config file");
  cmd->add_option("--scenario", o.scenario, "la or pa")->check(CLI::IsMember({"la", "pa"}));
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--set", o.overrides, "override a config key (key=value), repeatable");
}

PipelineConfig Resolve(const CommonOptions &o) {
  Config c = o.config_path.empty() ? Config() : Config::Load(o.config_path);
  for (const std::string &kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) Fail(ErrorKind::kConfig, "--set expects key=value, got '" + kv + "'");
    c.Set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!o.scenario.empty()) c.Set("scenario", o.scenario);
  if (o.seed) c.Set("seed", std::to_string(*o.seed));
  return PipelineConfig::FromConfig(c);
}

void PrintLine(const std::string &line) { std::cout << line << std::endl; }

void WriteReport(const MetricReport &report, const std::string &out_prefix) {
  std::cout << FormatReportText(report);
  if (out_prefix.empty()) return;
  auto open = [](const std::string &path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) Fail(ErrorKind::kIo, "cannot write " + path);
    return f;
  };
  {
    auto f = open(out_prefix + ".txt");
    f << FormatReportText(report);
  }
  {
    auto f = open(out_prefix + ".kv");
    f << FormatReportKeyValue(report);
  }
  {
    auto f = open(out_prefix + ".det.csv");
    WriteDetCsv(f, report.det);
  }
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"fusioncm: fused voice/face spoofing countermeasure toolkit"};
  app.require_subcommand(1);

  CommonOptions synth_o, extract_o, train_o, score_o, pipe_o;
  std::string synth_out, subset = "eval", score_out, eval_scores, eval_keys, eval_out, pipe_out;
  double eval_beta = 1.0;
  std::optional<double> pipe_beta;
  bool pipe_no_train = false;

  CLI::App *synth = app.add_subcommand("synth-data", "write the synthetic dataset");
  AddCommon(synth, synth_o);
  synth->add_option("--out", synth_out, "dataset directory (defaults to data_dir)");

  CLI::App *extract = app.add_subcommand("extract", "compute and cache features for a subset");
  AddCommon(extract, extract_o);
  extract->add_option("--subset", subset)->check(CLI::IsMember({"train", "dev", "eval"}));

  CLI::App *train = app.add_subcommand("train", "train every network of the scenario");
  AddCommon(train, train_o);

  CLI::App *score = app.add_subcommand("score", "score a subset with trained checkpoints");
  AddCommon(score, score_o);
  score->add_option("--subset", subset)->check(CLI::IsMember({"train", "dev", "eval"}));
  score->add_option("--out", score_out, "score file path");

  CLI::App *evaluate = app.add_subcommand("evaluate", "EER and min t-DCF of a score file");
  evaluate->add_option("--scores", eval_scores, "score file")->required();
  evaluate->add_option("--keys", eval_keys, "key or protocol file")->required();
  evaluate->add_option("--beta", eval_beta, "t-DCF cost factor (default 1.0)");
  evaluate->add_option("--out", eval_out, "report prefix: writes .txt, .kv and .det.csv");

  CLI::App *pipeline = app.add_subcommand("pipeline", "train, score and evaluate in one go");
  AddCommon(pipeline, pipe_o);
  pipeline->add_option("--subset", subset)->check(CLI::IsMember({"train", "dev", "eval"}));
  pipeline->add_option("--beta", pipe_beta, "t-DCF cost factor");
  pipeline->add_option("--out", pipe_out, "report prefix");
  pipeline->add_flag("--no-train", pipe_no_train, "reuse existing checkpoints");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "error: usage-error: " << e.what() << std::endl;
    return 2;
  }

  try {
    if (*synth) {
      PipelineConfig cfg = Resolve(synth_o);
      const std::string dir = synth_out.empty() ? cfg.data_dir.string() : synth_out;
      WriteSyntheticDataset(cfg.synth, dir);
      PrintLine("wrote synthetic dataset to " + dir);
    } else if (*extract) {
      const PipelineConfig cfg = Resolve(extract_o);
      const Subset s = ParseSubset(subset);
      const TrialList trials = LoadProtocol(ProtocolPath(cfg.data_dir, s), s);
      const std::vector<FeatureKind> kinds =
          cfg.scenario == Scenario::kLa
              ? std::vector<FeatureKind>{FeatureKind::kSpectrogram, FeatureKind::kLfcc}
              : std::vector<FeatureKind>{FeatureKind::kSpectrogram, FeatureKind::kCqt};
      for (FeatureKind k : kinds) {
        const auto feats = ExtractFeatures(cfg, trials, k);
        PrintLine("extracted " + std::to_string(feats.size()) + " " + FeatureKindName(k) + " features");
      }
    } else if (*train) {
      TrainModels(Resolve(train_o), PrintLine);
    } else if (*score) {
      PipelineConfig cfg = Resolve(score_o);
      const auto records = ScoreSubset(cfg, ParseSubset(subset), PrintLine);
      if (!score_out.empty()) SaveScoreFile(score_out, records);
    } else if (*evaluate) {
      std::vector<ScoreRecord> records = LoadScoreFile(eval_scores);
      AttachKeys(records, LoadKeyFile(eval_keys));
      WriteReport(Evaluate(records, eval_beta), eval_out);
    } else if (*pipeline) {
      PipelineConfig cfg = Resolve(pipe_o);
      if (pipe_beta) cfg.beta = *pipe_beta;
      WriteReport(RunPipeline(cfg, ParseSubset(subset), !pipe_no_train, PrintLine), pipe_out);
    }
  } catch (const Error &e) {
    std::cerr << "error: " << ErrorKindName(e.kind()) << ": " << e.what() << std::endl;
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "error: internal-error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
