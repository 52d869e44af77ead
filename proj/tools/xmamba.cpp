// Copyright 2026 The xmamba Authors
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

// xmamba: train, score, evaluate and benchmark bidirectional Mamba
// spoofing countermeasures.
//
//   xmamba train --config F [--set k=v]...
//   xmamba score --ckpt F --manifest F --out F
//   xmamba eval  --scores F --protocol F [--tdcf F]
//   xmamba bench --config F --out-dir D [--runs N]
//   xmamba synth --seed N --n N --out-dir D
//
// Exit status: 0 success, 1 usage or config error, 2 data error,
// 3 numerical failure.

#include <CLI11.hpp>

#include <iostream>

#include "xmamba/cli.hpp"

namespace {

int run(int argc, char** argv) {
  CLI::App app{"Bidirectional Mamba spoofing countermeasure toolkit"};
  app.require_subcommand(1);

  std::string config, ckpt, manifest, out, scores, protocol, tdcf, out_dir;
  std::vector<std::string> overrides;
  std::size_t runs = 0, n = 0;
  std::uint64_t seed = 0;

  auto* train = app.add_subcommand("train", "train a model (or a variant sweep)");
  train->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);
  train->add_option("--set", overrides, "override, section.key=value (repeatable)");

  auto* score = app.add_subcommand("score", "score a manifest with a checkpoint");
  score->add_option("--ckpt", ckpt, "checkpoint")->required();
  score->add_option("--manifest", manifest, "manifest")->required();
  score->add_option("--out", out, "score file to write")->required();

  auto* eval = app.add_subcommand("eval", "EER (and min t-DCF) of a score file");
  eval->add_option("--scores", scores, "score file")->required();
  eval->add_option("--protocol", protocol, "protocol file")->required();
  eval->add_option("--tdcf", tdcf, "t-DCF cost model file");

  auto* bench = app.add_subcommand("bench", "real-time-factor sweep");
  bench->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);
  bench->add_option("--out-dir", out_dir, "output directory")->required();
  auto* runs_opt = bench->add_option("--runs", runs, "timed runs per duration");

  auto* synth = app.add_subcommand("synth", "write the synthetic corpus");
  synth->add_option("--seed", seed, "seed")->required();
  synth->add_option("--n", n, "utterances per class for training")->required();
  synth->add_option("--out-dir", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  using namespace xmamba::cli;
  if (*train) {
    cmd_train(load_config(config, overrides));
  } else if (*score) {
    const ScoreSummary s = cmd_score(ckpt, manifest, out);
    if (s.failed > 0) {
      std::cerr << "error: " << s.failed << " utterance(s) could not be scored; '" << out
                << "' is partial\n";
      return static_cast<int>(xmamba::ErrorKind::kData);
    }
  } else if (*eval) {
    std::cout << cmd_eval(scores, protocol, tdcf);
  } else if (*bench) {
    std::optional<std::size_t> r;
    if (runs_opt->count() > 0) r = runs;
    cmd_bench(load_config(config, {}), out_dir, r);
  } else if (*synth) {
    cmd_synth(seed, n, out_dir);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const xmamba::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(xmamba::ErrorKind::kData);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(xmamba::ErrorKind::kData);
  }
}
