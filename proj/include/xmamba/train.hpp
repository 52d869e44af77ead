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

#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "xmamba/augment.hpp"
#include "xmamba/frontend.hpp"
#include "xmamba/io.hpp"
#include "xmamba/metrics.hpp"
#include "xmamba/model.hpp"
#include "xmamba/optim.hpp"

namespace xmamba {

struct TrainConfig {
  double lr = 1e-6;
  double weight_decay = 1e-4;
  std::size_t batch_size = 20;
  std::size_t patience = 7;
  std::size_t top_k = 5;
  std::size_t max_epochs = 100;
  std::size_t crop_samples = kDefaultCropSamples;
  std::uint64_t seed = 0;
  ScanAlgorithm scan = ScanAlgorithm::kSequential;

  void validate() const {
    require(lr >= 0.0 && weight_decay >= 0.0, "train: lr and weight decay must be >= 0",
            ErrorKind::kUsage);
    require(batch_size >= 1 && patience >= 1 && top_k >= 1 && max_epochs >= 1 &&
                crop_samples >= 1,
            "train: batch_size, patience, top_k, max_epochs and crop_samples must be >= 1",
            ErrorKind::kUsage);
  }
};

/// One labelled utterance. Waveform inputs keep the waveform so training can
/// re-crop and re-augment every epoch; feature inputs only carry features.
struct Utterance {
  std::string utt_id;
  std::optional<Label> label;
  std::optional<Waveform> wave;
  Matrix<Real> eval_features;  // leading crop, no augmentation
};

/// Turns waveforms into model inputs: crop_or_concat, optional augmentation
/// (training only), then the toy front-end.
class FeaturePipeline {
 public:
  FeaturePipeline(std::size_t crop_samples, AugmentConfig augment, FrontendConfig fe = {})
      : crop_(crop_samples), augment_(augment), frontend_(std::make_shared<ToyFrontend>(fe)) {}

  std::size_t crop_samples() const noexcept { return crop_; }
  const AugmentConfig& augment_config() const noexcept { return augment_; }
  const ToyFrontend& frontend() const noexcept { return *frontend_; }

  Matrix<Real> eval_features(const Waveform& w) const {
    return (*frontend_).operator()<Real>(crop_or_concat(w, crop_));
  }

  /// True when train-time features for `w` differ from eval-time ones.
  bool train_varies(const Waveform& w) const {
    return augment_.mode != AugmentMode::kNone || w.size() > crop_;
  }

  Matrix<Real> train_features(const Waveform& w, Rng& rng) const {
    Waveform c = crop_or_concat(w, crop_, &rng);
    if (augment_.mode != AugmentMode::kNone) c = augment(c, augment_, rng);
    return (*frontend_).operator()<Real>(c);
  }

  /// Loads every manifest entry. Waveforms go through the front-end once for
  /// their eval features; feature files are used as they are.
  std::vector<Utterance> load(const std::vector<ManifestEntry>& entries) const {
    std::vector<Utterance> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(load_one(e));
    return out;
  }

  Utterance load_one(const ManifestEntry& e) const {
    Utterance u{e.utt_id, e.label, std::nullopt, {}};
    if (input_kind(e.path) == InputKind::kWave) {
      u.wave = read_waveform(e.path);
      u.eval_features = eval_features(*u.wave);
    } else {
      u.eval_features = read_features(e.path).cast<Real>();
    }
    return u;
  }

 private:
  std::size_t crop_;
  AugmentConfig augment_;
  std::shared_ptr<ToyFrontend> frontend_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean weighted CE over the epoch's batches
  double dev_eer = 0.0;
  double seconds = 0.0;
  std::size_t skipped_steps = 0;
};

template <typename T>
struct TrainResult {
  ModelParams<T> params;  // top-k average
  std::vector<EpochRecord> history;
  std::vector<ScoredCheckpoint<ModelParams<T>>> top;  // best first
  ClassWeights weights;
  double averaged_dev_eer = 0.0;
  bool short_pool = false;
};

template <typename T>
std::vector<TrialScore> score_utterances(const ModelParams<T>& p, const std::vector<Utterance>& set,
                                         Pooling rule,
                                         ScanAlgorithm algo = ScanAlgorithm::kSequential) {
  std::vector<TrialScore> out;
  out.reserve(set.size());
  for (const auto& u : set) {
    const Logits<T> z = predict(u.eval_features.template cast<T>(), p, rule, nullptr, algo);
    out.push_back({u.utt_id, double(z.score()), u.label});
  }
  return out;
}

inline ClassWeights class_weights_for(const ModelConfig& c, const std::vector<Utterance>& set) {
  if (c.weight_bonafide > 0.0 && c.weight_spoof > 0.0) return {c.weight_bonafide, c.weight_spoof};
  std::size_t nb = 0, ns = 0;
  for (const auto& u : set) {
    require(u.label.has_value(), "training utterance '" + u.utt_id + "' has no label");
    (*u.label == Label::kBonafide ? nb : ns) += 1;
  }
  return inverse_frequency_weights(nb, ns);
}

/// Mini-batch Adam with per-epoch dev EER, early stopping on dev EER, and
/// averaging of the top-k epochs. Utterances in a batch are processed in a
/// fixed order so gradient sums are reproducible.
template <typename T>
TrainResult<T> train(const std::vector<Utterance>& train_set, const std::vector<Utterance>& dev_set,
                     const ModelConfig& mc, const TrainConfig& tc, const FeaturePipeline& pipe,
                     const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  mc.validate();
  tc.validate();
  require(!train_set.empty() && !dev_set.empty(), "train: datasets must be non-empty");
  TrainResult<T> r{init_params<T>(mc), {}, {}, class_weights_for(mc, train_set), 0.0, false};
  ModelParams<T>& p = r.params;
  AdamState<ModelParams<T>> opt(p);
  const AdamOptions ao{tc.lr, tc.weight_decay};
  EarlyStopper stopper(tc.patience);
  ModelParams<T> grad = zeros_like(p);
  Rng master(tc.seed);
  std::vector<std::size_t> order(train_set.size());

  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng erng = master.fork(epoch);
    std::iota(order.begin(), order.end(), 0);
    erng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    const std::size_t skipped_before = opt.skipped;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += tc.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + tc.batch_size);
      grad.for_each_tensor([](const std::string&, auto& m) { m.fill(0); });
      double batch_loss = 0.0;
      for (std::size_t k = b0; k < b1; ++k) {
        const Utterance& u = train_set[order[k]];
        Matrix<T> x;
        if (u.wave && pipe.train_varies(*u.wave))
          x = pipe.train_features(*u.wave, erng).template cast<T>();
        else
          x = u.eval_features.template cast<T>();
        ModelCache<T> cache;
        const Logits<T> z = predict(x, p, mc.pooling, &cache, tc.scan);
        const LossResult<T> l = weighted_ce_loss(z, *u.label, r.weights);
        require(std::isfinite(double(l.loss)),
                "training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                    " on '" + u.utt_id + "'",
                ErrorKind::kNumerical);
        batch_loss += double(l.loss);
        model_backward(l.grad, cache, p, grad, mc.pooling);
      }
      const double n = double(b1 - b0);
      scale_tree(grad, T(1.0 / n));
      adam_step(p, grad, opt, ao);
      loss_sum += batch_loss / n;
      ++batches;
    }
    require(tree_finite(p), "training diverged: non-finite parameters after epoch " +
                                std::to_string(epoch), ErrorKind::kNumerical);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / double(batches);
    rec.dev_eer = compute_eer(score_utterances(p, dev_set, mc.pooling, tc.scan)).eer;
    rec.skipped_steps = opt.skipped - skipped_before;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    keep_best(r.top, {p, rec.dev_eer, epoch}, tc.top_k);
    if (stopper.update(rec.dev_eer)) break;
  }
  r.params = average_checkpoints(r.top, tc.top_k, &r.short_pool);
  r.averaged_dev_eer = compute_eer(score_utterances(r.params, dev_set, mc.pooling, tc.scan)).eer;
  return r;
}

}  // namespace xmamba
