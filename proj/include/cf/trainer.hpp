#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "cf/consistent_feature.hpp"
#include "cf/data.hpp"
#include "cf/metrics.hpp"
#include "cf/model.hpp"
#include "cf/ops.hpp"
#include "cf/optim.hpp"
#include "cf/rng.hpp"

namespace cf {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;  // master seed; data order, dropout, history draw from it
  OptimHyper optim;
  std::optional<CFConfig> cf;
  double label_smoothing = 0.0;
  std::size_t eval_every = 1;

  void validate() const {
    if (epochs == 0) throw ConfigError("train.epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
    if (eval_every == 0) throw ConfigError("train.eval_every must be >= 1");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
      throw ConfigError("reg.label_smoothing must be in [0, 1)");
    }
    optim.validate();
    if (cf) cf->validate();
  }
};

// Alias that names what the smoothing parameter turns the objective into.
inline Tensor label_smoothing_loss(const Tensor& logits, const std::vector<int>& labels,
                                   double smoothing) {
  return softmax_cross_entropy(logits, labels, smoothing);
}

// True when `label` ranks inside the k best classes of the row, ties broken
// toward the lower class index.
inline bool label_in_top_k(const double* row, std::size_t classes, int label, std::size_t k) {
  const double own = row[label];
  std::size_t better = 0;
  for (std::size_t j = 0; j < classes; ++j) {
    const auto jl = static_cast<int>(j);
    if (jl == label) continue;
    if (row[j] > own || (row[j] == own && jl < label)) ++better;
  }
  return better < k;
}

struct EvalResult {
  double loss = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
};

// Full-set eval-mode pass: plain (unsmoothed) cross-entropy plus top-1/top-5
// accuracy. top-5 saturates at 1 when there are 5 or fewer classes.
inline EvalResult evaluate(Model& model, const Dataset& ds) {
  const auto acts = model.forward(ds.inputs, Mode::eval);
  EvalResult r;
  r.loss = softmax_cross_entropy(acts.logits, ds.labels).item();
  const std::size_t k = ds.num_classes;
  std::size_t hit1 = 0, hit5 = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double* row = acts.logits.data.data() + i * k;
    if (label_in_top_k(row, k, ds.labels[i], 1)) ++hit1;
    if (label_in_top_k(row, k, ds.labels[i], 5)) ++hit5;
  }
  r.top1 = static_cast<double>(hit1) / static_cast<double>(ds.size());
  r.top5 = static_cast<double>(hit5) / static_cast<double>(ds.size());
  return r;
}

using EpochHook = std::function<void(std::size_t epoch, Model& model, const MetricsRecord&)>;

namespace detail {

// Rows of `features` whose side matches, as a fresh untracked tensor.
inline std::optional<Tensor> side_rows(const Tensor& features, const std::vector<Side>& sides,
                                       Side want) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < sides.size(); ++i) {
    if (sides[i] == want) rows.push_back(i);
  }
  if (rows.empty()) return std::nullopt;
  const std::size_t stride = features.size() / features.shape[0];
  Shape shape = features.shape;
  shape[0] = rows.size();
  Tensor out = Tensor::zeros(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(features.data.begin() + static_cast<std::ptrdiff_t>(rows[i] * stride),
              features.data.begin() + static_cast<std::ptrdiff_t>((rows[i] + 1) * stride),
              out.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

}  // namespace detail

// One full training run. Per batch: (1) forward and task loss, with the
// regularizer's penalty added through the *frozen* descriptor on side-B rows
// when the schedule says so; (2) one generator-group optimizer step; (3) one
// descriptor update on detached features via cf_step. When the regularizer is
// off, none of its code paths run and none of its random streams are
// consumed, so a run with cf disabled is bit-identical to one that never
// linked it.
inline std::vector<MetricsRecord> train_run(Model& model, const Dataset& train, const Dataset& val,
                                            const TrainConfig& cfg,
                                            const SplitAssignment* split = nullptr,
                                            const EpochHook& hook = {}) {
  cfg.validate();
  if (train.num_classes != val.num_classes) {
    throw ContractError("train and val class counts differ");
  }
  const bool cf_on = cfg.cf.has_value();
  if (cf_on) {
    if (!split) throw ContractError("regularized training needs a split assignment");
    if (split->side.size() != train.size()) {
      throw ContractError("split does not cover the training set");
    }
  }

  const BatchPlan plan{mix_seed(cfg.seed, streams::data_order), cfg.batch_size};
  Rng dropout_rng(mix_seed(cfg.seed, streams::dropout));
  Rng history_rng(mix_seed(cfg.seed, streams::history));
  AdamW opt_g(cfg.optim);
  AdamW opt_d(cfg.optim);  // same hyper-parameters, fully independent state
  FeatureHistoryBuffer history(cf_on ? cfg.cf->history_len : 0);

  std::vector<MetricsRecord> records;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t top1_hits = 0;
    double disc_sum = 0.0, penalty_sum = 0.0;
    std::size_t disc_count = 0, penalty_count = 0;

    for (const Batch& batch : batches(train, cf_on ? split : nullptr, plan, epoch)) {
      Tape tape;
      const auto acts = model.forward(batch.inputs, Mode::train, &dropout_rng, &tape);
      const Tensor task_loss =
          softmax_cross_entropy(acts.logits, batch.labels, cfg.label_smoothing);
      if (!std::isfinite(task_loss.item())) {
        throw NumericError(epoch, step, "training loss");
      }
      loss_sum += task_loss.item() * static_cast<double>(batch.labels.size());
      for (std::size_t i = 0; i < batch.labels.size(); ++i) {
        const double* row = acts.logits.data.data() + i * train.num_classes;
        if (label_in_top_k(row, train.num_classes, batch.labels[i], 1)) ++top1_hits;
      }

      CFActivity act;
      Tensor total = task_loss;
      if (cf_on) {
        act = cf_active(step, *cfg.cf);
        if (act.gen_penalized && cfg.cf->weight != 0.0) {
          std::vector<std::size_t> b_rows;
          for (std::size_t i = 0; i < batch.sides.size(); ++i) {
            if (batch.sides[i] == Side::B) b_rows.push_back(i);
          }
          if (!b_rows.empty()) {
            const Tensor live_b = gather_rows(acts.features, b_rows);
            const Tensor scores = model.discriminate(live_b, nullptr);  // frozen descriptor
            const Tensor reg = generator_reg_term(scores, *cfg.cf);
            if (!std::isfinite(reg.item())) {
              throw NumericError(epoch, step, "consistency penalty");
            }
            total = add(task_loss, scalar_mul(reg, cfg.cf->weight));
            penalty_sum += cfg.cf->weight * reg.item();
            ++penalty_count;
          }
        }
      }

      tape.backward(total);
      model.zero_grads(Group::generator);
      model.accumulate_grads(tape, Group::generator);
      opt_g.step(model.params(Group::generator));

      if (cf_on && act.disc_trains) {
        const Tensor frozen = detach(acts.features);
        const std::optional<Tensor> fa = detail::side_rows(frozen, batch.sides, Side::A);
        const std::optional<Tensor> fb = detail::side_rows(frozen, batch.sides, Side::B);
        const CFStepResult r = cf_step(model, fa ? &*fa : nullptr, fb ? &*fb : nullptr, history,
                                       history_rng, opt_d, epoch, step);
        if (r.trained) {
          disc_sum += r.disc_loss;
          ++disc_count;
        }
      }
      ++step;
    }

    const bool do_eval = (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs;
    if (!do_eval) continue;
    const EvalResult ev = evaluate(model, val);
    MetricsRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.train_top1 = static_cast<double>(top1_hits) / static_cast<double>(train.size());
    rec.val_loss = ev.loss;
    rec.val_top1 = ev.top1;
    rec.val_top5 = ev.top5;
    rec.disc_loss = disc_count ? disc_sum / static_cast<double>(disc_count) : 0.0;
    rec.cf_penalty = penalty_count ? penalty_sum / static_cast<double>(penalty_count) : 0.0;
    records.push_back(rec);
    if (hook) hook(epoch, model, rec);
  }
  return records;
}

}  // namespace cf
