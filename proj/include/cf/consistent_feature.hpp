#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>

#include "cf/data.hpp"
#include "cf/model.hpp"
#include "cf/ops.hpp"
#include "cf/optim.hpp"
#include "cf/rng.hpp"

namespace cf {

// Adversarial consistency regularizer. The training set is split once into
// sides A and B; a descriptor head is trained with a hinge loss to tell the
// backbone's A-features (target +1) from B-features (target -1), and the
// backbone is penalized through the frozen descriptor on side-B samples. A
// backbone that memorizes per-sample quirks makes the two sides easy to tell
// apart, so the penalty pushes it toward features consistent across the split.
struct CFConfig {
  double p = 0.5;                       // fraction of samples on side A
  double weight = 0.1;                  // penalty coefficient on the backbone
  std::size_t history_len = 100;        // per-side feature history capacity
  std::size_t desc_channel = 64;        // descriptor hidden width
  std::size_t warm_up = 1600;           // optimizer steps before the penalty engages
  std::optional<std::size_t> shut_off;  // step at which both updates stop, if any
  // The penalty defaults to -mean(score_B): the backbone raises B scores
  // toward the descriptor's A side, directly opposing the descriptor. With
  // this flag the term enters as +mean(score_B) instead.
  bool literal_reg_sign = false;

  void validate() const {
    if (p <= 0.0 || p >= 1.0) throw ConfigError("cf.p must be in (0, 1)");
    if (weight < 0.0) throw ConfigError("cf.weight must be >= 0");
    if (desc_channel == 0) throw ConfigError("cf.desc_channel must be >= 1");
    if (shut_off && *shut_off <= warm_up) {
      throw ConfigError("cf.shut_off must be greater than cf.warm_up");
    }
  }
};

struct CFActivity {
  bool disc_trains = false;
  bool gen_penalized = false;
};

// Schedule in optimizer steps: the descriptor trains from step 0, the penalty
// engages at warm_up (inclusive), and both stop at shut_off (exclusive).
inline CFActivity cf_active(std::size_t step, const CFConfig& cfg) {
  CFActivity act;
  const bool before_shut_off = !cfg.shut_off || step < *cfg.shut_off;
  act.disc_trains = before_shut_off;
  act.gen_penalized = before_shut_off && step >= cfg.warm_up;
  return act;
}

namespace detail {

inline void check_scores(const Tensor& scores, const char* what) {
  if (scores.rank() != 2 || scores.shape[1] != 1) {
    throw ShapeError(std::string(what) + ": scores must be [n x 1], got " +
                     shape_str(scores.shape));
  }
}

}  // namespace detail

// Two-sided hinge: side A is pushed above +1, side B below -1.
inline Tensor hinge_disc_loss(const Tensor& scores_a, const Tensor& scores_b) {
  detail::check_scores(scores_a, "hinge_disc_loss");
  detail::check_scores(scores_b, "hinge_disc_loss");
  const Tensor a_term = mean(relu(scalar_add(scalar_mul(scores_a, -1.0), 1.0)));
  const Tensor b_term = mean(relu(scalar_add(scores_b, 1.0)));
  return add(a_term, b_term);
}

// The backbone's penalty term, computed from side-B scores under a frozen
// descriptor. See CFConfig::literal_reg_sign for the sign convention.
inline Tensor generator_reg_term(const Tensor& scores_b, const CFConfig& cfg) {
  detail::check_scores(scores_b, "generator_reg_term");
  const Tensor m = mean(scores_b);
  return cfg.literal_reg_sign ? m : scalar_mul(m, -1.0);
}

// Per-side FIFO of past feature batches. Stored batches are always detached;
// sampling is uniform over whatever is currently held.
class FeatureHistoryBuffer {
 public:
  explicit FeatureHistoryBuffer(std::size_t capacity) : capacity_(capacity) {}

  void push(Side side, const Tensor& features) {
    if (capacity_ == 0) return;
    auto& q = queue(side);
    q.push_back(detach(features));
    if (q.size() > capacity_) q.pop_front();
  }

  std::optional<Tensor> sample(Side side, Rng& rng) {
    auto& q = queue(side);
    if (q.empty()) return std::nullopt;
    return q[rng.index(q.size())];
  }

  std::size_t size(Side side) const { return side == Side::A ? a_.size() : b_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::deque<Tensor>& queue(Side side) { return side == Side::A ? a_ : b_; }

  std::size_t capacity_ = 0;
  std::deque<Tensor> a_, b_;
};

struct CFStepResult {
  bool trained = false;
  double disc_loss = 0.0;
};

// One descriptor update. Current-batch features per side arrive detached
// (nullptr when the shuffled batch had no rows on that side); each side's
// training pool is the current batch plus one uniformly sampled history
// batch. If either pool is empty the update is skipped. Either way, current
// features are recorded into the history afterwards — never before, so a
// batch cannot be paired with itself.
inline CFStepResult cf_step(Model& model, const Tensor* feats_a, const Tensor* feats_b,
                            FeatureHistoryBuffer& history, Rng& history_rng, AdamW& opt_d,
                            std::size_t epoch = 0, std::size_t step = 0) {
  if ((feats_a && feats_a->tracked()) || (feats_b && feats_b->tracked())) {
    throw ContractError("cf_step takes detached features");
  }
  const auto build_pool = [&](const Tensor* current, Side side) -> std::optional<Tensor> {
    std::vector<Tensor> parts;
    if (current) parts.push_back(*current);
    if (auto past = history.sample(side, history_rng)) parts.push_back(std::move(*past));
    if (parts.empty()) return std::nullopt;
    if (parts.size() == 1) return parts[0];
    return concat(parts);
  };
  const auto push_current = [&] {
    if (feats_a) history.push(Side::A, *feats_a);
    if (feats_b) history.push(Side::B, *feats_b);
  };

  const std::optional<Tensor> pool_a = build_pool(feats_a, Side::A);
  const std::optional<Tensor> pool_b = build_pool(feats_b, Side::B);
  if (!pool_a || !pool_b) {
    push_current();
    return {};
  }

  Tape tape;
  const Tensor scores_a = model.discriminate(*pool_a, &tape);
  const Tensor scores_b = model.discriminate(*pool_b, &tape);
  const Tensor loss = hinge_disc_loss(scores_a, scores_b);
  if (!std::isfinite(loss.item())) {
    throw NumericError(epoch, step, "descriptor hinge loss");
  }
  tape.backward(loss);
  model.zero_grads(Group::discriminator);
  model.accumulate_grads(tape, Group::discriminator);
  opt_d.step(model.params(Group::discriminator));

  push_current();
  return {true, loss.item()};
}

}  // namespace cf
