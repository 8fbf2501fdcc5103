#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "snmt/gradcheck.hpp"
#include "snmt/model.hpp"

namespace snmt {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Index batch_size = 32;
  Index max_epochs = 100;
  Index patience = 5;
  double clip_norm = 5.0;
  std::uint64_t seed = 7;

  void validate() const {
    if (!(learning_rate > 0.0)) throw DomainError("learning_rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
      throw DomainError("Adam betas must lie in (0, 1)");
    }
    if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
    if (batch_size < 1) throw DomainError("batch_size must be at least 1");
    if (max_epochs < 1) throw DomainError("max_epochs must be at least 1");
    if (patience < 1) throw DomainError("patience must be at least 1");
    if (!(clip_norm > 0.0)) throw DomainError("clip_norm must be positive");
  }
};

/// A sentence pair already mapped to marker-delimited ids.
struct EncodedPair {
  std::vector<TokenId> source;
  std::vector<TokenId> target;
};

template <typename Scalar>
struct AdamState {
  std::vector<Matrix<Scalar>> first_moment;
  std::vector<Matrix<Scalar>> second_moment;
  long step = 0;
};

enum class StopReason { kEarlyStop, kMaxEpochs };

inline std::string to_string(StopReason r) {
  return r == StopReason::kEarlyStop ? "early-stop" : "max-epochs";
}

struct EpochRecord {
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  StopReason stop_reason = StopReason::kMaxEpochs;
  Index best_epoch = -1;  // 0-based
  double best_validation_loss = std::numeric_limits<double>::infinity();
};

/// Mean over pairs of the per-token negative log-likelihood under teacher
/// forcing. Each pair is unrolled at its own length, so nothing is padded.
template <typename Scalar, typename M>
  requires ModelOf<M, Scalar>
Var<Scalar> teacher_forced_loss(Graph<Scalar>& g, M& model, std::span<const EncodedPair> batch) {
  if (batch.empty()) throw DomainError("teacher_forced_loss on an empty batch");
  Var<Scalar> total;
  for (const auto& pair : batch) {
    detail::check_ids<Scalar>(pair.target, model.config.target_vocab_size, "target");
    detail::check_markers(pair.target, "target");
    auto encoded = encode(g, model, std::span<const TokenId>(pair.source));
    auto state = initial_decoder_state(g, model, encoded);
    Var<Scalar> nll;
    for (std::size_t t = 1; t < pair.target.size(); ++t) {
      auto step = decoder_step(g, model, pair.target[t - 1], state, encoded);
      auto term = cross_entropy(step.logits, pair.target[t]);
      nll = nll.valid() ? nll + term : term;
      state = step.state;
    }
    auto per_token = nll * static_cast<Scalar>(1.0 / static_cast<double>(pair.target.size() - 1));
    total = total.valid() ? total + per_token : per_token;
  }
  return total * static_cast<Scalar>(1.0 / static_cast<double>(batch.size()));
}

/// Loss value without gradient tracking.
template <typename Scalar>
double evaluate_loss(const Seq2Seq<Scalar>& model, std::span<const EncodedPair> pairs) {
  Graph<Scalar> g(GradMode::kDisabled);
  return static_cast<double>(teacher_forced_loss(g, model, pairs).item());
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename Scalar>
double clip_global_norm(const std::vector<std::pair<std::string, Tensor<Scalar>*>>& params,
                        double max_norm) {
  double squared = 0.0;
  for (const auto& [name, t] : params) {
    squared += t->grad().template cast<double>().squaredNorm();
  }
  const double norm = std::sqrt(squared);
  if (norm > max_norm) {
    const auto factor = static_cast<Scalar>(max_norm / norm);
    for (const auto& [name, t] : params) t->grad() *= factor;
  }
  return norm;
}

/// One bias-corrected Adam update using the gradients held by `params`.
template <typename Scalar>
void adam_step(const std::vector<std::pair<std::string, Tensor<Scalar>*>>& params,
               AdamState<Scalar>& state, const TrainConfig& config) {
  for (const auto& [name, t] : params) {
    if (!t->grad().allFinite()) throw TrainingError("non-finite gradient in parameter " + name);
  }
  if (state.first_moment.empty()) {
    for (const auto& [name, t] : params) {
      state.first_moment.push_back(Matrix<Scalar>::Zero(t->rows(), t->cols()));
      state.second_moment.push_back(Matrix<Scalar>::Zero(t->rows(), t->cols()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("optimizer state tracks " + std::to_string(state.first_moment.size()) +
                         " tensors, got " + std::to_string(params.size()));
  }
  ++state.step;
  const auto b1 = static_cast<Scalar>(config.beta1);
  const auto b2 = static_cast<Scalar>(config.beta2);
  const auto lr = static_cast<Scalar>(config.learning_rate);
  const auto eps = static_cast<Scalar>(config.epsilon);
  const auto correction1 =
      static_cast<Scalar>(1.0 - std::pow(config.beta1, static_cast<double>(state.step)));
  const auto correction2 =
      static_cast<Scalar>(1.0 - std::pow(config.beta2, static_cast<double>(state.step)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = *params[i].second;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.rows() != t.rows() || m.cols() != t.cols()) {
      throw DimensionError("optimizer state shape mismatch for " + params[i].first);
    }
    const auto& g = t.grad();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    t.value().array() -=
        lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + eps);
  }
}

template <typename Scalar>
struct TrainOutcome {
  Seq2Seq<Scalar> model;  // parameters of the best validation epoch
  TrainHistory history;
};

/// Called after each epoch with (epoch index, record).
using EpochCallback = std::function<void(Index, const EpochRecord&)>;

/// Mini-batch Adam training with global-norm clipping and early stopping on
/// validation loss.
template <typename Scalar>
TrainOutcome<Scalar> train(Seq2Seq<Scalar> model, std::span<const EncodedPair> train_pairs,
                           std::span<const EncodedPair> validation_pairs,
                           const TrainConfig& config, const EpochCallback& on_epoch = {}) {
  config.validate();
  if (train_pairs.empty()) throw DomainError("training split is empty");
  if (validation_pairs.empty()) throw DomainError("validation split is empty");

  for (auto split : {train_pairs, validation_pairs}) {
    for (const auto& pair : split) {
      detail::check_ids<Scalar>(pair.source, model.config.source_vocab_size, "source");
      detail::check_markers(pair.source, "source");
      detail::check_ids<Scalar>(pair.target, model.config.target_vocab_size, "target");
      detail::check_markers(pair.target, "target");
    }
  }

  model.set_requires_grad(true);
  auto params = model.named_parameters();
  AdamState<Scalar> adam;
  Rng rng(config.seed);

  std::vector<std::size_t> order(train_pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainOutcome<Scalar> outcome{model, {}};
  auto& history = outcome.history;
  Index since_best = 0;
  std::vector<EncodedPair> batch;

  for (Index epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    rng.shuffle(order);
    double weighted_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(train_pairs[order[i]]);

      model.zero_grad();
      Graph<Scalar> g;
      const auto where = " at epoch " + std::to_string(epoch + 1) + ", batch starting at " +
                         std::to_string(begin);
      Var<Scalar> loss;
      try {
        loss = teacher_forced_loss(g, model, std::span<const EncodedPair>(batch));
      } catch (const DomainError& e) {
        // Ids were validated up front, so this is a non-finite activation.
        throw TrainingError(std::string("training diverged") + where + ": " + e.what());
      }
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        throw TrainingError("loss diverged to " + std::to_string(value) + where);
      }
      g.backward(loss);
      clip_global_norm(params, config.clip_norm);
      adam_step(params, adam, config);
      weighted_loss += value * static_cast<double>(end - begin);
    }

    EpochRecord record;
    record.train_loss = weighted_loss / static_cast<double>(order.size());
    try {
      record.validation_loss = evaluate_loss(model, validation_pairs);
    } catch (const DomainError& e) {
      throw TrainingError("validation diverged at epoch " + std::to_string(epoch + 1) + ": " +
                          e.what());
    }
    if (!std::isfinite(record.validation_loss)) {
      throw TrainingError("validation loss diverged at epoch " + std::to_string(epoch + 1));
    }
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    history.epochs.push_back(record);
    if (on_epoch) on_epoch(epoch, record);

    if (record.validation_loss < history.best_validation_loss) {
      history.best_validation_loss = record.validation_loss;
      history.best_epoch = epoch;
      outcome.model = model;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      history.stop_reason = StopReason::kEarlyStop;
      break;
    }
  }
  outcome.model.set_requires_grad(false);
  return outcome;
}

/// Gradient check of the teacher-forced loss over every model parameter.
/// Analytic gradients come from the double-precision graph; the central
/// differences are evaluated on a long double copy of the perturbed model so
/// that rounding in f does not swamp entries with gradients near 1e-8.
inline GradCheckReport check_loss_gradient(Seq2Seq<double>& model,
                                           std::span<const EncodedPair> batch,
                                           double eps = 1e-5) {
  std::vector<NamedTensor> named;
  for (auto& [name, t] : model.named_parameters()) named.emplace_back(name, t);
  auto loss = [&](Graph<double>& g) { return teacher_forced_loss(g, model, batch); };
  auto evaluate = [&]() -> long double {
    const auto wide = model.cast<long double>();
    Graph<long double> g(GradMode::kDisabled);
    return teacher_forced_loss(g, wide, batch).item();
  };
  return finite_diff_check(loss, named, eps, evaluate);
}

}  // namespace snmt

