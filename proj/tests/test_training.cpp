#include <cmath>
#include <vector>

#include <doctest.h>

#include "model_fixtures.hpp"
#include "snmt/training.hpp"

using namespace snmt;
using namespace snmt::testing;
using Mat = Matrix<double>;

namespace {

using ParamList = std::vector<std::pair<std::string, Tensor<double>*>>;

std::vector<EncodedPair> random_pairs(Rng& rng, const ModelConfig& c, int count) {
  std::vector<EncodedPair> out;
  for (int i = 0; i < count; ++i) {
    out.push_back(random_pair(rng, c, 1 + rng.below(4), 1 + rng.below(4)));
  }
  return out;
}

double loss_of(const Seq2Seq<double>& model, const std::vector<EncodedPair>& pairs) {
  return evaluate_loss(model, std::span<const EncodedPair>(pairs));
}

}  // namespace

TEST_CASE("teacher_forced_loss") {
  Rng rng(3);
  SUBCASE("zero output projection gives exactly ln V") {
    for (auto cell : {CellType::kLstm, CellType::kGru}) {
      for (bool attention : {true, false}) {
        auto config = small_config(cell, attention);
        auto model = make_initialized_model<double>(config, 11);
        model.params.output_weight.value().setZero();
        model.params.output_bias.value().setZero();
        auto pairs = random_pairs(rng, config, 5);
        CHECK(std::abs(loss_of(model, pairs) - std::log(12.0)) <= 1e-9);
      }
    }
  }

  SUBCASE("single pair equals -log p / T_y") {
    for (int trial = 0; trial < 20; ++trial) {
      auto config = small_config(trial % 2 ? CellType::kGru : CellType::kLstm, trial % 3 != 0);
      auto model = make_initialized_model<double>(config, 100 + trial, 2.0);
      randomize_biases(model, rng, 0.5);
      auto pair = random_pair(rng, config, 1 + rng.below(5), 1 + rng.below(5));
      const double log_p = sequence_log_prob(model, std::span<const TokenId>(pair.source),
                                             std::span<const TokenId>(pair.target));
      const double expected = -log_p / static_cast<double>(pair.target.size() - 1);
      const double loss = loss_of(model, {pair});
      CHECK(loss >= 0.0);
      CHECK(std::abs(loss - expected) <= 1e-9 * std::max(1.0, std::abs(expected)));
    }
  }

  SUBCASE("empty batch is rejected") {
    auto model = make_zero_model<double>(small_config(CellType::kLstm, true));
    Graph<double> g(GradMode::kDisabled);
    CHECK_THROWS_AS(teacher_forced_loss(g, model, std::span<const EncodedPair>()), DomainError);
  }
}

TEST_CASE("adam_step") {
  TrainConfig config;

  SUBCASE("zero gradient leaves parameters unchanged") {
    Tensor<double> p(Mat::Random(3, 2), true);
    const Mat before = p.value();
    ParamList params{{"p", &p}};
    AdamState<double> state;
    adam_step(params, state, config);
    CHECK(p.value() == before);
    CHECK(state.step == 1);
  }

  SUBCASE("first step moves each entry by lr against the gradient sign") {
    for (double magnitude : {1e-3, 1.0, 1e3}) {
      Tensor<double> p(Mat::Zero(2, 2), true);
      p.grad() << magnitude, -magnitude, 2 * magnitude, -0.5 * magnitude;
      ParamList params{{"p", &p}};
      AdamState<double> state;
      adam_step(params, state, config);
      Mat expected(2, 2);
      expected << -1e-3, 1e-3, -1e-3, 1e-3;
      CHECK((p.value() - expected).cwiseAbs().maxCoeff() <= 1e-3 * 1e-4);
    }
  }

  SUBCASE("two steps on p^2 from 1 strictly decrease f") {
    Tensor<double> p(Mat::Constant(1, 1, 1.0), true);
    ParamList params{{"p", &p}};
    AdamState<double> state;
    config.learning_rate = 0.1;
    double f = 1.0;
    for (int step = 0; step < 2; ++step) {
      p.grad()(0) = 2.0 * p.value()(0);
      adam_step(params, state, config);
      const double next = p.value()(0) * p.value()(0);
      CHECK(next < f);
      f = next;
    }
    CHECK(state.step == 2);
    CHECK(state.second_moment[0].minCoeff() >= 0.0);
  }

  SUBCASE("non-finite gradient names the tensor") {
    Tensor<double> ok(Mat::Zero(1, 1), true);
    Tensor<double> bad(Mat::Zero(2, 1), true);
    bad.grad()(1) = std::nan("");
    ParamList params{{"ok", &ok}, {"decoder.gate_bias", &bad}};
    AdamState<double> state;
    CHECK_THROWS_WITH_AS(adam_step(params, state, config),
                         doctest::Contains("decoder.gate_bias"), TrainingError);
  }

  SUBCASE("one step on a single pair lowers its loss at lr 1e-4") {
    config.learning_rate = 1e-4;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      auto cfg = small_config(seed % 2 ? CellType::kGru : CellType::kLstm, seed % 4 != 0);
      auto model = make_initialized_model<double>(cfg, seed + 1);
      std::vector<EncodedPair> pair{random_pair(rng, cfg, 3, 3)};
      const double before = loss_of(model, pair);
      model.set_requires_grad(true);
      Graph<double> g;
      g.backward(teacher_forced_loss(g, model, std::span<const EncodedPair>(pair)));
      AdamState<double> state;
      adam_step(model.named_parameters(), state, config);
      CHECK(loss_of(model, pair) < before);
    }
  }
}

TEST_CASE("clip_global_norm") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<double> a(Mat::Zero(3, 4), true);
    Tensor<double> b(Mat::Zero(5, 1), true);
    const double scale = std::pow(10.0, rng.uniform(-3.0, 3.0));
    for (auto* t : {&a, &b}) {
      for (Index i = 0; i < t->size(); ++i) t->grad()(i) = scale * rng.uniform(-1.0, 1.0);
    }
    ParamList params{{"a", &a}, {"b", &b}};
    const double before = std::sqrt(a.grad().squaredNorm() + b.grad().squaredNorm());
    const double reported = clip_global_norm(params, 5.0);
    const double after = std::sqrt(a.grad().squaredNorm() + b.grad().squaredNorm());
    CHECK(reported == doctest::Approx(before).epsilon(1e-12));
    CHECK(after <= 5.0 + 1e-6);
    if (before <= 5.0) CHECK(after == before);
  }
}

TEST_CASE("train") {
  auto config = small_config(CellType::kLstm, true);
  Rng rng(21);
  auto train_pairs = random_pairs(rng, config, 12);
  auto valid_pairs = random_pairs(rng, config, 4);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.max_epochs = 6;
  tc.learning_rate = 1e-2;
  auto model = make_initialized_model<double>(config, 1);

  SUBCASE("history has one record per epoch and training loss falls") {
    auto outcome = train(model, std::span<const EncodedPair>(train_pairs),
                         std::span<const EncodedPair>(valid_pairs), tc);
    const auto& h = outcome.history;
    CHECK(!h.epochs.empty());
    CHECK(h.epochs.size() <= 6);
    if (h.stop_reason == StopReason::kMaxEpochs) CHECK(h.epochs.size() == 6);
    CHECK(h.epochs.back().train_loss < h.epochs.front().train_loss);
    for (const auto& e : h.epochs) CHECK(e.seconds >= 0.0);
  }

  SUBCASE("returned parameters are the best validation epoch") {
    tc.max_epochs = 15;
    tc.patience = 3;
    tc.learning_rate = 5e-2;
    auto outcome = train(model, std::span<const EncodedPair>(train_pairs),
                         std::span<const EncodedPair>(valid_pairs), tc);
    const auto& h = outcome.history;
    for (const auto& e : h.epochs) CHECK(h.best_validation_loss <= e.validation_loss);
    CHECK(loss_of(outcome.model, valid_pairs) == h.best_validation_loss);
    CHECK(h.epochs[static_cast<std::size_t>(h.best_epoch)].validation_loss ==
          h.best_validation_loss);
  }

  SUBCASE("identical seeds give bit-identical histories") {
    auto a = train(model, std::span<const EncodedPair>(train_pairs),
                   std::span<const EncodedPair>(valid_pairs), tc);
    auto b = train(model, std::span<const EncodedPair>(train_pairs),
                   std::span<const EncodedPair>(valid_pairs), tc);
    REQUIRE(a.history.epochs.size() == b.history.epochs.size());
    for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
      CHECK(a.history.epochs[i].train_loss == b.history.epochs[i].train_loss);
      CHECK(a.history.epochs[i].validation_loss == b.history.epochs[i].validation_loss);
    }
    auto pa = a.model.named_parameters();
    auto pb = b.model.named_parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].second->value() == pb[i].second->value());
  }

  SUBCASE("a different seed changes the shuffle") {
    auto a = train(model, std::span<const EncodedPair>(train_pairs),
                   std::span<const EncodedPair>(valid_pairs), tc);
    tc.seed = 8;
    auto b = train(model, std::span<const EncodedPair>(train_pairs),
                   std::span<const EncodedPair>(valid_pairs), tc);
    CHECK(a.history.epochs.back().train_loss != b.history.epochs.back().train_loss);
  }

  SUBCASE("patience 1 with a vocabulary-disjoint validation set stops early") {
    // Training uses ids 4..7 only, validation 8..11 only.
    std::vector<EncodedPair> low, high;
    for (int i = 0; i < 12; ++i) {
      EncodedPair p{{kStartId}, {kStartId}};
      for (int k = 0; k < 3; ++k) {
        p.source.push_back(4 + static_cast<TokenId>(rng.below(4)));
        p.target.push_back(4 + static_cast<TokenId>(rng.below(4)));
      }
      p.source.push_back(kEndId);
      p.target.push_back(kEndId);
      low.push_back(p);
      for (std::size_t k = 1; k + 1 < p.source.size(); ++k) p.source[k] += 4;
      for (std::size_t k = 1; k + 1 < p.target.size(); ++k) p.target[k] += 4;
      if (i < 4) high.push_back(p);
    }
    tc.patience = 1;
    tc.max_epochs = 50;
    auto outcome = train(model, std::span<const EncodedPair>(low),
                         std::span<const EncodedPair>(high), tc);
    CHECK(outcome.history.stop_reason == StopReason::kEarlyStop);
    CHECK(outcome.history.epochs.size() <= 5);
    CHECK(to_string(outcome.history.stop_reason) == "early-stop");
  }

  SUBCASE("empty splits are rejected") {
    std::vector<EncodedPair> none;
    CHECK_THROWS_AS(train(model, std::span<const EncodedPair>(none),
                          std::span<const EncodedPair>(valid_pairs), tc),
                    DomainError);
    CHECK_THROWS_AS(train(model, std::span<const EncodedPair>(train_pairs),
                          std::span<const EncodedPair>(none), tc),
                    DomainError);
  }

  SUBCASE("non-finite activations abort with a diagnostic") {
    model.params.output_bias.value()(5) = std::nan("");
    CHECK_THROWS_WITH_AS(train(model, std::span<const EncodedPair>(train_pairs),
                               std::span<const EncodedPair>(valid_pairs), tc),
                         doctest::Contains("diverged at epoch 1"), TrainingError);
  }

  SUBCASE("invalid configuration is rejected") {
    tc.beta1 = 1.0;
    CHECK_THROWS_AS(train(model, std::span<const EncodedPair>(train_pairs),
                          std::span<const EncodedPair>(valid_pairs), tc),
                    DomainError);
  }
}

TEST_CASE("float training runs") {
  auto config = small_config(CellType::kGru, true);
  Rng rng(4);
  auto pairs = random_pairs(rng, config, 6);
  auto model = make_initialized_model<float>(config, 3);
  TrainConfig tc;
  tc.max_epochs = 3;
  tc.batch_size = 2;
  auto outcome = train(model, std::span<const EncodedPair>(pairs),
                       std::span<const EncodedPair>(pairs), tc);
  CHECK(outcome.history.epochs.size() == 3);
  for (const auto& [name, t] : outcome.model.named_parameters()) {
    CHECK(t->value().allFinite());
    CHECK_FALSE(t->requires_grad());
  }
}
