#pragma once

#include <cmath>
#include <concepts>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "snmt/graph.hpp"
#include "snmt/random.hpp"
#include "snmt/tokens.hpp"

namespace snmt {

enum class CellType { kLstm, kGru };

inline std::string to_string(CellType type) { return type == CellType::kLstm ? "lstm" : "gru"; }

inline CellType parse_cell_type(const std::string& name) {
  if (name == "lstm" || name == "LSTM") return CellType::kLstm;
  if (name == "gru" || name == "GRU") return CellType::kGru;
  throw DomainError("unknown cell type '" + name + "' (expected lstm or gru)");
}

struct ModelConfig {
  Index source_vocab_size = 0;
  Index target_vocab_size = 0;
  Index embed_dim = 128;
  Index hidden_dim = 128;
  CellType cell_type = CellType::kLstm;
  bool bidirectional_encoder = false;
  bool attention_enabled = true;
  Index max_decode_len = 50;

  /// Width of an encoder annotation h_j.
  Index annotation_dim() const { return bidirectional_encoder ? 2 * hidden_dim : hidden_dim; }
  Index decoder_input_dim() const {
    return embed_dim + (attention_enabled ? annotation_dim() : 0);
  }
  Index output_input_dim() const {
    return hidden_dim + (attention_enabled ? annotation_dim() : 0);
  }

  void validate() const {
    if (source_vocab_size < 1 || target_vocab_size < 1 || embed_dim < 1 || hidden_dim < 1) {
      throw DomainError("model dimensions must be at least 1");
    }
    if (max_decode_len < 2) throw DomainError("max_decode_len must be at least 2");
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Weights of one recurrent cell acting on concat(input, hidden).
///
/// LSTM: gate_weight stacks the input, forget, candidate and output blocks
/// (4H rows). GRU: gate_weight stacks update and reset (2H rows) and the
/// candidate block lives in candidate_weight.
template <typename Scalar>
struct CellParams {
  CellType type = CellType::kLstm;
  Index input_dim = 0;
  Index hidden_dim = 0;
  Tensor<Scalar> gate_weight;
  Tensor<Scalar> gate_bias;
  std::optional<Tensor<Scalar>> candidate_weight;
  std::optional<Tensor<Scalar>> candidate_bias;

  static CellParams zeros(CellType type, Index input_dim, Index hidden_dim) {
    CellParams p;
    p.type = type;
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    const Index gates = type == CellType::kLstm ? 4 : 2;
    p.gate_weight = Tensor<Scalar>::zeros(gates * hidden_dim, input_dim + hidden_dim);
    p.gate_bias = Tensor<Scalar>::zeros(gates * hidden_dim, 1);
    if (type == CellType::kGru) {
      p.candidate_weight = Tensor<Scalar>::zeros(hidden_dim, input_dim + hidden_dim);
      p.candidate_bias = Tensor<Scalar>::zeros(hidden_dim, 1);
    }
    return p;
  }

  template <typename Other>
  CellParams<Other> cast() const {
    CellParams<Other> out;
    out.type = type;
    out.input_dim = input_dim;
    out.hidden_dim = hidden_dim;
    out.gate_weight = gate_weight.template cast<Other>();
    out.gate_bias = gate_bias.template cast<Other>();
    if (candidate_weight) out.candidate_weight = candidate_weight->template cast<Other>();
    if (candidate_bias) out.candidate_bias = candidate_bias->template cast<Other>();
    return out;
  }
};

template <typename Scalar>
struct Seq2SeqParams {
  Tensor<Scalar> source_embedding;  // source_vocab x embed
  Tensor<Scalar> target_embedding;  // target_vocab x embed
  CellParams<Scalar> encoder;
  std::optional<CellParams<Scalar>> encoder_reverse;
  // Maps concat(forward final, backward final) to the decoder width.
  std::optional<Tensor<Scalar>> bridge_weight;
  std::optional<Tensor<Scalar>> bridge_bias;
  CellParams<Scalar> decoder;
  std::optional<Tensor<Scalar>> attention_state_weight;       // W_a: attn x hidden
  std::optional<Tensor<Scalar>> attention_annotation_weight;  // U_a: attn x annotation
  std::optional<Tensor<Scalar>> attention_vector;             // v_a: attn x 1
  Tensor<Scalar> output_weight;  // target_vocab x output_input_dim
  Tensor<Scalar> output_bias;
};

namespace detail {

template <typename T, typename Fn>
void visit_cell(T& cell, const std::string& prefix, Fn& fn) {
  fn(prefix + ".gate_weight", cell.gate_weight);
  fn(prefix + ".gate_bias", cell.gate_bias);
  if (cell.candidate_weight) fn(prefix + ".candidate_weight", *cell.candidate_weight);
  if (cell.candidate_bias) fn(prefix + ".candidate_bias", *cell.candidate_bias);
}

template <typename Opt, typename Fn>
void visit_optional(Opt& t, const std::string& name, Fn& fn) {
  if (t) fn(name, *t);
}

}  // namespace detail

/// Calls fn(name, tensor) for every parameter in a fixed order. That order
/// is the checkpoint manifest order and the optimizer-state order.
template <typename Params, typename Fn>
void for_each_parameter(Params& p, Fn&& fn) {
  fn(std::string("source_embedding"), p.source_embedding);
  fn(std::string("target_embedding"), p.target_embedding);
  detail::visit_cell(p.encoder, "encoder", fn);
  if (p.encoder_reverse) detail::visit_cell(*p.encoder_reverse, "encoder_reverse", fn);
  detail::visit_optional(p.bridge_weight, "bridge.weight", fn);
  detail::visit_optional(p.bridge_bias, "bridge.bias", fn);
  detail::visit_cell(p.decoder, "decoder", fn);
  detail::visit_optional(p.attention_state_weight, "attention.state_weight", fn);
  detail::visit_optional(p.attention_annotation_weight, "attention.annotation_weight", fn);
  detail::visit_optional(p.attention_vector, "attention.vector", fn);
  fn(std::string("output.weight"), p.output_weight);
  fn(std::string("output.bias"), p.output_bias);
}

template <typename Scalar>
struct Seq2Seq {
  ModelConfig config;
  Seq2SeqParams<Scalar> params;

  std::vector<std::pair<std::string, Tensor<Scalar>*>> named_parameters() {
    std::vector<std::pair<std::string, Tensor<Scalar>*>> out;
    for_each_parameter(params, [&](const std::string& n, Tensor<Scalar>& t) { out.emplace_back(n, &t); });
    return out;
  }

  std::vector<std::pair<std::string, const Tensor<Scalar>*>> named_parameters() const {
    std::vector<std::pair<std::string, const Tensor<Scalar>*>> out;
    for_each_parameter(params,
                       [&](const std::string& n, const Tensor<Scalar>& t) { out.emplace_back(n, &t); });
    return out;
  }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& [name, t] : named_parameters()) n += t->size();
    return n;
  }

  void set_requires_grad(bool on) {
    for (auto& [name, t] : named_parameters()) t->set_requires_grad(on);
  }

  void zero_grad() {
    for (auto& [name, t] : named_parameters()) t->zero_grad();
  }

  template <typename Other>
  Seq2Seq<Other> cast() const;
};

/// Model with every weight zero. Shapes follow `config`.
template <typename Scalar>
Seq2Seq<Scalar> make_zero_model(const ModelConfig& config) {
  config.validate();
  Seq2Seq<Scalar> m;
  m.config = config;
  auto& p = m.params;
  const Index hidden = config.hidden_dim;
  const Index annot = config.annotation_dim();
  p.source_embedding = Tensor<Scalar>::zeros(config.source_vocab_size, config.embed_dim);
  p.target_embedding = Tensor<Scalar>::zeros(config.target_vocab_size, config.embed_dim);
  p.encoder = CellParams<Scalar>::zeros(config.cell_type, config.embed_dim, hidden);
  if (config.bidirectional_encoder) {
    p.encoder_reverse = CellParams<Scalar>::zeros(config.cell_type, config.embed_dim, hidden);
    p.bridge_weight = Tensor<Scalar>::zeros(hidden, 2 * hidden);
    p.bridge_bias = Tensor<Scalar>::zeros(hidden, 1);
  }
  p.decoder = CellParams<Scalar>::zeros(config.cell_type, config.decoder_input_dim(), hidden);
  if (config.attention_enabled) {
    p.attention_state_weight = Tensor<Scalar>::zeros(hidden, hidden);
    p.attention_annotation_weight = Tensor<Scalar>::zeros(hidden, annot);
    p.attention_vector = Tensor<Scalar>::zeros(hidden, 1);
  }
  p.output_weight = Tensor<Scalar>::zeros(config.target_vocab_size, config.output_input_dim());
  p.output_bias = Tensor<Scalar>::zeros(config.target_vocab_size, 1);
  return m;
}

/// Matrices uniform in +-sqrt(6 / (fan_in + fan_out)) times `scale`; biases
/// zero. Deterministic in `seed`.
template <typename Scalar>
Seq2Seq<Scalar> make_initialized_model(const ModelConfig& config, std::uint64_t seed,
                                       double scale = 1.0) {
  auto m = make_zero_model<Scalar>(config);
  Rng rng(seed);
  for (auto& [name, t] : m.named_parameters()) {
    if (t->cols() == 1 && name.ends_with("bias")) continue;
    const double limit = scale * std::sqrt(6.0 / static_cast<double>(t->rows() + t->cols()));
    auto& v = t->value();
    for (Index i = 0; i < v.size(); ++i) v(i) = static_cast<Scalar>(rng.uniform(-limit, limit));
  }
  return m;
}

template <typename Scalar>
template <typename Other>
Seq2Seq<Other> Seq2Seq<Scalar>::cast() const {
  auto out = make_zero_model<Other>(config);
  auto src = named_parameters();
  auto dst = out.named_parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i].second->value() = src[i].second->value().template cast<Other>();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward computation

/// `M` is Seq2Seq<Scalar>, possibly const. A const model binds read-only, so
/// no gradient is ever written to it.
template <typename M, typename Scalar>
concept ModelOf = std::same_as<std::remove_const_t<M>, Seq2Seq<Scalar>>;

template <typename C, typename Scalar>
concept CellOf = std::same_as<std::remove_const_t<C>, CellParams<Scalar>>;

/// Recurrent state: hidden vector, plus the memory cell for an LSTM.
template <typename Scalar>
struct RecurrentState {
  Var<Scalar> hidden;
  std::optional<Var<Scalar>> cell;
};

template <typename Scalar>
struct EncoderStates {
  Var<Scalar> annotations;  // annotation_dim x T_x, column j is h_j
  Var<Scalar> final_state;  // hidden_dim x 1, the decoder initialization v
  Index length() const { return annotations.cols(); }
};

template <typename Scalar>
struct AttentionOutput {
  Var<Scalar> weights;  // 1 x T_x
  Var<Scalar> context;  // annotation_dim x 1
};

template <typename Scalar>
struct DecoderStepOutput {
  RecurrentState<Scalar> state;
  Var<Scalar> logits;  // target_vocab x 1
  std::optional<Var<Scalar>> attention;

  /// Output distribution softmax(logits).
  Vector<Scalar> distribution() const { return softmax(logits.value()); }
};

template <typename Scalar>
RecurrentState<Scalar> zero_state(Graph<Scalar>& g, CellType type, Index hidden_dim) {
  RecurrentState<Scalar> s;
  s.hidden = g.constant(Matrix<Scalar>::Zero(hidden_dim, 1));
  if (type == CellType::kLstm) s.cell = g.constant(Matrix<Scalar>::Zero(hidden_dim, 1));
  return s;
}

/// One recurrence step of an LSTM or GRU cell.
template <typename Scalar, typename Cell>
  requires CellOf<Cell, Scalar>
RecurrentState<Scalar> cell_step(Graph<Scalar>& g, Cell& cell, const Var<Scalar>& input,
                                 const RecurrentState<Scalar>& state) {
  const Index h = cell.hidden_dim;
  if (input.rows() != cell.input_dim || input.cols() != 1) {
    throw DimensionError("cell input is " + to_string(input.shape()) + ", cell expects [" +
                         std::to_string(cell.input_dim) + "x1]");
  }
  if (state.hidden.rows() != h || state.hidden.cols() != 1) {
    throw DimensionError("cell state is " + to_string(state.hidden.shape()) + ", cell expects [" +
                         std::to_string(h) + "x1]");
  }
  auto w = g.parameter(cell.gate_weight);
  auto b = g.parameter(cell.gate_bias);
  auto xh = concat_rows<Scalar>({input, state.hidden});
  auto z = matmul(w, xh) + b;

  RecurrentState<Scalar> next;
  if (cell.type == CellType::kLstm) {
    if (!state.cell || state.cell->rows() != h) {
      throw DimensionError("LSTM state needs a memory cell of width " + std::to_string(h));
    }
    auto in_gate = sigmoid(slice_rows(z, 0, h));
    auto forget = sigmoid(slice_rows(z, h, h));
    auto candidate = tanh(slice_rows(z, 2 * h, h));
    auto out_gate = sigmoid(slice_rows(z, 3 * h, h));
    auto c = cwise_product(forget, *state.cell) + cwise_product(in_gate, candidate);
    next.hidden = cwise_product(out_gate, tanh(c));
    next.cell = c;
  } else {
    auto update = sigmoid(slice_rows(z, 0, h));
    auto reset = sigmoid(slice_rows(z, h, h));
    auto wc = g.parameter(*cell.candidate_weight);
    auto bc = g.parameter(*cell.candidate_bias);
    auto xr = concat_rows<Scalar>({input, cwise_product(reset, state.hidden)});
    auto candidate = tanh(matmul(wc, xr) + bc);
    next.hidden = cwise_product(one_minus(update), candidate) + cwise_product(update, state.hidden);
  }
  return next;
}

namespace detail {

template <typename Scalar>
void check_ids(std::span<const TokenId> ids, Index vocab, const char* side) {
  if (ids.empty()) throw DomainError(std::string(side) + " sequence is empty");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab) {
      throw DomainError(std::string(side) + " id " + std::to_string(ids[i]) + " at position " +
                        std::to_string(i) + " outside vocabulary of " + std::to_string(vocab));
    }
  }
}

inline void check_markers(std::span<const TokenId> ids, const char* side) {
  if (ids.size() < 2 || ids.front() != kStartId || ids.back() != kEndId) {
    throw DomainError(std::string(side) + " sequence must begin with <start> and end with <end>");
  }
}

}  // namespace detail

/// Runs the encoder over a marker-delimited source sequence.
template <typename Scalar, typename M>
  requires ModelOf<M, Scalar>
EncoderStates<Scalar> encode(Graph<Scalar>& g, M& model, std::span<const TokenId> source_ids) {
  const auto& config = model.config;
  detail::check_ids<Scalar>(source_ids, config.source_vocab_size, "source");
  detail::check_markers(source_ids, "source");
  auto& p = model.params;
  auto table = g.parameter(p.source_embedding);

  const std::size_t n = source_ids.size();
  std::vector<Var<Scalar>> embedded;
  embedded.reserve(n);
  for (TokenId id : source_ids) embedded.push_back(lookup(table, id));

  std::vector<Var<Scalar>> forward;
  auto state = zero_state(g, config.cell_type, config.hidden_dim);
  for (const auto& x : embedded) {
    state = cell_step(g, p.encoder, x, state);
    forward.push_back(state.hidden);
  }

  EncoderStates<Scalar> out;
  if (!config.bidirectional_encoder) {
    out.annotations = concat_cols(forward);
    out.final_state = forward.back();
    return out;
  }

  std::vector<Var<Scalar>> backward(n);
  auto rstate = zero_state(g, config.cell_type, config.hidden_dim);
  for (std::size_t i = n; i-- > 0;) {
    rstate = cell_step(g, *p.encoder_reverse, embedded[i], rstate);
    backward[i] = rstate.hidden;
  }
  std::vector<Var<Scalar>> columns;
  columns.reserve(n);
  for (std::size_t i = 0; i < n; ++i) columns.push_back(concat_rows<Scalar>({forward[i], backward[i]}));
  out.annotations = concat_cols(columns);
  auto finals = concat_rows<Scalar>({forward.back(), backward.front()});
  out.final_state =
      tanh(matmul(g.parameter(*p.bridge_weight), finals) + g.parameter(*p.bridge_bias));
  return out;
}

/// Additive alignment: e_j = v_a . tanh(W_a s + U_a h_j), weights =
/// softmax(e), context = sum_j weights_j h_j.
template <typename Scalar, typename M>
  requires ModelOf<M, Scalar>
AttentionOutput<Scalar> attend(Graph<Scalar>& g, M& model, const Var<Scalar>& query,
                               const Var<Scalar>& annotations) {
  auto& p = model.params;
  if (!p.attention_vector) throw Error("model was built without attention");
  if (annotations.cols() < 1) throw DimensionError("attention over zero annotations");
  auto keys = matmul(g.parameter(*p.attention_annotation_weight), annotations);
  auto projected_query = matmul(g.parameter(*p.attention_state_weight), query);
  auto energies = matmul(transpose(g.parameter(*p.attention_vector)), tanh(keys + projected_query));
  AttentionOutput<Scalar> out;
  out.weights = softmax(energies);
  out.context = matmul(annotations, transpose(out.weights));
  return out;
}

/// Decoder state before the first target step: hidden = v, memory cell zero.
template <typename Scalar, typename M>
  requires ModelOf<M, Scalar>
RecurrentState<Scalar> initial_decoder_state(Graph<Scalar>& g, M& model,
                                             const EncoderStates<Scalar>& encoded) {
  RecurrentState<Scalar> s;
  s.hidden = encoded.final_state;
  if (model.config.cell_type == CellType::kLstm) {
    s.cell = g.constant(Matrix<Scalar>::Zero(model.config.hidden_dim, 1));
  }
  return s;
}

/// One target step: consumes y_{i-1}, returns s_i and the output logits.
/// With attention the cell input is concat(embed(y_{i-1}), c_i) and the
/// output layer reads concat(s_i, c_i); without it both use s_i alone.
template <typename Scalar, typename M>
  requires ModelOf<M, Scalar>
DecoderStepOutput<Scalar> decoder_step(Graph<Scalar>& g, M& model, TokenId previous,
                                       const RecurrentState<Scalar>& state,
                                       const EncoderStates<Scalar>& encoded) {
  const auto& config = model.config;
  if (previous < 0 || previous >= config.target_vocab_size) {
    throw DomainError("target id " + std::to_string(previous) + " outside vocabulary of " +
                      std::to_string(config.target_vocab_size));
  }
  auto& p = model.params;
  auto embedded = lookup(g.parameter(p.target_embedding), previous);

  DecoderStepOutput<Scalar> out;
  Var<Scalar> features;
  if (config.attention_enabled) {
    auto att = attend(g, model, state.hidden, encoded.annotations);
    out.state = cell_step(g, p.decoder, concat_rows<Scalar>({embedded, att.context}), state);
    features = concat_rows<Scalar>({out.state.hidden, att.context});
    out.attention = att.weights;
  } else {
    out.state = cell_step(g, p.decoder, embedded, state);
    features = out.state.hidden;
  }
  out.logits = matmul(g.parameter(p.output_weight), features) + g.parameter(p.output_bias);
  return out;
}

/// Teacher-forced sum of log p(y_t | y_<t, x) over the target positions
/// after <start>. Evaluated without gradient tracking.
template <typename Scalar>
double sequence_log_prob(const Seq2Seq<Scalar>& model, std::span<const TokenId> source_ids,
                         std::span<const TokenId> target_ids) {
  detail::check_ids<Scalar>(target_ids, model.config.target_vocab_size, "target");
  detail::check_markers(target_ids, "target");
  Graph<Scalar> g(GradMode::kDisabled);
  auto encoded = encode(g, model, source_ids);
  auto state = initial_decoder_state(g, model, encoded);
  double total = 0.0;
  for (std::size_t t = 1; t < target_ids.size(); ++t) {
    auto step = decoder_step(g, model, target_ids[t - 1], state, encoded);
    total += static_cast<double>(log_softmax(step.logits.value())(target_ids[t]));
    state = step.state;
  }
  return total;
}

}  // namespace snmt
