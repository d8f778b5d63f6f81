#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "charseg/corpus.hpp"

namespace charseg {

enum class StateReset : std::uint8_t { PerDocument, Continuous };

struct SrnConfig {
  std::size_t hidden_units = 400;
  std::size_t bptt_steps = 10;
  double initial_learning_rate = 0.1;
  /// Relative validation-entropy improvement below which the rate halves.
  double lr_halving_threshold = 0.003;
  std::size_t max_iterations = 20;
  double init_scale = 0.1;
  /// Per-component gradient clip applied before every update.
  double gradient_clip = 15.0;
  std::uint64_t seed = 1;
  StateReset state_reset = StateReset::PerDocument;

  void validate() const;
};

/// Elman network over one-hot characters:
///   s(t) = sigmoid(U x(t) + W s(t-1)),  y(t) = softmax(V s(t)).
struct SrnModel {
  CharVocab vocab;
  Eigen::MatrixXd U;  // hidden x input
  Eigen::MatrixXd W;  // hidden x hidden
  Eigen::MatrixXd V;  // output x hidden
  SrnConfig config;

  std::size_t input_size() const { return vocab.size(); }
  std::size_t hidden_size() const { return static_cast<std::size_t>(W.rows()); }

  /// Zero weights sized for `vocab` and `config.hidden_units`.
  static SrnModel zeros(CharVocab vocab, const SrnConfig& config);
};

struct HiddenState {
  Eigen::VectorXd s;
  std::size_t t = 0;

  /// The document-start state: every unit at 0.5.
  static HiddenState initial(std::size_t hidden_units);
};

double sigmoid(double a);
Eigen::VectorXd softmax(const Eigen::VectorXd& z);

/// Next-character distribution predicted from `state` (the prediction made
/// before consuming the next input).
Eigen::VectorXd predict(const SrnModel& model, const HiddenState& state);

/// Consumes `input` and returns the new state with its prediction for the
/// following character. Throws VocabError when input >= I.
std::pair<HiddenState, Eigen::VectorXd> forward_step(const SrnModel& model,
                                                     const HiddenState& state, std::size_t input);

struct SrnGradient {
  Eigen::MatrixXd dU;
  Eigen::MatrixXd dW;
  Eigen::MatrixXd dV;
  double loss = 0.0;  // summed cross-entropy, nats

  double squared_norm() const {
    return dU.squaredNorm() + dW.squaredNorm() + dV.squaredNorm();
  }
};

/// Exact gradient of sum_t -log y_{x(t+1)}(t) over the window x(0..n), fully
/// unrolled from `initial_state`. Window length must be at least 2.
SrnGradient bptt_gradient(const SrnModel& model, std::span<const std::size_t> window,
                          const Eigen::VectorXd& initial_state);

struct LmIteration {
  std::size_t iteration = 0;
  double learning_rate = 0.0;
  double train_entropy = 0.0;  // mean nats per predicted character
  double valid_entropy = 0.0;
  bool rolled_back = false;
};

/// Online SGD with truncated BPTT and the halve-on-stall learning-rate
/// schedule. The vocabulary is built from `texts`. When `validation` is empty
/// the schedule watches the training entropy instead.
SrnModel train_lm(std::span<const std::u32string> texts, const SrnConfig& config,
                  std::span<const std::u32string> validation,
                  std::vector<LmIteration>* log = nullptr);

/// Mean negative log-likelihood per character (nats); every character is
/// predicted, the first from the document-start state.
double cross_entropy(const SrnModel& model, std::span<const std::u32string> texts);

/// exp(cross_entropy). State handling follows model.config.state_reset.
double perplexity(const SrnModel& model, std::span<const std::u32string> texts);
double perplexity(const SrnModel& model, const std::u32string& text);

/// Model file: magic `SRNLM1\n`; I, J and bptt steps as u32; the listed
/// vocabulary size as u32 followed by its UTF-8 code points; then U, W and V
/// row-major as f64. All integers and floats little-endian.
void write_model(std::ostream& os, const SrnModel& model);
SrnModel read_model(std::istream& is);
struct SrnHeader {
  CharVocab vocab;
  std::size_t hidden_units = 0;
  std::size_t bptt_steps = 0;
};

/// The leading part of the model file, shared with trace exports.
void write_model_header(std::ostream& os, const SrnModel& model);
SrnHeader read_model_header(std::istream& is);

void save_model(const std::string& path, const SrnModel& model);
SrnModel load_model(const std::string& path);

namespace detail {

/// Gradient of the loss at the newest step only, propagated back through at
/// most `hops` recurrent steps. inputs[k] was consumed to produce states[k+1];
/// states[0] precedes inputs[0]. Accumulates into `grad` (which must be sized).
double truncated_step_gradient(const SrnModel& model, std::span<const std::size_t> inputs,
                               std::span<const Eigen::VectorXd> states, std::size_t target,
                               std::size_t hops, SrnGradient& grad);

}  // namespace detail

}  // namespace charseg
