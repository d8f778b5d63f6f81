#include "charseg/srn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "charseg/binary_io.hpp"
#include "charseg/error.hpp"
#include "charseg/rng.hpp"
#include "charseg/utf8.hpp"

namespace charseg {

void SrnConfig::validate() const {
  if (hidden_units == 0 || bptt_steps == 0 || max_iterations == 0) {
    throw ContractError("SRN config: hidden_units, bptt_steps and max_iterations must be positive");
  }
  if (!(initial_learning_rate > 0.0) || !(init_scale > 0.0) || !(gradient_clip > 0.0)) {
    throw ContractError("SRN config: learning rate, init scale and clip must be positive");
  }
  if (!(lr_halving_threshold >= 0.0)) {
    throw ContractError("SRN config: lr_halving_threshold must be non-negative");
  }
}

SrnModel SrnModel::zeros(CharVocab vocab, const SrnConfig& config) {
  SrnModel m;
  const auto in = static_cast<Eigen::Index>(vocab.size());
  const auto hid = static_cast<Eigen::Index>(config.hidden_units);
  m.vocab = std::move(vocab);
  m.U = Eigen::MatrixXd::Zero(hid, in);
  m.W = Eigen::MatrixXd::Zero(hid, hid);
  m.V = Eigen::MatrixXd::Zero(in, hid);
  m.config = config;
  return m;
}

HiddenState HiddenState::initial(std::size_t hidden_units) {
  return {Eigen::VectorXd::Constant(static_cast<Eigen::Index>(hidden_units), 0.5), 0};
}

double sigmoid(double a) {
  // Both branches only ever exponentiate a non-positive number.
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  Eigen::VectorXd y = (z.array() - z.maxCoeff()).exp();
  return y / y.sum();
}

Eigen::VectorXd predict(const SrnModel& model, const HiddenState& state) {
  return softmax(model.V * state.s);
}

namespace {

void check_input(const SrnModel& model, std::size_t input) {
  if (input >= model.input_size()) {
    throw VocabError("input index " + std::to_string(input) + " outside vocabulary of size " +
                     std::to_string(model.input_size()));
  }
}

Eigen::VectorXd advance(const SrnModel& model, const Eigen::VectorXd& prev, std::size_t input) {
  Eigen::VectorXd a = model.W * prev;
  a += model.U.col(static_cast<Eigen::Index>(input));
  return a.unaryExpr([](double v) { return sigmoid(v); });
}

}  // namespace

std::pair<HiddenState, Eigen::VectorXd> forward_step(const SrnModel& model,
                                                     const HiddenState& state, std::size_t input) {
  check_input(model, input);
  if (static_cast<std::size_t>(state.s.size()) != model.hidden_size()) {
    throw ContractError("hidden state dimension does not match the model");
  }
  HiddenState next{advance(model, state.s, input), state.t + 1};
  Eigen::VectorXd y = softmax(model.V * next.s);
  return {std::move(next), std::move(y)};
}

SrnGradient bptt_gradient(const SrnModel& model, std::span<const std::size_t> window,
                          const Eigen::VectorXd& initial_state) {
  if (window.size() < 2) throw ContractError("BPTT window needs at least two characters");
  for (std::size_t x : window) check_input(model, x);
  const std::size_t n = window.size() - 1;

  std::vector<Eigen::VectorXd> states;
  states.reserve(n + 1);
  states.push_back(initial_state);
  std::vector<Eigen::VectorXd> errors;
  errors.reserve(n);

  SrnGradient g{Eigen::MatrixXd::Zero(model.U.rows(), model.U.cols()),
                Eigen::MatrixXd::Zero(model.W.rows(), model.W.cols()),
                Eigen::MatrixXd::Zero(model.V.rows(), model.V.cols()), 0.0};

  for (std::size_t t = 0; t < n; ++t) {
    states.push_back(advance(model, states.back(), window[t]));
    Eigen::VectorXd y = softmax(model.V * states.back());
    const auto target = static_cast<Eigen::Index>(window[t + 1]);
    g.loss -= std::log(y(target));
    y(target) -= 1.0;
    errors.push_back(std::move(y));
  }

  Eigen::VectorXd carry = Eigen::VectorXd::Zero(model.W.rows());
  for (std::size_t t = n; t-- > 0;) {
    const Eigen::VectorXd& s = states[t + 1];
    g.dV.noalias() += errors[t] * s.transpose();
    Eigen::VectorXd dh = model.V.transpose() * errors[t];
    dh += carry;
    const Eigen::VectorXd dz = dh.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix()));
    g.dU.col(static_cast<Eigen::Index>(window[t])) += dz;
    g.dW.noalias() += dz * states[t].transpose();
    carry.noalias() = model.W.transpose() * dz;
  }
  return g;
}

namespace detail {

double truncated_step_gradient(const SrnModel& model, std::span<const std::size_t> inputs,
                               std::span<const Eigen::VectorXd> states, std::size_t target,
                               std::size_t hops, SrnGradient& grad) {
  const std::size_t m = inputs.size();
  const Eigen::VectorXd& s = states[m];
  Eigen::VectorXd e = softmax(model.V * s);
  const auto ti = static_cast<Eigen::Index>(target);
  const double loss = -std::log(e(ti));
  e(ti) -= 1.0;
  grad.dV.noalias() += e * s.transpose();
  grad.loss += loss;
  if (m == 0) return loss;

  Eigen::VectorXd dz = (model.V.transpose() * e).cwiseProduct(
      s.cwiseProduct((1.0 - s.array()).matrix()));
  const std::size_t lower = m - 1 > hops ? m - 1 - hops : 0;
  for (std::size_t k = m; k-- > lower;) {
    grad.dU.col(static_cast<Eigen::Index>(inputs[k])) += dz;
    grad.dW.noalias() += dz * states[k].transpose();
    if (k > lower) {
      const Eigen::VectorXd& prev = states[k];
      dz = (model.W.transpose() * dz).cwiseProduct(prev.cwiseProduct((1.0 - prev.array()).matrix()));
    }
  }
  return loss;
}

}  // namespace detail

namespace {

void clip_and_apply(Eigen::MatrixXd& weights, const Eigen::MatrixXd& grad, double lr, double clip) {
  weights.noalias() -= lr * grad.cwiseMax(-clip).cwiseMin(clip);
}

/// Sequential stream over documents with per-document or continuous state.
class Stream {
 public:
  Stream(const SrnModel& model, std::span<const std::u32string> texts)
      : model_(model), texts_(texts) {}

  /// Visits every predicted character: fn(inputs so far, states so far, target).
  template <typename Fn>
  void run(std::size_t history, Fn&& fn) {
    const std::size_t J = model_.hidden_size();
    std::vector<std::size_t> inputs;
    std::vector<Eigen::VectorXd> states{HiddenState::initial(J).s};
    for (const auto& text : texts_) {
      if (model_.config.state_reset == StateReset::PerDocument) {
        inputs.clear();
        states.assign(1, HiddenState::initial(J).s);
      }
      const auto ids = model_.vocab.encode(text);
      for (std::size_t t = 0; t < ids.size(); ++t) {
        fn(std::span<const std::size_t>(inputs), std::span<const Eigen::VectorXd>(states), ids[t]);
        inputs.push_back(ids[t]);
        states.push_back(advance(model_, states.back(), ids[t]));
        if (inputs.size() > history) {
          inputs.erase(inputs.begin());
          states.erase(states.begin());
        }
      }
    }
  }

 private:
  const SrnModel& model_;
  std::span<const std::u32string> texts_;
};

}  // namespace

double cross_entropy(const SrnModel& model, std::span<const std::u32string> texts) {
  double nll = 0.0;
  std::size_t count = 0;
  Stream(model, texts).run(0, [&](auto, std::span<const Eigen::VectorXd> states, std::size_t target) {
    const Eigen::VectorXd y = softmax(model.V * states.back());
    nll -= std::log(y(static_cast<Eigen::Index>(target)));
    ++count;
  });
  if (count == 0) throw ContractError("cross-entropy needs a nonempty text");
  return nll / static_cast<double>(count);
}

double perplexity(const SrnModel& model, std::span<const std::u32string> texts) {
  return std::exp(cross_entropy(model, texts));
}

double perplexity(const SrnModel& model, const std::u32string& text) {
  return perplexity(model, std::span<const std::u32string>(&text, 1));
}

SrnModel train_lm(std::span<const std::u32string> texts, const SrnConfig& config,
                  std::span<const std::u32string> validation, std::vector<LmIteration>* log) {
  config.validate();
  SrnModel model = SrnModel::zeros(build_vocab(texts), config);
  Rng rng(config.seed);
  for (Eigen::MatrixXd* m : {&model.U, &model.W, &model.V}) {
    for (Eigen::Index r = 0; r < m->rows(); ++r) {
      for (Eigen::Index c = 0; c < m->cols(); ++c) {
        (*m)(r, c) = rng.uniform(-config.init_scale, config.init_scale);
      }
    }
  }
  const auto held_out = validation.empty() ? texts : validation;

  SrnGradient grad{Eigen::MatrixXd::Zero(model.U.rows(), model.U.cols()),
                   Eigen::MatrixXd::Zero(model.W.rows(), model.W.cols()),
                   Eigen::MatrixXd::Zero(model.V.rows(), model.V.cols()), 0.0};

  double lr = config.initial_learning_rate;
  bool halving = false;
  double best = std::numeric_limits<double>::infinity();
  SrnModel saved = model;

  for (std::size_t iter = 1; iter <= config.max_iterations; ++iter) {
    double nll = 0.0;
    std::size_t count = 0;
    // The stream reads the live weights, so updates take effect immediately.
    Stream(model, texts).run(
        config.bptt_steps + 1,
        [&](std::span<const std::size_t> inputs, std::span<const Eigen::VectorXd> states,
            std::size_t target) {
          grad.dV.setZero();
          grad.loss = 0.0;
          if (!inputs.empty()) {
            grad.dU.setZero();
            grad.dW.setZero();
          }
          nll += detail::truncated_step_gradient(model, inputs, states, target, config.bptt_steps,
                                                 grad);
          ++count;
          clip_and_apply(model.V, grad.dV, lr, config.gradient_clip);
          if (!inputs.empty()) {
            clip_and_apply(model.U, grad.dU, lr, config.gradient_clip);
            clip_and_apply(model.W, grad.dW, lr, config.gradient_clip);
          }
        });
    if (count == 0) throw InputError("cannot train a language model on an empty corpus");
    const double train_entropy = nll / static_cast<double>(count);
    if (!std::isfinite(train_entropy)) {
      throw DivergedError("language model training diverged in iteration " + std::to_string(iter));
    }
    const double valid = cross_entropy(model, held_out);
    if (!std::isfinite(valid)) {
      throw DivergedError("language model training diverged in iteration " + std::to_string(iter));
    }

    LmIteration entry{iter, lr, train_entropy, valid, false};
    if (valid < best) {
      saved = model;
    } else {
      model = saved;
      entry.rolled_back = true;
    }
    if (log) log->push_back(entry);

    const bool stalled = std::isfinite(best) ? (best - valid) / best < config.lr_halving_threshold
                                             : false;
    best = std::min(best, valid);
    if (stalled) {
      if (halving) break;
      halving = true;
    }
    if (halving) lr /= 2.0;
  }
  return model;
}

// --- model file --------------------------------------------------------------

namespace {

constexpr std::string_view kSrnMagic = "SRNLM1\n";

void write_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) binio::write_f64(os, m(r, c));
  }
}

Eigen::MatrixXd read_matrix(std::istream& is, std::size_t rows, std::size_t cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = binio::read_f64(is, "weights");
      if (!std::isfinite(v)) throw InputError("model file holds a non-finite weight");
      m(r, c) = v;
    }
  }
  return m;
}

}  // namespace

void write_model_header(std::ostream& os, const SrnModel& model) {
  os.write(kSrnMagic.data(), static_cast<std::streamsize>(kSrnMagic.size()));
  binio::write_u32(os, static_cast<std::uint32_t>(model.input_size()));
  binio::write_u32(os, static_cast<std::uint32_t>(model.hidden_size()));
  binio::write_u32(os, static_cast<std::uint32_t>(model.config.bptt_steps));
  binio::write_u32(os, static_cast<std::uint32_t>(model.vocab.chars().size()));
  std::string chars;
  for (char32_t c : model.vocab.chars()) utf8::append(chars, c);
  os.write(chars.data(), static_cast<std::streamsize>(chars.size()));
}

SrnHeader read_model_header(std::istream& is) {
  binio::expect_magic(is, kSrnMagic);
  const std::size_t I = binio::read_u32(is, "input size");
  SrnHeader h;
  h.hidden_units = binio::read_u32(is, "hidden size");
  h.bptt_steps = binio::read_u32(is, "bptt steps");
  const std::size_t count = binio::read_u32(is, "vocabulary count");
  if (count + 1 != I || h.hidden_units == 0) throw InputError("model header is inconsistent");

  std::vector<char32_t> chars;
  chars.reserve(count);
  std::string bytes;
  while (chars.size() < count) {
    const int b = is.get();
    if (b == EOF) throw InputError("truncated file while reading vocabulary");
    bytes.push_back(static_cast<char>(b));
    const auto lead = static_cast<unsigned char>(bytes[0]);
    const std::size_t need = lead < 0x80 ? 1 : (lead & 0xE0) == 0xC0 ? 2 : (lead & 0xF0) == 0xE0 ? 3 : 4;
    if (bytes.size() == need) {
      chars.push_back(utf8::decode(bytes).at(0));
      bytes.clear();
    }
  }
  h.vocab = CharVocab(std::move(chars));
  return h;
}

void write_model(std::ostream& os, const SrnModel& model) {
  write_model_header(os, model);
  write_matrix(os, model.U);
  write_matrix(os, model.W);
  write_matrix(os, model.V);
}

SrnModel read_model(std::istream& is) {
  SrnHeader h = read_model_header(is);
  SrnConfig config;
  config.hidden_units = h.hidden_units;
  config.bptt_steps = h.bptt_steps;
  const std::size_t I = h.vocab.size();
  const std::size_t J = h.hidden_units;
  SrnModel model = SrnModel::zeros(std::move(h.vocab), config);
  model.U = read_matrix(is, J, I);
  model.W = read_matrix(is, J, J);
  model.V = read_matrix(is, I, J);
  return model;
}

void save_model(const std::string& path, const SrnModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  write_model(out, model);
  if (!out) throw InputError("failed writing " + path);
}

SrnModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return read_model(in);
}

}  // namespace charseg
