#include "charseg/embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "charseg/binary_io.hpp"
#include "charseg/error.hpp"
#include "charseg/utf8.hpp"

namespace charseg {

HiddenTrace trace_hidden(const SrnModel& model, const std::u32string& text,
                         const Eigen::VectorXd* initial) {
  if (text.empty()) throw ContractError("cannot trace an empty text");
  HiddenTrace trace;
  trace.text = text;
  trace.states.resize(static_cast<Eigen::Index>(model.hidden_size()),
                      static_cast<Eigen::Index>(text.size()));
  HiddenState state = HiddenState::initial(model.hidden_size());
  if (initial) state.s = *initial;
  for (std::size_t t = 0; t < text.size(); ++t) {
    state = forward_step(model, state, model.vocab.index_of(text[t])).first;
    trace.states.col(static_cast<Eigen::Index>(t)) = state.s;
  }
  return trace;
}

SrnFeatureBlock topk_binarize(std::span<const double> activations, std::size_t K) {
  if (K > activations.size()) {
    throw ContractError("top-K size " + std::to_string(K) + " exceeds hidden size " +
                        std::to_string(activations.size()));
  }
  std::vector<std::size_t> order(activations.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(K), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (activations[a] != activations[b]) return activations[a] > activations[b];
                      return a < b;
                    });
  SrnFeatureBlock block;
  block.units.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(K));
  for (std::size_t j : block.units) block.active.push_back(activations[j] > 0.5 ? 1 : 0);
  return block;
}

SrnFeatureBlock topk_binarize(const Eigen::VectorXd& activations, std::size_t K) {
  return topk_binarize(std::span<const double>(activations.data(),
                                               static_cast<std::size_t>(activations.size())),
                       K);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("cosine of vectors with different dimensions");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ContractError("cosine similarity is undefined for a zero vector");
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

namespace {

std::u32string context_before(const std::u32string& text, std::size_t pos, std::size_t width) {
  const std::size_t end = std::min(pos + 1, text.size());
  const std::size_t start = end > width ? end - width : 0;
  return text.substr(start, end - start);
}

std::span<const double> column(const Eigen::MatrixXd& m, std::size_t c) {
  return {m.data() + static_cast<std::ptrdiff_t>(c) * m.rows(), static_cast<std::size_t>(m.rows())};
}

}  // namespace

std::vector<NeighborQuery> nearest_neighbors(const HiddenTrace& trace,
                                             const NeighborOptions& options) {
  if (options.count == 0 || options.stride == 0) {
    throw ContractError("neighbor count and stride must be positive");
  }
  const std::size_t range = std::min(options.search_prefix, trace.size());
  if (range == 0) throw ContractError("empty neighbor search range");

  std::vector<NeighborQuery> out;
  for (std::size_t q = 0; q < trace.size(); q += options.stride) {
    const auto query = column(trace.states, q);
    std::vector<Neighbor> cands;
    cands.reserve(range);
    for (std::size_t p = 0; p < range; ++p) {
      if (p == q) continue;
      cands.push_back({p, cosine(query, column(trace.states, p)), {}});
    }
    if (cands.empty()) throw ContractError("neighbor search range holds only the query");
    const std::size_t n = std::min(options.count, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(n), cands.end(),
                      [](const Neighbor& a, const Neighbor& b) {
                        if (a.similarity != b.similarity) return a.similarity > b.similarity;
                        return a.position < b.position;
                      });
    cands.resize(n);
    for (auto& c : cands) c.context = context_before(trace.text, c.position, options.context_width);
    out.push_back({q, context_before(trace.text, q, options.context_width), std::move(cands)});
  }
  return out;
}

void write_neighbor_report(std::ostream& os, std::span<const NeighborQuery> queries,
                           std::size_t context_width) {
  auto show = [&](const std::u32string& ctx) {
    std::string s(context_width > ctx.size() ? context_width - ctx.size() : 0, ' ');
    for (char32_t c : ctx) {
      if (c == U'\n') {
        s += "\xC2\xB6";  // pilcrow
      } else if (c == U'\t') {
        s += ' ';
      } else {
        utf8::append(s, c);
      }
    }
    return s;
  };
  char buf[64];
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (i) os << '\n';
    const auto& q = queries[i];
    os << show(q.context) << "  @" << q.position << '\n';
    for (const auto& n : q.neighbors) {
      std::snprintf(buf, sizeof buf, "%.6f", n.similarity);
      os << show(n.context) << "  @" << n.position << "  " << buf << '\n';
    }
  }
}

void write_trace(std::ostream& os, const SrnModel& model, const HiddenTrace& trace) {
  if (trace.hidden_size() != model.hidden_size()) {
    throw ContractError("trace dimension does not match the model");
  }
  write_model_header(os, model);
  binio::write_u64(os, trace.size());
  for (std::size_t t = 0; t < trace.size(); ++t) {
    for (double v : column(trace.states, t)) binio::write_f64(os, v);
  }
}

TraceFile read_trace(std::istream& is) {
  SrnHeader h = read_model_header(is);
  TraceFile out;
  out.vocab = std::move(h.vocab);
  out.bptt_steps = h.bptt_steps;
  const std::uint64_t T = binio::read_u64(is, "position count");
  out.states.resize(static_cast<Eigen::Index>(h.hidden_units), static_cast<Eigen::Index>(T));
  for (Eigen::Index t = 0; t < out.states.cols(); ++t) {
    for (Eigen::Index j = 0; j < out.states.rows(); ++j) {
      out.states(j, t) = binio::read_f64(is, "activations");
    }
  }
  return out;
}

}  // namespace charseg
