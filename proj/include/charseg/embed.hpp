#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "charseg/srn.hpp"

namespace charseg {

/// Hidden activations recorded while a frozen network reads a text.
/// Column t is s(t): the state after consuming text[t], used to predict
/// text[t+1].
struct HiddenTrace {
  std::u32string text;
  Eigen::MatrixXd states;  // J x T

  std::size_t size() const { return static_cast<std::size_t>(states.cols()); }
  std::size_t hidden_size() const { return static_cast<std::size_t>(states.rows()); }
};

/// Runs `model` over `text` from the document-start state (or `initial`).
HiddenTrace trace_hidden(const SrnModel& model, const std::u32string& text,
                         const Eigen::VectorXd* initial = nullptr);

/// Top-K binarization of one activation vector. Entry k refers to the k-th
/// most active unit (ties go to the lower unit index).
struct SrnFeatureBlock {
  std::vector<std::uint8_t> active;  // f(k): activation of unit j(k) > 0.5
  std::vector<std::size_t> units;    // j(k)

  std::size_t k() const { return active.size(); }
};

SrnFeatureBlock topk_binarize(std::span<const double> activations, std::size_t K);
SrnFeatureBlock topk_binarize(const Eigen::VectorXd& activations, std::size_t K);

double cosine(std::span<const double> a, std::span<const double> b);

struct Neighbor {
  std::size_t position = 0;
  double similarity = 0.0;
  std::u32string context;
};

struct NeighborQuery {
  std::size_t position = 0;
  std::u32string context;
  std::vector<Neighbor> neighbors;  // best first
};

struct NeighborOptions {
  std::size_t stride = 100;
  std::size_t search_prefix = 10000;
  std::size_t count = 4;
  std::size_t context_width = 32;
};

/// Exhaustive cosine search. Queries sit at positions 0, stride, 2*stride...
/// and are matched against positions [0, search_prefix) of the same trace
/// (clamped to its length), excluding the query itself; ties go to the
/// earlier position.
std::vector<NeighborQuery> nearest_neighbors(const HiddenTrace& trace,
                                             const NeighborOptions& options = {});

/// Plain-text report: per query, the query row followed by its neighbor rows,
/// each showing the trailing context with newlines rendered as a pilcrow.
void write_neighbor_report(std::ostream& os, std::span<const NeighborQuery> queries,
                           std::size_t context_width = 32);

/// Trace file: the model file header (magic, I, J, bptt steps, vocabulary),
/// then the position count as u64 and one f64 J-vector per position.
void write_trace(std::ostream& os, const SrnModel& model, const HiddenTrace& trace);

struct TraceFile {
  CharVocab vocab;
  std::size_t bptt_steps = 0;
  Eigen::MatrixXd states;  // J x T
};
TraceFile read_trace(std::istream& is);

}  // namespace charseg
