#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "charseg/corpus.hpp"
#include "charseg/crf.hpp"
#include "charseg/features.hpp"

namespace charseg {

/// Decodes BIO tags into segments. An I-X that does not continue an open X
/// segment starts a new one (the conlleval repair). Never fails.
std::vector<Segment> extract_segments(std::span<const BioTag> tags);

struct PrfCounts {
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t matched = 0;
  double precision = 0.0;  // percent; 0 when nothing was predicted
  double recall = 0.0;     // percent; 0 when nothing was expected
  double f1 = 0.0;
};

struct PrfReport {
  PrfCounts block;
  PrfCounts inline_;
  PrfCounts overall;  // pooled over both labels

  const PrfCounts& operator[](SegmentLabel l) const {
    return l == SegmentLabel::Block ? block : inline_;
  }
};

/// Exact-match segment scoring: a prediction counts only when start, end and
/// label all agree with a gold segment of the same sequence.
PrfReport segment_prf(std::span<const std::vector<Segment>> gold,
                      std::span<const std::vector<Segment>> pred);

/// Aligned Label / %Precision / %Recall / %F1 table.
std::string format_report(const PrfReport& report);
/// label, gold, predicted, matched, precision, recall, f1 (tab-separated).
std::string format_report_tsv(const PrfReport& report);

/// Gold segments of labeled sequences (feature rows or BIO sequences).
std::vector<std::vector<Segment>> gold_segments(std::span<const FeatureSequence> data);
std::vector<std::vector<Segment>> gold_segments(std::span<const LabeledSequence> data);

/// Labels every sequence with `model` and scores it against its gold tags.
PrfReport evaluate(const CrfModel& model, std::span<const FeatureSequence> data);

struct CurvePoint {
  double fraction = 100.0;  // percent of training characters
  std::string feature_set;
  PrfReport report;
};

/// One featurization of the labeled data, e.g. baseline n-grams or n-grams
/// plus SRN indicators from a particular language model.
struct FeatureSet {
  std::string id;
  std::function<std::vector<FeatureSequence>(std::span<const LabeledSequence>)> featurize;
};

using CrfTrainer = std::function<CrfModel(std::span<const FeatureSequence>)>;

/// Number of leading sequences whose character total is closest to
/// `percent` of the whole (at least one when the input is nonempty).
std::size_t prefix_count(std::span<const LabeledSequence> seqs, double percent);

/// Trains one CRF per (fraction, feature set) on nested prefixes of `train`
/// and scores each on `dev`. Points come back fraction-major, in declaration
/// order, whether or not cells ran concurrently.
std::vector<CurvePoint> learning_curve(std::span<const LabeledSequence> train,
                                       std::span<const LabeledSequence> dev,
                                       std::span<const double> fractions,
                                       std::span<const FeatureSet> sets, const CrfTrainer& trainer,
                                       bool concurrent = false);

/// fraction, feature_set, precision, recall, f1 for BLOCK segments.
std::string format_curve(std::span<const CurvePoint> points);

}  // namespace charseg
