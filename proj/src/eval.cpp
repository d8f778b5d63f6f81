#include "charseg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "charseg/error.hpp"

namespace charseg {

std::vector<Segment> extract_segments(std::span<const BioTag> tags) {
  std::vector<Segment> out;
  std::optional<Segment> open;
  auto close = [&](std::size_t end) {
    if (open) {
      open->end = end;
      out.push_back(*open);
      open.reset();
    }
  };
  for (std::size_t t = 0; t < tags.size(); ++t) {
    const BioTag tag = tags[t];
    if (tag == BioTag::O) {
      close(t);
      continue;
    }
    const SegmentLabel label =
        (tag == BioTag::BBlock || tag == BioTag::IBlock) ? SegmentLabel::Block : SegmentLabel::Inline;
    const bool inside = tag == BioTag::IBlock || tag == BioTag::IInline;
    if (inside && open && open->label == label) continue;
    close(t);
    open = Segment{t, t, label};
  }
  close(tags.size());
  return out;
}

namespace {

void finish(PrfCounts& c) {
  c.precision = c.predicted ? 100.0 * static_cast<double>(c.matched) / static_cast<double>(c.predicted) : 0.0;
  c.recall = c.gold ? 100.0 * static_cast<double>(c.matched) / static_cast<double>(c.gold) : 0.0;
  c.f1 = c.precision + c.recall > 0.0 ? 2.0 * c.precision * c.recall / (c.precision + c.recall) : 0.0;
}

}  // namespace

PrfReport segment_prf(std::span<const std::vector<Segment>> gold,
                      std::span<const std::vector<Segment>> pred) {
  if (gold.size() != pred.size()) {
    throw ContractError("gold and predicted segment lists cover different sequence counts");
  }
  PrfReport r;
  auto counts = [&](SegmentLabel l) -> PrfCounts& {
    return l == SegmentLabel::Block ? r.block : r.inline_;
  };
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (const auto& g : gold[i]) ++counts(g.label).gold;
    for (const auto& p : pred[i]) {
      ++counts(p.label).predicted;
      if (std::find(gold[i].begin(), gold[i].end(), p) != gold[i].end()) ++counts(p.label).matched;
    }
  }
  r.overall.gold = r.block.gold + r.inline_.gold;
  r.overall.predicted = r.block.predicted + r.inline_.predicted;
  r.overall.matched = r.block.matched + r.inline_.matched;
  finish(r.block);
  finish(r.inline_);
  finish(r.overall);
  return r;
}

std::string format_report(const PrfReport& report) {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-8s %12s %9s %7s\n", "Label", "%Precision", "%Recall", "%F1");
  out += buf;
  auto row = [&](const char* name, const PrfCounts& c) {
    std::snprintf(buf, sizeof buf, "%-8s %12.2f %9.2f %7.2f\n", name, c.precision, c.recall, c.f1);
    out += buf;
  };
  row("BLOCK", report.block);
  row("INLINE", report.inline_);
  out += std::string(39, '-') + "\n";
  row("Overall", report.overall);
  return out;
}

std::string format_report_tsv(const PrfReport& report) {
  std::string out = "label\tgold\tpredicted\tmatched\tprecision\trecall\tf1\n";
  char buf[160];
  auto row = [&](const char* name, const PrfCounts& c) {
    std::snprintf(buf, sizeof buf, "%s\t%zu\t%zu\t%zu\t%.4f\t%.4f\t%.4f\n", name, c.gold,
                  c.predicted, c.matched, c.precision, c.recall, c.f1);
    out += buf;
  };
  row("BLOCK", report.block);
  row("INLINE", report.inline_);
  row("Overall", report.overall);
  return out;
}

std::vector<std::vector<Segment>> gold_segments(std::span<const FeatureSequence> data) {
  std::vector<std::vector<Segment>> out;
  out.reserve(data.size());
  for (const auto& seq : data) {
    std::vector<BioTag> tags;
    tags.reserve(seq.size());
    for (const auto& row : seq) {
      if (!row.tag) throw ContractError("evaluation needs labeled rows");
      tags.push_back(*row.tag);
    }
    out.push_back(extract_segments(tags));
  }
  return out;
}

std::vector<std::vector<Segment>> gold_segments(std::span<const LabeledSequence> data) {
  std::vector<std::vector<Segment>> out;
  out.reserve(data.size());
  for (const auto& seq : data) out.push_back(extract_segments(seq.tags));
  return out;
}

PrfReport evaluate(const CrfModel& model, std::span<const FeatureSequence> data) {
  std::vector<std::vector<Segment>> pred;
  pred.reserve(data.size());
  for (const auto& seq : data) pred.push_back(extract_segments(label(model, seq)));
  return segment_prf(gold_segments(data), pred);
}

std::size_t prefix_count(std::span<const LabeledSequence> seqs, double percent) {
  if (!(percent > 0.0 && percent <= 100.0)) {
    throw ContractError("training fraction must lie in (0, 100]");
  }
  if (seqs.empty()) return 0;
  double total = 0.0;
  for (const auto& s : seqs) total += static_cast<double>(s.size());
  const double target = total * percent / 100.0;
  std::size_t best = 1;
  double cum = static_cast<double>(seqs[0].size());
  double best_gap = std::abs(cum - target);
  for (std::size_t i = 1; i < seqs.size(); ++i) {
    cum += static_cast<double>(seqs[i].size());
    const double gap = std::abs(cum - target);
    if (gap < best_gap) {
      best_gap = gap;
      best = i + 1;
    }
  }
  return best;
}

std::vector<CurvePoint> learning_curve(std::span<const LabeledSequence> train,
                                       std::span<const LabeledSequence> dev,
                                       std::span<const double> fractions,
                                       std::span<const FeatureSet> sets, const CrfTrainer& trainer,
                                       bool concurrent) {
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] > 0.0 && fractions[i] <= 100.0) || (i > 0 && fractions[i] <= fractions[i - 1])) {
      throw ContractError("curve fractions must be ascending and lie in (0, 100]");
    }
  }
  // Featurize once per set; every fraction takes a prefix of the same rows.
  std::vector<std::vector<FeatureSequence>> train_rows, dev_rows;
  for (const auto& set : sets) {
    train_rows.push_back(set.featurize(train));
    dev_rows.push_back(set.featurize(dev));
  }

  auto cell = [&](std::size_t fi, std::size_t si) {
    const std::size_t n = prefix_count(train, fractions[fi]);
    const std::span<const FeatureSequence> prefix(train_rows[si].data(), n);
    try {
      const CrfModel model = trainer(prefix);
      return CurvePoint{fractions[fi], sets[si].id, evaluate(model, dev_rows[si])};
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << "learning curve cell (" << sets[si].id << ", " << fractions[fi] << "%): " << e.what();
      throw Error(e.kind(), msg.str());
    }
  };

  std::vector<CurvePoint> out;
  if (concurrent) {
    std::vector<std::future<CurvePoint>> jobs;
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
      for (std::size_t si = 0; si < sets.size(); ++si) {
        jobs.push_back(std::async(std::launch::async, cell, fi, si));
      }
    }
    for (auto& j : jobs) out.push_back(j.get());
  } else {
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
      for (std::size_t si = 0; si < sets.size(); ++si) out.push_back(cell(fi, si));
    }
  }
  return out;
}

std::string format_curve(std::span<const CurvePoint> points) {
  std::string out = "fraction\tfeature_set\tprecision\trecall\tf1\n";
  char buf[160];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%g\t%s\t%.4f\t%.4f\t%.4f\n", p.fraction, p.feature_set.c_str(),
                  p.report.block.precision, p.report.block.recall, p.report.block.f1);
    out += buf;
  }
  return out;
}

}  // namespace charseg
