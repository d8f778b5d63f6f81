#include <cmath>
#include <mutex>

#include "doctest.h"

#include "charseg/crf.hpp"
#include "charseg/error.hpp"
#include "charseg/eval.hpp"
#include "charseg/rng.hpp"

using namespace charseg;

namespace {

std::vector<BioTag> tags(std::initializer_list<const char*> names) {
  std::vector<BioTag> out;
  for (const char* n : names) out.push_back(*parse_tag(n));
  return out;
}

using Segs = std::vector<std::vector<Segment>>;

constexpr auto B = SegmentLabel::Block;
constexpr auto I = SegmentLabel::Inline;

/// Sequences of characters where runs of 'c' are BLOCK segments.
std::vector<LabeledSequence> toy_sequences(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledSequence> out;
  for (std::size_t s = 0; s < n; ++s) {
    LabeledSequence seq;
    const std::size_t len = 5 + rng.below(30);
    bool open = false;
    for (std::size_t t = 0; t < len; ++t) {
      const bool code = rng.bernoulli(0.3);
      seq.chars.push_back(code ? U'c' : U'p');
      seq.tags.push_back(code ? (open ? BioTag::IBlock : BioTag::BBlock) : BioTag::O);
      open = code;
    }
    out.push_back(seq);
  }
  return out;
}

std::vector<FeatureSequence> unigram_rows(std::span<const LabeledSequence> seqs) {
  std::vector<FeatureSequence> out;
  for (const auto& s : seqs) {
    FeatureSequence rows;
    for (std::size_t t = 0; t < s.size(); ++t) {
      std::string ch = t == 0 ? "^" : std::string(1, static_cast<char>(s.chars[t - 1]));
      rows.push_back(FeatureRow{t, {"c=" + std::string(1, static_cast<char>(s.chars[t])), "p=" + ch},
                                s.tags[t]});
    }
    out.push_back(rows);
  }
  return out;
}

CrfModel quick_train(std::span<const FeatureSequence> data) {
  TrainOptions opt;
  opt.max_iterations = 50;
  opt.threads = 1;
  return crf_train(data, opt);
}

}  // namespace

TEST_CASE("extract_segments examples") {
  CHECK(extract_segments(tags({"O", "B-BLOCK", "I-BLOCK", "O"})) == std::vector<Segment>{{1, 3, B}});
  CHECK(extract_segments(tags({"O", "O", "O", "O", "O", "B-BLOCK", "I-BLOCK", "I-BLOCK", "I-BLOCK",
                               "I-BLOCK", "I-BLOCK", "I-BLOCK"})) == std::vector<Segment>{{5, 12, B}});
  CHECK(extract_segments(tags({"I-INLINE", "I-INLINE", "O"})) == std::vector<Segment>{{0, 2, I}});
  CHECK(extract_segments(tags({"I-BLOCK", "I-INLINE"})) ==
        std::vector<Segment>{{0, 1, B}, {1, 2, I}});
  CHECK(extract_segments(tags({"B-BLOCK", "B-BLOCK", "I-BLOCK"})) ==
        std::vector<Segment>{{0, 1, B}, {1, 3, B}});
  CHECK(extract_segments(std::vector<BioTag>{}).empty());
}

TEST_CASE("extract_segments is total on arbitrary tag sequences") {
  Rng rng(2);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<BioTag> t(rng.below(40));
    for (auto& x : t) x = kAllTags[rng.below(kNumTags)];
    const auto segs = extract_segments(t);
    std::size_t covered = 0;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      CHECK(segs[i].start < segs[i].end);
      CHECK(segs[i].end <= t.size());
      if (i > 0) CHECK(segs[i - 1].end <= segs[i].start);
      covered += segs[i].end - segs[i].start;
    }
    std::size_t non_o = 0;
    for (auto x : t) non_o += x != BioTag::O;
    CHECK(covered == non_o);
  }
}

TEST_CASE("segment_prf examples") {
  const Segs gold = {{{1, 3, B}}};
  const auto same = segment_prf(gold, gold);
  CHECK(same.block.precision == 100.0);
  CHECK(same.block.recall == 100.0);
  CHECK(same.block.f1 == 100.0);

  const auto off = segment_prf(gold, Segs{{{1, 4, B}}});
  CHECK(off.block.matched == 0);
  CHECK(off.block.f1 == 0.0);

  const auto mixed = segment_prf(Segs{{{0, 2, B}, {5, 7, I}}}, Segs{{{0, 2, B}, {5, 7, B}}});
  CHECK(mixed.overall.precision == 50.0);
  CHECK(mixed.overall.recall == 50.0);
  CHECK(mixed.overall.f1 == 50.0);
  CHECK(mixed.inline_.predicted == 0);
  CHECK(mixed.inline_.precision == 0.0);

  const auto none = segment_prf(gold, Segs{{}});
  CHECK(none.block.precision == 0.0);
  CHECK(none.block.recall == 0.0);
  CHECK(none.block.gold == 1);
  CHECK_THROWS_AS(segment_prf(gold, Segs{}), ContractError);
}

TEST_CASE("segment_prf invariants on random segmentations") {
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    Segs gold, pred;
    for (std::size_t s = 0; s < 1 + rng.below(4); ++s) {
      std::vector<BioTag> g(rng.below(30)), p(g.size());
      for (auto& x : g) x = kAllTags[rng.below(kNumTags)];
      for (std::size_t t = 0; t < g.size(); ++t) p[t] = rng.bernoulli(0.7) ? g[t] : kAllTags[rng.below(kNumTags)];
      gold.push_back(extract_segments(g));
      pred.push_back(extract_segments(p));
    }
    const auto r = segment_prf(gold, pred);
    CHECK(r.overall.matched == r.block.matched + r.inline_.matched);
    CHECK(r.overall.gold == r.block.gold + r.inline_.gold);
    CHECK(r.overall.predicted == r.block.predicted + r.inline_.predicted);
    for (const PrfCounts* c : {&r.block, &r.inline_, &r.overall}) {
      CHECK(c->precision >= 0.0);
      CHECK(c->precision <= 100.0);
      CHECK(c->recall <= 100.0);
      if (c->precision + c->recall > 0) {
        CHECK(c->f1 == doctest::Approx(2 * c->precision * c->recall / (c->precision + c->recall)));
      } else {
        CHECK(c->f1 == 0.0);
      }
    }
    const auto self = segment_prf(gold, gold);
    if (self.overall.gold > 0) CHECK(self.overall.f1 == 100.0);
  }
}

TEST_CASE("report formats") {
  const auto r = segment_prf(Segs{{{0, 2, B}, {5, 7, I}}}, Segs{{{0, 2, B}, {5, 7, B}}});
  const std::string table = format_report(r);
  CHECK(table.find("%Precision") != std::string::npos);
  CHECK(table.find("BLOCK") != std::string::npos);
  CHECK(table.find("INLINE") != std::string::npos);
  CHECK(table.find("Overall") != std::string::npos);
  CHECK(table.find("50.00") != std::string::npos);
  const std::string tsv = format_report_tsv(r);
  CHECK(tsv.find("Overall\t2\t2\t1\t50.0000\t50.0000\t50.0000") != std::string::npos);
}

TEST_CASE("prefix_count cuts at the closest document boundary") {
  std::vector<LabeledSequence> seqs;
  for (std::size_t n : {10, 10, 20, 40}) seqs.push_back(LabeledSequence{std::u32string(n, U'a'), std::vector<BioTag>(n, BioTag::O)});
  CHECK(prefix_count(seqs, 100) == 4);
  CHECK(prefix_count(seqs, 50) == 3);
  CHECK(prefix_count(seqs, 25) == 2);
  CHECK(prefix_count(seqs, 12.5) == 1);
  CHECK(prefix_count(seqs, 0.1) == 1);
  CHECK(prefix_count(std::span<const LabeledSequence>{}, 50) == 0);
}

TEST_CASE("learning curve of one full cell equals a direct run") {
  const auto train = toy_sequences(30, 1);
  const auto dev = toy_sequences(10, 2);
  const std::vector<FeatureSet> sets = {{"baseline", unigram_rows}};
  const std::vector<double> fractions = {100};
  const auto points = learning_curve(train, dev, fractions, sets, quick_train);
  REQUIRE(points.size() == 1);
  const auto direct = evaluate(quick_train(unigram_rows(train)), unigram_rows(dev));
  CHECK(points[0].report.block.f1 == direct.block.f1);
  CHECK(points[0].report.block.matched == direct.block.matched);
  CHECK(points[0].feature_set == "baseline");
  CHECK(direct.block.f1 > 90.0);
}

TEST_CASE("learning curve order, nesting and concurrency") {
  const auto train = toy_sequences(40, 3);
  const auto dev = toy_sequences(10, 4);
  std::vector<std::size_t> sizes;
  std::mutex mu;
  const CrfTrainer trainer = [&](std::span<const FeatureSequence> data) {
    {
      std::lock_guard lock(mu);
      sizes.push_back(data.size());
    }
    return quick_train(data);
  };
  const std::vector<FeatureSet> sets = {{"baseline", unigram_rows}, {"other", unigram_rows}};
  const std::vector<double> fractions = {12.5, 25, 50, 100};
  const auto seq = learning_curve(train, dev, fractions, sets, trainer, false);
  const auto par = learning_curve(train, dev, fractions, sets, trainer, true);
  REQUIRE(seq.size() == 8);
  REQUIRE(par.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(seq[i].fraction == fractions[i / 2]);
    CHECK(seq[i].feature_set == sets[i % 2].id);
    CHECK(par[i].fraction == seq[i].fraction);
    CHECK(par[i].feature_set == seq[i].feature_set);
    CHECK(par[i].report.block.f1 == seq[i].report.block.f1);
  }
  // Nested prefixes grow with the fraction.
  for (std::size_t i = 2; i < 8; ++i) CHECK(sizes[i] >= sizes[i - 2]);

  const std::string curve = format_curve(seq);
  CHECK(std::count(curve.begin(), curve.end(), '\n') >= 8);

  const CrfTrainer failing = [](std::span<const FeatureSequence>) -> CrfModel {
    throw DivergedError("boom");
  };
  try {
    learning_curve(train, dev, fractions, sets, failing);
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Diverged);
    CHECK(std::string(e.what()).find("(baseline, 12.5%)") != std::string::npos);
  }
  const std::vector<double> unordered = {50, 25};
  CHECK_THROWS_AS(learning_curve(train, dev, unordered, sets, trainer), ContractError);
}
