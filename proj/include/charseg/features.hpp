#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "charseg/corpus.hpp"
#include "charseg/embed.hpp"
#include "charseg/srn.hpp"

namespace charseg {

struct FeatureRow {
  std::size_t position = 0;
  std::vector<std::string> features;
  std::optional<BioTag> tag;

  friend bool operator==(const FeatureRow&, const FeatureRow&) = default;
};

using FeatureSequence = std::vector<FeatureRow>;

/// Character n-gram template around the focus character:
///   unigrams at -2..+2, bigrams (-1,0) (0,+1), trigram (-1,+1),
///   fourgrams (-2,+1) (-1,+2), fivegram (-2,+2).
inline constexpr std::size_t kNgramFeatureCount = 11;

inline constexpr std::string_view kBos = "<BOS>";
inline constexpr std::string_view kEos = "<EOS>";

/// Features are named `<order>:<first offset>,<last offset>=<chars>` (the
/// unigram signature is a single offset). Out-of-range offsets read as the
/// <BOS>/<EOS> sentinels.
std::vector<std::string> ngram_features(std::u32string_view text, std::size_t pos);

/// How a top-K block becomes feature strings.
///   Rank: `srn:<k>=<f(k)>`, the indicator of the k-th ranked unit.
///   Unit: `srn:<k>=u<j(k)>` when f(k) = 1, `srn:<k>=0` otherwise, so the
///         feature also names which unit is active.
///   Active: `srn:u<j(k)>` when f(k) = 1, `srn:<k>=0` otherwise; the unit
///         feature does not depend on where the unit ranks among the
///         active ones.
enum class SrnEncoding { Rank, Unit, Active };

std::vector<std::string> srn_features(const SrnFeatureBlock& block, SrnEncoding encoding);

/// Base n-grams followed by the K SRN indicators.
FeatureRow augment_row(FeatureRow base, const SrnFeatureBlock& srn,
                       SrnEncoding encoding = SrnEncoding::Rank);

struct FeaturizeOptions {
  std::size_t top_k = 10;
  SrnEncoding encoding = SrnEncoding::Rank;
  /// Largest tolerated share of characters the model does not know.
  double max_oov_rate = 0.5;
};

/// Baseline rows when `model` is null, augmented rows otherwise. Each
/// sequence is traced from the document-start state. Throws VocabError when
/// more than max_oov_rate of the characters are unknown to the model.
std::vector<FeatureSequence> featurize(std::span<const LabeledSequence> seqs,
                                       const SrnModel* model, const FeaturizeOptions& options = {});

/// Feature file: one row per character, tab-separated escaped feature
/// strings with the tag (or `?`) last; each sequence ends with a blank line.
void write_features(std::ostream& os, std::span<const FeatureSequence> data);
std::vector<FeatureSequence> read_features(std::istream& is);

void emit_dataset(std::ostream& os, std::span<const LabeledSequence> seqs, const SrnModel* model,
                  const FeaturizeOptions& options = {});

}  // namespace charseg
