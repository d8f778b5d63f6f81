#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace charseg {

enum class SegmentLabel : std::uint8_t { Block, Inline };

/// BIO tags in their fixed label order; O is index 0.
enum class BioTag : std::uint8_t { O = 0, BBlock, IBlock, BInline, IInline };

inline constexpr std::size_t kNumTags = 5;
inline constexpr std::array<BioTag, kNumTags> kAllTags = {
    BioTag::O, BioTag::BBlock, BioTag::IBlock, BioTag::BInline, BioTag::IInline};

std::string_view to_string(SegmentLabel label);
std::string_view to_string(BioTag tag);
std::optional<BioTag> parse_tag(std::string_view s);

inline std::size_t tag_index(BioTag t) { return static_cast<std::size_t>(t); }
inline BioTag begin_tag(SegmentLabel l) {
  return l == SegmentLabel::Block ? BioTag::BBlock : BioTag::BInline;
}
inline BioTag inside_tag(SegmentLabel l) {
  return l == SegmentLabel::Block ? BioTag::IBlock : BioTag::IInline;
}

/// Half-open character span [start, end) carrying a segment label.
struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;
  SegmentLabel label = SegmentLabel::Block;

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct MarkedDocument {
  std::string id;
  std::u32string text;
  std::vector<Segment> segments;  // sorted, non-overlapping

  std::size_t size() const { return text.size(); }
  friend bool operator==(const MarkedDocument&, const MarkedDocument&) = default;
};

struct LabeledSequence {
  std::u32string chars;
  std::vector<BioTag> tags;

  std::size_t size() const { return chars.size(); }
  friend bool operator==(const LabeledSequence&, const LabeledSequence&) = default;
};

/// True when every I-X tag follows B-X or I-X and lengths agree.
bool is_well_formed(const LabeledSequence& seq);

/// Throws ContractError unless segments are sorted, non-overlapping and
/// inside the text.
void validate(const MarkedDocument& doc);

/// Character inventory in first-occurrence order. Index size()-1 is UNK.
class CharVocab {
 public:
  CharVocab() = default;
  explicit CharVocab(std::vector<char32_t> chars);

  /// Input/output dimensionality: listed characters plus UNK.
  std::size_t size() const { return chars_.size() + 1; }
  std::size_t unk() const { return chars_.size(); }
  const std::vector<char32_t>& chars() const { return chars_; }

  /// Index of `c`, or unk() when `c` is not listed.
  std::size_t index_of(char32_t c) const;
  bool contains(char32_t c) const { return index_.count(c) != 0; }

  std::vector<std::size_t> encode(std::u32string_view text) const;

  friend bool operator==(const CharVocab& a, const CharVocab& b) { return a.chars_ == b.chars_; }

 private:
  std::vector<char32_t> chars_;
  std::unordered_map<char32_t, std::size_t> index_;
};

struct CorpusSplits {
  std::vector<MarkedDocument> lm;
  std::vector<MarkedDocument> train;
  std::vector<MarkedDocument> dev;
  std::vector<MarkedDocument> test;

  std::array<std::size_t, 4> char_counts() const;
};

inline constexpr std::array<std::string_view, 4> kSplitNames = {"lm", "train", "dev", "test"};

/// Weighted character alphabet used by the synthetic generator.
struct CharDistribution {
  std::vector<std::pair<char32_t, double>> weights;
};

struct SynthConfig {
  std::size_t n_docs = 1000;
  /// Punctuation mixed into prose between words.
  CharDistribution prose_chars;
  /// Operator and bracket alphabet used inside code.
  CharDistribution code_chars;
  /// Probability that a document holds at least one code block.
  double block_rate = 0.5;
  /// Probability that a prose sentence mentions an inline code token.
  double inline_rate = 0.15;
  /// Probability that such a mention is actually marked up; forum authors
  /// mark inline code inconsistently.
  double inline_mark_rate = 0.6;

  static SynthConfig defaults();
};

// --- operations ------------------------------------------------------------

/// Parses the ingestion markup: `<pre><code>...</code></pre>` is a BLOCK,
/// bare `<code>...</code>` an INLINE segment. `&lt;`, `&gt;` and `&amp;`
/// are decoded; any other text is literal. Throws InputError with the byte
/// offset on unbalanced or nested tags.
MarkedDocument parse_markup(std::string_view raw, std::string id = {});

/// Inverse of parse_markup.
std::string serialize_markup(const MarkedDocument& doc);

LabeledSequence to_bio(const MarkedDocument& doc);

CharVocab build_vocab(std::span<const std::u32string> texts);

/// Shuffles with `seed` and cuts the order at the cumulative character counts
/// closest to the (lm, train, dev, test) ratios.
CorpusSplits split_corpus(std::vector<MarkedDocument> docs, const std::array<double, 4>& ratios,
                          std::uint64_t seed);

std::vector<MarkedDocument> generate_synthetic(const SynthConfig& config, std::uint64_t seed);

// --- file formats ----------------------------------------------------------

/// Escapes `\n`, `\t` and `\` for line-oriented dumps.
std::string escape_char(char32_t c);
std::string escape_text(std::u32string_view s);
/// Inverse of escape_text; throws InputError on a dangling or unknown escape.
std::u32string unescape_text(std::string_view s);

/// BIO dump: `<escaped char>\t<tag>` per line, each sequence terminated by a
/// blank line.
void write_bio(std::ostream& os, std::span<const LabeledSequence> seqs);
std::vector<LabeledSequence> read_bio(std::istream& is);

/// Reads one document per file from a directory (sorted by file name, id is
/// the file name), a JSON-lines file with `{id, body}` records (`.jsonl`), or
/// a single markup file.
std::vector<MarkedDocument> read_documents(const std::filesystem::path& path);

void write_jsonl(std::ostream& os, std::span<const MarkedDocument> docs);

}  // namespace charseg
