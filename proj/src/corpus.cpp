#include "charseg/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "charseg/error.hpp"
#include "charseg/rng.hpp"
#include "charseg/utf8.hpp"

namespace charseg {

std::string_view to_string(SegmentLabel label) {
  return label == SegmentLabel::Block ? "BLOCK" : "INLINE";
}

std::string_view to_string(BioTag tag) {
  switch (tag) {
    case BioTag::O: return "O";
    case BioTag::BBlock: return "B-BLOCK";
    case BioTag::IBlock: return "I-BLOCK";
    case BioTag::BInline: return "B-INLINE";
    case BioTag::IInline: return "I-INLINE";
  }
  return "O";
}

std::optional<BioTag> parse_tag(std::string_view s) {
  for (BioTag t : kAllTags) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

bool is_well_formed(const LabeledSequence& seq) {
  if (seq.chars.size() != seq.tags.size()) return false;
  BioTag prev = BioTag::O;
  for (BioTag t : seq.tags) {
    if (t == BioTag::IBlock && prev != BioTag::BBlock && prev != BioTag::IBlock) return false;
    if (t == BioTag::IInline && prev != BioTag::BInline && prev != BioTag::IInline) return false;
    prev = t;
  }
  return true;
}

void validate(const MarkedDocument& doc) {
  std::size_t prev_end = 0;
  for (const auto& s : doc.segments) {
    if (s.start >= s.end || s.end > doc.text.size() || s.start < prev_end) {
      throw ContractError("document '" + doc.id + "' has an invalid segment [" +
                          std::to_string(s.start) + ", " + std::to_string(s.end) + ")");
    }
    prev_end = s.end;
  }
}

// --- vocabulary ------------------------------------------------------------

CharVocab::CharVocab(std::vector<char32_t> chars) : chars_(std::move(chars)) {
  for (std::size_t i = 0; i < chars_.size(); ++i) {
    if (!index_.emplace(chars_[i], i).second) {
      throw ContractError("duplicate character in vocabulary");
    }
  }
}

std::size_t CharVocab::index_of(char32_t c) const {
  auto it = index_.find(c);
  return it == index_.end() ? unk() : it->second;
}

std::vector<std::size_t> CharVocab::encode(std::u32string_view text) const {
  std::vector<std::size_t> out;
  out.reserve(text.size());
  for (char32_t c : text) out.push_back(index_of(c));
  return out;
}

CharVocab build_vocab(std::span<const std::u32string> texts) {
  std::vector<char32_t> chars;
  std::unordered_map<char32_t, bool> seen;
  for (const auto& t : texts) {
    for (char32_t c : t) {
      if (seen.emplace(c, true).second) chars.push_back(c);
    }
  }
  if (chars.empty()) throw InputError("cannot build a vocabulary from an empty corpus");
  return CharVocab(std::move(chars));
}

// --- markup ----------------------------------------------------------------

namespace {

constexpr std::string_view kBlockOpen = "<pre><code>";
constexpr std::string_view kBlockClose = "</code></pre>";
constexpr std::string_view kInlineOpen = "<code>";
constexpr std::string_view kInlineClose = "</code>";

[[noreturn]] void malformed(std::size_t offset, const std::string& why) {
  throw InputError("malformed markup at byte offset " + std::to_string(offset) + ": " + why);
}

}  // namespace

MarkedDocument parse_markup(std::string_view raw, std::string id) {
  MarkedDocument doc;
  doc.id = std::move(id);

  std::optional<SegmentLabel> open;
  std::size_t open_offset = 0;
  std::size_t open_start = 0;

  auto begin_segment = [&](SegmentLabel label, std::size_t offset) {
    if (open) malformed(offset, "nested code tag");
    open = label;
    open_offset = offset;
    open_start = doc.text.size();
  };
  auto end_segment = [&](SegmentLabel label, std::size_t offset) {
    if (!open) malformed(offset, "closing tag without opening tag");
    if (*open != label) malformed(offset, "closing tag does not match opening tag");
    if (doc.text.size() == open_start) malformed(open_offset, "empty code segment");
    doc.segments.push_back({open_start, doc.text.size(), label});
    open.reset();
  };

  std::size_t pos = 0;
  while (pos < raw.size()) {
    const std::string_view rest = raw.substr(pos);
    if (raw[pos] == '<') {
      if (rest.starts_with(kBlockOpen)) {
        begin_segment(SegmentLabel::Block, pos);
        pos += kBlockOpen.size();
        continue;
      }
      if (rest.starts_with(kBlockClose)) {
        end_segment(SegmentLabel::Block, pos);
        pos += kBlockClose.size();
        continue;
      }
      if (rest.starts_with(kInlineOpen)) {
        begin_segment(SegmentLabel::Inline, pos);
        pos += kInlineOpen.size();
        continue;
      }
      if (rest.starts_with(kInlineClose)) {
        end_segment(SegmentLabel::Inline, pos);
        pos += kInlineClose.size();
        continue;
      }
      if (rest.starts_with("<pre>") || rest.starts_with("</pre>")) {
        malformed(pos, "<pre> must directly wrap <code>");
      }
    } else if (raw[pos] == '&') {
      if (rest.starts_with("&lt;")) {
        doc.text.push_back(U'<');
        pos += 4;
        continue;
      }
      if (rest.starts_with("&gt;")) {
        doc.text.push_back(U'>');
        pos += 4;
        continue;
      }
      if (rest.starts_with("&amp;")) {
        doc.text.push_back(U'&');
        pos += 5;
        continue;
      }
    }
    doc.text.push_back(utf8::next(raw, pos));
  }
  if (open) malformed(open_offset, "unclosed code tag");
  return doc;
}

std::string serialize_markup(const MarkedDocument& doc) {
  validate(doc);
  std::string out;
  auto seg = doc.segments.begin();
  for (std::size_t i = 0; i < doc.text.size(); ++i) {
    if (seg != doc.segments.end() && seg->start == i) {
      out += seg->label == SegmentLabel::Block ? kBlockOpen : kInlineOpen;
    }
    switch (doc.text[i]) {
      case U'<': out += "&lt;"; break;
      case U'>': out += "&gt;"; break;
      case U'&': out += "&amp;"; break;
      default: utf8::append(out, doc.text[i]);
    }
    if (seg != doc.segments.end() && seg->end == i + 1) {
      out += seg->label == SegmentLabel::Block ? kBlockClose : kInlineClose;
      ++seg;
    }
  }
  return out;
}

LabeledSequence to_bio(const MarkedDocument& doc) {
  LabeledSequence seq;
  seq.chars = doc.text;
  seq.tags.assign(doc.text.size(), BioTag::O);
  for (const auto& s : doc.segments) {
    seq.tags[s.start] = begin_tag(s.label);
    std::fill(seq.tags.begin() + static_cast<std::ptrdiff_t>(s.start) + 1,
              seq.tags.begin() + static_cast<std::ptrdiff_t>(s.end), inside_tag(s.label));
  }
  return seq;
}

// --- splitting -------------------------------------------------------------

std::array<std::size_t, 4> CorpusSplits::char_counts() const {
  auto count = [](const std::vector<MarkedDocument>& docs) {
    std::size_t n = 0;
    for (const auto& d : docs) n += d.size();
    return n;
  };
  return {count(lm), count(train), count(dev), count(test)};
}

CorpusSplits split_corpus(std::vector<MarkedDocument> docs, const std::array<double, 4>& ratios,
                          std::uint64_t seed) {
  const double sum = std::accumulate(ratios.begin(), ratios.end(), 0.0);
  if (std::any_of(ratios.begin(), ratios.end(), [](double r) { return !(r >= 0.0); }) ||
      std::abs(sum - 1.0) > 1e-9) {
    throw ContractError("split ratios must be non-negative and sum to 1");
  }
  if (docs.size() < 4) {
    throw InputError("insufficient data: need at least 4 documents to split, got " +
                     std::to_string(docs.size()));
  }
  Rng rng(seed);
  rng.shuffle(docs);

  // Weight by characters; fall back to document counts for an all-empty corpus.
  std::vector<double> cum(docs.size() + 1, 0.0);
  for (std::size_t i = 0; i < docs.size(); ++i) cum[i + 1] = cum[i] + static_cast<double>(docs[i].size());
  if (cum.back() == 0.0) std::iota(cum.begin(), cum.end(), 0.0);

  std::array<std::size_t, 5> cuts{0, 0, 0, 0, docs.size()};
  double target = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    target += ratios[k] * cum.back();
    std::size_t best = cuts[k];
    for (std::size_t i = cuts[k]; i <= docs.size(); ++i) {
      if (std::abs(cum[i] - target) < std::abs(cum[best] - target)) best = i;
    }
    cuts[k + 1] = best;
  }

  CorpusSplits out;
  std::array<std::vector<MarkedDocument>*, 4> parts = {&out.lm, &out.train, &out.dev, &out.test};
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t i = cuts[k]; i < cuts[k + 1]; ++i) parts[k]->push_back(std::move(docs[i]));
  }
  return out;
}

// --- dump formats ----------------------------------------------------------

std::string escape_char(char32_t c) {
  switch (c) {
    case U'\n': return "\\n";
    case U'\t': return "\\t";
    case U'\\': return "\\\\";
    default: {
      std::string s;
      utf8::append(s, c);
      return s;
    }
  }
}

std::string escape_text(std::u32string_view s) {
  std::string out;
  for (char32_t c : s) out += escape_char(c);
  return out;
}

std::u32string unescape_text(std::string_view s) {
  const std::u32string raw = utf8::decode(s);
  std::u32string out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] != U'\\') {
      out.push_back(raw[i]);
      continue;
    }
    if (i + 1 == raw.size()) throw InputError("dangling escape in '" + std::string(s) + "'");
    switch (raw[++i]) {
      case U'n': out.push_back(U'\n'); break;
      case U't': out.push_back(U'\t'); break;
      case U'\\': out.push_back(U'\\'); break;
      default: throw InputError("unknown escape in '" + std::string(s) + "'");
    }
  }
  return out;
}

void write_bio(std::ostream& os, std::span<const LabeledSequence> seqs) {
  for (const auto& seq : seqs) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      os << escape_char(seq.chars[i]) << '\t' << to_string(seq.tags[i]) << '\n';
    }
    os << '\n';
  }
}

std::vector<LabeledSequence> read_bio(std::istream& is) {
  std::vector<LabeledSequence> out;
  LabeledSequence cur;
  bool open = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) {
      out.push_back(std::move(cur));
      cur = {};
      open = false;
      continue;
    }
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) {
      throw InputError("BIO dump line " + std::to_string(lineno) + " lacks a tab");
    }
    const std::u32string ch = unescape_text(std::string_view(line).substr(0, tab));
    const auto tag = parse_tag(std::string_view(line).substr(tab + 1));
    if (ch.size() != 1 || !tag) {
      throw InputError("BIO dump line " + std::to_string(lineno) + " is not '<char>\\t<tag>'");
    }
    cur.chars.push_back(ch[0]);
    cur.tags.push_back(*tag);
    open = true;
  }
  if (open) out.push_back(std::move(cur));
  return out;
}

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<MarkedDocument> read_documents(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::vector<MarkedDocument> docs;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      try {
        docs.push_back(parse_markup(slurp(f), f.filename().string()));
      } catch (const InputError& e) {
        throw InputError(f.string() + ": " + e.what());
      }
    }
    return docs;
  }
  if (!fs::exists(path)) throw InputError("no such file or directory: " + path.string());
  if (path.extension() == ".jsonl") {
    std::ifstream in(path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const std::string where = path.string() + ":" + std::to_string(lineno);
      nlohmann::json rec;
      try {
        rec = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw InputError(where + ": " + e.what());
      }
      if (!rec.contains("id") || !rec.contains("body") || !rec["body"].is_string()) {
        throw InputError(where + ": record needs string fields 'id' and 'body'");
      }
      std::string id = rec["id"].is_string() ? rec["id"].get<std::string>() : rec["id"].dump();
      try {
        docs.push_back(parse_markup(rec["body"].get<std::string>(), std::move(id)));
      } catch (const InputError& e) {
        throw InputError(where + ": " + e.what());
      }
    }
    return docs;
  }
  docs.push_back(parse_markup(slurp(path), path.filename().string()));
  return docs;
}

void write_jsonl(std::ostream& os, std::span<const MarkedDocument> docs) {
  for (const auto& d : docs) {
    nlohmann::json rec = {{"id", d.id}, {"body", serialize_markup(d)}};
    os << rec.dump() << '\n';
  }
}

}  // namespace charseg
