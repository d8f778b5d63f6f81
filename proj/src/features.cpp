#include "charseg/features.hpp"

#include <istream>
#include <ostream>

#include "charseg/error.hpp"
#include "charseg/utf8.hpp"

namespace charseg {

namespace {

struct Gram {
  int order;
  int first;
  int last;
};

constexpr Gram kTemplate[kNgramFeatureCount] = {
    {1, -2, -2}, {1, -1, -1}, {1, 0, 0},  {1, 1, 1},  {1, 2, 2}, {2, -1, 0},
    {2, 0, 1},   {3, -1, 1},  {4, -2, 1}, {4, -1, 2}, {5, -2, 2},
};

std::string signed_offset(int off) {
  return off > 0 ? "+" + std::to_string(off) : std::to_string(off);
}

std::string escape_bytes(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\\': out += "\\\\"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_bytes(std::string_view s, std::size_t lineno) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out.push_back(s[i]);
      continue;
    }
    const char next = i + 1 < s.size() ? s[++i] : '\0';
    switch (next) {
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case '\\': out.push_back('\\'); break;
      default:
        throw InputError("feature file line " + std::to_string(lineno) + ": bad escape");
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> ngram_features(std::u32string_view text, std::size_t pos) {
  if (pos >= text.size()) {
    throw ContractError("feature position " + std::to_string(pos) + " outside text of length " +
                        std::to_string(text.size()));
  }
  std::vector<std::string> out;
  out.reserve(kNgramFeatureCount);
  for (const Gram& g : kTemplate) {
    std::string f = std::to_string(g.order) + ":" + signed_offset(g.first);
    if (g.last != g.first) f += "," + signed_offset(g.last);
    f += '=';
    for (int off = g.first; off <= g.last; ++off) {
      const auto i = static_cast<std::ptrdiff_t>(pos) + off;
      if (i < 0) {
        f += kBos;
      } else if (i >= static_cast<std::ptrdiff_t>(text.size())) {
        f += kEos;
      } else {
        utf8::append(f, text[static_cast<std::size_t>(i)]);
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<std::string> srn_features(const SrnFeatureBlock& block, SrnEncoding encoding) {
  std::vector<std::string> out;
  out.reserve(block.k());
  for (std::size_t k = 0; k < block.k(); ++k) {
    if (encoding == SrnEncoding::Active && block.active[k]) {
      out.push_back("srn:u" + std::to_string(block.units[k]));
      continue;
    }
    std::string f = "srn:" + std::to_string(k + 1) + "=";
    if (encoding == SrnEncoding::Unit && block.active[k]) {
      f += "u" + std::to_string(block.units[k]);
    } else {
      f += block.active[k] ? '1' : '0';
    }
    out.push_back(std::move(f));
  }
  return out;
}

FeatureRow augment_row(FeatureRow base, const SrnFeatureBlock& srn, SrnEncoding encoding) {
  for (auto& f : srn_features(srn, encoding)) base.features.push_back(std::move(f));
  return base;
}

std::vector<FeatureSequence> featurize(std::span<const LabeledSequence> seqs,
                                       const SrnModel* model, const FeaturizeOptions& options) {
  if (model) {
    std::size_t total = 0, unknown = 0;
    for (const auto& s : seqs) {
      total += s.size();
      for (char32_t c : s.chars) unknown += model->vocab.contains(c) ? 0 : 1;
    }
    if (total > 0 && static_cast<double>(unknown) > options.max_oov_rate * static_cast<double>(total)) {
      throw VocabError("vocabulary mismatch: " + std::to_string(unknown) + " of " +
                       std::to_string(total) + " characters are unknown to the language model");
    }
    if (options.top_k > model->hidden_size()) {
      throw ContractError("top-K size exceeds the model's hidden units");
    }
  }

  std::vector<FeatureSequence> out;
  out.reserve(seqs.size());
  for (const auto& seq : seqs) {
    FeatureSequence rows;
    rows.reserve(seq.size());
    std::optional<HiddenTrace> trace;
    if (model && !seq.chars.empty()) trace = trace_hidden(*model, seq.chars);
    for (std::size_t t = 0; t < seq.size(); ++t) {
      FeatureRow row{t, ngram_features(seq.chars, t),
                     t < seq.tags.size() ? std::optional<BioTag>(seq.tags[t]) : std::nullopt};
      if (trace) {
        row = augment_row(std::move(row),
                          topk_binarize(trace->states.col(static_cast<Eigen::Index>(t)), options.top_k),
                          options.encoding);
      }
      rows.push_back(std::move(row));
    }
    out.push_back(std::move(rows));
  }
  return out;
}

void write_features(std::ostream& os, std::span<const FeatureSequence> data) {
  for (const auto& seq : data) {
    for (const auto& row : seq) {
      for (const auto& f : row.features) os << escape_bytes(f) << '\t';
      os << (row.tag ? to_string(*row.tag) : std::string_view("?")) << '\n';
    }
    os << '\n';
  }
}

std::vector<FeatureSequence> read_features(std::istream& is) {
  std::vector<FeatureSequence> out;
  FeatureSequence cur;
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
    FeatureRow row;
    row.position = cur.size();
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      if (tab == std::string::npos) {
        const std::string_view last = std::string_view(line).substr(start);
        if (last != "?") {
          row.tag = parse_tag(last);
          if (!row.tag) {
            throw InputError("feature file line " + std::to_string(lineno) + ": unknown tag '" +
                             std::string(last) + "'");
          }
        }
        break;
      }
      row.features.push_back(unescape_bytes(std::string_view(line).substr(start, tab - start), lineno));
      start = tab + 1;
    }
    cur.push_back(std::move(row));
    open = true;
  }
  if (open) out.push_back(std::move(cur));
  return out;
}

void emit_dataset(std::ostream& os, std::span<const LabeledSequence> seqs, const SrnModel* model,
                  const FeaturizeOptions& options) {
  const auto data = featurize(seqs, model, options);
  write_features(os, data);
}

}  // namespace charseg
