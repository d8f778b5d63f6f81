#include <array>
#include <cmath>
#include <string_view>

#include "charseg/corpus.hpp"
#include "charseg/error.hpp"
#include "charseg/rng.hpp"

namespace charseg {

SynthConfig SynthConfig::defaults() {
  SynthConfig c;
  c.prose_chars.weights = {{U',', 6.0}, {U';', 0.5}, {U'-', 1.0}, {U'\'', 0.5}, {U'(', 0.5},
                           {U':', 0.5}, {U'"', 0.5}};
  c.code_chars.weights = {{U'+', 3.0}, {U'-', 2.0}, {U'*', 1.5}, {U'/', 1.0}, {U'<', 1.5},
                          {U'>', 1.5}, {U'%', 0.5}, {U'&', 0.5}, {U'|', 0.5}, {U'^', 0.2}};
  return c;
}

namespace {

constexpr std::array<std::u32string_view, 126> kProseWords = {
    U"the", U"a", U"to", U"of", U"and", U"in", U"is", U"it", U"that", U"for", U"this", U"with",
    U"on", U"be", U"i", U"but", U"not", U"have", U"when", U"my", U"how", U"can", U"do", U"so",
    U"if", U"what", U"there", U"some", U"all", U"would", U"like", U"just", U"get", U"from",
    U"using", U"way", U"want", U"need", U"use", U"trying", U"tried", U"works", U"work",
    U"doesn't", U"problem", U"question", U"file", U"files", U"value", U"values", U"function",
    U"method", U"methods", U"class", U"classes", U"object", U"objects", U"array", U"list",
    U"string", U"strings", U"number", U"error", U"errors", U"data", U"table", U"database",
    U"server", U"client", U"page", U"user", U"users", U"code", U"example", U"result", U"output",
    U"input", U"loop", U"variable", U"call", U"returns", U"change", U"save", U"load", U"create",
    U"add", U"remove", U"same", U"different", U"new", U"first", U"last", U"each", U"every",
    U"because", U"then", U"only", U"also", U"still", U"here", U"below", U"above", U"following",
    U"something", U"anyone", U"help", U"thanks", U"know", U"seems", U"wrong", U"right",
    U"simple", U"correct", U"application", U"program", U"library", U"version", U"project",
    U"connection", U"connections", U"sources", U"memory", U"time", U"instead", U"inside",
    U"after"};

constexpr std::array<std::u32string_view, 48> kIdentParts = {
    U"get", U"set", U"user", U"name", U"data", U"value", U"item", U"list", U"count", U"index",
    U"node", U"file", U"path", U"buffer", U"result", U"config", U"handler", U"manager",
    U"request", U"response", U"query", U"table", U"row", U"key", U"map", U"size", U"text", U"id",
    U"meta", U"tab", U"share", U"source", U"init", U"load", U"save", U"parse", U"build", U"temp",
    U"max", U"min", U"total", U"str", U"obj", U"conn", U"db", U"url", U"label", U"view"};

constexpr std::array<std::u32string_view, 10> kTypes = {
    U"int", U"string", U"var", U"void", U"bool", U"double", U"List<int>", U"char*", U"auto",
    U"String"};

constexpr std::array<std::u32string_view, 6> kShellCommands = {
    U"sudo apt-get install", U"pip install", U"npm install", U"git checkout", U"cd", U"ls -la"};

constexpr std::array<std::u32string_view, 8> kPackages = {
    U"com", U"org", U"java", U"net", U"app", U"util", U"core", U"io"};

void check_distribution(const CharDistribution& d, const char* name) {
  double total = 0.0;
  std::size_t positive = 0;
  for (const auto& [c, w] : d.weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw InputError(std::string("synthetic config: negative or non-finite weight in ") + name);
    }
    total += w;
    if (w > 0.0) ++positive;
  }
  if (total <= 0.0 || positive < 2) {
    throw InputError(std::string("synthetic config: degenerate distribution ") + name +
                     " (needs at least two characters with positive mass)");
  }
}

class DocumentWriter {
 public:
  DocumentWriter(const SynthConfig& config, Rng& rng) : cfg_(config), rng_(rng) {}

  MarkedDocument build(std::string id) {
    doc_ = {};
    doc_.id = std::move(id);
    const std::size_t paragraphs = 1 + rng_.below(4);
    std::size_t blocks = 0;
    if (rng_.bernoulli(cfg_.block_rate)) blocks = rng_.bernoulli(0.3) ? 2 : 1;

    // Pick paragraph slots after which a block follows; distinct when possible.
    std::vector<bool> block_after(paragraphs, false);
    for (std::size_t b = 0; b < blocks; ++b) {
      std::size_t slot = rng_.below(paragraphs);
      for (std::size_t tries = 0; block_after[slot] && tries < paragraphs; ++tries) {
        slot = (slot + 1) % paragraphs;
      }
      block_after[slot] = true;
    }
    // Paragraphs and blocks share one separator distribution, so a line
    // break alone says nothing about what follows.
    for (std::size_t p = 0; p < paragraphs; ++p) {
      if (p) separator();
      paragraph(block_after[p]);
      if (block_after[p]) {
        separator();
        code_block();
      }
    }
    return std::move(doc_);
  }

 private:
  void put(std::u32string_view s) { doc_.text.append(s); }
  void put(char32_t c) { doc_.text.push_back(c); }

  template <std::size_t N>
  std::u32string_view pick(const std::array<std::u32string_view, N>& words) {
    return words[rng_.below(N)];
  }

  char32_t draw(const CharDistribution& d) {
    double total = 0.0;
    for (const auto& entry : d.weights) total += entry.second;
    double u = rng_.uniform() * total;
    for (const auto& [c, w] : d.weights) {
      if (u < w) return c;
      u -= w;
    }
    return d.weights.back().first;
  }

  std::u32string identifier() {
    std::u32string id(pick(kIdentParts));
    const bool snake = rng_.bernoulli(0.3);
    const std::size_t parts = rng_.below(3);
    for (std::size_t i = 0; i < parts; ++i) {
      std::u32string part(pick(kIdentParts));
      if (snake) {
        id.push_back(U'_');
      } else {
        part[0] = static_cast<char32_t>(part[0] - U'a' + U'A');
      }
      id += part;
    }
    if (rng_.bernoulli(0.15)) id += number();
    return id;
  }

  std::u32string number() {
    const std::uint64_t n = rng_.below(rng_.bernoulli(0.5) ? 10 : 100000);
    std::u32string s;
    for (char c : std::to_string(n)) s.push_back(static_cast<char32_t>(c));
    return s;
  }

  std::u32string prose_words(std::size_t lo, std::size_t hi) {
    std::u32string s;
    const std::size_t n = lo + rng_.below(hi - lo + 1);
    for (std::size_t i = 0; i < n; ++i) {
      if (i) s.push_back(U' ');
      s += pick(kProseWords);
    }
    return s;
  }

  std::u32string inline_token() {
    switch (rng_.below(5)) {
      case 0: return identifier() + U"()";
      case 1: return identifier() + U"." + identifier();
      case 2: return std::u32string(pick(kTypes));
      case 3: return identifier() + U"[" + number() + U"]";
      default: return identifier();
    }
  }

  void sentence(bool before_block) {
    const std::size_t n = 5 + rng_.below(12);
    const std::size_t inline_at = rng_.bernoulli(cfg_.inline_rate) ? rng_.below(n) : n;
    for (std::size_t i = 0; i < n; ++i) {
      if (i) put(U' ');
      if (i == inline_at) {
        const std::u32string tok = inline_token();
        if (rng_.bernoulli(cfg_.inline_mark_rate)) {
          const std::size_t start = doc_.text.size();
          put(tok);
          doc_.segments.push_back({start, doc_.text.size(), SegmentLabel::Inline});
        } else {
          put(tok);
        }
        continue;
      }
      std::u32string w(pick(kProseWords));
      if (i == 0 && rng_.bernoulli(0.7) && w[0] >= U'a' && w[0] <= U'z') {
        w[0] = static_cast<char32_t>(w[0] - U'a' + U'A');
      }
      put(w);
      if (i + 1 < n && rng_.bernoulli(0.08)) put(draw(cfg_.prose_chars));
    }
    put(before_block && rng_.bernoulli(0.6) ? U':' : (rng_.bernoulli(0.8) ? U'.' : U'?'));
  }

  void separator() { put(rng_.bernoulli(0.5) ? U"\n" : U"\n\n"); }

  void paragraph(bool before_block) {
    if (rng_.bernoulli(0.15)) {
      list(before_block);
      return;
    }
    const std::size_t n = 1 + rng_.below(3);
    for (std::size_t i = 0; i < n; ++i) {
      if (i) put(rng_.bernoulli(0.2) ? U'\n' : U' ');
      sentence(before_block && i + 1 == n);
    }
  }

  void list(bool before_block) {
    sentence(false);
    const std::size_t items = 2 + rng_.below(3);
    const bool numbered = rng_.bernoulli(0.4);
    for (std::size_t i = 0; i < items; ++i) {
      put(U'\n');
      if (numbered) {
        put(static_cast<char32_t>(U'1' + i));
        put(U". ");
      } else {
        put(U"- ");
      }
      put(prose_words(2, 7));
      if (rng_.bernoulli(cfg_.inline_rate)) {
        put(U' ');
        put(inline_token());
      }
    }
    if (before_block) put(U':');
  }

  std::u32string expression(int depth = 0) {
    switch (rng_.below(depth > 1 ? 3 : 6)) {
      case 0: return identifier();
      case 1: return number();
      case 2: return U"\"" + prose_words(1, 4) + U"\"";
      case 3: return identifier() + U"(" + expression(depth + 1) + U")";
      case 4: return identifier() + U"[" + expression(depth + 1) + U"]";
      default: {
        std::u32string e = expression(depth + 1);
        e += U' ';
        e.push_back(draw(cfg_.code_chars));
        e += U' ';
        return e + expression(depth + 1);
      }
    }
  }

  std::u32string code_line() {
    switch (rng_.below(15)) {
      case 0: return std::u32string(pick(kTypes)) + U" " + identifier() + U" = " + expression() + U";";
      case 1: return identifier() + U"." + identifier() + U"(" + expression() + U");";
      case 2:
        return U"public " + std::u32string(pick(kTypes)) + U" " + identifier() + U"(" +
               std::u32string(pick(kTypes)) + U" " + identifier() + U") {";
      case 3: return U"// " + prose_words(2, 8);
      case 4: return U"print(\"" + prose_words(2, 6) + U"\");";
      case 5: return U"return " + expression() + U";";
      case 6: return U"if (" + expression() + U") {";
      case 7: return U"};";
      case 8: {
        std::u32string cls(pick(kIdentParts));
        cls[0] = static_cast<char32_t>(cls[0] - U'a' + U'A');
        return U"    at " + std::u32string(pick(kPackages)) + U"." + identifier() + U"." + cls +
               U"." + identifier() + U"(" + cls + U".java:" + number() + U")";
      }
      case 9: return U"Error: " + prose_words(3, 7);
      case 11: return U"$ " + std::u32string(pick(kShellCommands)) + U" " + identifier();
      case 12:
        return U"SELECT " + identifier() + U", " + identifier() + U" FROM " + identifier() +
               U" WHERE " + identifier() + U" = " + number();
      case 13: return prose_words(2, 6);
      case 14: {
        const std::u32string tag = identifier();
        return U"<" + tag + U">" + prose_words(1, 3) + U"</" + tag + U">";
      }
      default: return identifier() + U" = " + expression() + U";";
    }
  }

  void code_block() {
    const std::size_t start = doc_.text.size();
    const std::size_t lines = 1 + rng_.below(7);
    const std::u32string indent = rng_.bernoulli(0.5) ? U"    " : U"";
    for (std::size_t i = 0; i < lines; ++i) {
      if (i) put(U'\n');
      if (i && rng_.bernoulli(0.1)) put(U'\n');
      put(indent);
      put(code_line());
    }
    doc_.segments.push_back({start, doc_.text.size(), SegmentLabel::Block});
  }

  const SynthConfig& cfg_;
  Rng& rng_;
  MarkedDocument doc_;
};

}  // namespace

std::vector<MarkedDocument> generate_synthetic(const SynthConfig& config, std::uint64_t seed) {
  for (double r : {config.block_rate, config.inline_rate, config.inline_mark_rate}) {
    if (!(r >= 0.0 && r <= 1.0)) throw InputError("synthetic config: rates must lie in [0, 1]");
  }
  check_distribution(config.prose_chars, "prose_chars");
  check_distribution(config.code_chars, "code_chars");

  Rng rng(seed);
  DocumentWriter writer(config, rng);
  std::vector<MarkedDocument> docs;
  docs.reserve(config.n_docs);
  for (std::size_t i = 0; i < config.n_docs; ++i) {
    docs.push_back(writer.build("synth-" + std::to_string(i)));
  }
  return docs;
}

}  // namespace charseg
