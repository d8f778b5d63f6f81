#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"

#include "charseg/corpus.hpp"
#include "charseg/error.hpp"
#include "charseg/eval.hpp"
#include "charseg/rng.hpp"
#include "test_util.hpp"

using namespace charseg;
using charseg::testing::U32;

namespace {

std::vector<BioTag> tags_of(std::initializer_list<const char*> names) {
  std::vector<BioTag> out;
  for (const char* n : names) out.push_back(*parse_tag(n));
  return out;
}

MarkedDocument random_document(Rng& rng, std::size_t id) {
  MarkedDocument doc;
  doc.id = "doc" + std::to_string(id);
  const std::u32string alphabet = U"ab <>&\n\t\\{};x¶é";
  const std::size_t n = rng.below(40);
  for (std::size_t i = 0; i < n; ++i) doc.text.push_back(alphabet[rng.below(alphabet.size())]);
  std::size_t pos = 0;
  while (pos < n) {
    pos += rng.below(6);
    if (pos >= n) break;
    const std::size_t len = 1 + rng.below(std::min<std::size_t>(8, n - pos));
    doc.segments.push_back({pos, pos + len, rng.bernoulli(0.5) ? SegmentLabel::Block : SegmentLabel::Inline});
    pos += len;
  }
  return doc;
}

}  // namespace

TEST_CASE("parse_markup extracts inline segments over post-removal offsets") {
  const auto doc = parse_markup("be <code>Blah.A</code>.");
  CHECK(doc.text == U"be Blah.A.");
  REQUIRE(doc.segments.size() == 1);
  CHECK(doc.segments[0] == Segment{3, 9, SegmentLabel::Inline});
}

TEST_CASE("parse_markup trivial inputs") {
  const auto empty = parse_markup("");
  CHECK(empty.text.empty());
  CHECK(empty.segments.empty());

  const auto block = parse_markup("<pre><code>x</code></pre>");
  CHECK(block.text == U"x");
  REQUIRE(block.segments.size() == 1);
  CHECK(block.segments[0] == Segment{0, 1, SegmentLabel::Block});
}

TEST_CASE("parse_markup decodes entities and keeps stray angle brackets") {
  const auto doc = parse_markup("a &lt; b <code>x &amp;&amp; y</code> c > d");
  CHECK(doc.text == U"a < b x && y c > d");
  REQUIRE(doc.segments.size() == 1);
  CHECK(doc.segments[0] == Segment{6, 12, SegmentLabel::Inline});
}

TEST_CASE("parse_markup rejects malformed markup with the byte offset") {
  auto message = [](std::string_view raw) {
    try {
      parse_markup(raw);
    } catch (const InputError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message("ab <code>x").find("offset 3") != std::string::npos);
  CHECK(message("x</code>").find("offset 1") != std::string::npos);
  CHECK(message("<code>a<code>b</code></code>").find("offset 7") != std::string::npos);
  CHECK(message("<pre><code>a<code>b</code></code></pre>").find("nested") != std::string::npos);
  CHECK(message("<pre><code>a</code>").find("offset") != std::string::npos);
  CHECK(message("<pre>a</pre>").find("offset 0") != std::string::npos);
  CHECK(message("<code></code>").find("empty") != std::string::npos);
}

TEST_CASE("to_bio reproduces the block example column") {
  MarkedDocument doc{"fig", U"just\npublic ", {{5, 12, SegmentLabel::Block}}};
  const auto seq = to_bio(doc);
  CHECK(seq.tags == tags_of({"O", "O", "O", "O", "O", "B-BLOCK", "I-BLOCK", "I-BLOCK", "I-BLOCK",
                             "I-BLOCK", "I-BLOCK", "I-BLOCK"}));
  CHECK(is_well_formed(seq));
}

TEST_CASE("to_bio trivial cases") {
  CHECK(to_bio(MarkedDocument{}).tags.empty());
  MarkedDocument adj{"adj", U"abcd", {{0, 2, SegmentLabel::Block}, {2, 4, SegmentLabel::Block}}};
  CHECK(to_bio(adj).tags == tags_of({"B-BLOCK", "I-BLOCK", "B-BLOCK", "I-BLOCK"}));
}

TEST_CASE("is_well_formed flags dangling inside tags") {
  CHECK_FALSE(is_well_formed({U"ab", tags_of({"O", "I-BLOCK"})}));
  CHECK_FALSE(is_well_formed({U"ab", tags_of({"B-INLINE", "I-BLOCK"})}));
  CHECK_FALSE(is_well_formed({U"ab", tags_of({"O"})}));
  CHECK(is_well_formed({U"ab", tags_of({"B-INLINE", "I-INLINE"})}));
}

TEST_CASE("build_vocab lists characters in first-occurrence order plus UNK") {
  std::vector<std::u32string> texts = {U"ab", U"ba"};
  const auto v = build_vocab(texts);
  CHECK(v.chars() == std::vector<char32_t>{U'a', U'b'});
  CHECK(v.size() == 3);
  CHECK(v.unk() == 2);
  CHECK(v.index_of(U'z') == v.unk());

  std::vector<std::u32string> one = {U"a"};
  CHECK(build_vocab(one).size() == 2);
  std::vector<std::u32string> rep = {U"abcabcabcabc"};
  CHECK(build_vocab(rep).size() == 4);

  std::vector<std::u32string> empty = {U"", U""};
  CHECK_THROWS_AS(build_vocab(empty), InputError);
  CHECK(build_vocab(texts) == build_vocab(texts));
}

TEST_CASE("split_corpus partitions by characters and is seeded") {
  std::vector<MarkedDocument> docs;
  for (int i = 0; i < 100; ++i) docs.push_back({"d" + std::to_string(i), U"0123456789", {}});
  const auto a = split_corpus(docs, {0.4, 0.4, 0.1, 0.1}, 7);
  CHECK(a.lm.size() == 40);
  CHECK(a.train.size() == 40);
  CHECK(a.dev.size() == 10);
  CHECK(a.test.size() == 10);
  CHECK(a.char_counts() == std::array<std::size_t, 4>{400, 400, 100, 100});

  const auto b = split_corpus(docs, {0.4, 0.4, 0.1, 0.1}, 7);
  CHECK(a.lm == b.lm);
  CHECK(a.train == b.train);
  CHECK(a.dev == b.dev);
  CHECK(a.test == b.test);

  std::set<std::string> ids;
  for (const auto* part : {&a.lm, &a.train, &a.dev, &a.test}) {
    for (const auto& d : *part) CHECK(ids.insert(d.id).second);
  }
  CHECK(ids.size() == 100);

  const auto c = split_corpus(docs, {0.4, 0.4, 0.1, 0.1}, 8);
  CHECK_FALSE(c.lm == a.lm);

  docs.resize(3);
  CHECK_THROWS_AS(split_corpus(docs, {0.4, 0.4, 0.1, 0.1}, 7), InputError);
  CHECK_THROWS_AS(split_corpus(docs, {0.5, 0.5, 0.1, 0.1}, 7), ContractError);
}

TEST_CASE("generate_synthetic honours zero rates and seeds") {
  auto cfg = SynthConfig::defaults();
  cfg.n_docs = 50;
  cfg.block_rate = 0.0;
  cfg.inline_rate = 0.0;
  for (const auto& d : generate_synthetic(cfg, 3)) CHECK(d.segments.empty());

  cfg = SynthConfig::defaults();
  cfg.n_docs = 30;
  std::ostringstream a, b;
  const auto da = generate_synthetic(cfg, 11);
  const auto db = generate_synthetic(cfg, 11);
  write_jsonl(a, da);
  write_jsonl(b, db);
  CHECK(a.str() == b.str());
  for (const auto& d : da) CHECK_NOTHROW(validate(d));
}

TEST_CASE("generate_synthetic block rate matches its binomial expectation") {
  auto cfg = SynthConfig::defaults();
  cfg.n_docs = 1000;
  cfg.block_rate = 0.3;
  std::size_t with_block = 0;
  for (const auto& d : generate_synthetic(cfg, 5)) {
    bool any = false;
    for (const auto& s : d.segments) any = any || s.label == SegmentLabel::Block;
    with_block += any ? 1 : 0;
  }
  // Binomial(1000, 0.3) has a standard deviation of about 0.0145 in the
  // fraction; 0.05 is more than three of them.
  CHECK(std::abs(static_cast<double>(with_block) / 1000.0 - 0.3) <= 0.05);
}

TEST_CASE("generate_synthetic rejects degenerate configurations") {
  auto cfg = SynthConfig::defaults();
  cfg.code_chars.weights = {{U';', 1.0}};
  CHECK_THROWS_AS(generate_synthetic(cfg, 1), InputError);
  cfg = SynthConfig::defaults();
  cfg.prose_chars.weights = {{U',', 0.0}, {U'.', 0.0}};
  CHECK_THROWS_AS(generate_synthetic(cfg, 1), InputError);
  cfg = SynthConfig::defaults();
  cfg.block_rate = 1.5;
  CHECK_THROWS_AS(generate_synthetic(cfg, 1), InputError);
}

TEST_CASE("markup round trip, BIO length and segment recovery over random documents") {
  Rng rng(2024);
  for (std::size_t i = 0; i < 300; ++i) {
    const MarkedDocument doc = random_document(rng, i);
    const MarkedDocument back = parse_markup(serialize_markup(doc), doc.id);
    CHECK(back == doc);
    const auto seq = to_bio(doc);
    CHECK(seq.size() == doc.text.size());
    CHECK(is_well_formed(seq));
    CHECK(extract_segments(seq.tags) == doc.segments);
  }
}

TEST_CASE("BIO dump escapes control characters and round-trips") {
  std::vector<LabeledSequence> seqs = {
      to_bio(MarkedDocument{"a", U"just\npublic ", {{5, 12, SegmentLabel::Block}}}),
      LabeledSequence{},
      to_bio(MarkedDocument{"b", U"x\t\\y", {{1, 3, SegmentLabel::Inline}}}),
  };
  std::ostringstream os;
  write_bio(os, seqs);
  CHECK(os.str().find("\\n\tO\n") != std::string::npos);
  CHECK(os.str().find("\\t\tB-INLINE\n") != std::string::npos);
  CHECK(os.str().find("\\\\\tI-INLINE\n") != std::string::npos);
  std::istringstream is(os.str());
  CHECK(read_bio(is) == seqs);

  std::istringstream bad("a\tX-BLOCK\n");
  CHECK_THROWS_AS(read_bio(bad), InputError);
}

TEST_CASE("read_documents handles directories and JSON lines") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "charseg_read_docs";
  fs::remove_all(dir);
  fs::create_directories(dir / "docs");
  std::ofstream(dir / "docs" / "b.txt") << "be <code>Blah.A</code>.Ho";
  std::ofstream(dir / "docs" / "a.txt") << "just\n<pre><code>public </code></pre>";
  const auto docs = read_documents(dir / "docs");
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].id == "a.txt");
  CHECK(docs[1].segments[0] == Segment{3, 9, SegmentLabel::Inline});

  std::ofstream(dir / "c.jsonl") << R"({"id": "x", "body": "<code>k</code>"})" << "\n\n"
                                 << R"({"id": 7, "body": "plain"})" << "\n";
  const auto jl = read_documents(dir / "c.jsonl");
  REQUIRE(jl.size() == 2);
  CHECK(jl[0].id == "x");
  CHECK(jl[1].id == "7");

  std::ofstream(dir / "bad.jsonl") << R"({"id": "x", "body": "<code>k"})" << "\n";
  CHECK_THROWS_AS(read_documents(dir / "bad.jsonl"), InputError);
  CHECK_THROWS_AS(read_documents(dir / "missing"), InputError);
  fs::remove_all(dir);
}
