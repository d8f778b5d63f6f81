// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion
// numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <unistd.h>

#include "charseg/corpus.hpp"
#include "charseg/crf.hpp"
#include "charseg/embed.hpp"
#include "charseg/eval.hpp"
#include "charseg/features.hpp"
#include "charseg/rng.hpp"
#include "charseg/srn.hpp"
#include "cli.hpp"
#include "test_util.hpp"

using namespace charseg;
using namespace charseg::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Checker {
 public:
  void require(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  Outcome outcome(std::string detail) const {
    if (failed_ == 0) return {true, std::move(detail)};
    std::string msg = std::to_string(failed_) + " check(s) failed";
    for (const auto& f : failures_) msg += "; " + f;
    return {false, msg + " | " + detail};
  }

 private:
  std::size_t failed_ = 0;
  std::vector<std::string> failures_;
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os.setf(std::ios::scientific);
  os.precision(2);
  os << v;
  return os.str();
}

// --- 1: exact fixtures ---------------------------------------------------

Outcome exact_fixtures() {
  Checker c;
  const std::vector<std::string> table = {
      "1:-2=t",        "1:-1=\n",        "1:0=p",          "1:+1=u",      "1:+2=b",      "2:-1,0=\np",
      "2:0,+1=pu",     "3:-1,+1=\npu",   "4:-2,+1=t\npu",  "4:-1,+2=\npub", "5:-2,+2=t\npub"};
  c.require(ngram_features(U"just\npublic", 5) == table, "n-gram table mismatch");

  const auto block = to_bio(parse_markup("just\n<pre><code>public </code></pre>"));
  const auto inl = to_bio(parse_markup("be <code>Blah.A</code>.Ho"));
  const std::vector<std::string> block_tags = {"O", "O", "O", "O", "O", "B-BLOCK", "I-BLOCK",
                                               "I-BLOCK", "I-BLOCK", "I-BLOCK", "I-BLOCK", "I-BLOCK"};
  const std::vector<std::string> inline_tags = {"O", "O", "O", "B-INLINE", "I-INLINE", "I-INLINE",
                                                "I-INLINE", "I-INLINE", "I-INLINE", "O", "O", "O"};
  auto names = [](const LabeledSequence& s) {
    std::vector<std::string> out;
    for (auto t : s.tags) out.emplace_back(to_string(t));
    return out;
  };
  c.require(block.chars == U"just\npublic " && names(block) == block_tags, "block column mismatch");
  c.require(inl.chars == U"be Blah.A.Ho" && names(inl) == inline_tags, "inline column mismatch");

  std::ostringstream bio;
  write_bio(bio, std::vector<LabeledSequence>{block, inl});
  c.require(bio.str().rfind("j\tO\nu\tO\ns\tO\nt\tO\n\\n\tO\np\tB-BLOCK\n", 0) == 0, "BIO dump layout");
  return c.outcome("n-gram table and both BIO columns verbatim");
}

// --- 2: SRN gradient -----------------------------------------------------

Outcome srn_gradient() {
  Checker c;
  const double eps = 1e-5;
  double worst = 0.0, worst_sum = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed * 7919 + 1);
    const std::size_t I = 2 + rng.below(4);
    const std::size_t J = 1 + rng.below(8);
    const std::size_t n = 2 + rng.below(11);
    SrnModel m = random_srn(I, J, seed, 1.0);
    std::vector<std::size_t> window(n);
    for (auto& x : window) x = rng.below(I);
    std::vector<double> init(J);
    for (auto& v : init) v = rng.uniform(0.05, 0.95);
    const Eigen::VectorXd init_vec = Eigen::Map<const Eigen::VectorXd>(init.data(), static_cast<Eigen::Index>(J));
    const SrnGradient g = bptt_gradient(m, window, init_vec);

    for (auto [w, dw] : {std::pair{&m.U, &g.dU}, std::pair{&m.W, &g.dW}, std::pair{&m.V, &g.dV}}) {
      for (Eigen::Index r = 0; r < w->rows(); ++r) {
        for (Eigen::Index col = 0; col < w->cols(); ++col) {
          const double saved = (*w)(r, col);
          (*w)(r, col) = saved + eps;
          const double up = reference_window_loss(m, window, init);
          (*w)(r, col) = saved - eps;
          const double down = reference_window_loss(m, window, init);
          (*w)(r, col) = saved;
          const double err = rel_err((*dw)(r, col), (up - down) / (2 * eps));
          worst = std::max(worst, err);
        }
      }
    }

    HiddenState st{init_vec, 0};
    for (std::size_t x : window) {
      auto [next, y] = forward_step(m, st, x);
      worst_sum = std::max(worst_sum, std::abs(y.sum() - 1.0));
      c.require((next.s.array() > 0.0).all() && (next.s.array() < 1.0).all(),
                "hidden activation outside (0,1) at seed " + std::to_string(seed));
      st = std::move(next);
    }
  }
  c.require(worst <= 1e-4, "max relative gradient error " + sci(worst));
  c.require(worst_sum <= 1e-9, "output sum deviation " + sci(worst_sum));
  return c.outcome("100 fixtures, max rel err " + sci(worst) + ", max |sum-1| " + sci(worst_sum));
}

// --- 3: LM sanity --------------------------------------------------------

Outcome lm_sanity() {
  Checker c;
  auto cyclic = [](std::size_t n) {
    std::u32string s;
    for (std::size_t i = 0; i < n; ++i) s.push_back(i % 2 ? U'b' : U'a');
    return s;
  };
  auto iid = [](std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::u32string s;
    for (std::size_t i = 0; i < n; ++i) s.push_back(U"abcd"[rng.below(4)]);
    return s;
  };
  SrnConfig cyc_cfg;
  cyc_cfg.hidden_units = 4;
  cyc_cfg.seed = 3;
  const std::vector<std::u32string> cyc_train = {cyclic(10000)};
  const std::vector<std::u32string> cyc_valid = {cyclic(1000)};
  const double cyc = perplexity(train_lm(cyc_train, cyc_cfg, cyc_valid), cyc_train);
  c.require(cyc <= 1.05, "cyclic perplexity " + fmt(cyc, 4));

  SrnConfig iid_cfg;
  iid_cfg.hidden_units = 8;
  iid_cfg.seed = 5;
  const std::vector<std::u32string> iid_train = {iid(20000, 1)};
  const std::vector<std::u32string> iid_valid = {iid(2000, 2)};
  const double held = perplexity(train_lm(iid_train, iid_cfg, iid_valid), iid(5000, 3));
  c.require(held >= 3.8 && held <= 4.2, "iid held-out perplexity " + fmt(held, 4));
  return c.outcome("cyclic ppl " + fmt(cyc, 4) + ", iid held-out ppl " + fmt(held, 4));
}

// --- 4: CRF inference and gradient ---------------------------------------

Outcome crf_correctness() {
  Checker c;
  double worst_z = 0.0, worst_marg = 0.0, worst_vit = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::size_t T = 1 + seed % 6;
    const auto fx = random_crf(T, seed, 2.0);
    std::vector<double> scores;
    std::vector<std::vector<std::size_t>> all;
    enumerate_labelings(T, [&](const std::vector<std::size_t>& y) {
      scores.push_back(reference_score(fx.model, fx.rows, y));
      all.push_back(y);
    });
    double mx = -INFINITY;
    for (double s : scores) mx = std::max(mx, s);
    double sum = 0.0;
    for (double s : scores) sum += std::exp(s - mx);
    const double log_z = mx + std::log(sum);

    const Marginals mg = forward_backward(fx.model, fx.rows);
    worst_z = std::max({worst_z, std::abs(mg.log_z - log_z), std::abs(mg.log_z_backward - log_z)});
    std::vector<std::array<double, kNumLabels>> node(T, std::array<double, kNumLabels>{});
    for (std::size_t i = 0; i < all.size(); ++i) {
      for (std::size_t t = 0; t < T; ++t) node[t][all[i][t]] += std::exp(scores[i] - log_z);
    }
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t y = 0; y < kNumLabels; ++y) {
        worst_marg = std::max(worst_marg, std::abs(mg.node[t][y] - node[t][y]));
      }
    }
    // First maximal labeling in lexicographic order is the tie-broken argmax.
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
      if (scores[i] > scores[best] + 1e-12) best = i;
    }
    std::vector<std::size_t> decoded;
    for (auto tag : viterbi_decode(fx.model, fx.rows)) decoded.push_back(tag_index(tag));
    worst_vit = std::max(worst_vit, std::abs(reference_score(fx.model, fx.rows, decoded) - scores[best]));
  }
  c.require(worst_z <= 1e-9, "logZ error " + sci(worst_z));
  c.require(worst_marg <= 1e-9, "marginal error " + sci(worst_marg));
  c.require(worst_vit <= 1e-9, "Viterbi score gap " + sci(worst_vit));

  double worst_grad = 0.0;
  const double eps = 1e-6;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<FeatureSequence> data;
    for (std::uint64_t s = 0; s < 3; ++s) data.push_back(random_crf(3 + (seed + s) % 10, seed * 100 + s).rows);
    CrfModel m = random_crf(1, seed, 0.5).model;
    const Objective obj = loglik_gradient(m, data);
    std::vector<double> w = m.parameters();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + eps;
      m.set_parameters(w);
      const double up = loglik_gradient(m, data).value;
      w[i] = saved - eps;
      m.set_parameters(w);
      const double down = loglik_gradient(m, data).value;
      w[i] = saved;
      m.set_parameters(w);
      worst_grad = std::max(worst_grad, rel_err(obj.gradient[i], (up - down) / (2 * eps), 1e-4));
    }
  }
  c.require(worst_grad <= 1e-4, "gradient rel err " + sci(worst_grad));
  return c.outcome("logZ " + sci(worst_z) + ", marginals " + sci(worst_marg) + ", Viterbi " +
                   sci(worst_vit) + ", gradient rel " + sci(worst_grad));
}

// --- 5: desk-scale replication -------------------------------------------

constexpr std::uint64_t kReplicationSeed = 1;
constexpr std::size_t kReplicationDocs = 1200;  // about 500k characters
constexpr SrnEncoding kReplicationEncoding = SrnEncoding::Rank;

Outcome replication() {
  Checker c;
  SynthConfig synth = SynthConfig::defaults();
  synth.n_docs = kReplicationDocs;
  const auto docs = generate_synthetic(synth, kReplicationSeed);
  std::size_t chars = 0;
  for (const auto& d : docs) chars += d.text.size();
  const CorpusSplits splits = split_corpus(docs, {0.4, 0.4, 0.1, 0.1}, kReplicationSeed);

  std::vector<std::u32string> lm_texts, valid_texts;
  for (const auto& d : splits.lm) lm_texts.push_back(d.text);
  for (const auto& d : splits.dev) valid_texts.push_back(d.text);
  SrnConfig srn;
  srn.hidden_units = 40;
  srn.seed = kReplicationSeed;
  const SrnModel lm = train_lm(lm_texts, srn, valid_texts);

  std::vector<LabeledSequence> train, dev;
  for (const auto& d : splits.train) train.push_back(to_bio(d));
  for (const auto& d : splits.dev) dev.push_back(to_bio(d));
  FeaturizeOptions fopts;
  fopts.top_k = 10;
  fopts.encoding = kReplicationEncoding;
  const std::vector<FeatureSet> sets = {
      {"baseline", [](std::span<const LabeledSequence> s) { return featurize(s, nullptr); }},
      {"augmented", [&](std::span<const LabeledSequence> s) { return featurize(s, &lm, fopts); }}};
  TrainOptions topts;
  topts.seed = kReplicationSeed;
  const CrfTrainer trainer = [&](std::span<const FeatureSequence> data) { return crf_train(data, topts); };
  const std::vector<double> fractions = {12.5, 25, 50, 100};
  const auto points = learning_curve(train, dev, fractions, sets, trainer);

  std::cout << "  corpus " << docs.size() << " documents, " << chars << " characters; LM dev ppl "
            << fmt(perplexity(lm, valid_texts), 3) << "\n";
  std::cout << "  fraction  baseline-F1  augmented-F1   (BLOCK, dev)\n";
  std::string detail;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double base = points[2 * i].report.block.f1;
    const double aug = points[2 * i + 1].report.block.f1;
    std::cout << "  " << fmt(fractions[i], 1) << "%      " << fmt(base, 2) << "        " << fmt(aug, 2) << "\n";
    c.require(aug > base, "(a) augmented " + fmt(aug, 2) + " <= baseline " + fmt(base, 2) + " at " +
                              fmt(fractions[i], 1) + "%");
    detail += (i ? ", " : "") + fmt(fractions[i], 1) + "%: " + fmt(base, 2) + "/" + fmt(aug, 2);
  }
  const double aug25 = points[3].report.block.f1;
  const double base100 = points[6].report.block.f1;
  c.require(aug25 >= base100, "(b) augmented@25% " + fmt(aug25, 2) + " < baseline@100% " + fmt(base100, 2));
  return c.outcome("baseline/augmented BLOCK F1 " + detail);
}

// --- 6: end-to-end determinism -------------------------------------------

Outcome determinism() {
  Checker c;
  const fs::path root = fs::temp_directory_path() / ("charseg-accept-" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string config = (root / "experiment.ini").string();
  std::ofstream(config) << "[experiment]\nseed = 11\n"
                        << "[corpus]\ndocs = 150\n"
                        << "[srn]\nhidden = 16\nmax_iterations = 4\n"
                        << "[embed]\ntopk = 10\n"
                        << "[crf]\nmax_iterations = 60\n";

  auto pipeline = [&](const fs::path& dir) {
    auto p = [&](const std::string& name) { return (dir / name).string(); };
    const std::vector<std::vector<std::string>> steps = {
        {"synth", "--config", config, "--out", p("corpus.jsonl")},
        {"ingest", p("corpus.jsonl"), "--config", config, "--out", p("data")},
        {"train-lm", p("data/lm.bio"), "--valid", p("data/dev.bio"), "--config", config, "--out", p("lm.srn")},
        {"featurize", p("data/train.bio"), "--feature-set", "augmented", "--model", p("lm.srn"), "--config",
         config, "--out", p("train.feat")},
        {"featurize", p("data/dev.bio"), "--feature-set", "augmented", "--model", p("lm.srn"), "--config",
         config, "--out", p("dev.feat")},
        {"train-crf", p("train.feat"), "--config", config, "--out", p("labeler.crf")},
        {"evaluate", p("dev.feat"), "--model", p("labeler.crf"), "--config", config, "--out",
         p("report.txt"), "--tsv", p("report.tsv")},
    };
    std::string summaries;
    for (const auto& args : steps) {
      std::ostringstream out, err;
      const int code = cli::run(args, out, err);
      c.require(code == 0, args[0] + " exited " + std::to_string(code) + ": " + err.str());
      if (code != 0) break;
      summaries += out.str();
    }
    // Output paths are the only expected difference between runs.
    const std::string prefix = dir.string();
    for (std::size_t pos; (pos = summaries.find(prefix)) != std::string::npos;) {
      summaries.replace(pos, prefix.size(), "<run>");
    }
    return summaries;
  };
  const std::string s1 = pipeline(root / "run1");
  const std::string s2 = pipeline(root / "run2");
  c.require(s1 == s2, "summary lines differ");

  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "run1")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), root / "run1");
    auto slurp = [](const fs::path& p) {
      std::ifstream in(p, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      return ss.str();
    };
    c.require(fs::exists(root / "run2" / rel) && slurp(entry.path()) == slurp(root / "run2" / rel),
              rel.string() + " differs");
    ++compared;
  }
  c.require(compared >= 12, "expected at least 12 artifacts, found " + std::to_string(compared));
  fs::remove_all(root);
  return c.outcome(std::to_string(compared) + " artifacts byte-identical across two runs");
}

// --- 7: serialization ----------------------------------------------------

Outcome serialization() {
  Checker c;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SrnModel m = random_srn(2 + seed % 7, 1 + seed % 9, seed, 5.0);
    m.U(0, 0) = std::nextafter(0.0, 1.0);  // subnormal survives
    std::ostringstream a;
    write_model(a, m);
    std::istringstream in(a.str());
    std::ostringstream b;
    write_model(b, read_model(in));
    c.require(a.str() == b.str(), "SRN bytes differ at seed " + std::to_string(seed));
  }

  std::vector<FeatureSequence> data;
  for (std::uint64_t s = 0; s < 10; ++s) data.push_back(random_crf(4 + s, 900 + s).rows);
  data[0][0].features.push_back("tab\there\\back\nslash é");
  TrainOptions opt;
  opt.max_iterations = 30;
  const CrfModel crf = crf_train(data, opt);
  std::ostringstream a;
  write_crf(a, crf);
  std::istringstream in(a.str());
  std::ostringstream b;
  write_crf(b, read_crf(in));
  c.require(a.str() == b.str(), "CRF bytes differ");
  return c.outcome("20 SRN models and a trained CRF round-trip bit-exactly");
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"exact fixtures", exact_fixtures},
      {"SRN gradient and output invariants", srn_gradient},
      {"LM sanity", lm_sanity},
      {"CRF inference and gradient", crf_correctness},
      {"desk-scale replication", replication},
      {"end-to-end determinism", determinism},
      {"model serialization", serialization},
  };
  // Wall-clock budgets in seconds.
  const std::vector<double> budget = {1, 30, 120, 60, 1800, 600, 60};

  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(static_cast<std::size_t>(std::stoul(argv[i])));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const std::size_t id = i + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > budget[i]) {
      o.pass = false;
      o.detail += " | over time budget " + fmt(budget[i], 0) + " s";
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << ", "
              << fmt(secs, 2) << " s): " << o.detail << std::endl;
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
