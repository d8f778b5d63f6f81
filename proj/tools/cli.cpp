#include "cli.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "CLI11.hpp"
#include "charseg/error.hpp"
#include "charseg/eval.hpp"

namespace charseg::cli {

namespace fs = std::filesystem;

namespace {

// --- small helpers ---------------------------------------------------------

std::string num(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const std::size_t end = comma == std::string_view::npos ? s.size() : comma;
    std::string item = trim(s.substr(start, end - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(const std::string& where, const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ContractError(where + ": expected a number, got '" + text + "'");
  return v;
}

std::uint64_t parse_unsigned(const std::string& where, const std::string& text) {
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ContractError(where + ": expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& where, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ContractError(where + ": expected true or false, got '" + text + "'");
}

StateReset parse_state_reset(const std::string& where, const std::string& text) {
  if (text == "document") return StateReset::PerDocument;
  if (text == "continuous") return StateReset::Continuous;
  throw ContractError(where + ": expected 'document' or 'continuous', got '" + text + "'");
}

SrnEncoding parse_encoding(const std::string& where, const std::string& text) {
  if (text == "rank") return SrnEncoding::Rank;
  if (text == "unit") return SrnEncoding::Unit;
  if (text == "active") return SrnEncoding::Active;
  throw ContractError(where + ": expected 'rank', 'unit' or 'active', got '" + text + "'");
}

std::vector<double> parse_fractions(const std::string& where, const std::vector<std::string>& items) {
  std::vector<double> out;
  for (const auto& item : items) {
    const double f = parse_double(where, item);
    if (!(f > 0.0 && f <= 100.0)) throw ContractError(where + ": fractions must lie in (0, 100]");
    if (!out.empty() && f <= out.back()) throw ContractError(where + ": fractions must ascend");
    out.push_back(f);
  }
  if (out.empty()) throw ContractError(where + ": no fractions given");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path);
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw InputError("write failed: " + path);
}

bool is_bio(const std::string& path) { return fs::path(path).extension() == ".bio"; }

/// Labeled sequences from a BIO dump or from marked-up documents.
std::vector<LabeledSequence> read_sequences(const std::string& path) {
  if (is_bio(path)) {
    auto in = open_in(path);
    return read_bio(in);
  }
  std::vector<LabeledSequence> out;
  for (const auto& doc : read_documents(path)) out.push_back(to_bio(doc));
  return out;
}

std::vector<std::u32string> read_texts(const std::string& path) {
  std::vector<std::u32string> out;
  for (auto& seq : read_sequences(path)) {
    if (!seq.chars.empty()) out.push_back(std::move(seq.chars));
  }
  return out;
}

std::vector<FeatureSequence> read_feature_file(const std::string& path) {
  auto in = open_in(path);
  return read_features(in);
}

void check_vocabulary(const SrnModel& model, std::span<const std::u32string> texts, double max_rate) {
  std::size_t total = 0, unknown = 0;
  for (const auto& t : texts) {
    total += t.size();
    for (char32_t c : t) unknown += model.vocab.contains(c) ? 0 : 1;
  }
  if (total > 0 && static_cast<double>(unknown) > max_rate * static_cast<double>(total)) {
    throw VocabError("vocabulary mismatch: " + std::to_string(unknown) + " of " +
                     std::to_string(total) + " characters are unknown to the language model");
  }
}

std::size_t char_count(std::span<const LabeledSequence> seqs) {
  std::size_t n = 0;
  for (const auto& s : seqs) n += s.size();
  return n;
}

std::string percent_encode(std::string_view s) {
  std::string out;
  for (unsigned char c : s) {
    if (c <= ' ' || c == '=' || c == '%' || c == 0x7f) {
      char buf[4];
      std::snprintf(buf, sizeof buf, "%%%02X", c);
      out += buf;
    } else {
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

std::optional<std::string> percent_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '%') {
      out.push_back(s[i]);
      continue;
    }
    if (i + 2 >= s.size()) return std::nullopt;
    unsigned v = 0;
    const auto [ptr, ec] = std::from_chars(s.data() + i + 1, s.data() + i + 3, v, 16);
    if (ec != std::errc() || ptr != s.data() + i + 3) return std::nullopt;
    out.push_back(static_cast<char>(v));
    i += 2;
  }
  return out;
}

// --- config file -----------------------------------------------------------

void apply_setting(ExperimentConfig& c, const std::string& section, const std::string& key,
                   const std::vector<std::string>& values) {
  const std::string where = "config [" + section + "] " + key;
  std::string joined;
  for (const auto& v : values) joined += (joined.empty() ? "" : ",") + v;
  const std::string v = trim(joined);
  auto size = [&] { return static_cast<std::size_t>(parse_unsigned(where, v)); };
  auto real = [&] { return parse_double(where, v); };

  if (section == "experiment") {
    if (key == "seed") return void(c.seed = parse_unsigned(where, v));
  } else if (section == "corpus") {
    if (key == "split") {
      const auto items = split_list(v);
      if (items.size() != 4) throw ContractError(where + ": expected four ratios");
      for (std::size_t i = 0; i < 4; ++i) c.split[i] = parse_double(where, items[i]);
      return;
    }
    if (key == "docs") return void(c.synth.n_docs = size());
    if (key == "block_rate") return void(c.synth.block_rate = real());
    if (key == "inline_rate") return void(c.synth.inline_rate = real());
    if (key == "inline_mark_rate") return void(c.synth.inline_mark_rate = real());
  } else if (section == "srn") {
    if (key == "hidden") return void(c.srn.hidden_units = size());
    if (key == "bptt") return void(c.srn.bptt_steps = size());
    if (key == "learning_rate") return void(c.srn.initial_learning_rate = real());
    if (key == "halving_threshold") return void(c.srn.lr_halving_threshold = real());
    if (key == "max_iterations") return void(c.srn.max_iterations = size());
    if (key == "init_scale") return void(c.srn.init_scale = real());
    if (key == "gradient_clip") return void(c.srn.gradient_clip = real());
    if (key == "state_reset") return void(c.srn.state_reset = parse_state_reset(where, v));
  } else if (section == "embed") {
    if (key == "topk") return void(c.features.top_k = size());
    if (key == "encoding") return void(c.features.encoding = parse_encoding(where, v));
    if (key == "max_oov_rate") return void(c.features.max_oov_rate = real());
    if (key == "stride") return void(c.neighbors.stride = size());
    if (key == "search_prefix") return void(c.neighbors.search_prefix = size());
    if (key == "neighbors") return void(c.neighbors.count = size());
    if (key == "context") return void(c.neighbors.context_width = size());
  } else if (section == "crf") {
    if (key == "sigma") return void(c.crf.l2_sigma = real());
    if (key == "max_iterations") return void(c.crf.max_iterations = size());
    if (key == "tolerance") return void(c.crf.convergence_tol = real());
    if (key == "memory") return void(c.crf.lbfgs_memory = size());
    if (key == "threads") return void(c.crf.threads = size());
  } else if (section == "eval") {
    if (key == "fractions") return void(c.fractions = parse_fractions(where, split_list(v)));
    if (key == "concurrent") return void(c.concurrent_curve = parse_bool(where, v));
  }
  throw ContractError("unknown config setting [" + section + "] " + key);
}

// --- commands --------------------------------------------------------------

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::string input;
  std::string model;
  std::string valid;
  std::string trace;
  std::string tsv;
  std::string train;
  std::string dev;
  std::vector<std::string> lms;
  std::size_t hidden = 0;
  std::size_t bptt = 0;
  std::size_t topk = 0;
  std::size_t docs = 0;
  std::vector<double> fractions;
  std::string feature_set = "baseline";
  std::string encoding;
};

struct Invocation {
  std::ostream& out;
  std::ostream& err;
  const Flags& flags;
  ExperimentConfig cfg;
};

void emit(Invocation& inv, Summary s) { inv.out << s.format() << '\n'; }

void cmd_synth(Invocation& inv) {
  const auto docs = generate_synthetic(inv.cfg.synth, inv.cfg.seed);
  auto os = open_out(inv.flags.out);
  write_jsonl(os, docs);
  finish(os, inv.flags.out);
  std::size_t chars = 0;
  for (const auto& d : docs) chars += d.text.size();
  inv.err << "generated " << docs.size() << " documents, " << chars << " characters\n";
  emit(inv, {"synth", {{"documents", std::to_string(docs.size())},
                       {"characters", std::to_string(chars)},
                       {"out", inv.flags.out}}});
}

void cmd_ingest(Invocation& inv) {
  const auto docs = read_documents(inv.flags.input);
  const fs::path dir(inv.flags.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create " + dir.string() + ": " + ec.message());

  auto write_split = [&](const std::string& name, std::span<const MarkedDocument> part) {
    std::vector<LabeledSequence> seqs;
    for (const auto& d : part) seqs.push_back(to_bio(d));
    const std::string path = (dir / (name + ".bio")).string();
    auto os = open_out(path);
    write_bio(os, seqs);
    finish(os, path);
  };

  std::ostringstream manifest;
  manifest << "split\tdocuments\tcharacters\tids\n";
  auto manifest_row = [&](const std::string& name, std::span<const MarkedDocument> part) {
    std::size_t chars = 0;
    std::string ids;
    for (const auto& d : part) {
      chars += d.text.size();
      ids += (ids.empty() ? "" : ",") + d.id;
    }
    manifest << name << '\t' << part.size() << '\t' << chars << '\t' << ids << '\n';
    return chars;
  };

  write_split("all", docs);
  const std::size_t chars = manifest_row("all", docs);
  std::size_t split_count = 0;
  if (docs.size() >= 4) {
    const CorpusSplits splits = split_corpus(docs, inv.cfg.split, inv.cfg.seed);
    const std::array<const std::vector<MarkedDocument>*, 4> parts = {&splits.lm, &splits.train,
                                                                     &splits.dev, &splits.test};
    for (std::size_t i = 0; i < 4; ++i) {
      const std::string name(kSplitNames[i]);
      write_split(name, *parts[i]);
      manifest_row(name, *parts[i]);
    }
    split_count = 4;
  } else {
    inv.err << "fewer than 4 documents; no splits written\n";
  }
  const std::string mpath = (dir / "manifest.tsv").string();
  auto ms = open_out(mpath);
  ms << manifest.str();
  finish(ms, mpath);
  inv.err << "ingested " << docs.size() << " documents, " << chars << " characters\n";
  emit(inv, {"ingest", {{"documents", std::to_string(docs.size())},
                        {"characters", std::to_string(chars)},
                        {"splits", std::to_string(split_count)},
                        {"out", inv.flags.out}}});
}

void cmd_train_lm(Invocation& inv) {
  const auto texts = read_texts(inv.flags.input);
  std::vector<std::u32string> valid;
  if (!inv.flags.valid.empty()) valid = read_texts(inv.flags.valid);
  std::vector<LmIteration> log;
  const SrnModel model = train_lm(texts, inv.cfg.srn, valid, &log);
  for (const auto& it : log) {
    inv.err << "iteration " << it.iteration << "  lr " << it.learning_rate << "  train "
            << num(it.train_entropy) << "  valid " << num(it.valid_entropy)
            << (it.rolled_back ? "  (rolled back)" : "") << '\n';
  }
  save_model(inv.flags.out, model);
  const LmIteration last = log.empty() ? LmIteration{} : log.back();
  emit(inv, {"train-lm", {{"iterations", std::to_string(log.size())},
                          {"hidden", std::to_string(model.hidden_size())},
                          {"vocab", std::to_string(model.input_size())},
                          {"train_entropy", num(last.train_entropy)},
                          {"valid_entropy", num(last.valid_entropy)},
                          {"out", inv.flags.out}}});
}

void cmd_perplexity(Invocation& inv) {
  const SrnModel model = load_model(inv.flags.model);
  const auto texts = read_texts(inv.flags.input);
  if (texts.empty()) throw InputError(inv.flags.input + ": no text");
  check_vocabulary(model, texts, inv.cfg.features.max_oov_rate);
  std::size_t chars = 0;
  for (const auto& t : texts) chars += t.size();
  const double ppl = perplexity(model, texts);
  inv.err << "perplexity " << num(ppl, 4) << " over " << chars << " characters\n";
  emit(inv, {"perplexity", {{"ppl", num(ppl)}, {"characters", std::to_string(chars)}}});
}

void cmd_nn(Invocation& inv) {
  const SrnModel model = load_model(inv.flags.model);
  const auto texts = read_texts(inv.flags.input);
  std::u32string text;
  for (const auto& t : texts) {
    if (!text.empty()) text.push_back(U'\n');
    text += t;
  }
  if (text.empty()) throw InputError(inv.flags.input + ": no text");
  check_vocabulary(model, std::span<const std::u32string>(&text, 1), inv.cfg.features.max_oov_rate);
  const HiddenTrace trace = trace_hidden(model, text);
  const auto queries = nearest_neighbors(trace, inv.cfg.neighbors);
  auto os = open_out(inv.flags.out);
  write_neighbor_report(os, queries, inv.cfg.neighbors.context_width);
  finish(os, inv.flags.out);
  if (!inv.flags.trace.empty()) {
    auto ts = open_out(inv.flags.trace);
    write_trace(ts, model, trace);
    finish(ts, inv.flags.trace);
  }
  inv.err << queries.size() << " queries over " << trace.size() << " positions\n";
  emit(inv, {"nn", {{"queries", std::to_string(queries.size())},
                    {"positions", std::to_string(trace.size())},
                    {"out", inv.flags.out}}});
}

void cmd_featurize(Invocation& inv) {
  const auto seqs = read_sequences(inv.flags.input);
  std::optional<SrnModel> model;
  if (inv.flags.feature_set == "augmented") {
    if (inv.flags.model.empty()) throw ContractError("--feature-set augmented needs --model");
    model = load_model(inv.flags.model);
  } else if (!inv.flags.model.empty()) {
    throw ContractError("--model is only used with --feature-set augmented");
  }
  auto os = open_out(inv.flags.out);
  emit_dataset(os, seqs, model ? &*model : nullptr, inv.cfg.features);
  finish(os, inv.flags.out);
  const std::size_t width = kNgramFeatureCount + (model ? inv.cfg.features.top_k : 0);
  inv.err << "featurized " << seqs.size() << " sequences\n";
  emit(inv, {"featurize", {{"sequences", std::to_string(seqs.size())},
                           {"rows", std::to_string(char_count(seqs))},
                           {"feature_set", inv.flags.feature_set},
                           {"features_per_row", std::to_string(width)},
                           {"out", inv.flags.out}}});
}

void cmd_train_crf(Invocation& inv) {
  const auto data = read_feature_file(inv.flags.input);
  for (const auto& seq : data) {
    for (const auto& row : seq) {
      if (!row.tag) throw InputError(inv.flags.input + ": training rows must carry tags");
    }
  }
  CrfTrainLog log;
  const CrfModel model = crf_train(data, inv.cfg.crf, &log);
  for (std::size_t i = 0; i < log.objective.size(); ++i) {
    inv.err << "step " << i << "  objective " << num(log.objective[i]) << '\n';
  }
  save_crf(inv.flags.out, model);
  emit(inv, {"train-crf", {{"sequences", std::to_string(data.size())},
                           {"features", std::to_string(model.feature_count())},
                           {"iterations", std::to_string(log.iterations)},
                           {"converged", log.converged ? "1" : "0"},
                           {"objective", num(log.objective.empty() ? 0.0 : log.objective.back())},
                           {"out", inv.flags.out}}});
}

void cmd_label(Invocation& inv) {
  const CrfModel model = load_crf(inv.flags.model);
  const auto data = read_feature_file(inv.flags.input);
  auto os = open_out(inv.flags.out);
  std::size_t rows = 0;
  for (const auto& seq : data) {
    for (BioTag t : label(model, seq)) os << to_string(t) << '\n';
    os << '\n';
    rows += seq.size();
  }
  finish(os, inv.flags.out);
  emit(inv, {"label", {{"sequences", std::to_string(data.size())},
                       {"rows", std::to_string(rows)},
                       {"out", inv.flags.out}}});
}

void cmd_evaluate(Invocation& inv) {
  const CrfModel model = load_crf(inv.flags.model);
  const auto data = read_feature_file(inv.flags.input);
  for (const auto& seq : data) {
    for (const auto& row : seq) {
      if (!row.tag) throw InputError(inv.flags.input + ": evaluation rows must carry gold tags");
    }
  }
  const PrfReport report = evaluate(model, data);
  const std::string table = format_report(report);
  inv.err << table;
  if (!inv.flags.out.empty()) {
    auto os = open_out(inv.flags.out);
    os << table;
    finish(os, inv.flags.out);
  }
  if (!inv.flags.tsv.empty()) {
    auto os = open_out(inv.flags.tsv);
    os << format_report_tsv(report);
    finish(os, inv.flags.tsv);
  }
  emit(inv, {"evaluate", {{"block_precision", num(report.block.precision, 2)},
                          {"block_recall", num(report.block.recall, 2)},
                          {"block_f1", num(report.block.f1, 2)},
                          {"inline_f1", num(report.inline_.f1, 2)},
                          {"overall_f1", num(report.overall.f1, 2)}}});
}

void cmd_curve(Invocation& inv) {
  const auto train = read_sequences(inv.flags.train);
  const auto dev = read_sequences(inv.flags.dev);
  std::vector<std::pair<std::string, SrnModel>> lms;
  for (const auto& arg : inv.flags.lms) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size()) {
      throw ContractError("--lm expects NAME=PATH, got '" + arg + "'");
    }
    const std::string name = arg.substr(0, eq);
    if (name == "baseline") throw ContractError("--lm name 'baseline' is reserved");
    for (const auto& [other, m] : lms) {
      if (other == name) throw ContractError("duplicate --lm name '" + name + "'");
    }
    lms.emplace_back(name, load_model(arg.substr(eq + 1)));
  }

  const FeaturizeOptions fopts = inv.cfg.features;
  std::vector<FeatureSet> sets;
  sets.push_back({"baseline", [](std::span<const LabeledSequence> s) { return featurize(s, nullptr); }});
  for (const auto& entry : lms) {
    const SrnModel* m = &entry.second;
    sets.push_back({entry.first, [m, fopts](std::span<const LabeledSequence> s) {
                      return featurize(s, m, fopts);
                    }});
  }
  const TrainOptions topts = inv.cfg.crf;
  const CrfTrainer trainer = [topts](std::span<const FeatureSequence> data) {
    return crf_train(data, topts);
  };
  const auto points = learning_curve(train, dev, inv.cfg.fractions, sets, trainer,
                                     inv.cfg.concurrent_curve);
  const std::string table = format_curve(points);
  inv.err << table;
  auto os = open_out(inv.flags.out);
  os << table;
  finish(os, inv.flags.out);
  emit(inv, {"curve", {{"rows", std::to_string(points.size())},
                       {"feature_sets", std::to_string(sets.size())},
                       {"fractions", std::to_string(inv.cfg.fractions.size())},
                       {"out", inv.flags.out}}});
}

}  // namespace

// --- public ----------------------------------------------------------------

void load_config(const std::string& path, ExperimentConfig& config) {
  if (!fs::is_regular_file(path)) throw InputError("config file not found: " + path);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_file(path);
  } catch (const CLI::Error& e) {
    throw ContractError(path + ": " + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    const std::string section = item.parents.empty() ? "default" : item.parents.front();
    if (item.parents.size() > 1) throw ContractError(path + ": nested section " + item.fullname());
    apply_setting(config, section, item.name, item.inputs);
  }
}

std::string Summary::format() const {
  std::string line = command;
  for (const auto& [k, v] : fields) line += " " + k + "=" + percent_encode(v);
  return line;
}

std::optional<Summary> Summary::parse(std::string_view line) {
  Summary s;
  std::istringstream is{std::string(line)};
  if (!(is >> s.command) || s.command.find('=') != std::string::npos) return std::nullopt;
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0) return std::nullopt;
    auto value = percent_decode(std::string_view(tok).substr(eq + 1));
    if (!value) return std::nullopt;
    s.fields.emplace_back(tok.substr(0, eq), std::move(*value));
  }
  return s;
}

const std::string* Summary::get(std::string_view key) const {
  for (const auto& [k, v] : fields) {
    if (k == key) return &v;
  }
  return nullptr;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Character-level code segment detection toolkit", "charseg"};
  app.require_subcommand(1);
  Flags f;

  std::vector<std::pair<CLI::Option*, std::function<void(ExperimentConfig&)>>> overrides;
  auto common = [&](CLI::App* sub, bool out_required) {
    sub->add_option("--config", f.config, "INI configuration file");
    overrides.emplace_back(sub->add_option("--seed", f.seed, "seed for every stochastic step"),
                           [&](ExperimentConfig& c) { c.seed = f.seed; });
    auto* o = sub->add_option("--out", f.out, "output path");
    if (out_required) o->required();
  };
  auto input = [&](CLI::App* sub) { sub->add_option("input", f.input, "input file or directory")->required(); };
  auto model = [&](CLI::App* sub, bool required) {
    auto* o = sub->add_option("--model", f.model, "model file");
    if (required) o->required();
  };
  auto srn_flags = [&](CLI::App* sub) {
    overrides.emplace_back(sub->add_option("--hidden", f.hidden, "hidden units")->check(CLI::PositiveNumber),
                           [&](ExperimentConfig& c) { c.srn.hidden_units = f.hidden; });
    overrides.emplace_back(sub->add_option("--bptt", f.bptt, "BPTT steps")->check(CLI::PositiveNumber),
                           [&](ExperimentConfig& c) { c.srn.bptt_steps = f.bptt; });
  };
  auto feature_flags = [&](CLI::App* sub) {
    overrides.emplace_back(sub->add_option("--topk", f.topk, "SRN units per position")->check(CLI::PositiveNumber),
                           [&](ExperimentConfig& c) { c.features.top_k = f.topk; });
    overrides.emplace_back(sub->add_option("--encoding", f.encoding, "SRN feature encoding")
                               ->check(CLI::IsMember({"rank", "unit", "active"})),
                           [&](ExperimentConfig& c) {
                             c.features.encoding = parse_encoding("--encoding", f.encoding);
                           });
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic marked-up corpus (JSONL)");
  common(synth, true);
  overrides.emplace_back(synth->add_option("--docs", f.docs, "document count")->check(CLI::PositiveNumber),
                         [&](ExperimentConfig& c) { c.synth.n_docs = f.docs; });

  auto* ingest = app.add_subcommand("ingest", "convert marked-up documents to BIO splits");
  common(ingest, true);
  input(ingest);

  auto* train_lm_cmd = app.add_subcommand("train-lm", "train the character language model");
  common(train_lm_cmd, true);
  input(train_lm_cmd);
  train_lm_cmd->add_option("--valid", f.valid, "held-out text for the learning-rate schedule");
  srn_flags(train_lm_cmd);

  auto* ppl = app.add_subcommand("perplexity", "per-character perplexity of a text");
  common(ppl, false);
  input(ppl);
  model(ppl, true);

  auto* nn = app.add_subcommand("nn", "nearest neighbors of hidden states");
  common(nn, true);
  input(nn);
  model(nn, true);
  nn->add_option("--trace", f.trace, "also write the hidden-state trace");

  auto* feat = app.add_subcommand("featurize", "write a CRF feature file");
  common(feat, true);
  input(feat);
  model(feat, false);
  feat->add_option("--feature-set", f.feature_set, "baseline or augmented")
      ->check(CLI::IsMember({"baseline", "augmented"}));
  feature_flags(feat);

  auto* train_crf_cmd = app.add_subcommand("train-crf", "train the CRF labeler");
  common(train_crf_cmd, true);
  input(train_crf_cmd);

  auto* label_cmd = app.add_subcommand("label", "tag a feature file");
  common(label_cmd, true);
  input(label_cmd);
  model(label_cmd, true);

  auto* eval_cmd = app.add_subcommand("evaluate", "segment precision, recall and F1");
  common(eval_cmd, false);
  input(eval_cmd);
  model(eval_cmd, true);
  eval_cmd->add_option("--tsv", f.tsv, "also write a tab-separated report");

  auto* curve = app.add_subcommand("curve", "learning curve over labeled-data fractions");
  common(curve, true);
  curve->add_option("--train", f.train, "labeled training data")->required();
  curve->add_option("--dev", f.dev, "labeled evaluation data")->required();
  curve->add_option("--lm", f.lms, "NAME=PATH language model for an augmented feature set");
  overrides.emplace_back(curve->add_option("--fractions", f.fractions, "percent of training characters")
                             ->delimiter(','),
                         [&](ExperimentConfig& c) {
                           std::vector<std::string> items;
                           for (double v : f.fractions) items.push_back(num(v, 6));
                           c.fractions = parse_fractions("--fractions", items);
                         });
  feature_flags(curve);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    if (const auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front()) {
      err << sub->help();
    }
    return static_cast<int>(ErrorKind::Usage);
  }

  const std::vector<std::pair<CLI::App*, void (*)(Invocation&)>> commands = {
      {synth, cmd_synth},       {ingest, cmd_ingest},         {train_lm_cmd, cmd_train_lm},
      {ppl, cmd_perplexity},    {nn, cmd_nn},                 {feat, cmd_featurize},
      {train_crf_cmd, cmd_train_crf}, {label_cmd, cmd_label}, {eval_cmd, cmd_evaluate},
      {curve, cmd_curve}};

  try {
    Invocation inv{out, err, f, {}};
    if (!f.config.empty()) load_config(f.config, inv.cfg);
    for (const auto& [opt, apply] : overrides) {
      if (opt->count() > 0) apply(inv.cfg);
    }
    inv.cfg.srn.seed = inv.cfg.seed;
    inv.cfg.crf.seed = inv.cfg.seed;
    inv.cfg.srn.validate();
    for (const auto& [sub, fn] : commands) {
      if (sub->parsed()) {
        fn(inv);
        return 0;
      }
    }
    err << "no command given\n";
    return static_cast<int>(ErrorKind::Usage);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::Io);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace charseg::cli
