#include "charseg/crf.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

#include "charseg/binary_io.hpp"
#include "charseg/error.hpp"
#include "charseg/lbfgs.hpp"

namespace charseg {

constexpr std::size_t L = kNumLabels;

std::optional<std::size_t> CrfModel::find(std::string_view feature) const {
  auto it = index_.find(std::string(feature));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t CrfModel::intern(const std::string& feature) {
  auto [it, inserted] = index_.emplace(feature, names_.size());
  if (inserted) {
    names_.push_back(feature);
    obs_.resize(obs_.size() + L, 0.0);
  }
  return it->second;
}

std::vector<double> CrfModel::parameters() const {
  std::vector<double> p(obs_);
  p.insert(p.end(), trans_.begin(), trans_.end());
  return p;
}

void CrfModel::set_parameters(std::span<const double> params) {
  if (params.size() != parameter_count()) throw ContractError("CRF parameter vector has the wrong size");
  std::copy(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(obs_.size()), obs_.begin());
  std::copy(params.begin() + static_cast<std::ptrdiff_t>(obs_.size()), params.end(), trans_.begin());
}

namespace {

using Row = std::array<double, L>;
using Table = std::array<double, L * L>;

/// Feature ids per position, resolved once against a model.
struct Compiled {
  std::vector<std::vector<std::uint32_t>> ids;
  std::vector<std::uint8_t> gold;  // empty when unlabeled
};

Compiled compile(const CrfModel& model, std::span<const FeatureRow> rows, bool need_gold) {
  Compiled c;
  c.ids.reserve(rows.size());
  for (const auto& row : rows) {
    std::vector<std::uint32_t> ids;
    ids.reserve(row.features.size());
    for (const auto& f : row.features) {
      if (auto i = model.find(f)) ids.push_back(static_cast<std::uint32_t>(*i));
    }
    c.ids.push_back(std::move(ids));
    if (need_gold) {
      if (!row.tag) throw ContractError("CRF likelihood needs labeled rows");
      c.gold.push_back(static_cast<std::uint8_t>(tag_index(*row.tag)));
    }
  }
  return c;
}

void unary_scores(std::span<const double> params, const Compiled& c, std::vector<Row>& unary) {
  unary.assign(c.ids.size(), Row{});
  for (std::size_t t = 0; t < c.ids.size(); ++t) {
    for (std::uint32_t f : c.ids[t]) {
      const double* w = params.data() + static_cast<std::size_t>(f) * L;
      for (std::size_t y = 0; y < L; ++y) unary[t][y] += w[y];
    }
  }
}

/// Forward-backward with per-position normalization of the scaled messages.
void forward_backward_core(const std::vector<Row>& unary, const Table& trans, Marginals& out) {
  const std::size_t T = unary.size();
  Table E;
  for (std::size_t i = 0; i < L * L; ++i) E[i] = std::exp(trans[i]);

  std::vector<Row> psi(T), alpha(T), beta(T);
  std::vector<double> scale(T), shift(T);
  for (std::size_t t = 0; t < T; ++t) {
    shift[t] = *std::max_element(unary[t].begin(), unary[t].end());
    for (std::size_t y = 0; y < L; ++y) psi[t][y] = std::exp(unary[t][y] - shift[t]);
  }

  double log_z = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    double sum = 0.0;
    for (std::size_t y = 0; y < L; ++y) {
      double in = 1.0;
      if (t > 0) {
        in = 0.0;
        for (std::size_t p = 0; p < L; ++p) in += alpha[t - 1][p] * E[p * L + y];
      }
      alpha[t][y] = psi[t][y] * in;
      sum += alpha[t][y];
    }
    scale[t] = sum;
    for (double& a : alpha[t]) a /= sum;
    log_z += std::log(sum) + shift[t];
  }

  beta[T - 1].fill(1.0);
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t y = 0; y < L; ++y) {
      double acc = 0.0;
      for (std::size_t n = 0; n < L; ++n) acc += E[y * L + n] * psi[t + 1][n] * beta[t + 1][n];
      beta[t][y] = acc / scale[t + 1];
    }
  }

  double start = 0.0;
  for (std::size_t y = 0; y < L; ++y) start += psi[0][y] * beta[0][y];
  out.log_z = log_z;
  out.log_z_backward = std::log(start) + shift[0] + (log_z - std::log(scale[0]) - shift[0]);

  out.node.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t y = 0; y < L; ++y) out.node[t][y] = alpha[t][y] * beta[t][y];
  }
  out.edge.resize(T > 0 ? T - 1 : 0);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    for (std::size_t p = 0; p < L; ++p) {
      for (std::size_t y = 0; y < L; ++y) {
        out.edge[t][p * L + y] =
            alpha[t][p] * E[p * L + y] * psi[t + 1][y] * beta[t + 1][y] / scale[t + 1];
      }
    }
  }
}

Table transitions_of(std::span<const double> params, std::size_t obs_size) {
  Table tr;
  std::copy(params.begin() + static_cast<std::ptrdiff_t>(obs_size), params.end(), tr.begin());
  return tr;
}

/// Adds one sequence's log-likelihood and gradient into (value, grad).
void accumulate_sequence(std::span<const double> params, std::size_t obs_size, const Table& trans,
                         const Compiled& c, double& value, std::vector<double>& grad,
                         std::vector<Row>& unary, Marginals& m) {
  if (c.ids.empty()) return;
  unary_scores(params, c, unary);
  forward_backward_core(unary, trans, m);

  double gold_score = 0.0;
  for (std::size_t t = 0; t < c.ids.size(); ++t) {
    const std::size_t g = c.gold[t];
    gold_score += unary[t][g];
    if (t > 0) gold_score += trans[c.gold[t - 1] * L + g];
    for (std::uint32_t f : c.ids[t]) {
      double* gr = grad.data() + static_cast<std::size_t>(f) * L;
      for (std::size_t y = 0; y < L; ++y) gr[y] -= m.node[t][y];
      gr[g] += 1.0;
    }
  }
  double* gt = grad.data() + obs_size;
  for (std::size_t t = 0; t + 1 < c.ids.size(); ++t) {
    for (std::size_t i = 0; i < L * L; ++i) gt[i] -= m.edge[t][i];
    gt[c.gold[t] * L + c.gold[t + 1]] += 1.0;
  }
  value += gold_score - m.log_z;
}

constexpr std::size_t kChunks = 8;

/// Regularized log-likelihood over compiled sequences. Sequences are cut into
/// a fixed number of contiguous chunks whose partial sums are combined in
/// order, which keeps the result independent of the worker count.
double loglik_compiled(std::span<const double> params, std::size_t obs_size,
                       const std::vector<Compiled>& data, double sigma, std::size_t threads,
                       std::vector<double>& grad) {
  const std::size_t P = params.size();
  const Table trans = transitions_of(params, obs_size);
  const std::size_t chunks = std::max<std::size_t>(1, std::min(kChunks, data.size()));
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, chunks);

  grad.assign(P, 0.0);
  double value = 0.0;
  std::vector<std::vector<double>> partial(threads, std::vector<double>(P));
  std::vector<double> partial_value(threads);

  for (std::size_t wave = 0; wave < chunks; wave += threads) {
    const std::size_t width = std::min(threads, chunks - wave);
    auto work = [&](std::size_t slot) {
      const std::size_t chunk = wave + slot;
      const std::size_t lo = chunk * data.size() / chunks;
      const std::size_t hi = (chunk + 1) * data.size() / chunks;
      std::fill(partial[slot].begin(), partial[slot].end(), 0.0);
      partial_value[slot] = 0.0;
      std::vector<Row> unary;
      Marginals m;
      for (std::size_t i = lo; i < hi; ++i) {
        accumulate_sequence(params, obs_size, trans, data[i], partial_value[slot], partial[slot],
                            unary, m);
      }
    };
    if (width == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t s = 0; s < width; ++s) pool.emplace_back(work, s);
      for (auto& th : pool) th.join();
    }
    for (std::size_t s = 0; s < width; ++s) {
      value += partial_value[s];
      for (std::size_t k = 0; k < P; ++k) grad[k] += partial[s][k];
    }
  }

  const double inv_var = 1.0 / (sigma * sigma);
  double norm2 = 0.0;
  for (std::size_t k = 0; k < P; ++k) {
    norm2 += params[k] * params[k];
    grad[k] -= params[k] * inv_var;
  }
  return value - 0.5 * norm2 * inv_var;
}

}  // namespace

Lattice build_lattice(const CrfModel& model, std::span<const FeatureRow> rows) {
  Lattice lat;
  const auto params = model.parameters();
  unary_scores(params, compile(model, rows, false), lat.unary);
  return lat;
}

double score_sequence(const CrfModel& model, std::span<const FeatureRow> rows,
                      std::span<const BioTag> tags) {
  if (rows.size() != tags.size()) {
    throw ContractError("score_sequence: " + std::to_string(rows.size()) + " rows but " +
                        std::to_string(tags.size()) + " tags");
  }
  const Lattice lat = build_lattice(model, rows);
  double s = 0.0;
  for (std::size_t t = 0; t < rows.size(); ++t) {
    s += lat.unary[t][tag_index(tags[t])];
    if (t > 0) s += model.trans(tag_index(tags[t - 1]), tag_index(tags[t]));
  }
  return s;
}

Marginals forward_backward(const CrfModel& model, std::span<const FeatureRow> rows) {
  if (rows.empty()) throw ContractError("forward_backward needs a nonempty sequence");
  const Lattice lat = build_lattice(model, rows);
  Table trans;
  for (std::size_t p = 0; p < L; ++p) {
    for (std::size_t y = 0; y < L; ++y) trans[p * L + y] = model.trans(p, y);
  }
  Marginals m;
  forward_backward_core(lat.unary, trans, m);
  return m;
}

std::vector<BioTag> viterbi_decode(const CrfModel& model, std::span<const FeatureRow> rows) {
  if (rows.empty()) return {};
  const Lattice lat = build_lattice(model, rows);
  const std::size_t T = rows.size();
  std::vector<Row> best(T);
  std::vector<std::array<std::uint8_t, L>> back(T);
  best[0] = lat.unary[0];
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t y = 0; y < L; ++y) {
      std::size_t arg = 0;
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t p = 0; p < L; ++p) {
        const double v = best[t - 1][p] + model.trans(p, y);
        if (v > top) {
          top = v;
          arg = p;
        }
      }
      best[t][y] = top + lat.unary[t][y];
      back[t][y] = static_cast<std::uint8_t>(arg);
    }
  }
  std::size_t y = 0;
  for (std::size_t k = 1; k < L; ++k) {
    if (best[T - 1][k] > best[T - 1][y]) y = k;
  }
  std::vector<BioTag> out(T);
  for (std::size_t t = T; t-- > 0;) {
    out[t] = kAllTags[y];
    if (t > 0) y = back[t][y];
  }
  return out;
}

std::vector<BioTag> label(const CrfModel& model, std::span<const FeatureRow> rows) {
  return viterbi_decode(model, rows);
}

Objective loglik_gradient(const CrfModel& model, std::span<const FeatureSequence> dataset,
                          std::size_t threads) {
  std::vector<Compiled> data;
  data.reserve(dataset.size());
  for (const auto& seq : dataset) data.push_back(compile(model, seq, true));
  const auto params = model.parameters();
  Objective out;
  out.value = loglik_compiled(params, model.feature_count() * L, data, model.l2_sigma, threads,
                              out.gradient);
  return out;
}

CrfModel crf_train(std::span<const FeatureSequence> dataset, const TrainOptions& options,
                   CrfTrainLog* log) {
  if (!(options.l2_sigma > 0.0) || options.max_iterations == 0 || !(options.convergence_tol > 0.0)) {
    throw ContractError("CRF options: sigma, iterations and tolerance must be positive");
  }
  CrfModel model;
  model.l2_sigma = options.l2_sigma;
  std::vector<std::uint8_t> observed;  // one bit per (feature, label)
  std::size_t rows = 0;
  for (const auto& seq : dataset) {
    for (const auto& row : seq) {
      if (!row.tag) throw ContractError("CRF training needs labeled rows");
      ++rows;
      for (const auto& f : row.features) {
        const std::size_t i = model.intern(f);
        if (observed.size() < (i + 1) * L) observed.resize((i + 1) * L, 0);
        observed[i * L + tag_index(*row.tag)] = 1;
      }
    }
  }
  if (rows == 0) throw InputError("cannot train a CRF on an empty dataset");
  observed.resize(model.feature_count() * L, 0);

  std::vector<Compiled> data;
  data.reserve(dataset.size());
  for (const auto& seq : dataset) data.push_back(compile(model, seq, true));
  const std::size_t obs_size = model.feature_count() * L;

  auto objective = [&](const std::vector<double>& x, std::vector<double>& grad) {
    const double v = loglik_compiled(x, obs_size, data, options.l2_sigma, options.threads, grad);
    for (std::size_t k = 0; k < grad.size(); ++k) {
      grad[k] = k < obs_size && !observed[k] ? 0.0 : -grad[k];
    }
    return -v;
  };

  std::vector<double> x(model.parameter_count(), 0.0);
  LbfgsOptions lo;
  lo.memory = options.lbfgs_memory;
  lo.max_iterations = options.max_iterations;
  lo.relative_tol = options.convergence_tol;
  const LbfgsResult res = minimize_lbfgs(objective, x, lo);
  model.set_parameters(x);
  if (log) {
    log->objective.clear();
    for (double v : res.trace) log->objective.push_back(-v);
    log->iterations = res.iterations;
    log->converged = res.converged;
  }
  return model;
}

// --- model file --------------------------------------------------------------

namespace {
constexpr std::string_view kCrfMagic = "CRF1\n";
}

void write_crf(std::ostream& os, const CrfModel& model) {
  os.write(kCrfMagic.data(), static_cast<std::streamsize>(kCrfMagic.size()));
  binio::write_u32(os, static_cast<std::uint32_t>(L));
  for (BioTag t : kAllTags) binio::write_string(os, std::string(to_string(t)));
  binio::write_u64(os, model.feature_count());
  for (std::size_t f = 0; f < model.feature_count(); ++f) {
    binio::write_string(os, model.feature_names()[f]);
    for (std::size_t y = 0; y < L; ++y) binio::write_f64(os, model.obs(f, y));
  }
  for (std::size_t p = 0; p < L; ++p) {
    for (std::size_t y = 0; y < L; ++y) binio::write_f64(os, model.trans(p, y));
  }
}

CrfModel read_crf(std::istream& is) {
  binio::expect_magic(is, kCrfMagic);
  const std::size_t labels = binio::read_u32(is, "label count");
  if (labels != L) throw InputError("CRF model must have exactly 5 labels");
  for (BioTag t : kAllTags) {
    if (binio::read_string(is, "label") != to_string(t)) {
      throw InputError("CRF model labels are not in the expected order");
    }
  }
  CrfModel model;
  const std::uint64_t n = binio::read_u64(is, "feature count");
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::size_t f = model.intern(binio::read_string(is, "feature name"));
    if (f != i) throw InputError("CRF model repeats a feature");
    for (std::size_t y = 0; y < L; ++y) model.obs(f, y) = binio::read_f64(is, "feature weight");
  }
  for (std::size_t p = 0; p < L; ++p) {
    for (std::size_t y = 0; y < L; ++y) model.trans(p, y) = binio::read_f64(is, "transition weight");
  }
  return model;
}

void save_crf(const std::string& path, const CrfModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  write_crf(out, model);
  if (!out) throw InputError("failed writing " + path);
}

CrfModel load_crf(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return read_crf(in);
}

}  // namespace charseg
