#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "charseg/corpus.hpp"
#include "charseg/features.hpp"

namespace charseg {

inline constexpr std::size_t kNumLabels = kNumTags;

/// Linear-chain CRF over the five BIO tags. Observation features conjoin
/// with the current label only; transitions form a dense label x label table.
class CrfModel {
 public:
  std::size_t feature_count() const { return names_.size(); }
  const std::vector<std::string>& feature_names() const { return names_; }

  std::optional<std::size_t> find(std::string_view feature) const;
  /// Index of `feature`, registering it with zero weights if new.
  std::size_t intern(const std::string& feature);

  double obs(std::size_t feature, std::size_t label) const { return obs_[feature * kNumLabels + label]; }
  double& obs(std::size_t feature, std::size_t label) { return obs_[feature * kNumLabels + label]; }
  double trans(std::size_t prev, std::size_t cur) const { return trans_[prev * kNumLabels + cur]; }
  double& trans(std::size_t prev, std::size_t cur) { return trans_[prev * kNumLabels + cur]; }

  /// Flat parameter layout: feature-major observation weights, then the
  /// row-major transition table.
  std::size_t parameter_count() const { return obs_.size() + trans_.size(); }
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> params);

  double l2_sigma = 1.0;

  friend bool operator==(const CrfModel& a, const CrfModel& b) {
    return a.names_ == b.names_ && a.obs_ == b.obs_ && a.trans_ == b.trans_;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> obs_;
  std::array<double, kNumLabels * kNumLabels> trans_{};
};

struct TrainOptions {
  double l2_sigma = 1.0;
  std::size_t max_iterations = 200;
  double convergence_tol = 1e-6;
  std::size_t lbfgs_memory = 5;
  std::uint64_t seed = 1;
  /// Worker threads for the gradient; 0 means hardware concurrency. Results
  /// do not depend on this value.
  std::size_t threads = 0;
};

/// Per-position label scores for one sequence under a model.
struct Lattice {
  std::vector<std::array<double, kNumLabels>> unary;

  std::size_t size() const { return unary.size(); }
};

Lattice build_lattice(const CrfModel& model, std::span<const FeatureRow> rows);

double score_sequence(const CrfModel& model, std::span<const FeatureRow> rows,
                      std::span<const BioTag> tags);

struct Marginals {
  double log_z = 0.0;
  double log_z_backward = 0.0;  // same quantity from the backward pass
  std::vector<std::array<double, kNumLabels>> node;
  /// edge[t][prev * L + cur] pairs positions t and t+1.
  std::vector<std::array<double, kNumLabels * kNumLabels>> edge;
};

/// Scaled forward-backward. Rows must be nonempty.
Marginals forward_backward(const CrfModel& model, std::span<const FeatureRow> rows);

/// Highest-scoring tag sequence; ties prefer the lower label index.
std::vector<BioTag> viterbi_decode(const CrfModel& model, std::span<const FeatureRow> rows);

/// Inference entry point: unknown features carry no weight.
std::vector<BioTag> label(const CrfModel& model, std::span<const FeatureRow> rows);

struct Objective {
  double value = 0.0;  // sum log p(gold) - ||w||^2 / (2 sigma^2)
  std::vector<double> gradient;  // same layout as CrfModel::parameters()
};

/// Regularized conditional log-likelihood and its gradient. Every row must be
/// labeled. Per-sequence terms are reduced in input order, so the result does
/// not depend on `threads`.
Objective loglik_gradient(const CrfModel& model, std::span<const FeatureSequence> dataset,
                          std::size_t threads = 1);

struct CrfTrainLog {
  std::vector<double> objective;  // regularized log-likelihood per accepted step
  std::size_t iterations = 0;
  bool converged = false;
};

/// Maximizes the regularized log-likelihood with L-BFGS over the observed
/// (feature, label) pairs plus all transitions.
CrfModel crf_train(std::span<const FeatureSequence> dataset, const TrainOptions& options,
                   CrfTrainLog* log = nullptr);

/// Model file: `CRF1\n`, label count and names, feature count (u64) and
/// (name, five weights) records, then the 25 transition weights.
void write_crf(std::ostream& os, const CrfModel& model);
CrfModel read_crf(std::istream& is);
void save_crf(const std::string& path, const CrfModel& model);
CrfModel load_crf(const std::string& path);

}  // namespace charseg
