#pragma once

// Foundational tabular types for the offline preference setting: finite prompt
// and response spaces, distributions, reward tables, policies, preference data,
// and the Bradley-Terry likelihood with its analytic gradient.
//
// Everything here is a value type. Mutation happens by constructing a new
// object (see RewardTable::stepped), so instances can be shared across threads.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace petbench {

inline constexpr double kProbTolerance = 1e-9;

struct PromptSpace {
  std::size_t size = 0;
};

struct ResponseSpace {
  std::size_t size = 0;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  std::vector<std::vector<double>> to_rows() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

double max_abs(const Matrix& m);
double dot(const Matrix& a, const Matrix& b);

/// Probability vector over a finite index set. Validated on construction.
class Distribution {
 public:
  explicit Distribution(std::vector<double> probs);

  static Distribution uniform(std::size_t n);

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }

  bool operator==(const Distribution&) const = default;

 private:
  std::vector<double> probs_;
};

/// Tabular reward model r(x, a) with every entry in [-bound, bound].
class RewardTable {
 public:
  /// Throws Range if an entry lies outside [-bound, bound].
  RewardTable(Matrix values, double bound);

  static RewardTable filled(std::size_t n_prompts, std::size_t n_responses, double value,
                            double bound);
  /// Clamps every entry into [-bound, bound].
  static RewardTable projected(Matrix values, double bound);

  double operator()(std::size_t x, std::size_t a) const { return values_(x, a); }
  /// Bounds-checked access.
  double at(std::size_t x, std::size_t a) const;

  const Matrix& values() const noexcept { return values_; }
  double bound() const noexcept { return bound_; }
  std::size_t n_prompts() const noexcept { return values_.rows(); }
  std::size_t n_responses() const noexcept { return values_.cols(); }

  /// Projected gradient step: clamp(values - step * direction).
  RewardTable stepped(const Matrix& direction, double step) const;
  RewardTable negated() const;

  bool operator==(const RewardTable&) const = default;

 private:
  Matrix values_;
  double bound_ = 1.0;
};

/// Per-prompt distribution over responses.
class TabularPolicy {
 public:
  /// Throws Parameter unless every row is a valid distribution.
  explicit TabularPolicy(Matrix probs);

  static TabularPolicy uniform(std::size_t n_prompts, std::size_t n_responses);
  static TabularPolicy point_mass(const std::vector<std::size_t>& choice, std::size_t n_responses);
  /// Renormalizes non-negative rows; rows of zero mass are rejected.
  static TabularPolicy normalized(Matrix weights);

  double prob(std::size_t x, std::size_t a) const { return probs_(x, a); }
  std::span<const double> row(std::size_t x) const { return probs_.row(x); }
  const Matrix& probs() const noexcept { return probs_; }
  std::size_t n_prompts() const noexcept { return probs_.rows(); }
  std::size_t n_responses() const noexcept { return probs_.cols(); }

  bool operator==(const TabularPolicy&) const = default;

 private:
  Matrix probs_;
};

/// sigma == 1 means a1 is preferred to a2.
struct PreferenceTuple {
  std::size_t x = 0;
  std::size_t a1 = 0;
  std::size_t a2 = 0;
  int sigma = 1;

  bool operator==(const PreferenceTuple&) const = default;
};

class PreferenceDataset {
 public:
  PreferenceDataset(PromptSpace prompts, ResponseSpace responses,
                    std::vector<PreferenceTuple> tuples);

  std::size_t size() const noexcept { return tuples_.size(); }
  bool empty() const noexcept { return tuples_.empty(); }
  std::span<const PreferenceTuple> tuples() const noexcept { return tuples_; }
  const PreferenceTuple& operator[](std::size_t i) const { return tuples_[i]; }
  std::size_t n_prompts() const noexcept { return prompts_.size; }
  std::size_t n_responses() const noexcept { return responses_.size; }

  bool operator==(const PreferenceDataset& o) const {
    return prompts_.size == o.prompts_.size && responses_.size == o.responses_.size &&
           tuples_ == o.tuples_;
  }

 private:
  PromptSpace prompts_;
  ResponseSpace responses_;
  std::vector<PreferenceTuple> tuples_;
};

/// Joint law of (x, a1, a2), stored as a dense [X][A][A] tensor.
class PairDistribution {
 public:
  PairDistribution(std::size_t n_prompts, std::size_t n_responses, std::vector<double> probs);

  double operator()(std::size_t x, std::size_t a1, std::size_t a2) const {
    return probs_[(x * n_responses_ + a1) * n_responses_ + a2];
  }
  std::size_t n_prompts() const noexcept { return n_prompts_; }
  std::size_t n_responses() const noexcept { return n_responses_; }
  std::span<const double> probs() const noexcept { return probs_; }

  Distribution prompt_marginal() const;
  /// Total mass of slices (x, a, .) and (x, ., a).
  double response_mass(std::size_t x, std::size_t a) const;

  bool operator==(const PairDistribution&) const = default;

 private:
  std::size_t n_prompts_ = 0;
  std::size_t n_responses_ = 0;
  std::vector<double> probs_;
};

// ---------------------------------------------------------------------------
// Bradley-Terry primitives
// ---------------------------------------------------------------------------

double sigmoid(double y);
/// log(sigmoid(y)) without forming sigmoid(y).
double log_sigmoid(double y);

/// P(a1 preferred to a2 | x) under r.
double bt_prob(const RewardTable& r, std::size_t x, std::size_t a1, std::size_t a2);

/// Expected reward sum_x mu(x) sum_a pi(a|x) r(x,a).
double value(const RewardTable& r, const TabularPolicy& pi, const Distribution& mu);

struct KlResult {
  double value = 0.0;
  bool support_ok = true;
};

/// KL_mu(pi1 || pi2). Throws Support if pi1 puts mass where pi2 has none.
double kl_divergence(const TabularPolicy& pi1, const TabularPolicy& pi2, const Distribution& mu);
/// Non-throwing variant: support violations set support_ok=false and value=NaN.
KlResult kl_divergence_checked(const TabularPolicy& pi1, const TabularPolicy& pi2,
                               const Distribution& mu);

/// Sum over tuples of -log P_r(sigma | x, a1, a2). Throws EmptyData on empty data.
double prediction_loss(const RewardTable& r, const PreferenceDataset& data);
Matrix prediction_loss_grad(const RewardTable& r, const PreferenceDataset& data);

struct LossGrad {
  double loss = 0.0;
  Matrix grad;
};

LossGrad prediction_loss_and_grad(const RewardTable& r, const PreferenceDataset& data);

/// Sufficient statistics of a dataset: c(x, w, l) counts tuples in which w beat l.
/// Loss and gradient equal the tuple-wise versions up to summation order.
class WinCounts {
 public:
  explicit WinCounts(const PreferenceDataset& data);

  std::size_t total() const noexcept { return total_; }
  double loss(const RewardTable& r) const;
  LossGrad loss_and_grad(const RewardTable& r) const;

 private:
  struct Cell {
    std::size_t x, winner, loser;
    double count;
  };
  std::size_t n_prompts_ = 0;
  std::size_t n_responses_ = 0;
  std::size_t total_ = 0;
  std::vector<Cell> cells_;
};

void check_same_shape(const RewardTable& r, const TabularPolicy& pi, const char* where);
void check_same_shape(const RewardTable& r, const PreferenceDataset& data, const char* where);

}  // namespace petbench
