#include "petbench/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <tuple>

#include <fmt/format.h>

#include "petbench/error.hpp"

namespace petbench {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Range: return "range";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Support: return "support";
    case ErrorKind::EmptyData: return "empty-data";
    case ErrorKind::Config: return "config";
    case ErrorKind::Parameter: return "parameter";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::PropertyViolation: return "property-violation";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Matrix

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  Matrix m(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) throw Error(ErrorKind::Shape, "ragged matrix rows");
    std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  }
  return m;
}

std::vector<std::vector<double>> Matrix::to_rows() const {
  std::vector<std::vector<double>> out(rows_);
  for (std::size_t i = 0; i < rows_; ++i) out[i].assign(row(i).begin(), row(i).end());
  return out;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_)
    throw Error(ErrorKind::Shape, "matrix add shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_)
    throw Error(ErrorKind::Shape, "matrix subtract shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

double max_abs(const Matrix& m) {
  double out = 0.0;
  for (double v : m.data()) out = std::max(out, std::abs(v));
  return out;
}

double dot(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorKind::Shape, "matrix dot shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

// ---------------------------------------------------------------------------
// Distribution

namespace {

void validate_probability_row(std::span<const double> p, const char* what) {
  if (p.empty()) throw Error(ErrorKind::Parameter, fmt::format("{}: empty distribution", what));
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw Error(ErrorKind::Parameter, fmt::format("{}: negative or non-finite entry {}", what, v));
    sum += v;
  }
  if (std::abs(sum - 1.0) > kProbTolerance)
    throw Error(ErrorKind::Parameter, fmt::format("{}: entries sum to {:.12f}", what, sum));
}

}  // namespace

Distribution::Distribution(std::vector<double> probs) : probs_(std::move(probs)) {
  validate_probability_row(probs_, "Distribution");
}

Distribution Distribution::uniform(std::size_t n) {
  if (n == 0) throw Error(ErrorKind::Parameter, "uniform distribution over empty set");
  return Distribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

// ---------------------------------------------------------------------------
// RewardTable

RewardTable::RewardTable(Matrix values, double bound) : values_(std::move(values)), bound_(bound) {
  if (!(bound_ > 0.0) || !std::isfinite(bound_))
    throw Error(ErrorKind::Parameter, fmt::format("reward bound must be positive, got {}", bound_));
  for (double v : values_.data()) {
    if (!(std::abs(v) <= bound_))
      throw Error(ErrorKind::Range, fmt::format("reward entry {} outside [-{}, {}]", v, bound_, bound_));
  }
}

RewardTable RewardTable::filled(std::size_t n_prompts, std::size_t n_responses, double value,
                                double bound) {
  return RewardTable(Matrix(n_prompts, n_responses, value), bound);
}

RewardTable RewardTable::projected(Matrix values, double bound) {
  if (!(bound > 0.0)) throw Error(ErrorKind::Parameter, "reward bound must be positive");
  for (double& v : values.data()) {
    if (std::isnan(v)) throw Error(ErrorKind::Divergence, "NaN reward entry before projection");
    v = std::clamp(v, -bound, bound);
  }
  return RewardTable(std::move(values), bound);
}

double RewardTable::at(std::size_t x, std::size_t a) const {
  if (x >= n_prompts() || a >= n_responses())
    throw Error(ErrorKind::Range,
                fmt::format("reward index ({}, {}) outside {}x{}", x, a, n_prompts(), n_responses()));
  return values_(x, a);
}

RewardTable RewardTable::stepped(const Matrix& direction, double step) const {
  Matrix next = values_;
  next -= step * direction;
  return projected(std::move(next), bound_);
}

RewardTable RewardTable::negated() const { return RewardTable(-1.0 * values_, bound_); }

// ---------------------------------------------------------------------------
// TabularPolicy

TabularPolicy::TabularPolicy(Matrix probs) : probs_(std::move(probs)) {
  if (probs_.rows() == 0 || probs_.cols() == 0)
    throw Error(ErrorKind::Parameter, "policy over empty space");
  for (std::size_t x = 0; x < probs_.rows(); ++x) validate_probability_row(probs_.row(x), "policy row");
}

TabularPolicy TabularPolicy::uniform(std::size_t n_prompts, std::size_t n_responses) {
  return TabularPolicy(Matrix(n_prompts, n_responses, 1.0 / static_cast<double>(n_responses)));
}

TabularPolicy TabularPolicy::point_mass(const std::vector<std::size_t>& choice,
                                        std::size_t n_responses) {
  Matrix m(choice.size(), n_responses);
  for (std::size_t x = 0; x < choice.size(); ++x) {
    if (choice[x] >= n_responses) throw Error(ErrorKind::Range, "point mass outside response space");
    m(x, choice[x]) = 1.0;
  }
  return TabularPolicy(std::move(m));
}

TabularPolicy TabularPolicy::normalized(Matrix weights) {
  for (std::size_t x = 0; x < weights.rows(); ++x) {
    auto row = weights.row(x);
    double sum = 0.0;
    for (double v : row) {
      if (!(v >= 0.0) || !std::isfinite(v))
        throw Error(ErrorKind::Parameter, "policy weights must be finite and non-negative");
      sum += v;
    }
    if (!(sum > 0.0)) throw Error(ErrorKind::Parameter, "policy row with zero mass");
    for (double& v : row) v /= sum;
  }
  return TabularPolicy(std::move(weights));
}

// ---------------------------------------------------------------------------
// Datasets and pair distributions

PreferenceDataset::PreferenceDataset(PromptSpace prompts, ResponseSpace responses,
                                     std::vector<PreferenceTuple> tuples)
    : prompts_(prompts), responses_(responses), tuples_(std::move(tuples)) {
  for (const auto& t : tuples_) {
    if (t.x >= prompts_.size || t.a1 >= responses_.size || t.a2 >= responses_.size)
      throw Error(ErrorKind::Range, fmt::format("tuple ({}, {}, {}) outside {}x{}", t.x, t.a1, t.a2,
                                                prompts_.size, responses_.size));
    if (t.sigma != 0 && t.sigma != 1)
      throw Error(ErrorKind::Range, fmt::format("preference label must be 0 or 1, got {}", t.sigma));
  }
}

PairDistribution::PairDistribution(std::size_t n_prompts, std::size_t n_responses,
                                   std::vector<double> probs)
    : n_prompts_(n_prompts), n_responses_(n_responses), probs_(std::move(probs)) {
  if (probs_.size() != n_prompts_ * n_responses_ * n_responses_)
    throw Error(ErrorKind::Shape, "pair distribution tensor has wrong size");
  validate_probability_row(probs_, "PairDistribution");
}

Distribution PairDistribution::prompt_marginal() const {
  std::vector<double> mu(n_prompts_, 0.0);
  const std::size_t slice = n_responses_ * n_responses_;
  for (std::size_t x = 0; x < n_prompts_; ++x)
    mu[x] = std::accumulate(probs_.begin() + x * slice, probs_.begin() + (x + 1) * slice, 0.0);
  return Distribution(std::move(mu));
}

double PairDistribution::response_mass(std::size_t x, std::size_t a) const {
  double m = 0.0;
  for (std::size_t b = 0; b < n_responses_; ++b) {
    m += (*this)(x, a, b);
    if (b != a) m += (*this)(x, b, a);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Bradley-Terry primitives

double sigmoid(double y) {
  if (y >= 0.0) return 1.0 / (1.0 + std::exp(-y));
  const double e = std::exp(y);
  return e / (1.0 + e);
}

double log_sigmoid(double y) {
  // log(1/(1+e^-y)) = -softplus(-y)
  if (y >= 0.0) return -std::log1p(std::exp(-y));
  return y - std::log1p(std::exp(y));
}

double bt_prob(const RewardTable& r, std::size_t x, std::size_t a1, std::size_t a2) {
  return sigmoid(r.at(x, a1) - r.at(x, a2));
}

void check_same_shape(const RewardTable& r, const TabularPolicy& pi, const char* where) {
  if (r.n_prompts() != pi.n_prompts() || r.n_responses() != pi.n_responses())
    throw Error(ErrorKind::Shape, fmt::format("{}: reward {}x{} vs policy {}x{}", where, r.n_prompts(),
                                              r.n_responses(), pi.n_prompts(), pi.n_responses()));
}

void check_same_shape(const RewardTable& r, const PreferenceDataset& data, const char* where) {
  if (r.n_prompts() != data.n_prompts() || r.n_responses() != data.n_responses())
    throw Error(ErrorKind::Shape, fmt::format("{}: reward {}x{} vs dataset {}x{}", where, r.n_prompts(),
                                              r.n_responses(), data.n_prompts(), data.n_responses()));
}

double value(const RewardTable& r, const TabularPolicy& pi, const Distribution& mu) {
  check_same_shape(r, pi, "value");
  if (mu.size() != r.n_prompts()) throw Error(ErrorKind::Shape, "value: prompt distribution size");
  double v = 0.0;
  for (std::size_t x = 0; x < r.n_prompts(); ++x) {
    double row = 0.0;
    for (std::size_t a = 0; a < r.n_responses(); ++a) row += pi.prob(x, a) * r(x, a);
    v += mu[x] * row;
  }
  return v;
}

KlResult kl_divergence_checked(const TabularPolicy& pi1, const TabularPolicy& pi2,
                               const Distribution& mu) {
  if (pi1.n_prompts() != pi2.n_prompts() || pi1.n_responses() != pi2.n_responses() ||
      mu.size() != pi1.n_prompts())
    throw Error(ErrorKind::Shape, "kl_divergence: shape mismatch");
  KlResult out;
  for (std::size_t x = 0; x < pi1.n_prompts(); ++x) {
    if (mu[x] == 0.0) continue;
    double row = 0.0;
    for (std::size_t a = 0; a < pi1.n_responses(); ++a) {
      const double p = pi1.prob(x, a);
      if (p == 0.0) continue;
      const double q = pi2.prob(x, a);
      if (q == 0.0) {
        out.support_ok = false;
        continue;
      }
      row += p * std::log(p / q);
    }
    out.value += mu[x] * row;
  }
  if (!out.support_ok) out.value = std::numeric_limits<double>::quiet_NaN();
  // Rounding can push identical rows a hair below zero.
  else out.value = std::max(out.value, 0.0);
  return out;
}

double kl_divergence(const TabularPolicy& pi1, const TabularPolicy& pi2, const Distribution& mu) {
  const KlResult kl = kl_divergence_checked(pi1, pi2, mu);
  if (!kl.support_ok)
    throw Error(ErrorKind::Support, "kl_divergence: first policy is not absolutely continuous "
                                    "with respect to the second");
  return kl.value;
}

namespace {

// -log P(sigma) and d/d r(x,a1) for one tuple; the a2 derivative is the negation.
inline std::pair<double, double> tuple_loss(double diff, int sigma) {
  if (sigma == 1) return {-log_sigmoid(diff), sigmoid(diff) - 1.0};
  return {-log_sigmoid(-diff), sigmoid(diff)};
}

}  // namespace

LossGrad prediction_loss_and_grad(const RewardTable& r, const PreferenceDataset& data) {
  if (data.empty()) throw Error(ErrorKind::EmptyData, "prediction loss over an empty dataset");
  check_same_shape(r, data, "prediction_loss");
  LossGrad out{0.0, Matrix(r.n_prompts(), r.n_responses())};
  for (const auto& t : data.tuples()) {
    const auto [loss, g] = tuple_loss(r(t.x, t.a1) - r(t.x, t.a2), t.sigma);
    out.loss += loss;
    out.grad(t.x, t.a1) += g;
    out.grad(t.x, t.a2) -= g;
  }
  return out;
}

double prediction_loss(const RewardTable& r, const PreferenceDataset& data) {
  if (data.empty()) throw Error(ErrorKind::EmptyData, "prediction loss over an empty dataset");
  check_same_shape(r, data, "prediction_loss");
  double loss = 0.0;
  for (const auto& t : data.tuples()) loss += tuple_loss(r(t.x, t.a1) - r(t.x, t.a2), t.sigma).first;
  return loss;
}

Matrix prediction_loss_grad(const RewardTable& r, const PreferenceDataset& data) {
  return prediction_loss_and_grad(r, data).grad;
}

WinCounts::WinCounts(const PreferenceDataset& data)
    : n_prompts_(data.n_prompts()), n_responses_(data.n_responses()), total_(data.size()) {
  if (data.empty()) throw Error(ErrorKind::EmptyData, "win counts over an empty dataset");
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, double> counts;
  for (const auto& t : data.tuples()) {
    const std::size_t w = t.sigma == 1 ? t.a1 : t.a2;
    const std::size_t l = t.sigma == 1 ? t.a2 : t.a1;
    counts[{t.x, w, l}] += 1.0;
  }
  cells_.reserve(counts.size());
  for (const auto& [key, c] : counts) {
    const auto [x, w, l] = key;
    cells_.push_back({x, w, l, c});
  }
}

double WinCounts::loss(const RewardTable& r) const {
  double loss = 0.0;
  for (const auto& c : cells_) loss -= c.count * log_sigmoid(r(c.x, c.winner) - r(c.x, c.loser));
  return loss;
}

LossGrad WinCounts::loss_and_grad(const RewardTable& r) const {
  if (r.n_prompts() != n_prompts_ || r.n_responses() != n_responses_)
    throw Error(ErrorKind::Shape, "win counts: reward shape mismatch");
  LossGrad out{0.0, Matrix(n_prompts_, n_responses_)};
  for (const auto& c : cells_) {
    const double d = r(c.x, c.winner) - r(c.x, c.loser);
    out.loss -= c.count * log_sigmoid(d);
    const double g = c.count * (sigmoid(d) - 1.0);
    out.grad(c.x, c.winner) += g;
    out.grad(c.x, c.loser) -= g;
  }
  return out;
}

}  // namespace petbench
