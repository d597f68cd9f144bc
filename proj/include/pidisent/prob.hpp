#pragma once

#include <Eigen/Core>
#include <Eigen/Cholesky>
#include <variant>
#include <vector>

#include "pidisent/common.hpp"
#include "pidisent/rng.hpp"

namespace pidisent {

// ---------------------------------------------------------------------------
// Latent layout
// ---------------------------------------------------------------------------

enum class SlotKind { Continuous, Categorical };

struct VariableSlot {
  SlotKind kind = SlotKind::Continuous;
  int arms = 0;  // >= 2 when categorical

  static VariableSlot continuous() { return {SlotKind::Continuous, 0}; }
  static VariableSlot categorical(int arms) { return {SlotKind::Categorical, arms}; }

  bool operator==(const VariableSlot&) const = default;
};

// Ordered list of latent variable slots. A slot is either a scalar
// continuous variable or a categorical variable with a fixed number of arms.
class LatentLayout {
 public:
  explicit LatentLayout(std::vector<VariableSlot> slots);

  static LatentLayout all_continuous(int count);

  int size() const { return static_cast<int>(slots_.size()); }
  const VariableSlot& slot(int i) const { return slots_[static_cast<size_t>(i)]; }
  int continuous_count() const { return continuous_count_; }
  int categorical_count() const { return size() - continuous_count_; }
  bool all_gaussian() const { return continuous_count_ == size(); }

  // Position of slot i among the continuous slots (-1 for categorical ones).
  int continuous_offset(int i) const { return continuous_offset_[static_cast<size_t>(i)]; }
  // Position of slot i among the categorical slots (-1 for continuous ones).
  int categorical_offset(int i) const { return categorical_offset_[static_cast<size_t>(i)]; }

  bool operator==(const LatentLayout& other) const { return slots_ == other.slots_; }

 private:
  std::vector<VariableSlot> slots_;
  std::vector<int> continuous_offset_;
  std::vector<int> categorical_offset_;
  int continuous_count_ = 0;
};

// ---------------------------------------------------------------------------
// Posterior parameter families
// ---------------------------------------------------------------------------

struct DiagGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
};

struct FullGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Independent Gaussian block over the continuous slots plus one probability
// vector per categorical slot. The categorical blocks do not correlate with
// the Gaussian block or with each other.
struct Mixed {
  std::variant<DiagGaussian, FullGaussian> gaussian;
  std::vector<Eigen::VectorXd> categorical;
};

using PosteriorParams = std::variant<DiagGaussian, FullGaussian, Mixed>;

// Checks dimensions, positivity of stds, covariance symmetry, and that
// categorical probability vectors are non-negative and sum to 1 within 1e-9.
void validate_posterior(const PosteriorParams& params, const LatentLayout& layout);

// ---------------------------------------------------------------------------
// Variable subsets
// ---------------------------------------------------------------------------

// Non-empty sorted set of slot indices into a layout of size L.
class VariableSubset {
 public:
  static VariableSubset single(int l, int total);
  static VariableSubset complement(int l, int total);
  static VariableSubset full(int total);
  static VariableSubset of(std::vector<int> indices, int total);

  const std::vector<int>& indices() const { return indices_; }
  int size() const { return static_cast<int>(indices_.size()); }
  int total() const { return total_; }

 private:
  VariableSubset(std::vector<int> indices, int total);

  std::vector<int> indices_;
  int total_ = 0;
};

// ---------------------------------------------------------------------------
// Marginal density evaluation
// ---------------------------------------------------------------------------

// Evaluator for log p(z_S | x) with the factorization work done once at
// construction. The mutual information estimator evaluates each of these
// O(M*N) times, so construction cost must not leak into the evaluation path.
class MarginalDensity {
 public:
  MarginalDensity(const PosteriorParams& params, const LatentLayout& layout,
                  const VariableSubset& subset);

  // value holds the sampled slots restricted to the subset, in subset order;
  // categorical slots carry the arm index.
  double operator()(const Eigen::VectorXd& value) const;

  int dim() const { return dim_; }

 private:
  struct DiagTerm {
    int position;  // index into value
    double mean;
    double inv_std;
  };
  struct CatTerm {
    int position;
    Eigen::VectorXd log_probs;
  };

  int dim_ = 0;
  double log_norm_ = 0.0;  // constant part of the Gaussian log density
  std::vector<DiagTerm> diag_terms_;
  std::vector<CatTerm> cat_terms_;
  // Full-covariance path: positions into value, sub-mean, Cholesky factor.
  std::vector<int> full_positions_;
  Eigen::VectorXd full_mean_;
  Eigen::MatrixXd full_chol_;  // lower triangular
};

// One-shot convenience wrapper around MarginalDensity.
double log_marginal_density(const PosteriorParams& params, const LatentLayout& layout,
                            const VariableSubset& subset, const Eigen::VectorXd& value);

// Draws a full latent vector over all slots. Categorical slots carry the
// sampled arm index as a double.
Eigen::VectorXd sample_posterior(const PosteriorParams& params, const LatentLayout& layout,
                                 RngStream& rng);

// ---------------------------------------------------------------------------
// Gaussian entropy and block matrix identities
// ---------------------------------------------------------------------------

// H = 0.5 * log((2*pi*e)^d * det(cov)), in nats.
double gaussian_entropy(const Eigen::MatrixXd& cov);

// Relative eigenvalue floor below which a covariance counts as degenerate.
inline constexpr double kSingularEigenRatio = 1e-12;

struct BlockDetInv {
  double det = 0.0;
  Eigen::MatrixXd inverse;
};

// Determinant and inverse of [[A, B], [C, D]] via A and its Schur complement
// D - C A^-1 B. a_size is the dimension of the leading block A.
BlockDetInv block_det_inv_a(const Eigen::MatrixXd& m, int a_size);

// Same via D and its Schur complement A - B D^-1 C.
BlockDetInv block_det_inv_d(const Eigen::MatrixXd& m, int a_size);

namespace detail {
// log(det(cov)) with the relative eigenvalue singularity check; throws
// NumericError when the smallest eigenvalue is below kSingularEigenRatio
// times the largest.
double checked_log_det(const Eigen::MatrixXd& cov, const char* what);
// Lower Cholesky factor; throws NumericError when the factorization fails.
Eigen::MatrixXd checked_cholesky(const Eigen::MatrixXd& cov, const char* what);
}  // namespace detail

}  // namespace pidisent
