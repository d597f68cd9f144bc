#include "pidisent/prob.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace pidisent {

// ---------------------------------------------------------------------------
// LatentLayout
// ---------------------------------------------------------------------------

LatentLayout::LatentLayout(std::vector<VariableSlot> slots) : slots_(std::move(slots)) {
  if (slots_.empty()) throw ContractError("layout needs at least one slot");
  continuous_offset_.resize(slots_.size());
  categorical_offset_.resize(slots_.size());
  int cat = 0;
  for (size_t i = 0; i < slots_.size(); ++i) {
    const VariableSlot& s = slots_[i];
    if (s.kind == SlotKind::Continuous) {
      continuous_offset_[i] = continuous_count_++;
      categorical_offset_[i] = -1;
    } else {
      if (s.arms < 2) {
        std::ostringstream msg;
        msg << "categorical slot " << i << " needs arms >= 2, got " << s.arms;
        throw ContractError(msg.str());
      }
      continuous_offset_[i] = -1;
      categorical_offset_[i] = cat++;
    }
  }
}

LatentLayout LatentLayout::all_continuous(int count) {
  if (count < 1) throw ContractError("layout needs at least one slot");
  return LatentLayout(std::vector<VariableSlot>(static_cast<size_t>(count),
                                                VariableSlot::continuous()));
}

// ---------------------------------------------------------------------------
// Posterior validation
// ---------------------------------------------------------------------------

namespace {

void validate_gaussian_block(const std::variant<DiagGaussian, FullGaussian>& g, int dim) {
  if (const auto* diag = std::get_if<DiagGaussian>(&g)) {
    if (diag->mean.size() != dim || diag->std.size() != dim)
      throw ContractError("diagonal Gaussian dimension does not match layout");
    for (Eigen::Index i = 0; i < diag->std.size(); ++i)
      if (!(diag->std[i] > 0.0)) throw ContractError("std must be strictly positive");
  } else {
    const auto& fg = std::get<FullGaussian>(g);
    if (fg.mean.size() != dim || fg.cov.rows() != dim || fg.cov.cols() != dim)
      throw ContractError("full Gaussian dimension does not match layout");
    if (dim > 0 && !fg.cov.isApprox(fg.cov.transpose(), 1e-9))
      throw ContractError("covariance must be symmetric");
  }
}

}  // namespace

void validate_posterior(const PosteriorParams& params, const LatentLayout& layout) {
  if (const auto* mixed = std::get_if<Mixed>(&params)) {
    validate_gaussian_block(mixed->gaussian, layout.continuous_count());
    if (static_cast<int>(mixed->categorical.size()) != layout.categorical_count())
      throw ContractError("mixed posterior categorical block count does not match layout");
    for (int i = 0; i < layout.size(); ++i) {
      if (layout.slot(i).kind != SlotKind::Categorical) continue;
      const Eigen::VectorXd& p = mixed->categorical[static_cast<size_t>(layout.categorical_offset(i))];
      if (p.size() != layout.slot(i).arms)
        throw ContractError("categorical probability vector length does not match arms");
      double sum = 0.0;
      for (Eigen::Index a = 0; a < p.size(); ++a) {
        if (p[a] < 0.0) throw ContractError("categorical probabilities must be non-negative");
        sum += p[a];
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw ContractError("categorical probabilities must sum to 1 within 1e-9");
    }
  } else {
    if (!layout.all_gaussian())
      throw ContractError("plain Gaussian posterior requires an all-continuous layout");
    if (const auto* diag = std::get_if<DiagGaussian>(&params)) {
      validate_gaussian_block(*diag, layout.size());
    } else {
      validate_gaussian_block(std::get<FullGaussian>(params), layout.size());
    }
  }
}

// ---------------------------------------------------------------------------
// VariableSubset
// ---------------------------------------------------------------------------

VariableSubset::VariableSubset(std::vector<int> indices, int total)
    : indices_(std::move(indices)), total_(total) {
  if (indices_.empty()) throw ContractError("variable subset must be non-empty");
  std::sort(indices_.begin(), indices_.end());
  for (size_t i = 0; i < indices_.size(); ++i) {
    if (indices_[i] < 0 || indices_[i] >= total_)
      throw ContractError("subset index out of range");
    if (i > 0 && indices_[i] == indices_[i - 1])
      throw ContractError("subset indices must be distinct");
  }
}

VariableSubset VariableSubset::single(int l, int total) {
  return VariableSubset({l}, total);
}

VariableSubset VariableSubset::complement(int l, int total) {
  if (l < 0 || l >= total) throw ContractError("subset index out of range");
  std::vector<int> idx;
  idx.reserve(static_cast<size_t>(total - 1));
  for (int i = 0; i < total; ++i)
    if (i != l) idx.push_back(i);
  return VariableSubset(std::move(idx), total);
}

VariableSubset VariableSubset::full(int total) {
  std::vector<int> idx(static_cast<size_t>(total));
  for (int i = 0; i < total; ++i) idx[static_cast<size_t>(i)] = i;
  return VariableSubset(std::move(idx), total);
}

VariableSubset VariableSubset::of(std::vector<int> indices, int total) {
  return VariableSubset(std::move(indices), total);
}

// ---------------------------------------------------------------------------
// Cholesky / determinant helpers
// ---------------------------------------------------------------------------

namespace detail {

double checked_log_det(const Eigen::MatrixXd& cov, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericError(std::string(what) + ": eigendecomposition failed");
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double largest = ev.maxCoeff();
  const double smallest = ev.minCoeff();
  if (!(largest > 0.0) || smallest < kSingularEigenRatio * largest) {
    std::ostringstream msg;
    msg << what << ": degenerate covariance (eigenvalue range [" << smallest << ", "
        << largest << "])";
    throw NumericError(msg.str());
  }
  return ev.array().log().sum();
}

Eigen::MatrixXd checked_cholesky(const Eigen::MatrixXd& cov, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw NumericError(std::string(what) + ": covariance factorization failed (not positive definite)");
  return llt.matrixL();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// MarginalDensity
// ---------------------------------------------------------------------------

namespace {

// Resolves the Gaussian block of any posterior family without copying.
void gaussian_block_of(const PosteriorParams& params, const DiagGaussian** diag,
                       const FullGaussian** full) {
  *diag = nullptr;
  *full = nullptr;
  if (const auto* mixed = std::get_if<Mixed>(&params)) {
    *diag = std::get_if<DiagGaussian>(&mixed->gaussian);
    *full = std::get_if<FullGaussian>(&mixed->gaussian);
  } else {
    *diag = std::get_if<DiagGaussian>(&params);
    *full = std::get_if<FullGaussian>(&params);
  }
}

}  // namespace

MarginalDensity::MarginalDensity(const PosteriorParams& params, const LatentLayout& layout,
                                 const VariableSubset& subset) {
  if (subset.total() != layout.size())
    throw ContractError("subset does not match layout size");
  dim_ = subset.size();

  const Mixed* mixed = std::get_if<Mixed>(&params);
  const DiagGaussian* diag_block = nullptr;
  const FullGaussian* full_block = nullptr;
  gaussian_block_of(params, &diag_block, &full_block);

  // Split the subset positions into continuous and categorical parts.
  std::vector<int> cont_positions;   // positions into the value vector
  std::vector<int> cont_gauss_dims;  // matching dimensions of the Gaussian block
  for (int pos = 0; pos < subset.size(); ++pos) {
    const int slot = subset.indices()[static_cast<size_t>(pos)];
    if (layout.slot(slot).kind == SlotKind::Continuous) {
      const int g = layout.continuous_offset(slot);
      if (mixed == nullptr && g != slot)
        throw ContractError("plain Gaussian posterior requires an all-continuous layout");
      cont_positions.push_back(pos);
      cont_gauss_dims.push_back(g);
    } else {
      if (mixed == nullptr)
        throw ContractError("categorical slot requires a mixed posterior");
      const Eigen::VectorXd& p =
          mixed->categorical[static_cast<size_t>(layout.categorical_offset(slot))];
      if (p.size() != layout.slot(slot).arms)
        throw ContractError("categorical probability vector length does not match arms");
      cat_terms_.push_back({pos, p.array().max(0.0).log().matrix()});
    }
  }

  if (cont_positions.empty()) return;

  if (diag_block != nullptr) {
    if (diag_block->mean.size() < static_cast<Eigen::Index>(cont_gauss_dims.back() + 1))
      throw ContractError("posterior does not cover all slots in the subset");
    for (size_t i = 0; i < cont_positions.size(); ++i) {
      const int g = cont_gauss_dims[i];
      const double sd = diag_block->std[g];
      if (!(sd > 0.0)) throw ContractError("std must be strictly positive");
      diag_terms_.push_back({cont_positions[i], diag_block->mean[g], 1.0 / sd});
      log_norm_ += -std::log(sd) - 0.5 * kLog2Pi;
    }
  } else {
    const FullGaussian& fg = *full_block;
    const int d = static_cast<int>(cont_positions.size());
    if (fg.mean.size() < static_cast<Eigen::Index>(cont_gauss_dims.back() + 1))
      throw ContractError("posterior does not cover all slots in the subset");
    full_positions_ = cont_positions;
    full_mean_.resize(d);
    Eigen::MatrixXd sub(d, d);
    for (int i = 0; i < d; ++i) {
      full_mean_[i] = fg.mean[cont_gauss_dims[static_cast<size_t>(i)]];
      for (int j = 0; j < d; ++j)
        sub(i, j) = fg.cov(cont_gauss_dims[static_cast<size_t>(i)],
                           cont_gauss_dims[static_cast<size_t>(j)]);
    }
    const double log_det = detail::checked_log_det(sub, "log_marginal_density");
    full_chol_ = detail::checked_cholesky(sub, "log_marginal_density");
    log_norm_ = -0.5 * (d * kLog2Pi + log_det);
  }
}

double MarginalDensity::operator()(const Eigen::VectorXd& value) const {
  if (value.size() != dim_) throw ContractError("value dimension does not match subset");
  double log_p = log_norm_;
  for (const DiagTerm& t : diag_terms_) {
    const double u = (value[t.position] - t.mean) * t.inv_std;
    log_p -= 0.5 * u * u;
  }
  if (!full_positions_.empty()) {
    const int d = static_cast<int>(full_positions_.size());
    Eigen::VectorXd r(d);
    for (int i = 0; i < d; ++i)
      r[i] = value[full_positions_[static_cast<size_t>(i)]] - full_mean_[i];
    full_chol_.triangularView<Eigen::Lower>().solveInPlace(r);
    log_p -= 0.5 * r.squaredNorm();
  }
  for (const CatTerm& t : cat_terms_) {
    const int arm = static_cast<int>(std::lround(value[t.position]));
    if (arm < 0 || arm >= t.log_probs.size())
      throw ContractError("categorical value out of range");
    log_p += t.log_probs[arm];
  }
  return log_p;
}

double log_marginal_density(const PosteriorParams& params, const LatentLayout& layout,
                            const VariableSubset& subset, const Eigen::VectorXd& value) {
  return MarginalDensity(params, layout, subset)(value);
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

Eigen::VectorXd sample_posterior(const PosteriorParams& params, const LatentLayout& layout,
                                 RngStream& rng) {
  Eigen::VectorXd z(layout.size());

  const Mixed* mixed = std::get_if<Mixed>(&params);
  if (mixed == nullptr && !layout.all_gaussian())
    throw ContractError("plain Gaussian posterior requires an all-continuous layout");
  const DiagGaussian* diag_block = nullptr;
  const FullGaussian* full_block = nullptr;
  gaussian_block_of(params, &diag_block, &full_block);

  // Continuous block.
  const int cd = layout.continuous_count();
  Eigen::VectorXd cont(cd);
  if (diag_block != nullptr) {
    if (diag_block->mean.size() != cd) throw ContractError("posterior dimension mismatch");
    for (int i = 0; i < cd; ++i) {
      if (!(diag_block->std[i] > 0.0)) throw ContractError("std must be strictly positive");
      cont[i] = diag_block->mean[i] + diag_block->std[i] * rng.next_normal();
    }
  } else {
    const FullGaussian& fg = *full_block;
    if (fg.mean.size() != cd) throw ContractError("posterior dimension mismatch");
    const Eigen::MatrixXd chol = detail::checked_cholesky(fg.cov, "sample_posterior");
    Eigen::VectorXd eps(cd);
    for (int i = 0; i < cd; ++i) eps[i] = rng.next_normal();
    cont = fg.mean + chol * eps;
  }

  for (int i = 0; i < layout.size(); ++i) {
    if (layout.slot(i).kind == SlotKind::Continuous) {
      z[i] = cont[layout.continuous_offset(i)];
    } else {
      const Eigen::VectorXd& p =
          mixed->categorical[static_cast<size_t>(layout.categorical_offset(i))];
      double u = rng.next_double();
      int arm = 0;
      for (; arm < p.size() - 1; ++arm) {
        u -= p[arm];
        if (u < 0.0) break;
      }
      z[i] = static_cast<double>(arm);
    }
  }
  return z;
}

// ---------------------------------------------------------------------------
// Gaussian entropy, block determinant/inverse
// ---------------------------------------------------------------------------

double gaussian_entropy(const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols() || cov.rows() == 0)
    throw ContractError("covariance must be square and non-empty");
  const double log_det = detail::checked_log_det(cov, "gaussian_entropy");
  const double d = static_cast<double>(cov.rows());
  return 0.5 * (d * kLog2PiE + log_det);
}

namespace {

void check_block_sizes(const Eigen::MatrixXd& m, int a_size) {
  if (m.rows() != m.cols()) throw ContractError("block_det_inv: matrix must be square");
  if (a_size <= 0 || a_size >= m.rows())
    throw ContractError("block_det_inv: block split must be strictly inside the matrix");
}

// Inverts a square block with a partial-pivot LU; reports which block failed.
Eigen::MatrixXd invert_block(const Eigen::MatrixXd& block, const char* name, double* det_out) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(block);
  const double det = lu.determinant();
  if (!std::isfinite(det) || det == 0.0 ||
      lu.matrixLU().diagonal().cwiseAbs().minCoeff() < 1e-300) {
    throw NumericError(std::string("block_det_inv: block ") + name + " is not invertible");
  }
  *det_out = det;
  return lu.inverse();
}

}  // namespace

BlockDetInv block_det_inv_a(const Eigen::MatrixXd& m, int a_size) {
  check_block_sizes(m, a_size);
  const int n = static_cast<int>(m.rows());
  const int d_size = n - a_size;
  const auto A = m.topLeftCorner(a_size, a_size);
  const auto B = m.topRightCorner(a_size, d_size);
  const auto C = m.bottomLeftCorner(d_size, a_size);
  const auto D = m.bottomRightCorner(d_size, d_size);

  double det_a = 0.0;
  const Eigen::MatrixXd a_inv = invert_block(A, "A", &det_a);
  const Eigen::MatrixXd schur = D - C * a_inv * B;
  double det_s = 0.0;
  const Eigen::MatrixXd s_inv = invert_block(schur, "Schur complement of A", &det_s);

  BlockDetInv out;
  out.det = det_a * det_s;
  out.inverse.resize(n, n);
  out.inverse.topLeftCorner(a_size, a_size) = a_inv + a_inv * B * s_inv * C * a_inv;
  out.inverse.topRightCorner(a_size, d_size) = -a_inv * B * s_inv;
  out.inverse.bottomLeftCorner(d_size, a_size) = -s_inv * C * a_inv;
  out.inverse.bottomRightCorner(d_size, d_size) = s_inv;
  return out;
}

BlockDetInv block_det_inv_d(const Eigen::MatrixXd& m, int a_size) {
  check_block_sizes(m, a_size);
  const int n = static_cast<int>(m.rows());
  const int d_size = n - a_size;
  const auto A = m.topLeftCorner(a_size, a_size);
  const auto B = m.topRightCorner(a_size, d_size);
  const auto C = m.bottomLeftCorner(d_size, a_size);
  const auto D = m.bottomRightCorner(d_size, d_size);

  double det_d = 0.0;
  const Eigen::MatrixXd d_inv = invert_block(D, "D", &det_d);
  const Eigen::MatrixXd schur = A - B * d_inv * C;
  double det_t = 0.0;
  const Eigen::MatrixXd t_inv = invert_block(schur, "Schur complement of D", &det_t);

  BlockDetInv out;
  out.det = det_d * det_t;
  out.inverse.resize(n, n);
  out.inverse.topLeftCorner(a_size, a_size) = t_inv;
  out.inverse.topRightCorner(a_size, d_size) = -t_inv * B * d_inv;
  out.inverse.bottomLeftCorner(d_size, a_size) = -d_inv * C * t_inv;
  out.inverse.bottomRightCorner(d_size, d_size) = d_inv + d_inv * C * t_inv * B * d_inv;
  return out;
}

}  // namespace pidisent
