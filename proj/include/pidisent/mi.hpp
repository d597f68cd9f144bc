#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pidisent/dataset.hpp"

namespace pidisent {

struct MIEstimate {
  double value = 0.0;      // nats
  double std_error = 0.0;  // nats
  std::int64_t sample_size = 0;
  std::uint64_t seed = 0;  // state of the stream that produced the estimate
  std::vector<std::string> warnings;
};

struct EstimatorOptions {
  // 0 keeps the inner mixture sums exact over the whole dataset. A positive
  // value subsamples at most this many mixture components per inner sum,
  // which trades bias for speed on large datasets.
  int inner_subsample = 0;
  // 0 picks the hardware thread count.
  int threads = 0;
};

// Monte-Carlo estimate of I(y_k; z_S) from the mixture-of-posteriors
// densities: stratified sampling over the values of y_k, exact inner sums,
// log-sum-exp accumulation.
MIEstimate estimate_mi(const AnnotatedDataset& dataset, int k, const VariableSubset& subset,
                       int sample_size, RngStream rng, const EstimatorOptions& options = {});

// I(y_k; z_l), I(y_k; z_{not l}) and I(y_k; z) for all pairs (k, l).
struct MITable {
  int factor_count = 0;
  int latent_count = 0;
  std::vector<std::vector<MIEstimate>> singles;      // [k][l] -> I(y_k; z_l)
  std::vector<std::vector<MIEstimate>> complements;  // [k][l] -> I(y_k; z_{not l})
  std::vector<MIEstimate> joints;                    // [k]    -> I(y_k; z)
};

// Fills the whole table with one stratified pass per factor: each outer
// sample draws (x, z) once and scores every subset from the same draw, so the
// per-factor cells are mutually consistent. With a single latent slot the
// complement column is identically zero.
MITable estimate_mi_table(const AnnotatedDataset& dataset, int sample_size, RngStream rng,
                          const EstimatorOptions& options = {});

// I(z_l; z_{not l}) with the same mixture machinery, sampling x uniformly.
MIEstimate estimate_latent_mi(const AnnotatedDataset& dataset, int l, int sample_size,
                              RngStream rng, const EstimatorOptions& options = {});

// Exact mutual information of a discrete joint table p(y, z) by enumeration.
// Rows index y, columns index z. Validation oracle.
double brute_force_mi(const Eigen::MatrixXd& joint);

// One component of a 1D Gaussian mixture.
struct MixtureComponent1D {
  double weight = 1.0;
  double mean = 0.0;
  double std = 1.0;
};
using GaussianMixture1D = std::vector<MixtureComponent1D>;

// Exact I(y; z) for a discrete factor with 1D Gaussian-mixture conditionals
// p(z | y = v), via adaptive quadrature of the differential entropies.
// Validation oracle for continuous scalar latents.
double quadrature_mi_1d(const std::vector<GaussianMixture1D>& conditionals,
                        const Eigen::VectorXd& factor_marginal, double abs_tol = 1e-6);

}  // namespace pidisent
