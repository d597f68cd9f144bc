#include "pidisent/mi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

namespace pidisent {

namespace {

double logsumexp(const std::vector<double>& values, size_t count) {
  double biggest = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < count; ++i) biggest = std::max(biggest, values[i]);
  if (!std::isfinite(biggest)) return biggest;
  double sum = 0.0;
  for (size_t i = 0; i < count; ++i) sum += std::exp(values[i] - biggest);
  return biggest + std::log(sum);
}

// Cached per-record evaluators for one subset.
struct SubsetEval {
  VariableSubset subset;
  std::vector<MarginalDensity> per_record;
};

SubsetEval make_subset_eval(const AnnotatedDataset& dataset, VariableSubset subset) {
  SubsetEval ev{std::move(subset), {}};
  ev.per_record.reserve(static_cast<size_t>(dataset.size()));
  for (int i = 0; i < dataset.size(); ++i)
    ev.per_record.emplace_back(dataset.record(i).posterior, dataset.layout(), ev.subset);
  return ev;
}

void restrict_to(const VariableSubset& subset, const Eigen::VectorXd& z_full,
                 Eigen::VectorXd& out) {
  out.resize(subset.size());
  for (int i = 0; i < subset.size(); ++i)
    out[i] = z_full[subset.indices()[static_cast<size_t>(i)]];
}

// Scratch buffers owned by one worker thread.
struct Scratch {
  Eigen::VectorXd z_sub;
  std::vector<double> logs;
  std::vector<int> pick;
};

// log[(1/|idx|) sum_{x in idx} p(z_S | x)], optionally over a uniform
// subsample of at most `subsample` mixture components.
double log_mixture_density(const SubsetEval& ev, const std::vector<int>& idx,
                           const Eigen::VectorXd& z_sub, int subsample, RngStream& rng,
                           Scratch& scratch) {
  const std::vector<int>* use = &idx;
  if (subsample > 0 && subsample < static_cast<int>(idx.size())) {
    // Partial Fisher-Yates draw of `subsample` distinct components.
    scratch.pick = idx;
    for (int i = 0; i < subsample; ++i) {
      const int j = i + rng.next_int(static_cast<int>(scratch.pick.size()) - i);
      std::swap(scratch.pick[static_cast<size_t>(i)], scratch.pick[static_cast<size_t>(j)]);
    }
    scratch.pick.resize(static_cast<size_t>(subsample));
    use = &scratch.pick;
  }
  const size_t n = use->size();
  if (scratch.logs.size() < n) scratch.logs.resize(n);
  for (size_t i = 0; i < n; ++i)
    scratch.logs[i] = ev.per_record[static_cast<size_t>((*use)[i])](z_sub);
  return logsumexp(scratch.logs, n) - std::log(static_cast<double>(n));
}

// Runs fn(sample_index, scratch) over [0, n), chunked across threads.
// Work is indexed, so the result is independent of the thread count.
template <typename Fn>
void parallel_samples(int n, int threads, Fn&& fn) {
  int t = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  t = std::max(1, std::min(t, n));
  if (t == 1) {
    Scratch scratch;
    for (int i = 0; i < n; ++i) fn(i, scratch);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(t));
  const int chunk = (n + t - 1) / t;
  for (int w = 0; w < t; ++w) {
    const int lo = w * chunk;
    const int hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      Scratch scratch;
      for (int i = lo; i < hi; ++i) fn(i, scratch);
    });
  }
  for (std::thread& th : pool) th.join();
}

// Stratified value plan: round-robin over the factor values, with the
// remainder (when M is not divisible by the cardinality) drawn from a
// uniformly shuffled value order.
std::vector<int> stratified_values(int sample_size, int cardinality, RngStream rng) {
  std::vector<int> plan(static_cast<size_t>(sample_size));
  const int base = sample_size / cardinality;
  for (int i = 0; i < base * cardinality; ++i) plan[static_cast<size_t>(i)] = i % cardinality;
  const int rem = sample_size - base * cardinality;
  if (rem > 0) {
    std::vector<int> order(static_cast<size_t>(cardinality));
    std::iota(order.begin(), order.end(), 0);
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      const int j = rng.next_int(i + 1);
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    for (int i = 0; i < rem; ++i)
      plan[static_cast<size_t>(base * cardinality + i)] = order[static_cast<size_t>(i)];
  }
  return plan;
}

MIEstimate summarize(const std::vector<double>& terms, std::uint64_t seed,
                     std::vector<std::string> warnings) {
  MIEstimate est;
  est.sample_size = static_cast<std::int64_t>(terms.size());
  est.seed = seed;
  est.warnings = std::move(warnings);
  const double m = static_cast<double>(terms.size());
  est.value = std::accumulate(terms.begin(), terms.end(), 0.0) / m;
  if (terms.size() > 1) {
    double ss = 0.0;
    for (double t : terms) ss += (t - est.value) * (t - est.value);
    est.std_error = std::sqrt(ss / (m - 1.0)) / std::sqrt(m);
  }
  return est;
}

std::vector<int> all_indices(int n) {
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

std::vector<std::string> common_warnings(const EstimatorOptions& options, int sample_size,
                                         int cardinality) {
  std::vector<std::string> warnings;
  if (cardinality > 0 && sample_size < cardinality) {
    std::ostringstream msg;
    msg << "sample size " << sample_size << " is below the factor cardinality " << cardinality
        << "; some strata stay unsampled";
    warnings.push_back(msg.str());
  }
  if (options.inner_subsample > 0) {
    std::ostringstream msg;
    msg << "inner mixture sums subsampled to " << options.inner_subsample
        << " components; the estimate may be biased";
    warnings.push_back(msg.str());
  }
  return warnings;
}

}  // namespace

MIEstimate estimate_mi(const AnnotatedDataset& dataset, int k, const VariableSubset& subset,
                       int sample_size, RngStream rng, const EstimatorOptions& options) {
  if (k < 0 || k >= dataset.spec().count()) throw ContractError("factor index out of range");
  if (sample_size < 1) throw ContractError("sample size must be >= 1");

  const int cardinality = dataset.spec().factor(k).cardinality;
  const SubsetEval ev = make_subset_eval(dataset, subset);
  const std::vector<int> everything = all_indices(dataset.size());
  const std::vector<int> plan = stratified_values(sample_size, cardinality, rng.split(0));
  const double log_n = 0.0;  // counts folded into log_mixture_density

  std::vector<double> terms(static_cast<size_t>(sample_size));
  parallel_samples(sample_size, options.threads, [&](int i, Scratch& scratch) {
    RngStream stream = rng.split(static_cast<std::uint64_t>(1 + i));
    const int v = plan[static_cast<size_t>(i)];
    const std::vector<int>& stratum = dataset.stratum(k, v);
    const int x = stratum[static_cast<size_t>(stream.next_int(static_cast<int>(stratum.size())))];
    const Eigen::VectorXd z = sample_posterior(dataset.record(x).posterior, dataset.layout(), stream);
    restrict_to(subset, z, scratch.z_sub);
    const double numer = log_mixture_density(ev, stratum, scratch.z_sub,
                                             options.inner_subsample, stream, scratch);
    const double denom = log_mixture_density(ev, everything, scratch.z_sub,
                                             options.inner_subsample, stream, scratch);
    terms[static_cast<size_t>(i)] = numer - denom + log_n;
  });

  return summarize(terms, rng.state(), common_warnings(options, sample_size, cardinality));
}

MITable estimate_mi_table(const AnnotatedDataset& dataset, int sample_size, RngStream rng,
                          const EstimatorOptions& options) {
  const int k_count = dataset.spec().count();
  const int l_count = dataset.layout().size();
  if (sample_size < 1) throw ContractError("sample size must be >= 1");

  MITable table;
  table.factor_count = k_count;
  table.latent_count = l_count;
  table.singles.assign(static_cast<size_t>(k_count), {});
  table.complements.assign(static_cast<size_t>(k_count), {});
  table.joints.resize(static_cast<size_t>(k_count));

  // Subsets shared by all factors: L singles, L complements (when L > 1),
  // and the full set, each with its per-record density cache.
  std::vector<SubsetEval> evals;
  evals.reserve(static_cast<size_t>(2 * l_count + 1));
  for (int l = 0; l < l_count; ++l)
    evals.push_back(make_subset_eval(dataset, VariableSubset::single(l, l_count)));
  const bool has_complements = l_count > 1;
  if (has_complements) {
    for (int l = 0; l < l_count; ++l)
      evals.push_back(make_subset_eval(dataset, VariableSubset::complement(l, l_count)));
  }
  evals.push_back(make_subset_eval(dataset, VariableSubset::full(l_count)));
  const int subset_count = static_cast<int>(evals.size());

  const std::vector<int> everything = all_indices(dataset.size());

  for (int k = 0; k < k_count; ++k) {
    const RngStream row_rng = rng.split(static_cast<std::uint64_t>(k));
    const int cardinality = dataset.spec().factor(k).cardinality;
    const std::vector<int> plan = stratified_values(sample_size, cardinality, row_rng.split(0));

    // One (x, z) draw per outer sample feeds every subset, keeping the
    // row's cells consistent and halving the sampling cost.
    std::vector<std::vector<double>> terms(static_cast<size_t>(subset_count),
                                           std::vector<double>(static_cast<size_t>(sample_size)));
    parallel_samples(sample_size, options.threads, [&](int i, Scratch& scratch) {
      RngStream stream = row_rng.split(static_cast<std::uint64_t>(1 + i));
      const int v = plan[static_cast<size_t>(i)];
      const std::vector<int>& stratum = dataset.stratum(k, v);
      const int x =
          stratum[static_cast<size_t>(stream.next_int(static_cast<int>(stratum.size())))];
      const Eigen::VectorXd z =
          sample_posterior(dataset.record(x).posterior, dataset.layout(), stream);
      for (int s = 0; s < subset_count; ++s) {
        restrict_to(evals[static_cast<size_t>(s)].subset, z, scratch.z_sub);
        const double numer = log_mixture_density(evals[static_cast<size_t>(s)], stratum,
                                                 scratch.z_sub, options.inner_subsample,
                                                 stream, scratch);
        const double denom = log_mixture_density(evals[static_cast<size_t>(s)], everything,
                                                 scratch.z_sub, options.inner_subsample,
                                                 stream, scratch);
        terms[static_cast<size_t>(s)][static_cast<size_t>(i)] = numer - denom;
      }
    });

    const std::vector<std::string> warnings =
        common_warnings(options, sample_size, cardinality);
    auto cell = [&](int s) { return summarize(terms[static_cast<size_t>(s)], row_rng.state(), warnings); };

    table.singles[static_cast<size_t>(k)].resize(static_cast<size_t>(l_count));
    table.complements[static_cast<size_t>(k)].resize(static_cast<size_t>(l_count));
    for (int l = 0; l < l_count; ++l)
      table.singles[static_cast<size_t>(k)][static_cast<size_t>(l)] = cell(l);
    if (has_complements) {
      for (int l = 0; l < l_count; ++l)
        table.complements[static_cast<size_t>(k)][static_cast<size_t>(l)] = cell(l_count + l);
    } else {
      // A single latent slot has an empty complement, which carries no
      // information; the cell is zero by convention.
      MIEstimate zero;
      zero.sample_size = sample_size;
      zero.seed = row_rng.state();
      table.complements[static_cast<size_t>(k)][0] = zero;
    }
    table.joints[static_cast<size_t>(k)] = cell(subset_count - 1);
  }

  return table;
}

MIEstimate estimate_latent_mi(const AnnotatedDataset& dataset, int l, int sample_size,
                              RngStream rng, const EstimatorOptions& options) {
  const int l_count = dataset.layout().size();
  if (l_count < 2) throw ContractError("latent mutual information needs at least two slots");
  if (l < 0 || l >= l_count) throw ContractError("latent index out of range");
  if (sample_size < 1) throw ContractError("sample size must be >= 1");

  const SubsetEval ev_single = make_subset_eval(dataset, VariableSubset::single(l, l_count));
  const SubsetEval ev_rest = make_subset_eval(dataset, VariableSubset::complement(l, l_count));
  const SubsetEval ev_full = make_subset_eval(dataset, VariableSubset::full(l_count));
  const std::vector<int> everything = all_indices(dataset.size());

  std::vector<double> terms(static_cast<size_t>(sample_size));
  parallel_samples(sample_size, options.threads, [&](int i, Scratch& scratch) {
    RngStream stream = rng.split(static_cast<std::uint64_t>(1 + i));
    const int x = stream.next_int(dataset.size());
    const Eigen::VectorXd z =
        sample_posterior(dataset.record(x).posterior, dataset.layout(), stream);
    restrict_to(ev_full.subset, z, scratch.z_sub);
    const double log_joint = log_mixture_density(ev_full, everything, scratch.z_sub,
                                                 options.inner_subsample, stream, scratch);
    restrict_to(ev_single.subset, z, scratch.z_sub);
    const double log_single = log_mixture_density(ev_single, everything, scratch.z_sub,
                                                  options.inner_subsample, stream, scratch);
    restrict_to(ev_rest.subset, z, scratch.z_sub);
    const double log_rest = log_mixture_density(ev_rest, everything, scratch.z_sub,
                                                options.inner_subsample, stream, scratch);
    terms[static_cast<size_t>(i)] = log_joint - log_single - log_rest;
  });

  return summarize(terms, rng.state(), common_warnings(options, sample_size, 0));
}

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

double brute_force_mi(const Eigen::MatrixXd& joint) {
  if (joint.rows() < 1 || joint.cols() < 1) throw ContractError("joint table must be non-empty");
  double total = 0.0;
  for (Eigen::Index r = 0; r < joint.rows(); ++r) {
    for (Eigen::Index c = 0; c < joint.cols(); ++c) {
      if (joint(r, c) < 0.0) throw ContractError("joint table entries must be non-negative");
      total += joint(r, c);
    }
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ContractError("joint table must sum to 1 within 1e-9");

  const Eigen::VectorXd p_y = joint.rowwise().sum();
  const Eigen::VectorXd p_z = joint.colwise().sum();
  double mi = 0.0;
  for (Eigen::Index r = 0; r < joint.rows(); ++r) {
    for (Eigen::Index c = 0; c < joint.cols(); ++c) {
      const double p = joint(r, c);
      if (p > 0.0) mi += p * std::log(p / (p_y[r] * p_z[c]));
    }
  }
  return mi;
}

namespace {

double mixture_pdf(const GaussianMixture1D& m, double x) {
  double f = 0.0;
  for (const MixtureComponent1D& c : m) {
    const double u = (x - c.mean) / c.std;
    f += c.weight * std::exp(-0.5 * u * u) / (c.std * std::sqrt(kTwoPi));
  }
  return f;
}

// -f log f, the differential entropy integrand; 0 at f = 0.
double entropy_integrand(const GaussianMixture1D& m, double x) {
  const double f = mixture_pdf(m, x);
  return f > 0.0 ? -f * std::log(f) : 0.0;
}

struct QuadratureFailure {
  double lo = 0.0, hi = 0.0;
};

double adaptive_simpson(const GaussianMixture1D& m, double a, double b, double fa, double fm,
                        double fb, double whole, double tol, int depth) {
  const double mid = 0.5 * (a + b);
  const double lm = 0.5 * (a + mid);
  const double rm = 0.5 * (mid + b);
  const double flm = entropy_integrand(m, lm);
  const double frm = entropy_integrand(m, rm);
  const double left = (mid - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - mid) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  if (depth <= 0) throw QuadratureFailure{a, b};
  return adaptive_simpson(m, a, mid, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(m, mid, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

// Differential entropy of a 1D Gaussian mixture by adaptive Simpson
// quadrature. Panels are seeded at every component mean and +-1/3 sigma so
// that narrow spikes cannot hide between initial evaluation points.
double mixture_entropy(const GaussianMixture1D& m, double abs_tol) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  std::vector<double> cuts;
  for (const MixtureComponent1D& c : m) {
    if (!(c.std > 0.0)) throw ContractError("mixture component std must be positive");
    if (!(c.weight >= 0.0)) throw ContractError("mixture weights must be non-negative");
    lo = std::min(lo, c.mean - 10.0 * c.std);
    hi = std::max(hi, c.mean + 10.0 * c.std);
    for (double s : {-3.0, -1.0, 0.0, 1.0, 3.0}) cuts.push_back(c.mean + s * c.std);
  }
  cuts.push_back(lo);
  cuts.push_back(hi);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  const double total_len = hi - lo;
  double h = 0.0;
  for (size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = std::max(cuts[i], lo);
    const double b = std::min(cuts[i + 1], hi);
    if (!(b > a)) continue;
    const double mid = 0.5 * (a + b);
    const double fa = entropy_integrand(m, a);
    const double fm = entropy_integrand(m, mid);
    const double fb = entropy_integrand(m, b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    const double tol = abs_tol * std::max((b - a) / total_len, 1e-6);
    try {
      h += adaptive_simpson(m, a, b, fa, fm, fb, whole, tol, 60);
    } catch (const QuadratureFailure& fail) {
      std::ostringstream msg;
      msg << "quadrature did not converge on [" << fail.lo << ", " << fail.hi
          << "] within tolerance " << abs_tol;
      throw NumericError(msg.str());
    }
  }
  return h;
}

}  // namespace

double quadrature_mi_1d(const std::vector<GaussianMixture1D>& conditionals,
                        const Eigen::VectorXd& factor_marginal, double abs_tol) {
  if (conditionals.empty()) throw ContractError("need at least one conditional mixture");
  if (factor_marginal.size() != static_cast<Eigen::Index>(conditionals.size()))
    throw ContractError("factor marginal length must match the number of conditionals");
  double total = 0.0;
  for (Eigen::Index v = 0; v < factor_marginal.size(); ++v) {
    if (factor_marginal[v] < 0.0) throw ContractError("factor marginal must be non-negative");
    total += factor_marginal[v];
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ContractError("factor marginal must sum to 1 within 1e-9");

  // I(y; z) = H(z) - sum_v p(v) H(z | y=v), all by quadrature.
  GaussianMixture1D marginal;
  double conditional_part = 0.0;
  for (size_t v = 0; v < conditionals.size(); ++v) {
    const double pv = factor_marginal[static_cast<Eigen::Index>(v)];
    if (pv == 0.0) continue;
    double weight_sum = 0.0;
    for (const MixtureComponent1D& c : conditionals[v]) weight_sum += c.weight;
    if (std::abs(weight_sum - 1.0) > 1e-9)
      throw ContractError("conditional mixture weights must sum to 1 within 1e-9");
    for (const MixtureComponent1D& c : conditionals[v])
      marginal.push_back({pv * c.weight, c.mean, c.std});
    conditional_part += pv * mixture_entropy(conditionals[v], abs_tol);
  }
  return mixture_entropy(marginal, abs_tol) - conditional_part;
}

}  // namespace pidisent
