#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pidisent/prob.hpp"

namespace pidisent {

struct Factor {
  std::string name;
  int cardinality = 0;  // >= 2
};

// Ordered list of discrete generative factors with unique names.
class FactorSpec {
 public:
  explicit FactorSpec(std::vector<Factor> factors);

  int count() const { return static_cast<int>(factors_.size()); }
  const Factor& factor(int k) const { return factors_[static_cast<size_t>(k)]; }

  bool operator==(const FactorSpec& other) const;

 private:
  std::vector<Factor> factors_;
};

struct Record {
  std::vector<int> factor_values;  // length K
  PosteriorParams posterior;
};

// Immutable factor-annotated dataset of posterior parameters, with stratum
// index sets D(y_k = v) precomputed for the estimator.
class AnnotatedDataset {
 public:
  static AnnotatedDataset build(FactorSpec spec, LatentLayout layout,
                                std::vector<Record> records);

  const FactorSpec& spec() const { return spec_; }
  const LatentLayout& layout() const { return layout_; }
  int size() const { return static_cast<int>(records_.size()); }
  const Record& record(int i) const { return records_[static_cast<size_t>(i)]; }
  const std::vector<Record>& records() const { return records_; }

  // Index set D(y_k = v).
  const std::vector<int>& stratum(int k, int v) const;

  // Empirical entropy of the marginal of y_k, in nats.
  double factor_entropy(int k) const;

  // Total variation distance of the empirical marginal of y_k from uniform.
  double uniform_deviation(int k) const;

 private:
  AnnotatedDataset(FactorSpec spec, LatentLayout layout, std::vector<Record> records,
                   std::vector<std::vector<std::vector<int>>> strata);

  FactorSpec spec_;
  LatentLayout layout_;
  std::vector<Record> records_;
  std::vector<std::vector<std::vector<int>>> strata_;  // [k][v] -> indices
};

// JSON-lines dataset file: a header line carrying the factor spec and latent
// layout, then one record per line.
AnnotatedDataset read_dataset_jsonl(std::istream& in);
AnnotatedDataset read_dataset_jsonl(const std::string& path);
void write_dataset_jsonl(const AnnotatedDataset& dataset, std::ostream& out);
void write_dataset_jsonl(const AnnotatedDataset& dataset, const std::string& path);

}  // namespace pidisent
