#include "pidisent/dataset.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace pidisent {

using nlohmann::json;

// ---------------------------------------------------------------------------
// FactorSpec
// ---------------------------------------------------------------------------

FactorSpec::FactorSpec(std::vector<Factor> factors) : factors_(std::move(factors)) {
  if (factors_.empty()) throw ContractError("factor spec needs at least one factor");
  std::set<std::string> names;
  for (const Factor& f : factors_) {
    if (f.cardinality < 2) {
      throw ContractError("factor '" + f.name + "' needs cardinality >= 2");
    }
    if (!names.insert(f.name).second) {
      throw ContractError("duplicate factor name '" + f.name + "'");
    }
  }
}

bool FactorSpec::operator==(const FactorSpec& other) const {
  if (count() != other.count()) return false;
  for (int k = 0; k < count(); ++k) {
    if (factors_[static_cast<size_t>(k)].name != other.factor(k).name ||
        factors_[static_cast<size_t>(k)].cardinality != other.factor(k).cardinality)
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// AnnotatedDataset
// ---------------------------------------------------------------------------

AnnotatedDataset::AnnotatedDataset(FactorSpec spec, LatentLayout layout,
                                   std::vector<Record> records,
                                   std::vector<std::vector<std::vector<int>>> strata)
    : spec_(std::move(spec)),
      layout_(std::move(layout)),
      records_(std::move(records)),
      strata_(std::move(strata)) {}

AnnotatedDataset AnnotatedDataset::build(FactorSpec spec, LatentLayout layout,
                                         std::vector<Record> records) {
  if (records.empty()) throw ContractError("dataset needs at least one record");
  const int k_count = spec.count();

  // Validation errors are aggregated so a bad file reports everything at once.
  std::vector<std::string> errors;
  for (size_t i = 0; i < records.size(); ++i) {
    const Record& r = records[i];
    if (static_cast<int>(r.factor_values.size()) != k_count) {
      std::ostringstream msg;
      msg << "record " << i << ": expected " << k_count << " factor values, got "
          << r.factor_values.size();
      errors.push_back(msg.str());
      continue;
    }
    for (int k = 0; k < k_count; ++k) {
      const int v = r.factor_values[static_cast<size_t>(k)];
      if (v < 0 || v >= spec.factor(k).cardinality) {
        std::ostringstream msg;
        msg << "record " << i << ": factor '" << spec.factor(k).name << "' value " << v
            << " out of range [0, " << spec.factor(k).cardinality << ")";
        errors.push_back(msg.str());
      }
    }
    try {
      validate_posterior(r.posterior, layout);
    } catch (const ContractError& e) {
      std::ostringstream msg;
      msg << "record " << i << ": " << e.what();
      errors.push_back(msg.str());
    }
  }

  std::vector<std::vector<std::vector<int>>> strata(static_cast<size_t>(k_count));
  if (errors.empty()) {
    for (int k = 0; k < k_count; ++k)
      strata[static_cast<size_t>(k)].resize(static_cast<size_t>(spec.factor(k).cardinality));
    for (size_t i = 0; i < records.size(); ++i) {
      for (int k = 0; k < k_count; ++k) {
        const int v = records[i].factor_values[static_cast<size_t>(k)];
        strata[static_cast<size_t>(k)][static_cast<size_t>(v)].push_back(static_cast<int>(i));
      }
    }
    for (int k = 0; k < k_count; ++k) {
      for (int v = 0; v < spec.factor(k).cardinality; ++v) {
        if (strata[static_cast<size_t>(k)][static_cast<size_t>(v)].empty()) {
          std::ostringstream msg;
          msg << "empty stratum: factor '" << spec.factor(k).name << "' has no record with value "
              << v;
          errors.push_back(msg.str());
        }
      }
    }
  }

  if (!errors.empty()) {
    std::ostringstream msg;
    msg << "dataset validation failed (" << errors.size() << " problem"
        << (errors.size() == 1 ? "" : "s") << "):";
    for (const std::string& e : errors) msg << "\n  - " << e;
    throw ContractError(msg.str());
  }

  return AnnotatedDataset(std::move(spec), std::move(layout), std::move(records),
                          std::move(strata));
}

const std::vector<int>& AnnotatedDataset::stratum(int k, int v) const {
  if (k < 0 || k >= spec_.count()) throw ContractError("factor index out of range");
  if (v < 0 || v >= spec_.factor(k).cardinality)
    throw ContractError("factor value out of range");
  return strata_[static_cast<size_t>(k)][static_cast<size_t>(v)];
}

double AnnotatedDataset::factor_entropy(int k) const {
  if (k < 0 || k >= spec_.count()) throw ContractError("factor index out of range");
  const double n = static_cast<double>(size());
  double h = 0.0;
  for (const std::vector<int>& bucket : strata_[static_cast<size_t>(k)]) {
    if (bucket.empty()) continue;
    const double p = static_cast<double>(bucket.size()) / n;
    h -= p * std::log(p);
  }
  return h;
}

double AnnotatedDataset::uniform_deviation(int k) const {
  if (k < 0 || k >= spec_.count()) throw ContractError("factor index out of range");
  const double n = static_cast<double>(size());
  const double uniform = 1.0 / static_cast<double>(spec_.factor(k).cardinality);
  double tv = 0.0;
  for (const std::vector<int>& bucket : strata_[static_cast<size_t>(k)])
    tv += std::abs(static_cast<double>(bucket.size()) / n - uniform);
  return 0.5 * tv;
}

// ---------------------------------------------------------------------------
// JSON-lines serialization
// ---------------------------------------------------------------------------

namespace {

Eigen::VectorXd vector_from_json(const json& j, const char* where) {
  if (!j.is_array()) throw ContractError(std::string(where) + ": expected an array");
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

Eigen::MatrixXd matrix_from_json(const json& j, const char* where) {
  if (!j.is_array() || j.empty())
    throw ContractError(std::string(where) + ": expected a non-empty array of rows");
  const size_t rows = j.size();
  const size_t cols = j[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols)
      throw ContractError(std::string(where) + ": ragged matrix rows");
    for (size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json j = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(row);
  }
  return j;
}

std::variant<DiagGaussian, FullGaussian> gaussian_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "diag_gaussian") {
    return DiagGaussian{vector_from_json(j.at("mean"), "mean"),
                        vector_from_json(j.at("std"), "std")};
  }
  if (type == "full_gaussian") {
    return FullGaussian{vector_from_json(j.at("mean"), "mean"),
                        matrix_from_json(j.at("cov"), "cov")};
  }
  throw ContractError("unknown gaussian type '" + type + "'");
}

PosteriorParams posterior_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "diag_gaussian" || type == "full_gaussian") {
    auto g = gaussian_from_json(j);
    if (auto* d = std::get_if<DiagGaussian>(&g)) return *d;
    return std::get<FullGaussian>(g);
  }
  if (type == "mixed") {
    Mixed mixed;
    mixed.gaussian = gaussian_from_json(j.at("gaussian"));
    for (const json& p : j.at("categorical"))
      mixed.categorical.push_back(vector_from_json(p, "categorical"));
    return mixed;
  }
  throw ContractError("unknown posterior type '" + type + "'");
}

json gaussian_to_json(const std::variant<DiagGaussian, FullGaussian>& g) {
  json j;
  if (const auto* d = std::get_if<DiagGaussian>(&g)) {
    j["type"] = "diag_gaussian";
    j["mean"] = vector_to_json(d->mean);
    j["std"] = vector_to_json(d->std);
  } else {
    const auto& f = std::get<FullGaussian>(g);
    j["type"] = "full_gaussian";
    j["mean"] = vector_to_json(f.mean);
    j["cov"] = matrix_to_json(f.cov);
  }
  return j;
}

json posterior_to_json(const PosteriorParams& p) {
  if (const auto* d = std::get_if<DiagGaussian>(&p)) return gaussian_to_json(*d);
  if (const auto* f = std::get_if<FullGaussian>(&p)) return gaussian_to_json(*f);
  const auto& m = std::get<Mixed>(p);
  json j;
  j["type"] = "mixed";
  j["gaussian"] = gaussian_to_json(m.gaussian);
  json cats = json::array();
  for (const Eigen::VectorXd& c : m.categorical) cats.push_back(vector_to_json(c));
  j["categorical"] = cats;
  return j;
}

LatentLayout layout_from_json(const json& j) {
  std::vector<VariableSlot> slots;
  for (const json& s : j) {
    const std::string type = s.at("type").get<std::string>();
    if (type == "continuous") {
      slots.push_back(VariableSlot::continuous());
    } else if (type == "categorical") {
      slots.push_back(VariableSlot::categorical(s.at("arms").get<int>()));
    } else {
      throw ContractError("unknown slot type '" + type + "'");
    }
  }
  return LatentLayout(std::move(slots));
}

json layout_to_json(const LatentLayout& layout) {
  json j = json::array();
  for (int i = 0; i < layout.size(); ++i) {
    if (layout.slot(i).kind == SlotKind::Continuous) {
      j.push_back(json{{"type", "continuous"}});
    } else {
      j.push_back(json{{"type", "categorical"}, {"arms", layout.slot(i).arms}});
    }
  }
  return j;
}

}  // namespace

AnnotatedDataset read_dataset_jsonl(std::istream& in) {
  std::string line;
  int line_no = 0;

  auto fail = [&](const std::string& what) -> ContractError {
    std::ostringstream msg;
    msg << "dataset line " << line_no << ": " << what;
    return ContractError(msg.str());
  };

  // Header.
  json header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      header = json::parse(line);
    } catch (const json::exception& e) {
      throw fail(e.what());
    }
    break;
  }
  if (!header.contains("spec")) throw fail("missing header line with \"spec\"");

  std::vector<Factor> factors;
  try {
    for (const json& f : header.at("spec").at("factors"))
      factors.push_back({f.at("name").get<std::string>(), f.at("cardinality").get<int>()});
  } catch (const json::exception& e) {
    throw fail(e.what());
  }
  FactorSpec spec(std::move(factors));
  LatentLayout layout = [&] {
    try {
      return layout_from_json(header.at("spec").at("layout"));
    } catch (const json::exception& e) {
      throw fail(e.what());
    }
  }();

  std::vector<Record> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      Record r;
      for (const json& y : j.at("y")) r.factor_values.push_back(y.get<int>());
      r.posterior = posterior_from_json(j.at("posterior"));
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw fail(e.what());
    } catch (const ContractError& e) {
      throw fail(e.what());
    }
  }

  return AnnotatedDataset::build(std::move(spec), std::move(layout), std::move(records));
}

AnnotatedDataset read_dataset_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open dataset file '" + path + "'");
  return read_dataset_jsonl(in);
}

void write_dataset_jsonl(const AnnotatedDataset& dataset, std::ostream& out) {
  json header;
  json factors = json::array();
  for (int k = 0; k < dataset.spec().count(); ++k) {
    factors.push_back(json{{"name", dataset.spec().factor(k).name},
                           {"cardinality", dataset.spec().factor(k).cardinality}});
  }
  header["spec"] = json{{"factors", factors}, {"layout", layout_to_json(dataset.layout())}};
  out << header.dump() << "\n";

  for (int i = 0; i < dataset.size(); ++i) {
    const Record& r = dataset.record(i);
    json j;
    j["y"] = r.factor_values;
    j["posterior"] = posterior_to_json(r.posterior);
    out << j.dump() << "\n";
  }
}

void write_dataset_jsonl(const AnnotatedDataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ContractError("cannot open output file '" + path + "'");
  write_dataset_jsonl(dataset, out);
}

}  // namespace pidisent
