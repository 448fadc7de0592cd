// SPDX-License-Identifier: Apache-2.0
#include "stutter/therapy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "stutter/error.hpp"

namespace stutter {

namespace {

constexpr double kTau = 1e-12;

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    out.push_back(field);
  }
  return out;
}

int parse_int(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "line " + std::to_string(line) + ": '" + s + "' is not an integer");
  }
}

std::string_view driver_name(TherapySpec::Driver d) {
  return d == TherapySpec::Driver::Prolongation ? "prolongation" : "repetition";
}

}  // namespace

std::string_view to_string(TherapyLevel level) {
  switch (level) {
    case TherapyLevel::Easy: return "easy";
    case TherapyLevel::Medium: return "medium";
    case TherapyLevel::Hard: return "hard";
  }
  return "medium";
}

TherapyCatalog TherapyCatalog::default_catalog() {
  return {{{"Therapy 1", TherapySpec::Driver::Prolongation, 2}, {"Therapy 2", TherapySpec::Driver::Repetition, 2}}};
}

void TherapyCatalog::validate() const {
  if (therapies.empty()) throw Error(ErrorCode::InvalidArgument, "catalog needs at least one therapy");
  std::set<std::string> seen;
  for (const auto& t : therapies) {
    if (t.name.empty()) throw Error(ErrorCode::InvalidArgument, "therapy names must be non-empty");
    if (t.name.find(',') != std::string::npos) throw Error(ErrorCode::InvalidArgument, "therapy names cannot contain ','");
    if (!seen.insert(t.name).second) throw Error(ErrorCode::InvalidArgument, "duplicate therapy '" + t.name + "'");
  }
}

std::vector<std::string> TherapyCatalog::names() const {
  std::vector<std::string> out;
  for (const auto& t : therapies) out.push_back(t.name);
  return out;
}

void to_json(nlohmann::json& j, const TherapyCatalog& c) {
  j = nlohmann::json{{"therapies", nlohmann::json::array()}};
  for (const auto& t : c.therapies) {
    j["therapies"].push_back({{"name", t.name}, {"driver", driver_name(t.driver)}, {"min_gap", t.min_gap}});
  }
}

void from_json(const nlohmann::json& j, TherapyCatalog& c) {
  c.therapies.clear();
  for (const auto& tj : j.at("therapies")) {
    TherapySpec t;
    t.name = tj.at("name").get<std::string>();
    const auto driver = tj.value("driver", std::string("repetition"));
    if (driver == "prolongation") {
      t.driver = TherapySpec::Driver::Prolongation;
    } else if (driver == "repetition") {
      t.driver = TherapySpec::Driver::Repetition;
    } else {
      throw Error(ErrorCode::InvalidArgument, "therapy driver must be 'prolongation' or 'repetition'");
    }
    t.min_gap = tj.value("min_gap", 2);
    c.therapies.push_back(std::move(t));
  }
  c.validate();
}

std::vector<RuleDatasetRow> generate_rule_dataset(const TherapyCatalog& catalog) {
  catalog.validate();
  std::vector<RuleDatasetRow> rows;
  for (int p = 1; p <= 4; ++p) {
    for (int r = 1; r <= 4; ++r) {
      for (int i = 1; i <= 4; ++i) {
        RuleDatasetRow row{p, r, i, {}};
        for (const auto& t : catalog.therapies) {
          const int driver = t.driver == TherapySpec::Driver::Prolongation ? p : r;
          row.labels.push_back(driver - i >= t.min_gap ? 1 : 0);
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

void write_rule_dataset_csv(const std::filesystem::path& path, const RuleDataset& data) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << "prolongation,repetition,improvement";
  for (const auto& n : data.therapy_names) out << ',' << n;
  out << '\n';
  for (const auto& row : data.rows) {
    out << row.prolongation << ',' << row.repetition << ',' << row.improvement;
    for (int l : row.labels) out << ',' << l;
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

RuleDataset read_rule_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::InvalidArgument, path.string() + " is empty");
  auto header = split_csv(line);
  if (header.size() < 4 || header[0] != "prolongation" || header[1] != "repetition" || header[2] != "improvement") {
    throw Error(ErrorCode::InvalidArgument,
                "rule dataset header must start with prolongation,repetition,improvement and name a therapy");
  }
  RuleDataset data;
  data.therapy_names.assign(header.begin() + 3, header.end());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + ": expected " +
                                                  std::to_string(header.size()) + " fields");
    }
    RuleDatasetRow row;
    row.prolongation = parse_int(fields[0], line_no);
    row.repetition = parse_int(fields[1], line_no);
    row.improvement = parse_int(fields[2], line_no);
    for (int v : {row.prolongation, row.repetition, row.improvement}) {
      if (v < 1 || v > 4) throw Error(ErrorCode::OutOfRange, "line " + std::to_string(line_no) + ": bucket must be 1..4");
    }
    for (std::size_t k = 3; k < fields.size(); ++k) {
      const int l = parse_int(fields[k], line_no);
      if (l != 0 && l != 1) throw Error(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + ": labels are 0/1");
      row.labels.push_back(l);
    }
    data.rows.push_back(std::move(row));
  }
  return data;
}

double PolynomialKernel::operator()(std::span<const double> a, std::span<const double> b) const {
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return std::pow(gamma * dot + coef0, degree);
}

double SvmModel::decision(std::span<const double> x) const {
  if (constant) return *constant == 1 ? 1.0 : -1.0;
  double f = bias;
  for (std::size_t i = 0; i < support_vectors.size(); ++i) f += alphas[i] * labels[i] * kernel(support_vectors[i], x);
  return f;
}

int SvmModel::predict(std::span<const double> x) const {
  if (constant) return *constant;
  return decision(x) >= 0.0 ? 1 : 0;
}

SmoResult smo_train(const std::vector<std::vector<double>>& samples, std::span<const int> labels,
                    const PolynomialKernel& kernel, const SmoOptions& opts) {
  const std::size_t n = samples.size();
  if (labels.size() != n) throw Error(ErrorCode::ShapeMismatch, "sample/label count mismatch");
  if (n == 0) throw Error(ErrorCode::EmptyDataset, "no training samples");
  if (!(opts.C > 0.0)) throw Error(ErrorCode::InvalidArgument, "C must be positive");

  SmoResult res;
  res.y.resize(n);
  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw Error(ErrorCode::InvalidArgument, "labels must be 0 or 1");
    res.y[i] = labels[i] == 1 ? 1 : -1;
    has_pos |= labels[i] == 1;
    has_neg |= labels[i] == 0;
  }
  if (!has_pos || !has_neg) throw Error(ErrorCode::SingleClass, "training labels contain a single class");

  // Q_ij = y_i y_j k(x_i, x_j)
  std::vector<double> q(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = res.y[i] * res.y[j] * kernel(samples[i], samples[j]);
      q[i * n + j] = v;
      q[j * n + i] = v;
    }
  }

  const double C = opts.C;
  std::vector<double>& alpha = res.alphas;
  alpha.assign(n, 0.0);
  std::vector<double> grad(n, -1.0);
  const auto& y = res.y;
  auto in_up = [&](std::size_t t) { return (y[t] == 1 && alpha[t] < C) || (y[t] == -1 && alpha[t] > 0.0); };
  auto in_low = [&](std::size_t t) { return (y[t] == -1 && alpha[t] < C) || (y[t] == 1 && alpha[t] > 0.0); };

  const std::size_t max_iter = std::max<std::size_t>(1, opts.max_passes) * n;
  bool converged = false;
  for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
    double g_max = -std::numeric_limits<double>::infinity();
    double g_min = std::numeric_limits<double>::infinity();
    std::size_t i = n, j = n;
    // Ties go to the lexicographically smaller sample, so the path does not
    // depend on row order.
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -y[t] * grad[t];
      if (in_up(t) && (v > g_max || (v == g_max && samples[t] < samples[i]))) {
        g_max = v;
        i = t;
      }
      if (in_low(t) && (v < g_min || (v == g_min && samples[t] < samples[j]))) {
        g_min = v;
        j = t;
      }
    }
    res.kkt_gap = g_max - g_min;
    if (i == n || j == n || res.kkt_gap < opts.tolerance) {
      converged = true;
      break;
    }

    const double* qi = &q[i * n];
    const double* qj = &q[j * n];
    const double old_i = alpha[i], old_j = alpha[j];
    if (y[i] != y[j]) {
      double quad = qi[i] + qj[j] + 2.0 * qi[j];
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = C - diff;
        }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      double quad = qi[i] + qj[j] - 2.0 * qi[j];
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = sum - C;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) {
          alpha[j] = C;
          alpha[i] = sum - C;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }
    const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
    for (std::size_t t = 0; t < n; ++t) grad[t] += qi[t] * di + qj[t] * dj;
  }
  if (!converged) {
    throw Error(ErrorCode::NoConvergence, "KKT gap " + std::to_string(res.kkt_gap) + " after " +
                                              std::to_string(res.iterations) + " iterations");
  }

  // rho from free vectors, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (alpha[t] >= C) {
      if (y[t] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0.0) {
      if (y[t] == 1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      free_sum += yg;
    }
  }
  const double rho = n_free > 0 ? free_sum / static_cast<double>(n_free) : (ub + lb) / 2.0;

  SvmModel& m = res.model;
  m.kernel = kernel;
  m.C = C;
  m.bias = -rho;
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] > 0.0) {
      res.support_indices.push_back(t);
      m.support_vectors.push_back(samples[t]);
      m.alphas.push_back(alpha[t]);
      m.labels.push_back(y[t]);
    }
  }
  return res;
}

std::vector<double> profile_features(const StutterProfile& profile) {
  return {static_cast<double>(profile.prolongation.level), static_cast<double>(profile.repetition.level),
          static_cast<double>(profile.improvement.level)};
}

int TherapyRecommender::predict(std::size_t therapy, const StutterProfile& profile) const {
  if (therapy >= per_therapy.size()) throw Error(ErrorCode::NotTrained, "no model for therapy index " + std::to_string(therapy));
  return per_therapy[therapy].predict(profile_features(profile));
}

void to_json(nlohmann::json& j, const TherapyRecommender& r) {
  j = nlohmann::json{{"kernel", {{"d", r.kernel.degree}, {"gamma", r.kernel.gamma}, {"r", r.kernel.coef0}}},
                     {"C", r.C},
                     {"per_therapy", nlohmann::json::array()}};
  for (std::size_t k = 0; k < r.per_therapy.size(); ++k) {
    const auto& m = r.per_therapy[k];
    nlohmann::json t{{"name", r.therapy_names[k]},
                     {"support_vectors", m.support_vectors},
                     {"alphas", m.alphas},
                     {"labels", m.labels},
                     {"bias", m.bias}};
    t["constant"] = m.constant ? nlohmann::json(*m.constant) : nlohmann::json(nullptr);
    j["per_therapy"].push_back(std::move(t));
  }
}

void from_json(const nlohmann::json& j, TherapyRecommender& r) {
  r.kernel.degree = j.at("kernel").at("d").get<int>();
  r.kernel.gamma = j.at("kernel").at("gamma").get<double>();
  r.kernel.coef0 = j.at("kernel").at("r").get<double>();
  r.C = j.at("C").get<double>();
  r.therapy_names.clear();
  r.per_therapy.clear();
  for (const auto& t : j.at("per_therapy")) {
    SvmModel m;
    m.kernel = r.kernel;
    m.C = r.C;
    m.support_vectors = t.at("support_vectors").get<std::vector<std::vector<double>>>();
    m.alphas = t.at("alphas").get<std::vector<double>>();
    m.labels = t.at("labels").get<std::vector<int>>();
    m.bias = t.at("bias").get<double>();
    if (t.contains("constant") && !t.at("constant").is_null()) m.constant = t.at("constant").get<int>();
    if (m.alphas.size() != m.support_vectors.size() || m.labels.size() != m.support_vectors.size()) {
      throw Error(ErrorCode::CorruptModel, "support vector arrays disagree in length");
    }
    r.therapy_names.push_back(t.at("name").get<std::string>());
    r.per_therapy.push_back(std::move(m));
  }
}

TherapyRecommender train_recommender(const RuleDataset& data, const PolynomialKernel& kernel, const SmoOptions& opts) {
  if (data.rows.empty()) throw Error(ErrorCode::EmptyDataset, "rule dataset has no rows");
  TherapyRecommender rec;
  rec.kernel = kernel;
  rec.C = opts.C;
  rec.therapy_names = data.therapy_names;

  std::vector<std::vector<double>> x;
  for (const auto& row : data.rows) {
    if (row.labels.size() != data.therapy_names.size()) {
      throw Error(ErrorCode::ShapeMismatch, "row label count disagrees with therapy columns");
    }
    x.push_back({static_cast<double>(row.prolongation), static_cast<double>(row.repetition),
                 static_cast<double>(row.improvement)});
  }
  for (std::size_t k = 0; k < data.therapy_names.size(); ++k) {
    std::vector<int> y;
    for (const auto& row : data.rows) y.push_back(row.labels[k]);
    try {
      rec.per_therapy.push_back(smo_train(x, y, kernel, opts).model);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::SingleClass) throw;
      SvmModel constant;
      constant.kernel = kernel;
      constant.C = opts.C;
      constant.constant = y.front();
      rec.per_therapy.push_back(std::move(constant));
      rec.warnings.push_back("'" + data.therapy_names[k] + "' has a single class; predicting constant " +
                             std::to_string(y.front()));
    }
  }
  return rec;
}

double recommender_accuracy(const TherapyRecommender& recommender, const RuleDataset& data, std::size_t therapy) {
  if (data.rows.empty()) throw Error(ErrorCode::EmptyDataset, "rule dataset has no rows");
  std::size_t hits = 0;
  for (const auto& row : data.rows) {
    StutterProfile p{{row.prolongation}, {row.repetition}, {row.improvement}};
    if (recommender.predict(therapy, p) == row.labels.at(therapy)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.rows.size());
}

void to_json(nlohmann::json& j, const TherapyAssignment& a) {
  j = nlohmann::json{{"items", nlohmann::json::array()}};
  for (const auto& item : a.items) j["items"].push_back({{"therapy", item.therapy}, {"level", to_string(item.level)}});
}

TherapyLevel therapy_level(const StutterProfile& profile) {
  const int severity = std::max(profile.prolongation.level, profile.repetition.level);
  const int improvement = profile.improvement.level;
  if (improvement >= 3 && severity <= 2) return TherapyLevel::Hard;
  if (severity >= 3 && improvement <= 2) return TherapyLevel::Easy;
  return TherapyLevel::Medium;
}

TherapyAssignment recommend(const TherapyRecommender& recommender, const StutterProfile& profile,
                            const TherapyCatalog& catalog) {
  if (recommender.per_therapy.empty()) throw Error(ErrorCode::NotTrained, "recommender has no trained therapies");
  TherapyAssignment out;
  const TherapyLevel level = therapy_level(profile);
  for (const auto& t : catalog.therapies) {
    auto it = std::find(recommender.therapy_names.begin(), recommender.therapy_names.end(), t.name);
    if (it == recommender.therapy_names.end()) {
      throw Error(ErrorCode::NotTrained, "recommender was not trained for '" + t.name + "'");
    }
    const auto k = static_cast<std::size_t>(it - recommender.therapy_names.begin());
    if (recommender.predict(k, profile) == 1) out.items.push_back({t.name, level});
  }
  return out;
}

}  // namespace stutter
