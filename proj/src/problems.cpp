#include "adapd/problems.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>

#include "adapd/errors.hpp"
#include "adapd/rng.hpp"

namespace adapd {

// ------------------------------------------------------------ Objective

Vector Objective::batch_gradient(int, const Vector&, const std::vector<std::size_t>&) const {
  throw InvalidParameterError(kind() + " objective has no mini-batch gradient");
}

std::optional<double> Objective::max_smoothness() const {
  double l = 0.0;
  for (int i = 0; i < n_agents(); ++i) {
    const auto li = smoothness(i);
    if (!li) return std::nullopt;
    l = std::max(l, *li);
  }
  return l;
}

Matrix Objective::stacked_gradient(const Matrix& x) const {
  Matrix g(x.rows(), x.cols());
  for (int i = 0; i < n_agents(); ++i) g.row(i) = gradient(i, x.row(i).transpose()).transpose();
  return g;
}

double Objective::sum_value(const Matrix& x) const {
  double s = 0.0;
  for (int i = 0; i < n_agents(); ++i) s += value(i, x.row(i).transpose());
  return s;
}

Vector Objective::mean_gradient(const Vector& x) const {
  Vector g = Vector::Zero(dim());
  for (int i = 0; i < n_agents(); ++i) g += gradient(i, x);
  return g / n_agents();
}

// ------------------------------------------------------------ quadratic

QuadraticConsensus::QuadraticConsensus(Matrix targets, std::optional<Vector> weights)
    : targets_(std::move(targets)) {
  if (targets_.rows() < 1 || targets_.cols() < 1)
    throw DimensionMismatchError("quadratic targets must be a non-empty N x p matrix");
  if (weights) {
    if (weights->size() != targets_.rows())
      throw DimensionMismatchError("quadratic weights need one entry per agent");
    if ((weights->array() <= 0.0).any())
      throw InvalidParameterError("quadratic weights must be positive");
    weights_ = *weights;
  } else {
    weights_ = Vector::Ones(targets_.rows());
  }
}

double QuadraticConsensus::value(int i, const Vector& x) const {
  return 0.5 * weights_[i] * (x - targets_.row(i).transpose()).squaredNorm();
}

Vector QuadraticConsensus::gradient(int i, const Vector& x) const {
  return weights_[i] * (x - targets_.row(i).transpose());
}

std::optional<Vector> QuadraticConsensus::solve_subproblem(int i, const Vector& y,
                                                           const Vector& x0, double eta) const {
  const double c = weights_[i];
  return ((eta * c) * targets_.row(i).transpose() + x0 - eta * y) / (1.0 + eta * c);
}

Vector QuadraticConsensus::minimizer() const {
  return (targets_.transpose() * weights_) / weights_.sum();
}

std::shared_ptr<QuadraticConsensus> quadratic_consensus(Matrix targets,
                                                        std::optional<Vector> weights) {
  return std::make_shared<QuadraticConsensus>(std::move(targets), std::move(weights));
}

// --------------------------------------------------------------- libsvm

namespace {

struct Token {
  std::string_view text;
  std::size_t column;  // 1-based
};

std::vector<Token> split_ws(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= line.size()) break;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    out.push_back({line.substr(start, i - start), start + 1});
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  const std::string buf(s);
  char* end = nullptr;
  errno = 0;
  out = std::strtod(buf.c_str(), &end);
  return end == buf.c_str() + buf.size() && errno != ERANGE && std::isfinite(out);
}

bool parse_index(std::string_view s, long& out) {
  if (s.empty()) return false;
  const std::string buf(s);
  char* end = nullptr;
  errno = 0;
  out = std::strtol(buf.c_str(), &end, 10);
  return end == buf.c_str() + buf.size() && errno != ERANGE;
}

}  // namespace

BinaryDataset parse_libsvm(std::istream& in, std::optional<int> dim) {
  if (dim && *dim < 1) throw InvalidParameterError("libsvm dimension must be positive");
  struct Row {
    double label;
    std::vector<std::pair<int, double>> entries;
  };
  std::vector<Row> rows;
  int max_index = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view(line);
    if (const auto hash = view.find('#'); hash != std::string_view::npos)
      view = view.substr(0, hash);
    const auto tokens = split_ws(view);
    if (tokens.empty()) continue;

    Row row;
    double raw = 0.0;
    if (!parse_double(tokens[0].text, raw))
      throw ParseError("unparseable label '" + std::string(tokens[0].text) + "'", lineno,
                       tokens[0].column);
    if (raw == 1.0) {
      row.label = 1.0;
    } else if (raw == -1.0 || raw == 0.0) {
      row.label = -1.0;
    } else {
      throw LabelDomainError("label " + std::string(tokens[0].text) +
                                 " outside {-1, +1, 0, 1}",
                             lineno, tokens[0].column);
    }

    int last = 0;
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      const auto& tok = tokens[t];
      const auto colon = tok.text.find(':');
      if (colon == std::string_view::npos)
        throw ParseError("expected idx:val, got '" + std::string(tok.text) + "'", lineno,
                         tok.column);
      long idx = 0;
      if (!parse_index(tok.text.substr(0, colon), idx) || idx < 1)
        throw ParseError("bad feature index in '" + std::string(tok.text) + "'", lineno,
                         tok.column);
      double val = 0.0;
      if (!parse_double(tok.text.substr(colon + 1), val))
        throw ParseError("bad feature value in '" + std::string(tok.text) + "'", lineno,
                         tok.column + colon + 1);
      if (dim && idx > *dim)
        throw ParseError("feature index " + std::to_string(idx) + " exceeds dimension " +
                             std::to_string(*dim),
                         lineno, tok.column);
      if (idx <= last)
        throw ParseError("feature indices must be strictly increasing", lineno, tok.column);
      last = static_cast<int>(idx);
      row.entries.emplace_back(static_cast<int>(idx), val);
    }
    max_index = std::max(max_index, last);
    rows.push_back(std::move(row));
  }
  if (in.bad()) throw DataError("read error while parsing libsvm input");

  const int p = dim.value_or(std::max(max_index, 1));
  BinaryDataset ds;
  ds.features = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), p);
  ds.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    ds.labels[r] = rows[r].label;
    for (auto [idx, val] : rows[r].entries) ds.features(r, idx - 1) = val;
  }
  return ds;
}

BinaryDataset parse_libsvm(const std::string& path, std::optional<int> dim) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open libsvm file '" + path + "'");
  return parse_libsvm(in, dim);
}

BinaryDataset partition_uniform(const BinaryDataset& data, int n_agents, std::uint64_t seed) {
  const int m = data.n_samples();
  if (n_agents < 1) throw InvalidPartitionError("need at least one agent");
  if (n_agents > m)
    throw InvalidPartitionError("cannot split " + std::to_string(m) + " samples across " +
                                std::to_string(n_agents) + " agents");
  std::vector<int> perm(m);
  for (int i = 0; i < m; ++i) perm[i] = i;
  CounterRng rng(seed, streams::kPartition);
  rng.shuffle(perm);

  BinaryDataset out;
  out.features.resize(m, data.dim());
  out.labels.resize(m);
  for (int r = 0; r < m; ++r) {
    out.features.row(r) = data.features.row(perm[r]);
    out.labels[r] = data.labels[perm[r]];
  }
  const int base = m / n_agents;
  const int extra = m % n_agents;
  int begin = 0;
  for (int i = 0; i < n_agents; ++i) {
    const int size = base + (i < extra ? 1 : 0);
    out.partition.emplace_back(begin, begin + size);
    begin += size;
  }
  return out;
}

BinaryDataset synthetic_logistic_data(int m, int p, std::uint64_t seed) {
  if (m < 1 || p < 1) throw InvalidParameterError("synthetic data needs m, p >= 1");
  CounterRng rng(seed, streams::kData);
  Vector w(p);
  for (int d = 0; d < p; ++d) w[d] = rng.normal();
  BinaryDataset ds;
  ds.features.resize(m, p);
  ds.labels.resize(m);
  for (int j = 0; j < m; ++j) {
    for (int d = 0; d < p; ++d) ds.features(j, d) = rng.normal();
    const double z = ds.features.row(j).dot(w);
    const double prob = 1.0 / (1.0 + std::exp(-z));
    ds.labels[j] = rng.uniform() < prob ? 1.0 : -1.0;
  }
  return ds;
}

// ------------------------------------------------------------- logistic

namespace {

// log(1 + exp(-s)) without overflow.
double softplus_neg(double s) {
  return s > 0 ? std::log1p(std::exp(-s)) : -s + std::log1p(std::exp(s));
}

// 1 / (1 + exp(s)).
double sigmoid_neg(double s) {
  if (s >= 0) {
    const double e = std::exp(-s);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(s));
}

}  // namespace

LogisticNonconvex::LogisticNonconvex(const BinaryDataset& data, double alpha)
    : alpha_(alpha), p_(data.dim()) {
  if (!(alpha >= 0.0)) throw InvalidParameterError("alpha must be non-negative");
  if (data.partition.empty()) throw InvalidPartitionError("dataset has no agent partition");
  if (data.labels.size() != data.features.rows())
    throw DimensionMismatchError("label count differs from feature rows");
  for (Eigen::Index j = 0; j < data.labels.size(); ++j)
    if (data.labels[j] != 1.0 && data.labels[j] != -1.0)
      throw InvalidParameterError("labels must be in {-1, +1}");

  for (std::size_t i = 0; i < data.partition.size(); ++i) {
    const auto [b, e] = data.partition[i];
    if (e <= b)
      throw InvalidPartitionError("agent " + std::to_string(i) + " has an empty partition");
    if (b < 0 || e > data.n_samples())
      throw InvalidPartitionError("agent " + std::to_string(i) + " partition out of range");
    Block blk{data.features.middleRows(b, e - b), data.labels.segment(b, e - b)};
    const Matrix gram = blk.features.transpose() * blk.features;
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
    const double smax2 = std::max(0.0, es.eigenvalues().maxCoeff());
    lipschitz_.push_back(0.25 * smax2 / static_cast<double>(e - b) + 2.0 * alpha_);
    blocks_.push_back(std::move(blk));
  }
}

double LogisticNonconvex::reg_value(const Vector& x) const {
  const auto sq = x.array().square();
  return alpha_ * (sq / (1.0 + sq)).sum();
}

Vector LogisticNonconvex::reg_gradient(const Vector& x) const {
  const auto den = (1.0 + x.array().square()).square();
  return (2.0 * alpha_) * (x.array() / den).matrix();
}

double LogisticNonconvex::value(int i, const Vector& x) const {
  const Block& b = blocks_[i];
  const Vector margin = b.labels.cwiseProduct(b.features * x);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < margin.size(); ++j) loss += softplus_neg(margin[j]);
  return loss / static_cast<double>(margin.size()) + reg_value(x);
}

Vector LogisticNonconvex::gradient(int i, const Vector& x) const {
  const Block& b = blocks_[i];
  const Vector margin = b.labels.cwiseProduct(b.features * x);
  Vector coef(margin.size());
  for (Eigen::Index j = 0; j < margin.size(); ++j)
    coef[j] = -b.labels[j] * sigmoid_neg(margin[j]);
  return b.features.transpose() * coef / static_cast<double>(margin.size()) + reg_gradient(x);
}

Vector LogisticNonconvex::batch_gradient(int i, const Vector& x,
                                         const std::vector<std::size_t>& batch) const {
  if (batch.empty()) throw InvalidParameterError("empty mini-batch");
  const Block& b = blocks_[i];
  Vector g = Vector::Zero(p_);
  for (std::size_t j : batch) {
    if (j >= static_cast<std::size_t>(b.features.rows()))
      throw InvalidParameterError("mini-batch index out of range");
    const double s = b.labels[j] * b.features.row(j).dot(x);
    g -= (b.labels[j] * sigmoid_neg(s)) * b.features.row(j).transpose();
  }
  return g / static_cast<double>(batch.size()) + reg_gradient(x);
}

std::shared_ptr<LogisticNonconvex> logistic_nonconvex(const BinaryDataset& data, double alpha) {
  return std::make_shared<LogisticNonconvex>(data, alpha);
}

// --------------------------------------------------------- localization

Vector LocalizationInstance::stacked_targets() const {
  Vector v(2 * n_targets());
  for (int t = 0; t < n_targets(); ++t) {
    v[2 * t] = targets(t, 0);
    v[2 * t + 1] = targets(t, 1);
  }
  return v;
}

LocalizationInstance localization_instance_on(Matrix positions, int n_targets, double sigma2,
                                              std::uint64_t seed) {
  if (positions.rows() < 2 || positions.cols() != 2)
    throw InvalidParameterError("localization needs at least two agents with 2-d positions");
  if (n_targets < 1) throw InvalidParameterError("localization needs at least one target");
  if (!(sigma2 >= 0.0)) throw InvalidParameterError("noise variance must be non-negative");
  const int n = static_cast<int>(positions.rows());
  LocalizationInstance inst;
  inst.positions = std::move(positions);
  inst.sigma2 = sigma2;
  CounterRng data_rng(seed, streams::kData);
  const double target_sd = std::sqrt(0.1);
  inst.targets.resize(n_targets, 2);
  for (int t = 0; t < n_targets; ++t) {
    inst.targets(t, 0) = data_rng.normal(0.0, target_sd);
    inst.targets(t, 1) = data_rng.normal(0.0, target_sd);
  }
  CounterRng noise_rng(seed, streams::kNoise);
  const double noise_sd = std::sqrt(sigma2);
  inst.noise.resize(n, n_targets);
  inst.measurements.resize(n, n_targets);
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < n_targets; ++t) {
      const double e = sigma2 > 0.0 ? noise_rng.normal(0.0, noise_sd) : 0.0;
      inst.noise(i, t) = e;
      inst.measurements(i, t) = (inst.targets.row(t) - inst.positions.row(i)).squaredNorm() + e;
    }
  return inst;
}

std::pair<Graph, LocalizationInstance> generate_localization_instance(
    int n, int n_targets, double sigma2, std::uint64_t seed, double graph_radius) {
  if (n < 2) throw InvalidParameterError("localization needs at least two agents");
  if (n_targets < 1) throw InvalidParameterError("localization needs at least one target");
  if (!(sigma2 >= 0.0)) throw InvalidParameterError("noise variance must be non-negative");
  auto geo = build_geometric(n, graph_radius, seed);
  auto inst = localization_instance_on(std::move(geo.positions), n_targets, sigma2, seed);
  return {std::move(geo.graph), std::move(inst)};
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j, const char* name) {
  if (!j.is_array()) throw DataError(std::string(name) + " must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != cols)
      throw DataError(std::string(name) + " rows have inconsistent length");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace

nlohmann::json to_json(const LocalizationInstance& inst) {
  return {{"positions", matrix_to_json(inst.positions)},
          {"targets", matrix_to_json(inst.targets)},
          {"measurements", matrix_to_json(inst.measurements)},
          {"noise", matrix_to_json(inst.noise)},
          {"sigma2", inst.sigma2}};
}

LocalizationInstance localization_from_json(const nlohmann::json& j) {
  LocalizationInstance inst;
  try {
    inst.positions = matrix_from_json(j.at("positions"), "positions");
    inst.targets = matrix_from_json(j.at("targets"), "targets");
    inst.measurements = matrix_from_json(j.at("measurements"), "measurements");
    inst.noise = matrix_from_json(j.at("noise"), "noise");
    inst.sigma2 = j.at("sigma2").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed localization instance: ") + e.what());
  }
  if (inst.positions.cols() != 2 || inst.targets.cols() != 2 ||
      inst.measurements.rows() != inst.positions.rows() ||
      inst.measurements.cols() != inst.targets.rows())
    throw DataError("localization instance arrays have inconsistent shapes");
  return inst;
}

LocalizationObjective::LocalizationObjective(LocalizationInstance inst) : inst_(std::move(inst)) {
  if (inst_.positions.cols() != 2 || inst_.targets.cols() != 2)
    throw DimensionMismatchError("positions and targets must be 2-D");
  if (inst_.measurements.rows() != inst_.positions.rows() ||
      inst_.measurements.cols() != inst_.targets.rows())
    throw DimensionMismatchError("measurements must be N x N_T");
}

double LocalizationObjective::value(int i, const Vector& x) const {
  const double wx = inst_.positions(i, 0);
  const double wy = inst_.positions(i, 1);
  double v = 0.0;
  for (int t = 0; t < inst_.n_targets(); ++t) {
    const double dx = x[2 * t] - wx;
    const double dy = x[2 * t + 1] - wy;
    const double r = inst_.measurements(i, t) - (dx * dx + dy * dy);
    v += r * r;
  }
  return 0.25 * v;
}

Vector LocalizationObjective::gradient(int i, const Vector& x) const {
  const double wx = inst_.positions(i, 0);
  const double wy = inst_.positions(i, 1);
  Vector g(dim());
  for (int t = 0; t < inst_.n_targets(); ++t) {
    const double dx = x[2 * t] - wx;
    const double dy = x[2 * t + 1] - wy;
    const double r = inst_.measurements(i, t) - (dx * dx + dy * dy);
    g[2 * t] = -r * dx;
    g[2 * t + 1] = -r * dy;
  }
  return g;
}

std::shared_ptr<LocalizationObjective> localization_objective(LocalizationInstance inst) {
  return std::make_shared<LocalizationObjective>(std::move(inst));
}

double estimate_smoothness(const Objective& f, double box, int samples, std::uint64_t seed) {
  if (!(box > 0.0) || samples < 1)
    throw InvalidParameterError("smoothness estimate needs box > 0 and samples >= 1");
  CounterRng rng(seed, "smoothness-estimate");
  const int p = f.dim();
  double best = 0.0;
  Vector x(p), y(p);
  for (int i = 0; i < f.n_agents(); ++i)
    for (int s = 0; s < samples; ++s) {
      for (int d = 0; d < p; ++d) x[d] = rng.uniform(-box, box);
      for (int d = 0; d < p; ++d) y[d] = rng.uniform(-box, box);
      const double dist = (x - y).norm();
      if (dist == 0.0) continue;
      best = std::max(best, (f.gradient(i, x) - f.gradient(i, y)).norm() / dist);
    }
  return 2.0 * best;
}

}  // namespace adapd
