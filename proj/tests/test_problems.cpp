#include <cmath>
#include <cstdlib>
#include <sstream>

#include "adapd/diagnostics.hpp"
#include "adapd/errors.hpp"
#include "adapd/problems.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace adapd;

namespace {

// Central differences with step 1e-6 (1 + |x|); max relative error over coordinates.
double fd_error(const Objective& f, int i, const Vector& x) {
  const double h = 1e-6 * (1.0 + x.norm());
  const Vector g = f.gradient(i, x);
  Vector fd(x.size());
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    Vector a = x, b = x;
    a[d] += h;
    b[d] -= h;
    fd[d] = (f.value(i, a) - f.value(i, b)) / (2.0 * h);
  }
  return (g - fd).norm() / std::max(1.0, g.norm());
}

BinaryDataset small_dataset(int m, int p, std::uint64_t seed, int n_agents) {
  return partition_uniform(synthetic_logistic_data(m, p, seed), n_agents, seed);
}

LocalizationInstance noiseless_instance() {
  auto [g, inst] = generate_localization_instance(6, 2, 0.0, 4, 1.5);
  return inst;
}

}  // namespace

// ------------------------------------------------------------- logistic

TEST_CASE("logistic at zero: log 2 and the half-label gradient") {
  const auto data = small_dataset(60, 4, 1, 3);
  const auto f = logistic_nonconvex(data, 1.0);
  const Vector zero = Vector::Zero(4);
  for (int i = 0; i < 3; ++i) {
    CHECK(f->value(i, zero) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    const auto [b, e] = data.partition[i];
    Vector expect = Vector::Zero(4);
    for (int j = b; j < e; ++j) expect -= 0.5 * data.labels[j] * data.features.row(j).transpose();
    expect /= (e - b);
    CHECK((f->gradient(i, zero) - expect).norm() < 1e-14);
  }
}

TEST_CASE("logistic single sample matches finite differences within 1e-6") {
  BinaryDataset d;
  d.features = (Matrix(1, 2) << 1.0, 0.0).finished();
  d.labels = (Vector(1) << 1.0).finished();
  d.partition = {{0, 1}};
  const LogisticNonconvex f(d, 1.0);
  const Vector x = (Vector(2) << 1.0, 1.0).finished();
  const double h = 1e-6;
  for (int k = 0; k < 2; ++k) {
    Vector a = x, b = x;
    a[k] += h;
    b[k] -= h;
    const double fd = (f.value(0, a) - f.value(0, b)) / (2 * h);
    CHECK(std::abs(f.gradient(0, x)[k] - fd) < 1e-6);
  }
  // Regularizer gradient is 2 alpha x / (1 + x^2)^2 = 0.5 at x = 1; loss part is -sigmoid(-1).
  CHECK(f.gradient(0, x)[1] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(f.gradient(0, x)[0] == doctest::Approx(-1.0 / (1.0 + std::exp(1.0)) + 0.5).epsilon(1e-14));
}

TEST_CASE("logistic supports alpha 0.01 and 1 and reports its smoothness bound") {
  const auto data = small_dataset(200, 5, 2, 4);
  for (double alpha : {0.01, 1.0}) {
    const auto f = logistic_nonconvex(data, alpha);
    for (int i = 0; i < 4; ++i) {
      const auto [b, e] = data.partition[i];
      const Matrix a = data.features.middleRows(b, e - b);
      Eigen::JacobiSVD<Matrix> svd(a);
      const double s = svd.singularValues()[0];
      CHECK(*f->smoothness(i) == doctest::Approx(0.25 * s * s / (e - b) + 2.0 * alpha));
    }
  }
}

TEST_CASE("logistic rejects an empty agent block") {
  BinaryDataset d = synthetic_logistic_data(10, 2, 3);
  d.partition = {{0, 10}, {10, 10}};
  CHECK_THROWS_AS(LogisticNonconvex(d, 0.1), InvalidPartitionError);
}

TEST_CASE("property: logistic gradients match finite differences") {
  const auto data = small_dataset(120, 6, 5, 3);
  const auto f = logistic_nonconvex(data, 1.0);
  for (int k = 0; k < 20; ++k) {
    const Vector x = testutil::random_vector(6, 100 + k, 2.0);
    CHECK(fd_error(*f, k % 3, x) < 1e-5);
  }
}

TEST_CASE("property: logistic smoothness hint bounds gradient differences") {
  const auto data = small_dataset(150, 5, 6, 3);
  const auto f = logistic_nonconvex(data, 1.0);
  for (int k = 0; k < 40; ++k) {
    const int i = k % 3;
    const Vector x = testutil::random_vector(5, 200 + k, 3.0);
    const Vector y = testutil::random_vector(5, 300 + k, 3.0);
    CHECK((f->gradient(i, x) - f->gradient(i, y)).norm() <= *f->smoothness(i) * (x - y).norm() + 1e-12);
  }
}

TEST_CASE("property: logistic with alpha = 0 is convex") {
  const auto data = small_dataset(150, 5, 7, 3);
  const auto f = logistic_nonconvex(data, 0.0);
  for (int k = 0; k < 40; ++k) {
    const int i = k % 3;
    const Vector x = testutil::random_vector(5, 400 + k, 3.0);
    const Vector y = testutil::random_vector(5, 500 + k, 3.0);
    CHECK((f->gradient(i, x) - f->gradient(i, y)).dot(x - y) >= -1e-14);
  }
}

TEST_CASE("logistic batch gradient over all samples equals the full gradient") {
  const auto data = small_dataset(40, 3, 8, 2);
  const auto f = logistic_nonconvex(data, 0.5);
  const Vector x = testutil::random_vector(3, 9);
  std::vector<std::size_t> all(f->local_samples(1));
  for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
  CHECK((f->batch_gradient(1, x, all) - f->gradient(1, x)).norm() < 1e-14);
}

TEST_CASE("logistic value is stable for large margins") {
  const auto data = small_dataset(30, 3, 10, 1);
  const auto f = logistic_nonconvex(data, 0.0);
  const Vector x = Vector::Constant(3, 1e4);
  CHECK(std::isfinite(f->value(0, x)));
  CHECK(f->gradient(0, x).allFinite());
}

// --------------------------------------------------------- localization

TEST_CASE("localization: agent sitting on every target estimate") {
  const LocalizationInstance inst = noiseless_instance();
  const auto f = localization_objective(inst);
  for (int i = 0; i < inst.n_agents(); ++i) {
    Vector x(4);
    x << inst.positions(i, 0), inst.positions(i, 1), inst.positions(i, 0), inst.positions(i, 1);
    double expect = 0.0;
    for (int t = 0; t < 2; ++t) expect += 0.25 * inst.measurements(i, t) * inst.measurements(i, t);
    CHECK(f->value(i, x) == doctest::Approx(expect).epsilon(1e-14));
    CHECK(f->gradient(i, x).norm() == 0.0);
  }
}

TEST_CASE("localization: noiseless measurements vanish at the true targets") {
  const LocalizationInstance inst = noiseless_instance();
  const auto f = localization_objective(inst);
  const Vector x = inst.stacked_targets();
  for (int i = 0; i < inst.n_agents(); ++i) {
    CHECK(std::abs(f->value(i, x)) < 1e-28);
    CHECK(f->gradient(i, x).norm() < 1e-14);
  }
  CHECK((inst.noise.array() == 0.0).all());
}

TEST_CASE("localization: gradients match finite differences") {
  auto [g, inst] = generate_localization_instance(3, 2, 0.01, 12, 3.0);
  const auto f = localization_objective(inst);
  CHECK_FALSE(f->smoothness(0).has_value());
  for (int k = 0; k < 20; ++k) {
    const Vector x = testutil::random_vector(4, 600 + k);
    CHECK(fd_error(*f, k % 3, x) < 1e-5);
  }
}

TEST_CASE("localization: measurements follow the stored-noise formula") {
  auto [g, inst] = generate_localization_instance(8, 3, 0.01, 13, 2.0);
  for (int i = 0; i < 8; ++i)
    for (int t = 0; t < 3; ++t) {
      const double d2 = (inst.targets.row(t) - inst.positions.row(i)).squaredNorm();
      CHECK(inst.measurements(i, t) == d2 + inst.noise(i, t));
    }
  CHECK(inst.sigma2 == 0.01);
}

TEST_CASE("localization: zero noise gives exact squared distances") {
  auto [g, inst] = generate_localization_instance(6, 2, 0.0, 14, 2.0);
  for (int i = 0; i < 6; ++i)
    for (int t = 0; t < 2; ++t)
      CHECK(inst.measurements(i, t) == (inst.targets.row(t) - inst.positions.row(i)).squaredNorm());
}

TEST_CASE("localization: seed replay is bit-for-bit") {
  auto [g1, a] = generate_localization_instance(10, 3, 0.01, 21, 1.0);
  auto [g2, b] = generate_localization_instance(10, 3, 0.01, 21, 1.0);
  CHECK(g1.edges() == g2.edges());
  CHECK(a.positions == b.positions);
  CHECK(a.targets == b.targets);
  CHECK(a.measurements == b.measurements);
  CHECK(a.noise == b.noise);
}

TEST_CASE("localization: fixed positions reuse, JSON round trip") {
  auto [g, a] = generate_localization_instance(10, 3, 0.01, 22, 1.0);
  const LocalizationInstance b = localization_instance_on(a.positions, 3, 0.01, 22);
  CHECK(b.targets == a.targets);
  CHECK(b.measurements == a.measurements);
  const LocalizationInstance c = localization_from_json(to_json(a));
  CHECK(c.positions == a.positions);
  CHECK(c.targets == a.targets);
  CHECK(c.measurements == a.measurements);
  CHECK(c.sigma2 == a.sigma2);
}

TEST_CASE("localization: 50 agents and 5 targets are accepted") {
  // Positions for 50 agents at radius 0.3 are rarely connected; the objective
  // itself only needs positions, so build it on a fixed connected layout.
  auto [g, base] = generate_localization_instance(50, 5, 0.01, 3, 0.6);
  const LocalizationInstance inst = localization_instance_on(base.positions, 5, 0.01, 3);
  const auto f = localization_objective(inst);
  CHECK(f->dim() == 10);
  CHECK(f->n_agents() == 50);
}

TEST_CASE("smoothness estimate bounds sampled gradient differences on the box") {
  auto [g, inst] = generate_localization_instance(6, 2, 0.01, 30, 2.0);
  const auto f = localization_objective(inst);
  const double lhat = estimate_smoothness(*f, 1.0, 200, 30);
  CHECK(lhat > 0.0);
  CounterRng rng(31, "test-box");
  int within = 0, total = 0;
  for (int k = 0; k < 200; ++k) {
    Vector x(4), y(4);
    for (int d = 0; d < 4; ++d) {
      x[d] = rng.uniform(-1.0, 1.0);
      y[d] = rng.uniform(-1.0, 1.0);
    }
    const int i = k % 6;
    ++total;
    if ((f->gradient(i, x) - f->gradient(i, y)).norm() <= 1.05 * lhat * (x - y).norm()) ++within;
  }
  CHECK(within == total);
}

// ------------------------------------------------------------ quadratic

TEST_CASE("quadratic minimizer examples") {
  Matrix same(4, 2);
  same.rowwise() = Eigen::RowVector2d(3.0, -1.0);
  CHECK((quadratic_consensus(same)->minimizer() - Eigen::Vector2d(3.0, -1.0)).norm() == 0.0);

  Matrix a(3, 2);
  a << 1, 0, 0, 1, -1, -1;
  const auto q = quadratic_consensus(a);
  CHECK(q->minimizer().norm() < 1e-15);
  CHECK(*q->smoothness(0) == 1.0);
}

TEST_CASE("quadratic: stationarity vanishes at the minimizer and mean gradient is xbar - abar") {
  const Matrix a = testutil::random_matrix(7, 3, 40);
  const auto q = quadratic_consensus(a);
  const Matrix xstar = q->minimizer().transpose().replicate(7, 1);
  CHECK(stationarity_violation(xstar, *q) < 1e-28);
  const Vector x = testutil::random_vector(3, 41);
  const Vector abar = a.colwise().mean().transpose();
  CHECK((q->mean_gradient(x) - (x - abar)).norm() < 1e-14);
}

TEST_CASE("quadratic: weighted closed-form subproblem satisfies its optimality condition") {
  const Matrix a = testutil::random_matrix(4, 3, 42);
  const Vector c = (Vector(4) << 1.0, 2.0, 0.5, 3.0).finished();
  const auto q = quadratic_consensus(a, c);
  const Vector y = testutil::random_vector(3, 43), x0 = testutil::random_vector(3, 44);
  for (int i = 0; i < 4; ++i) {
    const Vector x = *q->solve_subproblem(i, y, x0, 0.3);
    CHECK((q->gradient(i, x) + y + (x - x0) / 0.3).norm() < 1e-13);
  }
  CHECK(fd_error(*q, 2, testutil::random_vector(3, 45)) < 1e-5);
}

// -------------------------------------------------------------- libsvm

TEST_CASE("libsvm: single feature and empty rows") {
  std::istringstream in("+1 3:0.5\n-1\n");
  const BinaryDataset d = parse_libsvm(in, 4);
  REQUIRE(d.n_samples() == 2);
  CHECK(d.dim() == 4);
  CHECK(d.features.row(0) == (Eigen::RowVectorXd(4) << 0, 0, 0.5, 0).finished());
  CHECK(d.labels[0] == 1.0);
  CHECK(d.features.row(1).norm() == 0.0);
  CHECK(d.labels[1] == -1.0);
}

TEST_CASE("libsvm: labels 0 and 1, comments, inferred dimension") {
  std::istringstream in("# header\n1 1:1 2:2\n\n0 5:1\n");
  const BinaryDataset d = parse_libsvm(in);
  CHECK(d.dim() == 5);
  CHECK(d.labels[0] == 1.0);
  CHECK(d.labels[1] == -1.0);
}

TEST_CASE("libsvm: errors carry line and column") {
  {
    std::istringstream in("+1 1:0.5\n2 1:1\n");
    try {
      parse_libsvm(in);
      FAIL("expected LabelDomainError");
    } catch (const LabelDomainError& e) {
      CHECK(e.line() == 2);
      CHECK(e.column() == 1);
    }
  }
  {
    std::istringstream in("+1 1:0.5 x:2\n");
    try {
      parse_libsvm(in);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 1);
      CHECK(e.column() == 10);
    }
  }
  {
    std::istringstream in("+1 3:1 2:1\n");
    CHECK_THROWS_AS(parse_libsvm(in), ParseError);
  }
  {
    std::istringstream in("+1 5:1\n");
    CHECK_THROWS_AS(parse_libsvm(in, 4), ParseError);
  }
  CHECK_THROWS_AS(parse_libsvm(std::string("/nonexistent/a9a")), DataError);
}

TEST_CASE("libsvm: a9a training file when available") {
  const char* path = std::getenv("ADAPD_A9A_PATH");
  if (!path) {
    MESSAGE("ADAPD_A9A_PATH not set; skipping the a9a size check");
    return;
  }
  const BinaryDataset d = parse_libsvm(std::string(path), 123);
  CHECK(d.n_samples() == 32561);
  CHECK(d.dim() == 123);
}

// ----------------------------------------------------------- partitions

TEST_CASE("partition sizes") {
  const auto sizes = [](int m, int n) {
    const BinaryDataset d = partition_uniform(synthetic_logistic_data(m, 2, 1), n, 1);
    std::vector<int> s;
    for (auto [b, e] : d.partition) s.push_back(e - b);
    return s;
  };
  CHECK(sizes(10, 2) == std::vector<int>{5, 5});
  CHECK(sizes(7, 3) == std::vector<int>{3, 2, 2});
  const auto a9a = sizes(32561, 50);
  CHECK(std::count(a9a.begin(), a9a.end(), 652) == 11);
  CHECK(std::count(a9a.begin(), a9a.end(), 651) == 39);
  CHECK_THROWS_AS(sizes(3, 4), InvalidPartitionError);
}

TEST_CASE("partition is a seeded permutation covering every row once") {
  const BinaryDataset base = synthetic_logistic_data(50, 3, 2);
  const BinaryDataset a = partition_uniform(base, 4, 9);
  const BinaryDataset b = partition_uniform(base, 4, 9);
  CHECK(a.features == b.features);
  CHECK(a.partition.front().first == 0);
  CHECK(a.partition.back().second == 50);
  for (std::size_t i = 1; i < a.partition.size(); ++i)
    CHECK(a.partition[i].first == a.partition[i - 1].second);
  // Same multiset of rows: compare sorted row sums.
  std::vector<double> ra, rb;
  for (int i = 0; i < 50; ++i) {
    ra.push_back(base.features.row(i).sum() + 10 * base.labels[i]);
    rb.push_back(a.features.row(i).sum() + 10 * a.labels[i]);
  }
  std::sort(ra.begin(), ra.end());
  std::sort(rb.begin(), rb.end());
  CHECK(ra == rb);
  CHECK(partition_uniform(base, 4, 10).features != a.features);
}

TEST_CASE("synthetic data labels are in {-1, +1} and the generator is seeded") {
  const BinaryDataset a = synthetic_logistic_data(100, 4, 3);
  const BinaryDataset b = synthetic_logistic_data(100, 4, 3);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  CHECK((a.labels.array().abs() == 1.0).all());
  CHECK(a.partition.empty());
}
