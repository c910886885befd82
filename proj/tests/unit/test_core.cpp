#include "dlpt/core.hpp"
#include "dlpt/error.hpp"
#include "dlpt/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

using namespace dlpt;

namespace {

Dataset tiny(std::size_t n, const Design& design) {
  Eigen::MatrixXd x(2, static_cast<Eigen::Index>(n));
  Eigen::VectorXd t(static_cast<Eigen::Index>(n)), y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    x(0, static_cast<Eigen::Index>(i)) = static_cast<double>(i);
    x(1, static_cast<Eigen::Index>(i)) = -static_cast<double>(i);
    t[static_cast<Eigen::Index>(i)] = design.levels[i % design.m()];
    y[static_cast<Eigen::Index>(i)] = static_cast<double>(i % 2);
  }
  return Dataset(x, t, y, design);
}

}  // namespace

TEST_CASE("poly_features examples") {
  const Eigen::VectorXd a = poly_features(0.0, 3);
  CHECK(a.size() == 4);
  CHECK(a[0] == 1.0);
  CHECK(a.tail(3).isZero());

  const Eigen::VectorXd b = poly_features(1.0, 4);
  CHECK(b.size() == 5);
  CHECK((b.array() == 1.0).all());

  const Eigen::VectorXd c = poly_features(0.718, 3);
  CHECK(c[1] == doctest::Approx(0.718).epsilon(1e-15));
  CHECK(c[2] == doctest::Approx(0.515524).epsilon(1e-12));
  CHECK(c[3] == doctest::Approx(0.370146232).epsilon(1e-9));
}

TEST_CASE("poly_features rejects bad input") {
  CHECK_THROWS_AS(poly_features(std::nan(""), 2), InvalidInput);
  CHECK_THROWS_AS(poly_features(INFINITY, 2), InvalidInput);
  CHECK_THROWS_AS(poly_features(0.5, -1), InvalidInput);
}

TEST_CASE("poly_features power consistency") {
  Rng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const double t = rng.uniform(-1.5, 1.5);
    const int K = 1 + static_cast<int>(rng.below(7));
    const Eigen::VectorXd f = poly_features(t, K);
    for (int j = 0; j <= K; ++j)
      for (int k = 0; j + k <= K; ++k) CHECK(f[j] * f[k] == doctest::Approx(f[j + k]).epsilon(1e-12));
  }
}

TEST_CASE("poly_features_dt matches central differences") {
  const double h = 1e-6;
  for (double t : {0.0, 0.3, 0.9}) {
    const Eigen::VectorXd d = poly_features_dt(t, 5);
    const Eigen::VectorXd fd = (poly_features(t + h, 5) - poly_features(t - h, 5)) / (2 * h);
    CHECK((d - fd).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("design validation") {
  CHECK_NOTHROW(Design::uniform({0.0, 0.5, 1.0}).validate());
  CHECK_THROWS_AS(Design::uniform({}).validate(), InvalidInput);
  CHECK_THROWS_AS(Design::uniform({0.5, 0.2}).validate(), InvalidInput);
  CHECK_THROWS_AS(Design::uniform({0.0, 0.0}).validate(), InvalidInput);
  CHECK_THROWS_AS(Design::uniform({0.0, 1.5}).validate(), InvalidInput);
  Design bad{{0.0, 1.0}, {0.5, 0.6}, 1.0};
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  Design zero{{0.0, 1.0}, {1.0, 0.0}, 1.0};
  CHECK_THROWS_AS(zero.validate(), InvalidInput);
}

TEST_CASE("design helpers") {
  const Design d = Design::uniform({0.0, 178.0, 358.0}, 1000.0);
  const Design r = d.rescaled();
  CHECK(r.t_max == 1.0);
  CHECK(r.levels[1] == doctest::Approx(0.178));
  CHECK(d.level_index(178.0) == std::optional<std::size_t>(1));
  CHECK(!d.level_index(178.1).has_value());
  const Design dropped = d.without_level(1);
  CHECK(dropped.m() == 2);
  CHECK(dropped.probs[0] == doctest::Approx(0.5));
}

TEST_CASE("dataset rejects treatments off the design") {
  const Design d = Design::uniform({0.0, 0.5});
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, 2);
  CHECK_NOTHROW(Dataset(x, Eigen::Vector2d(0.0, 0.5), Eigen::Vector2d(0, 1), d));
  CHECK_THROWS_AS(Dataset(x, Eigen::Vector2d(0.0, 0.5 + 1e-9), Eigen::Vector2d(0, 1), d), InvalidInput);
  CHECK_THROWS_AS(Dataset(x, Eigen::Vector2d(0.0, 0.5), Eigen::Vector2d(0, 2), d), InvalidInput);
  Eigen::MatrixXd bad = x;
  bad(0, 1) = NAN;
  CHECK_THROWS_AS(Dataset(bad, Eigen::Vector2d(0.0, 0.5), Eigen::Vector2d(0, 1), d), InvalidInput);
}

TEST_CASE("split examples") {
  const Design design = Design::uniform({0.0, 1.0});
  const double halves[2] = {0.5, 0.5};

  auto parts = split(tiny(10, design), halves, 7);
  CHECK(parts[0].size() == 5);
  CHECK(parts[1].size() == 5);

  auto odd = split_indices(9, halves, 7);
  const std::set<std::size_t> sizes{odd[0].size(), odd[1].size()};
  CHECK(sizes == std::set<std::size_t>{4, 5});
  std::vector<std::size_t> all(odd[0]);
  all.insert(all.end(), odd[1].begin(), odd[1].end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 9; ++i) CHECK(all[i] == i);

  CHECK(split_indices(9, halves, 7) == split_indices(9, halves, 7));
  CHECK_THROWS_AS(split_indices(0, halves, 7), InvalidInput);
  const double bad[2] = {0.5, 0.6};
  CHECK_THROWS_AS(split_indices(10, bad, 7), InvalidInput);
}

TEST_CASE("split is a partition for random fractions and seeds") {
  Rng rng(3);
  for (int rep = 0; rep < 40; ++rep) {
    const std::size_t n = 1 + rng.below(300);
    const std::size_t parts = 1 + rng.below(4);
    std::vector<double> f(parts);
    double total = 0;
    for (auto& v : f) total += (v = 0.1 + rng.uniform());
    for (auto& v : f) v /= total;
    const auto out = split_indices(n, f, rng());
    std::vector<int> seen(n, 0);
    for (std::size_t p = 0; p < parts; ++p) {
      CHECK(std::abs(static_cast<double>(out[p].size()) - f[p] * static_cast<double>(n)) <= 1.0 + 1e-9);
      for (auto i : out[p]) ++seen[i];
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
  }
}

TEST_CASE("group_key examples") {
  const GroupSpec one{{0, {0.5}}};
  CHECK(group_key(Eigen::Vector2d(0.2, 9.0), one) == GroupKey{0});
  CHECK(group_key(Eigen::Vector2d(0.7, 9.0), one) == GroupKey{1});
  CHECK(group_key(Eigen::Vector2d(0.5, 9.0), one) == GroupKey{1});

  const GroupSpec two{{0, {0.0}}, {1, {0.0}}};
  Rng rng(5);
  std::set<GroupKey> keys;
  for (int i = 0; i < 500; ++i) keys.insert(group_key(Eigen::Vector2d(rng.uniform(-1, 1), rng.uniform(-1, 1)), two));
  CHECK(keys.size() <= 4);
  CHECK_THROWS_AS(group_key(Eigen::Vector2d(0, 0), GroupSpec{{2, {0.0}}}), InvalidInput);
}

TEST_CASE("standardizer uses training statistics") {
  Eigen::MatrixXd x(2, 4);
  x << 1, 2, 3, 4, 10, 10, 10, 10;
  const Standardizer s = Standardizer::fit(x);
  const Eigen::MatrixXd z = s.apply(x);
  CHECK(z.row(0).mean() == doctest::Approx(0.0));
  CHECK(z.row(1).isZero());
  CHECK(Standardizer::identity(2).apply(x) == x);
}

TEST_CASE("csv round trip with treatment rescaling") {
  const Design design = Design::uniform({0.0, 0.178, 0.358});
  const Dataset ds = tiny(7, design);
  const auto path = std::filesystem::temp_directory_path() / "dlpt_core_roundtrip.csv";
  write_csv(path, ds, 1000.0);
  const std::string text = read_file(path);
  CHECK(text.rfind("x1,x2,t,y\n", 0) == 0);
  CHECK(text.find("178") != std::string::npos);
  const Dataset back = read_csv(path, design, 1000.0);
  CHECK(back.size() == ds.size());
  CHECK(back.x() == ds.x());
  CHECK(back.y() == ds.y());
  CHECK((back.t() - ds.t()).cwiseAbs().maxCoeff() <= kLevelTolerance);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_csv(path, design), IoError);
}

TEST_CASE("child seeds are deterministic and distinct") {
  CHECK(child_seed(1, "a") == child_seed(1, "a"));
  CHECK(child_seed(1, "a") != child_seed(1, "b"));
  CHECK(child_seed(1, "a") != child_seed(2, "a"));
  CHECK(child_seed(1, std::uint64_t{0}) != child_seed(1, std::uint64_t{1}));
}
