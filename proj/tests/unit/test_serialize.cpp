#include "dlpt/error.hpp"
#include "dlpt/learners.hpp"
#include "dlpt/serialize.hpp"

#include <doctest.h>

using namespace dlpt;

namespace {

// Every round trip goes through text, as it does on disk.
Json through_text(const Json& j) { return parse_json(j.dump(2)); }

Eigen::MatrixXd probe_x(std::size_t d, std::size_t n, std::uint64_t seed) { return CovariateLaw::uniform(d).draw(n, seed); }

}  // namespace

TEST_CASE("design and value parameters round trip") {
  const Design d{{0.0, 0.25, 0.5}, {0.2, 0.3, 0.5}, 2.0};
  const Design back = design_from_json(through_text(to_json(d)));
  CHECK(back.levels == d.levels);
  CHECK(back.probs == d.probs);
  CHECK(back.t_max == d.t_max);

  const Design uniform = design_from_json(parse_json(R"({"levels": [0, 0.5]})"));
  CHECK(uniform.probs == std::vector<double>{0.5, 0.5});
  CHECK(uniform.t_max == 1.0);
  CHECK_THROWS_AS(design_from_json(parse_json(R"({"levels": [0, 0.5], "probs": [0.9, 0.9]})")), InvalidInput);
  CHECK_THROWS_AS(design_from_json(parse_json(R"({"probs": [1]})")), InvalidInput);

  const ValueParams vp{0.7, 0.05};
  const ValueParams vb = value_params_from_json(through_text(to_json(vp)));
  CHECK(vb.w == vp.w);
  CHECK(vb.c == vp.c);
  CHECK_THROWS_AS(value_params_from_json(parse_json(R"({"w": "high"})")), InvalidInput);
}

TEST_CASE("standardizer and group spec round trip") {
  const Standardizer s{Eigen::Vector2d(0.1, -0.3), Eigen::Vector2d(1.5, 0.25)};
  const Standardizer sb = standardizer_from_json(through_text(to_json(s)));
  CHECK(sb.mean == s.mean);
  CHECK(sb.scale == s.scale);

  const GroupSpec g{{0, {-0.5, 0.0, 0.5}}, {2, {0.1}}};
  const GroupSpec gb = group_spec_from_json(through_text(to_json(g)));
  REQUIRE(gb.size() == 2);
  CHECK(gb[1].coord == 2);
  CHECK(gb[0].edges == g[0].edges);
  CHECK_THROWS_AS(group_spec_from_json(parse_json(R"([{"coord": 0, "edges": [1, 0]}])")), InvalidInput);
}

TEST_CASE("mlp round trip preserves every parameter") {
  Rng rng(4);
  const Mlp m({3, 5, 2}, rng);
  const Mlp b = mlp_from_json(through_text(to_json(m)));
  CHECK(b.params() == m.params());
  CHECK(b.dims() == m.dims());
  Json bad = to_json(m);
  bad["dims"] = {3, 4, 2};
  CHECK_THROWS_AS(mlp_from_json(bad), InvalidInput);
  bad = to_json(m);
  bad["dims"] = {3};
  CHECK_THROWS_AS(mlp_from_json(bad), InvalidInput);
}

TEST_CASE("structured and plain nets give identical predictions after a round trip") {
  StructuredNet s(3, {6, 4}, 2, 11);
  s.set_scaling(Standardizer{Eigen::Vector3d(0.1, 0.2, 0.3), Eigen::Vector3d(2, 3, 4)});
  const StructuredNet sb = structured_net_from_json(through_text(to_json(s)));
  const Eigen::MatrixXd x = probe_x(3, 50, 1);
  CHECK(sb.degree() == 2);
  CHECK(sb.theta(x) == s.theta(x));

  const PlainNet p(3, {6}, 12);
  const PlainNet pb = plain_net_from_json(through_text(to_json(p)));
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(50, 0.0, 1.0);
  CHECK(pb.prob(x, t) == p.prob(x, t));

  CHECK_THROWS_AS(structured_net_from_json(to_json(p)), InvalidInput);
  CHECK_THROWS_AS(plain_net_from_json(to_json(s)), InvalidInput);
  Json wrong_k = to_json(s);
  wrong_k["K"] = 3;
  CHECK_THROWS_AS(structured_net_from_json(wrong_k), InvalidInput);
}

TEST_CASE("policies round trip") {
  const Eigen::MatrixXd x = probe_x(2, 30, 2);
  Rng rng(5);
  std::vector<double> actions(30);
  for (auto& a : actions) a = rng.uniform();

  std::vector<Policy> policies{
      Policy{ConstantPolicy{0.35}, 1.0},
      Policy{LinearPolicy{Eigen::Vector2d(0.2, -0.1), 0.4}, 1.0},
      Policy{NeuralPolicy{Mlp({2, 4, 1}, rng)}, 2.0},
      table_policy(x, actions, 1.0),
  };
  TablePolicy grouped;
  grouped.groups = {{0, {0.0}}};
  grouped.by_group = {{{0}, 0.2}, {{1}, 0.6}};
  policies.push_back(Policy{grouped, 1.0});

  for (const auto& p : policies) {
    const Policy b = policy_from_json(through_text(to_json(p)));
    CHECK(policy_class_name(b) == policy_class_name(p));
    CHECK(b.t_max == p.t_max);
    CHECK(apply_all(b, x) == apply_all(p, x));
  }
  CHECK_THROWS_AS(policy_from_json(parse_json(R"({"class": "tree"})")), InvalidInput);
  CHECK_THROWS_AS(policy_from_json(parse_json(R"({"class": "constant", "t_max": 0, "action": 0})")), InvalidInput);
}

TEST_CASE("benchmark models round trip") {
  const Eigen::Vector3d x(0.3, -0.2, 0.5);
  PlainNet net(3, {4}, 6);
  const std::vector<ResponseModel> models{
      ResponseModel{LinearRegModel{Eigen::Vector<double, 5>(0.1, 0.2, 0.3, 0.4, 0.5)}},
      ResponseModel{LogisticRegModel{Eigen::Vector<double, 5>(-0.1, 0.2, 0.3, 0.4, 1.5), {7, 1e-9, true}}},
      ResponseModel{LogitChoiceModel{Eigen::Vector4d(0.1, 0.2, 0.3, 0.4), Eigen::Vector4d(1, -1, 0.5, 0), {3, 0, false}}},
      ResponseModel{PlainNetModel{std::make_shared<PlainNet>(net)}},
  };
  for (const auto& m : models) {
    const ResponseModel b = response_model_from_json(through_text(to_json(m)));
    CHECK(b.kind() == m.kind());
    CHECK(predict(b, x, 0.4) == predict(m, x, 0.4));
  }
  const ResponseModel lc_back = response_model_from_json(to_json(models[2]));
  const auto& lc = std::get<LogitChoiceModel>(lc_back.m);
  CHECK(lc.diagnostics.iterations == 3);
  CHECK(!lc.diagnostics.converged);

  const ResponseModel uni{UniformModel{{0.0, 0.5}, {0.2, 0.3}, {10, 12}}};
  const ResponseModel uni_back = response_model_from_json(through_text(to_json(uni)));
  const auto& ub = std::get<UniformModel>(uni_back.m);
  CHECK(ub.means == std::vector<double>{0.2, 0.3});
  CHECK(ub.counts == std::vector<std::size_t>{10, 12});
  CHECK_THROWS_AS(response_model_from_json(parse_json(R"({"method": "SVM"})")), InvalidInput);
}

TEST_CASE("ground truths round trip") {
  const Eigen::MatrixXd x = probe_x(4, 40, 3);
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(40, 0.0, 1.0);
  const std::vector<double> a(t.data(), t.data() + t.size());
  PlainNet net(4, {5}, 9);
  const std::vector<GroundTruth> truths{default_sigmoid_poly(4), default_sine_latent(4), default_linear_poly(4),
                                        GroundTruth(FittedNet{std::make_shared<const PlainNet>(net)}, 4)};
  for (const auto& gt : truths) {
    const GroundTruth b = ground_truth_from_json(through_text(to_json(gt)));
    CHECK(b.dim() == gt.dim());
    CHECK(b.prob(x, a) == gt.prob(x, a));
  }
  const GroundTruth named = ground_truth_from_json(parse_json(R"({"kind": "sine-latent", "d": 4})"));
  CHECK(named.prob(x, a) == default_sine_latent(4).prob(x, a));
  CHECK_THROWS_AS(ground_truth_from_json(parse_json(R"({"kind": "bumpy"})")), InvalidInput);
}

TEST_CASE("value estimates serialize every field") {
  const ValueEstimate e{"value:constant", 0.3, 0.04, 100, 0.26, 0.34, 0.95};
  const Json j = through_text(to_json(e));
  CHECK(j["target"] == "value:constant");
  CHECK(j["point"] == 0.3);
  CHECK(j["n"] == 100);
  CHECK(j["ci_low"] == 0.26);
  CHECK(j["confidence"] == 0.95);
}

TEST_CASE("syntax errors become invalid input") {
  CHECK_THROWS_AS(parse_json("{\"levels\": [0, "), InvalidInput);
  CHECK_THROWS_AS(parse_json(""), InvalidInput);
}
