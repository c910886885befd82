#include "dlpt/serialize.hpp"

#include "dlpt/error.hpp"

namespace dlpt {

namespace {

Json vec(const Eigen::VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd vec_from(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Json rows(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vec(m.row(r).transpose()));
  return out;
}

Eigen::MatrixXd rows_from(const Json& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Eigen::VectorXd row = vec_from(j[r]);
    if (row.size() != cols) throw InvalidInput("ragged matrix in JSON");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

template <class F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw InvalidInput(std::string("malformed ") + what + " JSON: " + e.what());
  }
}

}  // namespace

Json parse_json(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw InvalidInput(std::string("invalid JSON: ") + e.what());
  }
}

Json to_json(const Design& design) {
  return Json{{"levels", design.levels}, {"probs", design.probs}, {"t_max", design.t_max}};
}

Design design_from_json(const Json& j) {
  return guarded("design", [&] {
    Design d;
    d.levels = j.at("levels").get<std::vector<double>>();
    if (j.contains("probs")) {
      d.probs = j.at("probs").get<std::vector<double>>();
    } else {
      d.probs.assign(d.levels.size(), d.levels.empty() ? 0.0 : 1.0 / static_cast<double>(d.levels.size()));
    }
    d.t_max = j.value("t_max", 1.0);
    d.validate();
    return d;
  });
}

Json to_json(const ValueParams& vp) { return Json{{"w", vp.w}, {"c", vp.c}}; }

ValueParams value_params_from_json(const Json& j) {
  return guarded("value parameters", [&] {
    ValueParams vp;
    vp.w = j.value("w", vp.w);
    vp.c = j.value("c", vp.c);
    vp.validate();
    return vp;
  });
}

Json to_json(const Standardizer& s) { return Json{{"mean", vec(s.mean)}, {"scale", vec(s.scale)}}; }

Standardizer standardizer_from_json(const Json& j) {
  return guarded("standardizer", [&] { return Standardizer{vec_from(j.at("mean")), vec_from(j.at("scale"))}; });
}

Json to_json(const Mlp& mlp) {
  Json layers = Json::array();
  for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
    layers.push_back(Json{{"weight", rows(mlp.weight(l))}, {"bias", vec(mlp.bias(l))}});
  }
  return Json{{"dims", mlp.dims()}, {"layers", layers}};
}

Mlp mlp_from_json(const Json& j) {
  return guarded("network", [&] {
    const auto dims = j.at("dims").get<std::vector<int>>();
    if (dims.size() < 2) throw InvalidInput("a network needs at least two layer widths");
    for (int w : dims) {
      if (w < 1) throw InvalidInput("layer widths must be positive");
    }
    Mlp mlp(dims);
    const Json& layers = j.at("layers");
    if (layers.size() != mlp.layer_count()) throw InvalidInput("layer count does not match dims");
    for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
      const Eigen::MatrixXd w = rows_from(layers[l].at("weight"), dims[l]);
      const Eigen::VectorXd b = vec_from(layers[l].at("bias"));
      if (w.rows() != dims[l + 1] || b.size() != dims[l + 1]) throw InvalidInput("layer shape does not match dims");
      mlp.weight(l) = w;
      mlp.bias(l) = b;
    }
    return mlp;
  });
}

Json to_json(const StructuredNet& net) {
  return Json{{"kind", "structured"}, {"K", net.degree()}, {"heads", net.degree() + 1},
              {"scaling", to_json(net.scaling())}, {"body", to_json(net.body())}};
}

StructuredNet structured_net_from_json(const Json& j) {
  return guarded("structured net", [&] {
    if (j.value("kind", std::string("structured")) != "structured") throw InvalidInput("not a structured net");
    const int K = j.at("K").get<int>();
    Mlp body = mlp_from_json(j.at("body"));
    if (body.output_dim() != K + 1) throw InvalidInput("structured net output width must be K+1");
    Standardizer s = standardizer_from_json(j.at("scaling"));
    if (s.mean.size() != body.input_dim() || s.scale.size() != body.input_dim()) {
      throw InvalidInput("scaling dimension does not match the net input");
    }
    return StructuredNet(std::move(body), K, std::move(s));
  });
}

Json to_json(const PlainNet& net) {
  return Json{{"kind", "plain"}, {"scaling", to_json(net.scaling())}, {"body", to_json(net.body())}};
}

PlainNet plain_net_from_json(const Json& j) {
  return guarded("plain net", [&] {
    if (j.value("kind", std::string("plain")) != "plain") throw InvalidInput("not a plain net");
    Mlp body = mlp_from_json(j.at("body"));
    if (body.output_dim() != 1) throw InvalidInput("plain net output width must be 1");
    Standardizer s = standardizer_from_json(j.at("scaling"));
    if (s.mean.size() != body.input_dim() - 1) throw InvalidInput("scaling dimension does not match the net input");
    return PlainNet(std::move(body), std::move(s));
  });
}

Json to_json(const GroupSpec& spec) {
  Json out = Json::array();
  for (const auto& axis : spec) out.push_back(Json{{"coord", axis.coord}, {"edges", axis.edges}});
  return out;
}

GroupSpec group_spec_from_json(const Json& j) {
  return guarded("group spec", [&] {
    GroupSpec spec;
    for (const auto& a : j) {
      GroupAxis axis{a.at("coord").get<std::size_t>(), a.at("edges").get<std::vector<double>>()};
      if (!std::is_sorted(axis.edges.begin(), axis.edges.end())) throw InvalidInput("bin edges must be sorted");
      spec.push_back(std::move(axis));
    }
    return spec;
  });
}

Json to_json(const Policy& policy) {
  Json j{{"class", policy_class_name(policy)}, {"t_max", policy.t_max}};
  if (const auto* c = std::get_if<ConstantPolicy>(&policy.rule)) {
    j["action"] = c->action;
  } else if (const auto* t = std::get_if<TablePolicy>(&policy.rule)) {
    j["groups"] = to_json(t->groups);
    Json entries = Json::array();
    if (t->groups.empty()) {
      for (const auto& [x, a] : t->by_covariates) entries.push_back(Json{{"x", x}, {"action", a}});
    } else {
      for (const auto& [key, a] : t->by_group) entries.push_back(Json{{"group", key}, {"action", a}});
    }
    j["entries"] = entries;
  } else if (const auto* l = std::get_if<LinearPolicy>(&policy.rule)) {
    j["alpha"] = vec(l->alpha);
    j["beta"] = l->beta;
  } else {
    j["body"] = to_json(std::get<NeuralPolicy>(policy.rule).body);
  }
  return j;
}

Policy policy_from_json(const Json& j) {
  return guarded("policy", [&] {
    Policy p;
    p.t_max = j.value("t_max", 1.0);
    if (!(p.t_max > 0.0)) throw InvalidInput("policy t_max must be positive");
    const auto cls = j.at("class").get<std::string>();
    if (cls == "constant") {
      p.rule = ConstantPolicy{j.at("action").get<double>()};
    } else if (cls == "table") {
      TablePolicy t;
      t.groups = group_spec_from_json(j.at("groups"));
      for (const auto& e : j.at("entries")) {
        if (t.groups.empty()) {
          t.by_covariates.emplace(e.at("x").get<std::vector<double>>(), e.at("action").get<double>());
        } else {
          t.by_group.emplace(e.at("group").get<GroupKey>(), e.at("action").get<double>());
        }
      }
      p.rule = std::move(t);
    } else if (cls == "linear") {
      p.rule = LinearPolicy{vec_from(j.at("alpha")), j.at("beta").get<double>()};
    } else if (cls == "neural") {
      Mlp body = mlp_from_json(j.at("body"));
      if (body.output_dim() != 1) throw InvalidInput("neural policy output width must be 1");
      p.rule = NeuralPolicy{std::move(body)};
    } else {
      throw InvalidInput("unknown policy class '" + cls + "'");
    }
    return p;
  });
}

Json to_json(const ValueEstimate& e) {
  return Json{{"target", e.target},   {"point", e.point},     {"variance", e.variance},    {"n", e.n_eval},
              {"ci_low", e.ci_low}, {"ci_high", e.ci_high}, {"confidence", e.confidence}};
}

namespace {
Json to_json(const FitDiagnostics& d) {
  return Json{{"iterations", d.iterations}, {"gradient_norm", d.gradient_norm}, {"converged", d.converged}};
}
FitDiagnostics diagnostics_from_json(const Json& j) {
  FitDiagnostics d;
  if (j.is_object()) {
    d.iterations = j.value("iterations", 0);
    d.gradient_norm = j.value("gradient_norm", 0.0);
    d.converged = j.value("converged", true);
  }
  return d;
}
}  // namespace

Json to_json(const ResponseModel& model) {
  Json j{{"method", to_string(model.kind())}};
  if (const auto* lr = std::get_if<LinearRegModel>(&model.m)) {
    j["coef"] = vec(lr->coef);
  } else if (const auto* lg = std::get_if<LogisticRegModel>(&model.m)) {
    j["coef"] = vec(lg->coef);
    j["diagnostics"] = to_json(lg->diagnostics);
  } else if (const auto* lc = std::get_if<LogitChoiceModel>(&model.m)) {
    j["alpha"] = vec(lc->alpha);
    j["beta"] = vec(lc->beta);
    j["diagnostics"] = to_json(lc->diagnostics);
  } else if (const auto* pn = std::get_if<PlainNetModel>(&model.m)) {
    j["net"] = to_json(*pn->net);
  } else {
    const auto& u = std::get<UniformModel>(model.m);
    j["levels"] = u.levels;
    j["means"] = u.means;
    j["counts"] = u.counts;
  }
  return j;
}

ResponseModel response_model_from_json(const Json& j) {
  return guarded("benchmark model", [&] {
    switch (benchmark_kind_from_string(j.at("method").get<std::string>())) {
      case BenchmarkKind::LinearReg: return ResponseModel{LinearRegModel{vec_from(j.at("coef"))}};
      case BenchmarkKind::LogisticReg:
        return ResponseModel{LogisticRegModel{vec_from(j.at("coef")), diagnostics_from_json(j.value("diagnostics", Json()))}};
      case BenchmarkKind::LogitChoice:
        return ResponseModel{LogitChoiceModel{vec_from(j.at("alpha")), vec_from(j.at("beta")),
                                              diagnostics_from_json(j.value("diagnostics", Json()))}};
      case BenchmarkKind::PlainNetwork:
        return ResponseModel{PlainNetModel{std::make_shared<PlainNet>(plain_net_from_json(j.at("net")))}};
      case BenchmarkKind::Uniform:
        return ResponseModel{UniformModel{j.at("levels").get<std::vector<double>>(),
                                          j.at("means").get<std::vector<double>>(),
                                          j.at("counts").get<std::vector<std::size_t>>()}};
    }
    throw InvalidInput("unknown benchmark method");
  });
}

GroundTruth ground_truth_from_json(const Json& j) {
  return guarded("ground truth", [&] {
    const auto kind = j.value("kind", std::string("sigmoid-poly"));
    const auto d = j.value("d", std::size_t{4});
    const bool named = !j.contains("bias") && !j.contains("alpha") && !j.contains("net");
    if (named) {
      if (kind == "sigmoid-poly") return default_sigmoid_poly(d);
      if (kind == "sine-latent") return default_sine_latent(d);
      if (kind == "linear-poly") return default_linear_poly(d);
      throw InvalidInput("unknown ground truth '" + kind + "'");
    }
    const double t_max = j.value("t_max", 1.0);
    if (kind == "sigmoid-poly") {
      SigmoidPoly sp;
      sp.bias = vec_from(j.at("bias"));
      sp.linear = rows_from(j.at("linear"), static_cast<Eigen::Index>(d));
      if (j.contains("quadratic")) sp.quadratic = rows_from(j.at("quadratic"), static_cast<Eigen::Index>(d));
      return GroundTruth(sp, d, t_max);
    }
    if (kind == "sine-latent") {
      SmoothNonparam s;
      s.alpha = j.at("alpha").get<double>();
      s.beta = j.at("beta").get<double>();
      s.gamma = vec_from(j.at("gamma"));
      s.offset = j.value("offset", 0.0);
      return GroundTruth(s, d, t_max);
    }
    if (kind == "fitted-net") {
      auto net = std::make_shared<const PlainNet>(plain_net_from_json(j.at("net")));
      return GroundTruth(FittedNet{net}, d, t_max);
    }
    throw InvalidInput("unknown ground truth '" + kind + "'");
  });
}

Json to_json(const GroundTruth& gt) {
  Json j{{"d", gt.dim()}, {"t_max", gt.t_max()}};
  if (const auto* sp = std::get_if<SigmoidPoly>(&gt.variant())) {
    j["kind"] = "sigmoid-poly";
    j["bias"] = vec(sp->bias);
    j["linear"] = rows(sp->linear);
    if (sp->quadratic.size() > 0) j["quadratic"] = rows(sp->quadratic);
  } else if (const auto* s = std::get_if<SmoothNonparam>(&gt.variant())) {
    j["kind"] = "sine-latent";
    j["alpha"] = s->alpha;
    j["beta"] = s->beta;
    j["gamma"] = vec(s->gamma);
    j["offset"] = s->offset;
  } else {
    j["kind"] = "fitted-net";
    j["net"] = to_json(*std::get<FittedNet>(gt.variant()).net);
  }
  return j;
}

}  // namespace dlpt
