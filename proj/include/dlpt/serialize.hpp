#pragma once

// JSON forms of designs, nets, policies, benchmark models and estimates.

#include "dlpt/benchmarks.hpp"
#include "dlpt/core.hpp"
#include "dlpt/dgp.hpp"
#include "dlpt/nets.hpp"
#include "dlpt/orthogonal.hpp"
#include "dlpt/policy.hpp"

#include <json.hpp>

namespace dlpt {

using Json = nlohmann::ordered_json;

Json to_json(const Design& design);
Design design_from_json(const Json& j);

Json to_json(const ValueParams& vp);
ValueParams value_params_from_json(const Json& j);

Json to_json(const Standardizer& s);
Standardizer standardizer_from_json(const Json& j);

/// {"dims": [...], "layers": [{"weight": row-major rows, "bias": [...]}, ...]}.
Json to_json(const Mlp& mlp);
Mlp mlp_from_json(const Json& j);

Json to_json(const StructuredNet& net);
StructuredNet structured_net_from_json(const Json& j);
Json to_json(const PlainNet& net);
PlainNet plain_net_from_json(const Json& j);

Json to_json(const GroupSpec& spec);
GroupSpec group_spec_from_json(const Json& j);

Json to_json(const Policy& policy);
Policy policy_from_json(const Json& j);

Json to_json(const ValueEstimate& e);

Json to_json(const ResponseModel& model);
ResponseModel response_model_from_json(const Json& j);

/// Named defaults ({"kind": "sigmoid-poly" | "sine-latent" | "linear-poly", "d": 4})
/// or explicit SigmoidPoly / SmoothNonparam parameters.
GroundTruth ground_truth_from_json(const Json& j);
Json to_json(const GroundTruth& gt);

/// Parses text; syntax errors become InvalidInput.
Json parse_json(const std::string& text);

}  // namespace dlpt
