#include "json_util.hpp"
#include "reid3d/matcher.hpp"

namespace reid3d::matcher {

namespace {

detail::json mlp_to_json(const Mlp& m) {
  detail::json layers = detail::json::array();
  for (const auto& l : m.layers) {
    detail::json jl;
    jl["W"] = detail::matrix_to_json(l.W);
    jl["b"] = detail::vecx_to_json(l.b);
    layers.push_back(std::move(jl));
  }
  return layers;
}

Mlp mlp_from_json(const detail::json& j, const std::string& where) {
  Mlp m;
  if (!j.is_array() || j.empty()) throw ParseError(where + ": expected layer array");
  for (const auto& jl : j) {
    LinearLayer l;
    l.W = detail::json_to_matrix(jl.at("W"), where);
    l.b = detail::json_to_vecx(jl.at("b"), where);
    if (l.b.size() != l.W.rows()) throw ParseError(where + ": bias/weight shape mismatch");
    m.layers.push_back(std::move(l));
  }
  return m;
}

}  // namespace

void save_matcher_params(const MatcherParams& p, const std::string& path) {
  detail::json j;
  j["version"] = "reid3d-params/1";
  j["kind"] = "matcher";
  j["variant"] = p.variant == DustbinVariant::Adaptive ? "adaptive" : "fixed";
  j["descriptor_dim"] = p.descriptor_dim;
  j["d_out"] = p.d_out;
  j["hidden1"] = p.hidden1;
  j["hidden2"] = p.hidden2;
  j["sinkhorn_iterations"] = p.sinkhorn_iterations;
  j["tau"] = p.tau;
  j["match_threshold"] = p.match_threshold;
  j["l2_normalize_input"] = p.l2_normalize_input;
  j["W"] = detail::matrix_to_json(p.W);
  j["b"] = detail::vecx_to_json(p.b);
  j["attention_mlp"] = mlp_to_json(p.attention_mlp);
  j["dustbin_mlp"] = mlp_to_json(p.dustbin_mlp);
  j["alpha"] = p.alpha;
  detail::save_json_file(j, path);
}

MatcherParams load_matcher_params(const std::string& path) {
  const detail::json j = detail::load_json_file(path);
  detail::require_version(j, "reid3d-params/1", path);
  if (j.value("kind", "") != "matcher")
    throw ParseError(path + ": not a matcher checkpoint");
  MatcherParams p;
  try {
    const std::string variant = j.at("variant").get<std::string>();
    if (variant == "adaptive")
      p.variant = DustbinVariant::Adaptive;
    else if (variant == "fixed")
      p.variant = DustbinVariant::Fixed;
    else
      throw ParseError(path + ": unknown variant '" + variant + "'");
    p.descriptor_dim = j.at("descriptor_dim").get<int>();
    p.d_out = j.at("d_out").get<int>();
    p.hidden1 = j.at("hidden1").get<int>();
    p.hidden2 = j.at("hidden2").get<int>();
    p.sinkhorn_iterations = j.at("sinkhorn_iterations").get<int>();
    p.tau = j.at("tau").get<double>();
    p.match_threshold = j.at("match_threshold").get<double>();
    p.l2_normalize_input = j.at("l2_normalize_input").get<bool>();
    p.W = detail::json_to_matrix(j.at("W"), path + ": W");
    p.b = detail::json_to_vecx(j.at("b"), path + ": b");
    p.attention_mlp = mlp_from_json(j.at("attention_mlp"), path + ": attention_mlp");
    p.dustbin_mlp = mlp_from_json(j.at("dustbin_mlp"), path + ": dustbin_mlp");
    p.alpha = j.at("alpha").get<double>();
  } catch (const detail::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (p.W.rows() != p.d_out || p.W.cols() != p.descriptor_dim ||
      p.b.size() != p.d_out)
    throw DataError(path + ": projection tensor shapes disagree with dims");
  return p;
}

void save_projection(const Mlp& projection, int descriptor_dim, const std::string& path) {
  detail::json j;
  j["version"] = "reid3d-params/1";
  j["kind"] = "projection";
  j["descriptor_dim"] = descriptor_dim;
  j["layers"] = mlp_to_json(projection);
  detail::save_json_file(j, path);
}

Mlp load_projection(const std::string& path) {
  const detail::json j = detail::load_json_file(path);
  detail::require_version(j, "reid3d-params/1", path);
  if (j.value("kind", "") != "projection")
    throw ParseError(path + ": not a projection checkpoint");
  return mlp_from_json(j.at("layers"), path + ": layers");
}

void save_match_result(const MatchResult& r, const std::string& path) {
  detail::json j;
  detail::json matches = detail::json::array();
  for (std::size_t k = 0; k < r.matches.size(); ++k) {
    detail::json m;
    m["a"] = r.matches[k].first;
    m["b"] = r.matches[k].second;
    m["score"] = r.match_scores[k];
    matches.push_back(std::move(m));
  }
  j["matches"] = std::move(matches);
  j["unmatched_a"] = r.unmatched_a;
  j["unmatched_b"] = r.unmatched_b;
  detail::save_json_file(j, path);
}

}  // namespace reid3d::matcher
