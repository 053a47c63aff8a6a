#include "scopil/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace scopil {

using nlohmann::json;

namespace {

template <typename M>
json flat(const M& m) {
  // Row-major so the file reads as weight[out][in].
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
  return a;
}

template <typename M>
void unflat(const json& a, M& m) {
  if (!a.is_array() || a.size() != static_cast<std::size_t>(m.size()))
    throw net::ShapeError("checkpoint array has " + std::to_string(a.size()) + " values, expected " +
                          std::to_string(m.size()));
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = a.at(i++).get<float>();
}

json bundle_to_json(const net::GradientBundle<float>& g) {
  json layers = json::array();
  for (std::size_t k = 0; k < g.weight.size(); ++k) layers.push_back({{"w", flat(g.weight[k])}, {"b", flat(g.bias[k])}});
  return layers;
}

net::GradientBundle<float> bundle_from_json(const json& j, const net::MlpParams<float>& shape) {
  auto g = net::GradientBundle<float>::zeros_like(shape);
  if (!j.is_array() || j.size() != g.weight.size()) throw net::ShapeError("optimizer state layer count mismatch");
  for (std::size_t k = 0; k < g.weight.size(); ++k) {
    unflat(j.at(k).at("w"), g.weight[k]);
    unflat(j.at(k).at("b"), g.bias[k]);
  }
  return g;
}

json opt_to_json(const net::OptState<float>& s) {
  return {{"step", s.step}, {"lr", s.lr}, {"beta1", s.beta1}, {"beta2", s.beta2}, {"eps", s.eps},
          {"m", bundle_to_json(s.m)}, {"v", bundle_to_json(s.v)}};
}

net::OptState<float> opt_from_json(const json& j, const net::MlpParams<float>& shape) {
  net::OptState<float> s;
  s.step = j.at("step").get<std::int64_t>();
  s.lr = j.at("lr").get<float>();
  s.beta1 = j.at("beta1").get<float>();
  s.beta2 = j.at("beta2").get<float>();
  s.eps = j.at("eps").get<float>();
  s.m = bundle_from_json(j.at("m"), shape);
  s.v = bundle_from_json(j.at("v"), shape);
  return s;
}

// NaN is not representable in JSON; null stands in for it.
json maybe_number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }
double number_or_nan(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

bool same_or_both_nan(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

bool same_opt(const net::OptState<float>& a, const net::OptState<float>& b) {
  if (a.step != b.step || a.lr != b.lr || a.beta1 != b.beta1 || a.beta2 != b.beta2 || a.eps != b.eps) return false;
  for (std::size_t k = 0; k < a.m.weight.size(); ++k)
    if (a.m.weight[k] != b.m.weight[k] || a.m.bias[k] != b.m.bias[k] || a.v.weight[k] != b.v.weight[k] ||
        a.v.bias[k] != b.v.bias[k])
      return false;
  return true;
}

}  // namespace

bool operator==(const Checkpoint& a, const Checkpoint& b) {
  const auto& x = a.nets;
  const auto& y = b.nets;
  return x.policy == y.policy && x.q1 == y.q1 && x.q2 == y.q2 && x.q1_target == y.q1_target &&
         x.q2_target == y.q2_target && x.log_alpha == y.log_alpha && x.target_entropy == y.target_entropy &&
         same_opt(a.opt.policy, b.opt.policy) && same_opt(a.opt.q1, b.opt.q1) && same_opt(a.opt.q2, b.opt.q2) &&
         a.lambda == b.lambda && a.step == b.step && a.episode == b.episode && same_or_both_nan(a.demo_nll, b.demo_nll);
}

json params_to_json(const net::MlpParams<float>& p) {
  json layers = json::array();
  for (const auto& l : p.layers) layers.push_back({{"w", flat(l.weight)}, {"b", flat(l.bias)}});
  return {{"arch", p.sizes()}, {"activation", net::to_string(p.hidden_activation())}, {"layers", layers}};
}

net::MlpParams<float> params_from_json(const json& j) {
  const auto sizes = j.at("arch").get<std::vector<int>>();
  for (int s : sizes)
    if (s <= 0) throw net::ShapeError("checkpoint layer sizes must be positive");
  auto p = net::MlpParams<float>::zeros(sizes, net::activation_from_string(j.at("activation").get<std::string>()));
  const auto& layers = j.at("layers");
  if (!layers.is_array() || layers.size() != p.layers.size()) throw net::ShapeError("checkpoint layer count mismatch");
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    unflat(layers.at(k).at("w"), p.layers[k].weight);
    unflat(layers.at(k).at("b"), p.layers[k].bias);
  }
  return p;
}

json checkpoint_to_json(const Checkpoint& c) {
  const auto& n = c.nets;
  return {{"format", "scopil-checkpoint/1"},
          {"arch", n.policy.sizes()},
          {"activation", net::to_string(n.policy.hidden_activation())},
          {"policy", params_to_json(n.policy)},
          {"q1", params_to_json(n.q1)},
          {"q2", params_to_json(n.q2)},
          {"q1_target", params_to_json(n.q1_target)},
          {"q2_target", params_to_json(n.q2_target)},
          {"opt", {{"policy", opt_to_json(c.opt.policy)}, {"q1", opt_to_json(c.opt.q1)}, {"q2", opt_to_json(c.opt.q2)}}},
          {"log_alpha", n.log_alpha},
          {"alpha", n.alpha()},
          {"target_entropy", n.target_entropy},
          {"lambda", c.lambda},
          {"step", c.step},
          {"episode", c.episode},
          {"demo_nll", maybe_number(c.demo_nll)}};
}

Checkpoint checkpoint_from_json(const json& j) {
  Checkpoint c;
  c.nets.policy = params_from_json(j.at("policy"));
  c.nets.q1 = params_from_json(j.at("q1"));
  c.nets.q2 = params_from_json(j.at("q2"));
  c.nets.q1_target = params_from_json(j.at("q1_target"));
  c.nets.q2_target = params_from_json(j.at("q2_target"));
  if (!c.nets.q1.same_shape(c.nets.q1_target) || !c.nets.q2.same_shape(c.nets.q2_target))
    throw net::ShapeError("target networks must match their critics");
  c.nets.log_alpha = j.at("log_alpha").get<float>();
  c.nets.target_entropy = j.at("target_entropy").get<float>();
  const auto& opt = j.at("opt");
  c.opt.policy = opt_from_json(opt.at("policy"), c.nets.policy);
  c.opt.q1 = opt_from_json(opt.at("q1"), c.nets.q1);
  c.opt.q2 = opt_from_json(opt.at("q2"), c.nets.q2);
  c.lambda = j.at("lambda").get<double>();
  c.step = j.at("step").get<std::int64_t>();
  c.episode = j.at("episode").get<std::int64_t>();
  c.demo_nll = number_or_nan(j.at("demo_nll"));
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out << checkpoint_to_json(c).dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

namespace {

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_json(path)); }

net::MlpParams<float> load_policy(const std::filesystem::path& path) {
  const json j = read_json(path);
  auto p = params_from_json(j.contains("policy") ? j.at("policy") : j);
  if (p.input_dim() != kStateDim || p.output_dim() != kNumActions)
    throw net::ShapeError("policy maps " + std::to_string(p.input_dim()) + " -> " + std::to_string(p.output_dim()) +
                          ", environment needs " + std::to_string(kStateDim) + " -> " + std::to_string(kNumActions));
  return p;
}

}  // namespace scopil
