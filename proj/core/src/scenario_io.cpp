#include "mmvlab/scenario_io.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#include "mmvlab/error.hpp"

namespace mmvlab {

using nlohmann::json;

namespace {

std::string join(const std::string& base, const std::string& key) { return base + "/" + key; }

const json& require(const json& obj, const std::string& base, const std::string& key) {
  if (!obj.is_object()) throw ConfigError(base.empty() ? "/" : base, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(join(base, key), "missing required field");
  return *it;
}

double as_number(const json& v, const std::string& ptr) {
  if (!v.is_number()) throw ConfigError(ptr, "expected a number");
  return v.get<double>();
}

double number(const json& obj, const std::string& base, const std::string& key) {
  return as_number(require(obj, base, key), join(base, key));
}

double number_or(const json& obj, const std::string& base, const std::string& key, double def) {
  auto it = obj.find(key);
  return it == obj.end() ? def : as_number(*it, join(base, key));
}

std::string text(const json& obj, const std::string& base, const std::string& key) {
  const json& v = require(obj, base, key);
  if (!v.is_string()) throw ConfigError(join(base, key), "expected a string");
  return v.get<std::string>();
}

Vec as_vec(const json& v, const std::string& ptr) {
  if (!v.is_array() || v.empty()) throw ConfigError(ptr, "expected a non-empty array of numbers");
  if (v.size() > static_cast<std::size_t>(kMaxDim)) {
    std::ostringstream os;
    os << "at most " << kMaxDim << " entries";
    throw ConfigError(ptr, os.str());
  }
  Vec out(static_cast<int>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out[static_cast<int>(i)] = as_number(v[i], ptr + "/" + std::to_string(i));
  return out;
}

Mat as_mat(const json& v, const std::string& ptr, int n) {
  if (!v.is_array() || static_cast<int>(v.size()) != n) {
    std::ostringstream os;
    os << "expected " << n << " rows";
    throw ConfigError(ptr, os.str());
  }
  Mat out(n, n);
  for (int i = 0; i < n; ++i) {
    const std::string row = ptr + "/" + std::to_string(i);
    const Vec r = as_vec(v[i], row);
    if (r.size() != n) throw ConfigError(row, "row length does not match the dimension");
    out.row(i) = r.transpose();
  }
  return out;
}

Vec vec_of(const json& obj, const std::string& base, const std::string& key, int n) {
  const Vec v = as_vec(require(obj, base, key), join(base, key));
  if (v.size() != n) throw ConfigError(join(base, key), "length does not match the dimension");
  return v;
}

Vec vec_or_zero(const json& obj, const std::string& base, const std::string& key, int n) {
  return obj.contains(key) ? vec_of(obj, base, key, n) : Vec::Zero(n);
}

Mat mat_of(const json& obj, const std::string& base, const std::string& key, int n) {
  return as_mat(require(obj, base, key), join(base, key), n);
}

Mat mat_or_zero(const json& obj, const std::string& base, const std::string& key, int n) {
  return obj.contains(key) ? mat_of(obj, base, key, n) : Mat::Zero(n, n);
}

/// Dimension taken from the D (or sigma) matrix row count.
int dimension(const json& obj, const std::string& base, const std::string& key) {
  const json& d = require(obj, base, key);
  if (!d.is_array() || d.empty() || d.size() > static_cast<std::size_t>(kMaxDim))
    throw ConfigError(join(base, key), "expected a square matrix of dimension 1 to 4");
  return static_cast<int>(d.size());
}

ModelLimits parse_limits(const json& obj, const std::string& base) {
  ModelLimits lim;
  auto it = obj.find("limits");
  if (it == obj.end()) return lim;
  const std::string b = join(base, "limits");
  lim.delta = number_or(*it, b, "delta", lim.delta);
  lim.coef_cap = number_or(*it, b, "coef_cap", lim.coef_cap);
  lim.a_max = number_or(*it, b, "a_max", lim.a_max);
  return lim;
}

FactorSpec parse_factor(const json& obj, const std::string& base, int n) {
  FactorSpec f;
  f.kappa = number(obj, base, "kappa_f");
  f.mean = number(obj, base, "m_f");
  f.vol = vec_of(obj, base, "v_f", n);
  f.f0 = number(obj, base, "f_0");
  return f;
}

template <class F>
auto wrap(const std::string& ptr, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(ptr, e.what());
  }
}

CoefficientModel parse_model(const json& m, ModelLimits lim) {
  const std::string base = "/model";
  const std::string tier = text(m, base, "tier");
  if (tier == "deterministic") {
    const int n = dimension(m, base, "d0");
    DeterministicSpec s;
    s.a0 = number_or(m, base, "a0", 0.0);
    s.a1 = number_or(m, base, "a1", 0.0);
    s.b0 = vec_or_zero(m, base, "b0", n);
    s.b1 = vec_or_zero(m, base, "b1", n);
    s.c0 = vec_or_zero(m, base, "c0", n);
    s.c1 = vec_or_zero(m, base, "c1", n);
    s.d0 = mat_of(m, base, "d0", n);
    s.d1 = mat_or_zero(m, base, "d1", n);
    return wrap(base, [&] { return CoefficientModel::deterministic(s, lim); });
  }
  if (tier == "markov_factor") {
    const int n = dimension(m, base, "d");
    const FactorSpec f = parse_factor(m, base, n);
    const Vec b = vec_of(m, base, "b", n);
    const Vec c = vec_or_zero(m, base, "c", n);
    const Mat d = mat_of(m, base, "d", n);
    return wrap(base, [&] { return CoefficientModel::markov_factor(f, b, c, d, lim); });
  }
  if (tier == "path_dependent") {
    const int n = dimension(m, base, "d");
    PathDependentSpec s;
    s.a0 = number_or(m, base, "a0", 0.0);
    s.a_w = number_or(m, base, "a_w", 0.0);
    s.a_s = number_or(m, base, "a_s", 0.0);
    s.b0 = vec_of(m, base, "b0", n);
    s.b_w = vec_or_zero(m, base, "b_w", n);
    const Vec c = vec_or_zero(m, base, "c", n);
    const Mat d = mat_of(m, base, "d", n);
    return wrap(base, [&] { return CoefficientModel::path_dependent(s, c, d, lim); });
  }
  throw ConfigError("/model/tier", "unknown tier '" + tier + "'");
}

PortfolioMarket parse_market(const json& m) {
  const std::string base = "/market";
  PortfolioMarket out;
  const int n = dimension(m, base, "sigma");
  out.mu = vec_of(m, base, "mu", n);
  out.sigma = mat_of(m, base, "sigma", n);
  const json& r = require(m, base, "r");
  const std::string rb = join(base, "r");
  const std::string kind = text(r, rb, "kind");
  if (kind == "constant") {
    out.r.kind = RateSpec::Kind::Constant;
    out.r.r0 = number(r, rb, "r0");
  } else if (kind == "linear") {
    out.r.kind = RateSpec::Kind::Linear;
    out.r.r0 = number(r, rb, "r0");
    out.r.r1 = number(r, rb, "r1");
  } else if (kind == "vasicek") {
    out.r.kind = RateSpec::Kind::Vasicek;
    out.r.vasicek = parse_factor(r, rb, n);
  } else {
    throw ConfigError(join(rb, "kind"), "unknown rate kind '" + kind + "'");
  }
  return out;
}

JumpModel parse_jump(const json& j) {
  const std::string base = "/jump";
  JumpModel out;
  out.intensity = number(j, base, "lambda");
  out.premium_loading = number(j, base, "b");
  out.drift_offset = number_or(j, base, "a", 0.0);
  const json& nu = require(j, base, "nu");
  const std::string nb = join(base, "nu");
  const std::string kind = text(nu, nb, "kind");
  if (kind == "discrete") {
    const json& atoms = require(nu, nb, "atoms");
    const std::string ab = join(nb, "atoms");
    if (!atoms.is_array() || atoms.empty()) throw ConfigError(ab, "expected [[y, p], ...]");
    std::vector<std::pair<double, double>> list;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      const std::string p = ab + "/" + std::to_string(i);
      if (!atoms[i].is_array() || atoms[i].size() != 2) throw ConfigError(p, "expected [y, p]");
      list.emplace_back(as_number(atoms[i][0], p + "/0"), as_number(atoms[i][1], p + "/1"));
    }
    out.claims = wrap(ab, [&] { return ClaimDistribution::discrete(list); });
  } else if (kind == "lognormal_trunc") {
    const double mu = number(nu, nb, "mu");
    const double sigma = number(nu, nb, "sigma");
    const double y_max = number_or(nu, nb, "y_max", std::numeric_limits<double>::infinity());
    out.claims = wrap(nb, [&] { return ClaimDistribution::lognormal_truncated(mu, sigma, y_max); });
  } else {
    throw ConfigError(join(nb, "kind"), "unknown claim law '" + kind + "'");
  }
  return out;
}

json vec_json(const Vec& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json mat_json(const Mat& m) {
  json a = json::array();
  for (int i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
  return a;
}

json factor_json(const FactorSpec& f) {
  return {{"kappa_f", f.kappa}, {"m_f", f.mean}, {"v_f", vec_json(f.vol)}, {"f_0", f.f0}};
}

}  // namespace

ScenarioConfig parse_scenario(const json& doc) {
  if (!doc.is_object()) throw ConfigError("/", "scenario must be a JSON object");
  ScenarioConfig cfg;
  cfg.x = number(doc, "", "x");
  cfg.theta = number(doc, "", "theta");
  const json& grid = require(doc, "", "grid");
  const double horizon = number(grid, "/grid", "horizon");
  const json& steps = require(grid, "/grid", "steps");
  if (!steps.is_number_integer()) throw ConfigError("/grid/steps", "expected an integer");
  cfg.grid = wrap("/grid", [&] { return TimeGrid(horizon, steps.get<int>()); });

  const ModelLimits lim = doc.contains("model") ? parse_limits(doc["model"], "/model")
                                                : doc.contains("market")
                                                      ? parse_limits(doc["market"], "/market")
                                                      : ModelLimits{};
  if (doc.contains("model")) {
    if (doc.contains("market")) throw ConfigError("/market", "give either model or market, not both");
    cfg.model = parse_model(doc["model"], lim);
  } else if (doc.contains("market")) {
    cfg.market = parse_market(doc["market"]);
    cfg.model = wrap("/market", [&] { return portfolio_to_generic(*cfg.market, lim); });
  } else {
    throw ConfigError("/model", "missing required field");
  }

  if (doc.contains("jump")) cfg.jump = parse_jump(doc["jump"]);

  if (auto it = doc.find("n_paths"); it != doc.end()) {
    if (!it->is_number_integer() || it->get<long long>() < 1)
      throw ConfigError("/n_paths", "expected a positive integer");
    cfg.n_paths = it->get<std::size_t>();
  }
  if (auto it = doc.find("seed"); it != doc.end()) {
    if (!it->is_number_unsigned()) throw ConfigError("/seed", "expected an unsigned integer");
    cfg.seed = it->get<std::uint64_t>();
  }
  if (auto it = doc.find("antithetic"); it != doc.end()) {
    if (!it->is_boolean()) throw ConfigError("/antithetic", "expected a boolean");
    cfg.antithetic = it->get<bool>();
  }
  if (auto it = doc.find("regression"); it != doc.end()) {
    if (auto d = it->find("degree"); d != it->end()) {
      if (!d->is_number_integer() || d->get<int>() < 1 || d->get<int>() > 6)
        throw ConfigError("/regression/degree", "expected an integer in [1, 6]");
      cfg.regression.degree = d->get<int>();
    }
    cfg.regression.max_condition =
        number_or(*it, "/regression", "max_condition", cfg.regression.max_condition);
  }
  return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("/", "cannot open scenario file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("/", std::string("invalid JSON: ") + e.what());
  }
  return parse_scenario(doc);
}

json scenario_to_json(const ScenarioConfig& cfg) {
  json doc;
  doc["x"] = cfg.x;
  doc["theta"] = cfg.theta;
  doc["grid"] = {{"horizon", cfg.grid.horizon()}, {"steps", cfg.grid.steps()}};
  const ModelLimits& lim = cfg.model.limits();
  const json limits = {{"delta", lim.delta}, {"coef_cap", lim.coef_cap}, {"a_max", lim.a_max}};
  if (cfg.market) {
    const auto& m = *cfg.market;
    json r;
    switch (m.r.kind) {
      case RateSpec::Kind::Constant: r = {{"kind", "constant"}, {"r0", m.r.r0}}; break;
      case RateSpec::Kind::Linear: r = {{"kind", "linear"}, {"r0", m.r.r0}, {"r1", m.r.r1}}; break;
      case RateSpec::Kind::Vasicek:
        r = factor_json(m.r.vasicek);
        r["kind"] = "vasicek";
        break;
    }
    doc["market"] = {{"r", r}, {"mu", vec_json(m.mu)}, {"sigma", mat_json(m.sigma)}, {"limits", limits}};
  } else {
    const auto& model = cfg.model;
    json m;
    switch (model.tier()) {
      case Tier::Deterministic: {
        if (!model.deterministic_spec())
          throw Error(ErrorCode::DomainError, "custom coefficient functions cannot be serialised");
        const auto& s = *model.deterministic_spec();
        m = {{"tier", "deterministic"}, {"a0", s.a0}, {"a1", s.a1}, {"b0", vec_json(s.b0)},
             {"b1", vec_json(s.b1)}, {"c0", vec_json(s.c0)}, {"c1", vec_json(s.c1)},
             {"d0", mat_json(s.d0)}, {"d1", mat_json(s.d1)}};
        break;
      }
      case Tier::MarkovFactor:
        m = factor_json(*model.factor_spec());
        m["tier"] = "markov_factor";
        m["b"] = vec_json(model.const_b());
        m["c"] = vec_json(model.const_c());
        m["d"] = mat_json(model.const_d());
        break;
      case Tier::PathDependent: {
        const auto& s = *model.path_spec();
        m = {{"tier", "path_dependent"}, {"a0", s.a0}, {"a_w", s.a_w}, {"a_s", s.a_s},
             {"b0", vec_json(s.b0)}, {"b_w", vec_json(s.b_w)}, {"c", vec_json(model.const_c())},
             {"d", mat_json(model.const_d())}};
        break;
      }
    }
    m["limits"] = limits;
    doc["model"] = m;
  }
  if (cfg.jump) {
    const auto& j = *cfg.jump;
    json nu;
    if (j.claims.kind == ClaimKind::Discrete) {
      json atoms = json::array();
      for (const auto& [y, p] : j.claims.atoms) atoms.push_back({y, p});
      nu = {{"kind", "discrete"}, {"atoms", atoms}};
    } else {
      nu = {{"kind", "lognormal_trunc"}, {"mu", j.claims.mu}, {"sigma", j.claims.sigma}};
      if (std::isfinite(j.claims.y_max)) nu["y_max"] = j.claims.y_max;
    }
    doc["jump"] = {{"lambda", j.intensity}, {"b", j.premium_loading}, {"a", j.drift_offset}, {"nu", nu}};
  }
  doc["n_paths"] = cfg.n_paths;
  doc["seed"] = cfg.seed;
  doc["antithetic"] = cfg.antithetic;
  doc["regression"] = {{"degree", cfg.regression.degree},
                       {"max_condition", cfg.regression.max_condition}};
  return doc;
}

}  // namespace mmvlab
