#include "mmvlab/report_io.hpp"

#include <cmath>
#include <fstream>

#include "mmvlab/error.hpp"

namespace mmvlab {

using nlohmann::json;

namespace {

// JSON has no NaN or infinity.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json to_json(const RunStamp& s) {
  return {{"version", s.version}, {"subcommand", s.subcommand}, {"seed", s.seed},
          {"n_paths", s.n_paths}, {"steps", s.steps}};
}

json to_json(const ResidualStats& r) {
  return {{"mean", num(r.mean)},
          {"se", num(r.se)},
          {"fit_se", num(r.fit_se)},
          {"worst_step_z", num(r.worst_step_z)},
          {"steps_over_gate", r.steps_over_gate},
          {"max_abs", num(r.max_abs)},
          {"ok", r.ok}};
}

json to_json(const BsdeDiagnostics& d) {
  return {{"min_h", num(d.min_h)},
          {"min_y", num(d.min_y)},
          {"h0_se", num(d.h0_se)},
          {"y0_se", num(d.y0_se)},
          {"min_r2_h", num(d.min_r2_h)},
          {"min_r2_y", num(d.min_r2_y)},
          {"max_condition", num(d.max_condition)},
          {"regression_paths", d.regression_paths},
          {"nested_inner_count", d.nested_inner_count},
          {"y_ge_one", d.y_ge_one},
          {"cap_hits", d.cap_hits}};
}

json to_json(const OracleComparison& o) {
  return {{"h0", num(o.h0)},         {"h0_oracle", num(o.h0_oracle)}, {"h0_se", num(o.h0_se)},
          {"y0", num(o.y0)},         {"y0_oracle", num(o.y0_oracle)}, {"y0_se", num(o.y0_se)},
          {"worst_h_z", num(o.worst_h_z)}, {"worst_y_z", num(o.worst_y_z)},
          {"ok", o.ok},              {"all_points_ok", o.all_points_ok}};
}

json to_json(const SaddleReport& r) {
  json probes = json::array();
  for (const auto& p : r.probes) {
    json j = {{"kind", p.kind},         {"name", p.name},         {"estimate", num(p.estimate)},
              {"se", num(p.se)},        {"excess_z", num(p.excess_z)}, {"pass", p.pass}};
    if (p.kind == "density")
      j["density"] = {{"mean", num(p.density_mean)}, {"se", num(p.density_se)}, {"ok", p.density_ok}};
    probes.push_back(j);
  }
  json statements = json::array();
  for (const auto& s : r.statements)
    statements.push_back({{"name", s.name}, {"pass", s.pass}, {"detail", s.detail}});
  json cross = json::array();
  for (const auto& c : r.cross_checks)
    cross.push_back({{"name", c.name},
                     {"reweighted", num(c.reweighted)},
                     {"reweighted_se", num(c.reweighted_se)},
                     {"resimulated", num(c.resimulated)},
                     {"resimulated_se", num(c.resimulated_se)},
                     {"z", num(c.z)},
                     {"pass", c.pass}});
  return {{"r0", num(r.r0)},
          {"value", num(r.value)},
          {"h0", num(r.h0)},
          {"y0", num(r.y0)},
          {"n_paths", r.n_paths},
          {"n_flagged", r.n_flagged},
          {"cap_hits", r.cap_hits},
          {"discretization_allowance", num(r.discretization_allowance)},
          {"probes", probes},
          {"equality_case",
           {{"estimate", num(r.equality.estimate)},
            {"se", num(r.equality.se)},
            {"excess_z", num(r.equality.excess_z)},
            {"pass", r.equality.pass}}},
          {"statements", statements},
          {"cross_checks", cross},
          {"pass", r.pass}};
}

json to_json(const DualityReport& r) {
  json f = json::array();
  for (const auto& c : r.f_checks)
    f.push_back({{"k", num(c.k)},
                 {"f", num(c.f)},
                 {"sup_j", num(c.sup)},
                 {"gamma_hat", num(c.gamma_hat)},
                 {"gamma_argsup", num(c.gamma_sup)},
                 {"pass", c.pass}});
  json doc = {{"h0", num(r.h0)},
              {"y0", num(r.y0)},
              {"x", num(r.x)},
              {"theta", num(r.theta)},
              {"seed", r.seed},
              {"n_paths", r.n_paths},
              {"steps", r.steps},
              {"k_hat", num(r.k_hat)},
              {"gamma_hat_k_hat", num(r.gamma_hat_k_hat)},
              {"gamma_hat_k_hat_closed_form", num(r.gamma_hat_k_hat_closed)},
              {"f_k_hat", num(r.f_k_hat)},
              {"variance_target", num(r.var_target)},
              {"variance_target_note", "derived: F at K-hat with E[X_T] = K-hat"},
              {"mv_value", num(r.mv_value)},
              {"mmv_value", num(r.mmv_value)},
              {"chain_gap", num(r.chain_gap)},
              {"feedback_gap", num(r.feedback_gap)},
              {"f_checks", f},
              {"pass", r.pass}};
  if (r.empirical_run) {
    const auto& e = r.empirical;
    doc["empirical"] = {{"mean", num(e.mean)},
                        {"var", num(e.var)},
                        {"value", num(e.value)},
                        {"se_mean", num(e.se_mean)},
                        {"se_var", num(e.se_var)},
                        {"se_value", num(e.se_value)},
                        {"n", e.n},
                        {"target_se_mean", num(r.target_se_mean)},
                        {"target_se_var", num(r.target_se_var)},
                        {"target_se_value", num(r.target_se_value)},
                        {"mean_ok", r.mean_ok},
                        {"var_ok", r.var_ok},
                        {"value_ok", r.value_ok}};
    json mc = json::array();
    for (const auto& c : r.mean_checks)
      mc.push_back({{"k", num(c.k)}, {"mean", num(c.mean)}, {"se", num(c.se)}, {"z", num(c.z)},
                    {"pass", c.pass}});
    doc["mean_constraint"] = mc;
    json pr = json::array();
    for (const auto& p : r.probes)
      pr.push_back({{"name", p.name}, {"value", num(p.value)}, {"se", num(p.se)}, {"pass", p.pass}});
    doc["suboptimal_probes"] = pr;
  }
  return doc;
}

json to_json(const ConservationStudy& c) {
  json rows = json::array();
  for (std::size_t i = 0; i < c.steps.size(); ++i)
    rows.push_back({{"steps", c.steps[i]},
                    {"mean_max_deviation", num(c.mean_max_deviation[i])},
                    {"mean_max_deviation_exact_density", num(c.mean_max_deviation_exact_density[i])}});
  return {{"refinement", rows},
          {"order", num(c.order)},
          {"order_exact_density", num(c.order_exact_density)},
          {"pass", c.pass}};
}

json to_json(const ApplicationReport& r) {
  json doc = {{"kind", r.kind},
              {"tier", to_string(r.tier)},
              {"seed", r.seed},
              {"n_paths", r.n_paths},
              {"steps", r.steps},
              {"h0", num(r.h0)},
              {"y0", num(r.y0)},
              {"h0_se", num(r.h0_se)},
              {"y0_se", num(r.y0_se)},
              {"value", num(r.value)},
              {"diagnostics", to_json(r.diagnostics)},
              {"h_residual", to_json(r.h_residual)},
              {"y_residual", to_json(r.y_residual)},
              {"specialization",
               {{"max_eta_gap", num(r.specialization.max_eta_gap)},
                {"max_u_gap", num(r.specialization.max_u_gap)},
                {"points", r.specialization.points},
                {"pass", r.specialization.pass}}},
              {"conservation_closed_form_max_rel", num(r.conservation_closed_form)},
              {"pass", r.pass}};
  if (r.oracle) doc["affine_oracle"] = to_json(*r.oracle);
  if (r.conservation) doc["conservation_study"] = to_json(*r.conservation);
  if (r.kind == "reinsurance")
    doc["reinsurance"] = {{"psi_slope", num(r.psi_slope)},
                          {"psi_bound", num(r.psi_bound)},
                          {"q_min", num(r.q_min)},
                          {"q_max", num(r.q_max)},
                          {"admissible", r.admissible},
                          {"feedback_q_gap", num(r.feedback_q_gap)},
                          {"h_invariant", r.h_invariant}};
  if (r.saddle) doc["saddle"] = to_json(*r.saddle);
  if (r.duality) doc["duality"] = to_json(*r.duality);
  if (r.duality_degenerate) doc["duality"] = {{"degenerate", true}};
  return doc;
}

json solve_summary(const BsdeSolution& sol, const CoefficientModel& model, double x, double theta) {
  const FeatureState s0 = model.initial_features();
  const double h0 = sol.h_at(0, s0);
  const double y0 = sol.y_at(0, s0);
  const bool reg = sol.y_backend() == Backend::Regression;
  json doc = {{"tier", to_string(sol.tier())},
              {"h_backend", to_string(sol.h_backend())},
              {"y_backend", to_string(sol.y_backend())},
              {"h0", num(h0)},
              {"y0", num(y0)},
              {"h0_se", num(reg ? sol.h_se(0, s0) : 0.0)},
              {"y0_se", num(reg ? sol.y_se(0, s0) : 0.0)},
              {"value", num(robust_value(h0, y0, x, theta,
                                         std::max(1e-10, reg ? 3.0 * sol.y_se(0, s0) : 0.0)))},
              {"jump_rate", num(sol.jump_rate())},
              {"diagnostics", to_json(sol.diagnostics)},
              {"h_residual", to_json(sol.h_residual)},
              {"y_residual", to_json(sol.y_residual)}};
  return doc;
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::ResourceLimit, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::ResourceLimit, "write failed for " + path.string());
}

}  // namespace mmvlab
