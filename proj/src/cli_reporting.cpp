#include "beamlab/cli_reporting.hpp"
#include "beamlab/grid_io.hpp"
#include "beamlab/parallel.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <set>

extern char** environ;

namespace beamlab {

using nlohmann::json;
namespace fs = std::filesystem;

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> c = {"trace", "beam-verify", "forward", "dtn", "linearize", "reconstruct",
                                             "compare"};
  return c;
}

namespace {

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

void merge(json& into, const json& from) {
  if (!into.is_object() || !from.is_object()) {
    into = from;
    return;
  }
  for (auto it = from.begin(); it != from.end(); ++it) merge(into[it.key()], it.value());
}

/// Walks a dotted path; nullptr if any piece is absent.
const json* find(const json& doc, const std::string& path) {
  const json* cur = &doc;
  std::size_t b = 0;
  while (b <= path.size()) {
    std::size_t e = path.find('.', b);
    if (e == std::string::npos) e = path.size();
    const std::string key = path.substr(b, e - b);
    if (!cur->is_object() || !cur->contains(key)) return nullptr;
    cur = &(*cur)[key];
    b = e + 1;
  }
  return cur;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Collects violations; each check names the offending field.
class Checker {
public:
  explicit Checker(const json& doc) : doc_(doc) {}
  std::vector<std::string> issues;

  const json* need(const std::string& path) {
    const json* j = find(doc_, path);
    if (!j) issues.push_back(path + ": missing");
    return j;
  }
  void number(const std::string& path, bool positive = false) {
    const json* j = need(path);
    if (!j) return;
    if (!j->is_number()) issues.push_back(path + ": must be a number");
    else if (positive && !(j->get<double>() > 0)) issues.push_back(path + ": must be positive");
  }
  void integer(const std::string& path, long long lo, long long hi) {
    const json* j = need(path);
    if (!j) return;
    if (!j->is_number_integer()) issues.push_back(path + ": must be an integer");
    else if (j->get<long long>() < lo || j->get<long long>() > hi)
      issues.push_back(path + ": must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  void vec(const std::string& path, int size, bool positive = false) {
    const json* j = need(path);
    if (!j) return;
    vec_at(path, *j, size, positive);
  }
  void vec_at(const std::string& path, const json& j, int size, bool positive = false) {
    if (!j.is_array()) {
      issues.push_back(path + ": must be an array");
      return;
    }
    if (size < 0 && j.empty()) issues.push_back(path + ": must not be empty");
    if (size >= 0 && static_cast<int>(j.size()) != size)
      issues.push_back(path + ": needs " + std::to_string(size) + " entries");
    for (const auto& x : j)
      if (!x.is_number()) {
        issues.push_back(path + ": entries must be numbers");
        return;
      } else if (positive && !(x.get<double>() > 0)) {
        issues.push_back(path + ": entries must be positive");
        return;
      }
  }
  void one_of(const std::string& path, const std::set<std::string>& allowed, bool nullable = false) {
    const json* j = need(path);
    if (!j) return;
    if (nullable && j->is_null()) return;
    if (!j->is_string() || !allowed.count(j->get<std::string>())) {
      std::vector<std::string> a(allowed.begin(), allowed.end());
      issues.push_back(path + ": must be one of " + join(a, " | ") + (nullable ? " | null" : ""));
    }
  }

private:
  const json& doc_;
};

void check_exprs(Checker& c, const json& doc, const std::string& path, int n) {
  const json* j = find(doc, path);
  if (!j) return c.issues.push_back(path + ": missing");
  if (!j->is_object()) return c.issues.push_back(path + ": must map order -> expression");
  const auto vars = coordinate_names(n);
  for (auto it = j->begin(); it != j->end(); ++it) {
    int k = 0;
    try {
      std::size_t used = 0;
      k = std::stoi(it.key(), &used);
      if (used != it.key().size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      c.issues.push_back(path + "." + it.key() + ": order must be an integer");
      continue;
    }
    if (k < 3 || k > 5) c.issues.push_back(path + "." + it.key() + ": order must be in 3..5");
    if (!it.value().is_string()) {
      c.issues.push_back(path + "." + it.key() + ": must be an expression string");
      continue;
    }
    try {
      Expr::parse(it.value().get<std::string>(), vars);
    } catch (const Error& e) {
      c.issues.push_back(path + "." + it.key() + ": " + e.what());
    }
  }
}

// ---- pipeline context ----

struct Context {
  const RunConfig& cfg;
  const json& d;
  MetricSpec metric;
  Lattice lat;
  std::unique_ptr<WaveOperator> op;
  ReportSink& sink;
  RunManifest& man;

  Context(const RunConfig& c, ReportSink& s, RunManifest& m) : cfg(c), d(c.doc), sink(s), man(m) {
    metric = metric_from_json(d.at("metric"));
    const auto& L = d.at("lattice");
    lat = Lattice::make(metric, L.at("nt").get<int>(), L.at("nx").get<int>(), metric.n == 2 ? L.at("ny").get<int>() : 1);
  }
  int n() const { return metric.n; }

  const WaveOperator& wave_operator() {
    if (!op) op = std::make_unique<WaveOperator>(metric, lat, d.at("lattice").at("cfl_max").get<double>());
    return *op;
  }

  template <class F> void stage(const std::string& name, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    man.stages.push_back({name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
  }
  void verdict(const std::string& name, Verdict v) { man.verdicts.emplace_back(name, v); }

  SpacetimePoint point(const json& j) const {
    SpacetimePoint p{j.at(0).get<double>(), {}};
    for (int i = 1; i <= n(); ++i) p.x.push_back(j.at(i).get<double>());
    return p;
  }

  GammaWindow gamma() const {
    const auto& g = d.at("gamma");
    GammaWindow w;
    w.faces = g.at("faces").get<std::vector<int>>();
    w.t0 = g.at("t0").get<double>();
    if (!g.at("t1").is_null()) w.t1 = g.at("t1").get<double>();
    if (!g.at("y0").is_null()) w.y0 = g.at("y0").get<double>();
    if (!g.at("y1").is_null()) w.y1 = g.at("y1").get<double>();
    return w;
  }

  SemilinearOptions solver() const {
    const auto& s = d.at("solver");
    return {s.at("tol").get<double>(), s.at("max_iter").get<int>(), s.at("eps0").get<double>()};
  }

  NonlinearitySpec nonlinearity(const char* which) const {
    std::map<int, std::string> ex;
    for (auto it = d.at("nonlinearity").at(which).begin(); it != d.at("nonlinearity").at(which).end(); ++it)
      ex[std::stoi(it.key())] = it.value().get<std::string>();
    return nonlinearity_from_exprs(lat, ex, d.at("nonlinearity").at("kmax").get<int>());
  }

  std::vector<BoundaryData> battery() {
    const auto& b = d.at("boundary");
    std::vector<BoundaryData> out;
    const auto g = gamma();
    for (const auto& w : b.at("waveforms")) {
      Waveform wf;
      wf.kind = w.value("kind", "bump");
      wf.face = w.value("face", 0);
      wf.t_center = w.value("t_center", 0.5);
      wf.t_width = w.value("t_width", 0.25);
      wf.y_center = w.value("y_center", 0.5);
      wf.y_width = w.value("y_width", 0.25);
      wf.amplitude = w.value("amplitude", 1.0);
      out.push_back(make_boundary_data(wave_operator(), wf, g, b.at("eps").get<double>(), b.at("s_data").get<int>()));
    }
    return out;
  }

  /// Future-pointing null vector (1, c omega) at p.
  std::vector<double> null_vector(const SpacetimePoint& p, const std::vector<double>& omega) const {
    double g[3][3];
    const double x[3] = {p.t, p.x[0], n() == 2 ? p.x[1] : 0.0};
    metric_at(metric, x, g);
    double a = 0, b = 0;
    for (int i = 0; i < n(); ++i) {
      b += 2 * g[0][i + 1] * omega[i];
      for (int j = 0; j < n(); ++j) a += g[i + 1][j + 1] * omega[i] * omega[j];
    }
    // a c^2 + b c + g00 = 0, g00 < 0 < a: one positive root
    const double c = (-b + std::sqrt(b * b - 4 * a * g[0][0])) / (2 * a);
    std::vector<double> v{1.0};
    for (int i = 0; i < n(); ++i) v.push_back(c * omega[i]);
    return v;
  }

  void trace_csv(const std::string& name, const std::vector<std::pair<int, const std::vector<double>*>>& traces,
                 bool gamma_only) {
    const auto& o = wave_operator();
    const auto g = gamma();
    CsvWriter csv(sink.path(name), {"input", "t", "face", "along", "value"});
    for (const auto& [id, tr] : traces)
      for (int it = 0; it < o.nt(); ++it) {
        const double t = lat.coord(0, it);
        for (std::size_t k = 0; k < o.bnd.entries.size(); ++k) {
          const auto& e = o.bnd.entries[k];
          if (gamma_only && !g.contains(e.face, t, e.along)) continue;
          csv << id << t << e.face << e.along << (*tr)[it * o.bnd.entries.size() + k];
          csv.end_row();
        }
      }
  }
};

Verdict pass_if(bool ok) { return ok ? Verdict::Pass : Verdict::Fail; }

double rms_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return v.empty() ? 0.0 : std::sqrt(s / v.size());
}

// ---- pipelines ----

void run_trace(Context& c) {
  const auto& t = c.d.at("trace");
  const auto p = c.point(t.at("point"));
  std::vector<std::vector<double>> dirs;
  for (const auto& w : t.at("directions")) dirs.push_back(w.get<std::vector<double>>());
  // random rays: uniform angle (n = 2) or sign (n = 1) from the run seed
  std::mt19937_64 rng(c.cfg.seed);
  for (int r = 0; r < t.at("random_rays").get<int>(); ++r) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    if (c.n() == 1) dirs.push_back({u < 0.5 ? -1.0 : 1.0});
    else dirs.push_back({std::cos(2 * M_PI * u), std::sin(2 * M_PI * u)});
  }
  ShootOptions so;
  so.max_reflections = t.at("max_reflections").get<int>();
  so.s_max = t.at("s_max").get<double>();

  std::vector<BrokenNullGeodesic> rays(dirs.size());
  std::vector<std::string> status(dirs.size(), "ok");
  c.stage("shoot", [&] {
    parallel_for(static_cast<int>(dirs.size()), c.cfg.threads, [&](int k) {
      try {
        TangentObject xi{p, c.null_vector(p, dirs[k]), Variance::Vector};
        rays[k] = shoot_null_geodesic(c.metric, p, xi, so);
      } catch (const Error& e) {
        status[k] = e.kind();
      }
    });
  });

  bool ok = true;
  double worst = 0;
  c.stage("report", [&] {
    std::vector<std::string> head{"ray", "omega_x"};
    if (c.n() == 2) head.push_back("omega_y");
    for (const char* h : {"end", "reflections", "s_exit", "max_null_defect", "status"}) head.push_back(h);
    CsvWriter csv(c.sink.path("rays.csv"), head);
    for (std::size_t k = 0; k < dirs.size(); ++k) {
      csv << k;
      for (double w : dirs[k]) csv << w;
      const bool good = status[k] == "ok";
      ok = ok && good;
      if (good) {
        worst = std::max(worst, rays[k].max_null_defect);
        csv << to_string(rays[k].end) << rays[k].reflection_points.size()
            << rays[k].s_exit.value_or(std::nan("")) << rays[k].max_null_defect;
        char name[32];
        std::snprintf(name, sizeof name, "geodesic_%03zu.csv", k);
        std::ofstream os(c.sink.path(name));
        write_geodesic_csv(os, rays[k], c.n());
      } else {
        csv << "" << 0 << std::nan("") << std::nan("");
      }
      csv << status[k];
      csv.end_row();
    }
  });
  c.stage("recoverable-set", [&] {
    auto reach = reachable_set(c.metric, c.lat);
    std::vector<std::string> head{"x"};
    if (c.n() == 2) head.push_back("y");
    head.push_back("arrival");
    head.push_back("departure");
    CsvWriter csv(c.sink.path("recoverable_set.csv"), head);
    const int ny = c.lat.dims[2];
    for (int ix = 0; ix < c.lat.dims[1]; ++ix)
      for (int iy = 0; iy < ny; ++iy) {
        csv << c.lat.coord(1, ix);
        if (c.n() == 2) csv << c.lat.coord(2, iy);
        csv << reach.arrival[ix * ny + iy] << reach.departure[ix * ny + iy];
        csv.end_row();
      }
  });
  c.man.results["trace"] = {{"rays", dirs.size()}, {"max_null_defect", worst}};
  c.verdict("null_preservation", pass_if(ok && worst <= 1e-9));
}

void run_beam_verify(Context& c) {
  const auto& b = c.d.at("beam");
  const int N = b.at("N").get<int>();
  std::shared_ptr<GaussianBeam<double>> beam;
  double s_end = 0;
  ChartOptions co;
  co.h = b.at("h").get<double>();
  co.delta_p = b.at("delta_p").get<double>();
  c.stage("beam", [&] {
    SpacetimePoint p{0.0, b.at("x0").get<std::vector<double>>()};
    TangentObject xi{p, c.null_vector(p, b.at("direction").get<std::vector<double>>()), Variance::Vector};
    ShootOptions so;
    so.stop_at_boundary = true;
    auto g = shoot_null_geodesic(c.metric, p, xi, so);
    const auto& seg = g.segments.front();
    s_end = seg.s1 - seg.s0;
    auto ch = std::make_shared<FermiChart<double>>(build_fermi_chart(c.metric, seg, co));
    BeamOptions bo;
    bo.N = N;
    for (const auto& h : b.at("H0")) bo.H0.emplace_back(h.at(0).get<double>(), h.at(1).get<double>());
    beam = std::make_shared<GaussianBeam<double>>(build_beam<double>(ch, bo));
  });
  const double ric = beam->riccati_invariant_error();
  c.verdict("riccati_invariant", pass_if(ric <= 1e-8));

  DecayReport rep;
  c.stage("residual-decay", [&] {
    auto smp = sample_beam(*beam, c.lat, c.metric);
    rep = residual_decay(smp, c.lat, b.at("rho").get<std::vector<double>>(), N, c.n(), b.at("k").get<int>(),
                         b.at("fit").get<int>());
    CsvWriter csv(c.sink.path("decay.csv"), {"rho", "norm_L2", "norm_Hk", "slope", "target_K", "verdict"});
    for (const auto& r : rep.rows) {
      csv << r.rho << r.norm_L2 << r.norm_Hk << rep.slope << rep.target_K << rep.verdict;
      csv.end_row();
    }
  });
  c.verdict("residual_decay", rep.verdict == "pass" ? Verdict::Pass
                              : rep.verdict == "fail" ? Verdict::Fail
                                                      : Verdict::Skipped);
  c.man.results["beam"] = {{"riccati_invariant_error", ric}, {"slope", rep.slope}, {"target_K", rep.target_K},
                           {"exact", rep.exact}};

  if (b.at("reflect").get<bool>()) {
    SmallnessReport sm;
    c.stage("reflection", [&] {
      auto pair = build_reflected_pair(c.metric, beam, s_end, b.at("reflect_length").get<double>(), co);
      sm = boundary_smallness(pair, c.metric, b.at("reflect_rho").get<std::vector<double>>(), b.at("k").get<int>());
      CsvWriter csv(c.sink.path("smallness.csv"), {"rho", "norm", "slope", "target", "verdict"});
      for (std::size_t i = 0; i < sm.rho.size(); ++i) {
        csv << sm.rho[i] << sm.norm[i] << sm.slope << sm.target << sm.verdict;
        csv.end_row();
      }
      c.man.results["reflection"] = {{"slope", sm.slope}, {"target", sm.target},
                                     {"match_residual", pair.match_residual}};
    });
    c.verdict("boundary_smallness", sm.verdict == "pass" ? Verdict::Pass
                                    : sm.verdict == "fail" ? Verdict::Fail
                                                           : Verdict::Skipped);
  } else {
    c.verdict("boundary_smallness", Verdict::Skipped);
  }
}

void write_picard(Context& c, const std::string& name, const SemilinearReport& rep) {
  CsvWriter csv(c.sink.path(name), {"iteration", "increment", "ratio"});
  for (std::size_t i = 0; i < rep.increments.size(); ++i) {
    csv << i + 1 << rep.increments[i] << (i > 0 ? rep.ratios[i - 1] : std::nan(""));
    csv.end_row();
  }
}

void run_forward(Context& c) {
  const auto& op = c.wave_operator();
  auto V = c.nonlinearity("V1");
  auto data = c.battery();
  const auto& f = data.at(c.d.at("forward").at("input").get<int>());
  SemilinearReport rep;
  RealField u;
  c.stage("solve", [&] { u = solve_semilinear(op, V, f, &rep, c.solver()); });
  c.stage("report", [&] {
    write_picard(c, "picard.csv", rep);
    const auto tr = neumann_trace(op, u);
    c.trace_csv("trace.csv", {{0, &tr}}, false);
    GridFile g;
    for (int a = 0; a <= c.n(); ++a) g.dims.push_back(c.lat.dims[a]);
    g.data = u.v;
    write_grid(c.sink.path("u.blgrid"), g);
  });
  c.man.results["forward"] = {{"iterations", rep.iterations}, {"max_ratio", rep.max_ratio}, {"cfl", op.cfl}};
  c.verdict("picard_converged", pass_if(rep.converged));
}

void run_dtn(Context& c) {
  const auto& op = c.wave_operator();
  auto V = c.nonlinearity("V1");
  auto data = c.battery();
  std::vector<DtNSample> out(data.size());
  c.stage("solve", [&] {
    parallel_for(static_cast<int>(data.size()), c.cfg.threads,
                 [&](int k) { out[k] = dtn_apply(op, V, data[k], c.solver()); });
  });
  bool ok = true;
  c.stage("report", [&] {
    std::vector<std::pair<int, const std::vector<double>*>> tr;
    CsvWriter csv(c.sink.path("picard.csv"), {"input", "iterations", "max_ratio", "converged"});
    for (std::size_t k = 0; k < out.size(); ++k) {
      tr.push_back({static_cast<int>(k), &out[k].trace});
      csv << k << out[k].report.iterations << out[k].report.max_ratio << (out[k].report.converged ? 1 : 0);
      csv.end_row();
      ok = ok && out[k].report.converged;
    }
    c.trace_csv("dtn.csv", tr, true);
  });
  c.man.results["dtn"] = {{"inputs", out.size()}};
  c.verdict("picard_converged", pass_if(ok));
}

void run_linearize(Context& c) {
  const auto& op = c.wave_operator();
  const auto& L = c.d.at("linearize");
  const int m = L.at("order").get<int>();
  auto V = c.nonlinearity("V1");
  auto all = c.battery();
  std::vector<BoundaryData> data;
  for (int i : L.at("inputs").get<std::vector<int>>()) data.push_back(all.at(i));

  LinearizationOptions lo;
  lo.eps_step = L.at("eps_step").get<double>();
  lo.richardson = L.at("richardson").get<bool>();
  lo.trace = true;
  lo.threads = c.cfg.threads;
  LinearizedField lf;
  c.stage("stencil", [&] { lf = mixed_derivative(op, V, data, lo); });

  RealField direct(c.lat);
  c.stage("direct", [&] {
    std::vector<RealField> w;
    for (const auto& f : data) {
      auto g = f.scaled();
      w.push_back(solve_linear_wave<double>(op, nullptr, &g));
    }
    direct = m == 1 ? w[0] : linearized_family<double>(op, V, w, m).at((1u << m) - 1);
  });

  std::vector<double> diff(direct.v.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = lf.field.v[i] - direct.v[i];
  const double dr = rms_of(direct.v), err = rms_of(diff);
  c.stage("report", [&] {
    write_stencil_report(c.sink.path("stencil.csv"), lf);
    c.trace_csv("linearized_trace.csv", {{0, &lf.trace}}, true);
  });
  c.man.results["linearize"] = {{"order", m},
                                {"rms", rms_of(lf.field.v)},
                                {"direct_rms", dr},
                                {"difference_rms", err},
                                {"truncation", lf.truncation},
                                {"cancellation", lf.cancellation},
                                {"error_bar", lf.error_bar}};
  const double tol = std::max(L.at("direct_tol").get<double>() * dr, 10 * lf.error_bar);
  c.verdict("direct_match", pass_if(err <= tol));
  // a vanishing derivative (e.g. order 2 without V2) has no signal to condition
  c.verdict("conditioning", dr == 0 ? Verdict::Skipped : pass_if(!lf.ill_conditioned));
}

ReconstructionOptions reconstruction_options(Context& c) {
  const auto& r = c.d.at("reconstruct");
  ReconstructionOptions o;
  o.bundle.N = r.at("N").get<int>();
  o.bundle.delta_p = r.at("delta_p").get<double>();
  o.quad.window = r.at("window").get<double>();
  o.quad.min_nodes_per_efold = r.at("min_nodes_per_efold").get<double>();
  const auto src = r.at("source").get<std::string>();
  o.source = src == "solve" ? IntegralSource::Solve : src == "dtn" ? IntegralSource::DtN : IntegralSource::Field;
  o.gamma = c.gamma();
  o.linear.eps_step = c.d.at("linearize").at("eps_step").get<double>();
  o.linear.richardson = false;
  o.stride = r.at("stride").get<int>();
  o.threads = c.cfg.threads;
  return o;
}

void run_reconstruct(Context& c) {
  const auto& r = c.d.at("reconstruct");
  const int m = r.at("order").get<int>();
  auto V1 = c.nonlinearity("V1"), V2 = c.nonlinearity("V2");
  const auto rhos = r.at("rho").get<std::vector<double>>();
  auto o = reconstruction_options(c);
  std::vector<PointEstimate> pts;

  if (r.at("field").get<bool>()) {
    FieldReconstruction fr;
    c.stage("field", [&] { fr = reconstruct_v3_field(c.metric, c.lat, V1, V2, rhos, o); });
    for (std::size_t k = 0; k < fr.points.size(); ++k)
      if (fr.points[k].status != "untested") pts.push_back(fr.points[k]);
  } else {
    std::vector<SpacetimePoint> ps;
    for (const auto& p : r.at("points")) ps.push_back(c.point(p));
    pts.resize(ps.size());
    c.stage("points", [&] {
      auto inner = o;
      inner.threads = 1;
      parallel_for(static_cast<int>(ps.size()), c.cfg.threads, [&](int k) {
        try {
          pts[k] = recover_vm(m, c.metric, c.lat, V1, V2, ps[k], rhos, inner);
        } catch (const Error& e) {
          pts[k].p = ps[k];
          pts[k].status = "rejected";
          pts[k].message = e.what();
        }
      });
    });
  }
  c.stage("report", [&] { write_reconstruction_csv(c.sink.path("reconstruction.csv"), pts, c.n()); });

  int ok = 0;
  bool accurate = true;
  const json& expected = r.at("expected");
  json rows = json::array();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& pe = pts[i];
    if (pe.status != "ok") continue;
    ++ok;
    if (!expected.is_null()) {
      const double e = (expected.is_array() ? expected[i] : expected).get<double>();
      accurate = accurate && std::fabs(pe.value - e) <= r.at("rel_tol").get<double>() * std::fabs(e);
    }
    rows.push_back({{"t", pe.p.t}, {"x", pe.p.x}, {"value", pe.value}, {"error_bar", pe.error_bar}});
  }
  c.man.results["reconstruct"] = {{"tested", ok}, {"rejected", pts.size() - ok}, {"points", rows}};
  if (r.at("field").get<bool>()) c.verdict("coverage", pass_if(ok > 0));
  else c.verdict("bundle", pass_if(ok == static_cast<int>(pts.size())));
  c.verdict("accuracy", !expected.is_null() ? pass_if(ok > 0 && accurate) : Verdict::Skipped);
}

void run_compare(Context& c) {
  const auto& op = c.wave_operator();
  const auto& cmp = c.d.at("compare");
  auto V1 = c.nonlinearity("V1"), V2 = c.nonlinearity("V2");
  auto data = c.battery();
  auto o = reconstruction_options(c);
  o.source = IntegralSource::Field;
  o.stride = cmp.at("stride").get<int>();
  ComparisonReport rep;
  c.stage("compare", [&] {
    rep = uniqueness_compare(op, V1, V2, data, c.solver(), cmp.at("rho").get<std::vector<double>>(), o);
  });
  c.stage("report", [&] {
    CsvWriter csv(c.sink.path("compare.csv"), {"input", "discrepancy", "tolerance"});
    for (std::size_t k = 0; k < rep.discrepancy.size(); ++k) {
      csv << k << rep.discrepancy[k] << rep.tolerance;
      csv.end_row();
    }
    std::vector<PointEstimate> pts;
    for (const auto& pe : rep.field.points)
      if (pe.status != "untested") pts.push_back(pe);
    write_reconstruction_csv(c.sink.path("compare_field.csv"), pts, c.n());
  });
  c.man.results["compare"] = {{"max_discrepancy", rep.max_discrepancy},
                              {"tolerance", rep.tolerance},
                              {"field_rms", rep.field_rms},
                              {"field_peak", rep.field_peak},
                              {"peak_t", rep.peak_at.t},
                              {"peak_x", rep.peak_at.x}};
  const json& expect = cmp.at("expect");
  Verdict v = Verdict::Skipped;
  if (expect == "identical") v = pass_if(rep.max_discrepancy <= 5 * rep.tolerance);
  else if (expect == "differ") v = pass_if(rep.max_discrepancy > rep.tolerance && rep.field_peak != 0);
  c.verdict("uniqueness", v);
}

} // namespace

// ---- config ----

ConfigError::ConfigError(std::vector<std::string> issues)
    : Error("config", std::to_string(issues.size()) + " problem(s): " + join(issues, "; ")),
      issues_(std::move(issues)) {}

json default_config() {
  return json::parse(R"({
    "schema_version": 1,
    "seed": 0,
    "threads": 1,
    "out": "out",
    "metric": {"kind": "minkowski", "n": 1, "T": 2.0, "domain": {"kind": "interval", "L": 1.0}},
    "lattice": {"nt": 321, "nx": 129, "ny": 1, "cfl_max": 0.9},
    "beam": {"N": 5, "H0": [], "x0": [0.3], "direction": [1.0], "h": 0.05, "delta_p": 1.0,
             "rho": [16, 32, 64, 128], "k": 0, "fit": 4,
             "reflect": false, "reflect_length": 0.5, "reflect_rho": [16, 32, 64, 128]},
    "nonlinearity": {"kmax": 5, "V1": {"3": "1"}, "V2": {"3": "1"}},
    "boundary": {"eps": 0.05, "s_data": 3, "waveforms": [
      {"face": 0, "t_center": 0.5, "t_width": 0.25, "amplitude": 1.0},
      {"face": 1, "t_center": 0.7, "t_width": 0.25, "amplitude": 1.0},
      {"face": 0, "t_center": 0.9, "t_width": 0.25, "amplitude": 1.0}]},
    "gamma": {"faces": [0, 1, 2, 3], "t0": 0.0, "t1": null, "y0": null, "y1": null},
    "solver": {"tol": 1e-10, "max_iter": 50, "eps0": 0.1},
    "trace": {"point": [0.0, 0.5], "directions": [[1.0], [-1.0]], "random_rays": 0, "max_reflections": 4,
              "s_max": 0.0},
    "forward": {"input": 0},
    "linearize": {"order": 3, "inputs": [0, 1, 2], "eps_step": 0.01, "richardson": true, "direct_tol": 0.03},
    "reconstruct": {"order": 3, "source": "field", "points": [[1.0, 0.5]], "field": false, "stride": 8,
                    "rho": [8, 16, 32], "min_nodes_per_efold": 4, "window": 40, "N": 3, "delta_p": 1.0,
                    "expected": null, "rel_tol": 0.2},
    "compare": {"expect": null, "rho": [16, 32], "stride": 16}
  })");
}

namespace {
std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return s;
}
} // namespace

void apply_env_overrides(json& doc, const std::map<std::string, std::string>& env) {
  const std::string prefix = "BEAMLAB_";
  for (const auto& [name, value] : env) {
    if (name.rfind(prefix, 0) != 0 || name.size() == prefix.size()) continue;
    const std::string key = lower(name.substr(prefix.size()));
    json* cur = &doc;
    std::size_t b = 0;
    while (true) {
      const std::size_t e = key.find("__", b);
      std::string part = key.substr(b, e == std::string::npos ? std::string::npos : e - b);
      if (!cur->is_object()) *cur = json::object();
      // existing keys match regardless of case (metric.T, nonlinearity.V1)
      for (auto it = cur->begin(); it != cur->end(); ++it)
        if (lower(it.key()) == part) part = it.key();
      cur = &(*cur)[part];
      if (e == std::string::npos) break;
      b = e + 2;
    }
    json parsed = json::parse(value, nullptr, false);
    *cur = parsed.is_discarded() ? json(value) : parsed;
  }
}

std::map<std::string, std::string> beamlab_environment() {
  std::map<std::string, std::string> env;
  for (char** e = environ; e && *e; ++e) {
    const std::string kv = *e;
    const auto eq = kv.find('=');
    if (eq != std::string::npos && kv.rfind("BEAMLAB_", 0) == 0) env[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return env;
}

std::vector<std::string> validate_config(const std::string& command, const json& doc) {
  Checker c(doc);
  if (std::find(subcommands().begin(), subcommands().end(), command) == subcommands().end())
    c.issues.push_back("command: unknown subcommand '" + command + "'");
  const json* sv = find(doc, "schema_version");
  if (!sv) c.issues.push_back("schema_version: missing");
  else if (*sv != kSchemaVersion) c.issues.push_back("schema_version: expected " + std::to_string(kSchemaVersion));
  c.integer("threads", 1, 1024);
  c.integer("seed", 0, std::numeric_limits<long long>::max());
  if (const json* o = c.need("out"); o && (!o->is_string() || o->get<std::string>().empty()))
    c.issues.push_back("out: must be a non-empty path");

  int n = 1;
  if (const json* m = c.need("metric")) {
    try {
      auto ms = metric_from_json(*m);
      n = ms.n;
    } catch (const std::exception& e) {
      c.issues.push_back(std::string("metric: ") + e.what());
    }
    // the parser falls back to defaults for unknown keys, so misspelt sizes would pass silently
    if (const json* d = find(doc, "metric.domain"); d && d->is_object()) {
      static const std::map<std::string, std::set<std::string>> allowed = {
          {"interval", {"kind", "L"}}, {"rectangle", {"kind", "Lx", "Ly"}}, {"disk", {"kind", "cx", "cy", "R"}}};
      const std::string kind = d->value("kind", n == 1 ? "interval" : "rectangle");
      if (auto a = allowed.find(kind); a != allowed.end())
        for (const auto& [k, v] : d->items())
          if (!a->second.count(k)) c.issues.push_back("metric.domain." + k + ": not a " + kind + " parameter");
    }
  }
  c.integer("lattice.nt", 3, 1 << 20);
  c.integer("lattice.nx", 3, 1 << 20);
  c.integer("lattice.ny", n == 2 ? 3 : 1, 1 << 20);
  c.number("lattice.cfl_max", true);
  c.number("solver.tol", true);
  c.integer("solver.max_iter", 1, 100000);
  c.number("solver.eps0", true);

  auto waves = [&] {
    c.number("boundary.eps", true);
    c.integer("boundary.s_data", 0, 8);
    const json* w = c.need("boundary.waveforms");
    if (!w) return std::size_t(0);
    if (!w->is_array() || w->empty()) {
      c.issues.push_back("boundary.waveforms: must be a non-empty array");
      return std::size_t(0);
    }
    for (std::size_t i = 0; i < w->size(); ++i) {
      const auto& f = (*w)[i];
      const std::string at = "boundary.waveforms[" + std::to_string(i) + "]";
      if (!f.is_object()) {
        c.issues.push_back(at + ": must be an object");
        continue;
      }
      const int face = f.value("face", 0);
      if (face < 0 || face > (n == 2 ? 3 : 1)) c.issues.push_back(at + ".face: no such face");
      if (!(f.value("t_width", 0.25) > 0)) c.issues.push_back(at + ".t_width: must be positive");
      if (n == 2 && !(f.value("y_width", 0.25) > 0)) c.issues.push_back(at + ".y_width: must be positive");
    }
    return w->size();
  };
  auto index_ok = [&](const std::string& path, long long i, std::size_t count) {
    if (i < 0 || static_cast<std::size_t>(i) >= count)
      c.issues.push_back(path + ": no waveform " + std::to_string(i));
  };

  if (command == "trace") {
    c.vec("trace.point", n + 1);
    c.integer("trace.random_rays", 0, 100000);
    c.integer("trace.max_reflections", 0, 1000);
    c.number("trace.s_max");
    if (const json* d = c.need("trace.directions"); d && d->is_array()) {
      for (std::size_t i = 0; i < d->size(); ++i) c.vec_at("trace.directions[" + std::to_string(i) + "]", (*d)[i], n);
      const json* r = find(doc, "trace.random_rays");
      if (d->empty() && (!r || !r->is_number_integer() || r->get<int>() == 0))
        c.issues.push_back("trace.directions: no rays requested");
    } else if (d) {
      c.issues.push_back("trace.directions: must be an array");
    }
  } else if (command == "beam-verify") {
    c.integer("beam.N", 1, 9);
    c.vec("beam.x0", n);
    c.vec("beam.direction", n);
    c.number("beam.h", true);
    c.number("beam.delta_p", true);
    c.vec("beam.rho", -1, true);
    c.integer("beam.k", 0, 1);
    c.integer("beam.fit", 2, 100);
    if (const json* h = c.need("beam.H0")) {
      if (!h->is_array() || (!h->empty() && static_cast<int>(h->size()) != n * n))
        c.issues.push_back("beam.H0: needs " + std::to_string(n * n) + " [re, im] entries or none");
      else
        for (const auto& e : *h)
          if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
            c.issues.push_back("beam.H0: entries must be [re, im]");
    }
    if (const json* r = c.need("beam.reflect"); r && !r->is_boolean()) c.issues.push_back("beam.reflect: must be a boolean");
    c.number("beam.reflect_length", true);
    c.vec("beam.reflect_rho", -1, true);
  } else if (command == "forward" || command == "dtn" || command == "linearize" || command == "compare" ||
             command == "reconstruct") {
    check_exprs(c, doc, "nonlinearity.V1", n);
    c.integer("nonlinearity.kmax", 3, 5);
    if (command == "reconstruct" || command == "compare") check_exprs(c, doc, "nonlinearity.V2", n);
    if (command != "reconstruct") {
      const std::size_t count = waves();
      if (command == "forward") {
        c.integer("forward.input", 0, 1 << 20);
        if (const json* i = find(doc, "forward.input"); i && i->is_number_integer() && count)
          index_ok("forward.input", i->get<long long>(), count);
      }
      if (command == "linearize") {
        c.integer("linearize.order", 1, 5);
        c.number("linearize.eps_step", true);
        c.number("linearize.direct_tol", true);
        const json* o = find(doc, "linearize.order");
        const json* in = c.need("linearize.inputs");
        if (in && (!in->is_array() || (o && o->is_number_integer() && in->size() != o->get<std::size_t>())))
          c.issues.push_back("linearize.inputs: needs one waveform index per order");
        else if (in && count)
          for (const auto& i : *in) {
            if (!i.is_number_integer()) c.issues.push_back("linearize.inputs: indices must be integers");
            else index_ok("linearize.inputs", i.get<long long>(), count);
          }
      }
      if (command == "compare") {
        c.vec("compare.rho", -1, true);
        c.integer("compare.stride", 1, 1 << 20);
        c.one_of("compare.expect", {"identical", "differ"}, true);
      }
    }
    if (command == "reconstruct" || command == "compare") {
      c.integer("reconstruct.N", 1, 9);
      c.number("reconstruct.delta_p", true);
      c.number("reconstruct.window", true);
      c.number("reconstruct.min_nodes_per_efold", true);
      c.one_of("reconstruct.source", {"field", "solve", "dtn"});
    }
    if (command == "reconstruct") {
      c.integer("reconstruct.order", 3, 5);
      c.vec("reconstruct.rho", -1, true);
      c.integer("reconstruct.stride", 1, 1 << 20);
      c.number("reconstruct.rel_tol", true);
      const json* f = c.need("reconstruct.field");
      if (f && !f->is_boolean()) c.issues.push_back("reconstruct.field: must be a boolean");
      const bool field = f && f->is_boolean() && f->get<bool>();
      if (field && find(doc, "reconstruct.order") && *find(doc, "reconstruct.order") != 3)
        c.issues.push_back("reconstruct.field: field reconstruction is for order 3");
      if (!field) {
        const json* p = c.need("reconstruct.points");
        if (p && (!p->is_array() || p->empty())) c.issues.push_back("reconstruct.points: must be a non-empty array");
        else if (p)
          for (std::size_t i = 0; i < p->size(); ++i)
            c.vec_at("reconstruct.points[" + std::to_string(i) + "]", (*p)[i], n + 1);
      }
      if (const json* e = c.need("reconstruct.expected"); e && !e->is_null() && !e->is_number()) {
        const json* p = find(doc, "reconstruct.points");
        const bool per_point = e->is_array() && !field && p && p->is_array() && e->size() == p->size() &&
                               std::all_of(e->begin(), e->end(), [](const json& v) { return v.is_number(); });
        if (!per_point)
          c.issues.push_back("reconstruct.expected: must be null, a number, or one number per point");
      }
    }
  }
  if (const json* g = find(doc, "gamma")) {
    if (const json* f = find(*g, "faces"); !f || !f->is_array()) c.issues.push_back("gamma.faces: must be an array");
    for (const char* k : {"t1", "y0", "y1"})
      if (const json* v = find(*g, k); !v || (!v->is_null() && !v->is_number()))
        c.issues.push_back(std::string("gamma.") + k + ": must be a number or null");
    c.number("gamma.t0");
  } else {
    c.issues.push_back("gamma: missing");
  }
  return c.issues;
}

RunConfig load_config(const std::string& command, const json& file, const std::map<std::string, std::string>& env,
                      const json& flags) {
  json doc = default_config();
  if (!file.is_null()) {
    if (!file.is_object()) throw ConfigError({"config file: top level must be an object"});
    merge(doc, file);
  }
  apply_env_overrides(doc, env);
  merge(doc, flags);
  auto issues = validate_config(command, doc);
  if (!issues.empty()) throw ConfigError(std::move(issues));
  RunConfig cfg;
  cfg.command = command;
  cfg.doc = doc;
  cfg.seed = doc.at("seed").get<std::uint64_t>();
  cfg.threads = doc.at("threads").get<int>();
  cfg.out = doc.at("out").get<std::string>();
  return cfg;
}

std::string config_hash(const json& doc) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : doc.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---- manifest and output ----

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::Skipped: return "skipped";
  }
  return "?";
}

int RunManifest::exit_code() const {
  for (const auto& [name, v] : verdicts)
    if (v == Verdict::Fail) return kExitVerdict;
  return kExitPass;
}

json RunManifest::to_json() const {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["software"] = version;
  j["command"] = command;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["threads"] = threads;
  j["stages"] = json::array();
  for (const auto& s : stages) j["stages"].push_back({{"name", s.name}, {"seconds", s.seconds}});
  j["verdicts"] = json::object();
  for (const auto& [name, v] : verdicts) j["verdicts"][name] = to_string(v);
  j["exit_code"] = exit_code();
  j["files"] = files;
  j["results"] = results;
  j["config"] = config;
  return j;
}

ReportSink::ReportSink(std::string dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error("io", "cannot create output directory " + dir_ + ": " + ec.message());
  const fs::path probe = fs::path(dir_) / ".beamlab_probe";
  {
    std::ofstream os(probe);
    if (!os || !(os << "probe")) throw Error("io", "output directory " + dir_ + " is not writable");
  }
  fs::remove(probe, ec);
}

std::string ReportSink::path(const std::string& name) {
  if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
  return (fs::path(dir_) / name).string();
}

void ReportSink::write_manifest(const RunManifest& m) const {
  std::ofstream os(fs::path(dir_) / "manifest.json");
  if (!os) throw Error("io", "cannot write manifest in " + dir_);
  os << m.to_json().dump(2) << '\n';
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : file_(std::make_unique<std::ofstream>(path)) {
  if (!*file_) throw Error("io", "cannot write " + path);
  for (const auto& h : header) *this << h;
  end_row();
}

void CsvWriter::sep() {
  if (!first_) *file_ << ',';
  first_ = false;
}
CsvWriter& CsvWriter::operator<<(double v) {
  sep();
  *file_ << fmt17(v);
  return *this;
}
CsvWriter& CsvWriter::operator<<(long long v) {
  sep();
  *file_ << v;
  return *this;
}
CsvWriter& CsvWriter::operator<<(const std::string& v) {
  sep();
  *file_ << v;
  return *this;
}
void CsvWriter::end_row() {
  *file_ << '\n';
  first_ = true;
}

// ---- drivers ----

ComparisonReport uniqueness_compare(const WaveOperator& op, const NonlinearitySpec& V1, const NonlinearitySpec& V2,
                                    const std::vector<BoundaryData>& battery, const SemilinearOptions& solver,
                                    const std::vector<double>& rhos, const ReconstructionOptions& rec) {
  ComparisonReport r;
  r.tolerance = solver.tol;
  r.discrepancy.assign(battery.size(), 0.0);
  parallel_for(static_cast<int>(battery.size()), rec.threads, [&](int k) {
    const auto a = dtn_apply(op, V1, battery[k], solver).trace;
    const auto b = dtn_apply(op, V2, battery[k], solver).trace;
    double top = 0, diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      top = std::max({top, std::fabs(a[i]), std::fabs(b[i])});
      diff = std::max(diff, std::fabs(a[i] - b[i]));
    }
    r.discrepancy[k] = top > 0 ? diff / top : 0.0;
  });
  for (double d : r.discrepancy) r.max_discrepancy = std::max(r.max_discrepancy, d);

  r.field = reconstruct_v3_field(*op.metric, op.lat, V1, V2, rhos, rec);
  double s = 0;
  int cnt = 0;
  for (std::size_t k = 0; k < r.field.estimate.size(); ++k) {
    if (!r.field.tested[k]) continue;
    const double v = r.field.estimate[k];
    s += v * v;
    ++cnt;
    if (std::fabs(v) > std::fabs(r.field_peak)) {
      r.field_peak = v;
      r.peak_at = r.field.points[k].p;
    }
  }
  r.field_rms = cnt ? std::sqrt(s / cnt) : 0.0;
  return r;
}

RunManifest run_scenario(const RunConfig& cfg) {
  ReportSink sink(cfg.out);  // I/O problems surface before any computation
  RunManifest man;
  man.command = cfg.command;
  man.config = cfg.doc;
  man.config_hash = config_hash(cfg.doc);
  man.seed = cfg.seed;
  man.threads = cfg.threads;

  Context c(cfg, sink, man);
  if (cfg.command == "trace") run_trace(c);
  else if (cfg.command == "beam-verify") run_beam_verify(c);
  else if (cfg.command == "forward") run_forward(c);
  else if (cfg.command == "dtn") run_dtn(c);
  else if (cfg.command == "linearize") run_linearize(c);
  else if (cfg.command == "reconstruct") run_reconstruct(c);
  else if (cfg.command == "compare") run_compare(c);
  else throw Error("config", "unknown subcommand " + cfg.command);

  man.files = sink.files();
  sink.write_manifest(man);
  return man;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"beamlab: Gaussian beams, semilinear waves and coefficient recovery"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out;
  int threads = 0;
  std::uint64_t seed = 0;
  bool print_config = false;
  auto* o_config = app.add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
  auto* o_out = app.add_option("--out", out, "output directory");
  auto* o_threads = app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  auto* o_seed = app.add_option("--seed", seed, "seed for random ray sweeps");
  app.add_flag("--print-config", print_config, "print the merged config and exit");
  (void)o_config;
  for (const auto& s : subcommands()) app.add_subcommand(s, "run the " + s + " pipeline");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    json file;
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      file = json::parse(is, nullptr, false);
      if (file.is_discarded()) throw ConfigError({"config file: " + config_path + " is not valid JSON"});
    }
    json flags = json::object();
    if (o_out->count()) flags["out"] = out;
    if (o_threads->count()) flags["threads"] = threads;
    if (o_seed->count()) flags["seed"] = seed;
    auto cfg = load_config(command, file, beamlab_environment(), flags);
    if (print_config) {
      std::cout << cfg.doc.dump(2) << '\n';
      return kExitPass;
    }
    auto man = run_scenario(cfg);
    for (const auto& [name, v] : man.verdicts) std::cout << name << ": " << to_string(v) << '\n';
    std::cout << "manifest: " << (fs::path(cfg.out) / "manifest.json").string() << '\n';
    return man.exit_code();
  } catch (const ConfigError& e) {
    std::cerr << "configuration error:\n";
    for (const auto& i : e.issues()) std::cerr << "  " << i << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return e.kind() == "config" ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

} // namespace beamlab
