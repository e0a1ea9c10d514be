#pragma once

// Command-line front end. `run` is the whole program minus process setup so
// tests can drive it in-process.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>

#include "gapcert/coarsegrain.hpp"
#include "gapcert/criteria.hpp"
#include "gapcert/error.hpp"
#include "gapcert/lattice.hpp"
#include "gapcert/models.hpp"
#include "gapcert/operator.hpp"
#include "gapcert/spectral.hpp"

namespace gapcert::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kNumericalFailure = 2, kConfigError = 3 };

/// 12 significant digits.
inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

inline std::string fmt_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i]);
  return s;
}

struct ModelOptions {
  std::string model;
  int d = 2;
  int rank = 1;
  std::uint64_t seed = 1;
  int R = 1;

  void attach(CLI::App* app, bool required, const std::string& fallback = "") {
    model = fallback;
    auto* opt = app->add_option("--model", model,
                                "heisenberg-ferro, aklt, random, heisenberg-ferro-fr or a model file path");
    if (required) opt->required();
    app->add_option("--d", d, "local dimension for --model random")->capture_default_str();
    app->add_option("--rank", rank, "projection rank for --model random")->capture_default_str();
    app->add_option("--seed", seed, "seed for --model random")->capture_default_str();
  }

  std::pair<LoadedModel, ModelDescriptor> resolve() const {
    return resolve_model(ModelRequest{model, d, rank, seed, R});
  }

  NNInteraction nearest_neighbour() const {
    auto [m, desc] = resolve();
    if (auto* nn = std::get_if<NNInteraction>(&m)) return *nn;
    throw ConfigError("model '" + model + "' is a finite-range spec; this command needs a nearest-neighbour model");
  }
};

struct SolverOptions {
  int k = 4;
  std::uint64_t max_matvecs = 200000;
  double tol = kSolverTol;
  double kernel_tol = kKernelTol;

  void attach(CLI::App* app) {
    app->add_option("--k", k, "eigenvalues to report")->capture_default_str();
    app->add_option("--max-matvecs", max_matvecs, "iterative solver budget")->capture_default_str();
    app->add_option("--tol", tol, "eigenpair residual tolerance")->capture_default_str();
    app->add_option("--kernel-tol", kernel_tol, "eigenvalues at or below this count as kernel")
        ->capture_default_str();
  }

  EigenSolveConfig config() const {
    EigenSolveConfig c;
    c.k = k;
    c.max_matvecs = max_matvecs;
    c.tol = tol;
    return c;
  }
};

inline void pass_fail(std::ostream& out, bool ok) { out << "result: " << (ok ? "PASS" : "FAIL") << '\n'; }

// ---------------------------------------------------------------------------
// gap

struct GapCommand {
  ModelOptions model;
  SolverOptions solver;
  int D = 1;
  int n = 0;
  std::string boundary = "open";

  void attach(CLI::App* app) {
    model.attach(app, true);
    solver.attach(app);
    app->add_option("--D", D, "lattice dimension")->capture_default_str();
    app->add_option("--n", n, "box [0, n]^D (open) or torus of side n + 1 (periodic)")->required();
    app->add_option("--boundary", boundary, "open or periodic")
        ->check(CLI::IsMember({"open", "periodic"}))
        ->capture_default_str();
  }

  int run(std::ostream& out) const {
    if (n < 1) throw ConfigError("--n must be >= 1");
    const auto inter = model.nearest_neighbour();
    const auto sub = boundary == "open" ? open_box(D, n) : periodic_box(D, n + 1);
    const auto H = subsystem_hamiltonian(inter, sub);
    const auto rep = spectral_gap(H, solver.kernel_tol, solver.config());
    out << "model: " << model.model << '\n'
        << "geometry: D=" << D << " n=" << n << " boundary=" << boundary << " sites=" << sub.sites.size()
        << '\n'
        << "dimension: " << rep.dimension << '\n'
        << "method: " << to_string(rep.method) << '\n'
        << "eigenvalues: " << fmt_list(rep.eigenvalues) << '\n'
        << "residuals: " << fmt_list(rep.residuals) << '\n'
        << "kernel_dim: " << rep.kernel_dim << '\n'
        << "frustration_free: " << (rep.kernel_dim > 0 ? "yes" : "no") << '\n'
        << "gap: " << fmt(rep.gap) << '\n';
    return kOk;
  }
};

// ---------------------------------------------------------------------------
// certify

struct CertifyCommand {
  ModelOptions model;
  SolverOptions solver;
  std::string theorem;
  std::optional<int> D;
  int n = 0;
  bool allow_low_dim = false;

  void attach(CLI::App* app) {
    model.attach(app, true);
    solver.attach(app);
    app->add_option("--theorem", theorem, "gm, lm or main")
        ->required()
        ->check(CLI::IsMember({"gm", "lm", "main"}));
    app->add_option("--D", D, "lattice dimension (default 1 for gm/lm, 3 for main)");
    app->add_option("--n", n, "subsystem size")->required();
    app->add_flag("--allow-low-dim", allow_low_dim, "run main below D = 3 (non-rigorous)");
  }

  int run(std::ostream& out) const {
    const auto t = parse_theorem(theorem);
    const int dim = D.value_or(t == Theorem::Main ? 3 : 1);
    const auto inter = model.nearest_neighbour();
    CertifyOptions opt;
    opt.allow_low_dimension = allow_low_dim;
    opt.kernel_tol = solver.kernel_tol;
    opt.solver = solver.config();
    const auto r = certify(inter, t, dim, n, opt);
    out << "theorem: " << to_string(r.theorem) << '\n'
        << "model: " << model.model << '\n'
        << "D: " << r.D << '\n'
        << "n: " << r.n << '\n';
    for (const auto& [size, gap] : r.size_gaps) out << "gap[" << size << "]: " << fmt(gap) << '\n';
    out << "local_gap: " << fmt(r.local_gap) << '\n'
        << "local_size: " << r.local_size << '\n'
        << "kernel_dim: " << r.kernel_dim << '\n'
        << "threshold: " << fmt(r.threshold) << '\n'
        << "prefactor: " << fmt(r.prefactor) << '\n'
        << "margin: " << fmt(r.margin) << '\n'
        << "implied_lower_bound: " << fmt(r.implied_lower_bound) << '\n'
        << "certified: " << (r.certified ? "true" : "false") << '\n'
        << "rigorous: " << (r.rigorous ? "true" : "false") << '\n'
        << "method: " << to_string(r.method) << '\n'
        << "dimension: " << r.dimension << '\n';
    return kOk;
  }
};

// ---------------------------------------------------------------------------
// verify

struct CountingCommand {
  int D = 1;
  int n = 2;
  std::optional<int> N;
  std::uint64_t limit = kDefaultEnumerationLimit;

  void attach(CLI::App* app) {
    app->add_option("--D", D, "lattice dimension")->required();
    app->add_option("--n", n, "box side")->required();
    app->add_option("--N", N, "half side of Lambda_N (default 2n + 1)");
    app->add_option("--limit", limit, "enumeration limit")->capture_default_str();
  }

  int run(std::ostream& out) const {
    const int half = N.value_or(2 * n + 1);
    const auto g = LatticeGeometry::lambda(D, half);
    const auto rep = verify_counting_lemma(n, g, limit);
    out << "counting: D=" << D << " n=" << n << " N=" << half << (rep.in_regime ? "" : " (N < 2n+1, out of regime)")
        << '\n';
    auto row = [&](const char* name, const ClassTally& t, bool skipped = false) {
      out << "  " << name << ": ";
      if (skipped) {
        out << "none in D=1\n";
        return;
      }
      out << (t.upper_bound ? "<= " : "== ") << t.expected.str() << "  checked=" << t.checked
          << " min=" << t.min_count << " max=" << t.max_count << '\n';
    };
    row("edge", rep.edges);
    row("aligned", rep.aligned);
    row("bent", rep.bent, rep.bent_skipped);
    row("disjoint", rep.disjoint);
    out << "discrepancies: " << rep.discrepancies.size() << '\n';
    for (std::size_t i = 0; i < std::min<std::size_t>(rep.discrepancies.size(), 10); ++i) {
      const auto& d = rep.discrepancies[i];
      out << "  " << to_string(d.cls) << " count=" << d.count << " expected=" << d.expected.str() << '\n';
    }
    pass_fail(out, rep.ok());
    return rep.ok() ? kOk : kCheckFailed;
  }
};

struct SquareIdentityCommand {
  ModelOptions model;
  int D = 1;
  int N = 4;
  int trials = 20;
  double tol = kIdentityTol;

  void attach(CLI::App* app) {
    model.attach(app, false, "random");
    model.rank = 2;
    app->add_option("--D", D, "lattice dimension")->capture_default_str();
    app->add_option("--N", N, "torus Lambda_N of side 2N")->capture_default_str();
    app->add_option("--trials", trials, "random unit vectors")->capture_default_str();
    app->add_option("--tol", tol, "residual tolerance")->capture_default_str();
  }

  int run(std::ostream& out) const {
    const auto inter = model.nearest_neighbour();
    const auto g = LatticeGeometry::lambda(D, N);
    const auto s = sites(g);
    const auto rep = verify_square_identity(inter, periodic_edges(g), s, g, trials, tol, model.seed);
    out << "square-identity: D=" << D << " N=" << N << " sites=" << s.size() << " model=" << model.model << '\n'
        << "trials: " << rep.trials << '\n'
        << "max_residual: " << fmt(rep.max_residual) << '\n'
        << "tolerance: " << fmt(rep.tol) << '\n';
    pass_fail(out, rep.passed);
    return rep.passed ? kOk : kCheckFailed;
  }
};

/// Draws `samples` pairs of random projections and returns the smallest
/// Cauchy-Schwarz witness.
inline double cauchy_schwarz_sweep(int d, int samples, std::uint64_t seed, int* worst = nullptr) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> rank(1, d * d - 1);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < samples; ++i) {
    const int r1 = rank(rng), r2 = rank(rng);
    const std::uint64_t s1 = rng(), s2 = rng();
    const double w = cauchy_schwarz_witness(random_projection(d, r1, s1), random_projection(d, r2, s2));
    if (w < best) {
      best = w;
      if (worst) *worst = i;
    }
  }
  return best;
}

struct CauchySchwarzCommand {
  int d = 2;
  int samples = 100;
  std::uint64_t seed = 7;
  double tol = kWitnessTol;

  void attach(CLI::App* app) {
    app->add_option("--d", d, "local dimension")->capture_default_str();
    app->add_option("--samples", samples, "random projection pairs")->capture_default_str();
    app->add_option("--seed", seed, "master seed")->capture_default_str();
    app->add_option("--tol", tol, "witness tolerance")->capture_default_str();
  }

  int run(std::ostream& out) const {
    if (samples < 1) throw ConfigError("--samples must be positive");
    int worst = -1;
    const double w = cauchy_schwarz_sweep(d, samples, seed, &worst);
    const bool ok = w >= -tol;
    out << "cauchy-schwarz: d=" << d << " samples=" << samples << " seed=" << seed << '\n'
        << "min_witness: " << fmt(w) << " (sample " << worst << ")\n";
    pass_fail(out, ok);
    return ok ? kOk : kCheckFailed;
  }
};

struct PerBoxCommand {
  ModelOptions model;
  SolverOptions solver;
  int D = 2;
  int n = 2;
  double witness_tol = 1e-9;

  void attach(CLI::App* app) {
    model.attach(app, false, "heisenberg-ferro");
    solver.attach(app);
    app->add_option("--D", D, "lattice dimension")->capture_default_str();
    app->add_option("--n", n, "box [0, n]^D")->capture_default_str();
    app->add_option("--witness-tol", witness_tol, "accepted negative witness")->capture_default_str();
  }

  int run(std::ostream& out) const {
    const auto r = per_box_bound(model.nearest_neighbour(), D, n, solver.config(), solver.kernel_tol);
    const bool ok = r.witness >= -witness_tol;
    out << "per-box: D=" << D << " n=" << n << " model=" << model.model << '\n'
        << "box_gap: " << fmt(r.gamma) << '\n'
        << "min_witness: " << fmt(r.witness) << '\n';
    pass_fail(out, ok);
    return ok ? kOk : kCheckFailed;
  }
};

struct CoarseGrainCommand {
  ModelOptions model;
  int cubes = 3;
  std::uint64_t kernel_limit = kDefaultKernelLimit;

  void attach(CLI::App* app) {
    model.attach(app, false, "heisenberg-ferro-fr");
    app->add_option("--R", model.R, "cube side for built-in finite-range models")->capture_default_str();
    app->add_option("--cubes", cubes, "cubes per axis of the conservation torus")->capture_default_str();
    app->add_option("--kernel-limit", kernel_limit, "largest d^k materialized per kernel")->capture_default_str();
  }

  int run(std::ostream& out) const {
    auto [m, desc] = model.resolve();
    const auto* spec = std::get_if<FiniteRangeSpec>(&m);
    if (!spec) throw ConfigError("model '" + model.model + "' is not a finite-range spec");
    const auto cg = coarse_grain(*spec, kernel_limit);
    bool ok = true;
    out << "coarse-grain: d=" << spec->d << " R=" << spec->R << " shapes=" << spec->shapes.size()
        << " range_valid=" << (validate_range(*spec) ? "yes" : "no") << '\n';
    for (const auto& ci : cg.interactions)
      if (!ci.terms.empty())
        out << "  block " << ci.type.name() << ": terms=" << ci.terms.size() << " components=" << ci.components.size()
            << (ci.materialized() ? "" : " (unmaterialized)") << '\n';
    out << "class_terms: on-site=" << cg.count(CoverClass::OnSite) << " face=" << cg.count(CoverClass::Face)
        << " edge=" << cg.count(CoverClass::EdgeAdj) << " corner=" << cg.count(CoverClass::CornerAdj) << '\n';

    if (spec->R == 1) {
      const auto id = check_r1_identity(*spec, cg);
      out << "identity: " << (id.identical ? "exact" : "broken: " + id.detail) << '\n';
      ok = ok && id.identical;
    }
    const auto cons = check_term_conservation(*spec, cg, cubes);
    out << "conservation: original=" << cons.original_terms << " assigned=" << cons.assigned_terms
        << " mismatched_blocks=" << cons.mismatched_blocks << '\n';
    ok = ok && cons.ok();

    const auto proj = check_class_projections(cg);
    out << "class_projections: checked=" << proj.checked << " max_defect=" << fmt(proj.max_defect)
        << " unmaterialized=" << proj.unmaterialized << '\n';
    for (const auto& b : proj.unmaterialized_blocks) out << "  unmaterialized " << b << '\n';
    ok = ok && proj.passed();

    const auto adj = metacube_adjacency();
    out << "adjacency: face=" << adj.face << " edge=" << adj.edge << " corner=" << adj.corner << '\n';
    ok = ok && adj.face == 6 && adj.edge == 12 && adj.corner == 8;

    // Largest cube box that fits the dense limit: 2x2x2, else 2x1x1.
    std::string skipped;
    bool checked = false;
    for (const Site3 extent : {Site3{2, 2, 2}, Site3{2, 1, 1}}) {
      try {
        const auto gs = verify_ground_space_preservation(*spec, cg, extent);
        out << "ground_space: region=" << extent[0] << 'x' << extent[1] << 'x' << extent[2]
            << " cubes kernel_dim=" << gs.kernel_dim_original << "/" << gs.kernel_dim_coarse
            << " residual=" << fmt(gs.residual) << '\n';
        ok = ok && gs.passed;
        checked = true;
        break;
      } catch (const LimitError& e) {
        skipped = e.what();
      }
    }
    if (!checked) out << "ground_space: skipped, " << skipped << '\n';
    pass_fail(out, ok);
    return ok ? kOk : kCheckFailed;
  }
};

// ---------------------------------------------------------------------------
// sweep

struct SweepCommand {
  ModelOptions model;
  SolverOptions solver;
  int D = 1;
  int n_min = 0;
  int n_max = -1;
  std::string boundary = "open";
  std::string theorem = "main";
  std::string output = "-";
  bool timing = false;

  void attach(CLI::App* app) {
    model.attach(app, true);
    solver.attach(app);
    app->add_option("--D", D, "lattice dimension")->capture_default_str();
    app->add_option("--n-min", n_min, "first size")->required();
    app->add_option("--n-max", n_max, "last size (inclusive)")->required();
    app->add_option("--boundary", boundary, "open or periodic")
        ->check(CLI::IsMember({"open", "periodic"}))
        ->capture_default_str();
    app->add_option("--theorem", theorem, "criterion for margin_selected: gm, lm or main")
        ->check(CLI::IsMember({"gm", "lm", "main"}))
        ->capture_default_str();
    app->add_option("--output", output, "CSV path, '-' for standard output")->capture_default_str();
    app->add_flag("--timing", timing, "fill runtime_ms (otherwise NA, keeping output reproducible)");
  }

  static std::string optional_fmt(const std::function<double()>& f) {
    try {
      return fmt(f());
    } catch (const ConfigError&) {
      return "NA";
    }
  }

  int run(std::ostream& out) const {
    if (n_min > n_max) throw ConfigError("empty n-range: n-min " + std::to_string(n_min) + " > n-max " +
                                         std::to_string(n_max));
    const auto t = parse_theorem(theorem);
    if (t != Theorem::Main && D != 1) throw ConfigError("gm and lm sweeps are one-dimensional (D = 1)");
    if (n_min < 2) throw ConfigError("sweep sizes must be >= 2");
    const auto inter = model.nearest_neighbour();
    const auto cfg = solver.config();

    std::ofstream file;
    if (output != "-") {
      file.open(output);
      if (!file) throw ConfigError("cannot write '" + output + "'");
    }
    std::ostream& csv = output == "-" ? out : file;
    csv << "model,D,n,boundary,gap,kernel_dim,threshold_main,threshold_gm,threshold_lm,margin_selected,runtime_ms\n";

    // Subsystem convention per criterion: box B_n for main, chains of n sites
    // for gm and lm.
    auto subsystem = [&](int n) {
      if (t == Theorem::Main) return boundary == "open" ? open_box(D, n) : periodic_box(D, n + 1);
      return boundary == "open" ? open_chain(n) : periodic_chain(n);
    };
    std::map<int, double> gaps;
    auto gap_of = [&](int n) {
      if (auto it = gaps.find(n); it != gaps.end()) return it->second;
      const double g = subsystem_gap(inter, subsystem(n), solver.kernel_tol, cfg).gap;
      gaps.emplace(n, g);
      return g;
    };

    std::vector<int> ns;
    std::vector<double> fit_gaps;
    std::optional<int> first_certified;
    int status = kOk;
    for (int n = n_min; n <= n_max; ++n) {
      const auto start = std::chrono::steady_clock::now();
      try {
        const auto sub = subsystem(n);
        const auto rep = subsystem_gap(inter, sub, solver.kernel_tol, cfg);
        gaps[n] = rep.gap;
        std::optional<double> margin;
        if (t == Theorem::Main && n >= 3) margin = rep.gap - threshold_main(n);
        if (t == Theorem::GM && n > 2) margin = rep.gap - threshold_gm(n);
        if (t == Theorem::LM && n > 3) {
          double lo = rep.gap;
          for (int l = lm_min_size(n); l < n; ++l) lo = std::min(lo, gap_of(l));
          margin = lo - threshold_lm(n);
        }
        if (margin && *margin > 0.0 && !first_certified) first_certified = n;
        const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        csv << model.model << ',' << D << ',' << n << ',' << boundary << ',' << fmt(rep.gap) << ',' << rep.kernel_dim
            << ',' << optional_fmt([&] { return threshold_main(n); }) << ','
            << optional_fmt([&] { return threshold_gm(n); }) << ','
            << optional_fmt([&] { return threshold_lm(n); }) << ',' << (margin ? fmt(*margin) : "NA") << ','
            << (timing ? fmt(ms) : std::string("NA")) << '\n';
        csv.flush();
        ns.push_back(n);
        fit_gaps.push_back(rep.gap);
      } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        csv << model.model << ',' << D << ',' << n << ',' << boundary << ",ERROR: " << msg << ",NA,NA,NA,NA,NA,NA\n";
        csv.flush();
        status = dynamic_cast<const SolverError*>(&e) ? kNumericalFailure : kConfigError;
        break;
      }
    }

    if (ns.size() >= 4) {
      const auto fit = fit_power_law(ns, fit_gaps);
      csv << "# fit: gap ~ C n^-alpha over n=" << ns.front() << ".." << ns.back() << '\n'
          << "# alpha=" << fmt(fit.alpha) << " C=" << fmt(fit.prefactor) << " r_squared=" << fmt(fit.r_squared)
          << '\n';
    } else {
      csv << "# fit: skipped (" << ns.size() << " points, need 4)\n";
    }
    csv << "# theorem=" << theorem << " first_positive_margin="
        << (first_certified ? std::to_string(*first_certified) : std::string("none")) << '\n';
    csv.flush();
    if (output != "-") out << "wrote " << ns.size() << " rows to " << output << '\n';
    return status;
  }
};

// ---------------------------------------------------------------------------

/// Parses `args` (without the program name), runs one command and returns
/// the exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spectral gap certification for frustration-free Hamiltonians", "gapcert"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "expand all help");

  GapCommand gap;
  CertifyCommand cert;
  CountingCommand counting;
  SquareIdentityCommand square;
  CauchySchwarzCommand cs;
  PerBoxCommand perbox;
  CoarseGrainCommand cgrain;
  SweepCommand sweep;

  std::function<int()> action;
  auto bind = [&](CLI::App* sub, auto& cmd) {
    cmd.attach(sub);
    sub->callback([&action, &cmd, &out] { action = [&cmd, &out] { return cmd.run(out); }; });
  };
  bind(app.add_subcommand("gap", "spectrum and gap of a finite box"), gap);
  bind(app.add_subcommand("certify", "evaluate a finite-size criterion"), cert);
  auto* verify = app.add_subcommand("verify", "check a proof ingredient numerically");
  verify->require_subcommand(1);
  bind(verify->add_subcommand("counting", "box counts of edges and edge pairs"), counting);
  bind(verify->add_subcommand("square-identity", "H^2 = H + Q + R"), square);
  bind(verify->add_subcommand("cauchy-schwarz", "-{h, h'} <= h + h' for random projections"), cs);
  bind(verify->add_subcommand("per-box", "H_B^2 >= gap H_B on an open box"), perbox);
  bind(verify->add_subcommand("coarse-grain-identity", "coarse-graining invariants"), cgrain);
  bind(app.add_subcommand("sweep", "gap versus n as CSV"), sweep);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kConfigError;
  }

  try {
    return action ? action() : kConfigError;
  } catch (const SolverError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const ParseError& e) {
    err << "model file error: " << e.what() << '\n';
    return kConfigError;
  } catch (const LimitError& e) {
    err << "limit exceeded: " << e.what() << '\n';
    return kConfigError;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  }
}

}  // namespace gapcert::cli
