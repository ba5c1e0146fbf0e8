// Command line front end: observability/stability checks, kernel design and
// export, closed-loop simulation, and post-hoc error envelopes.
//
// Exit codes: 0 success/stable, 2 criterion violated, 3 observability
// failure, 4 runtime divergence.

#include "mfo/mfo.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace {

constexpr const char* kVersion = "0.1.0";

struct Options {
    std::string preset;
    std::map<std::string, std::string> overrides;  // schema-checked key=value
};

const std::vector<std::string> kSchema = {
    "preset",         "T_bar",         "T_under",        "sample_spacing",
    "sampler_jitter", "sampler_seed",  "T_s",            "t_end",
    "kernel_n",       "kernel_T",      "kernel_extra",   "optimize",
    "opt_seed",       "noise_variance", "seed",          "H",
    "mode",           "x0",            "yhat0",          "rate_over_T",
    "xhat_zero_during_fill", "reset_during_fill", "divergence_threshold",
    "obs_threshold",  "quadrature",    "gain_tgrid_step", "opt_tgrid_step",
    "opt_sigma_step", "coeff_t_start", "coeff_t_end",    "coeff_step",
};

bool known_key(const std::string& k) {
    return std::find(kSchema.begin(), kSchema.end(), k) != kSchema.end();
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

void load_config_file(const std::string& path, Options& opt) {
    std::ifstream is(path);
    if (!is) throw mfo::Error("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw mfo::Error("config parse error at line " + std::to_string(lineno) +
                             ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        if (!known_key(key))
            throw mfo::Error("unknown config key '" + key + "' at line " +
                             std::to_string(lineno));
        if (key == "preset")
            opt.preset = val;
        else
            opt.overrides[key] = val;
    }
}

bool parse_bool(const std::string& v) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw mfo::Error("invalid boolean value: " + v);
}

double parse_H(const Options& opt) {
    auto it = opt.overrides.find("H");
    return it == opt.overrides.end() ? 0.0 : std::stod(it->second);
}

mfo::Scenario build_scenario(const Options& opt) {
    using namespace mfo;
    Scenario sc;
    if (opt.preset == "lti-oscillator")
        sc = systems::lti_oscillator_scenario();
    else if (opt.preset == "tv-pendulum")
        sc = systems::tv_pendulum_scenario(parse_H(opt));
    else
        throw Error("unknown preset: '" + opt.preset +
                    "' (expected lti-oscillator or tv-pendulum)");

    for (const auto& [key, v] : opt.overrides) {
        if (key == "T_bar") sc.plant.T_bar = std::stod(v);
        else if (key == "T_under") sc.plant.T_under = std::stod(v);
        else if (key == "sample_spacing") sc.sample_spacing = std::stod(v);
        else if (key == "sampler_jitter") sc.sampler_jitter = parse_bool(v);
        else if (key == "sampler_seed") sc.sampler_seed = static_cast<unsigned>(std::stoul(v));
        else if (key == "T_s") sc.T_s = std::stod(v);
        else if (key == "t_end") sc.t_end = std::stod(v);
        else if (key == "kernel_n") sc.kernel_n = std::stoi(v);
        else if (key == "kernel_T") sc.kernel_T = std::stod(v);
        else if (key == "kernel_extra") sc.kernel_extra = std::stoi(v);
        else if (key == "optimize") sc.optimize = parse_bool(v);
        else if (key == "opt_seed") sc.opt_seed = static_cast<unsigned>(std::stoul(v));
        else if (key == "noise_variance") sc.noise_variance = std::stod(v);
        else if (key == "seed") sc.seed = static_cast<unsigned>(std::stoul(v));
        else if (key == "H") { /* consumed by the preset constructor */ }
        else if (key == "mode") {
            if (v == "sampled") sc.mode = ObserverMode::Sampled;
            else if (v == "continuous") sc.mode = ObserverMode::Continuous;
            else throw Error("invalid mode: " + v);
        } else if (key == "x0") {
            std::vector<double> xs;
            std::stringstream ss(v);
            std::string c;
            while (std::getline(ss, c, ',')) xs.push_back(std::stod(trim(c)));
            sc.x0 = Eigen::Map<Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
        } else if (key == "yhat0") sc.yhat0 = std::stod(v);
        else if (key == "rate_over_T") sc.rate_over_T = parse_bool(v);
        else if (key == "xhat_zero_during_fill") sc.xhat_zero_during_fill = parse_bool(v);
        else if (key == "reset_during_fill") sc.reset_during_fill = parse_bool(v);
        else if (key == "divergence_threshold") sc.divergence_threshold = std::stod(v);
        else if (key == "obs_threshold") sc.obs_threshold = std::stod(v);
        else if (key == "quadrature") {
            if (v == "trapezoid") sc.quadrature = Quadrature::Trapezoid;
            else if (v == "simpson") sc.quadrature = Quadrature::Simpson;
            else throw Error("invalid quadrature: " + v);
        } else if (key == "gain_tgrid_step") sc.gain_tgrid_step = std::stod(v);
        else if (key == "opt_tgrid_step") sc.opt_tgrid_step = std::stod(v);
        else if (key == "opt_sigma_step") sc.opt_sigma_step = std::stod(v);
        else if (key == "coeff_t_start") sc.coeff_grid.t_start = std::stod(v);
        else if (key == "coeff_t_end") sc.coeff_grid.t_end = std::stod(v);
        else if (key == "coeff_step") sc.coeff_grid.step = std::stod(v);
    }
    return sc;
}

std::map<std::string, std::string> resolved_config(const Options& opt, const mfo::Scenario& sc) {
    std::map<std::string, std::string> m;
    auto num = [](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    m["preset"] = opt.preset;
    m["T_bar"] = num(sc.plant.T_bar);
    m["T_under"] = num(sc.plant.T_under);
    m["sample_spacing"] = num(sc.sample_spacing);
    m["T_s"] = num(sc.T_s);
    m["t_end"] = num(sc.t_end);
    m["kernel_n"] = std::to_string(sc.kernel_n);
    m["kernel_T"] = num(sc.kernel_T);
    m["kernel_extra"] = std::to_string(sc.kernel_extra);
    m["optimize"] = sc.optimize ? "true" : "false";
    m["opt_seed"] = std::to_string(sc.opt_seed);
    m["noise_variance"] = num(sc.noise_variance);
    m["seed"] = std::to_string(sc.seed);
    m["H"] = std::to_string(parse_H(opt));
    m["mode"] = sc.mode == mfo::ObserverMode::Sampled ? "sampled" : "continuous";
    m["version"] = kVersion;
    return m;
}

void print_config(const std::map<std::string, std::string>& cfg, std::ostream& os) {
    for (const auto& [k, v] : cfg) os << "  " << k << " = " << v << "\n";
}

int cmd_check(const Options& opt) {
    using namespace mfo;
    const Scenario sc = build_scenario(opt);
    Design design;
    try {
        design = prepare(sc);
    } catch (const Error& e) {
        const std::string msg = e.what();
        std::cerr << "error: " << msg << "\n";
        return msg.find("observability degeneracy") != std::string::npos ? 3 : 1;
    }
    const auto& r = design.report;
    std::cout.precision(10);
    std::cout << "configuration:\n";
    print_config(resolved_config(opt, sc), std::cout);
    std::cout << "observability: grid min |det O| = " << design.obs_report.delta_min
              << " (threshold " << design.obs_report.threshold << ")\n"
              << "K1 = " << r.K1 << "\nK2 = " << r.K2 << "\nK3 = " << r.K3 << "\n"
              << "eta_bar_a = " << r.eta_bar_a << "\neta_bar_phi = " << r.eta_bar_phi
              << "\neta_bar_d = " << r.eta_bar_d << "\n"
              << "J = " << design.J_opt << " (baseline " << design.J_baseline << ")\n"
              << "lambda = " << r.lambda << "\nT_bar*lambda = " << r.product
              << "\nT_max_feasible = " << r.T_max_feasible << "\nmargin = " << r.margin << "\n"
              << "verdict: " << (r.stable ? "stable" : "criterion violated") << "\n";
    return r.stable ? 0 : 2;
}

int cmd_kernel(const Options& opt, const std::string& out_dir) {
    using namespace mfo;
    const Scenario sc = build_scenario(opt);
    const Design design = prepare(sc);
    std::filesystem::create_directories(out_dir);

    {
        std::ofstream os(out_dir + "/kernel.csv");
        os.precision(17);
        design.kernel.write_csv(os, sc.T_s);
    }
    {
        std::ofstream os(out_dir + "/gains.csv");
        os.precision(17);
        os << "t,eta_a,eta_phi,eta_d,l2_a,l2_phi,l2_d\n";
        const auto& g = design.gains;
        for (std::size_t i = 0; i < g.t_grid.size(); ++i)
            os << g.t_grid[i] << "," << g.eta_a[i] << "," << g.eta_phi[i] << "," << g.eta_d[i]
               << "," << g.l2_a[i] << "," << g.l2_phi[i] << "," << g.l2_d[i] << "\n";
    }
    std::cout.precision(10);
    std::cout << "configuration:\n";
    print_config(resolved_config(opt, sc), std::cout);
    const double bres = design.kernel.boundary_residual();
    std::cout << "boundary check: " << (bres < 1e-9 ? "PASS" : "FAIL")
              << " (residual " << bres << ")\n"
              << "J_baseline = " << design.J_baseline << "\nJ = " << design.J_opt << "\n";
    if (sc.optimize)
        std::cout << "optimizer: " << (design.opt_improved ? "improved" : "no improvement")
                  << "\n";
    std::cout << "wrote " << out_dir << "/kernel.csv and " << out_dir << "/gains.csv\n";
    return bres < 1e-9 ? 0 : 2;
}

int run_one(const mfo::Scenario& sc, const mfo::Design& design,
            const std::map<std::string, std::string>& cfg, const std::string& trace_path) {
    using namespace mfo;
    Trace tr = run(sc, design);
    for (const auto& [k, v] : cfg) tr.meta[k] = v;
    tr.meta["seed"] = std::to_string(sc.seed);
    {
        std::ofstream os(trace_path);
        write_trace_csv(tr, os);
    }
    {
        std::ofstream os(trace_path + ".meta");
        write_metadata(tr, os);
        const Metrics m = metrics(tr, sc.kernel_T);
        os << "snr_db = " << m.snr_db << "\n"
           << "steady_ex = " << m.steady_ex << "\n"
           << "ey_violations = " << m.ey_violations << "\n"
           << "ex_violations = " << m.ex_violations << "\n"
           << "nu_sup = " << m.nu_sup << "\nd_sup = " << m.d_sup << "\n"
           << "nu_bar_l2 = " << m.nu_bar_l2 << "\nd_bar_l2 = " << m.d_bar_l2 << "\n";
    }
    return tr.status;
}

int cmd_simulate(const Options& opt, const std::string& out_dir, int sweep_seeds) {
    using namespace mfo;
    Scenario sc = build_scenario(opt);
    const Design design = prepare(sc);
    std::filesystem::create_directories(out_dir);
    const auto cfg = resolved_config(opt, sc);

    if (sweep_seeds <= 0) {
        const std::string path = out_dir + "/trace.csv";
        const int status = run_one(sc, design, cfg, path);
        std::cout << "wrote " << path << " (status " << status << ")\n";
        return status;
    }

    // fan the seed sweep out to a worker pool
    std::vector<std::future<int>> futs;
    for (int s = 0; s < sweep_seeds; ++s) {
        Scenario ssc = sc;
        ssc.seed = static_cast<unsigned>(s);
        auto scfg = cfg;
        scfg["seed"] = std::to_string(s);
        const std::string path = out_dir + "/trace_seed" + std::to_string(s) + ".csv";
        futs.push_back(std::async(std::launch::async,
                                  [ssc, &design, scfg, path] {
                                      return run_one(ssc, design, scfg, path);
                                  }));
    }
    int status = 0;
    for (auto& f : futs) status = std::max(status, f.get());
    std::cout << "wrote " << sweep_seeds << " traces to " << out_dir << " (max status "
              << status << ")\n";
    return status;
}

int cmd_bounds(const Options& opt, const std::string& trace_path, const std::string& out_path) {
    using namespace mfo;
    const Scenario sc = build_scenario(opt);
    const Design design = prepare(sc);
    std::ifstream is(trace_path);
    if (!is) throw Error("cannot open trace file: " + trace_path);
    const Trace tr = read_trace_csv(is);
    if (!design.report.stable) {
        std::cerr << "criterion violated; no envelope (T_bar*lambda = "
                  << design.report.product << ")\n";
        return 2;
    }
    const BoundEnvelope env = envelopes_from_trace(tr, design, sc);
    std::ofstream os(out_path);
    os.precision(17);
    os << "t,W,ey_env,ex_env\n";
    for (std::size_t i = 0; i < env.t.size(); ++i)
        os << env.t[i] << "," << env.W[i] << "," << env.ey_env[i] << "," << env.ex_env[i]
           << "\n";
    std::cout.precision(10);
    std::cout << "configuration:\n";
    print_config(resolved_config(opt, sc), std::cout);
    std::cout << "T_star = " << env.T_star << "\nalpha_x = " << env.alpha_x
              << "\nsup_ey_init = " << env.sup_ey_init << "\nwrote " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Modulating-function algebraic observer toolkit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    Options opt;
    std::string config_file, out_dir = ".", trace_path, out_path = "envelope.csv";
    std::vector<std::string> sets;
    int sweep_seeds = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--preset", opt.preset, "built-in system: lti-oscillator | tv-pendulum");
        cmd->add_option("--config", config_file, "key = value configuration file");
        cmd->add_option("--set", sets, "override a config key (key=value, repeatable)");
    };

    auto* check = app.add_subcommand("check", "observability and stability criterion report");
    add_common(check);
    auto* kernel = app.add_subcommand("kernel", "design the kernel, export tables and gains");
    add_common(kernel);
    kernel->add_option("--out-dir", out_dir, "output directory");
    auto* simulate = app.add_subcommand("simulate", "run the closed loop, write trace + metadata");
    add_common(simulate);
    simulate->add_option("--out-dir", out_dir, "output directory");
    simulate->add_option("--sweep", sweep_seeds, "run this many noise seeds in parallel");
    auto* bounds = app.add_subcommand("bounds", "error envelopes from a previously written trace");
    add_common(bounds);
    bounds->add_option("--trace", trace_path, "trace CSV produced by simulate")->required();
    bounds->add_option("--out", out_path, "envelope CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!config_file.empty()) load_config_file(config_file, opt);
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw mfo::Error("--set expects key=value, got " + s);
            const std::string key = trim(s.substr(0, eq));
            const std::string val = trim(s.substr(eq + 1));
            if (!known_key(key)) throw mfo::Error("unknown config key '" + key + "'");
            if (key == "preset") opt.preset = val;
            else opt.overrides[key] = val;
        }
        if (opt.preset.empty()) throw mfo::Error("no preset selected (use --preset or config)");

        if (check->parsed()) return cmd_check(opt);
        if (kernel->parsed()) return cmd_kernel(opt, out_dir);
        if (simulate->parsed()) return cmd_simulate(opt, out_dir, sweep_seeds);
        if (bounds->parsed()) return cmd_bounds(opt, trace_path, out_path);
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        std::cerr << "error: " << msg << "\n";
        if (msg.find("observability degeneracy") != std::string::npos) return 3;
        if (msg.find("divergence") != std::string::npos) return 4;
        if (msg.find("criterion violated") != std::string::npos) return 2;
        return 1;
    }
    return 0;
}
