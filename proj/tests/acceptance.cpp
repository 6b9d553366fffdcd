// Acceptance suite: one PASS/FAIL line per criterion. Criteria run the bsmp
// command line tool and read its summary.json; the solver-correctness
// criterion needs custom drivers and calls the library directly.
#include "support.hpp"

#include "bsmp/bsde.hpp"
#include "bsmp/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using bsmp::Json;

namespace {

fs::path g_work;
const std::vector<std::string> kModels{"lq", "zero_driver", "heavy_tail", "nonlinear"};

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string num(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

struct CliRun {
    int code = -1;
    fs::path dir;
    Json summary;
};

// Runs `bsmp <cmd>` on a config document; results are cached by output name.
CliRun bsmp(const std::string& cmd, const Json& config, const std::string& name, int threads = 4)
{
    static std::map<std::string, CliRun> cache;
    if (auto it = cache.find(name); it != cache.end())
        return it->second;
    CliRun r;
    r.dir = g_work / name;
    fs::remove_all(r.dir);
    fs::create_directories(r.dir);
    const auto cfg = g_work / (name + ".json");
    std::ofstream(cfg) << config.dump(2);
    const std::string line = std::string(BSMP_EXE) + " " + cmd + " --config " + cfg.string() + " --out " +
                             r.dir.string() + " --threads " + std::to_string(threads) + " > " +
                             (g_work / (name + ".stdout")).string() + " 2>&1";
    const int status = std::system(line.c_str());
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (fs::exists(r.dir / "summary.json"))
        r.summary = Json::parse(slurp(r.dir / "summary.json"));
    cache[name] = r;
    return r;
}

Json model_config(const std::string& model, long long paths = 10000)
{
    return {{"model", model}, {"horizon", 1.0}, {"steps", 50}, {"paths", paths}, {"seed", 7}};
}

CliRun verify(const std::string& model)
{
    return model == "lq" ? bsmp("verify", model_config(model), "verify_lq_a", 1)
                         : bsmp("verify", model_config(model), "verify_" + model);
}

const Json* find_verdict(const Json& summary, const std::string& name)
{
    if (!summary.contains("verdicts"))
        return nullptr;
    for (const auto& v : summary["verdicts"])
        if (v["name"] == name)
            return &v;
    return nullptr;
}

bool verdict_pass(const CliRun& r, const std::string& name)
{
    const Json* v = find_verdict(r.summary, name);
    return v && (*v)["pass"].get<bool>();
}

double verdict_value(const CliRun& r, const std::string& name)
{
    const Json* v = find_verdict(r.summary, name);
    return v && (*v)["value"].is_number() ? (*v)["value"].get<double>() : std::nan("");
}

struct Outcome {
    bool pass = true;
    std::string detail;
    bool known_shortfall = false;  // failing part is the documented unattainable one

    void require(bool ok, const std::string& what)
    {
        pass = pass && ok;
        if (!detail.empty())
            detail += "; ";
        detail += what + (ok ? "" : " [fail]");
    }
};

// ---------------------------------------------------------------- criteria

Outcome lq_optimizer()
{
    Json cfg = model_config("lq");
    cfg["model"] = {{"key", "lq"}, {"params", {{"kappa", 0.5}, {"u_lo", -2.0}, {"u_hi", 2.0}}}};
    cfg["optimizer"] = {{"step_size", 0.5}, {"max_iters", 50}};
    const auto r = bsmp("optimize", cfg, "optimize_lq");
    Outcome o;
    o.require(r.code == 0, "exit " + std::to_string(r.code));
    if (r.summary.is_null())
        return o.require(false, "no summary"), o;
    const double dist = r.summary.value("control_error", std::nan(""));
    const double J = r.summary["J"].get<double>();
    const int iters = r.summary["iterations"].get<int>();
    o.require(dist <= 0.02, "|u - kappa| = " + num(dist));
    o.require(std::abs(J + 0.125) <= 0.02, "J = " + num(J));
    o.require(iters <= 50, std::to_string(iters) + " iterations");
    return o;
}

Outcome stationarity()
{
    const auto r = verify("lq");
    Outcome o;
    if (!r.summary.contains("stationarity"))
        return o.require(false, "no stationarity report"), o;
    const auto& s = r.summary["stationarity"];
    o.require(s["residual"].get<double>() <= 1e-3, "residual " + num(s["residual"].get<double>()));
    int ok = 0;
    for (const auto& p : s["probes"])
        ok += p["value"].get<double>() >= -3.0 * p["stderr"].get<double>() - 1e-12;
    o.require(s["probes"].size() == 5 && ok == 5, std::to_string(ok) + "/5 probes >= -3 SE");
    return o;
}

Outcome cost_duality()
{
    Outcome o;
    for (const auto& m : kModels) {
        const auto r = bsmp("cost", model_config(m), "cost_" + m);
        int controls = 0, ok = 0;
        if (r.summary.contains("direct")) {
            ++controls;
            ok += verdict_pass(r, "cost_duality");
            for (const auto& row : r.summary["further_controls"]) {
                ++controls;
                ok += row["pass"].get<bool>();
            }
        }
        o.require(controls == 3 && ok == 3, m + " " + std::to_string(ok) + "/3");
    }
    return o;
}

Outcome lemma4_rate()
{
    Outcome o;
    for (const std::string m : {"lq", "nonlinear"}) {
        const auto r = verify(m);
        const double slope = r.summary.contains("lemma4") ? r.summary["lemma4"]["sup_y"]["slope"].get<double>()
                                                           : std::nan("");
        o.require(slope >= 0.9, m + " slope " + num(slope));
    }
    return o;
}

Outcome lemma5_limit()
{
    Outcome o;
    const auto nl = verify("nonlinear");
    const auto lq = verify("lq");
    if (!nl.summary.contains("lemma5") || !lq.summary.contains("lemma5"))
        return o.require(false, "missing lemma5 tables"), o;
    int monotone = 0;
    double lq_max = 0.0;
    for (const std::string s : {"phi_0", "sup_phi", "int_psi"}) {
        monotone += nl.summary["lemma5"][s]["monotone"].get<bool>();
        for (const auto& v : lq.summary["lemma5"][s]["values"])
            lq_max = std::max(lq_max, v.get<double>());
    }
    o.require(monotone == 3, "nonlinear " + std::to_string(monotone) + "/3 series nonincreasing");
    o.require(lq_max <= 1e-16, "lq max " + num(lq_max));
    return o;
}

Outcome duality()
{
    Outcome o;
    for (const auto& m : kModels) {
        const auto r = verify(m);
        const bool ok = verdict_pass(r, "duality_martingale") && verdict_pass(r, "duality_gap");
        o.require(ok, m + " |E S_T| " + num(verdict_value(r, "duality_martingale")) + ", gap " +
                          num(verdict_value(r, "duality_gap")));
    }
    return o;
}

Outcome l1_regime()
{
    Outcome o;
    const auto a = bsmp("solve", model_config("heavy_tail", 10000), "heavy_tail_1e4");
    const auto b = bsmp("solve", model_config("heavy_tail", 20000), "heavy_tail_2e4");
    if (a.summary.is_null() || b.summary.is_null())
        return o.require(false, "solve failed"), o;
    bool expected_part_ok = true;
    for (const auto* r : {&a, &b}) {
        const double err = std::abs(r->summary["y0"][0].get<double>() - r->summary["y0_oracle"].get<double>());
        const double se = r->summary["y0_stderr"].get<double>();
        o.require(err <= 5.0 * se, "|y0 - oracle| " + num(err) + " (5 SE " + num(5.0 * se) + ")");
        o.require(verdict_pass(*r, "solution_finite") && r->code == 0, "finite");
        expected_part_ok = expected_part_ok && o.pass;
    }
    const double cd = b.summary["norms"]["y_classD_proxy"].get<double>() /
                      a.summary["norms"]["y_classD_proxy"].get<double>();
    o.require(cd >= 0.8 && cd <= 1.25, "classD ratio " + num(cd));
    expected_part_ok = expected_part_ok && o.pass;
    const double sp = b.summary["norms"]["y_sp_norm"][2].get<double>() / a.summary["norms"]["y_sp_norm"][2].get<double>();
    o.require(sp > 1.5, "sp_norm(2) ratio " + num(sp) + " (needs > 1.5)");
    o.known_shortfall = !o.pass && expected_part_ok;
    return o;
}

Outcome solver_correctness()
{
    using namespace bsmp;
    Outcome o;
    const Eigen::Index P = 10000;
    const auto ens = test::standard_ensemble(P, 50, 7);
    const RegressionBasis linear{BasisKind::polynomial, 1, 1e-8};
    auto zero = [&](const ProblemSpec& spec) {
        return ControlProcess::constant(50, P, Vector::Zero(1), spec.control_set);
    };

    test::ScalarModel constant;
    constant.xi = [](double) { return 3.0; };
    const auto sc = constant.build();
    const auto c = solve_bsde(sc, ens, zero(sc), RegressionBasis{}, 2);
    double dev = 0.0;
    for (const auto& y : c.y)
        dev = std::max(dev, (y.array() - 3.0).abs().maxCoeff());
    for (const auto& z : c.z)
        dev = std::max(dev, z.cwiseAbs().maxCoeff());
    o.require(dev == 0.0, "constant xi deviation " + num(dev));

    const auto sw = test::ScalarModel{}.build();
    const auto w = solve_bsde(sw, ens, zero(sw), linear, 2);
    double rms_y = 0.0, rms_z = 0.0;
    for (int i = 0; i <= 50; ++i)
        rms_y = std::max(rms_y, std::sqrt((w.y[static_cast<std::size_t>(i)] - ens.brownian(i)).squaredNorm() / P));
    for (int i = 0; i < 50; ++i)
        rms_z = std::max(rms_z, std::sqrt((w.z[static_cast<std::size_t>(i)].array() - 1.0).square().sum() / P));
    const double tol = 5.0 * std::max(std::sqrt(ens.grid().dt()), 1.0 / std::sqrt(static_cast<double>(P)));
    o.require(rms_y <= tol && rms_z <= tol, "xi = W_T rms " + num(std::max(rms_y, rms_z)) + " <= " + num(tol));

    test::ScalarModel ode;
    ode.b = [](double, double y, double, double) { return 0.5 * y; };
    ode.b_y = [](double, double, double, double) { return 0.5; };
    ode.xi = [](double) { return 2.0; };
    const auto so = ode.build();
    const auto e = solve_bsde(so, ens, zero(so), RegressionBasis{}, 2);
    double rel = 0.0;
    for (int i = 0; i <= 50; ++i) {
        const double exact = 2.0 * std::exp(0.5 * (ens.grid()[i] - 1.0));
        rel = std::max(rel, (e.y[static_cast<std::size_t>(i)].array() - exact).abs().maxCoeff() / exact);
    }
    o.require(rel <= 0.02, "linear driver rel error " + num(rel));
    return o;
}

Outcome reproducibility()
{
    Outcome o;
    const auto a = verify("lq");
    const auto b = bsmp("verify", model_config("lq"), "verify_lq_b", 1);
    const auto c = bsmp("verify", model_config("lq"), "verify_lq_c", 4);
    auto compare = [&](const CliRun& x, const CliRun& y, const std::string& label) {
        std::set<std::string> names;
        for (const auto* r : {&x, &y})
            for (const auto& f : fs::directory_iterator(r->dir))
                if (f.path().filename() != "run.log")
                    names.insert(f.path().filename().string());
        int differing = 0;
        for (const auto& n : names)
            if (!fs::exists(x.dir / n) || !fs::exists(y.dir / n) || slurp(x.dir / n) != slurp(y.dir / n))
                ++differing;
        o.require(differing == 0 && !names.empty(),
                  label + ": " + std::to_string(names.size() - differing) + "/" + std::to_string(names.size()) +
                      " files identical");
    };
    o.require(a.code == 0 && b.code == 0 && c.code == 0, "all runs exit 0");
    compare(a, b, "repeat");
    compare(a, c, "threads 1 vs 4");
    return o;
}

Outcome gradient_hygiene()
{
    Outcome o;
    for (const auto& m : kModels) {
        const auto r = verify(m);
        o.require(verdict_pass(r, "grad_check") && verdict_pass(r, "hamiltonian_fd"),
                  m + " " + num(verdict_value(r, "grad_check")) + "/" + num(verdict_value(r, "hamiltonian_fd")));
    }
    return o;
}

}  // namespace

int main(int argc, char** argv)
{
    g_work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "bsmp_acceptance";
    fs::create_directories(g_work);

    const std::vector<std::pair<std::string, Outcome (*)()>> criteria{
        {"LQ optimizer convergence", lq_optimizer},
        {"stationarity at the oracle", stationarity},
        {"cost duality", cost_duality},
        {"variation rate", lemma4_rate},
        {"first-order expansion limit", lemma5_limit},
        {"duality and martingale term", duality},
        {"L1 regime", l1_regime},
        {"solver correctness", solver_correctness},
        {"reproducibility", reproducibility},
        {"gradient hygiene", gradient_hygiene},
    };

    int passed = 0, unexpected = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        passed += o.pass;
        if (!o.pass && !o.known_shortfall)
            ++unexpected;
        std::cout << "criterion " << k + 1 << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[k].first << ": "
                  << o.detail << (o.known_shortfall ? "  (known shortfall, see README)" : "") << std::endl;
    }
    std::cout << passed << "/" << criteria.size() << " criteria passed";
    if (static_cast<int>(criteria.size()) - passed - unexpected > 0)
        std::cout << ", " << criteria.size() - passed - unexpected << " known shortfall";
    std::cout << std::endl;
    return unexpected == 0 ? 0 : 1;
}
