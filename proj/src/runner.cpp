#include "bsmp/runner.hpp"

#include "bsmp/diagnostics.hpp"
#include "bsmp/parallel.hpp"
#include "bsmp/philox.hpp"
#include "bsmp/smp.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

namespace bsmp {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

void reject_unknown(const Json& obj, const std::set<std::string>& allowed, const std::string& where)
{
    if (!obj.is_object())
        throw std::invalid_argument(where + " must be a JSON object");
    for (const auto& [key, value] : obj.items())
        if (!allowed.contains(key))
            throw std::invalid_argument("unknown key '" + key + "' in " + where);
}

std::vector<double> number_list(const Json& v, const std::string& key)
{
    if (v.is_number())
        return {v.get<double>()};
    if (!v.is_array())
        throw std::invalid_argument("'" + key + "' must be a number or an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
        if (!x.is_number())
            throw std::invalid_argument("'" + key + "' must contain only numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

template <class T>
T get_number(const Json& v, const std::string& key)
{
    if (!v.is_number())
        throw std::invalid_argument("'" + key + "' must be a number");
    if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer())
            throw std::invalid_argument("'" + key + "' must be an integer");
    }
    return v.get<T>();
}

Json vector_json(const Vector& v)
{
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out.push_back(v(i));
    return out;
}

Vector to_vector(const std::vector<double>& x)
{
    return Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
}

std::string basis_name(BasisKind kind)
{
    return kind == BasisKind::polynomial ? "polynomial" : "piecewise_constant";
}

}  // namespace

void RunConfig::validate() const
{
    find_model(model);
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw std::invalid_argument("horizon must be a positive finite number");
    if (steps < 1)
        throw std::invalid_argument("steps must be >= 1");
    if (paths < 2)
        throw std::invalid_argument("paths must be >= 2");
    if (antithetic && paths % 2 != 0)
        throw std::invalid_argument("antithetic sampling needs an even path count");
    basis.validate();
    if (picard_iters < 0)
        throw std::invalid_argument("picard_iters must be >= 0");
    if (!(optimizer.step_size >= 0.0))
        throw std::invalid_argument("optimizer.step_size must be >= 0");
    if (optimizer.max_iters < 0)
        throw std::invalid_argument("optimizer.max_iters must be >= 0");
    if (!(optimizer.tolerance >= 0.0))
        throw std::invalid_argument("optimizer.tolerance must be >= 0");
    validate_theta_grid(theta_grid);
    if (winsor_cap && !(*winsor_cap > 0.0))
        throw std::invalid_argument("winsor_cap must be > 0");
    if (dump_paths < 0)
        throw std::invalid_argument("dump_paths must be >= 0");
    if (threads < 1)
        throw std::invalid_argument("threads must be >= 1");
    if (output_dir.empty())
        throw std::invalid_argument("output_dir must not be empty");
}

RunConfig RunConfig::from_json(const Json& doc)
{
    reject_unknown(doc,
                   {"model", "horizon", "steps", "paths", "seed", "antithetic", "basis", "picard_iters", "optimizer",
                    "theta_grid", "output_dir", "winsor_cap", "control", "probe", "dump_paths", "threads"},
                   "config");
    RunConfig c;
    if (doc.contains("model")) {
        const auto& m = doc["model"];
        if (m.is_string()) {
            c.model = m.get<std::string>();
        } else {
            reject_unknown(m, {"key", "params"}, "model");
            if (!m.contains("key") || !m["key"].is_string())
                throw std::invalid_argument("model.key must be a string");
            c.model = m["key"].get<std::string>();
            if (m.contains("params")) {
                if (!m["params"].is_object())
                    throw std::invalid_argument("model.params must be an object");
                for (const auto& [name, value] : m["params"].items())
                    c.params[name] = get_number<double>(value, "model.params." + name);
            }
        }
    }
    if (doc.contains("horizon"))
        c.horizon = get_number<double>(doc["horizon"], "horizon");
    if (doc.contains("steps"))
        c.steps = get_number<int>(doc["steps"], "steps");
    if (doc.contains("paths"))
        c.paths = get_number<long long>(doc["paths"], "paths");
    if (doc.contains("seed")) {
        if (!doc["seed"].is_number_unsigned())
            throw std::invalid_argument("'seed' must be a non-negative integer");
        c.seed = doc["seed"].get<std::uint64_t>();
    }
    if (doc.contains("antithetic")) {
        if (!doc["antithetic"].is_boolean())
            throw std::invalid_argument("'antithetic' must be true or false");
        c.antithetic = doc["antithetic"].get<bool>();
    }
    if (doc.contains("basis")) {
        const auto& b = doc["basis"];
        reject_unknown(b, {"kind", "degree_or_cells", "ridge"}, "basis");
        if (b.contains("kind")) {
            const auto kind = b["kind"].is_string() ? b["kind"].get<std::string>() : std::string();
            if (kind == "polynomial")
                c.basis.kind = BasisKind::polynomial;
            else if (kind == "piecewise_constant")
                c.basis.kind = BasisKind::piecewise_constant;
            else
                throw std::invalid_argument("basis.kind must be 'polynomial' or 'piecewise_constant'");
        }
        if (b.contains("degree_or_cells"))
            c.basis.degree_or_cells = get_number<int>(b["degree_or_cells"], "basis.degree_or_cells");
        if (b.contains("ridge"))
            c.basis.ridge = get_number<double>(b["ridge"], "basis.ridge");
    }
    if (doc.contains("picard_iters"))
        c.picard_iters = get_number<int>(doc["picard_iters"], "picard_iters");
    if (doc.contains("optimizer")) {
        const auto& o = doc["optimizer"];
        reject_unknown(o, {"step_size", "max_iters", "tolerance", "u0"}, "optimizer");
        if (o.contains("step_size"))
            c.optimizer.step_size = get_number<double>(o["step_size"], "optimizer.step_size");
        if (o.contains("max_iters"))
            c.optimizer.max_iters = get_number<int>(o["max_iters"], "optimizer.max_iters");
        if (o.contains("tolerance"))
            c.optimizer.tolerance = get_number<double>(o["tolerance"], "optimizer.tolerance");
        if (o.contains("u0") && !o["u0"].is_null())
            c.optimizer.u0 = number_list(o["u0"], "optimizer.u0");
    }
    if (doc.contains("theta_grid"))
        c.theta_grid = number_list(doc["theta_grid"], "theta_grid");
    if (doc.contains("output_dir")) {
        if (!doc["output_dir"].is_string())
            throw std::invalid_argument("'output_dir' must be a string");
        c.output_dir = doc["output_dir"].get<std::string>();
    }
    if (doc.contains("winsor_cap") && !doc["winsor_cap"].is_null())
        c.winsor_cap = get_number<double>(doc["winsor_cap"], "winsor_cap");
    if (doc.contains("control") && !doc["control"].is_null())
        c.control = number_list(doc["control"], "control");
    if (doc.contains("probe") && !doc["probe"].is_null())
        c.probe = number_list(doc["probe"], "probe");
    if (doc.contains("dump_paths"))
        c.dump_paths = get_number<int>(doc["dump_paths"], "dump_paths");
    if (doc.contains("threads"))
        c.threads = get_number<int>(doc["threads"], "threads");
    return c;
}

RunConfig RunConfig::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::invalid_argument("cannot read config file '" + path + "'");
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw std::invalid_argument(std::string("malformed config: ") + e.what());
    }
    return from_json(doc);
}

// ---------------------------------------------------------------- run context

namespace {

struct Context {
    RunConfig config;
    ProblemSpec spec;
    ModelParams params;
    ModelOracle oracle;
    PathEnsemble ensemble;
    BsdeOptions bsde;
    Vector base;   // constant base control
    Vector probe;  // constant probe direction
    Vector u0;
    Json resolved;
    std::string hash;
    fs::path out;
    std::vector<Verdict> verdicts;
    Json summary = Json::object();

    fs::path file(const std::string& name) const { return out / name; }

    void verdict(std::string name, double value, double threshold, bool pass)
    {
        verdicts.push_back({std::move(name), value, threshold, pass});
    }

    ControlProcess constant(const Vector& value) const
    {
        return ControlProcess::constant(ensemble.grid().steps(), ensemble.paths(), value, spec.control_set);
    }
};

Vector control_vector(const std::optional<std::vector<double>>& given, const Vector& fallback, int m,
                      const ControlSet& set, const std::string& name)
{
    if (!given)
        return fallback;
    Vector v = given->size() == 1 ? Vector::Constant(m, given->front()) : to_vector(*given);
    if (v.size() != m)
        throw std::invalid_argument("'" + name + "' has the wrong dimension for this model");
    if (!set.contains(v))
        throw std::invalid_argument("'" + name + "' lies outside the control set");
    return v;
}

Json resolved_json(const Context& ctx)
{
    const auto& c = ctx.config;
    Json params = Json::object();
    for (const auto& [name, value] : ctx.params)
        params[name] = value;
    Json doc = Json::object();
    doc["model"] = {{"key", c.model}, {"params", params}};
    doc["horizon"] = c.horizon;
    doc["steps"] = c.steps;
    doc["paths"] = c.paths;
    doc["seed"] = c.seed;
    doc["antithetic"] = c.antithetic;
    doc["basis"] = {{"kind", basis_name(c.basis.kind)},
                    {"degree_or_cells", c.basis.degree_or_cells},
                    {"ridge", c.basis.ridge}};
    doc["picard_iters"] = c.picard_iters;
    doc["optimizer"] = {{"step_size", c.optimizer.step_size},
                        {"max_iters", c.optimizer.max_iters},
                        {"tolerance", c.optimizer.tolerance},
                        {"u0", vector_json(ctx.u0)}};
    doc["theta_grid"] = c.theta_grid;
    doc["winsor_cap"] = c.winsor_cap ? Json(*c.winsor_cap) : Json(nullptr);
    doc["control"] = vector_json(ctx.base);
    doc["probe"] = vector_json(ctx.probe);
    doc["dump_paths"] = c.dump_paths;
    return doc;
}

Context make_context(const RunConfig& config)
{
    config.validate();
    const auto& entry = find_model(config.model);
    const auto params = resolve_params(entry, config.params);
    auto spec = make_model(config.model, params, config.horizon);
    const TimeGrid grid(config.horizon, config.steps);
    auto ensemble = sample_ensemble(grid, config.paths, spec.dims.d, config.seed, config.antithetic);
    Context ctx{config, std::move(spec), params, model_oracle(config.model, params, config.horizon),
                std::move(ensemble), {}, {}, {}, {}, {}, {}, config.output_dir, {}, Json::object()};
    ctx.bsde = {config.basis, config.picard_iters, config.winsor_cap};

    const int m = ctx.spec.dims.m;
    const Vector origin = ctx.spec.control_set.project(Vector::Zero(m));
    const Vector default_base = ctx.oracle.optimal_control ? *ctx.oracle.optimal_control : origin;
    ctx.base = control_vector(config.control, default_base, m, ctx.spec.control_set, "control");
    const Vector default_probe = ctx.spec.control_set.project(ctx.base + Vector::Ones(m));
    ctx.probe = control_vector(config.probe, default_probe, m, ctx.spec.control_set, "probe");
    ctx.u0 = control_vector(config.optimizer.u0, origin, m, ctx.spec.control_set, "optimizer.u0");

    ctx.resolved = resolved_json(ctx);
    ctx.hash = hash_hex(dump_json(ctx.resolved));
    fs::create_directories(ctx.out);
    return ctx;
}

// ---------------------------------------------------------------- writers

std::vector<std::string> indexed(const std::string& stem, int count)
{
    std::vector<std::string> out;
    for (int a = 1; a <= count; ++a)
        out.push_back(stem + std::to_string(a));
    return out;
}

std::vector<std::string> matrix_names(const std::string& stem, int rows, int cols)
{
    std::vector<std::string> out;
    for (int j = 1; j <= cols; ++j)
        for (int a = 1; a <= rows; ++a)
            out.push_back(stem + std::to_string(a) + std::to_string(j));
    return out;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b)
{
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

Eigen::Index dump_count(const Context& ctx)
{
    return std::min<Eigen::Index>(ctx.config.dump_paths, ctx.ensemble.paths());
}

void write_trajectories(const Context& ctx, const TrajectoryBundle& bundle, const std::string& name)
{
    const int n = ctx.spec.dims.n;
    const int d = ctx.spec.dims.d;
    const int N = ctx.ensemble.grid().steps();
    // z entries are listed column by column: z_11, z_21, ..., z_nd.
    CsvWriter csv(ctx.file(name).string(),
                  concat(concat({"path_id", "step"}, indexed("y_", n)), matrix_names("z_", n, d)));
    for (Eigen::Index p = 0; p < dump_count(ctx); ++p)
        for (int i = 0; i <= N; ++i) {
            csv.cell(static_cast<long long>(p)).cell(i);
            for (int a = 0; a < n; ++a)
                csv.cell(bundle.y[static_cast<std::size_t>(i)](p, a));
            for (int a = 0; a < n * d; ++a) {
                if (i < N)
                    csv.cell(bundle.z[static_cast<std::size_t>(i)](p, a));
                else
                    csv.empty();
            }
            csv.end_row();
        }
}

void write_step_summary(const Context& ctx, const TrajectoryBundle& bundle, const std::string& name)
{
    const int n = ctx.spec.dims.n;
    const int N = ctx.ensemble.grid().steps();
    CsvWriter csv(ctx.file(name).string(),
                  concat(concat({"step", "t"}, indexed("mean_y_", n)), indexed("var_y_", n)));
    for (int i = 0; i <= N; ++i) {
        const RowArray& y = bundle.y[static_cast<std::size_t>(i)];
        csv.cell(i).cell(ctx.ensemble.grid()[i]);
        Eigen::RowVectorXd var(n);
        for (int a = 0; a < n; ++a) {
            const auto est = estimate(y.col(a).array());
            csv.cell(est.value);
            var(a) = est.se * est.se * static_cast<double>(y.rows());
        }
        for (int a = 0; a < n; ++a)
            csv.cell(var(a));
        csv.end_row();
    }
}

void write_brownian(const Context& ctx)
{
    CsvWriter csv(ctx.file("brownian.csv").string(), {"path_id", "step", "coordinate", "value"});
    for (Eigen::Index p = 0; p < dump_count(ctx); ++p)
        for (int i = 0; i <= ctx.ensemble.grid().steps(); ++i)
            for (int j = 0; j < ctx.ensemble.brownian_dim(); ++j) {
                csv.cell(static_cast<long long>(p)).cell(i).cell(j + 1).cell(ctx.ensemble.brownian(i)(p, j));
                csv.end_row();
            }
}

void write_adjoint(const Context& ctx, const AdjointPath& adjoint)
{
    CsvWriter csv(ctx.file("adjoint.csv").string(), concat({"path_id", "step"}, indexed("p_", ctx.spec.dims.n)));
    for (Eigen::Index p = 0; p < dump_count(ctx); ++p)
        for (int i = 0; i <= ctx.ensemble.grid().steps(); ++i) {
            csv.cell(static_cast<long long>(p)).cell(i);
            for (int a = 0; a < ctx.spec.dims.n; ++a)
                csv.cell(adjoint.p[static_cast<std::size_t>(i)](p, a));
            csv.end_row();
        }
}

void write_control(const Context& ctx, const ControlProcess& u, const std::string& name)
{
    CsvWriter csv(ctx.file(name).string(), concat({"path_id", "step"}, indexed("u_", ctx.spec.dims.m)));
    for (Eigen::Index p = 0; p < dump_count(ctx); ++p)
        for (int i = 0; i < u.steps(); ++i) {
            csv.cell(static_cast<long long>(p)).cell(i);
            for (int a = 0; a < ctx.spec.dims.m; ++a)
                csv.cell(u.values[static_cast<std::size_t>(i)](p, a));
            csv.end_row();
        }
}

void write_table(const Context& ctx, const ConvergenceTable& table, const std::string& name)
{
    std::vector<std::string> header{"theta"};
    for (const auto& s : table.series) {
        header.push_back(s.name);
        header.push_back(s.name + "_stderr");
    }
    CsvWriter csv(ctx.file(name).string(), header);
    for (std::size_t j = 0; j < table.theta_grid.size(); ++j) {
        csv.cell(table.theta_grid[j]);
        for (const auto& s : table.series)
            csv.cell(s.values[j]).cell(s.stderrs[j]);
        csv.end_row();
    }
}

Json table_json(const ConvergenceTable& table)
{
    Json out = Json::object();
    out["theta_grid"] = table.theta_grid;
    for (const auto& s : table.series)
        out[s.name] = {{"values", s.values},
                       {"stderrs", s.stderrs},
                       {"slope", s.slope},
                       {"monotone", s.monotone},
                       {"all_zero", s.all_zero}};
    return out;
}

// ---------------------------------------------------------------- shared checks

double l2_distance(const ControlProcess& u, const Vector& target, double dt)
{
    double total = 0.0;
    for (const auto& step : u.values)
        total += (step.rowwise() - target.transpose()).rowwise().squaredNorm().sum() * dt;
    return std::sqrt(total / static_cast<double>(u.paths()));
}

double roundoff(double scale)
{
    return 1e-12 * (1.0 + std::abs(scale));
}

struct NormsBlock {
    Json json;
    bool finite = true;
    double classd_ratio = kNaN;
    double sp2_ratio = kNaN;
};

const std::vector<double> kNormExponents{0.5, 0.9, 2.0};

// Norms of y on all paths and on the first half; the half-to-full ratio
// is the doubling stability indicator.
NormsBlock norms_block(const Context& ctx, const TrajectoryBundle& bundle)
{
    const auto& grid = ctx.ensemble.grid();
    const auto full = empirical_norms(bundle.y, grid, kNormExponents);
    const auto half = empirical_norms(path_prefix(bundle.y, ctx.ensemble.paths() / 2), grid, kNormExponents);
    const auto zfull = empirical_norms(bundle.z, grid, kNormExponents);
    NormsBlock b;
    b.finite = full.finite && zfull.finite;
    b.classd_ratio = full.classD_proxy / half.classD_proxy;
    b.sp2_ratio = full.sp_norm[2] / half.sp_norm[2];
    Json sp_ratio = Json::array();
    Json unstable = Json::array();
    for (std::size_t j = 0; j < kNormExponents.size(); ++j) {
        const double r = full.sp_norm[j] / half.sp_norm[j];
        sp_ratio.push_back(r);
        unstable.push_back(!(r >= 0.8 && r <= 1.25));
    }
    b.json = {{"p", kNormExponents},
              {"y_sp_norm", full.sp_norm},
              {"y_mp_norm", full.mp_norm},
              {"y_classD_proxy", full.classD_proxy},
              {"z_mp_norm", zfull.mp_norm},
              {"half_paths", ctx.ensemble.paths() / 2},
              {"y_sp_norm_half", half.sp_norm},
              {"y_classD_proxy_half", half.classD_proxy},
              {"sp_norm_doubling_ratio", sp_ratio},
              {"sp_norm_unstable", unstable},
              {"classD_doubling_ratio", b.classd_ratio},
              {"finite", b.finite}};
    return b;
}

void oracle_y0_verdict(Context& ctx, const TrajectoryBundle& bundle)
{
    if (!ctx.oracle.y0 || !ctx.base.isZero(0.0))
        return;
    const int n = ctx.spec.dims.n;
    for (int a = 0; a < n; ++a) {
        const auto est = estimate(bundle.pathwise_y0.col(a).array());
        const double err = std::abs(bundle.y0()(a) - *ctx.oracle.y0);
        ctx.verdict("y0_oracle", err, 5.0 * est.se + roundoff(*ctx.oracle.y0),
                    err <= 5.0 * est.se + roundoff(*ctx.oracle.y0));
        ctx.summary["y0_stderr"] = est.se;
    }
    ctx.summary["y0_oracle"] = *ctx.oracle.y0;
}

Json cost_json(const CostBreakdown& c)
{
    return {{"J", c.J},
            {"initial_term", c.initial_term},
            {"running_term", c.running_term},
            {"standard_error", c.standard_error},
            {"method", c.method == CostMethod::direct ? "direct" : "augmented"}};
}

// Random constant controls in U, deterministic for a seed.
std::vector<Vector> random_controls(const ControlSet& set, int count, std::uint64_t seed)
{
    GaussianStream rng(seed, 0x70be5);
    std::vector<Vector> out;
    for (int k = 0; k < count; ++k) {
        Vector x(set.dim());
        if (const auto* box = std::get_if<Box>(&set.kind())) {
            for (int a = 0; a < set.dim(); ++a)
                x(a) = box->lo(a) + (box->hi(a) - box->lo(a)) * rng.next_uniform();
        } else {
            for (int a = 0; a < set.dim(); ++a)
                x(a) = 2.0 * rng.next_normal();
            x = set.project(x);
        }
        out.push_back(x);
    }
    return out;
}

std::vector<ProbePoint> random_points(const ProblemSpec& spec, int count, std::uint64_t seed)
{
    GaussianStream rng(seed, 0x9c4ec);
    const auto controls = random_controls(spec.control_set, count, seed);
    std::vector<ProbePoint> out;
    for (int k = 0; k < count; ++k) {
        ProbePoint pt;
        pt.t = spec.horizon * rng.next_uniform();
        pt.y = Vector(spec.dims.n);
        for (int a = 0; a < spec.dims.n; ++a)
            pt.y(a) = rng.next_normal();
        pt.z = Matrix(spec.dims.n, spec.dims.d);
        for (Eigen::Index a = 0; a < pt.z.size(); ++a)
            pt.z(a) = rng.next_normal();
        pt.v = controls[static_cast<std::size_t>(k)];
        out.push_back(pt);
    }
    return out;
}

// ---------------------------------------------------------------- subcommands

void cmd_solve(Context& ctx)
{
    const auto control = ctx.constant(ctx.base);
    const auto bundle = solve_bsde(ctx.spec, ctx.ensemble, control, ctx.bsde);
    const auto adjoint = solve_adjoint(ctx.spec, ctx.ensemble, bundle);
    const auto cost = evaluate_cost_direct(ctx.spec, ctx.ensemble, bundle);
    const double residual = stationarity_residual(ctx.spec, control, hamiltonian_gradient(ctx.spec, bundle, adjoint),
                                                  ctx.ensemble.grid().dt());
    ctx.summary["J"] = cost.J;
    ctx.summary["J_stderr"] = cost.standard_error;
    ctx.summary["residual"] = residual;
    ctx.summary["y0"] = vector_json(bundle.y0());
    ctx.summary["winsorized"] = bundle.winsorized;
    oracle_y0_verdict(ctx, bundle);

    const auto norms = norms_block(ctx, bundle);
    ctx.summary["norms"] = norms.json;
    ctx.verdict("solution_finite", norms.finite ? 1.0 : 0.0, 1.0, norms.finite);

    write_trajectories(ctx, bundle, "trajectories.csv");
    write_step_summary(ctx, bundle, "step_summary.csv");
    write_adjoint(ctx, adjoint);
    write_brownian(ctx);
}

// Direct and augmented cost for one constant control; returns the verdict.
bool cost_pair(Context& ctx, const Vector& value, Json& rows)
{
    const auto bundle = solve_bsde(ctx.spec, ctx.ensemble, ctx.constant(value), ctx.bsde);
    const auto direct = evaluate_cost_direct(ctx.spec, ctx.ensemble, bundle);
    const auto augmented = evaluate_cost_augmented(ctx.spec, ctx.ensemble, bundle);
    const double diff = std::abs(direct.J - augmented.J);
    const double threshold = 5.0 * combined_stderr(direct, augmented) + roundoff(direct.J);
    rows.push_back({{"control", vector_json(value)},
                    {"direct", cost_json(direct)},
                    {"augmented", cost_json(augmented)},
                    {"difference", diff},
                    {"threshold", threshold},
                    {"pass", diff <= threshold}});
    return diff <= threshold;
}

void cmd_cost(Context& ctx)
{
    const auto bundle = solve_bsde(ctx.spec, ctx.ensemble, ctx.constant(ctx.base), ctx.bsde);
    const auto adjoint = solve_adjoint(ctx.spec, ctx.ensemble, bundle);
    const auto direct = evaluate_cost_direct(ctx.spec, ctx.ensemble, bundle);
    const auto augmented = evaluate_cost_augmented(ctx.spec, ctx.ensemble, bundle);
    const double diff = std::abs(direct.J - augmented.J);
    const double threshold = 5.0 * combined_stderr(direct, augmented) + roundoff(direct.J);
    ctx.summary["J"] = direct.J;
    ctx.summary["J_stderr"] = direct.standard_error;
    ctx.summary["residual"] = stationarity_residual(
        ctx.spec, bundle.control, hamiltonian_gradient(ctx.spec, bundle, adjoint), ctx.ensemble.grid().dt());
    ctx.summary["direct"] = cost_json(direct);
    ctx.summary["augmented"] = cost_json(augmented);
    ctx.verdict("cost_duality", diff, threshold, diff <= threshold);

    // Two further admissible controls on either side of the base control.
    Json extra = Json::array();
    const Vector lower = ctx.spec.control_set.project(ctx.base - Vector::Ones(ctx.spec.dims.m));
    bool extra_pass = cost_pair(ctx, ctx.probe, extra);
    extra_pass = cost_pair(ctx, lower, extra) && extra_pass;
    ctx.summary["further_controls"] = extra;
    ctx.verdict("cost_duality_further_controls", extra_pass ? 1.0 : 0.0, 1.0, extra_pass);
    if (ctx.oracle.optimal_cost && ctx.oracle.optimal_control && ctx.base.isApprox(*ctx.oracle.optimal_control)) {
        const double err = std::abs(direct.J - *ctx.oracle.optimal_cost);
        const double tol = 4.0 * direct.standard_error + roundoff(direct.J);
        ctx.verdict("cost_oracle", err, tol, err <= tol);
    }
}

void cmd_optimize(Context& ctx)
{
    OptimizerOptions options;
    options.step_size = ctx.config.optimizer.step_size;
    options.max_iters = ctx.config.optimizer.max_iters;
    options.tolerance = ctx.config.optimizer.tolerance;
    options.bsde = ctx.bsde;
    options.validation_seed = ctx.config.seed + 1;
    const auto result = optimize(ctx.spec, ctx.ensemble, ctx.constant(ctx.u0), options);

    CsvWriter csv(ctx.file("history.csv").string(), {"iter", "J", "J_stderr", "residual", "step_size"});
    for (const auto& r : result.history) {
        csv.cell(r.iter).cell(r.J).cell(r.J_stderr).cell(r.residual).cell(r.step_size);
        csv.end_row();
    }
    write_control(ctx, result.control, "control.csv");

    ctx.summary["J"] = result.final_cost.J;
    ctx.summary["J_stderr"] = result.final_cost.standard_error;
    ctx.summary["residual"] = result.final_residual;
    ctx.summary["status"] = to_string(result.status);
    ctx.summary["message"] = result.message;
    ctx.summary["iterations"] = static_cast<int>(result.history.size()) - 1;
    if (result.validation_cost) {
        ctx.summary["validation_seed"] = ctx.config.seed + 1;
        ctx.summary["validation_J"] = result.validation_cost->J;
        ctx.summary["validation_J_stderr"] = result.validation_cost->standard_error;
    }
    ctx.verdict("optimizer_converged", result.final_residual, ctx.config.optimizer.tolerance,
                result.status == OptimizerStatus::converged);
    if (ctx.oracle.optimal_control) {
        const double dist = l2_distance(result.control, *ctx.oracle.optimal_control, ctx.ensemble.grid().dt());
        ctx.summary["control_error"] = dist;
        ctx.verdict("oracle_control", dist, 0.02, dist <= 0.02);
    }
    if (ctx.oracle.optimal_cost) {
        const double err = std::abs(result.final_cost.J - *ctx.oracle.optimal_cost);
        const double tol = std::max(0.02, 5.0 * result.final_cost.standard_error);
        ctx.summary["J_oracle"] = *ctx.oracle.optimal_cost;
        ctx.verdict("oracle_cost", err, tol, err <= tol);
    }
}

void cmd_verify(Context& ctx)
{
    const auto& spec = ctx.spec;
    const auto& ens = ctx.ensemble;
    const double dt = ens.grid().dt();
    const auto u = ctx.constant(ctx.base);
    const auto v = ctx.constant(ctx.probe);
    const bool at_oracle = ctx.oracle.optimal_control && ctx.base.isApprox(*ctx.oracle.optimal_control);

    // Model hygiene.
    const auto assumptions = validate_assumptions(spec, 2000, ctx.config.seed);
    double worst = 0.0;
    Json assumption_rows = Json::array();
    for (const auto& c : assumptions.checks) {
        worst = std::max(worst, c.max_violation_ratio);
        assumption_rows.push_back({{"name", c.name},
                                   {"passed", c.passed},
                                   {"max_violation_ratio", c.max_violation_ratio},
                                   {"worst_probe", c.worst_probe}});
    }
    ctx.summary["assumptions"] = assumption_rows;
    ctx.verdict("assumptions", worst, 1.0, assumptions.all_passed());

    double grad_err = 0.0, ham_err = 0.0;
    GaussianStream prng(ctx.config.seed, 0xada);
    for (const auto& pt : random_points(spec, 20, ctx.config.seed)) {
        grad_err = std::max(grad_err, grad_check(spec, pt, 1e-5));
        Vector p(spec.dims.n);
        for (int a = 0; a < spec.dims.n; ++a)
            p(a) = prng.next_normal();
        ham_err = std::max(ham_err, hamiltonian_fd_check(spec, pt, p, 1e-5));
    }
    ctx.verdict("grad_check", grad_err, 1e-4, grad_err <= 1e-4);
    ctx.verdict("hamiltonian_fd", ham_err, 1e-6, ham_err <= 1e-6);

    // Base solution, adjoint and costs.
    const auto bundle = solve_bsde(spec, ens, u, ctx.bsde);
    const auto adjoint = solve_adjoint(spec, ens, bundle);
    const auto direct = evaluate_cost_direct(spec, ens, bundle);
    const auto augmented = evaluate_cost_augmented(spec, ens, bundle);
    const double residual = stationarity_residual(spec, u, hamiltonian_gradient(spec, bundle, adjoint), dt);
    ctx.summary["J"] = direct.J;
    ctx.summary["J_stderr"] = direct.standard_error;
    ctx.summary["residual"] = residual;
    {
        const double diff = std::abs(direct.J - augmented.J);
        const double tol = 5.0 * combined_stderr(direct, augmented) + roundoff(direct.J);
        ctx.summary["cost"] = {{"direct", cost_json(direct)}, {"augmented", cost_json(augmented)}};
        ctx.verdict("cost_duality", diff, tol, diff <= tol);
    }

    // Difference functionals between the base and the probe control.
    {
        const auto other = solve_bsde(spec, ens, v, ctx.bsde);
        const auto diff = solve_difference(spec, ens, other, bundle);
        const bool finite = std::isfinite(diff.sup_y) && std::isfinite(diff.int_z);
        ctx.summary["difference"] = {{"sup_y", diff.sup_y}, {"int_z", diff.int_z}};
        ctx.verdict("lemma3_finite", std::max(diff.sup_y, diff.int_z), kInf, finite);
    }

    // Lemmas 4 and 5.
    const auto t4 = lemma4_table(spec, ens, u, v, ctx.config.theta_grid, ctx.bsde);
    write_table(ctx, t4, "lemma4.csv");
    ctx.summary["lemma4"] = table_json(t4);
    {
        const auto& s = t4.at("sup_y");
        ctx.verdict("lemma4_slope", s.slope, 0.9, s.all_zero || s.slope >= 0.9);
    }
    const auto t5 = lemma5_table(spec, ens, u, v, ctx.config.theta_grid, ctx.bsde);
    write_table(ctx, t5, "lemma5.csv");
    ctx.summary["lemma5"] = table_json(t5);
    {
        int failing = 0;
        for (const auto& s : t5.series) {
            const bool negligible = std::all_of(s.values.begin(), s.values.end(), [](double x) { return x <= 1e-16; });
            if (!(s.monotone || negligible))
                ++failing;
        }
        ctx.verdict("lemma5_monotone", failing, 0.0, failing == 0);
    }

    // Directional derivative and the duality identity in the probe direction.
    const auto var = solve_variational(spec, ens, bundle, v, ctx.bsde.basis, ctx.bsde.picard_iters);
    const auto l6 = lemma6_check(spec, ens, bundle, var);
    ctx.summary["lemma6"] = {{"value", l6.value}, {"stderr", l6.se}};
    if (at_oracle) {
        double lowest = kInf;
        bool pass = true;
        Json probes = Json::array();
        for (const auto& c : random_controls(spec.control_set, 5, ctx.config.seed + 17)) {
            const auto pv = solve_variational(spec, ens, bundle, ctx.constant(c), ctx.bsde.basis,
                                              ctx.bsde.picard_iters);
            const auto est = lemma6_check(spec, ens, bundle, pv);
            probes.push_back({{"probe", vector_json(c)}, {"value", est.value}, {"stderr", est.se}});
            const double margin = est.value + 3.0 * est.se + roundoff(est.value);
            lowest = std::min(lowest, margin);
            pass = pass && margin >= 0.0;
        }
        ctx.summary["lemma6"]["oracle_probes"] = probes;
        ctx.verdict("lemma6_sign", lowest, 0.0, pass);
    } else {
        ctx.verdict("lemma6_finite", l6.value, kInf, std::isfinite(l6.value) && std::isfinite(l6.se));
    }

    const auto dual = duality_check(spec, ens, bundle, adjoint, var);
    ctx.summary["duality"] = {{"E_S_T", dual.s_terminal.value},
                              {"E_S_T_stderr", dual.s_terminal.se},
                              {"lemma6", dual.lemma6},
                              {"hamiltonian", dual.hamiltonian},
                              {"gap", dual.gap},
                              {"gap_stderr", dual.gap_stderr},
                              {"residual", dual.residual}};
    ctx.verdict("duality_martingale", std::abs(dual.s_terminal.value),
                3.0 * dual.s_terminal.se + roundoff(dual.lemma6), dual.martingale_pass);
    ctx.verdict("duality_gap", dual.gap, 3.0 * dual.gap_stderr + std::abs(dual.residual) + roundoff(dual.lemma6),
                dual.gap_pass);

    const auto gi = gradient_identity(spec, ens, u, v, {0.1, 0.05, 0.025}, ctx.bsde);
    {
        CsvWriter csv(ctx.file("gradient_identity.csv").string(), {"theta", "quotient", "derivative", "gap"});
        for (const auto& r : gi.rows) {
            csv.cell(r.theta).cell(r.quotient).cell(r.derivative).cell(r.gap);
            csv.end_row();
        }
        Json rows = Json::array();
        for (const auto& r : gi.rows)
            rows.push_back({{"theta", r.theta}, {"quotient", r.quotient}, {"gap", r.gap}});
        ctx.summary["gradient_identity"] = {{"derivative", gi.rows.front().derivative},
                                            {"rows", rows},
                                            {"decreasing", gi.decreasing}};
    }

    // Adjoint moment bound: full ensemble against its first half.
    {
        const Eigen::Index half = ens.paths() / 2;
        Eigen::ArrayXd sup(ens.paths());
        for (Eigen::Index p = 0; p < ens.paths(); ++p) {
            double s = 0.0;
            for (const auto& step : adjoint.p)
                s = std::max(s, step.row(p).squaredNorm());
            sup(p) = s;
        }
        const double ratio = sup.mean() / sup.head(half).mean();
        ctx.summary["adjoint"] = {{"sup_moment", adjoint.sup_moment},
                                  {"sup_moment_stderr", adjoint.sup_moment_stderr},
                                  {"doubling_ratio", ratio}};
        const bool stable = std::isfinite(adjoint.sup_moment) &&
                            ((ratio >= 0.5 && ratio <= 2.0) || adjoint.sup_moment == 0.0);
        ctx.verdict("adjoint_moment", ratio, 2.0, stable);
    }

    const auto norms = norms_block(ctx, bundle);
    ctx.summary["norms"] = norms.json;
    ctx.verdict("norms_finite", norms.finite ? 1.0 : 0.0, 1.0, norms.finite);

    if (at_oracle) {
        std::vector<ControlProcess> probes;
        for (const auto& c : random_controls(spec.control_set, 5, ctx.config.seed + 29))
            probes.push_back(ctx.constant(c));
        const auto report = check_stationarity(spec, ens, bundle, adjoint, probes, 1e-3);
        Json values = Json::array();
        for (const auto& e : report.vi_values)
            values.push_back({{"value", e.value}, {"stderr", e.se}});
        ctx.summary["stationarity"] = {{"residual", report.residual}, {"probes", values}, {"pass", report.pass}};
        ctx.verdict("stationarity", report.residual, 1e-3, report.pass);
    }

    write_trajectories(ctx, bundle, "trajectories.csv");
    write_adjoint(ctx, adjoint);
}

void cmd_benchmark(Context& ctx)
{
    CsvWriter csv(ctx.file("benchmark.csv").string(),
                  {"model", "J", "J_stderr", "J_oracle", "control_error", "status", "pass"});
    Json rows = Json::array();
    for (const auto& entry : model_registry()) {
        const auto oracle = model_oracle(entry.key, {}, ctx.config.horizon);
        if (!oracle.optimal_control || !oracle.optimal_cost)
            continue;
        const auto spec = make_model(entry.key, {}, ctx.config.horizon);
        OptimizerOptions options;
        options.step_size = ctx.config.optimizer.step_size;
        options.max_iters = ctx.config.optimizer.max_iters;
        options.tolerance = ctx.config.optimizer.tolerance;
        options.bsde = ctx.bsde;
        const Vector start = spec.control_set.project(Vector::Zero(spec.dims.m));
        const auto u0 = ControlProcess::constant(ctx.ensemble.grid().steps(), ctx.ensemble.paths(), start,
                                                 spec.control_set);
        const auto result = optimize(spec, ctx.ensemble, u0, options);
        const double dist = l2_distance(result.control, *oracle.optimal_control, ctx.ensemble.grid().dt());
        const double err = std::abs(result.final_cost.J - *oracle.optimal_cost);
        const double tol = std::max(0.02, 5.0 * result.final_cost.standard_error);
        const bool pass = dist <= 0.02 && err <= tol;
        csv.cell(entry.key).cell(result.final_cost.J).cell(result.final_cost.standard_error);
        csv.cell(*oracle.optimal_cost).cell(dist).cell(to_string(result.status)).cell(pass ? "true" : "false");
        csv.end_row();
        rows.push_back({{"model", entry.key},
                        {"J", result.final_cost.J},
                        {"J_stderr", result.final_cost.standard_error},
                        {"J_oracle", *oracle.optimal_cost},
                        {"control_error", dist},
                        {"status", to_string(result.status)}});
        ctx.verdict("benchmark_" + entry.key + "_cost", err, tol, err <= tol);
        ctx.verdict("benchmark_" + entry.key + "_control", dist, 0.02, dist <= 0.02);
    }
    ctx.summary["benchmarks"] = rows;
    ctx.summary["J"] = kNaN;
    ctx.summary["J_stderr"] = kNaN;
    ctx.summary["residual"] = kNaN;
}

std::string timestamp()
{
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

}  // namespace

int run(const std::string& subcommand, const RunConfig& config, std::ostream& diag)
{
    static const std::set<std::string> known{"solve", "cost", "optimize", "verify", "benchmark"};
    if (!known.contains(subcommand)) {
        diag << "bsmp: error: config: unknown subcommand '" << subcommand << "'\n";
        return static_cast<int>(ExitCode::runtime_error);
    }
    const auto started = std::chrono::steady_clock::now();
    const std::string started_at = timestamp();
    std::optional<Context> ctx;
    try {
        ctx.emplace(make_context(config));
    } catch (const std::exception& e) {
        diag << "bsmp: error: config: " << e.what() << '\n';
        return static_cast<int>(ExitCode::runtime_error);
    }

    set_thread_count(config.threads);
    try {
        if (subcommand == "solve")
            cmd_solve(*ctx);
        else if (subcommand == "cost")
            cmd_cost(*ctx);
        else if (subcommand == "optimize")
            cmd_optimize(*ctx);
        else if (subcommand == "verify")
            cmd_verify(*ctx);
        else
            cmd_benchmark(*ctx);
    } catch (const NumericalError& e) {
        diag << "bsmp: error: numerical: " << e.what() << '\n';
        return static_cast<int>(ExitCode::runtime_error);
    } catch (const std::exception& e) {
        diag << "bsmp: error: runtime: " << e.what() << '\n';
        return static_cast<int>(ExitCode::runtime_error);
    }

    bool all_pass = true;
    Json verdicts = Json::array();
    for (const auto& v : ctx->verdicts) {
        all_pass = all_pass && v.pass;
        verdicts.push_back({{"name", v.name}, {"value", v.value}, {"threshold", v.threshold}, {"pass", v.pass}});
    }
    Json summary = Json::object();
    summary["config_hash"] = ctx->hash;
    summary["subcommand"] = subcommand;
    summary["model"] = ctx->config.model;
    summary["J"] = ctx->summary.value("J", kNaN);
    summary["J_stderr"] = ctx->summary.value("J_stderr", kNaN);
    summary["residual"] = ctx->summary.value("residual", kNaN);
    summary["verdicts"] = verdicts;
    summary["pass"] = all_pass;
    for (const auto& [key, value] : ctx->summary.items())
        if (!summary.contains(key))
            summary[key] = value;

    const int code = static_cast<int>(all_pass ? ExitCode::ok : ExitCode::verdict_failure);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    try {
        write_text(ctx->file("resolved_config.json").string(), dump_json(ctx->resolved));
        write_text(ctx->file("summary.json").string(), dump_json(summary));
        std::ostringstream log;
        log << "started " << started_at << "\nfinished " << timestamp() << "\nsubcommand " << subcommand
            << "\nthreads " << config.threads << "\nruntime_seconds " << format_double(seconds) << "\nexit_code "
            << code << '\n';
        write_text(ctx->file("run.log").string(), log.str());
    } catch (const std::exception& e) {
        diag << "bsmp: error: io: " << e.what() << '\n';
        return static_cast<int>(ExitCode::runtime_error);
    }
    for (const auto& v : ctx->verdicts)
        if (!v.pass)
            diag << "bsmp: verdict failed: " << v.name << " value=" << format_double(v.value)
                 << " threshold=" << format_double(v.threshold) << '\n';
    return code;
}

}  // namespace bsmp
