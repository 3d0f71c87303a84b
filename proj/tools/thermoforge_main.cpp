// thermoforge: mesh/path/simulate/optimize pipeline front end.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "thermoforge/config.hpp"
#include "thermoforge/core.hpp"
#include "thermoforge/design.hpp"
#include "thermoforge/io.hpp"
#include "thermoforge/meltpool.hpp"
#include "thermoforge/simulate.hpp"
#include "thermoforge/svg.hpp"

namespace tf = thermoforge;
namespace fs = std::filesystem;

namespace {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

int requested_threads() {
    const char* env = std::getenv("THERMOFORGE_THREADS");
    if (!env) return 1;
    int n = std::atoi(env);
    return n >= 1 ? n : 1;
}

struct RunState {
    std::string command;
    std::string config_text;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    std::vector<std::string> outputs;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
};

void emit(RunState& st, const std::string& name, const std::string& content) {
    fs::create_directories(st.out_dir);
    std::string path = st.out_dir + "/" + name;
    tf::write_text_file(path, content);
    st.outputs.push_back(name);
}

void write_summary(RunState& st, nlohmann::json extra = {}) {
    nlohmann::json j;
    j["command"] = st.command;
    j["config_hash"] =
        st.config_text.empty() ? "none" : hex64(fnv1a64(st.config_text));
    j["seed"] = st.seed;
    j["versions"] = {{"tool", "thermoforge 1.0.0"},
                     {"compiler", __VERSION__},
                     {"cxx_standard", static_cast<long>(__cplusplus)}};
    j["threads"] = requested_threads();
    j["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - st.t0)
            .count();
    for (auto& [k, v] : extra.items()) j[k] = v;
    j["outputs"] = st.outputs;
    emit(st, "summary.json", j.dump(2) + "\n");
}

tf::RunConfig load_config(RunState& st, const std::string& path) {
    st.config_text = tf::read_text_file(path);
    tf::RunConfig c = tf::parse_config_text(st.config_text);
    st.out_dir = c.output_dir;
    st.seed = c.seed;
    return c;
}

int cmd_mesh(RunState& st, const std::string& config_path) {
    tf::RunConfig c = load_config(st, config_path);
    tf::Pipeline p = tf::build_pipeline(c);
    emit(st, "mesh.json", tf::mesh_to_json(p.mesh).dump(2) + "\n");
    write_summary(st, {{"n_nodes", p.mesh.n_nodes()},
                       {"n_elements", p.mesh.n_elements()}});
    std::printf("mesh: %zu nodes, %zu elements -> %s/mesh.json\n", p.mesh.n_nodes(),
                p.mesh.n_elements(), st.out_dir.c_str());
    return 0;
}

int cmd_path(RunState& st, const std::string& config_path) {
    tf::RunConfig c = load_config(st, config_path);
    tf::Pipeline p = tf::build_pipeline(c);
    emit(st, "toolpath.csv", tf::toolpath_csv(p.path));
    emit(st, "birth.csv", tf::birth_csv(p.schedule));
    // Laser-on trajectory plot (x and y against time).
    std::vector<tf::PlotSeries> series(2);
    series[0].name = "x";
    series[1].name = "y";
    for (const auto& s : p.path.segments) {
        if (!s.laser_on) continue;
        series[0].x.push_back(s.t_start);
        series[0].y.push_back(s.p_start.x);
        series[0].x.push_back(s.t_end);
        series[0].y.push_back(s.p_end.x);
        series[1].x.push_back(s.t_start);
        series[1].y.push_back(s.p_start.y);
        series[1].x.push_back(s.t_end);
        series[1].y.push_back(s.p_end.y);
    }
    if (!series[0].x.empty())
        emit(st, "path.svg",
             tf::render_svg(series, "laser trajectory", "time [s]", "position [m]"));
    write_summary(st, {{"n_segments", p.path.segments.size()},
                       {"end_time", p.path.end_time()},
                       {"dt", p.sim.dt}});
    std::printf("path: %zu segments, end time %.6g s -> %s\n", p.path.segments.size(),
                p.path.end_time(), st.out_dir.c_str());
    return 0;
}

int cmd_simulate(RunState& st, const std::string& config_path) {
    tf::RunConfig c = load_config(st, config_path);
    tf::Pipeline p = tf::build_pipeline(c);
    auto ctx = tf::sim::make_run_context(p.mesh, p.path, p.schedule, p.material,
                                         p.laser, p.sim);
    tf::ad::Tape tape;
    int mat_p = tape.add_param(
        {p.material.cp, p.material.k, p.material.h_conv, p.material.emissivity}, false);
    int las_p = tape.add_param({p.laser.power, p.laser.beam_radius}, false);
    tf::ForwardRefs refs{tf::ad::ValueRef::param(mat_p), tf::ad::ValueRef::param(las_p),
                         {}};
    tf::ThermalHistory hist = tf::run_forward(tape, ctx, refs);

    fs::create_directories(st.out_dir);
    tf::history_binary_dump(tape, hist, st.out_dir + "/history.bin");
    st.outputs.push_back("history.bin");

    // CSV: all nodes when small, otherwise just the observed top-layer nodes.
    std::vector<tf::NodeId> watch;
    std::size_t lines = hist.recorded_steps.size() * ctx->mesh.n_nodes();
    if (lines <= 2000000) {
        for (std::size_t n = 0; n < ctx->mesh.n_nodes(); ++n)
            watch.push_back(static_cast<tf::NodeId>(n));
    } else {
        watch = ctx->epochs.back().observed_top_nodes;
    }
    emit(st, "history.csv", tf::history_csv(tape, hist, watch));

    tf::PlotSeries smax{"max T", {}, {}}, smean{"mean T", {}, {}};
    for (int s : hist.recorded_steps) {
        const tf::ad::Vec& T = hist.state(tape, s);
        const tf::sim::Epoch& ep = ctx->epochs[ctx->epoch_of_step[s]];
        double mx = 0.0, acc = 0.0;
        std::size_t n_active = 0;
        for (std::size_t n = 0; n < T.size(); ++n)
            if (ep.node_active[n]) {
                mx = std::max(mx, T[n]);
                acc += T[n];
                ++n_active;
            }
        smax.x.push_back(s * hist.dt);
        smax.y.push_back(mx);
        smean.x.push_back(s * hist.dt);
        smean.y.push_back(n_active ? acc / n_active : 0.0);
    }
    emit(st, "temperature.svg",
         tf::render_svg({smax, smean}, "thermal history", "time [s]", "T [K]"));
    write_summary(st, {{"n_steps", p.sim.n_steps},
                       {"dt", p.sim.dt},
                       {"stability_dt_max", ctx->dt_max},
                       {"n_nodes", ctx->mesh.n_nodes()}});
    std::printf("simulate: %d steps, dt %.6g s -> %s\n", p.sim.n_steps, p.sim.dt,
                st.out_dir.c_str());
    return 0;
}

// AD-vs-FD check on a fixed 32-element fixture (4x4x2 build block, zigzag
// path, MSE-to-ambient loss over all active nodes).
int cmd_gradcheck(RunState& st, double eps, const std::string& only, double tol) {
    tf::Vec3 size{1e-3, 1e-3, 1e-3};
    tf::HexMesh mesh = tf::build_block_mesh(4, 4, 2, size);
    tf::Toolpath path =
        tf::generate_toolpath(mesh, tf::ScanStrategy::ZigZag, 0.05, 0.0);
    tf::MaterialParams mat;
    tf::LaserParams las;
    tf::SimConfig sim;
    std::vector<tf::ElementId> all(mesh.n_elements());
    for (std::size_t e = 0; e < all.size(); ++e) all[e] = static_cast<tf::ElementId>(e);
    sim.dt = 0.5 * tf::stability_limit(mesh, mat, all);
    sim.n_steps = static_cast<int>(path.end_time() / sim.dt) + 1;
    tf::BirthSchedule sched = tf::birth_schedule(mesh, path, sim.dt);
    auto ctx = tf::sim::make_run_context(mesh, path, sched, mat, las, sim);

    std::vector<tf::ad::Vec> target(sim.n_steps,
                                    tf::ad::Vec(mesh.n_nodes(), mat.T_amb));
    auto loss_kernel = std::make_shared<tf::HistoryMseKernel>(
        ctx, tf::ObservedSet::AllActive, std::move(target));

    tf::ad::Tape tape;
    int mat_p = tape.add_param({mat.cp, mat.k, mat.h_conv, mat.emissivity}, true);
    int las_p = tape.add_param({las.power, las.beam_radius}, true);
    auto run_loss = [&](tf::ad::Tape& t) {
        t.clear_records();
        tf::ForwardRefs refs{tf::ad::ValueRef::param(mat_p),
                             tf::ad::ValueRef::param(las_p), {}};
        tf::ThermalHistory hist = tf::run_forward(t, ctx, refs);
        int rec = t.record_step(loss_kernel, tf::design_detail::state_refs(hist));
        return t.output(rec)[0];
    };
    run_loss(tape);
    tf::ad::GradientStore grads = tape.backward();

    struct Entry {
        const char* name;
        int pid, idx;
    };
    const Entry entries[] = {{"cp", mat_p, 0},          {"k", mat_p, 1},
                             {"h_conv", mat_p, 2},      {"emissivity", mat_p, 3},
                             {"power", las_p, 0},       {"beam_radius", las_p, 1}};
    bool any = false, ok = true;
    nlohmann::json report = nlohmann::json::object();
    for (const Entry& e : entries) {
        if (!only.empty() && only != e.name) continue;
        any = true;
        double base = tape.param_value(e.pid)[e.idx];
        double h = eps * std::max(std::abs(base), 1.0);
        tape.param_value(e.pid)[e.idx] = base + h;
        double lp = run_loss(tape);
        tape.param_value(e.pid)[e.idx] = base - h;
        double lm = run_loss(tape);
        tape.param_value(e.pid)[e.idx] = base;
        double fd = (lp - lm) / (2.0 * h);
        double g = grads.grad(e.pid)[e.idx];
        double rel = std::abs(g - fd) / std::max(std::abs(fd), 1e-12);
        std::printf("%s ad=%.10e fd=%.10e rel=%.3e\n", e.name, g, fd, rel);
        report[e.name] = rel;
        if (rel > tol) ok = false;
    }
    if (!any) throw std::invalid_argument("gradcheck: unknown --param name: " + only);
    write_summary(st, {{"eps", eps}, {"tol", tol}, {"rel_errors", report}});
    if (!ok) {
        std::fprintf(stderr, "error: gradcheck: relative error above %g\n", tol);
        return 1;
    }
    return 0;
}

int cmd_case(RunState& st, const std::string& config_path, int case_id,
             long long seed_override, int iter_override) {
    tf::RunConfig c = load_config(st, config_path);
    c.case_id = case_id;
    if (seed_override >= 0) c.seed = static_cast<std::uint64_t>(seed_override);
    if (iter_override >= 0) c.iterations = iter_override;
    st.seed = c.seed;
    tf::CaseSpec spec = tf::build_case_spec(c);
    tf::OptimizationLog log = tf::run_case(spec, [](const tf::IterationEntry& e) {
        std::printf("iter %d loss %.10e\n", e.iter, e.loss);
        std::fflush(stdout);
    });

    emit(st, "loss.csv", tf::loss_csv(log));
    tf::PlotSeries loss_series{"loss", {}, {}};
    for (const auto& e : log.entries) {
        loss_series.x.push_back(e.iter);
        loss_series.y.push_back(e.loss);
    }
    emit(st, "loss.svg",
         tf::render_svg({loss_series}, "optimization loss", "iteration", "loss"));

    if (case_id == 1) {
        emit(st, "params.csv", tf::params_csv(log));
    } else {
        std::vector<tf::PlotSeries> curves;
        for (const auto& [iter, curve] : log.power_curves) {
            char name[64];
            std::snprintf(name, sizeof(name), "power_iter_%d.csv", iter);
            emit(st, name, tf::power_csv(curve));
            tf::PlotSeries ps;
            std::snprintf(name, sizeof(name), "iter %d", iter);
            ps.name = name;
            for (std::size_t i = 0; i < curve.size(); ++i) {
                ps.x.push_back(curve.size() > 1 ? double(i) / (curve.size() - 1) : 0.0);
                ps.y.push_back(curve[i]);
            }
            curves.push_back(std::move(ps));
        }
        emit(st, "power.svg",
             tf::render_svg(curves, "laser power schedule", "t / t_end", "power [W]"));
    }
    if (case_id == 3) {
        std::string csv = "sample,depth\n";
        char buf[64];
        for (std::size_t i = 0; i < log.final_depths.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, log.final_depths[i]);
            csv += buf;
        }
        emit(st, "depth_final.csv", csv);
    }
    write_summary(st, {{"case", case_id},
                       {"iterations", c.iterations},
                       {"initial_loss", log.initial_loss()},
                       {"final_loss", log.final_loss()}});
    std::printf("case%d: loss %.6e -> %.6e over %d iterations -> %s\n", case_id,
                log.initial_loss(), log.final_loss(), c.iterations,
                st.out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "thermoforge: differentiable element-birth thermal simulation "
        "(assembly is serial; THERMOFORGE_THREADS is accepted and recorded)"};
    app.require_subcommand(1);

    std::string config_path, only_param;
    double eps = 1e-6, tol = 1e-4;
    long long seed_override = -1;
    int iter_override = -1;

    auto* c_mesh = app.add_subcommand("mesh", "build the mesh and write mesh.json");
    c_mesh->add_option("--config", config_path, "config file")->required();
    auto* c_path =
        app.add_subcommand("path", "generate toolpath + birth schedule CSV files");
    c_path->add_option("--config", config_path, "config file")->required();
    auto* c_sim = app.add_subcommand("simulate", "run the transient thermal solve");
    c_sim->add_option("--config", config_path, "config file")->required();
    auto* c_grad = app.add_subcommand(
        "gradcheck", "AD-vs-FD relative error per parameter on a 32-element fixture");
    c_grad->add_option("--eps", eps, "central-difference step scale (default 1e-6)");
    c_grad->add_option("--param", only_param, "check a single parameter by name");
    c_grad->add_option("--tol", tol, "failure threshold (default 1e-4)");
    CLI::App* c_case[3];
    const char* case_desc[3] = {"recover material/laser parameters from history",
                                "train the power controller against a target history",
                                "train the power controller for constant melt depth"};
    for (int i = 0; i < 3; ++i) {
        c_case[i] = app.add_subcommand("case" + std::to_string(i + 1), case_desc[i]);
        c_case[i]->add_option("--config", config_path, "config file")->required();
        c_case[i]->add_option("--seed", seed_override, "override [optimize].seed");
        c_case[i]->add_option("--iterations", iter_override,
                              "override [optimize].iterations");
    }

    CLI11_PARSE(app, argc, argv);
    RunState st;
    st.command = app.get_subcommands()[0]->get_name();
    try {
        if (c_mesh->parsed()) return cmd_mesh(st, config_path);
        if (c_path->parsed()) return cmd_path(st, config_path);
        if (c_sim->parsed()) return cmd_simulate(st, config_path);
        if (c_grad->parsed()) return cmd_gradcheck(st, eps, only_param, tol);
        for (int i = 0; i < 3; ++i)
            if (c_case[i]->parsed())
                return cmd_case(st, config_path, i + 1, seed_override, iter_override);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
