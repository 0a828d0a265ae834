#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "layersim/config.hpp"
#include "layersim/lseq.hpp"
#include "layersim/metrics.hpp"
#include "layersim/obj_export.hpp"
#include "layersim/oracle.hpp"
#include "layersim/parallel.hpp"
#include "layersim/train.hpp"
#include "layersim/verify.hpp"

namespace fs = std::filesystem;
using namespace layersim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitDivergence = 3;

std::vector<std::string> list_lseq(const std::string& dir) {
    std::vector<std::string> files;
    if (!fs::is_directory(dir)) throw std::runtime_error("cannot open directory " + dir);
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".lseq") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no .lseq files in " + dir);
    return files;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir, int count, uint64_t seed) {
    RunConfig cfg = config_path.empty() ? RunConfig::defaults() : RunConfig::from_file(config_path);
    fs::create_directories(out_dir);

    int workers = std::min<int>(max_threads(), std::max(1, count));
    std::vector<std::thread> pool;
    std::vector<std::string> errors(workers);
    for (int w = 0; w < workers; w++) {
        pool.emplace_back([&, w] {
            for (int k = w; k < count; k += workers) {
                try {
                    SequenceData seq = generate_sequence(cfg.scene, mix_seed(seed, uint64_t(k)));
                    char name[32];
                    std::snprintf(name, sizeof(name), "seq_%04d.lseq", k);
                    write_lseq((fs::path(out_dir) / name).string(), seq);
                } catch (const std::exception& e) {
                    if (errors[w].empty()) errors[w] = e.what();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& err : errors)
        if (!err.empty()) throw OracleDivergence(err, -1);
    std::printf("wrote %d sequences to %s\n", count, out_dir.c_str());
    return kExitOk;
}

int cmd_train(const std::string& data_dir, const std::string& config_path, const std::string& out_path,
              const std::string& log_path, int64_t seed_override) {
    RunConfig cfg = config_path.empty() ? RunConfig::defaults() : RunConfig::from_file(config_path);
    if (seed_override >= 0) cfg.train.seed = uint64_t(seed_override);

    std::vector<SequenceData> data;
    for (const auto& f : list_lseq(data_dir)) data.push_back(read_lseq(f));
    if (cfg.train.loss.d_eps <= 0.0) cfg.train.loss.d_eps = data[0].eps_garment;
    cfg.model.dt = data[0].dt;
    cfg.model.patch_size = data[0].patch_size;

    TrainResult result = train(cfg.model, cfg.train, data);
    save_checkpoint(out_path, result.params);
    std::string log = log_path.empty() ? out_path + ".log.csv" : log_path;
    write_train_log_csv(log, result.log);
    std::printf("trained %zu steps, final loss %.6g, checkpoint %s\n", result.log.size(),
                result.log.empty() ? 0.0 : result.log.back().total, out_path.c_str());
    return kExitOk;
}

int cmd_rollout(const std::string& ckpt, const std::string& seq_path, const std::string& out_path,
                int start, int steps, uint64_t rng_seed) {
    ModelParams params = load_checkpoint(ckpt);
    SequenceData seq = read_lseq(seq_path);
    int t0 = start >= 0 ? start : params.config.history + 1;
    int max_steps = seq.frame_count() - 1 - t0;
    int n = steps >= 0 ? std::min(steps, max_steps) : max_steps;
    if (n < 0) throw std::invalid_argument("rollout: start frame leaves no steps");

    RolloutResult rr = rollout(params, seq, t0, n, rng_seed);

    SequenceData out = seq;
    out.garment_positions.assign(seq.garment_positions.begin(), seq.garment_positions.begin() + t0 + 1);
    out.body_samples.assign(seq.body_samples.begin(), seq.body_samples.begin() + t0 + 1);
    out.wind.assign(seq.wind.begin(), seq.wind.begin() + t0 + 1);
    out.body.trajectory.assign(seq.body.trajectory.begin(),
                               seq.body.trajectory.begin() + std::min<size_t>(seq.body.trajectory.size(), t0 + 1));
    for (size_t s = 0; s < rr.frames.size(); s++) {
        int t = t0 + 1 + int(s);
        out.garment_positions.push_back(rr.frames[s]);
        out.body_samples.push_back(seq.body_samples.at(t));
        out.wind.push_back(seq.wind.at(t));
        if (t < int(seq.body.trajectory.size())) out.body.trajectory.push_back(seq.body.trajectory[t]);
    }
    write_lseq(out_path, out);

    if (rr.diverged_at >= 0) {
        std::fprintf(stderr, "rollout diverged at step %d; wrote %zu predicted frames\n", rr.diverged_at,
                     rr.frames.size());
        return kExitDivergence;
    }
    std::printf("wrote %zu predicted frames to %s\n", rr.frames.size(), out_path.c_str());
    return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& report_path,
             uint64_t rng_seed) {
    ModelParams params = load_checkpoint(ckpt);
    EvalReport report;
    bool diverged = false;
    for (const auto& f : list_lseq(data_dir)) {
        SequenceData seq = read_lseq(f);
        EvalRow row = evaluate_sequence(params, seq, fs::path(f).stem().string(), rng_seed);
        if (row.diverged_at >= 0) diverged = true;
        report.rows.push_back(row);
    }
    write_eval_csv(report_path, report);
    std::printf("sequences %zu  euclid_err_m %.6g  coll_body %.3f%%  coll_garment %.3f%%\n", report.rows.size(),
                report.mean_euclid(), report.mean_coll_body(), report.mean_coll_garment());
    return diverged ? kExitDivergence : kExitOk;
}

int cmd_export_obj(const std::string& seq_path, int frame, const std::string& out_path) {
    SequenceData seq = read_lseq(seq_path);
    export_obj(out_path, seq, frame);
    std::printf("wrote frame %d (%d vertices) to %s\n", frame, seq.total_vertex_count(), out_path.c_str());
    return kExitOk;
}

int cmd_gradcheck() {
    double worst = 0.0;
    for (const auto& [block, err] : per_block_gradcheck()) {
        std::printf("%-24s max_rel_err %.3e\n", block.c_str(), err);
        worst = std::max(worst, err);
    }
    std::printf("worst block error %.3e\n", worst);
    return worst < 1e-4 ? kExitOk : kExitValidation;
}

int cmd_verify() {
    bool all = true;
    for (const CheckResult& r : run_property_suite()) {
        std::printf("%-34s %s  measured %.3e  bound %.3e%s%s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL",
                    r.measured, r.bound, r.note.empty() ? "" : "  ", r.note.c_str());
        all = all && r.passed;
    }
    return all ? kExitOk : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"layersim: layered-garment data generation, training and evaluation"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate oracle sequences");
    std::string gen_config, gen_out = "data";
    int gen_count = 1;
    uint64_t gen_seed = 0;
    gen->add_option("--config", gen_config, "run configuration JSON");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--count", gen_count, "number of sequences");
    gen->add_option("--seed", gen_seed, "base seed");

    // train
    auto* tr = app.add_subcommand("train", "train a model on generated data");
    std::string tr_data, tr_config, tr_out = "model.lnpk", tr_log;
    int64_t tr_seed = -1;
    tr->add_option("--data", tr_data, "directory of .lseq files")->required();
    tr->add_option("--config", tr_config, "run configuration JSON");
    tr->add_option("--out", tr_out, "checkpoint output path");
    tr->add_option("--log", tr_log, "training log CSV (default <out>.log.csv)");
    tr->add_option("--seed", tr_seed, "override train.seed");

    // rollout
    auto* ro = app.add_subcommand("rollout", "recursive prediction over a sequence");
    std::string ro_ckpt, ro_seq, ro_out = "pred.lseq";
    int ro_start = -1, ro_steps = -1;
    uint64_t ro_rng = 0;
    ro->add_option("--ckpt", ro_ckpt, "checkpoint")->required();
    ro->add_option("--seq", ro_seq, "input sequence")->required();
    ro->add_option("--out", ro_out, "output sequence");
    ro->add_option("--start", ro_start, "first predicted-from frame (default: after history)");
    ro->add_option("--steps", ro_steps, "number of steps (default: to sequence end)");
    ro->add_option("--rng-seed", ro_rng, "seed for canonical-frame sampling");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a data directory");
    std::string ev_ckpt, ev_data, ev_report = "report.csv";
    uint64_t ev_rng = 0;
    ev->add_option("--ckpt", ev_ckpt, "checkpoint")->required();
    ev->add_option("--data", ev_data, "directory of .lseq files")->required();
    ev->add_option("--report", ev_report, "CSV report path");
    ev->add_option("--rng-seed", ev_rng, "seed for canonical-frame sampling");

    // export-obj
    auto* ex = app.add_subcommand("export-obj", "export one frame as Wavefront OBJ");
    std::string ex_seq, ex_out = "frame.obj";
    int ex_frame = 0;
    ex->add_option("--seq", ex_seq, "sequence file")->required();
    ex->add_option("--frame", ex_frame, "frame index");
    ex->add_option("--out", ex_out, "output OBJ path");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check per parameter block");
    auto* vf = app.add_subcommand("verify", "run the full property suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_config, gen_out, gen_count, gen_seed);
        if (tr->parsed()) return cmd_train(tr_data, tr_config, tr_out, tr_log, tr_seed);
        if (ro->parsed()) return cmd_rollout(ro_ckpt, ro_seq, ro_out, ro_start, ro_steps, ro_rng);
        if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_report, ev_rng);
        if (ex->parsed()) return cmd_export_obj(ex_seq, ex_frame, ex_out);
        if (gc->parsed()) return cmd_gradcheck();
        if (vf->parsed()) return cmd_verify();
    } catch (const OracleDivergence& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return kExitDivergence;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}
