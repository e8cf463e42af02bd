// Command-line front end: phantom generation, target-map construction,
// training, inference, evaluation and reporting as one reproducible binary.

#include <cstdio>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "seedloc/seedloc.hpp"

namespace {

using namespace seedloc;

Vec3 parse_triple(const std::string& s, const char* what) {
    Vec3 v;
    char extra;
    if (std::sscanf(s.c_str(), "%lf,%lf,%lf%c", &v[0], &v[1], &v[2], &extra) != 3)
        throw std::invalid_argument(std::string(what) + ": expected \"x,y,z\", got \"" + s + "\"");
    return v;
}

Index3 parse_itriple(const std::string& s, const char* what) {
    const Vec3 v = parse_triple(s, what);
    return {static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2])};
}

std::pair<double, double> parse_pair(const std::string& s, const char* what) {
    double a, b;
    char extra;
    if (std::sscanf(s.c_str(), "%lf,%lf%c", &a, &b, &extra) != 2)
        throw std::invalid_argument(std::string(what) + ": expected \"lo,hi\", got \"" + s + "\"");
    return {a, b};
}

// Values from --config act as defaults; explicit flags win.
struct ConfigOverlay {
    json cfg = json::object();

    void load(const std::string& path) {
        if (!path.empty()) cfg = parse_json_file(path);
    }
    template <typename T>
    void apply(const CLI::Option* opt, const char* key, T& value) const {
        if (opt->count() == 0 && cfg.contains(key)) value = cfg.at(key).get<T>();
    }
};

void write_resolved_config(const json& resolved, const fs::path& out_dir, const std::string& name) {
    fs::create_directories(out_dir);
    write_text_file(out_dir / ("config." + name + ".json"), json_bytes(resolved));
}

int cmd_gen_phantom(const std::string& config_path, const std::string& out_dir,
                    std::uint64_t seed, int n_volumes, std::string shape_s, double spacing,
                    int seeds_min, int seeds_max, double cluster_fraction, double cluster_gap,
                    int streaks, double noise_sd, std::string background_s, double seed_hu,
                    std::string jitter, int jobs) {
    PhantomConfig cfg;
    cfg.rng_seed = seed;
    cfg.shape = parse_itriple(shape_s, "--shape");
    cfg.spacing_mm = {spacing, spacing, spacing};
    cfg.seed_count = seeds_min;
    cfg.cluster_fraction = cluster_fraction;
    cfg.cluster_gap_mm = cluster_gap;
    cfg.streak_artifact_count = streaks;
    cfg.noise_sd_hu = noise_sd;
    auto [bg_lo, bg_hi] = parse_pair(background_s, "--background");
    cfg.background_hu_lo = bg_lo;
    cfg.background_hu_hi = bg_hi;
    cfg.seed_hu = seed_hu;
    if (jitter == "center")
        cfg.annotation_jitter = PhantomConfig::Jitter::center;
    else if (jitter == "uniform-on-seed")
        cfg.annotation_jitter = PhantomConfig::Jitter::uniform_on_seed;
    else
        throw std::invalid_argument("--jitter must be 'uniform-on-seed' or 'center'");
    if (seeds_max < seeds_min) seeds_max = seeds_min;
    set_worker_threads(jobs);

    const auto entries = generate_dataset(cfg, n_volumes, out_dir, seeds_max);

    json resolved;
    resolved["subcommand"] = "gen-phantom";
    resolved["config_file"] = config_path;
    resolved["out"] = out_dir;
    resolved["seed"] = seed;
    resolved["n_volumes"] = n_volumes;
    resolved["shape"] = {cfg.shape[0], cfg.shape[1], cfg.shape[2]};
    resolved["spacing"] = spacing;
    resolved["seeds_min"] = seeds_min;
    resolved["seeds_max"] = seeds_max;
    resolved["cluster_fraction"] = cluster_fraction;
    resolved["cluster_gap_mm"] = cluster_gap;
    resolved["streaks"] = streaks;
    resolved["noise_sd_hu"] = noise_sd;
    resolved["background_hu"] = {bg_lo, bg_hi};
    resolved["seed_hu"] = seed_hu;
    resolved["jitter"] = jitter;
    resolved["jobs"] = jobs;
    write_resolved_config(resolved, out_dir, "gen-phantom");

    std::printf("wrote %zu phantom pairs and dataset.json to %s\n", entries.size(),
                out_dir.c_str());
    return 0;
}

int cmd_make_targets(const std::string& config_path, const std::string& manifest,
                     const std::string& out_dir, std::string sigma_s, double truncation,
                     double scale, int jobs) {
    KernelSpec kernel;
    kernel.sigma_mm = parse_triple(sigma_s, "--sigma");
    kernel.truncation_radius_sigmas = truncation;
    set_worker_threads(jobs);
    const auto outputs = make_target_maps(manifest, kernel, scale, out_dir);

    json resolved;
    resolved["subcommand"] = "make-targets";
    resolved["config_file"] = config_path;
    resolved["manifest"] = manifest;
    resolved["out"] = out_dir;
    resolved["sigma_mm"] = {kernel.sigma_mm[0], kernel.sigma_mm[1], kernel.sigma_mm[2]};
    resolved["truncation_sigmas"] = truncation;
    resolved["scale"] = scale;
    resolved["jobs"] = jobs;
    write_resolved_config(resolved, out_dir, "make-targets");

    std::printf("wrote %zu probability maps to %s\n", outputs.size(), out_dir.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& manifest,
              const std::string& out_dir, std::uint64_t seed, int levels, int base_channels,
              double lr, int batch, int rounds, int lr_patience, int stop_patience,
              double lr_decay, double val_fraction, double scale, double weight_floor,
              std::string sigma_s, double truncation, std::string clamp_s, bool save_opt,
              int jobs) {
    ArchConfig arch;
    arch.levels = levels;
    arch.base_channels = base_channels;

    TrainConfig cfg;
    cfg.rng_seed = seed;
    cfg.learning_rate = lr;
    cfg.batch_size = batch;
    cfg.max_rounds = rounds;
    cfg.lr_patience = lr_patience;
    cfg.stop_patience = stop_patience;
    cfg.lr_decay_factor = lr_decay;
    cfg.validation_fraction = val_fraction;
    cfg.map_scale = scale;
    cfg.weight_floor = weight_floor;
    cfg.kernel.sigma_mm = parse_triple(sigma_s, "--sigma");
    cfg.kernel.truncation_radius_sigmas = truncation;
    auto [clamp_lo, clamp_hi] = parse_pair(clamp_s, "--clamp");
    cfg.clamp_lo = clamp_lo;
    cfg.clamp_hi = clamp_hi;
    cfg.save_optimizer_state = save_opt;
    set_worker_threads(jobs);

    json resolved;
    resolved["subcommand"] = "train";
    resolved["config_file"] = config_path;
    resolved["manifest"] = manifest;
    resolved["out"] = out_dir;
    resolved["seed"] = seed;
    resolved["levels"] = levels;
    resolved["base_channels"] = base_channels;
    resolved["lr"] = lr;
    resolved["batch"] = batch;
    resolved["rounds"] = rounds;
    resolved["lr_patience"] = lr_patience;
    resolved["stop_patience"] = stop_patience;
    resolved["lr_decay"] = lr_decay;
    resolved["val_fraction"] = val_fraction;
    resolved["scale"] = scale;
    resolved["weight_floor"] = weight_floor;
    resolved["sigma_mm"] = {cfg.kernel.sigma_mm[0], cfg.kernel.sigma_mm[1], cfg.kernel.sigma_mm[2]};
    resolved["truncation_sigmas"] = truncation;
    resolved["clamp"] = {clamp_lo, clamp_hi};
    resolved["save_optimizer_state"] = save_opt;
    resolved["jobs"] = jobs;
    write_resolved_config(resolved, out_dir, "train");

    const auto outcome = run_training(manifest, arch, cfg, out_dir, [](const LossRow& r) {
        std::printf("round %4d  train %.6g  val %.6g  lr %.4g\n", r.round, r.train_loss,
                    r.val_loss, r.lr);
        std::fflush(stdout);
    });
    std::printf("best validation %.6g at round %d; checkpoint: %s\n", outcome.result.best_val,
                outcome.result.best_round, outcome.checkpoint_path.c_str());
    return 0;
}

int cmd_infer(const std::string& config_path, const std::string& checkpoint,
              std::vector<std::string> volumes, const std::string& manifest,
              const std::string& out_dir, std::string clamp_s, double spacing, std::string voi_s,
              std::string center_s, double threshold_fraction, double min_basin_mass,
              int connectivity, bool smoothing, bool save_maps, int jobs) {
    const Checkpoint ck = load_checkpoint(checkpoint);
    InferOptions opt;
    if (!clamp_s.empty()) {
        auto [lo, hi] = parse_pair(clamp_s, "--clamp");
        opt.clamp_override = true;
        opt.clamp_lo = lo;
        opt.clamp_hi = hi;
    }
    opt.resample_iso_mm = spacing;
    if (!voi_s.empty() || !center_s.empty()) {
        if (voi_s.empty() || center_s.empty())
            throw std::invalid_argument("--voi and --center must be given together");
        opt.use_voi = true;
        opt.voi.shape_voxels = parse_itriple(voi_s, "--voi");
        opt.voi.center_mm = parse_triple(center_s, "--center");
        opt.voi.spacing_mm = spacing > 0 ? spacing : 0.5;
    }
    opt.extract.threshold_fraction = threshold_fraction;
    opt.extract.min_basin_mass_fraction = min_basin_mass;
    opt.extract.connectivity = connectivity;
    opt.extract.smoothing = smoothing;
    opt.save_maps = save_maps;

    if (!manifest.empty())
        for (const auto& e : read_manifest(manifest))
            volumes.push_back(resolve_against(manifest, e.volume_path).string());
    if (volumes.empty()) throw std::invalid_argument("infer: no input volumes given");

    json resolved;
    resolved["subcommand"] = "infer";
    resolved["config_file"] = config_path;
    resolved["checkpoint"] = checkpoint;
    resolved["volumes"] = volumes;
    resolved["manifest"] = manifest;
    resolved["out"] = out_dir;
    resolved["clamp_override"] = opt.clamp_override;
    resolved["clamp"] = {opt.clamp_override ? opt.clamp_lo : ck.meta.clamp_lo,
                         opt.clamp_override ? opt.clamp_hi : ck.meta.clamp_hi};
    resolved["spacing"] = spacing;
    resolved["voi"] = voi_s;
    resolved["center"] = center_s;
    resolved["threshold_fraction"] = threshold_fraction;
    resolved["min_basin_mass_fraction"] = min_basin_mass;
    resolved["connectivity"] = connectivity;
    resolved["smoothing"] = smoothing;
    resolved["save_maps"] = save_maps;
    resolved["jobs"] = jobs;
    write_resolved_config(resolved, out_dir, "infer");

    std::vector<InferVolumeResult> results(volumes.size());
    if (jobs <= 1) {
        RegressionNet<float> net = net_from_checkpoint<float>(ck);
        for (std::size_t i = 0; i < volumes.size(); ++i)
            results[i] = infer_volume(net, ck, volumes[i], opt, out_dir);
    } else {
        // one worker (and one network instance) per thread, volumes dealt
        // round-robin; per-volume results do not depend on the schedule
        set_worker_threads(1);
        std::vector<std::thread> pool;
        const int nthreads = std::min<int>(jobs, static_cast<int>(volumes.size()));
        for (int t = 0; t < nthreads; ++t)
            pool.emplace_back([&, t] {
                RegressionNet<float> net = net_from_checkpoint<float>(ck);
                for (std::size_t i = static_cast<std::size_t>(t); i < volumes.size();
                     i += static_cast<std::size_t>(nthreads))
                    results[i] = infer_volume(net, ck, volumes[i], opt, out_dir);
            });
        for (auto& th : pool) th.join();
    }

    double total = 0.0;
    for (const auto& r : results) {
        std::printf("infer %s: %zu detections in %.2f s\n", r.name.c_str(),
                    r.detections.detections.size(), r.seconds);
        total += r.seconds;
    }
    std::printf("average %.2f s per volume over %zu volumes\n",
                total / static_cast<double>(results.size()), results.size());
    return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& gt, const std::string& det,
                 std::string out_stem, double threshold_mm) {
    if (out_stem.empty())
        out_stem = detail::strip_suffix(fs::path(det), ".det.json").string();
    const auto outcome = run_evaluate(gt, det, threshold_mm, out_stem);

    json resolved;
    resolved["subcommand"] = "evaluate";
    resolved["config_file"] = config_path;
    resolved["gt"] = gt;
    resolved["det"] = det;
    resolved["out"] = out_stem;
    resolved["threshold_mm"] = threshold_mm;
    const fs::path dir = fs::path(out_stem).parent_path();
    write_resolved_config(resolved, dir.empty() ? fs::path(".") : dir, "evaluate");

    const auto& r = outcome.report;
    std::printf("detected %d of %d (%s%%), median pair distance %.3f mm\n", r.detected_count,
                r.gt_count, format_rate_percent(r.detection_rate).c_str(), r.median);
    return 0;
}

int cmd_report(const std::string& config_path, const std::vector<std::string>& eval_paths,
               const std::string& out_dir) {
    std::vector<fs::path> paths(eval_paths.begin(), eval_paths.end());
    const ReportSummary s = run_report(paths, out_dir);

    json resolved;
    resolved["subcommand"] = "report";
    resolved["config_file"] = config_path;
    resolved["inputs"] = eval_paths;
    resolved["out"] = out_dir;
    write_resolved_config(resolved, out_dir, "report");

    std::printf("%s", read_text_file(s.table_path).c_str());
    return 0;
}

int cmd_gradcheck(int levels, int base_channels, std::string shape_s, std::uint64_t seed,
                  double h, double weight_floor, double threshold) {
    ArchConfig arch;
    arch.levels = levels;
    arch.base_channels = base_channels;
    const auto report = gradient_check(arch, parse_itriple(shape_s, "--shape"), seed, h,
                                       weight_floor);
    for (const auto& t : report.tensors)
        std::printf("%-24s max rel %.3e  max abs %.3e\n", t.name.c_str(), t.max_rel, t.max_abs);
    std::printf("overall max relative error %.3e (threshold %.1e) in %.1f s: %s\n", report.max_rel,
                threshold, report.seconds, report.pass(threshold) ? "OK" : "FAIL");
    return report.pass(threshold) ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"3D seed localization: phantoms, density-map regression, watershed extraction"};
    app.require_subcommand(1);

    std::string config_path, out_dir, manifest, checkpoint, gt, det, out_stem;
    std::string shape_s = "64,64,48", background_s = "20,60", jitter = "uniform-on-seed";
    std::string sigma_s = "1,1,2", clamp_s = "-80,175", infer_clamp_s, voi_s, center_s;
    std::vector<std::string> volumes, eval_paths;
    std::uint64_t seed = 1;
    int n_volumes = 1, seeds_min = 15, seeds_max = -1, streaks = 0, jobs = 0;
    double spacing = 0.5, cluster_fraction = 0.0, cluster_gap = 2.0, noise_sd = 0.0;
    double seed_hu = 3000.0, truncation = 4.0, scale = 1.0;
    int levels = 3, base_channels = 16, batch = 4, rounds = 500, lr_patience = 8,
        stop_patience = 24, connectivity = 26;
    double lr = 0.003, lr_decay = 0.5, val_fraction = 0.1, weight_floor = 0.0;
    double threshold_mm = 3.0, threshold_fraction = 0.05, min_basin_mass = 0.1;
    double infer_spacing = 0.0, h = 1e-5, gc_weight_floor = 1e-3, gc_threshold = 1e-5;
    bool save_opt = false, smoothing = false, save_maps = false;
    std::string gc_shape = "8,8,8";
    std::uint64_t gc_seed = 7;
    int gc_levels = 1, gc_base = 2;

    const int default_jobs = static_cast<int>(std::thread::hardware_concurrency());

    auto* gen = app.add_subcommand("gen-phantom", "Generate synthetic volumes with annotations");
    auto* g_out = gen->add_option("--out", out_dir, "Output directory")->required();
    auto* g_seed = gen->add_option("--seed", seed, "Base rng seed");
    auto* g_n = gen->add_option("--n-volumes", n_volumes, "Number of volumes");
    auto* g_shape = gen->add_option("--shape", shape_s, "Grid shape x,y,z");
    auto* g_spacing = gen->add_option("--spacing", spacing, "Isotropic voxel spacing (mm)");
    auto* g_smin = gen->add_option("--seeds-min", seeds_min, "Seeds per volume (lower bound)");
    auto* g_smax = gen->add_option("--seeds-max", seeds_max, "Seeds per volume (upper bound)");
    auto* g_cf = gen->add_option("--cluster-fraction", cluster_fraction, "Fraction of seeds in clusters");
    auto* g_cg = gen->add_option("--cluster-gap", cluster_gap, "Cluster spacing (mm)");
    auto* g_streaks = gen->add_option("--streaks", streaks, "Streak artifacts per volume");
    auto* g_noise = gen->add_option("--noise-sd", noise_sd, "Gaussian noise sd (HU)");
    auto* g_bg = gen->add_option("--background", background_s, "Background HU range lo,hi");
    auto* g_shu = gen->add_option("--seed-hu", seed_hu, "Seed intensity (HU)");
    auto* g_jit = gen->add_option("--jitter", jitter, "Annotation placement: uniform-on-seed|center");
    auto* g_jobs = gen->add_option("--jobs", jobs, "Worker threads");
    gen->add_option("--config", config_path, "JSON config file (flags override)");

    auto* mk = app.add_subcommand("make-targets", "Build probability maps from annotations");
    auto* m_manifest = mk->add_option("--manifest", manifest, "dataset.json path")->required();
    auto* m_out = mk->add_option("--out", out_dir, "Output directory")->required();
    auto* m_sigma = mk->add_option("--sigma", sigma_s, "Kernel sigmas x,y,z (mm)");
    auto* m_trunc = mk->add_option("--truncation", truncation, "Kernel truncation (sigmas)");
    auto* m_scale = mk->add_option("--scale", scale, "Map scale factor");
    auto* m_jobs = mk->add_option("--jobs", jobs, "Worker threads");
    mk->add_option("--config", config_path, "JSON config file (flags override)");

    auto* tr = app.add_subcommand("train", "Train the regression network");
    auto* t_manifest = tr->add_option("--manifest", manifest, "dataset.json path")->required();
    auto* t_out = tr->add_option("--out", out_dir, "Output directory")->required();
    auto* t_seed = tr->add_option("--seed", seed, "Rng seed");
    auto* t_levels = tr->add_option("--levels", levels, "Encoder/decoder levels");
    auto* t_base = tr->add_option("--base-channels", base_channels, "Channels at full resolution");
    auto* t_lr = tr->add_option("--lr", lr, "Initial learning rate");
    auto* t_batch = tr->add_option("--batch", batch, "Batch size");
    auto* t_rounds = tr->add_option("--rounds", rounds, "Maximum training rounds");
    auto* t_lrp = tr->add_option("--lr-patience", lr_patience, "Rounds before lr decay");
    auto* t_stp = tr->add_option("--stop-patience", stop_patience, "Rounds before early stop");
    auto* t_lrd = tr->add_option("--lr-decay", lr_decay, "Lr decay factor");
    auto* t_vf = tr->add_option("--val-fraction", val_fraction, "Validation fraction");
    auto* t_scale = tr->add_option("--scale", scale, "Target map scale");
    auto* t_wf = tr->add_option("--weight-floor", weight_floor, "Loss weight floor");
    auto* t_sigma = tr->add_option("--sigma", sigma_s, "Kernel sigmas x,y,z (mm)");
    auto* t_trunc = tr->add_option("--truncation", truncation, "Kernel truncation (sigmas)");
    auto* t_clamp = tr->add_option("--clamp", clamp_s, "Intensity clamp lo,hi (HU)");
    auto* t_sopt = tr->add_flag("--save-optimizer-state", save_opt, "Store Adam moments");
    auto* t_jobs = tr->add_option("--jobs", jobs, "Worker threads");
    tr->add_option("--config", config_path, "JSON config file (flags override)");

    auto* in = app.add_subcommand("infer", "Run the network and extract detections");
    auto* i_ck = in->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
    in->add_option("volumes", volumes, "Volume files (<name>.vol.json)");
    auto* i_manifest = in->add_option("--manifest", manifest, "Take volumes from a manifest");
    auto* i_out = in->add_option("--out", out_dir, "Output directory")->required();
    auto* i_clamp = in->add_option("--clamp", infer_clamp_s, "Clamp override lo,hi (HU)");
    auto* i_spacing = in->add_option("--spacing", infer_spacing, "Resample to this spacing (mm), 0 keeps grid");
    auto* i_voi = in->add_option("--voi", voi_s, "VOI shape x,y,z (voxels)");
    auto* i_center = in->add_option("--center", center_s, "VOI center x,y,z (mm)");
    auto* i_tf = in->add_option("--threshold-fraction", threshold_fraction, "Watershed threshold fraction");
    auto* i_mb = in->add_option("--min-basin-mass", min_basin_mass, "Minimum basin mass (kernels)");
    auto* i_conn = in->add_option("--connectivity", connectivity, "Watershed connectivity 6|18|26");
    auto* i_smooth = in->add_flag("--smoothing", smoothing, "Presmooth map with a 1-voxel Gaussian");
    auto* i_maps = in->add_flag("--save-maps", save_maps, "Also write predicted maps");
    auto* i_jobs = in->add_option("--jobs", jobs, "Volumes processed in parallel");
    in->add_option("--config", config_path, "JSON config file (flags override)");

    auto* ev = app.add_subcommand("evaluate", "Compare detections against ground truth");
    ev->add_option("--gt", gt, "Ground-truth .pts.json")->required();
    ev->add_option("--det", det, "Detections .det.json")->required();
    auto* e_out = ev->add_option("--out", out_stem, "Output stem (default: next to --det)");
    auto* e_thr = ev->add_option("--threshold-mm", threshold_mm, "Detection distance threshold");
    ev->add_option("--config", config_path, "JSON config file (flags override)");

    auto* rp = app.add_subcommand("report", "Aggregate evaluation reports");
    rp->add_option("inputs", eval_paths, "Per-volume .eval.json files")->required();
    rp->add_option("--out", out_dir, "Output directory")->required();
    rp->add_option("--config", config_path, "JSON config file (flags override)");

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the backward pass");
    gc->add_option("--levels", gc_levels, "Levels of the probe network");
    gc->add_option("--base-channels", gc_base, "Base channels of the probe network");
    gc->add_option("--shape", gc_shape, "Probe input shape x,y,z");
    gc->add_option("--seed", gc_seed, "Rng seed");
    gc->add_option("--fd-step", h, "Finite-difference step");
    gc->add_option("--weight-floor", gc_weight_floor, "Loss weight floor");
    gc->add_option("--threshold", gc_threshold, "Pass threshold on max relative error");

    try {
        app.parse(argc, argv);

        ConfigOverlay ov;
        ov.load(config_path);

        if (gen->parsed()) {
            ov.apply(g_out, "out", out_dir);
            ov.apply(g_seed, "seed", seed);
            ov.apply(g_n, "n_volumes", n_volumes);
            ov.apply(g_shape, "shape", shape_s);
            ov.apply(g_spacing, "spacing", spacing);
            ov.apply(g_smin, "seeds_min", seeds_min);
            ov.apply(g_smax, "seeds_max", seeds_max);
            ov.apply(g_cf, "cluster_fraction", cluster_fraction);
            ov.apply(g_cg, "cluster_gap_mm", cluster_gap);
            ov.apply(g_streaks, "streaks", streaks);
            ov.apply(g_noise, "noise_sd_hu", noise_sd);
            ov.apply(g_bg, "background_hu", background_s);
            ov.apply(g_shu, "seed_hu", seed_hu);
            ov.apply(g_jit, "jitter", jitter);
            ov.apply(g_jobs, "jobs", jobs);
            if (jobs <= 0) jobs = default_jobs;
            return cmd_gen_phantom(config_path, out_dir, seed, n_volumes, shape_s, spacing,
                                   seeds_min, seeds_max < 0 ? seeds_min : seeds_max,
                                   cluster_fraction, cluster_gap, streaks, noise_sd, background_s,
                                   seed_hu, jitter, jobs);
        }
        if (mk->parsed()) {
            ov.apply(m_manifest, "manifest", manifest);
            ov.apply(m_out, "out", out_dir);
            ov.apply(m_sigma, "sigma_mm", sigma_s);
            ov.apply(m_trunc, "truncation_sigmas", truncation);
            ov.apply(m_scale, "scale", scale);
            ov.apply(m_jobs, "jobs", jobs);
            if (jobs <= 0) jobs = default_jobs;
            return cmd_make_targets(config_path, manifest, out_dir, sigma_s, truncation, scale,
                                    jobs);
        }
        if (tr->parsed()) {
            ov.apply(t_manifest, "manifest", manifest);
            ov.apply(t_out, "out", out_dir);
            ov.apply(t_seed, "seed", seed);
            ov.apply(t_levels, "levels", levels);
            ov.apply(t_base, "base_channels", base_channels);
            ov.apply(t_lr, "lr", lr);
            ov.apply(t_batch, "batch", batch);
            ov.apply(t_rounds, "rounds", rounds);
            ov.apply(t_lrp, "lr_patience", lr_patience);
            ov.apply(t_stp, "stop_patience", stop_patience);
            ov.apply(t_lrd, "lr_decay", lr_decay);
            ov.apply(t_vf, "val_fraction", val_fraction);
            ov.apply(t_scale, "scale", scale);
            ov.apply(t_wf, "weight_floor", weight_floor);
            ov.apply(t_sigma, "sigma_mm", sigma_s);
            ov.apply(t_trunc, "truncation_sigmas", truncation);
            ov.apply(t_clamp, "clamp", clamp_s);
            ov.apply(t_jobs, "jobs", jobs);
            if (jobs <= 0) jobs = default_jobs;
            return cmd_train(config_path, manifest, out_dir, seed, levels, base_channels, lr,
                             batch, rounds, lr_patience, stop_patience, lr_decay, val_fraction,
                             scale, weight_floor, sigma_s, truncation, clamp_s, save_opt, jobs);
        }
        if (in->parsed()) {
            ov.apply(i_ck, "checkpoint", checkpoint);
            ov.apply(i_manifest, "manifest", manifest);
            ov.apply(i_out, "out", out_dir);
            ov.apply(i_clamp, "clamp", infer_clamp_s);
            ov.apply(i_spacing, "spacing", infer_spacing);
            ov.apply(i_voi, "voi", voi_s);
            ov.apply(i_center, "center", center_s);
            ov.apply(i_tf, "threshold_fraction", threshold_fraction);
            ov.apply(i_mb, "min_basin_mass_fraction", min_basin_mass);
            ov.apply(i_conn, "connectivity", connectivity);
            (void)i_smooth;
            (void)i_maps;
            ov.apply(i_jobs, "jobs", jobs);
            if (jobs <= 0) jobs = 1;
            return cmd_infer(config_path, checkpoint, volumes, manifest, out_dir, infer_clamp_s,
                             infer_spacing, voi_s, center_s, threshold_fraction, min_basin_mass,
                             connectivity, smoothing, save_maps, jobs);
        }
        if (ev->parsed()) {
            ov.apply(e_out, "out", out_stem);
            ov.apply(e_thr, "threshold_mm", threshold_mm);
            return cmd_evaluate(config_path, gt, det, out_stem, threshold_mm);
        }
        if (rp->parsed()) return cmd_report(config_path, eval_paths, out_dir);
        if (gc->parsed())
            return cmd_gradcheck(gc_levels, gc_base, gc_shape, gc_seed, h, gc_weight_floor,
                                 gc_threshold);
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
