#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <thread>

#include <CLI11.hpp>

#include "usfg/checkpoint.hpp"
#include "usfg/cli.hpp"
#include "usfg/dataset.hpp"
#include "usfg/evaluation.hpp"
#include "usfg/image.hpp"
#include "usfg/postprocess.hpp"
#include "usfg/synthvideo.hpp"
#include "usfg/teacher.hpp"
#include "usfg/trainer.hpp"

namespace usfg::cli {

namespace fs = std::filesystem;

namespace {

// All tunables, mirrored as --section.key flags and config-file keys.
struct Settings {
    uint64_t seed = 0;
    int workers = 1;

    SynthConfig synth;
    int holdout = 5;

    TeacherConfig teacher;
    std::string combine = "geometric";

    double keep_fraction = 0.10;
    int crops = 4;

    TrainConfig train;
    BoxConfig boxes;
    int eval_threshold = 128;
    int net_input = 128;
};

// Deterministic parallel map: item i's result depends only on i, results are
// merged in index order, so the worker count never changes any output.
template <typename Fn>
void parallel_for(size_t n, int workers, Fn fn) {
    workers = std::max(1, workers);
    if (workers == 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    size_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                size_t lo = w * chunk, hi = std::min(n, lo + chunk);
                for (size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::string pad4(int n) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d", n);
    return buf;
}

void require_exists(const std::string& path, const std::string& what) {
    if (!fs::exists(path)) throw ConfigError(what + " not found: " + path);
}

// Groups manifest entries into videos, frames ordered by frame_index,
// video order by first appearance.
std::vector<std::vector<size_t>> group_by_video(const std::vector<DatasetEntry>& entries) {
    std::vector<std::vector<size_t>> groups;
    std::map<std::string, size_t> index;
    for (size_t i = 0; i < entries.size(); ++i) {
        auto [it, inserted] = index.emplace(entries[i].video_id, groups.size());
        if (inserted) groups.emplace_back();
        groups[it->second].push_back(i);
    }
    for (auto& g : groups)
        std::sort(g.begin(), g.end(), [&](size_t a, size_t b) {
            return entries[a].frame_index < entries[b].frame_index;
        });
    return groups;
}

// --- stages ---

void stage_synth(const Settings& s, const std::string& out_dir,
                 const std::string& manifest) {
    SynthConfig cfg = s.synth;
    cfg.seed = s.seed;
    auto videos = generate(cfg);
    fs::create_directories(fs::path(manifest).parent_path().empty()
                               ? "."
                               : fs::path(manifest).parent_path().string());
    write_corpus(videos, out_dir, manifest);
}

void stage_teach(const Settings& s, const std::string& manifest_in,
                 const std::string& masks_dir, const std::string& manifest_out) {
    require_exists(manifest_in, "input manifest");
    std::vector<DatasetEntry> entries = read_manifest(manifest_in);
    auto groups = group_by_video(entries);

    std::vector<std::vector<std::string>> warnings(groups.size());
    parallel_for(groups.size(), s.workers, [&](size_t g) {
        VideoSequence video;
        video.video_id = entries[groups[g][0]].video_id;
        for (size_t idx : groups[g]) video.frames.push_back(read_image(entries[idx].image_path));
        DiscoverResult result = discover(video, s.teacher);
        warnings[g] = result.warnings;
        fs::create_directories(fs::path(masks_dir) / video.video_id);
        for (size_t f = 0; f < groups[g].size(); ++f) {
            DatasetEntry& e = entries[groups[g][f]];
            std::string path = (fs::path(masks_dir) / video.video_id /
                                ("mask_" + pad4(static_cast<int>(e.frame_index)) + ".pgm"))
                                   .string();
            write_mask(path, result.masks[f]);
            e.mask_path = path;
        }
    });
    for (const auto& ws : warnings)
        for (const auto& w : ws) std::cerr << "teach: " << w << "\n";
    write_manifest(entries, manifest_out);
}

void stage_select(const Settings& s, const std::string& manifest_in,
                  const std::string& manifest_out) {
    require_exists(manifest_in, "input manifest");
    std::vector<DatasetEntry> entries = read_manifest(manifest_in);
    parallel_for(entries.size(), s.workers, [&](size_t i) {
        entries[i].score = score_mask(read_mask(entries[i].mask_path));
    });
    write_manifest(select_top(std::move(entries), s.keep_fraction), manifest_out);
}

void stage_augment(const Settings& s, const std::string& manifest_in,
                   const std::string& out_dir, const std::string& manifest_out) {
    require_exists(manifest_in, "input manifest");
    std::vector<DatasetEntry> entries = read_manifest(manifest_in);
    fs::create_directories(out_dir);
    AugmentConfig acfg;
    acfg.n_random = s.crops;

    std::vector<std::vector<DatasetEntry>> produced(entries.size());
    parallel_for(entries.size(), s.workers, [&](size_t i) {
        const DatasetEntry& e = entries[i];
        Image image = read_image(e.image_path);
        SoftMask mask = read_mask(e.mask_path);
        Rng rng = derive_stream(s.seed, e.video_id, static_cast<uint64_t>(e.frame_index));
        auto crops = augment_crops(image, mask, rng, s.crops, acfg);
        for (size_t c = 0; c < crops.size(); ++c) {
            std::string stem = e.video_id + "_" + pad4(static_cast<int>(e.frame_index)) +
                               "_c" + std::to_string(c);
            DatasetEntry out;
            out.video_id = e.video_id;
            out.frame_index = e.frame_index * 100 + static_cast<int64_t>(c);
            out.image_path = (fs::path(out_dir) / (stem + ".ppm")).string();
            out.mask_path = (fs::path(out_dir) / (stem + ".pgm")).string();
            out.score = e.score;
            out.extra["source_frame"] = e.frame_index;
            out.extra["crop"] = c;
            write_image(out.image_path, crops[c].first);
            write_mask(out.mask_path, crops[c].second);
            produced[i].push_back(std::move(out));
        }
    });
    std::vector<DatasetEntry> flat;
    for (auto& p : produced)
        for (auto& e : p) flat.push_back(std::move(e));
    write_manifest(flat, manifest_out);
}

std::vector<TrainingExample> load_examples(const std::vector<DatasetEntry>& entries,
                                           int net_input, int workers) {
    std::vector<TrainingExample> examples(entries.size());
    parallel_for(entries.size(), workers, [&](size_t i) {
        examples[i].input = to_student_channels(read_image(entries[i].image_path), net_input);
        examples[i].target = read_mask(entries[i].mask_path);
    });
    return examples;
}

void stage_train(const Settings& s, const std::string& manifest_in,
                 const std::string& checkpoint_out, const std::string& loss_log) {
    require_exists(manifest_in, "input manifest");
    std::vector<DatasetEntry> entries = read_manifest(manifest_in);
    if (entries.empty()) throw ConfigError("train: empty manifest " + manifest_in);
    std::vector<TrainingExample> examples =
        load_examples(entries, s.net_input, s.workers);

    TrainConfig cfg = s.train;
    cfg.seed = s.seed;
    cfg.workers = s.workers;
    if (!checkpoint_out.empty()) {
        fs::path dir = fs::path(checkpoint_out).parent_path();
        if (!dir.empty()) fs::create_directories(dir);
        cfg.checkpoint_dir = dir.empty() ? "." : dir.string();
    }
    TrainResult result = train(examples, cfg);
    save_checkpoint(result.params, &result.adam, checkpoint_out);
    if (!loss_log.empty()) write_loss_log(result.loss_log, loss_log);
}

void stage_infer(const Settings& s, const std::string& manifest_in,
                 const std::string& checkpoint_path, const std::string& masks_dir,
                 const std::string& manifest_out) {
    require_exists(manifest_in, "input manifest");
    require_exists(checkpoint_path, "checkpoint");
    std::vector<DatasetEntry> entries = read_manifest(manifest_in);
    Checkpoint ck = load_checkpoint(checkpoint_path);
    fs::create_directories(masks_dir);
    set_compute_threads(1);
    parallel_for(entries.size(), s.workers, [&](size_t i) {
        DatasetEntry& e = entries[i];
        ChannelStack input = to_student_channels(read_image(e.image_path), s.net_input);
        SoftMask mask = predict_mask(ck.params, input);
        std::string path = (fs::path(masks_dir) /
                            (e.video_id + "_" + pad4(static_cast<int>(e.frame_index)) + ".pgm"))
                               .string();
        write_mask(path, mask);
        e.mask_path = path;
    });
    write_manifest(entries, manifest_out);
}

void stage_boxes(const Settings& s, const std::string& manifest_in,
                 const std::string& manifest_out) {
    require_exists(manifest_in, "input manifest");
    std::vector<DatasetEntry> entries = read_manifest(manifest_in);
    parallel_for(entries.size(), s.workers, [&](size_t i) {
        DatasetEntry& e = entries[i];
        Image image = read_image(e.image_path);
        SoftMask mask = read_mask(e.mask_path);
        e.pred_boxes = fit_boxes(mask, image.width, image.height, s.boxes);
    });
    write_manifest(entries, manifest_out);
}

EvalReport eval_maxf(const Settings& s, const std::vector<DatasetEntry>& entries) {
    std::vector<SoftMask> masks(entries.size());
    std::vector<std::vector<BoundingBox>> gts(entries.size());
    parallel_for(entries.size(), s.workers, [&](size_t i) {
        Image image = read_image(entries[i].image_path);
        masks[i] = resize_bilinear(read_mask(entries[i].mask_path), image.width, image.height);
        if (entries[i].gt_box) gts[i].push_back(*entries[i].gt_box);
    });
    return max_f_measure(masks, gts);
}

EvalReport eval_corloc(const Settings& s, const std::vector<DatasetEntry>& entries) {
    (void)s;
    std::vector<std::vector<BoundingBox>> preds(entries.size()), gts(entries.size());
    for (size_t i = 0; i < entries.size(); ++i) {
        preds[i] = entries[i].pred_boxes;
        if (entries[i].gt_box) gts[i].push_back(*entries[i].gt_box);
    }
    return corloc(preds, gts);
}

EvalReport eval_pixel(const Settings& s, const std::vector<DatasetEntry>& entries) {
    EvalReport report;
    report.metric = "pixel";
    report.convention = "mask upsampled to frame size, threshold >= " +
                        std::to_string(s.eval_threshold) +
                        "; value is mean Jaccard; details carry accuracy/precision/recall";
    std::vector<PixelMetrics> per(entries.size());
    std::vector<uint8_t> ok(entries.size(), 0);
    parallel_for(entries.size(), s.workers, [&](size_t i) {
        if (!entries[i].gt_mask_path) return;
        SoftMask gt = read_mask(*entries[i].gt_mask_path);
        SoftMask pred = resize_bilinear(read_mask(entries[i].mask_path), gt.width, gt.height);
        per[i] = pixel_metrics(threshold_mask(pred, s.eval_threshold),
                               threshold_mask(gt, 128));
        ok[i] = 1;
    });
    double acc = 0, prec = 0, rec = 0, jac = 0;
    size_t n = 0;
    for (size_t i = 0; i < entries.size(); ++i) {
        if (!ok[i]) {
            ++report.skipped;
            continue;
        }
        acc += per[i].accuracy;
        prec += per[i].precision;
        rec += per[i].recall;
        jac += per[i].jaccard;
        ++n;
    }
    report.frames = n;
    if (n > 0) {
        report.value = jac / n;
        report.details = {{"accuracy", acc / n},
                          {"precision", prec / n},
                          {"recall", rec / n},
                          {"jaccard", jac / n}};
    }
    return report;
}

void write_report(const EvalReport& report, const std::string& path) {
    if (path.empty()) return;
    fs::path dir = fs::path(path).parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << report.to_json() << "\n";
}

void print_report(const EvalReport& report) {
    std::cout << report.metric << ": " << report.value << "  (frames=" << report.frames
              << ", skipped=" << report.skipped << ")\n";
    for (const auto& [k, v] : report.details) std::cout << "  " << k << " = " << v << "\n";
    for (const auto& w : report.warnings) std::cerr << "eval: " << w << "\n";
}

void stage_eval(const Settings& s, const std::string& manifest_in, const std::string& metric,
                const std::string& report_path) {
    require_exists(manifest_in, "input manifest");
    std::vector<DatasetEntry> entries = read_manifest(manifest_in);
    EvalReport report;
    if (metric == "maxf")
        report = eval_maxf(s, entries);
    else if (metric == "corloc")
        report = eval_corloc(s, entries);
    else if (metric == "pixel")
        report = eval_pixel(s, entries);
    else
        throw ConfigError("eval: unknown metric '" + metric + "'");
    print_report(report);
    write_report(report, report_path);
}

void stage_pipeline(const Settings& s, const std::string& out_dir) {
    fs::create_directories(out_dir);
    fs::path root(out_dir);
    auto p = [&](const std::string& rel) { return (root / rel).string(); };

    stage_synth(s, p("corpus"), p("corpus.jsonl"));
    stage_teach(s, p("corpus.jsonl"), p("teacher_masks"), p("teacher.jsonl"));

    // Hold out the last `holdout` videos for evaluation.
    std::vector<DatasetEntry> all = read_manifest(p("teacher.jsonl"));
    std::set<std::string> ids;
    for (const auto& e : all) ids.insert(e.video_id);
    std::set<std::string> holdout_ids;
    for (auto it = ids.rbegin(); it != ids.rend() &&
                                 holdout_ids.size() < static_cast<size_t>(s.holdout);
         ++it)
        holdout_ids.insert(*it);
    std::vector<DatasetEntry> train_set, holdout_set;
    for (auto& e : all)
        (holdout_ids.count(e.video_id) ? holdout_set : train_set).push_back(e);
    if (train_set.empty() || holdout_set.empty())
        throw ConfigError("pipeline: need both training and held-out videos");
    write_manifest(train_set, p("teacher_train.jsonl"));
    write_manifest(holdout_set, p("teacher_holdout.jsonl"));

    stage_select(s, p("teacher_train.jsonl"), p("selected.jsonl"));
    stage_augment(s, p("selected.jsonl"), p("augmented"), p("augmented.jsonl"));
    stage_train(s, p("augmented.jsonl"), p("checkpoints/student.usfg"), p("loss.csv"));
    stage_infer(s, p("teacher_holdout.jsonl"), p("checkpoints/student.usfg"),
                p("student_masks"), p("student_holdout.jsonl"));
    stage_boxes(s, p("student_holdout.jsonl"), p("student_boxed.jsonl"));

    std::cout << "teacher (held-out) ";
    EvalReport teacher_maxf = eval_maxf(s, holdout_set);
    print_report(teacher_maxf);
    write_report(teacher_maxf, p("reports/teacher_maxf.json"));

    std::vector<DatasetEntry> student_entries = read_manifest(p("student_holdout.jsonl"));
    std::cout << "student (held-out) ";
    EvalReport student_maxf = eval_maxf(s, student_entries);
    print_report(student_maxf);
    write_report(student_maxf, p("reports/student_maxf.json"));

    std::vector<DatasetEntry> boxed = read_manifest(p("student_boxed.jsonl"));
    EvalReport student_corloc = eval_corloc(s, boxed);
    print_report(student_corloc);
    write_report(student_corloc, p("reports/student_corloc.json"));

    EvalReport student_pixel = eval_pixel(s, student_entries);
    print_report(student_pixel);
    write_report(student_pixel, p("reports/student_pixel.json"));
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"unsupervised foreground segmentation pipeline"};
    app.require_subcommand(1);
    app.set_config("--config")->configurable(false);

    Settings s;
    app.add_option("--seed", s.seed, "global seed for all stochastic behavior");
    app.add_option("--workers", s.workers, "worker threads (outputs are independent of N)");

    app.add_option("--synth.videos", s.synth.videos);
    app.add_option("--synth.frames", s.synth.frames_per_video);
    app.add_option("--synth.frame-size", s.synth.frame_w)
        ->each([&](const std::string& v) { s.synth.frame_h = std::stoi(v); });
    app.add_option("--synth.noise-sigma", s.synth.noise_sigma);
    app.add_option("--synth.area-min", s.synth.area_frac_min);
    app.add_option("--synth.area-max", s.synth.area_frac_max);
    app.add_option("--synth.amplitude", s.synth.amplitude_frac);
    app.add_option("--synth.holdout", s.holdout);
    auto* hard_tail_opt = app.add_option("--synth.hard-tail", s.synth.hard_tail);
    auto* hard_amp_opt = app.add_option("--synth.hard-amplitude", s.synth.hard_amplitude_scale);

    app.add_option("--teacher.work-size", s.teacher.work_w)
        ->each([&](const std::string& v) { s.teacher.work_h = std::stoi(v); });
    app.add_option("--teacher.k", s.teacher.k);
    app.add_option("--teacher.max-fit-frames", s.teacher.max_fit_frames);
    app.add_option("--teacher.sigma", s.teacher.smooth_sigma);
    app.add_option("--teacher.fg-percent", s.teacher.fg_seed_percent);
    app.add_option("--teacher.bg-percent", s.teacher.bg_seed_percent);
    app.add_option("--teacher.refine-iters", s.teacher.refine_iters);
    app.add_option("--teacher.combine", s.combine)
        ->check(CLI::IsMember({"geometric", "error", "color"}));

    app.add_option("--select.keep-fraction", s.keep_fraction);
    app.add_option("--augment.crops", s.crops);

    app.add_option("--train.preset", s.train.preset)
        ->check(CLI::IsMember({"desk", "paper"}));
    app.add_option("--train.batch", s.train.batch);
    auto* train_steps_opt = app.add_option("--train.steps", s.train.steps);
    app.add_option("--train.lr", s.train.lr);
    app.add_option("--train.checkpoint-every", s.train.checkpoint_every);

    app.add_option("--boxes.threshold-rel", s.boxes.threshold_rel);
    app.add_option("--boxes.min-area-frac", s.boxes.min_area_frac);
    app.add_option("--eval.threshold", s.eval_threshold);

    std::string manifest_in, manifest_out, dir_a, checkpoint, loss_log, metric = "maxf",
                                                                       report_path;

    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    synth->fallthrough();
    synth->add_option("--out-dir", dir_a)->required();
    synth->add_option("--manifest", manifest_out)->required();

    auto* teach = app.add_subcommand("teach", "run the video discoverer");
    teach->fallthrough();
    teach->add_option("--manifest", manifest_in)->required();
    teach->add_option("--masks-dir", dir_a)->required();
    teach->add_option("--out-manifest", manifest_out)->required();

    auto* select = app.add_subcommand("select", "score masks and keep the top fraction");
    select->fallthrough();
    select->add_option("--manifest", manifest_in)->required();
    select->add_option("--out-manifest", manifest_out)->required();
    select->add_option("--keep-fraction", s.keep_fraction);

    auto* augment = app.add_subcommand("augment", "scale-and-crop augmentation");
    augment->fallthrough();
    augment->add_option("--manifest", manifest_in)->required();
    augment->add_option("--out-dir", dir_a)->required();
    augment->add_option("--out-manifest", manifest_out)->required();

    auto* train_cmd = app.add_subcommand("train", "fit the student network");
    train_cmd->fallthrough();
    train_cmd->add_option("--manifest", manifest_in)->required();
    train_cmd->add_option("--checkpoint", checkpoint)->required();
    train_cmd->add_option("--loss-log", loss_log);

    auto* infer = app.add_subcommand("infer", "predict soft masks with the student");
    infer->fallthrough();
    infer->add_option("--manifest", manifest_in)->required();
    infer->add_option("--checkpoint", checkpoint)->required();
    infer->add_option("--masks-dir", dir_a)->required();
    infer->add_option("--out-manifest", manifest_out)->required();

    auto* boxes = app.add_subcommand("boxes", "threshold masks and fit tight boxes");
    boxes->fallthrough();
    boxes->add_option("--manifest", manifest_in)->required();
    boxes->add_option("--out-manifest", manifest_out)->required();

    auto* eval = app.add_subcommand("eval", "evaluate a manifest");
    eval->fallthrough();
    eval->add_option("--manifest", manifest_in)->required();
    eval->add_option("--metric", metric)->check(CLI::IsMember({"maxf", "corloc", "pixel"}));
    eval->add_option("--report", report_path);

    auto* pipeline = app.add_subcommand("pipeline", "run every stage end to end");
    pipeline->fallthrough();
    pipeline->add_option("--out-dir", dir_a)->required();

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            std::cout << app.help();
            return 0;
        }
        std::cerr << e.what() << "\n" << app.help();
        return 1;
    }

    if (pipeline->parsed()) {
        // Calibrated pipeline defaults. The held-out tail gets low-motion
        // videos (hard for the subspace teacher, routine for the student) and
        // the distillation run is short; explicit flags always win.
        if (!hard_tail_opt->count()) s.synth.hard_tail = s.holdout;
        if (!hard_amp_opt->count()) s.synth.hard_amplitude_scale = 0.25;
        if (!train_steps_opt->count()) s.train.steps = 300;
    }

    if (s.combine == "error")
        s.teacher.combine_mode = TeacherConfig::Combine::error_only;
    else if (s.combine == "color")
        s.teacher.combine_mode = TeacherConfig::Combine::color_only;

    try {
        if (synth->parsed()) stage_synth(s, dir_a, manifest_out);
        else if (teach->parsed()) stage_teach(s, manifest_in, dir_a, manifest_out);
        else if (select->parsed()) stage_select(s, manifest_in, manifest_out);
        else if (augment->parsed()) stage_augment(s, manifest_in, dir_a, manifest_out);
        else if (train_cmd->parsed()) stage_train(s, manifest_in, checkpoint, loss_log);
        else if (infer->parsed())
            stage_infer(s, manifest_in, checkpoint, dir_a, manifest_out);
        else if (boxes->parsed()) stage_boxes(s, manifest_in, manifest_out);
        else if (eval->parsed()) stage_eval(s, manifest_in, metric, report_path);
        else if (pipeline->parsed()) stage_pipeline(s, dir_a);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace usfg::cli
