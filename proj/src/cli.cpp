#include "focus/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "focus/checkpoint.hpp"
#include "focus/config.hpp"
#include "focus/criterion.hpp"
#include "focus/data_synth.hpp"
#include "focus/inference_metrics.hpp"
#include "focus/model.hpp"
#include "focus/optim.hpp"
#include "focus/png_io.hpp"
#include "focus/rng.hpp"

namespace fs = std::filesystem;

namespace focus {

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

const char* kUsage =
    "usage: focus <command> [options]\n"
    "\n"
    "commands:\n"
    "  synth        generate a synthetic train/test dataset under --out\n"
    "  train        train a model; writes loss.csv and checkpoint.bin to --out\n"
    "  eval         score a checkpoint on a dataset; writes masks + metrics\n"
    "  infer        segment one image with a checkpoint\n"
    "  inspect-pca  dump the PCA attention seed for one image\n"
    "\n"
    "options:\n"
    "  --config PATH      overlay a key=value config file\n"
    "  --seed N           override the config seed\n"
    "  --preset NAME      start from a named preset (desk | paper)\n"
    "  --out DIR          output directory\n"
    "  --checkpoint PATH  checkpoint to load (eval, infer, inspect-pca)\n"
    "  --resume PATH      checkpoint to continue training from\n"
    "  --data DIR         dataset root (train: data.train, eval: data.test)\n"
    "  --image PATH       input image (infer, inspect-pca)\n"
    "\n"
    "FOCUS_THREADS caps eval parallelism.\n";

struct Args {
    std::string command;
    std::string config_path, preset, out, checkpoint, resume, data, image;
    bool seed_set = false;
    uint64_t seed = 0;
};

Args parse_args(int argc, char** argv) {
    Args a;
    if (argc < 2) throw UsageError("missing command");
    a.command = argv[1];
    for (int i = 2; i < argc; ++i) {
        std::string flag = argv[i];
        auto value = [&]() -> std::string {
            if (i + 1 >= argc) throw UsageError(flag + " needs a value");
            return argv[++i];
        };
        if (flag == "--config") a.config_path = value();
        else if (flag == "--seed") {
            a.seed = std::stoull(value());
            a.seed_set = true;
        } else if (flag == "--preset") a.preset = value();
        else if (flag == "--out") a.out = value();
        else if (flag == "--checkpoint") a.checkpoint = value();
        else if (flag == "--resume") a.resume = value();
        else if (flag == "--data") a.data = value();
        else if (flag == "--image") a.image = value();
        else throw UsageError("unknown option " + flag);
    }
    return a;
}

RunConfig make_config(const Args& a, const std::string& base_text = "") {
    RunConfig cfg = a.preset.empty() ? RunConfig() : preset_config(a.preset);
    if (!base_text.empty()) cfg = parse_config_text(base_text, cfg);
    if (!a.config_path.empty()) load_config_file(cfg, a.config_path);
    if (a.seed_set) cfg.seed = a.seed;
    return cfg;
}

std::string need_out(const Args& a) {
    if (a.out.empty()) throw UsageError(a.command + " needs --out DIR");
    fs::create_directories(a.out);
    return a.out;
}

long eval_threads(long n_items) {
    long t = static_cast<long>(std::max(1u, std::thread::hardware_concurrency()));
    if (const char* e = std::getenv("FOCUS_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(e, &end, 10);
        if (end == e || *end != '\0' || v < 1) {
            std::fprintf(stderr, "warning: ignoring invalid FOCUS_THREADS=%s\n", e);
        } else {
            t = std::min(t, v);
        }
    }
    return std::clamp(t, 1L, std::max(1L, n_items));
}

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string json_number(double v) { return std::isfinite(v) ? format_g17(v) : "null"; }

// deterministic per-epoch shuffle; sample for global counter g is
// perm[g % n] with perm drawn from the epoch's own stream
std::vector<long> epoch_permutation(uint64_t seed, long epoch, long n) {
    std::vector<long> perm(n);
    std::iota(perm.begin(), perm.end(), 0L);
    Rng rng = named_stream(seed, "epoch" + std::to_string(epoch));
    for (long i = n - 1; i > 0; --i) {
        long j = static_cast<long>(rng.below(static_cast<uint64_t>(i + 1)));
        std::swap(perm[i], perm[j]);
    }
    return perm;
}

Tensor prepare_gt(const Tensor& mask, long s) {
    NoGrad ng;
    if (mask.dim(0) == s && mask.dim(1) == s) return mask;
    Tensor r = resize_bilinear(reshape(mask, {1, mask.dim(0), mask.dim(1)}), s, s);
    Tensor out = Tensor::zeros({s, s});
    for (long i = 0; i < s * s; ++i) out.raw()[i] = r.values()[i] > 0.5 ? 1.0 : 0.0;
    return out;
}

SynthOptions synth_options(const RunConfig& cfg) {
    SynthOptions opt;
    opt.size = cfg.image_size;
    opt.mode = cfg.synth_mode;
    opt.contrast_bound = cfg.synth_contrast_bound;
    return opt;
}

int cmd_synth(const Args& a) {
    RunConfig cfg = make_config(a);
    validate_config(cfg);
    std::string out = need_out(a);
    SynthOptions opt = synth_options(cfg);
    write_dataset((fs::path(out) / "train").string(), cfg.seed ^ hash64("split:train"),
                  cfg.synth_train, opt);
    write_dataset((fs::path(out) / "test").string(), cfg.seed ^ hash64("split:test"),
                  cfg.synth_test, opt);
    std::printf("synth: wrote %ld train / %ld test %s scenes at %ldx%ld under %s\n",
                cfg.synth_train, cfg.synth_test, cfg.synth_mode.c_str(), cfg.image_size,
                cfg.image_size, out.c_str());
    return 0;
}

int cmd_train(const Args& a) {
    RunConfig cfg = make_config(a);
    if (!a.data.empty()) cfg.data_train = a.data;
    validate_config(cfg);
    if (cfg.data_train.empty())
        throw UsageError("train needs a dataset: --data DIR or config data.train");
    std::string out = need_out(a);

    std::vector<Sample> dataset = read_dataset(cfg.data_train);
    if (dataset.empty()) throw std::runtime_error("train: dataset at " + cfg.data_train + " is empty");
    const long n = static_cast<long>(dataset.size());
    const long s = cfg.image_size;

    ParamStore ps(cfg.seed);
    FocusModel model(ps, cfg);
    AdamW opt(ps, cfg.lr, cfg.weight_decay, cfg.grad_clip);

    long start_step = 0;
    if (!a.resume.empty()) {
        LoadedCheckpoint lc = load_checkpoint(a.resume);
        restore_params(ps, lc.archive);
        opt.load(lc.archive);
        start_step = lc.meta.step;
        std::fprintf(stderr, "train: resuming from %s at step %ld\n", a.resume.c_str(),
                     start_step);
    }

    const std::string config_text = config_to_text(cfg);
    const std::string ckpt_path = (fs::path(out) / "checkpoint.bin").string();
    {
        std::ofstream cf(fs::path(out) / "config.txt");
        cf << config_text;
    }

    std::ofstream csv(fs::path(out) / "loss.csv", std::ios::app);
    if (csv.tellp() == std::ofstream::pos_type(0))
        csv << "step,total,clip,label,mask,bbox,grad_norm\n";

    LossWeights w;
    w.clip = cfg.lambda_clip;
    w.label = cfg.lambda_label;
    w.mask = cfg.lambda_mask;
    w.bbox = cfg.lambda_bbox;

    long cached_epoch = -1;
    std::vector<long> perm;
    for (long step = start_step; step < cfg.iterations; ++step) {
        Tape tape;
        Tensor total;
        double sum_clip = 0, sum_label = 0, sum_mask = 0, sum_bbox = 0;
        for (long j = 0; j < cfg.batch_size; ++j) {
            long g = step * cfg.batch_size + j;
            long epoch = g / n;
            if (epoch != cached_epoch) {
                perm = epoch_permutation(cfg.seed, epoch, n);
                cached_epoch = epoch;
            }
            const Sample& smp = dataset[perm[g % n]];
            ModelOutput mo = model.forward(smp.image);
            Targets tg = build_targets(prepare_gt(smp.mask, s), s / 4, s / 4);
            LossBreakdown lb = total_loss(mo.preds, tg, w, cfg.deep_supervision,
                                          cfg.clip_enabled ? model.refiner() : nullptr, mo.input);
            total = total.defined() ? add(total, lb.total) : lb.total;
            sum_clip += lb.clip;
            sum_label += lb.label;
            sum_mask += lb.mask;
            sum_bbox += lb.bbox;
        }
        const double bs = static_cast<double>(cfg.batch_size);
        total = mul(total, Tensor::scalar(1.0 / bs));
        double tval = total.item();
        if (!std::isfinite(tval)) {
            CheckpointMeta meta{1, step, config_text};
            save_checkpoint(ckpt_path, ps, &opt, meta);
            std::fprintf(stderr,
                         "train: non-finite loss at step %ld; saved pre-update checkpoint\n",
                         step + 1);
            return 3;
        }
        tape.backward(total);
        double norm = opt.clip_gradients();
        double recorded = cfg.grad_clip > 0.0 ? std::min(norm, cfg.grad_clip) : norm;
        opt.step();
        for (const auto& [name, t] : ps.all()) const_cast<Tensor&>(t).zero_grad();

        csv << (step + 1) << ',' << format_g17(tval) << ',' << format_g17(sum_clip / bs) << ','
            << format_g17(sum_label / bs) << ',' << format_g17(sum_mask / bs) << ','
            << format_g17(sum_bbox / bs) << ',' << format_g17(recorded) << '\n';
        csv.flush();

        if ((step + 1) % cfg.checkpoint_every == 0 || step + 1 == cfg.iterations) {
            CheckpointMeta meta{1, step + 1, config_text};
            save_checkpoint(ckpt_path, ps, &opt, meta);
        }
        if ((step + 1) % 50 == 0 || step == start_step)
            std::fprintf(stderr, "step %ld/%ld loss %.6f\n", step + 1, cfg.iterations, tval);
    }
    std::printf("train: finished %ld iterations; checkpoint at %s\n", cfg.iterations,
                ckpt_path.c_str());
    return 0;
}

struct EvalRow {
    std::string id;
    MetricsReport m;
    bool conflict = false;
};

const char* kMetricNames[] = {"mae",  "ber", "f1",        "fbeta",
                              "wfbeta", "auc", "s_measure", "e_measure"};

std::vector<double> metric_values(const MetricsReport& m) {
    return {m.mae, m.ber, m.f1, m.fbeta, m.weighted_fbeta, m.auc, m.s_measure, m.e_measure};
}

int cmd_eval(const Args& a) {
    if (a.checkpoint.empty()) throw UsageError("eval needs --checkpoint PATH");
    LoadedCheckpoint lc = load_checkpoint(a.checkpoint);
    RunConfig cfg = make_config(a, lc.meta.config_text);
    if (!a.data.empty()) cfg.data_test = a.data;
    validate_config(cfg);
    if (cfg.data_test.empty())
        throw UsageError("eval needs a dataset: --data DIR or config data.test");
    std::string out = need_out(a);
    fs::create_directories(fs::path(out) / "masks");

    std::vector<Sample> dataset = read_dataset(cfg.data_test);
    if (dataset.empty()) throw std::runtime_error("eval: dataset at " + cfg.data_test + " is empty");
    const long n = static_cast<long>(dataset.size());

    ParamStore ps(cfg.seed);
    FocusModel model(ps, cfg);
    restore_params(ps, lc.archive);

    MetricOptions mopt;
    mopt.e_variant = cfg.e_variant;
    mopt.f_variant = cfg.f_variant;

    std::vector<EvalRow> rows(n);
    std::atomic<long> next{0};
    long threads = eval_threads(n);
    auto worker = [&]() {
        for (long i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            const Sample& smp = dataset[i];
            ModelOutput mo = model.forward(smp.image);
            FuseResult fr = fuse_probs(mo.preds.back(), smp.mask.dim(0), smp.mask.dim(1));
            rows[i].id = smp.id;
            rows[i].conflict = fr.role_conflict;
            rows[i].m = compute_metrics(fr.soft, smp.mask, mopt);
            write_png_gray((fs::path(out) / "masks" / (smp.id + ".png")).string(), fr.binary);
            write_png_gray((fs::path(out) / "masks" / (smp.id + "_soft.png")).string(), fr.soft);
        }
    };
    std::vector<std::thread> pool;
    for (long t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::vector<double> mean(8, 0.0);
    long conflicts = 0, warnings = 0;
    for (const EvalRow& r : rows) {
        std::vector<double> v = metric_values(r.m);
        for (int k = 0; k < 8; ++k) mean[k] += v[k];
        conflicts += r.conflict;
        warnings += r.m.empty_gt_warning;
    }
    for (double& v : mean) v /= static_cast<double>(n);

    {
        std::ofstream csv(fs::path(out) / "metrics.csv");
        csv << "id";
        for (const char* m : kMetricNames) csv << ',' << m;
        csv << '\n';
        for (const EvalRow& r : rows) {
            csv << r.id;
            for (double v : metric_values(r.m)) csv << ',' << format_g17(v);
            csv << '\n';
        }
        csv << "mean";
        for (double v : mean) csv << ',' << format_g17(v);
        csv << '\n';
    }
    {
        std::ofstream js(fs::path(out) / "metrics.json");
        js << "{\n  \"count\": " << n << ",\n  \"images\": [\n";
        for (long i = 0; i < n; ++i) {
            js << "    {\"id\": \"" << rows[i].id << "\"";
            std::vector<double> v = metric_values(rows[i].m);
            for (int k = 0; k < 8; ++k)
                js << ", \"" << kMetricNames[k] << "\": " << json_number(v[k]);
            js << "}" << (i + 1 < n ? "," : "") << '\n';
        }
        js << "  ],\n  \"mean\": {";
        for (int k = 0; k < 8; ++k)
            js << (k ? ", " : "") << "\"" << kMetricNames[k] << "\": " << json_number(mean[k]);
        js << "}\n}\n";
    }

    if (conflicts)
        std::fprintf(stderr, "warning: %ld image(s) had both queries claim one role\n", conflicts);
    if (warnings)
        std::fprintf(stderr, "warning: %ld image(s) had a single-class ground truth\n", warnings);
    std::printf("eval: %ld images  mae %.4f  s %.4f  e %.4f  wfb %.4f\n", n, mean[0], mean[6],
                mean[7], mean[4]);
    return 0;
}

int cmd_infer(const Args& a) {
    if (a.checkpoint.empty()) throw UsageError("infer needs --checkpoint PATH");
    if (a.image.empty()) throw UsageError("infer needs --image PATH");
    LoadedCheckpoint lc = load_checkpoint(a.checkpoint);
    RunConfig cfg = make_config(a, lc.meta.config_text);
    validate_config(cfg);
    std::string out = need_out(a);

    ParamStore ps(cfg.seed);
    FocusModel model(ps, cfg);
    restore_params(ps, lc.archive);

    Tensor img = read_png(a.image);
    ModelOutput mo = model.forward(img);
    FuseResult fr = fuse_probs(mo.preds.back(), img.dim(1), img.dim(2));
    if (fr.role_conflict)
        std::fprintf(stderr, "warning: both queries claimed one role; query %ld kept foreground\n",
                     fr.fg_query);

    std::string stem = fs::path(a.image).stem().string();
    write_png_gray((fs::path(out) / (stem + "_mask.png")).string(), fr.binary);
    write_png_gray((fs::path(out) / (stem + "_soft.png")).string(), fr.soft);
    double area = std::accumulate(fr.binary.values().begin(), fr.binary.values().end(), 0.0) /
                  static_cast<double>(fr.binary.numel());
    std::printf("infer: %s -> %s_mask.png (foreground %.1f%%, query %ld)\n", a.image.c_str(),
                (fs::path(out) / stem).string().c_str(), 100.0 * area, fr.fg_query);
    return 0;
}

int cmd_inspect_pca(const Args& a) {
    if (a.image.empty()) throw UsageError("inspect-pca needs --image PATH");
    std::string base_text;
    LoadedCheckpoint lc;
    if (!a.checkpoint.empty()) {
        lc = load_checkpoint(a.checkpoint);
        base_text = lc.meta.config_text;
    }
    RunConfig cfg = make_config(a, base_text);
    validate_config(cfg);
    std::string out = need_out(a);

    ParamStore ps(cfg.seed);
    FocusModel model(ps, cfg);
    if (!a.checkpoint.empty()) restore_params(ps, lc.archive);

    Tensor img = read_png(a.image);
    ModelOutput mo = model.forward(img);
    const GroundMask& gm = mo.ground_mask;

    write_png_gray((fs::path(out) / "pca_fg.png").string(), gm.fg);
    long gh = cfg.image_size / cfg.patch, gw = gh;
    Tensor scores = Tensor::zeros({gh, gw});
    double lo = 0.0, hi = 0.0;
    for (double v : gm.scores) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (long i = 0; i < gh * gw; ++i)
        scores.raw()[i] = hi > lo ? (gm.scores[i] - lo) / (hi - lo) : 0.5;
    write_png_gray((fs::path(out) / "pca_scores.png").string(), scores);

    double frac = std::accumulate(gm.fg.values().begin(), gm.fg.values().end(), 0.0) /
                  static_cast<double>(gm.fg.numel());
    std::printf("inspect-pca: %s  tokens %ldx%ld  seed grid %ldx%ld  foreground %.1f%%%s\n",
                a.image.c_str(), gh, gw, gm.fg.dim(0), gm.fg.dim(1), 100.0 * frac,
                gm.degenerate ? "  (degenerate: constant features, mask all-visible)" : "");
    return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
    try {
        Args a = parse_args(argc, argv);
        if (a.command == "synth") return cmd_synth(a);
        if (a.command == "train") return cmd_train(a);
        if (a.command == "eval") return cmd_eval(a);
        if (a.command == "infer") return cmd_infer(a);
        if (a.command == "inspect-pca") return cmd_inspect_pca(a);
        if (a.command == "help" || a.command == "--help" || a.command == "-h") {
            std::fputs(kUsage, stdout);
            return 0;
        }
        throw UsageError("unknown command " + a.command);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n\n%s", e.what(), kUsage);
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace focus
