#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pspl/parallel.hpp"
#include "pspl/train.hpp"

namespace fs = std::filesystem;
using namespace pspl;

namespace {

// Exit codes: 0 ok, 1 runtime failure, 2 bad invocation.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string trimmed(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::map<std::string, std::string> read_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config '" + path + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trimmed(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = trimmed(line.substr(0, eq));
        const std::string value = trimmed(line.substr(eq + 1));
        if (key.empty())
            throw UsageError(path + ":" + std::to_string(lineno) + ": empty key");
        kv[key] = value;
    }
    return kv;
}

long long parse_ll(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    long long r = 0;
    try {
        r = std::stoll(v, &used);
    } catch (const std::exception&) {
        used = std::string::npos;
    }
    if (used != v.size()) throw UsageError("config key '" + key + "': bad integer '" + v + "'");
    return r;
}

double parse_d(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double r = 0.0;
    try {
        r = std::stod(v, &used);
    } catch (const std::exception&) {
        used = std::string::npos;
    }
    if (used != v.size()) throw UsageError("config key '" + key + "': bad number '" + v + "'");
    return r;
}

bool parse_b(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw UsageError("config key '" + key + "': bad boolean '" + v + "'");
}

// Config-file overlay: command-line flags win, file fills the rest.
struct Bindings {
    struct Entry {
        CLI::Option* opt;
        std::function<void(const std::string&, const std::string&)> set;
    };
    std::map<std::string, Entry> entries;

    void apply(const std::string& path) const {
        for (const auto& [key, value] : read_config(path)) {
            const auto it = entries.find(key);
            if (it == entries.end()) throw UsageError("unknown config key '" + key + "'");
            if (it->second.opt->count() > 0) continue;
            it->second.set(key, value);
        }
    }
};

WeightedLossKind parse_loss(const std::string& v) {
    if (v == "l1" || v == "L1") return WeightedLossKind::L1;
    if (v == "l2" || v == "L2") return WeightedLossKind::L2;
    throw UsageError("loss must be l1 or l2, got '" + v + "'");
}

// Shared train/bench hyperparameters, seeded from different defaults.
struct HyperFlags {
    int epochs, batch, patch_size, scale, epoch_length, width, validation_interval;
    double gamma, mu, alpha, beta, lr, range;
    std::uint64_t seed;
    std::string loss = "l1";

    void init(const TrainConfig& cfg, const PatchDataset& ds) {
        epochs = cfg.epochs;
        batch = cfg.batch;
        patch_size = ds.patch_size;
        scale = ds.scale;
        epoch_length = ds.epoch_length;
        width = cfg.model_width;
        validation_interval = cfg.validation_interval;
        gamma = cfg.schedule.gamma;
        mu = cfg.schedule.mu;
        alpha = cfg.schedule.alpha;
        beta = cfg.schedule.beta;
        lr = cfg.learning_rate;
        range = cfg.ssim.dynamic_range;
        seed = cfg.seed;
        loss = cfg.loss == WeightedLossKind::L2 ? "l2" : "l1";
    }

    void add_options(CLI::App* sub, Bindings& b) {
        auto bind_i = [&](const char* flag, int& ref, const char* help) {
            b.entries[flag + 2] = {sub->add_option(flag, ref, help),
                                   [&ref](const std::string& k, const std::string& v) {
                                       ref = static_cast<int>(parse_ll(k, v));
                                   }};
        };
        auto bind_f = [&](const char* flag, double& ref, const char* help) {
            b.entries[flag + 2] = {sub->add_option(flag, ref, help),
                                   [&ref](const std::string& k, const std::string& v) {
                                       ref = parse_d(k, v);
                                   }};
        };
        bind_i("--epochs", epochs, "epochs to run");
        bind_i("--batch", batch, "patches per update");
        bind_i("--patch-size", patch_size, "HR patch edge in pixels");
        bind_i("--scale", scale, "upscaling factor");
        bind_i("--epoch-length", epoch_length, "patches per epoch");
        bind_i("--width", width, "hidden conv channels");
        bind_i("--validation-interval", validation_interval, "epochs between validations");
        bind_f("--gamma", gamma, "attention amplitude");
        bind_f("--mu", mu, "attention center in similarity space");
        bind_f("--alpha", alpha, "attention width growth per step");
        bind_f("--beta", beta, "attention width offset");
        bind_f("--lr", lr, "Adam learning rate");
        bind_f("--range", range, "dynamic range L for SSIM");
        b.entries["seed"] = {sub->add_option("--seed", seed, "RNG seed"),
                             [this](const std::string& k, const std::string& v) {
                                 seed = static_cast<std::uint64_t>(parse_ll(k, v));
                             }};
        b.entries["loss"] = {sub->add_option("--loss", loss, "l1 or l2"),
                             [this](const std::string& k, const std::string& v) {
                                 (void)k;
                                 parse_loss(v);
                                 loss = v;
                             }};
    }

    TrainConfig to_config(bool pspl) const {
        TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.batch = batch;
        cfg.loss = parse_loss(loss);
        cfg.pspl_enabled = pspl;
        cfg.schedule.gamma = gamma;
        cfg.schedule.mu = mu;
        cfg.schedule.alpha = alpha;
        cfg.schedule.beta = beta;
        cfg.learning_rate = lr;
        cfg.seed = seed;
        cfg.validation_interval = validation_interval;
        cfg.model_width = width;
        cfg.ssim.dynamic_range = range;
        return cfg;
    }
};

std::vector<ImageGrid> load_image_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("'" + dir + "' is not a directory");
    std::vector<std::string> paths;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png")
            paths.push_back(e.path().string());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw std::runtime_error("no .png files in '" + dir + "'");
    std::vector<ImageGrid> images;
    for (const std::string& p : paths) {
        ImageGrid g = load_png(p);
        for (double& v : g.data) v /= 255.0;
        g.dynamic_range = 1.0;
        images.push_back(std::move(g));
    }
    return images;
}

void print_kv(const char* key, double value) { std::printf("%s=%.6f\n", key, value); }

int run_app(int argc, char** argv) {
    CLI::App app{"attention-scheduled SISR trainer"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "train a model on an HR image directory");
    HyperFlags tf;
    {
        TrainConfig d;
        PatchDataset pd;
        tf.init(d, pd);
    }
    Bindings tb;
    std::string t_data, t_val, t_csv, t_ckpt, t_config;
    bool t_pspl = false, t_no_timing = false;
    train->add_option("--data", t_data, "directory of HR training PNGs")->required();
    train->add_option("--val", t_val, "directory of validation PNGs");
    train->add_option("--csv", t_csv, "write per-epoch records here");
    train->add_option("--checkpoint", t_ckpt, "write the final model here");
    train->add_option("--config", t_config, "key=value config file (flags win)");
    tb.entries["pspl"] = {train->add_flag("--pspl", t_pspl, "enable attention weighting"),
                          [&t_pspl](const std::string& k, const std::string& v) {
                              t_pspl = parse_b(k, v);
                          }};
    train->add_flag("--no-timing", t_no_timing, "record 0.0 in the seconds column");
    tf.add_options(train, tb);
    train->callback([&] {
        if (!t_config.empty()) tb.apply(t_config);
        const TrainConfig cfg = tf.to_config(t_pspl);
        const PatchDataset ds = PatchDataset::from_directory(t_data, tf.patch_size, tf.scale,
                                                             tf.seed, tf.epoch_length);
        std::vector<ImageGrid> val;
        if (!t_val.empty()) val = load_image_dir(t_val);
        std::fprintf(stderr, "train: %zu images, %zu val, %d epochs, pspl=%d, threads=%d\n",
                     ds.images.size(), val.size(), cfg.epochs, cfg.pspl_enabled ? 1 : 0,
                     worker_threads());
        SrModel model;
        const auto records = run_training(cfg, ds, val, !t_no_timing, &model);
        if (!t_csv.empty()) write_records_csv(records, t_csv);
        if (!t_ckpt.empty()) save_checkpoint(model, t_ckpt);
        const TrainRecord& last = records.back();
        print_kv("final_loss", last.mean_loss);
        print_kv("final_psnr", last.psnr_db);
        print_kv("final_ssim", last.mean_ssim);
    });

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on an image directory");
    std::string e_ckpt, e_data;
    double e_range = 1.0;
    ev->add_option("--checkpoint", e_ckpt, "model checkpoint")->required();
    ev->add_option("--data", e_data, "directory of PNGs")->required();
    ev->add_option("--range", e_range, "dynamic range L for SSIM");
    ev->callback([&] {
        const SrModel model = load_checkpoint(e_ckpt);
        const auto images = load_image_dir(e_data);
        SsimConfig scfg;
        scfg.dynamic_range = e_range;
        const EvalResult r = evaluate(model, images, model.scale, scfg);
        print_kv("psnr", r.psnr_db);
        print_kv("ssim", r.mean_ssim);
    });

    // bench: paired runs differing only in the attention flag.
    auto* bench = app.add_subcommand("bench", "run the convergence ablation pair");
    HyperFlags bf;
    bf.init(toy_benchmark_config(0), PatchDataset{});
    Bindings bb;
    std::string b_data, b_val, b_csv_base, b_csv_treat, b_config;
    bool b_control = false, b_no_timing = false;
    int b_threshold_epoch = BenchOptions{}.threshold_epoch;
    double b_target = 0.0;
    bench->add_option("--data", b_data, "directory of HR training PNGs")->required();
    bench->add_option("--val", b_val, "directory of validation PNGs")->required();
    bench->add_option("--csv-baseline", b_csv_base, "baseline records CSV");
    bench->add_option("--csv-treatment", b_csv_treat, "treatment records CSV");
    bench->add_option("--config", b_config, "key=value config file (flags win)");
    bench->add_flag("--control", b_control, "disable attention on both runs");
    bench->add_flag("--no-timing", b_no_timing, "record 0.0 in the seconds column");
    auto* b_thr =
        bench->add_option("--threshold-epoch", b_threshold_epoch, "baseline epoch setting the bar");
    auto* b_tgt = bench->add_option("--target-psnr", b_target, "fixed PSNR bar instead");
    bf.add_options(bench, bb);
    bench->callback([&] {
        if (!b_config.empty()) bb.apply(b_config);
        const TrainConfig base = bf.to_config(false);
        const TrainConfig treat = bf.to_config(!b_control);
        const PatchDataset ds = PatchDataset::from_directory(b_data, bf.patch_size, bf.scale,
                                                             bf.seed, bf.epoch_length);
        const auto val = load_image_dir(b_val);
        BenchOptions opts;
        opts.threshold_epoch = b_threshold_epoch;
        opts.use_fixed_target = b_tgt->count() > 0;
        opts.target_psnr = b_target;
        opts.timing = !b_no_timing;
        (void)b_thr;
        std::fprintf(stderr, "bench: %zu images, %zu val, %d epochs x2, threads=%d\n",
                     ds.images.size(), val.size(), base.epochs, worker_threads());
        const BenchReport rep = run_benchmark(base, treat, ds, val, opts);
        if (!b_csv_base.empty()) write_records_csv(rep.baseline, b_csv_base);
        if (!b_csv_treat.empty()) write_records_csv(rep.treatment, b_csv_treat);
        print_kv("threshold_psnr", rep.threshold_psnr);
        std::printf("baseline_epochs=%d\n", rep.baseline_epochs);
        std::printf("treatment_epochs=%d\n", rep.treatment_epochs);
        print_kv("ratio", rep.ratio);
        print_kv("baseline_final_psnr", rep.baseline.back().psnr_db);
        print_kv("treatment_final_psnr", rep.treatment.back().psnr_db);
    });

    // ssim-map
    auto* sm = app.add_subcommand("ssim-map", "per-pixel similarity map of two PNGs");
    std::string s_sr, s_hr, s_out;
    double s_range = 0.0;
    sm->add_option("--sr", s_sr, "reconstructed PNG")->required();
    sm->add_option("--hr", s_hr, "reference PNG")->required();
    sm->add_option("--out", s_out, "write the map as PFM");
    auto* s_range_opt = sm->add_option("--range", s_range, "dynamic range L (default: image's)");
    sm->callback([&] {
        const ImageGrid sr = load_png(s_sr);
        const ImageGrid hr = load_png(s_hr);
        SsimConfig cfg;
        cfg.dynamic_range = s_range_opt->count() > 0 ? s_range : sr.dynamic_range;
        const ImageGrid map = ssim_map(sr, hr, cfg);
        if (!s_out.empty()) save_pfm(map, s_out);
        double sum = 0.0;
        for (double v : map.data) sum += v;
        print_kv("mean_ssim", sum / static_cast<double>(map.data.size()));
    });

    // attn-map
    auto* am = app.add_subcommand("attn-map", "attention weights for a similarity map");
    std::string a_sim, a_out;
    long a_step = 1;
    AttentionSchedule a_sched;
    am->add_option("--similarity", a_sim, "similarity map PFM")->required();
    am->add_option("--step", a_step, "1-based schedule step")->required();
    am->add_option("--gamma", a_sched.gamma, "attention amplitude");
    am->add_option("--mu", a_sched.mu, "attention center");
    am->add_option("--alpha", a_sched.alpha, "width growth per step");
    am->add_option("--beta", a_sched.beta, "width offset");
    am->add_option("--out", a_out, "write the weights as PFM");
    am->callback([&] {
        const ImageGrid sim = load_pfm(a_sim);
        const ImageGrid map = attention_map(sim, a_sched, a_step);
        if (!a_out.empty()) save_pfm(map, a_out);
        print_kv("delta", delta_at(a_sched, a_step));
        double sum = 0.0;
        for (double v : map.data) sum += v;
        print_kv("mean_attention", sum / static_cast<double>(map.data.size()));
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_app(argc, argv);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
