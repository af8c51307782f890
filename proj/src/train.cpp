#include "pspl/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <memory>
#include <stdexcept>

#include "pspl/rng.hpp"

namespace pspl {

void PatchDataset::validate() const {
    if (images.empty()) throw std::invalid_argument("PatchDataset: no images");
    if (patch_size < 1) throw std::invalid_argument("PatchDataset: patch_size must be >= 1");
    if (scale < 1) throw std::invalid_argument("PatchDataset: scale must be >= 1");
    if (patch_size % scale != 0)
        throw std::invalid_argument("PatchDataset: patch_size must be divisible by scale");
    if (epoch_length < 1) throw std::invalid_argument("PatchDataset: epoch_length must be >= 1");
    for (const ImageGrid& img : images)
        if (img.height < patch_size || img.width < patch_size)
            throw std::invalid_argument("PatchDataset: image smaller than patch_size");
}

namespace {

ImageGrid normalize_unit(const ImageGrid& img) {
    ImageGrid out = img;
    if (img.dynamic_range != 1.0) {
        for (double& v : out.data) v /= img.dynamic_range;
        out.dynamic_range = 1.0;
    }
    return out;
}

}  // namespace

PatchDataset PatchDataset::from_directory(const std::string& dir, int patch_size, int scale,
                                          std::uint64_t seed, int epoch_length) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
        throw std::runtime_error("PatchDataset: '" + dir + "' is not a directory");
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw std::runtime_error("PatchDataset: no .png files in '" + dir + "'");

    PatchDataset ds;
    ds.patch_size = patch_size;
    ds.scale = scale;
    ds.seed = seed;
    ds.epoch_length = epoch_length;
    for (const std::string& p : paths) ds.images.push_back(normalize_unit(load_png(p)));
    ds.validate();
    return ds;
}

std::vector<SamplePair> sample_batch(const PatchDataset& dataset, long epoch, long index,
                                     int batch) {
    dataset.validate();
    if (batch < 1) throw std::invalid_argument("sample_batch: batch must be >= 1");

    Rng rng(mix_seed(mix_seed(dataset.seed, static_cast<std::uint64_t>(epoch)),
                     0x6261746368ULL + static_cast<std::uint64_t>(index)));
    const int ps = dataset.patch_size;
    const int lr_size = ps / dataset.scale;

    std::vector<SamplePair> out;
    out.reserve(batch);
    for (int b = 0; b < batch; ++b) {
        const ImageGrid& src =
            dataset.images[rng.below(static_cast<std::uint64_t>(dataset.images.size()))];
        const int r0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(src.height - ps + 1)));
        const int c0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(src.width - ps + 1)));

        ImageGrid hr(ps, ps, src.channels, 1.0);
        for (int r = 0; r < ps; ++r)
            for (int c = 0; c < ps; ++c)
                for (int ch = 0; ch < src.channels; ++ch)
                    hr.at(r, c, ch) = src.at(r0 + r, c0 + c, ch);

        const ImageGrid lr = resize_to(hr, lr_size, lr_size);
        SamplePair pair;
        pair.lr_up = resize_to(lr, ps, ps);
        pair.hr = std::move(hr);
        out.push_back(std::move(pair));
    }
    return out;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch < 1) throw std::invalid_argument("TrainConfig: batch must be >= 1");
    if (!(learning_rate > 0.0))
        throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (validation_interval < 1)
        throw std::invalid_argument("TrainConfig: validation_interval must be >= 1");
    if (model_width < 1) throw std::invalid_argument("TrainConfig: model_width must be >= 1");
    schedule.validate();
    ssim.validate();
}

bool TrainConfig::ablation_compatible(const TrainConfig& o) const {
    return epochs == o.epochs && batch == o.batch && loss == o.loss &&
           schedule.gamma == o.schedule.gamma && schedule.mu == o.schedule.mu &&
           schedule.alpha == o.schedule.alpha && schedule.beta == o.schedule.beta &&
           schedule.delta_floor == o.schedule.delta_floor &&
           ssim.window_size == o.ssim.window_size && ssim.window_sigma == o.ssim.window_sigma &&
           ssim.k1 == o.ssim.k1 && ssim.k2 == o.ssim.k2 &&
           ssim.dynamic_range == o.ssim.dynamic_range &&
           learning_rate == o.learning_rate && seed == o.seed &&
           validation_interval == o.validation_interval && model_width == o.model_width;
}

EvalResult evaluate(const SrModel& model, const std::vector<ImageGrid>& val_images, int scale,
                    const SsimConfig& ssim_cfg) {
    if (val_images.empty()) throw std::invalid_argument("evaluate: empty validation set");
    if (scale < 1) throw std::invalid_argument("evaluate: scale must be >= 1");

    double psnr_sum = 0.0, ssim_sum = 0.0;
    for (const ImageGrid& hr : val_images) {
        const int lr_h = std::max(1, static_cast<int>(std::lround(hr.height / double(scale))));
        const int lr_w = std::max(1, static_cast<int>(std::lround(hr.width / double(scale))));
        const ImageGrid lr = resize_to(hr, lr_h, lr_w);
        const ImageGrid lr_up = resize_to(lr, hr.height, hr.width);
        const ImageGrid sr = predict(model, lr_up);

        double mse = 0.0;
        for (std::size_t i = 0; i < hr.data.size(); ++i) {
            const double d = sr.data[i] - hr.data[i];
            mse += d * d;
        }
        mse /= static_cast<double>(hr.data.size());

        const double L = hr.dynamic_range;
        double psnr = 99.0;  // sentinel keeps the CSV finite when MSE vanishes
        if (mse > 0.0) psnr = std::min(10.0 * std::log10(L * L / mse), 99.0);
        psnr_sum += psnr;
        ssim_sum += mean_ssim(sr, hr, ssim_cfg);
    }
    const double n = static_cast<double>(val_images.size());
    return {psnr_sum / n, ssim_sum / n};
}

TrainRecord train_epoch(SrModel& model, AdamState& adam, const PatchDataset& dataset,
                        const TrainConfig& config, int epoch_index, long& global_step,
                        const std::vector<ImageGrid>& val_images, const EvalResult& last_eval,
                        double elapsed_seconds) {
    config.validate();
    dataset.validate();
    if (dataset.epoch_length % config.batch != 0)
        throw std::invalid_argument("train_epoch: epoch_length must be divisible by batch");

    const int updates = dataset.epoch_length / config.batch;
    double epoch_loss = 0.0;

    for (int u = 0; u < updates; ++u) {
        const auto batch = sample_batch(dataset, epoch_index, u, config.batch);
        // The first update overall runs at schedule step 1.
        const long step = global_step + 1;

        GradientSet total = GradientSet::zeros_like(model);
        double batch_loss = 0.0;
        for (const SamplePair& sample : batch) {
            ForwardTape tape;
            const ImageGrid sr = forward(model, sample.lr_up, tape);
            LossResult loss;
            if (config.pspl_enabled) {
                const ImageGrid ms = ssim_map(sr, sample.hr, config.ssim);
                const ImageGrid ma = attention_map(ms, config.schedule, step);
                loss = weighted_loss(sr, sample.hr, ma, config.loss);
            } else {
                loss = plain_loss(sr, sample.hr, config.loss);
            }
            const GradientSet grads = backward(model, tape, loss.grad);
            total.accumulate(grads, 1.0 / config.batch);
            batch_loss += loss.loss;
        }
        adam_step(model, total, adam);
        global_step += 1;
        epoch_loss += batch_loss / config.batch;
    }

    TrainRecord rec;
    rec.epoch = epoch_index + 1;
    rec.mean_loss = epoch_loss / updates;
    rec.delta = delta_at(config.schedule, global_step);
    rec.seconds = elapsed_seconds;

    const bool validate_now = ((epoch_index + 1) % config.validation_interval == 0) ||
                              (epoch_index + 1 == config.epochs);
    if (validate_now && !val_images.empty()) {
        const EvalResult ev = evaluate(model, val_images, dataset.scale, config.ssim);
        rec.psnr_db = ev.psnr_db;
        rec.mean_ssim = ev.mean_ssim;
    } else {
        rec.psnr_db = last_eval.psnr_db;
        rec.mean_ssim = last_eval.mean_ssim;
    }
    return rec;
}

std::vector<TrainRecord> run_training(const TrainConfig& config, const PatchDataset& dataset,
                                      const std::vector<ImageGrid>& val_images, bool timing,
                                      SrModel* final_model) {
    config.validate();
    dataset.validate();

    const int channels = dataset.images.front().channels;
    SrModel model = SrModel::make_default(channels, config.model_width, dataset.scale);
    init_parameters(model, config.seed);
    AdamState adam = AdamState::zeros_like(model, config.learning_rate);

    const auto start = std::chrono::steady_clock::now();
    std::vector<TrainRecord> records;
    records.reserve(config.epochs);
    long global_step = 0;
    EvalResult last_eval;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double elapsed =
            timing ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                         .count()
                   : 0.0;
        TrainRecord rec = train_epoch(model, adam, dataset, config, epoch, global_step,
                                      val_images, last_eval, elapsed);
        if (timing)
            rec.seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        last_eval = {rec.psnr_db, rec.mean_ssim};
        records.push_back(rec);
    }
    if (final_model) *final_model = std::move(model);
    return records;
}

void write_records_csv(const std::vector<TrainRecord>& records, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("write_records_csv: cannot open '" + path + "'");
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> guard(f, &std::fclose);
    if (std::fprintf(f, "epoch,loss,psnr_db,mean_ssim,delta,seconds\n") < 0)
        throw std::runtime_error("write_records_csv: write failed");
    for (const TrainRecord& r : records)
        if (std::fprintf(f, "%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.epoch, r.mean_loss, r.psnr_db,
                         r.mean_ssim, r.delta, r.seconds) < 0)
            throw std::runtime_error("write_records_csv: write failed");
}

namespace {

int first_epoch_reaching(const std::vector<TrainRecord>& records, double threshold) {
    for (const TrainRecord& r : records)
        if (r.psnr_db >= threshold) return r.epoch;
    return 0;
}

}  // namespace

BenchReport run_benchmark(const TrainConfig& config_a, const TrainConfig& config_b,
                          const PatchDataset& dataset, const std::vector<ImageGrid>& val_images,
                          const BenchOptions& options) {
    if (!config_a.ablation_compatible(config_b))
        throw std::invalid_argument(
            "run_benchmark: configs must differ only in pspl_enabled");
    if (val_images.empty())
        throw std::invalid_argument("run_benchmark: empty validation set");

    // The PSPL-off config is the baseline; with both off (control) it is config_a.
    const bool a_is_baseline = !config_a.pspl_enabled || config_b.pspl_enabled;
    const TrainConfig& base_cfg = a_is_baseline ? config_a : config_b;
    const TrainConfig& treat_cfg = a_is_baseline ? config_b : config_a;

    BenchReport report;
    report.baseline = run_training(base_cfg, dataset, val_images, options.timing);
    report.treatment = run_training(treat_cfg, dataset, val_images, options.timing);

    if (options.use_fixed_target) {
        report.threshold_psnr = options.target_psnr;
    } else {
        if (options.threshold_epoch < 1 ||
            options.threshold_epoch > static_cast<int>(report.baseline.size()))
            throw std::invalid_argument("run_benchmark: threshold_epoch outside the run");
        report.threshold_psnr = report.baseline[options.threshold_epoch - 1].psnr_db;
    }
    report.baseline_epochs = first_epoch_reaching(report.baseline, report.threshold_psnr);
    report.treatment_epochs = first_epoch_reaching(report.treatment, report.threshold_psnr);
    report.ratio = (report.baseline_epochs > 0 && report.treatment_epochs > 0)
                       ? static_cast<double>(report.treatment_epochs) / report.baseline_epochs
                       : std::numeric_limits<double>::infinity();
    return report;
}

TrainConfig toy_benchmark_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = 56;
    cfg.batch = 4;
    cfg.loss = WeightedLossKind::L1;
    cfg.pspl_enabled = false;
    cfg.schedule.gamma = 2.0;
    cfg.schedule.mu = -1.0;
    cfg.schedule.alpha = 0.15;
    cfg.schedule.beta = 0.0;
    cfg.learning_rate = 1e-3;
    cfg.seed = seed;
    cfg.validation_interval = 1;
    cfg.model_width = 16;
    cfg.ssim.dynamic_range = 1.0;
    return cfg;
}

PatchDataset toy_benchmark_dataset(std::vector<ImageGrid> images, std::uint64_t seed) {
    PatchDataset ds;
    ds.images = std::move(images);
    for (ImageGrid& img : ds.images) img = normalize_unit(img);
    ds.patch_size = 48;
    ds.scale = 2;
    ds.seed = seed;
    ds.epoch_length = 32;
    ds.validate();
    return ds;
}

}  // namespace pspl
