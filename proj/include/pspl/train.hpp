#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pspl/attention.hpp"
#include "pspl/image.hpp"
#include "pspl/model.hpp"
#include "pspl/ssim.hpp"

namespace pspl {

/// HR image pool plus deterministic patch-sampling parameters.
/// Images are stored normalized to [0, 1]; sampling is a pure function of
/// (seed, epoch, index), so a run can be reproduced from the config alone.
struct PatchDataset {
    std::vector<ImageGrid> images;
    int patch_size = 48;  // HR pixels; divisible by scale
    int scale = 2;
    std::uint64_t seed = 0;
    int epoch_length = 32;  // patches per epoch

    void validate() const;

    /// Loads every .png in a directory (sorted by name) and normalizes to [0, 1].
    static PatchDataset from_directory(const std::string& dir, int patch_size, int scale,
                                       std::uint64_t seed, int epoch_length);
};

/// One training example: the pre-upsampled LR input and its HR target.
struct SamplePair {
    ImageGrid lr_up;
    ImageGrid hr;
};

/// HR patches cropped at seeded-random positions; LR side is the patch taken
/// through bicubic downscale then upscale back to patch size.
std::vector<SamplePair> sample_batch(const PatchDataset& dataset, long epoch, long index,
                                     int batch);

struct TrainConfig {
    int epochs = 60;
    int batch = 4;
    WeightedLossKind loss = WeightedLossKind::L1;
    bool pspl_enabled = false;
    AttentionSchedule schedule;
    SsimConfig ssim;  // dynamic_range 1.0 for the normalized training domain
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    int validation_interval = 1;
    int model_width = 32;  // hidden channels of the default 3-layer architecture

    void validate() const;
    // True when the two configs are identical except possibly pspl_enabled.
    bool ablation_compatible(const TrainConfig& o) const;
};

/// Per-epoch metrics row (CSV schema: epoch,loss,psnr_db,mean_ssim,delta,seconds).
struct TrainRecord {
    int epoch = 0;  // 1-based
    double mean_loss = 0.0;
    double psnr_db = 0.0;
    double mean_ssim = 0.0;
    double delta = 0.0;
    double seconds = 0.0;
};

struct EvalResult {
    double psnr_db = 0.0;
    double mean_ssim = 0.0;
};

/// Full-image validation: PSNR = 10*log10(L^2/MSE) averaged over images with a
/// 99 dB cap for vanishing MSE, mean SSIM averaged over images. No border crop.
EvalResult evaluate(const SrModel& model, const std::vector<ImageGrid>& val_images, int scale,
                    const SsimConfig& ssim_cfg);

/// Runs one epoch of updates (optionally attention-weighted), advancing
/// global_step by one per optimizer update. The first update overall uses
/// schedule step 1. Validation runs every validation_interval epochs and on
/// the last epoch; other rows carry the previous values forward.
TrainRecord train_epoch(SrModel& model, AdamState& adam, const PatchDataset& dataset,
                        const TrainConfig& config, int epoch_index, long& global_step,
                        const std::vector<ImageGrid>& val_images, const EvalResult& last_eval,
                        double elapsed_seconds);

/// Fresh model + optimizer, then config.epochs epochs of train_epoch.
/// If timing is false the seconds column is written as zero, which keeps the
/// output byte-reproducible.
std::vector<TrainRecord> run_training(const TrainConfig& config, const PatchDataset& dataset,
                                      const std::vector<ImageGrid>& val_images, bool timing,
                                      SrModel* final_model = nullptr);

void write_records_csv(const std::vector<TrainRecord>& records, const std::string& path);

struct BenchOptions {
    int threshold_epoch = 40;      // baseline epoch whose PSNR defines the target
    double target_psnr = 0.0;      // used instead when use_fixed_target is true
    bool use_fixed_target = false;
    bool timing = true;
};

struct BenchReport {
    std::vector<TrainRecord> baseline;
    std::vector<TrainRecord> treatment;
    double threshold_psnr = 0.0;
    int baseline_epochs = 0;   // first epoch reaching the threshold; 0 = never
    int treatment_epochs = 0;
    double ratio = 0.0;        // treatment_epochs / baseline_epochs
};

/// Trains both configs from identical seeds and reports epochs-to-threshold.
/// The pair must be identical except for pspl_enabled; anything else is an
/// error so the comparison stays a clean ablation. The config with PSPL off is
/// the baseline (config_a if both are off).
BenchReport run_benchmark(const TrainConfig& config_a, const TrainConfig& config_b,
                          const PatchDataset& dataset, const std::vector<ImageGrid>& val_images,
                          const BenchOptions& options);

/// Parameters of the bundled toy benchmark (desk-scale convergence comparison).
TrainConfig toy_benchmark_config(std::uint64_t seed);
// Dataset shape that pairs with toy_benchmark_config.
PatchDataset toy_benchmark_dataset(std::vector<ImageGrid> images, std::uint64_t seed);

}  // namespace pspl
