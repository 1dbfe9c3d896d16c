#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "radsearch/augment/augment.hpp"
#include "radsearch/encoders/checkpoint.hpp"
#include "radsearch/loss/contrastive.hpp"
#include "radsearch/synthdata/synthdata.hpp"

namespace radsearch {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  double temperature = 1.0;
  ModelConfig model;
  std::uint64_t seed = 1;
  bool augmentation = true;
  AugmentConfig augment;

  // Throws ConfigError on non-positive values or batch_size < 2.
  void validate() const;

  // The 30-epoch desk run: desk dims plus the step size and temperature
  // that plain SGD needs at this scale.
  static TrainConfig desk();
};

// Read access to the corpus during training. Listing ids is metadata; entry()
// and pixels() are sample reads.
class TrainingData {
 public:
  virtual ~TrainingData() = default;
  virtual std::vector<std::uint64_t> ids(Split split) const = 0;
  virtual const ImageEntry& entry(std::uint64_t id) const = 0;
  virtual const GrayImage8& pixels(std::uint64_t id) const = 0;
};

class CorpusData final : public TrainingData {
 public:
  explicit CorpusData(const Corpus& corpus);
  std::vector<std::uint64_t> ids(Split split) const override;
  const ImageEntry& entry(std::uint64_t id) const override;
  const GrayImage8& pixels(std::uint64_t id) const override;

 private:
  std::size_t position(std::uint64_t id) const;
  const Corpus& corpus_;
};

// Decorator recording every sample read.
class AccessLog final : public TrainingData {
 public:
  explicit AccessLog(const TrainingData& inner) : inner_(inner) {}
  std::vector<std::uint64_t> ids(Split split) const override { return inner_.ids(split); }
  const ImageEntry& entry(std::uint64_t id) const override;
  const GrayImage8& pixels(std::uint64_t id) const override;
  std::set<std::uint64_t> touched() const;

 private:
  const TrainingData& inner_;
  mutable std::mutex mutex_;
  mutable std::set<std::uint64_t> touched_;
};

struct BatchItem {
  std::uint64_t origin_id = 0;
  std::size_t image_variant = 0;
  std::size_t caption_variant = 0;

  friend bool operator==(const BatchItem&, const BatchItem&) = default;
};
using Batch = std::vector<BatchItem>;

// Seeded per-epoch shuffle of the origin pairs. Each origin appears at most
// once per epoch, carrying one image variant and one caption variant (all
// variants when `augmentation`, the originals otherwise). A short final batch
// is dropped.
std::vector<Batch> make_batches(const std::vector<std::uint64_t>& origin_ids, std::size_t batch_size,
                                std::uint64_t seed, std::size_t epoch, bool augmentation = true);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;  // 0: the initial parameters were kept
  double initial_train_loss = 0.0;
  double initial_val_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  TrainReport report;
  Model best;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Captions the run trains on: all variants, or caption 1 only without
// augmentation.
std::vector<std::string> training_captions(const TrainingData& data, bool augmentation);
Vocabulary training_vocabulary(const TrainingData& data, bool augmentation);

// Seeded init followed by data-dependent rescaling: the first hidden text
// layer and every image layer see standardized inputs on the training data.
Model initial_model(const TrainConfig& config, const TrainingData& data);

// The seeded init alone, never fitted to the corpus. Serves the image-only
// ablation as the stand-in for an off-the-shelf encoder.
Model untrained_model(const TrainConfig& config, const TrainingData& data);

// Tensor for one image variant as seen by the model.
ImageTensor training_image(const TrainingData& data, std::uint64_t id, std::size_t variant, const TrainConfig& config);

// Mean batch loss over the validation split, in deterministic order.
double validation_loss(const Model& model, const TrainingData& data, const TrainConfig& config);

// One plain SGD update on a batch; returns the loss before the update.
// Throws TrainingError, quoting `context`, on a non-finite loss or parameter.
double sgd_step(Model& model, const std::vector<std::string>& captions, const std::vector<ImageTensor>& images,
                double temperature, double learning_rate, const std::string& context = "step");

TrainResult train(const TrainConfig& config, const TrainingData& data, const EpochCallback& on_epoch = {});

// "epoch train_loss val_loss seconds"
std::string format_epoch_line(const EpochStats& stats);

// ---------------------------------------------------------------------------
// Gradient check

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  // Parameters whose analytic gradient is identically zero.
  std::vector<std::string> untouched;
};

struct GradCheckBatch {
  std::vector<std::string> captions;
  std::vector<ImageTensor> images;
};

// Relative error per entry is |a - n| / max(|a|, |n|, floor). The numeric side
// is a central difference with step h evaluated on a 64-bit copy of the model.
inline constexpr double kGradCheckFloor = 1e-3;

template <typename Real>
GradCheckReport grad_check(const DualEncoder<Real>& model, const GradCheckBatch& batch, double temperature,
                           double h = 1e-3);

extern template GradCheckReport grad_check<float>(const DualEncoder<float>&, const GradCheckBatch&, double, double);
extern template GradCheckReport grad_check<double>(const DualEncoder<double>&, const GradCheckBatch&, double, double);

// Small model and 4-pair batch for gradient checks (d = 8, 16x16 images).
struct GradCheckSetup {
  ModelConfig config;
  Vocabulary vocab;
  GradCheckBatch batch;
};
GradCheckSetup tiny_grad_check_setup(std::uint64_t seed);

// One loss evaluation for a model and batch, shared by training and checks.
template <typename Real>
LossBreakdown evaluate_batch_loss(const DualEncoder<Real>& model, const std::vector<std::string>& captions,
                                  const std::vector<ImageTensor>& images, double temperature);

}  // namespace radsearch
