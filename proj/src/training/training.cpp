#include "radsearch/training/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "radsearch/errors.hpp"
#include "radsearch/loss/contrastive.hpp"

namespace radsearch {

namespace {
constexpr std::size_t kCalibrationImages = 64;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be positive, got " + std::to_string(learning_rate));
  }
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2 for in-batch negatives");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive, got " + std::to_string(temperature));
  model.validate();
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.epochs = 30;
  c.learning_rate = 0.01;
  c.temperature = 0.07;
  return c;
}

CorpusData::CorpusData(const Corpus& corpus) : corpus_(corpus) {
  if (corpus.images.size() != corpus.manifest.entries.size()) {
    throw ContractError("corpus pixels and manifest entries differ in count");
  }
}

std::vector<std::uint64_t> CorpusData::ids(Split split) const {
  std::vector<std::uint64_t> out;
  for (const auto& e : corpus_.manifest.entries)
    if (e.split == split) out.push_back(e.image_id);
  return out;
}

std::size_t CorpusData::position(std::uint64_t id) const {
  const ImageEntry* e = corpus_.manifest.find(id);
  if (e == nullptr) throw DataError("image " + std::to_string(id) + " is not in the corpus");
  return static_cast<std::size_t>(e - corpus_.manifest.entries.data());
}

const ImageEntry& CorpusData::entry(std::uint64_t id) const { return corpus_.manifest.entries[position(id)]; }
const GrayImage8& CorpusData::pixels(std::uint64_t id) const { return corpus_.images[position(id)]; }

const ImageEntry& AccessLog::entry(std::uint64_t id) const {
  {
    std::lock_guard lock(mutex_);
    touched_.insert(id);
  }
  return inner_.entry(id);
}

const GrayImage8& AccessLog::pixels(std::uint64_t id) const {
  {
    std::lock_guard lock(mutex_);
    touched_.insert(id);
  }
  return inner_.pixels(id);
}

std::set<std::uint64_t> AccessLog::touched() const {
  std::lock_guard lock(mutex_);
  return touched_;
}

std::vector<Batch> make_batches(const std::vector<std::uint64_t>& origin_ids, std::size_t batch_size,
                                std::uint64_t seed, std::size_t epoch, bool augmentation) {
  if (origin_ids.empty()) throw DataError("cannot batch an empty split");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + epoch);
  std::vector<std::uint64_t> order = origin_ids;
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_int_distribution<std::size_t> image_pick(0, kImageVariants - 1);
  std::uniform_int_distribution<std::size_t> caption_pick(0, kCaptionVariants - 1);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start + batch_size <= order.size(); start += batch_size) {
    Batch batch;
    batch.reserve(batch_size);
    for (std::size_t i = start; i < start + batch_size; ++i) {
      BatchItem item{order[i], 0, 0};
      if (augmentation) {
        item.image_variant = image_pick(rng);
        item.caption_variant = caption_pick(rng);
      }
      batch.push_back(item);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::vector<std::string> training_captions(const TrainingData& data, bool augmentation) {
  std::vector<std::string> captions;
  for (auto id : data.ids(Split::kTrain)) {
    const auto& e = data.entry(id);
    if (augmentation) {
      captions.insert(captions.end(), e.captions.begin(), e.captions.end());
    } else {
      captions.push_back(e.captions.front());
    }
  }
  return captions;
}

Vocabulary training_vocabulary(const TrainingData& data, bool augmentation) {
  return Vocabulary::build(training_captions(data, augmentation));
}

Model initial_model(const TrainConfig& config, const TrainingData& data) {
  const auto captions = training_captions(data, config.augmentation);
  Model model(config.model, Vocabulary::build(captions), config.seed);
  model.calibrate_text(captions);
  std::vector<ImageTensor> sample;
  for (auto id : data.ids(Split::kTrain)) {
    if (sample.size() == kCalibrationImages) break;
    sample.push_back(to_tensor(data.pixels(id)));
  }
  std::vector<const ImageTensor*> ptrs;
  for (const auto& im : sample) ptrs.push_back(&im);
  model.calibrate_images(ptrs);
  return model;
}

Model untrained_model(const TrainConfig& config, const TrainingData& data) {
  return Model(config.model, training_vocabulary(data, config.augmentation), config.seed);
}

ImageTensor training_image(const TrainingData& data, std::uint64_t id, std::size_t variant, const TrainConfig& config) {
  const ImageTensor base = to_tensor(data.pixels(id));
  if (variant == 0) return base;
  return image_variant(base, variant, image_seed(config.seed, id), config.augment);
}

template <typename Real>
LossBreakdown evaluate_batch_loss(const DualEncoder<Real>& model, const std::vector<std::string>& captions,
                                  const std::vector<ImageTensor>& images, double temperature) {
  std::vector<const ImageTensor*> ptrs;
  for (const auto& im : images) ptrs.push_back(&im);
  auto et = model.embed_text(captions);
  auto ei = model.embed_images(ptrs);
  return breakdown(batch_loss(et, ei, temperature));
}

template LossBreakdown evaluate_batch_loss<float>(const DualEncoder<float>&, const std::vector<std::string>&,
                                                  const std::vector<ImageTensor>&, double);
template LossBreakdown evaluate_batch_loss<double>(const DualEncoder<double>&, const std::vector<std::string>&,
                                                   const std::vector<ImageTensor>&, double);

namespace {

struct MaterializedBatch {
  std::vector<std::string> captions;
  std::vector<ImageTensor> images;
};

MaterializedBatch materialize(const Batch& batch, const TrainingData& data, const TrainConfig& config) {
  MaterializedBatch out;
  for (const auto& item : batch) {
    const auto& e = data.entry(item.origin_id);
    out.captions.push_back(e.captions.at(item.caption_variant));
    out.images.push_back(training_image(data, item.origin_id, item.image_variant, config));
  }
  return out;
}

// Validation pairs: original images, with the caption cycling through the
// variants the run trains on.
std::vector<Batch> validation_batches(const std::vector<std::uint64_t>& ids, const TrainConfig& config) {
  const std::size_t size = std::min(config.batch_size, ids.size());
  std::vector<Batch> out;
  if (size < 2) return out;
  for (std::size_t start = 0; start + size <= ids.size(); start += size) {
    Batch b;
    for (std::size_t i = start; i < start + size; ++i) {
      b.push_back({ids[i], 0, config.augmentation ? static_cast<std::size_t>(ids[i] % kCaptionVariants) : 0});
    }
    out.push_back(std::move(b));
  }
  return out;
}

double mean_loss(const Model& model, const std::vector<Batch>& batches, const TrainingData& data,
                 const TrainConfig& config) {
  if (batches.empty()) return 0.0;
  double total = 0.0;
  for (const auto& b : batches) {
    const auto m = materialize(b, data, config);
    total += evaluate_batch_loss(model, m.captions, m.images, config.temperature).total;
  }
  return total / static_cast<double>(batches.size());
}

}  // namespace

double validation_loss(const Model& model, const TrainingData& data, const TrainConfig& config) {
  return mean_loss(model, validation_batches(data.ids(Split::kValidation), config), data, config);
}

std::string format_epoch_line(const EpochStats& s) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu %.6f %.6f %.3f", s.epoch, s.train_loss, s.val_loss, s.seconds);
  return buf;
}

double sgd_step(Model& model, const std::vector<std::string>& captions, const std::vector<ImageTensor>& images,
                double temperature, double learning_rate, const std::string& context) {
  model.zero_grads();
  std::vector<const ImageTensor*> ptrs;
  for (const auto& im : images) ptrs.push_back(&im);
  auto loss = batch_loss(model.embed_text(captions), model.embed_images(ptrs), temperature);
  const double value = loss.total.value()(0, 0);
  if (!std::isfinite(value)) throw TrainingError("loss became non-finite at " + context);
  ad::backward(loss.total);
  for (auto& p : model.params()) {
    if (!p.var.has_grad()) continue;
    auto w = p.var.mutable_value().data();
    auto g = p.var.node().grad.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = static_cast<float>(w[i] - learning_rate * g[i]);
      if (!std::isfinite(w[i])) throw TrainingError("parameter " + p.name + " became non-finite at " + context);
    }
  }
  return value;
}

TrainResult train(const TrainConfig& config, const TrainingData& data, const EpochCallback& on_epoch) {
  config.validate();
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  const auto train_ids = data.ids(Split::kTrain);
  const auto val_ids = data.ids(Split::kValidation);
  if (train_ids.size() < config.batch_size) {
    throw DataError("training split has " + std::to_string(train_ids.size()) + " pairs, fewer than one batch of " +
                    std::to_string(config.batch_size));
  }
  if (val_ids.size() < 2) throw DataError("validation split needs at least 2 pairs");

  Model model = initial_model(config, data);
  const auto val_batches = validation_batches(val_ids, config);
  // Loss of the initial parameters on the first epoch's batches.
  TrainResult result{{}, model.clone()};
  result.report.initial_train_loss =
      mean_loss(model, make_batches(train_ids, config.batch_size, config.seed, 1, config.augmentation), data, config);
  result.report.initial_val_loss = mean_loss(model, val_batches, data, config);
  double best_val = result.report.initial_val_loss;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto e0 = Clock::now();
    const auto batches = make_batches(train_ids, config.batch_size, config.seed, epoch, config.augmentation);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto m = materialize(batches[b], data, config);
      const double value =
          sgd_step(model, m.captions, m.images, config.temperature, config.learning_rate,
                   "epoch " + std::to_string(epoch) + ", batch " + std::to_string(b + 1) + " of " +
                       std::to_string(batches.size()));
      epoch_loss += value;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(batches.size());
    stats.val_loss = mean_loss(model, val_batches, data, config);
    stats.seconds = std::chrono::duration<double>(Clock::now() - e0).count();
    result.report.history.push_back(stats);
    if (stats.val_loss < best_val) {
      best_val = stats.val_loss;
      result.report.best_epoch = epoch;
      result.best = model.clone();
    }
    if (on_epoch) on_epoch(stats);
  }
  result.report.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return result;
}

}  // namespace radsearch
