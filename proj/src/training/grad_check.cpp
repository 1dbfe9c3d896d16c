#include <algorithm>
#include <cmath>
#include <random>

#include "radsearch/loss/contrastive.hpp"
#include "radsearch/training/training.hpp"

namespace radsearch {

template <typename Real>
GradCheckReport grad_check(const DualEncoder<Real>& model, const GradCheckBatch& batch, double temperature,
                           double h) {
  if (batch.captions.size() != batch.images.size() || batch.captions.size() < 2) {
    throw ContractError("gradient check needs at least 2 aligned pairs");
  }
  std::vector<const ImageTensor*> ptrs;
  for (const auto& im : batch.images) ptrs.push_back(&im);

  DualEncoder<Real> analytic_model = model.clone();
  auto loss = batch_loss(analytic_model.embed_text(batch.captions), analytic_model.embed_images(ptrs), temperature);
  ad::backward(loss.total);
  auto analytic_params = analytic_model.params();

  DualEncoder<double> probe = model.template clone<double>();
  auto probe_params = probe.params();
  const auto eval = [&] {
    return batch_loss(probe.embed_text(batch.captions), probe.embed_images(ptrs), temperature).total.value()(0, 0);
  };

  GradCheckReport report;
  for (std::size_t p = 0; p < probe_params.size(); ++p) {
    const Matrix<Real> grad = analytic_params[p].var.grad();
    const bool all_zero = std::all_of(grad.data().begin(), grad.data().end(), [](Real g) { return g == Real(0); });
    if (all_zero) report.untouched.push_back(probe_params[p].name);
    auto values = probe_params[p].var.mutable_value().data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      const auto at = [&](double offset) {
        values[i] = saved + offset;
        return eval();
      };
      // five-point central stencil
      const double numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
      values[i] = saved;
      const double analytic = static_cast<double>(grad.data()[i]);
      const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
      const double rel = std::abs(analytic - numeric) / scale;
      ++report.entries_checked;
      if (rel > report.max_rel_error || report.worst_param.empty()) {
        report.max_rel_error = std::max(rel, report.max_rel_error);
        report.worst_param = probe_params[p].name;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

template GradCheckReport grad_check<float>(const DualEncoder<float>&, const GradCheckBatch&, double, double);
template GradCheckReport grad_check<double>(const DualEncoder<double>&, const GradCheckBatch&, double, double);

GradCheckSetup tiny_grad_check_setup(std::uint64_t seed) {
  GradCheckSetup s;
  s.config.image_height = 16;
  s.config.image_width = 16;
  s.config.input_pool = 1;
  s.config.conv_channels = {3, 4};
  s.config.text_embed_dim = 6;
  s.config.text_hidden_dim = 8;
  s.config.text_dim = 8;
  s.config.image_dim = 8;
  s.config.shared_dim = 8;
  s.config.seq_len = 24;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> pixel(0.0f, 1.0f);
  const auto lexicon = SynonymLexicon::builtin();
  const PatientRecord records[4] = {
      {1, 72, Gender::kFemale, Ethnicity::kWhite, 50.0, 3, Region::kUpperMolarRight},
      {2, 29, Gender::kMale, Ethnicity::kBlack, 20.0, 2, Region::kLowerMolarLeft},
      {3, 45, Gender::kFemale, Ethnicity::kAsian, 5.0, 1, Region::kUpperAnterior},
      {4, 61, Gender::kMale, Ethnicity::kHispanic, 30.0, 2, Region::kLowerAnterior},
  };
  for (std::size_t i = 0; i < 4; ++i) {
    s.batch.captions.push_back(caption_variants(records[i], lexicon)[i % kCaptionVariants]);
    ImageTensor im(16, 16);
    for (float& v : im.data()) v = pixel(rng);
    s.batch.images.push_back(std::move(im));
  }
  s.vocab = Vocabulary::build(s.batch.captions);
  return s;
}

}  // namespace radsearch
