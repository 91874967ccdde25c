#include "splitfed/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "splitfed/layers.hpp"

namespace splitfed {

void require_binary(const Tensor& mask, std::string_view what) {
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0.0f && mask[i] != 1.0f) {
      throw ValidationError(std::string(what) + ": value " + std::to_string(mask[i]) +
                            " at element " + std::to_string(i) + " is not 0 or 1");
    }
  }
}

LossResult bce_from_logits(const Tensor& logits, const Tensor& masks) {
  require_dims(masks, logits.dims(), "bce_from_logits masks");
  require_binary(masks, "bce_from_logits masks");
  const std::size_t n = logits.size();
  const float inv_n = 1.0f / static_cast<float>(n);
  LossResult r{0.0f, Tensor(logits.dims())};
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits[i];
    const double y = masks[i];
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    r.d_logits[i] = (sigmoid(logits[i]) - masks[i]) * inv_n;
  }
  r.loss = static_cast<float>(total / static_cast<double>(n));
  return r;
}

MetricReport segmentation_metrics(std::span<const Tensor> prob_maps, std::span<const Tensor> masks,
                                  float threshold) {
  if (prob_maps.empty()) throw ValidationError("metrics need at least one image");
  if (prob_maps.size() != masks.size()) {
    throw ValidationError("metrics: " + std::to_string(prob_maps.size()) + " predictions vs " +
                          std::to_string(masks.size()) + " masks");
  }
  MetricReport report;
  double iou_sum = 0.0, dice_sum = 0.0;
  for (std::size_t i = 0; i < prob_maps.size(); ++i) {
    require_dims(masks[i], prob_maps[i].dims(), "metrics mask");
    std::size_t inter = 0, pred = 0, truth = 0;
    for (std::size_t j = 0; j < prob_maps[i].size(); ++j) {
      const bool p = prob_maps[i][j] >= threshold;
      const bool g = masks[i][j] >= 0.5f;
      pred += p;
      truth += g;
      inter += p && g;
    }
    const std::size_t uni = pred + truth - inter;
    const double iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    const double dc = pred + truth == 0 ? 1.0
                                        : 2.0 * static_cast<double>(inter) / static_cast<double>(pred + truth);
    report.per_image_iou.push_back(iou);
    report.per_image_dice.push_back(dc);
    iou_sum += iou;
    dice_sum += dc;
  }
  report.miou = iou_sum / static_cast<double>(prob_maps.size());
  report.dice = dice_sum / static_cast<double>(prob_maps.size());
  return report;
}

MetricReport miou(std::span<const Tensor> prob_maps, std::span<const Tensor> masks, float threshold) {
  return segmentation_metrics(prob_maps, masks, threshold);
}

MetricReport dice(std::span<const Tensor> prob_maps, std::span<const Tensor> masks, float threshold) {
  return segmentation_metrics(prob_maps, masks, threshold);
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", fraction * 100.0);
  return buf;
}

std::string metric_csv_row(std::string_view centre, std::string_view method, const MetricReport& r) {
  return std::string(centre) + "," + std::string(method) + "," + format_percent(r.miou) + "," +
         format_percent(r.dice) + "," + std::to_string(r.count());
}

}  // namespace splitfed
