#pragma once

#include <span>
#include <string>
#include <vector>

#include "splitfed/tensor.hpp"

namespace splitfed {

struct LossResult {
  float loss = 0.0f;  // nats, mean over every pixel of every batch item
  Tensor d_logits;
};

// Binary cross-entropy fused with the sigmoid, averaged over all B*H*W pixels:
//   loss = mean[max(z,0) - z*y + log1p(exp(-|z|))],  dL/dz = (sigmoid(z) - y) / (B*H*W).
// Masks must be exactly 0 or 1.
LossResult bce_from_logits(const Tensor& logits, const Tensor& masks);

// Throws ValidationError if any value is not exactly 0 or 1.
void require_binary(const Tensor& mask, std::string_view what);

struct MetricReport {
  double miou = 0.0;
  double dice = 0.0;
  std::vector<double> per_image_iou;
  std::vector<double> per_image_dice;

  std::size_t count() const { return per_image_iou.size(); }
};

inline constexpr float kDefaultThreshold = 0.5f;

// Per-image foreground IoU and Dice of (prob >= threshold) against the mask,
// then means over images. An image where both prediction and mask are empty
// scores 1.0 on both.
MetricReport segmentation_metrics(std::span<const Tensor> prob_maps, std::span<const Tensor> masks,
                                  float threshold = kDefaultThreshold);
MetricReport miou(std::span<const Tensor> prob_maps, std::span<const Tensor> masks,
                  float threshold = kDefaultThreshold);
MetricReport dice(std::span<const Tensor> prob_maps, std::span<const Tensor> masks,
                  float threshold = kDefaultThreshold);

// "centre,method,miou,dice,n_images" with both scores x100 to one decimal.
std::string metric_csv_row(std::string_view centre, std::string_view method, const MetricReport& r);
std::string format_percent(double fraction);

}  // namespace splitfed
