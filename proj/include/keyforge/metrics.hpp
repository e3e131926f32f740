#pragma once

#include <array>
#include <map>
#include <vector>

#include "keyforge/geometry.hpp"
#include "keyforge/image.hpp"
#include "keyforge/keyspec.hpp"

namespace keyforge {

struct Detection {
  Box box;
  double score = 0.0;
  int image_id = 0;
};

struct PRCurve {
  std::vector<Vec2> points;  // (recall, precision), recall non-decreasing
  double ap = 0.0;
};

enum class OverlapMode { paper, iou };

// Pin-height comparisons in normalized blade-height units. Keypoints are
// located when the masks do not carry them.
double max_pin_error(const BitMask& pred, const BitMask& gt, const KeySpec& spec);
double mean_pin_error(const BitMask& pred, const BitMask& gt, const KeySpec& spec);

// paper: |pred ∩ gt| / |pred|;  iou: |pred ∩ gt| / |pred ∪ gt|.
double pixel_overlap(const BitMask& pred, const BitMask& gt, OverlapMode mode);

double box_iou(const Box& a, const Box& b);

// Greedy score-ordered matching (ties by insertion order) against the
// unmatched ground truth of highest IoU >= iou_thr; AP by all-point
// interpolation. Throws NoGroundTruth when gts are empty.
PRCurve average_precision(const std::vector<Detection>& detections,
                          const std::map<int, std::vector<Box>>& gts, double iou_thr = 0.5);

// Mann-Whitney AUC, ties count 0.5. Throws SingleClass.
double roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels);

// Training-loss formulas as pure functions (numerically stabilized).
double loss_smooth_l1(const std::vector<double>& pred, const std::vector<double>& target);

double loss_mse_normalized(const std::array<double, 8>& pred, const std::array<double, 8>& target,
                           const ParamStats& stats);

enum class ClassificationLoss { softmax_ce, log_loss };
double loss_classification(const std::vector<double>& logits, int label, ClassificationLoss kind);

double loss_pixel_bce(const std::vector<double>& logits, int width, int height, const BitMask& gt);

}  // namespace keyforge
