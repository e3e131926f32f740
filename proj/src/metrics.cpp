#include "keyforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "keyforge/bitting.hpp"
#include "keyforge/errors.hpp"

namespace keyforge {

namespace {

std::vector<double> pin_heights(const BitMask& mask, const KeySpec& spec) {
  if (mask.keypoints) return cast_virtual_pins(mask, spec);
  BitMask located = mask;
  located.keypoints = locate_keypoints(mask);
  return cast_virtual_pins(located, spec);
}

}  // namespace

double max_pin_error(const BitMask& pred, const BitMask& gt, const KeySpec& spec) {
  const auto hp = pin_heights(pred, spec);
  const auto hg = pin_heights(gt, spec);
  double worst = 0.0;
  for (size_t i = 0; i < hp.size(); ++i) worst = std::max(worst, std::abs(hp[i] - hg[i]));
  return worst;
}

double mean_pin_error(const BitMask& pred, const BitMask& gt, const KeySpec& spec) {
  const auto hp = pin_heights(pred, spec);
  const auto hg = pin_heights(gt, spec);
  double sum = 0.0;
  for (size_t i = 0; i < hp.size(); ++i) sum += std::abs(hp[i] - hg[i]);
  return sum / hp.size();
}

double pixel_overlap(const BitMask& pred, const BitMask& gt, OverlapMode mode) {
  if (pred.width != gt.width || pred.height != gt.height)
    throw DimensionMismatch("mask dimensions differ");
  size_t inter = 0, pred_n = 0, uni = 0;
  for (size_t i = 0; i < pred.bits.size(); ++i) {
    const bool p = pred.bits[i] != 0;
    const bool g = gt.bits[i] != 0;
    inter += p && g;
    pred_n += p;
    uni += p || g;
  }
  if (mode == OverlapMode::paper) {
    if (pred_n == 0) throw EmptyPrediction("paper-mode overlap needs a non-empty prediction");
    return static_cast<double>(inter) / static_cast<double>(pred_n);
  }
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double box_iou(const Box& a, const Box& b) {
  const double ix0 = std::max(a.x0, b.x0);
  const double iy0 = std::max(a.y0, b.y0);
  const double ix1 = std::min(a.x1, b.x1);
  const double iy1 = std::min(a.y1, b.y1);
  const double iw = ix1 - ix0;
  const double ih = iy1 - iy0;
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

PRCurve average_precision(const std::vector<Detection>& detections,
                          const std::map<int, std::vector<Box>>& gts, double iou_thr) {
  size_t total_gt = 0;
  for (const auto& [id, boxes] : gts) total_gt += boxes.size();
  if (total_gt == 0) throw NoGroundTruth("average precision needs at least one ground truth box");

  // Stable sort keeps insertion order among tied scores.
  std::vector<size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return detections[a].score > detections[b].score;
  });

  std::map<int, std::vector<uint8_t>> matched;
  for (const auto& [id, boxes] : gts) matched[id].assign(boxes.size(), 0);

  PRCurve curve;
  size_t tp = 0, n = 0;
  for (size_t idx : order) {
    const Detection& det = detections[idx];
    ++n;
    auto it = gts.find(det.image_id);
    if (it != gts.end()) {
      double best_iou = 0.0;
      int best = -1;
      auto& used = matched[det.image_id];
      for (size_t g = 0; g < it->second.size(); ++g) {
        if (used[g]) continue;
        const double iou = box_iou(det.box, it->second[g]);
        if (iou > best_iou) {
          best_iou = iou;
          best = static_cast<int>(g);
        }
      }
      if (best >= 0 && best_iou >= iou_thr) {
        used[best] = 1;
        ++tp;
      }
    }
    curve.points.push_back({static_cast<double>(tp) / total_gt,  // recall
                            static_cast<double>(tp) / n});       // precision
  }

  // All-point interpolation: integrate the precision envelope over recall.
  double envelope = 0.0;
  double ap = 0.0;
  for (size_t i = curve.points.size(); i-- > 0;) {
    envelope = std::max(envelope, curve.points[i].y);
    const double prev_recall = i == 0 ? 0.0 : curve.points[i - 1].x;
    ap += (curve.points[i].x - prev_recall) * envelope;
  }
  curve.ap = ap;
  return curve;
}

double roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw DimensionMismatch("scores/labels length mismatch");
  size_t pos = 0;
  for (bool l : labels) pos += l;
  const size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw SingleClass("AUC needs both classes");

  // Mann-Whitney via average ranks; ties contribute 0.5 per pair.
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k)
      if (labels[order[k]]) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  const double u = rank_sum_pos - static_cast<double>(pos) * (pos + 1) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double loss_smooth_l1(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() != target.size()) throw LengthMismatch("smooth L1 needs equal lengths");
  if (pred.empty()) throw LengthMismatch("smooth L1 needs at least one element");
  double sum = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = std::abs(pred[i] - target[i]);
    sum += d < 1.0 ? 0.5 * d * d : d - 0.5;
  }
  return sum / pred.size();
}

double loss_mse_normalized(const std::array<double, 8>& pred, const std::array<double, 8>& target,
                           const ParamStats& stats) {
  double sum = 0.0;
  for (int i = 0; i < 8; ++i) {
    const double d = (pred[i] - target[i]) / stats.std[i];
    sum += d * d;
  }
  return sum / 8.0;
}

namespace {

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// softplus(z) = log(1 + e^z), stable for large |z|
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

}  // namespace

double loss_classification(const std::vector<double>& logits, int label,
                           ClassificationLoss kind) {
  if (label < 0 || static_cast<size_t>(label) >= std::max<size_t>(logits.size(), 2))
    throw DimensionMismatch("label outside the logit range");
  for (double z : logits)
    if (!std::isfinite(z)) throw DimensionMismatch("non-finite logit");

  if (kind == ClassificationLoss::log_loss && logits.size() == 1) {
    // Bernoulli logit: -log p(label), p = sigmoid(z).
    const double z = logits[0];
    return label == 1 ? softplus(-z) : softplus(z);
  }
  if (logits.size() < 2) throw DimensionMismatch("softmax needs at least two logits");
  return log_sum_exp(logits) - logits[label];
}

double loss_pixel_bce(const std::vector<double>& logits, int width, int height,
                      const BitMask& gt) {
  if (width != gt.width || height != gt.height ||
      logits.size() != static_cast<size_t>(width) * height)
    throw DimensionMismatch("logit raster does not match the mask");
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    const double y = gt.bits[i] ? 1.0 : 0.0;
    // BCE with per-pixel sigmoid via the softplus identity.
    sum += softplus(z) - y * z;
  }
  return sum / logits.size();
}

}  // namespace keyforge
