#include "wavemat/error.hpp"
#include "wavemat/eval.hpp"

namespace wavemat {

ConfusionCounts confusion(std::span<const ClassId> predictions, std::span<const ClassId> truth, std::size_t n_classes) {
  if (predictions.size() != truth.size()) {
    throw UsageError("predictions (" + std::to_string(predictions.size()) + ") and truth (" +
                     std::to_string(truth.size()) + ") differ in length");
  }
  ConfusionCounts c(n_classes);
  const auto valid = [&](ClassId id) { return id >= 0 && static_cast<std::size_t>(id) < n_classes; };
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const ClassId t = truth[i];
    const ClassId p = predictions[i];
    if (t == kUnknownClass) continue;
    if (!valid(t)) throw DataError("truth label " + std::to_string(t) + " outside the class table");
    if (p != kUnknownClass && !valid(p)) {
      throw DataError("predicted label " + std::to_string(p) + " outside the class table");
    }
    if (p == t) {
      ++c.tp[static_cast<std::size_t>(t)];
    } else {
      ++c.fn[static_cast<std::size_t>(t)];
      if (p != kUnknownClass) ++c.fp[static_cast<std::size_t>(p)];
    }
  }
  return c;
}

IouReport iou_report(const ConfusionCounts& counts) {
  IouReport r;
  r.per_class_iou.resize(counts.class_count());
  double sum = 0.0;
  std::size_t included = 0;
  for (std::size_t k = 0; k < counts.class_count(); ++k) {
    const std::uint64_t denom = counts.tp[k] + counts.fp[k] + counts.fn[k];
    if (denom == 0) continue;
    const double iou = static_cast<double>(counts.tp[k]) / static_cast<double>(denom);
    r.per_class_iou[k] = iou;
    sum += iou;
    ++included;
  }
  if (included == 0) throw DataError("IOU is undefined: no class has any prediction or ground truth");
  r.miou = sum / static_cast<double>(included);
  return r;
}

}  // namespace wavemat
