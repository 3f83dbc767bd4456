#include "depthrover/detect.hpp"

#include <algorithm>
#include <stdexcept>

#include "depthrover/geometry.hpp"

namespace depthrover {

void DetectorConfig::validate() const {
  if (!(near_threshold > 0)) throw DomainError("detector.near_threshold must be positive");
  if (!(confidence_threshold >= 0 && confidence_threshold <= 1))
    throw DomainError("detector.confidence_threshold must lie in [0, 1]");
  if (!(nms_iou_threshold >= 0 && nms_iou_threshold <= 1))
    throw DomainError("detector.nms_iou_threshold must lie in [0, 1]");
  if (min_area < 1) throw DomainError("detector.min_area must be at least 1");
  if (!(period_hz > 0)) throw DomainError("detector.period must be positive");
}

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold) {
  std::stable_sort(detections.begin(), detections.end(), [](const Detection& a, const Detection& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.box.x_min != b.box.x_min) return a.box.x_min < b.box.x_min;
    return a.box.y_min < b.box.y_min;
  });
  std::vector<Detection> kept;
  for (Detection& d : detections) {
    const bool clear = std::all_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return iou(k.box, d.box) <= iou_threshold;
    });
    if (clear) kept.push_back(std::move(d));
  }
  return kept;
}

std::vector<Detection> detect(const DepthMap& depth, const DetectorConfig& config,
                              double timestamp) {
  config.validate();
  const int w = depth.width(), h = depth.height();
  const auto near = [&](int x, int y) {
    return depth.valid(y, x) && depth.values(y, x) < config.near_threshold;
  };

  std::vector<char> seen(std::size_t(w) * h, 0);
  std::vector<int> stack;
  std::vector<double> ranges;
  std::vector<Detection> candidates;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      if (seen[std::size_t(y0) * w + x0] || !near(x0, y0)) continue;
      seen[std::size_t(y0) * w + x0] = 1;
      stack.assign(1, y0 * w + x0);
      ranges.clear();
      int x_min = x0, x_max = x0, y_min = y0, y_max = y0;
      while (!stack.empty()) {
        const int idx = stack.back();
        stack.pop_back();
        const int x = idx % w, y = idx / w;
        ranges.push_back(depth.values(y, x));
        x_min = std::min(x_min, x);
        x_max = std::max(x_max, x);
        y_min = std::min(y_min, y);
        y_max = std::max(y_max, y);
        constexpr int kDx[4] = {1, -1, 0, 0}, kDy[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int nx = x + kDx[k], ny = y + kDy[k];
          if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
          char& s = seen[std::size_t(ny) * w + nx];
          if (s || !near(nx, ny)) continue;
          s = 1;
          stack.push_back(ny * w + nx);
        }
      }
      const int area = int(ranges.size());
      if (area < config.min_area) continue;

      Detection d;
      d.box = {double(x_min), double(y_min), double(x_max + 1), double(y_max + 1)};
      d.confidence = double(area) / d.box.area();
      const std::size_t mid = ranges.size() / 2;
      std::nth_element(ranges.begin(), ranges.begin() + mid, ranges.end());
      double median = ranges[mid];
      if (ranges.size() % 2 == 0)
        median = 0.5 * (median + *std::max_element(ranges.begin(), ranges.begin() + mid));
      d.range = median;
      d.source_timestamp = timestamp;
      if (d.confidence >= config.confidence_threshold) candidates.push_back(std::move(d));
    }
  }
  return nms(std::move(candidates), config.nms_iou_threshold);
}

nlohmann::json detection_to_json(const Detection& d) {
  return {{"box", {d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max}},
          {"confidence", d.confidence},
          {"range_m", d.range ? nlohmann::json(*d.range) : nlohmann::json(nullptr)},
          {"label", d.class_label},
          {"ts", d.source_timestamp}};
}

Detection detection_from_json(const nlohmann::json& j) {
  Detection d;
  const auto& b = j.at("box");
  if (!b.is_array() || b.size() != 4) throw std::invalid_argument("box must have 4 entries");
  d.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
  d.confidence = j.at("confidence").get<double>();
  if (j.contains("range_m") && !j.at("range_m").is_null()) d.range = j.at("range_m").get<double>();
  d.class_label = j.value("label", std::string("obstacle"));
  d.source_timestamp = j.value("ts", 0.0);
  return d;
}

}  // namespace depthrover
