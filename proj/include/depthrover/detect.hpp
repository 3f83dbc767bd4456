#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthrover/image.hpp"

namespace depthrover {

/// Half-open pixel rectangle [x_min, x_max) x [y_min, y_max).
struct Box {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  double area() const { return std::max(0.0, x_max - x_min) * std::max(0.0, y_max - y_min); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }
  bool operator==(const Box&) const = default;
};

struct Detection {
  Box box;
  double confidence = 0.0;
  std::optional<double> range;  // meters
  std::string class_label = "obstacle";
  double source_timestamp = 0.0;

  bool operator==(const Detection&) const = default;
};

struct DetectorConfig {
  double near_threshold = 1.0;        // meters
  double confidence_threshold = 0.25;
  double nms_iou_threshold = 0.2;
  int min_area = 25;                  // pixels
  double period_hz = 10.0;

  void validate() const;
};

double iou(const Box& a, const Box& b);

/// Greedy suppression in descending confidence (ties: smaller x_min, then
/// smaller y_min). A box is kept iff its IoU with every kept box is at most
/// `iou_threshold`.
std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold);

/// Obstacles are 4-connected blobs of valid pixels nearer than
/// `near_threshold`. Confidence is the blob's fill ratio of its box; range is
/// the blob's median depth.
std::vector<Detection> detect(const DepthMap& depth, const DetectorConfig& config,
                              double timestamp = 0.0);

nlohmann::json detection_to_json(const Detection& d);
Detection detection_from_json(const nlohmann::json& j);

}  // namespace depthrover
