#include "raap/correspondence.hpp"

#include <algorithm>
#include <limits>

#include "raap/errors.hpp"

namespace raap {

Eigen::RowVectorXd reference_contact_feature(const FeatureImage& reference, const Eigen::Vector2i& pixel) {
  if (!reference.contains(pixel.x(), pixel.y())) {
    throw ContractError("reference contact (" + std::to_string(pixel.x()) + ", " + std::to_string(pixel.y()) +
                        ") is outside the feature map");
  }
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(reference.channels());
  int count = 0;
  for (int y = std::max(0, pixel.y() - 1); y <= std::min(reference.height - 1, pixel.y() + 1); ++y) {
    for (int x = std::max(0, pixel.x() - 1); x <= std::min(reference.width - 1, pixel.x() + 1); ++x) {
      acc += reference.pixel(x, y);
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

Eigen::Vector2i transfer_contact(const FeatureImage& reference, const Eigen::Vector2i& reference_contact,
                                 const FeatureImage& query) {
  if (reference.empty() || query.empty()) {
    throw ContractError("transfer_contact: empty feature map");
  }
  if (reference.channels() != query.channels()) {
    throw DimensionError("transfer_contact: reference has " + std::to_string(reference.channels()) +
                         " channels, query has " + std::to_string(query.channels()));
  }
  const Eigen::RowVectorXd feature = reference_contact_feature(reference, reference_contact);
  const double feature_norm = feature.norm();
  if (feature_norm == 0.0) {
    throw NoCorrespondenceError("reference contact feature has zero norm");
  }
  const Eigen::RowVectorXd unit = feature / feature_norm;
  const Eigen::VectorXd dots = query.pixels * unit.transpose();
  const Eigen::VectorXd norms = query.pixels.rowwise().norm();

  double best = -std::numeric_limits<double>::infinity();
  Eigen::Index best_index = -1;
  for (Eigen::Index i = 0; i < dots.size(); ++i) {
    if (norms(i) == 0.0) {
      continue;
    }
    const double score = dots(i) / norms(i);
    if (score > best) {
      best = score;
      best_index = i;
    }
  }
  if (best_index < 0) {
    throw NoCorrespondenceError("query feature map has no non-zero pixel");
  }
  return {static_cast<int>(best_index % query.width), static_cast<int>(best_index / query.width)};
}

}  // namespace raap
