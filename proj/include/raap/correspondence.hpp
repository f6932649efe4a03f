#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "raap/image.hpp"

namespace raap {

/// Mean feature over the 3x3 neighborhood of `pixel`, clipped at the borders.
/// Throws ContractError when `pixel` lies outside the map.
Eigen::RowVectorXd reference_contact_feature(const FeatureImage& reference, const Eigen::Vector2i& pixel);

/// Query pixel whose feature has maximal cosine similarity with the reference
/// contact feature. Zero query features never match; ties go to the smallest
/// row-major index. Throws NoCorrespondenceError for a zero reference feature.
Eigen::Vector2i transfer_contact(const FeatureImage& reference, const Eigen::Vector2i& reference_contact,
                                 const FeatureImage& query);

/// Integer pixel holding a real-valued contact (floor of each coordinate).
inline Eigen::Vector2i contact_pixel(const Eigen::Vector2d& contact) {
  return {static_cast<int>(std::floor(contact.x())), static_cast<int>(std::floor(contact.y()))};
}

}  // namespace raap
