#pragma once

#include <Eigen/Core>

namespace npcviz {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

// Row-major n x D matrix of doubles; rows follow dataset instance order.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// n x 2 projected coordinates, row i belongs to the i-th stored instance.
using Layout = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

}  // namespace npcviz
