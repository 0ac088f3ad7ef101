#pragma once

#include <vector>

#include <Eigen/Dense>

namespace cpslab {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// Upper convex hull (Andrew's monotone chain), vertices left to right. Points with
/// equal abscissa keep the highest ordinate.
std::vector<Point2> upper_hull(std::vector<Point2> points);

struct InteriorMargin {
    bool ok = false;
    double delta = 0.0;  // radius of the largest origin-centred ball inside the hull
    double scale = 0.0;  // max |x_i|
    bool exact = true;   // false when delta came from sampled directions
};

/// Does the origin lie in the interior of conv{points}? Exact for d <= 2 and for
/// d = 3 up to `exact_limit` points; sampled support-function minimax otherwise.
InteriorMargin interior_margin(const std::vector<Eigen::VectorXd>& points, std::size_t exact_limit = 80,
                               std::size_t directions = 4096);

}  // namespace cpslab
