#pragma once

#include <cstddef>
#include <vector>

namespace sbd {

struct MeanCi {
    double mean = 0.0;
    double std_error = 0.0;
    double half_width = 0.0;  // 95% normal interval
    std::size_t n = 0;
};

MeanCi mean_ci(const std::vector<double>& xs);
double sample_variance(const std::vector<double>& xs);

struct LinearFit {
    double slope = 0.0, intercept = 0.0, r2 = 0.0;
};

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace sbd
