#pragma once

#include <cmath>
#include <cstdint>

#include "nescl/common.hpp"
#include "nescl/mat.hpp"

namespace nescl {

// Adaptive-moment optimizer state; shapes mirror the parameter table.
struct AdamState {
    Mat first_moment;
    Mat second_moment;
    std::uint64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;
    AdamState(std::size_t rows, std::size_t cols)
        : first_moment(rows, cols), second_moment(rows, cols) {}
};

inline void adam_step(Mat& param, const Mat& grad, AdamState& st, double lr) {
    if (param.rows != grad.rows || param.cols != grad.cols)
        throw ShapeError("adam_step: parameter/gradient shape mismatch");
    if (st.first_moment.rows != param.rows || st.first_moment.cols != param.cols)
        throw ShapeError("adam_step: optimizer state shape mismatch");
    ++st.step;
    const double bias1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bias2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < param.data.size(); ++i) {
        const double g = grad.data[i];
        double& m = st.first_moment.data[i];
        double& v = st.second_moment.data[i];
        m = st.beta1 * m + (1.0 - st.beta1) * g;
        v = st.beta2 * v + (1.0 - st.beta2) * g * g;
        param.data[i] -= lr * (m / bias1) / (std::sqrt(v / bias2) + st.eps);
    }
}

}  // namespace nescl
