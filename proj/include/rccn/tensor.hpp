#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rccn {

/// Dense N-dimensional array of doubles, row-major, order <= 4.
/// Feature maps use N x C x H x W.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape_) : shape(std::move(shape_)) {
        check_shape();
        data.assign(numel_of(shape), 0.0);
    }

    Tensor(std::vector<int> shape_, std::vector<double> data_)
        : shape(std::move(shape_)), data(std::move(data_)) {
        check_shape();
        if (data.size() != static_cast<size_t>(numel_of(shape)))
            throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                        " does not match shape product " +
                                        std::to_string(numel_of(shape)));
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    long numel() const { return numel_of(shape); }
    int ndim() const { return static_cast<int>(shape.size()); }

    int dim(int i) const {
        if (i < 0 || i >= ndim())
            throw std::invalid_argument("Tensor::dim: axis " + std::to_string(i) +
                                        " out of range for ndim " + std::to_string(ndim()));
        return shape[static_cast<size_t>(i)];
    }

    // 4D accessors (N x C x H x W)
    double& at(int n, int c, int h, int w) { return data[static_cast<size_t>(index4(n, c, h, w))]; }
    const double& at(int n, int c, int h, int w) const {
        return data[static_cast<size_t>(index4(n, c, h, w))];
    }

    long index4(int n, int c, int h, int w) const {
        return ((static_cast<long>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w;
    }

    // 2D accessors (H x W)
    double& at(int h, int w) { return data[static_cast<size_t>(h) * shape[1] + w]; }
    const double& at(int h, int w) const { return data[static_cast<size_t>(h) * shape[1] + w]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    Tensor reshaped(std::vector<int> new_shape) const {
        if (numel_of(new_shape) != numel())
            throw std::invalid_argument("Tensor::reshaped: element count mismatch");
        return Tensor(std::move(new_shape), data);
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << ']';
        return os.str();
    }

    std::vector<int> shape;
    std::vector<double> data;

private:
    static long numel_of(const std::vector<int>& s) {
        long n = 1;
        for (int e : s) n *= e;
        return n;
    }

    void check_shape() const {
        if (shape.empty() || shape.size() > 4)
            throw std::invalid_argument("Tensor: order must be 1..4, got " +
                                        std::to_string(shape.size()));
        for (int e : shape)
            if (e <= 0)
                throw std::invalid_argument("Tensor: nonpositive extent in shape");
    }
};

inline double dot(const Tensor& a, const Tensor& b) {
    if (a.data.size() != b.data.size())
        throw std::invalid_argument("dot: size mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

}  // namespace rccn
