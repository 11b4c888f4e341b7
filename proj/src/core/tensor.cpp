#include "core/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gadan {

namespace {
int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw std::invalid_argument("negative tensor dimension");
        n *= d;
    }
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<detail::Storage>(static_cast<size_t>(shape_numel(shape_)))) {}

Tensor Tensor::zeros(std::vector<int64_t> shape) {
    Tensor t(std::move(shape));
    std::fill(t.data_->begin(), t.data_->end(), 0.0);
    return t;
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_->begin(), t.data_->end(), value);
    return t;
}

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<double> values) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
        throw std::invalid_argument("Tensor::from: element count mismatch");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<detail::Storage>(values.begin(), values.end());
    return t;
}

int64_t Tensor::numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

Tensor Tensor::clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<detail::Storage>(*data_);
    return t;
}

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
    if (shape_numel(shape) != numel())
        throw std::invalid_argument("Tensor::reshaped: element count mismatch");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
}

bool Tensor::all_finite() const {
    for (double v : *data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::item() const {
    if (numel() != 1) throw std::logic_error("Tensor::item: not a scalar");
    return (*data_)[0];
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << "]";
    return os.str();
}

}  // namespace gadan
