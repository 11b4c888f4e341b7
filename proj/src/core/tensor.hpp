#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace gadan {

namespace detail {
/// Allocator for tensor storage: 64-byte aligned and with no-op default
/// construction. The alignment keeps vector-kernel peeling identical across
/// allocations (heap address must not influence summation order), and the
/// no-op construct means Tensor(shape) returns uninitialized memory; use
/// Tensor::zeros when cleared storage is required.
template <typename T>
struct NoInitAllocator {
    using value_type = T;
    NoInitAllocator() = default;
    template <typename U>
    NoInitAllocator(const NoInitAllocator<U>&) {}
    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(64)));
    }
    void deallocate(T* p, std::size_t) noexcept {
        ::operator delete(p, std::align_val_t(64));
    }
    template <typename U, typename... Args>
    void construct(U* p, Args&&... args) {
        if constexpr (sizeof...(Args) > 0)
            ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
    bool operator==(const NoInitAllocator&) const { return true; }
    bool operator!=(const NoInitAllocator&) const { return false; }
};
using Storage = std::vector<double, NoInitAllocator<double>>;
}  // namespace detail

/// Dense row-major tensor of doubles. Copies are shallow (shared storage);
/// use clone() when a private buffer is needed. The default constructor of
/// the underlying buffer does not zero memory.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);

    static Tensor zeros(std::vector<int64_t> shape);
    static Tensor full(std::vector<int64_t> shape, double value);
    static Tensor ones(std::vector<int64_t> shape) { return full(std::move(shape), 1.0); }
    static Tensor scalar(double value) { return full({1}, value); }
    static Tensor from(std::vector<int64_t> shape, std::vector<double> values);

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t dim(size_t i) const { return shape_.at(i); }
    size_t rank() const { return shape_.size(); }
    int64_t numel() const;
    bool defined() const { return data_ != nullptr; }

    double* data() { return data_->data(); }
    const double* data() const { return data_->data(); }
    double& operator[](int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

    Tensor clone() const;
    /// Same storage, new shape (element count must match).
    Tensor reshaped(std::vector<int64_t> shape) const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    double item() const;

    std::string shape_str() const;

private:
    std::vector<int64_t> shape_;
    std::shared_ptr<detail::Storage> data_;
};

}  // namespace gadan
