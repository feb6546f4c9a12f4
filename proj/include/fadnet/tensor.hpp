#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fadnet {

using Shape = std::vector<std::size_t>;

/// Allocator with 64-byte alignment. Vectorized matrix kernels choose their
/// summation order from the buffer alignment, so every numeric buffer uses
/// one fixed alignment to keep results bit-reproducible across runs.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major float64 array with an optional gradient buffer.
///
/// Tensor is a handle: copies share storage, the way autograd frameworks
/// pass activations around. Use clone() for an independent deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<double> values();
  std::span<const double> values() const;
  double item() const;

  // CHW accessors; valid for rank-3 tensors.
  double at(std::size_t c, std::size_t y, std::size_t x) const;
  double& at(std::size_t c, std::size_t y, std::size_t x);

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  /// Gradient buffer; allocated (zero-filled) on first access. The buffer
  /// belongs to the shared storage, so const handles can accumulate into it.
  std::span<double> grad() const;
  void zero_grad();

  Tensor clone() const;
  /// Same values, fresh storage, no gradient tracking.
  Tensor detach() const { return clone(); }
  Tensor reshaped(Shape shape) const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    Buffer values;
    Buffer grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/// Ordered record of differentiable primitive applications.
///
/// Every entry's operands were produced by an earlier entry or are leaves,
/// so a reverse sweep visits each node after all of its consumers.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  /// Appends an entry. Called by primitives when any operand requires grad.
  void record(std::string_view op, std::vector<Tensor> operands, Tensor output,
              BackwardFn backward);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }
  std::string_view op_name(std::size_t i) const { return entries_.at(i).op; }

  /// Recording can be switched off for inference; primitives then skip
  /// gradient bookkeeping entirely.
  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  /// True when an op over these operands must be recorded.
  bool needs_grad(std::initializer_list<const Tensor*> operands) const;

 private:
  friend void backward(const Tensor& root, Tape& tape);
  struct Entry {
    std::string op;
    std::vector<Tensor> operands;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
  bool recording_ = true;
};

/// Reverse sweep from a scalar root. Leaf gradients accumulate across calls;
/// intermediate gradients are reset at the start of every sweep.
void backward(const Tensor& root, Tape& tape);

}  // namespace fadnet
