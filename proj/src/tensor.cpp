#include "fadnet/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "fadnet/errors.hpp"

namespace fadnet {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have rank >= 1");
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
}
}  // namespace

Tensor::Tensor(Shape shape, double fill, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  check_shape(shape);
  impl_->values.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  check_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("payload length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->values.assign(values.begin(), values.end());
  impl_->requires_grad = requires_grad;
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const { return impl_->shape.at(axis); }

std::size_t Tensor::numel() const { return impl_->values.size(); }

std::span<double> Tensor::values() { return impl_->values; }
std::span<const double> Tensor::values() const { return impl_->values; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->values[0];
}

double Tensor::at(std::size_t c, std::size_t y, std::size_t x) const {
  const auto& s = impl_->shape;
  return impl_->values[(c * s[1] + y) * s[2] + x];
}

double& Tensor::at(std::size_t c, std::size_t y, std::size_t x) {
  const auto& s = impl_->shape;
  return impl_->values[(c * s[1] + y) * s[2] + x];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<double> Tensor::grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t(impl_->shape, 0.0);
  t.impl_->values = impl_->values;
  return t;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_str(this->shape()) + " to " + shape_str(shape));
  }
  Tensor t(std::move(shape), 0.0);
  t.impl_->values = impl_->values;
  return t;
}

void Tape::record(std::string_view op, std::vector<Tensor> operands, Tensor output,
                  BackwardFn backward) {
  output.set_requires_grad(true);
  entries_.push_back(Entry{std::string(op), std::move(operands), std::move(output),
                           std::move(backward)});
}

bool Tape::needs_grad(std::initializer_list<const Tensor*> operands) const {
  if (!recording_) return false;
  return std::any_of(operands.begin(), operands.end(),
                     [](const Tensor* t) { return t && t->defined() && t->requires_grad(); });
}

void backward(const Tensor& root, Tape& tape) {
  if (!root.defined() || root.numel() != 1) {
    throw ContractError("backward requires a scalar root, got shape " +
                        (root.defined() ? shape_str(root.shape()) : std::string("<undefined>")));
  }
  for (auto& e : tape.entries_) {
    e.output.grad();  // allocate
    e.output.zero_grad();
  }
  Tensor r = root;
  if (!r.requires_grad()) return;
  r.grad()[0] += 1.0;
  for (auto it = tape.entries_.rbegin(); it != tape.entries_.rend(); ++it) {
    it->backward();
  }
}

}  // namespace fadnet
