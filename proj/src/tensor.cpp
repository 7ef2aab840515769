#include "ppgfp/tensor.hpp"

#include <cmath>
#include <sstream>

#include "ppgfp/error.hpp"

namespace ppgfp {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Input: return "input error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::Quality: return "quality error";
    case ErrorKind::Numeric: return "numeric guard error";
    case ErrorKind::Data: return "data error";
    case ErrorKind::Metric: return "metric error";
    case ErrorKind::Io: return "io error";
    case ErrorKind::Contract: return "contract error";
    case ErrorKind::Usage: return "usage error";
  }
  return "error";
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 2) {
    fail(ErrorKind::Dimension, "tensor rank must be 1 or 2, got " + std::to_string(shape.size()));
  }
  for (auto e : shape) {
    if (e == 0) fail(ErrorKind::Dimension, "tensor extents must be positive");
  }
}

}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_size(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (shape_size(shape_) != data_.size()) {
    fail(ErrorKind::Dimension, "tensor data length " + std::to_string(data_.size()) +
                                   " does not match shape " + shape_string(shape_));
  }
  if (!all_finite()) fail(ErrorKind::Numeric, "tensor contains non-finite entries");
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  for (auto& x : t.data_) x = value;
  if (!std::isfinite(value)) fail(ErrorKind::Numeric, "tensor contains non-finite entries");
  return t;
}

Tensor Tensor::row(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

std::size_t Tensor::rows() const { return shape_.size() == 1 ? 1 : shape_[0]; }

std::size_t Tensor::cols() const { return shape_.size() == 1 ? shape_[0] : shape_[1]; }

double Tensor::item() const {
  if (data_.size() != 1) fail(ErrorKind::Dimension, "item() on non-scalar tensor " + shape_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Tensor Tensor::reshaped(Shape shape) const {
  Tensor t;
  check_shape(shape);
  if (shape_size(shape) != data_.size()) {
    fail(ErrorKind::Dimension, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  t.shape_ = std::move(shape);
  t.data_ = data_;
  return t;
}

ComplexVector::ComplexVector(std::vector<double> r, std::vector<double> i)
    : re(std::move(r)), im(std::move(i)) {
  if (re.size() != im.size()) fail(ErrorKind::Dimension, "complex vector re/im length mismatch");
  for (std::size_t k = 0; k < re.size(); ++k) {
    if (!std::isfinite(re[k]) || !std::isfinite(im[k])) {
      fail(ErrorKind::Numeric, "complex vector contains non-finite entries");
    }
  }
}

}  // namespace ppgfp
