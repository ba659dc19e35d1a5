#include "hypnorm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hypnorm/error.hpp"

namespace hypnorm::ad {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {
  if (shape_.size() > 2) throw InvalidArgument("tensor rank above 2 is not supported");
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_.size() > 2) throw InvalidArgument("tensor rank above 2 is not supported");
  if (shape_size(shape_) != values_.size()) {
    throw ShapeError("Tensor", "shape " + shape_string(shape_) + " does not match " +
                                   std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Tensor::matrix", "ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(values));
}

std::size_t Tensor::rows() const noexcept { return shape_.size() == 2 ? shape_[0] : 1; }

std::size_t Tensor::cols() const noexcept {
  if (shape_.size() == 2) return shape_[1];
  if (shape_.size() == 1) return shape_[0];
  return 1;
}

double Tensor::item() const {
  if (values_.size() != 1) throw ShapeError("Tensor::item", "tensor holds " + std::to_string(values_.size()) + " values");
  return values_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

std::span<double> Tensor::grad() {
  if (grad_.size() != values_.size()) grad_.assign(values_.size(), 0.0);
  return grad_;
}

void Tensor::zero_grad() { grad_.assign(values_.size(), 0.0); }

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols, std::vector<SparseEntry> entries)
    : rows_(rows), cols_(cols) {
  for (const auto& e : entries) {
    if (e.row >= rows || e.col >= cols) {
      throw InvalidArgument("sparse entry (" + std::to_string(e.row) + "," + std::to_string(e.col) +
                            ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
    }
  }
  std::sort(entries.begin(), entries.end(), [](const SparseEntry& a, const SparseEntry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  for (const auto& e : entries) {
    if (!entries_.empty() && entries_.back().row == e.row && entries_.back().col == e.col) {
      entries_.back().value += e.value;
    } else {
      entries_.push_back(e);
    }
  }
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), std::pair{r, c},
                             [](const SparseEntry& e, const std::pair<std::size_t, std::size_t>& key) {
                               return e.row != key.first ? e.row < key.first : e.col < key.second;
                             });
  if (it != entries_.end() && it->row == r && it->col == c) return it->value;
  return 0.0;
}

SparseMatrix SparseMatrix::transposed() const {
  std::vector<SparseEntry> t;
  t.reserve(entries_.size());
  for (const auto& e : entries_) t.push_back({e.col, e.row, e.value});
  return SparseMatrix(cols_, rows_, std::move(t));
}

}  // namespace hypnorm::ad
