#pragma once

#include <functional>
#include <vector>

#include "pgt/tensor.hpp"

namespace pgt::ops {

// Differentiable primitives. Each op computes its forward result and, when a
// tape is given and an input participates in the graph, records a backward
// rule. They never mutate inputs.

Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor scale(const Tensor& a, double c, Tape* tape = nullptr);
Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor add_rowwise(const Tensor& x, const Tensor& bias, Tape* tape = nullptr);
Tensor softmax(const Tensor& x, int axis = -1, Tape* tape = nullptr);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5,
                  Tape* tape = nullptr);
Tensor gelu(const Tensor& x, Tape* tape = nullptr);
Tensor transpose(const Tensor& x, Tape* tape = nullptr);  // 2-D
Tensor reshape(const Tensor& x, std::vector<size_t> shape, Tape* tape = nullptr);
Tensor take(const Tensor& x, std::vector<size_t> flat_indices, Tape* tape = nullptr);
Tensor concat_rows(const std::vector<Tensor>& parts, Tape* tape = nullptr);
Tensor slice_rows(const Tensor& x, size_t row0, size_t row1, Tape* tape = nullptr);
Tensor concat_cols(const std::vector<Tensor>& parts, Tape* tape = nullptr);
Tensor slice_cols(const Tensor& x, size_t col0, size_t col1, Tape* tape = nullptr);
Tensor sum_all(const Tensor& x, Tape* tape = nullptr);
Tensor mean_all(const Tensor& x, Tape* tape = nullptr);

// h x w x c map, half-pixel-center bilinear, factor in {2,4,8}
Tensor upsample_bilinear(const Tensor& map, int factor, Tape* tape = nullptr);

// same-size cross-correlation; map h x w x c_in, kernel k x k x c_in x c_out,
// odd k, zero padding (k-1)/2
Tensor conv2d(const Tensor& map, const Tensor& kernel, const Tensor& bias, Tape* tape = nullptr);

// Losses (scalar outputs, mean reductions).
// logits N x K, labels numel N holding class ids; ignore_label pixels are
// skipped (pass a negative ignore_label to disable).
Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& labels, int ignore_label = -1,
                             Tape* tape = nullptr);
// elementwise binary CE on logits, target in {0,1}, per-class weights
Tensor bce_with_logits(const Tensor& logits, const Tensor& target, double pos_weight = 1.0,
                       double neg_weight = 1.0, Tape* tape = nullptr);
Tensor l1_loss(const Tensor& pred, const Tensor& target, Tape* tape = nullptr);
Tensor l2_loss(const Tensor& pred, const Tensor& target, Tape* tape = nullptr);

// Compares the taped gradient of scalar-valued f at x against central finite
// differences, coordinate by coordinate, and returns the largest error
// |analytic - numeric| / max(1, |analytic|, |numeric|). max_coords > 0 checks
// an evenly spaced subset instead of every coordinate.
double grad_check(const std::function<Tensor(const Tensor&, Tape*)>& f, const Tensor& x,
                  double eps = 1e-5, size_t max_coords = 0);

}  // namespace pgt::ops
