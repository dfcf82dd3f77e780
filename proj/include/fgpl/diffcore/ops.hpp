#pragma once

#include <span>
#include <vector>

#include "fgpl/diffcore/tape.hpp"

// Differentiable ops over Tape-recorded tensors. Binary elementwise ops need
// equal shapes; the only broadcasting forms are the bias row in linear() and
// scalar multiplication.
namespace fgpl::ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
// Multiplies every element of `a` by the single element of scalar tensor `s`.
Var scale_by(Var a, Var s);

Var square(Var a);
Var sqrt(Var a);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var silu(Var a);
Var sigmoid(Var a);
Var log_sigmoid(Var a);

// Elementwise min; ties route the gradient to `a`.
Var minimum(Var a, Var b);
// Elementwise clamp; gradient is zero outside [lo, hi].
Var clamp(Var a, double lo, double hi);

Var sum(Var a);
Var mean(Var a);
// [B, C] -> [B]
Var row_sum(Var a);

// x: [B, in], w: [out, in], b: [out] -> [B, out]
Var linear(Var x, Var w, Var b);
// Column-wise concatenation of rank-2 tensors sharing the row count.
Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
Var slice_cols(Var a, std::size_t start, std::size_t len);
// table: [R, C] -> [ids.size(), C]
Var gather_rows(Var table, std::span<const int> ids);
// a: [B, K] -> [B], element idx[b] of each row
Var pick(Var a, std::span<const int> idx);
Var reshape(Var a, Shape shape);

Var softmax_rows(Var a);
Var log_softmax_rows(Var a);

// Copy of the value with no gradient path.
Var detach(Var a);

}  // namespace fgpl::ops
