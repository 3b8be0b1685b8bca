#pragma once

#include <vector>

#include "idm/tape.hpp"

namespace idm::ad {

// x:[B,I] W:[O,I] b:[O] -> [B,O]
Value* linear(Value* x, Value* W, Value* b);

// x:[B,C,H,W] K:[F,C,kh,kw] -> [B,F,H',W'] (cross-correlation)
Value* conv2d(Value* x, Value* K, int padding, int stride);

// adds b:[F] to every pixel of channel f
Value* channel_bias(Value* x, Value* b);

Value* relu(Value* x);
Value* maxpool2x2(Value* x);           // [B,C,H,W] -> [B,C,H/2,W/2]
Value* global_max_pool(Value* x);      // [B,C,H,W] -> [B,C]
Value* softmax(Value* x);              // row-wise on [B,K]
Value* log_softmax(Value* x);

// mean of -log softmax(logits)[b, labels[b]]
Value* cross_entropy_loss(Value* logits, const std::vector<int>& labels);
Value* mse_loss(Value* a, Value* b);   // mean squared difference, scalar

Value* add(Value* a, Value* b);
Value* sub(Value* a, Value* b);
Value* scale(Value* a, double c);
Value* reshape(Value* x, std::vector<int> shape);
Value* concat_cols(Value* a, Value* b);  // [B,I]+[B,J] -> [B,I+J]
Value* detach(Value* x);                 // forward copy, blocks gradient
Value* gather_rows(Value* table, const std::vector<int>& rows);

}  // namespace idm::ad
