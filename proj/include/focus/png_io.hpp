#pragma once

#include <string>

#include "focus/tensor.hpp"

namespace focus {

// 8-bit PNG with fixed encoder settings (compression 6, filter NONE), so the
// same pixels always produce the same bytes. Values clamp to [0,1] and
// quantize by round(v*255).
void write_png_gray(const std::string& path, const Tensor& img);  // [H,W]
void write_png_rgb(const std::string& path, const Tensor& img);   // [3,H,W]

// any PNG flavour; result is [3,H,W] in [0,1], gray replicated, alpha dropped
Tensor read_png(const std::string& path);

}  // namespace focus
