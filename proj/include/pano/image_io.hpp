// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "pano/tensor.hpp"

#include <string>

// 8-bit PNG and binary PPM (P6) ingestion/emission. Pixels map linearly to
// [0,1]; images are carried as (C,H,W) tensors with C = 1 or 3.

namespace pano::img {

TensorData<float> load_image(const std::string& path);
void save_image(const std::string& path, const TensorData<float>& chw);

TensorData<float> load_png(const std::string& path);
void save_png(const std::string& path, const TensorData<float>& chw);
TensorData<float> load_ppm(const std::string& path);
void save_ppm(const std::string& path, const TensorData<float>& chw);

}  // namespace pano::img
