#pragma once

#include <string>

#include "dj/model.hpp"

namespace dj {

// Model file: one JSON document. Header fields in fixed order
// (format_version, input_shape, class_count, metadata, layers), weight
// arrays as flat row-major lists, reals at 17 significant digits so that
// load(save(m)) reproduces every parameter bit-exactly.
std::string model_to_json(const Model& model);
Model model_from_json(const std::string& text, const std::string& origin = "model");

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

inline constexpr int kModelFormatVersion = 1;

} // namespace dj
