#pragma once

#include <filesystem>
#include <string>
#include <utility>

#include "gridcrf/model.hpp"

namespace gridcrf {

// Versioned JSON document holding a model and its weights. Doubles are
// written in shortest round-trip decimal form, so serialization is
// bit-faithful for finite values; non-finite values are rejected.
std::string model_to_json(const GridModel& model, const Weights& weights);
std::pair<GridModel, Weights> model_from_json(const std::string& text);

void save_model(const std::filesystem::path& path, const GridModel& model,
                const Weights& weights);
std::pair<GridModel, Weights> load_model(const std::filesystem::path& path);

} // namespace gridcrf
