#pragma once

#include <string>

#include "layersim/sequence.hpp"

namespace layersim {

// Wavefront OBJ of one frame: every garment layer as an object with 1-based
// contiguous vertex indices.
void export_obj(const std::string& path, const SequenceData& seq, int frame);

}  // namespace layersim
