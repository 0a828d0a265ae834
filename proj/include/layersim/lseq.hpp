#pragma once

#include <string>

#include "layersim/sequence.hpp"

namespace layersim {

// LSEQ sequence files, little-endian:
//   "LSEQ" | u32 version=1 | u64 header length | UTF-8 JSON header |
//   per frame: f32 garment positions (layer 0 then 1), f32 body sample
//   positions, f32 body sample normals, f32[5] wind (quat w,x,y,z, strength).
// The JSON header holds the layer topologies/UVs, patch map, attributes,
// dt, collider description, frame count and seed. Writing is deterministic:
// equal SequenceData gives byte-identical files.
void write_lseq(const std::string& path, const SequenceData& seq);

SequenceData read_lseq(const std::string& path);

}  // namespace layersim
