// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trimodal/mesh.hpp"

namespace trimodal {

// Procedural shape families used by the bundled toy datasets. Each generator
// yields a triangulated mesh plus an analytic part label per face, so
// segmentation ground truth is exact by construction.
//
// Families and their part classes (global ids):
//   box      : 0 z-faces, 1 x-faces, 2 y-faces
//   cylinder : 3 caps,    4 barrel
//   cone     : 5 base,    6 lateral

struct GeneratorSpec {
  std::string family;  // "box" | "cylinder" | "cone"
  uint64_t seed = 0;   // deformation stream
};

struct GeneratedShape {
  MeshObject mesh;
  std::vector<int32_t> face_parts;  // global part class per face
  int family_label = 0;             // 0 box, 1 cylinder, 2 cone
};

GeneratedShape generate_shape(const GeneratorSpec& spec);

int family_label_of(const std::string& family);
// Part class ids belonging to one family label, in ascending order.
std::vector<int32_t> family_part_classes(int family_label);
constexpr int kNumFamilies = 3;
constexpr int kNumPartClasses = 7;

// Writes JSONL manifests for the bundled toy corpora. Pre-training manifests
// carry {id, label, generator}; the partseg variant is consumed by the
// segmentation archive builder.
void write_toy_manifest(const std::string& path, int per_family, uint64_t seed,
                        const std::string& id_prefix);

}  // namespace trimodal
