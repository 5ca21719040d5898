#pragma once

#include <string>
#include <utility>

#include "s4c/draft.hpp"
#include "s4c/model.hpp"

namespace s4c {

// Single-file weight container, byte layout:
//   "S4CW"  4-byte magic
//   u16 LE  format version (currently 1)
//   u32 LE  metadata length in bytes
//   JSON    metadata: kind, model spec, ordered tensor manifest
//   payload concatenated tensors, little-endian float32, row-major
// The payload length must equal the manifest sum exactly; trailing bytes are an
// error. Values are stored as f32, so load(save(w)) == w only after one initial
// narrowing; save(load(path)) is byte-identical to the file at path.

struct DraftMeta {
    int n_heads = 0;
    int layers_per_head = 0;
};

void save_target_weights(const std::string& path, const ModelSpec& spec, const Weights& w);
std::pair<ModelSpec, Weights> load_target_weights(const std::string& path);

void save_draft_weights(const std::string& path, const ModelSpec& spec, const DraftMeta& meta,
                        const DraftWeights& w);
std::pair<ModelSpec, DraftWeights> load_draft_weights(const std::string& path,
                                                      DraftMeta* meta_out = nullptr);

// Rounds every entry to its float32 representation, the precision weights live
// at on disk. Applying this before first use keeps save/load cycles idempotent.
void narrow_to_f32(Weights& w);
void narrow_to_f32(DraftWeights& w);

} // namespace s4c
