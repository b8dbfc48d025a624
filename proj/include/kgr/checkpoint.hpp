#pragma once

// Binary checkpoint layout (all integers and floats little-endian):
//
//   "KGE1"                      magic
//   u32 version                 currently 1
//   u32 model tag               ModelKind
//   u64 k                       embedding dimension
//   u64 |E|, u64 |R|
//   section config              u64 byte length + "key=value\n" text
//   section entity ids          u64 byte length + (u32 length + bytes) per id
//   section relation ids        same
//   section entity table        u64 double count + f64 values, row-major
//   section relation table      same
//   u64 epoch
//   section rng state           u64 byte length + text

#include <iosfwd>
#include <optional>
#include <string>

#include "kgr/model.hpp"

namespace kgr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ModelState& state, const std::string& path);
void write_checkpoint(std::ostream& out, const ModelState& state);

// Throws DataError on bad magic, version mismatch, truncation, or a model tag
// different from `expected`.
ModelState load_checkpoint(const std::string& path,
                           std::optional<ModelKind> expected = std::nullopt);
ModelState read_checkpoint(std::istream& in, std::optional<ModelKind> expected = std::nullopt);

// One row per entity: id, then the embedding values.
void export_embeddings(std::ostream& out, const ModelState& state);

}  // namespace kgr
