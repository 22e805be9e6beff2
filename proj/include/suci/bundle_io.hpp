#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "suci/datagen.hpp"

namespace suci {

// On-disk bundle layout (format version kBundleFormatVersion):
//
//   <dir>/meta.json     config, subject table, split index, array shapes
//   <dir>/train.bin     sample records for each split, in meta order
//   <dir>/iid_test.bin
//   <dir>/ood_test.bin
//
// A sample record is x_t, x_v, x_a back to back, each T_m x d_m
// little-endian float32 in row-major order. Records are concatenated
// sample-major. meta.json lists, per split, the record stride, the byte
// offset of each modality inside a record and the payload byte size.
inline constexpr int kBundleFormatVersion = 1;

enum class BundleErrc {
  Io,
  VersionMismatch,
  Truncated,
  ShapeMismatch,
  Malformed,
};

const char* to_string(BundleErrc code);

class BundleError : public std::runtime_error {
 public:
  BundleError(BundleErrc code, const std::string& what);
  BundleErrc code() const noexcept { return code_; }

 private:
  BundleErrc code_;
};

void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir);
DatasetBundle load_bundle(const std::filesystem::path& dir);

}  // namespace suci
