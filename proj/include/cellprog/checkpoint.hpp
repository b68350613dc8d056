#pragma once

// CPG1 parameter container. All integers and floats are little-endian.
//
//   bytes 0..3   "CPG1"
//   u32          parameter count
//   per parameter, in store order:
//     u32        name length in bytes
//     bytes      name (UTF-8, no terminator)
//     u32        rank
//     u64[rank]  dimensions
//     f64[prod]  values, row-major

#include <filesystem>
#include <string>
#include <vector>

#include "cellprog/params.hpp"

namespace cellprog {

std::vector<unsigned char> encode_checkpoint(const ParamStore& params);
ParamStore decode_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params);
ParamStore load_checkpoint(const std::filesystem::path& path);

/// Copies values from `source` into `target`; names, order and shapes must match.
void assign_params(ParamStore& target, const ParamStore& source);

}  // namespace cellprog
