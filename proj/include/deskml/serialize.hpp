#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "deskml/layers.hpp"

namespace deskml {

/// Parameter container layout (all integers little-endian):
///
///   bytes 0..7    magic "DESKMLP1"
///   bytes 8..15   u64 length L of the JSON index
///   next L bytes  UTF-8 JSON: {"format":"deskml-params","version":1,
///                 "tensors":[{"name":..,"shape":[..],"offset":..,"count":..}, ...]}
///   remainder     raw float64 values, little-endian; `offset` is in bytes from
///                 the start of this data section, `count` in elements
struct NamedTensor {
    std::string name;
    Tensor tensor;
};

void save_parameters(const std::filesystem::path& path, const ParamList& params);
std::vector<NamedTensor> load_parameters(const std::filesystem::path& path);
/// Loads a container and copies every tensor into the matching entry of
/// `params`; names and shapes must agree one-to-one.
void restore_parameters(const std::filesystem::path& path, const ParamList& params);

}  // namespace deskml
