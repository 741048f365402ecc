#pragma once

// "ARCT" tensor records: magic, u32 rank, rank x u32 dims, then little-endian float32 values.

#include <filesystem>
#include <iosfwd>

#include "arc/tensor.hpp"

namespace arc {

template <class S>
void write_tensor(std::ostream& out, const Tensor<S>& t);

/// Reads one record. Ranks below 4 are right-aligned onto (C, T, H, W).
template <class S>
Tensor<S> read_tensor(std::istream& in);

template <class S>
void save_tensor(const std::filesystem::path& path, const Tensor<S>& t);
template <class S>
Tensor<S> load_tensor(const std::filesystem::path& path);

void write_u32(std::ostream& out, std::uint32_t v);
std::uint32_t read_u32(std::istream& in, const char* what);

}  // namespace arc
