#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cooc/cooc.hpp"
#include "cooc/pooling.hpp"
#include "cooc/postproc.hpp"
#include "cooc/retrieval.hpp"
#include "cooc/tensor.hpp"

// Binary containers. All integers are unsigned 32-bit little-endian and all
// reals IEEE-754 binary32 little-endian; every container starts with a
// 4-byte ASCII magic and a one-byte version (1).
//
//   COOC  tensor      M, N, D, then M*N*D values, channel fastest
//   COOW  whitening   input dim, output dim, mean, projection (row-major),
//                     eigenvalues
//   COOI  index       count, dim, count x (u16 length + UTF-8 id), matrix
//   COOF  filter      D, S, then weights in (out, in, row, col) order
//
// Trailing bytes are rejected.

namespace cooc {

Tensor<float> load_tensor(const std::filesystem::path& path);
void save_tensor(const Tensor<float>& t, const std::filesystem::path& path);

/// Descriptors are stored as 1 x 1 x D tensors.
Descriptor<float> load_descriptor(const std::filesystem::path& path);
void save_descriptor(const Descriptor<float>& d, const std::filesystem::path& path);

WhiteningModel<float> load_whitening(const std::filesystem::path& path);
void save_whitening(const WhiteningModel<float>& m, const std::filesystem::path& path);

DescriptorIndex<float> load_index(const std::filesystem::path& path);
void save_index(const DescriptorIndex<float>& idx, const std::filesystem::path& path);

CoocFilter<float> load_filter(const std::filesystem::path& path);
void save_filter(const CoocFilter<float>& f, const std::filesystem::path& path);

/// Byte-level codec, exposed for tests.
std::vector<unsigned char> encode_tensor(const Tensor<float>& t);
Tensor<float> decode_tensor(std::span<const unsigned char> bytes, const std::string& origin);

/// Writes a real matrix as CSV (one row per line, max round-trip precision).
void write_csv(const Eigen::MatrixXd& m, const std::filesystem::path& path);

/// Writes an 8-bit binary PGM, min-max scaled to [0, 255] (constant maps to 0).
void write_pgm(const Eigen::MatrixXd& m, const std::filesystem::path& path);

}  // namespace cooc
