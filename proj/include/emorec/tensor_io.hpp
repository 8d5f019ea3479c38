#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emorec/common.hpp"

namespace emorec {

// Binary tensor container: magic "MMER", u32 version=1, u32 rank,
// u64 dims[rank], then a little-endian row-major payload.
// Dataset tensors carry float32, checkpoint tensors float64; the
// caller states which payload it expects.
enum class TensorDType { Float32, Float64 };

struct TensorFile {
    std::vector<std::uint64_t> dims;
    std::vector<double> values;  // row-major
};

void write_tensor(const std::string& path, const std::vector<std::uint64_t>& dims,
                  const std::vector<double>& values, TensorDType dtype);

TensorFile read_tensor(const std::string& path, TensorDType dtype);

// Convenience for rank-2 checkpoint tensors.
void write_matrix(const std::string& path, const MatrixXd& m);
MatrixXd read_matrix(const std::string& path);

}  // namespace emorec
