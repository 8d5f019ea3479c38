#include "emorec/tensor_io.hpp"

#include <cstring>
#include <fstream>

namespace emorec {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'E', 'R'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_raw(std::ofstream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& is, const std::string& path) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError("truncated tensor file: " + path);
    return v;
}

}  // namespace

void write_tensor(const std::string& path, const std::vector<std::uint64_t>& dims,
                  const std::vector<double>& values, TensorDType dtype) {
    std::uint64_t count = 1;
    for (auto d : dims) count *= d;
    if (count != values.size())
        throw DataError("tensor dims do not match value count: " + path);

    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open tensor file for writing: " + path);
    os.write(kMagic, 4);
    write_raw(os, kVersion);
    write_raw(os, static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) write_raw(os, d);
    if (dtype == TensorDType::Float32) {
        for (double v : values) write_raw(os, static_cast<float>(v));
    } else {
        os.write(reinterpret_cast<const char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(double)));
    }
    if (!os) throw DataError("write failed: " + path);
}

TensorFile read_tensor(const std::string& path, TensorDType dtype) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open tensor file: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("bad magic in tensor file: " + path);
    auto version = read_raw<std::uint32_t>(is, path);
    if (version != kVersion)
        throw DataError("unsupported tensor version " + std::to_string(version) +
                        " in " + path);
    auto rank = read_raw<std::uint32_t>(is, path);
    TensorFile t;
    t.dims.resize(rank);
    std::uint64_t count = 1;
    for (auto& d : t.dims) {
        d = read_raw<std::uint64_t>(is, path);
        count *= d;
    }
    t.values.resize(count);
    if (dtype == TensorDType::Float32) {
        for (auto& v : t.values) v = read_raw<float>(is, path);
    } else {
        is.read(reinterpret_cast<char*>(t.values.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        if (!is) throw DataError("truncated tensor file: " + path);
    }
    return t;
}

void write_matrix(const std::string& path, const MatrixXd& m) {
    std::vector<double> vals(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            vals[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    write_tensor(path,
                 {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
                 vals, TensorDType::Float64);
}

MatrixXd read_matrix(const std::string& path) {
    TensorFile t = read_tensor(path, TensorDType::Float64);
    if (t.dims.size() != 2) throw DataError("expected rank-2 tensor: " + path);
    MatrixXd m(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            m(r, c) = t.values[static_cast<std::size_t>(r * m.cols() + c)];
    return m;
}

}  // namespace emorec
