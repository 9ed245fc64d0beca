#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tmft {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Rng = std::mt19937_64;

namespace fs = std::filesystem;

// Configuration problems (bad field, unknown model, layer out of range).
// The CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad input data (malformed row, missing file, empty corpus).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Undefined numeric results (constant input to a correlation, zero-variance
// matrix in CKA, divergent training loss).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// FNV-1a, used for content hashes in manifests and run ids.
inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string to_hex(std::uint64_t v);

std::string read_file(const fs::path& path);
void write_file(const fs::path& path, std::string_view content);
// Write via a temp file in the same directory, then rename. Readers never
// observe a partially written file.
void atomic_write_file(const fs::path& path, std::string_view content);

std::string file_checksum(const fs::path& path);

}  // namespace tmft
