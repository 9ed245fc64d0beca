#pragma once

#include "tmft/common.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace tmft {

// Named parameter with accumulated gradient. Vectors are stored 1 x n.
struct Tensor {
    std::string name;
    Mat value;
    Mat grad;
    bool decay = true;  // false for biases and layer-norm parameters
};

class ParameterStore {
  public:
    Tensor& add(const std::string& name, Eigen::Index rows, Eigen::Index cols, bool decay);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }

    std::vector<Tensor>& tensors() { return tensors_; }
    const std::vector<Tensor>& tensors() const { return tensors_; }

    void zero_grad();
    std::size_t total_params() const;
    double grad_norm() const;
    // Global norm clipping; no-op when the norm is within max_norm.
    void clip_grad(double max_norm);

    // Deep copies of the values only (for best-epoch retention).
    std::vector<Mat> snapshot_values() const;
    void restore_values(const std::vector<Mat>& values);

  private:
    std::vector<Tensor> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Minimal safetensors reader/writer (F64 written; F32 and F64 read).
void save_safetensors(const fs::path& file, const ParameterStore& params);
// Loads every tensor present in `params` by name; extra tensors in the file
// (e.g. blocks above the cut layer) are ignored. Shape mismatch names the
// offending tensor.
void load_safetensors(const fs::path& file, ParameterStore& params);

}  // namespace tmft
