#include "tmft/params.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

using nlohmann::json;

namespace tmft {

Tensor& ParameterStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                            bool decay) {
    if (index_.count(name)) throw ConfigError("duplicate tensor name: " + name);
    index_[name] = tensors_.size();
    Tensor t;
    t.name = name;
    t.value = Mat::Zero(rows, cols);
    t.grad = Mat::Zero(rows, cols);
    t.decay = decay;
    tensors_.push_back(std::move(t));
    return tensors_.back();
}

Tensor& ParameterStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown tensor: " + name);
    return tensors_[it->second];
}

const Tensor& ParameterStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown tensor: " + name);
    return tensors_[it->second];
}

void ParameterStore::zero_grad() {
    for (auto& t : tensors_) t.grad.setZero();
}

std::size_t ParameterStore::total_params() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
    return n;
}

double ParameterStore::grad_norm() const {
    double sq = 0.0;
    for (const auto& t : tensors_) sq += t.grad.squaredNorm();
    return std::sqrt(sq);
}

void ParameterStore::clip_grad(double max_norm) {
    double norm = grad_norm();
    if (norm > max_norm && norm > 0.0) {
        double scale = max_norm / norm;
        for (auto& t : tensors_) t.grad *= scale;
    }
}

std::vector<Mat> ParameterStore::snapshot_values() const {
    std::vector<Mat> out;
    out.reserve(tensors_.size());
    for (const auto& t : tensors_) out.push_back(t.value);
    return out;
}

void ParameterStore::restore_values(const std::vector<Mat>& values) {
    if (values.size() != tensors_.size())
        throw ConfigError("restore_values: snapshot size mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) tensors_[i].value = values[i];
}

namespace {

void append_row_major(std::string& buf, const Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            double v = m(r, c);
            char bytes[8];
            std::memcpy(bytes, &v, 8);
            buf.append(bytes, 8);
        }
}

}  // namespace

void save_safetensors(const fs::path& file, const ParameterStore& params) {
    json header;
    std::string data;
    for (const auto& t : params.tensors()) {
        std::size_t begin = data.size();
        append_row_major(data, t.value);
        header[t.name] = {{"dtype", "F64"},
                          {"shape", {t.value.rows(), t.value.cols()}},
                          {"data_offsets", {begin, data.size()}}};
    }
    std::string hs = header.dump();
    std::uint64_t len = hs.size();
    std::string out;
    out.reserve(8 + hs.size() + data.size());
    for (int i = 0; i < 8; ++i) out += static_cast<char>((len >> (8 * i)) & 0xff);
    out += hs;
    out += data;
    atomic_write_file(file, out);
}

void load_safetensors(const fs::path& file, ParameterStore& params) {
    std::string blob = read_file(file);
    if (blob.size() < 8) throw DataError("truncated safetensors file: " + file.string());
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>((unsigned char)blob[i]) << (8 * i);
    if (8 + len > blob.size()) throw DataError("corrupt safetensors header: " + file.string());
    json header = json::parse(blob.substr(8, len));
    const char* data = blob.data() + 8 + len;
    std::size_t data_size = blob.size() - 8 - len;

    for (auto& t : params.tensors()) {
        auto it = header.find(t.name);
        if (it == header.end())
            throw DataError("checkpoint missing tensor: " + t.name);
        const auto& meta = *it;
        std::string dtype = meta.at("dtype");
        auto shape = meta.at("shape").get<std::vector<Eigen::Index>>();
        Eigen::Index rows = shape.size() > 0 ? shape[0] : 1;
        Eigen::Index cols = shape.size() > 1 ? shape[1] : 1;
        if (shape.size() == 1) {
            rows = 1;
            cols = shape[0];
        }
        if (rows != t.value.rows() || cols != t.value.cols())
            throw DataError("shape mismatch for tensor '" + t.name + "': checkpoint " +
                            std::to_string(rows) + "x" + std::to_string(cols) + ", model " +
                            std::to_string(t.value.rows()) + "x" +
                            std::to_string(t.value.cols()));
        auto offsets = meta.at("data_offsets").get<std::vector<std::size_t>>();
        if (offsets.size() != 2 || offsets[1] > data_size || offsets[0] > offsets[1])
            throw DataError("bad data offsets for tensor: " + t.name);
        std::size_t elem = dtype == "F64" ? 8 : dtype == "F32" ? 4 : 0;
        if (elem == 0) throw DataError("unsupported dtype '" + dtype + "' for " + t.name);
        std::size_t count = static_cast<std::size_t>(rows * cols);
        if (offsets[1] - offsets[0] != count * elem)
            throw DataError("data size mismatch for tensor: " + t.name);
        const char* p = data + offsets[0];
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) {
                if (elem == 8) {
                    double v;
                    std::memcpy(&v, p, 8);
                    t.value(r, c) = v;
                    p += 8;
                } else {
                    float v;
                    std::memcpy(&v, p, 4);
                    t.value(r, c) = v;
                    p += 4;
                }
            }
    }
}

}  // namespace tmft
