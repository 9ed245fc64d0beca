#include "tmft/cka.hpp"

#include <json.hpp>

#include <algorithm>

namespace tmft {

double linear_cka(const Mat& x, const Mat& y) {
    if (x.rows() != y.rows()) throw ConfigError("linear_cka: row-count mismatch");
    if (x.rows() < 2) throw ConfigError("linear_cka: need at least 2 rows");
    Mat xc = x.rowwise() - x.colwise().mean();
    Mat yc = y.rowwise() - y.colwise().mean();
    double cross = (yc.transpose() * xc).squaredNorm();
    double nx = (xc.transpose() * xc).norm();
    double ny = (yc.transpose() * yc).norm();
    if (nx == 0.0 || ny == 0.0)
        throw NumericError("linear_cka: zero-variance representation matrix");
    return cross / (nx * ny);
}

bool drop_diagnostic(const CKACurve& curve, int window, double delta) {
    if (static_cast<int>(curve.values.size()) <= window)
        throw ConfigError("drop_diagnostic: curve shorter than window");
    double max_all = curve.values[0].second;
    for (const auto& [l, v] : curve.values) max_all = std::max(max_all, v);
    double min_tail = curve.values.back().second;
    for (std::size_t i = curve.values.size() - window; i < curve.values.size(); ++i)
        min_tail = std::min(min_tail, curve.values[i].second);
    return max_all - min_tail > delta;
}

std::string cka_curve_json(const CKACurve& curve, int window, double delta) {
    nlohmann::json j;
    j["model_a"] = curve.model_a;
    j["model_b"] = curve.model_b;
    j["sentence_checksum"] = curve.sentence_checksum;
    for (const auto& [layer, value] : curve.values)
        j["curve"].push_back({{"layer", layer}, {"cka", value}});
    j["drop_diagnostic"] = {{"window", window}, {"delta", delta}};
    if (static_cast<int>(curve.values.size()) >= window)
        j["drop_diagnostic"]["flag"] = drop_diagnostic(curve, window, delta);
    else
        j["drop_diagnostic"]["flag"] = nullptr;  // curve shorter than the window
    return j.dump(2) + "\n";
}

}  // namespace tmft
