#pragma once

#include "tmft/common.hpp"

#include <string>
#include <vector>

namespace tmft {

struct RepresentationMatrix {
    Mat X;  // m sentences x d hidden width, mean-pooled per sentence
    int layer = 0;
    std::string model_id;
};

struct CKACurve {
    std::vector<std::pair<int, double>> values;  // (shared layer index, cka)
    std::string model_a;
    std::string model_b;
    std::string sentence_checksum;
};

// Linear CKA between column-centered X and Y: |Y^T X|_F^2 / (|X^T X|_F |Y^T Y|_F).
// Row counts must match; widths may differ.
double linear_cka(const Mat& x, const Mat& y);

// True iff max(curve) - min over the last `window` values exceeds delta.
bool drop_diagnostic(const CKACurve& curve, int window = 3, double delta = 0.1);

std::string cka_curve_json(const CKACurve& curve, int window = 3, double delta = 0.1);

}  // namespace tmft
