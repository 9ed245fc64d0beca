#pragma once

#include "tmft/common.hpp"

namespace tmft {

// Epsilon-stabilized cosine: denominator max(|u||v|, 1e-8).
double cosine_similarity(const Vec& u, const Vec& v);

struct PairObjectiveResult {
    double loss = 0.0;
    Vec du, dv;
};

// (cosine(u, v) - gold/5)^2
PairObjectiveResult sts_objective(const Vec& u, const Vec& v, double gold);

// (cosine(u, v) - score)^2, score already normalized to [0,1]
PairObjectiveResult word_similarity_objective(const Vec& u, const Vec& v, double score);

// sigmoid(a * cosine + b) against a binary label, binary cross entropy.
// a and b are learnable scalars, initialized a=5, b=0.
struct ParaphraseHead {
    double a = 5.0;
    double b = 0.0;
    double da = 0.0;
    double db = 0.0;

    PairObjectiveResult loss(const Vec& u, const Vec& v, int label);
    double score(const Vec& u, const Vec& v) const { return cosine_similarity(u, v); }
    void zero_grad() { da = db = 0.0; }
};

// Linear head over concat(u, v, |u-v|) to 3 logits, cross-entropy loss.
struct EntailmentHead {
    Mat w;   // 3 x 3d
    Vec bias;  // 3
    Mat dw;
    Vec dbias;

    explicit EntailmentHead(int d);
    void random_initialize(std::uint64_t seed);
    Vec logits(const Vec& u, const Vec& v) const;
    int predict(const Vec& u, const Vec& v) const;
    PairObjectiveResult loss(const Vec& u, const Vec& v, int label);
    void zero_grad();
};

}  // namespace tmft
