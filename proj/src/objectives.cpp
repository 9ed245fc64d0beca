#include "tmft/objectives.hpp"

#include <cmath>

namespace tmft {

namespace {

constexpr double kEps = 1e-8;

struct CosineGrad {
    double value;
    Vec du, dv;
};

CosineGrad cosine_grad(const Vec& u, const Vec& v) {
    if (u.size() != v.size()) throw ConfigError("cosine: dimension mismatch");
    double nu = u.norm(), nv = v.norm();
    double denom = nu * nv;
    CosineGrad g;
    if (denom < kEps) {
        // clamped denominator treated as a constant
        g.value = u.dot(v) / kEps;
        g.du = v / kEps;
        g.dv = u / kEps;
        return g;
    }
    double c = u.dot(v) / denom;
    g.value = c;
    g.du = v / denom - c / (nu * nu) * u;
    g.dv = u / denom - c / (nv * nv) * v;
    return g;
}

}  // namespace

double cosine_similarity(const Vec& u, const Vec& v) {
    if (u.size() != v.size()) throw ConfigError("cosine: dimension mismatch");
    return u.dot(v) / std::max(u.norm() * v.norm(), kEps);
}

static PairObjectiveResult squared_cosine_error(const Vec& u, const Vec& v, double target) {
    CosineGrad c = cosine_grad(u, v);
    PairObjectiveResult r;
    double diff = c.value - target;
    r.loss = diff * diff;
    r.du = 2.0 * diff * c.du;
    r.dv = 2.0 * diff * c.dv;
    return r;
}

PairObjectiveResult sts_objective(const Vec& u, const Vec& v, double gold) {
    if (gold < 0.0 || gold > 5.0) throw ConfigError("sts_objective: gold outside [0,5]");
    return squared_cosine_error(u, v, gold / 5.0);
}

PairObjectiveResult word_similarity_objective(const Vec& u, const Vec& v, double score) {
    if (score < 0.0 || score > 1.0)
        throw ConfigError("word_similarity_objective: score outside [0,1]");
    return squared_cosine_error(u, v, score);
}

PairObjectiveResult ParaphraseHead::loss(const Vec& u, const Vec& v, int label) {
    if (label != 0 && label != 1) throw ConfigError("paraphrase label must be 0 or 1");
    CosineGrad c = cosine_grad(u, v);
    double z = a * c.value + b;
    // numerically stable BCE on the logit
    double y = label;
    PairObjectiveResult r;
    r.loss = std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    double p = 1.0 / (1.0 + std::exp(-z));
    double dz = p - y;
    da += dz * c.value;
    db += dz;
    r.du = dz * a * c.du;
    r.dv = dz * a * c.dv;
    return r;
}

EntailmentHead::EntailmentHead(int d) {
    w = Mat::Zero(3, 3 * d);
    bias = Vec::Zero(3);
    dw = Mat::Zero(3, 3 * d);
    dbias = Vec::Zero(3);
}

void EntailmentHead::random_initialize(std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = normal(rng);
    bias.setZero();
}

void EntailmentHead::zero_grad() {
    dw.setZero();
    dbias.setZero();
}

static Vec features_of(const Vec& u, const Vec& v) {
    const Eigen::Index d = u.size();
    Vec phi(3 * d);
    phi.segment(0, d) = u;
    phi.segment(d, d) = v;
    phi.segment(2 * d, d) = (u - v).cwiseAbs();
    return phi;
}

Vec EntailmentHead::logits(const Vec& u, const Vec& v) const {
    if (3 * u.size() != w.cols())
        throw ConfigError("entailment head dimension mismatch: features " +
                          std::to_string(3 * u.size()) + ", head expects " +
                          std::to_string(w.cols()));
    return w * features_of(u, v) + bias;
}

int EntailmentHead::predict(const Vec& u, const Vec& v) const {
    Vec z = logits(u, v);
    Eigen::Index best = 0;
    z.maxCoeff(&best);
    return static_cast<int>(best);
}

PairObjectiveResult EntailmentHead::loss(const Vec& u, const Vec& v, int label) {
    if (label < 0 || label > 2) throw ConfigError("entailment label must be in {0,1,2}");
    const Eigen::Index d = u.size();
    Vec phi = features_of(u, v);
    Vec z = logits(u, v);
    double mx = z.maxCoeff();
    Vec ez = (z.array() - mx).exp();
    double sum = ez.sum();
    Vec p = ez / sum;

    PairObjectiveResult r;
    r.loss = -(z(label) - mx - std::log(sum));
    Vec dz = p;
    dz(label) -= 1.0;
    dw += dz * phi.transpose();
    dbias += dz;
    Vec dphi = w.transpose() * dz;
    Vec sgn = (u - v).unaryExpr([](double x) { return x > 0 ? 1.0 : x < 0 ? -1.0 : 0.0; });
    r.du = dphi.segment(0, d) + sgn.cwiseProduct(dphi.segment(2 * d, d));
    r.dv = dphi.segment(d, d) - sgn.cwiseProduct(dphi.segment(2 * d, d));
    return r;
}

}  // namespace tmft
