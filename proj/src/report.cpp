#include "tmft/report.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace tmft {

namespace {

std::string fmt(double v, int prec = 4) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(prec) << v;
    return ss.str();
}

std::string fmt_params(std::size_t params) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(2) << params / 1e6 << "M";
    return ss.str();
}

// Tiny SVG canvas with linear data->pixel mapping.
class SvgPlot {
  public:
    SvgPlot(double x0, double x1, double y0, double y1, const std::string& xlabel,
            const std::string& ylabel)
        : x0_(x0), x1_(x1), y0_(y0), y1_(y1) {
        ss_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
               "viewBox=\"0 0 640 480\">\n"
            << "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
        // axes
        ss_ << "<line x1=\"60\" y1=\"420\" x2=\"600\" y2=\"420\" stroke=\"black\"/>\n"
            << "<line x1=\"60\" y1=\"40\" x2=\"60\" y2=\"420\" stroke=\"black\"/>\n";
        for (int i = 0; i <= 5; ++i) {
            double fx = x0_ + (x1_ - x0_) * i / 5.0;
            double fy = y0_ + (y1_ - y0_) * i / 5.0;
            double px = 60 + 540.0 * i / 5.0;
            double py = 420 - 380.0 * i / 5.0;
            ss_ << "<text x=\"" << px << "\" y=\"436\" font-size=\"11\" text-anchor=\"middle\">"
                << fmt(fx, 2) << "</text>\n"
                << "<text x=\"54\" y=\"" << py + 4
                << "\" font-size=\"11\" text-anchor=\"end\">" << fmt(fy, 2) << "</text>\n";
        }
        ss_ << "<text x=\"330\" y=\"464\" font-size=\"13\" text-anchor=\"middle\">" << xlabel
            << "</text>\n"
            << "<text x=\"16\" y=\"230\" font-size=\"13\" text-anchor=\"middle\" "
               "transform=\"rotate(-90 16 230)\">"
            << ylabel << "</text>\n";
    }

    double px(double x) const { return 60 + 540.0 * (x - x0_) / (x1_ - x0_); }
    double py(double y) const { return 420 - 380.0 * (y - y0_) / (y1_ - y0_); }

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                  double width = 2.0) {
        ss_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width
            << "\" points=\"";
        for (const auto& [x, y] : pts) ss_ << fmt(px(x), 1) << "," << fmt(py(y), 1) << " ";
        ss_ << "\"/>\n";
    }

    void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& fill) {
        ss_ << "<polygon fill=\"" << fill << "\" fill-opacity=\"0.3\" stroke=\"none\" points=\"";
        for (const auto& [x, y] : pts) ss_ << fmt(px(x), 1) << "," << fmt(py(y), 1) << " ";
        ss_ << "\"/>\n";
    }

    void circle(double x, double y, const std::string& color, double r = 4.0) {
        ss_ << "<circle cx=\"" << fmt(px(x), 1) << "\" cy=\"" << fmt(py(y), 1) << "\" r=\"" << r
            << "\" fill=\"" << color << "\"/>\n";
    }

    void label(double x, double y, const std::string& text) {
        ss_ << "<text x=\"" << fmt(px(x) + 6, 1) << "\" y=\"" << fmt(py(y) - 6, 1)
            << "\" font-size=\"10\">" << text << "</text>\n";
    }

    std::string finish() {
        ss_ << "</svg>\n";
        return ss_.str();
    }

  private:
    double x0_, x1_, y0_, y1_;
    std::ostringstream ss_;
};

}  // namespace

std::string aggregates_csv(const SweepResult& sweep) {
    std::ostringstream ss;
    ss << "Layer,Params,Val,ValStd,Test,TestStd,Val2,Test2,Seeds,Profile\n";
    for (const auto& a : sweep.per_layer) {
        ss << a.layer << "," << a.param_count << "," << fmt(a.val_mean) << "," << fmt(a.val_std)
           << "," << fmt(a.test_mean) << "," << fmt(a.test_std) << "," << fmt(a.val2_mean) << ","
           << fmt(a.test2_mean) << "," << a.n_seeds << "," << sweep.profile << "\n";
    }
    return ss.str();
}

std::string overview_markdown(const std::vector<SweepResult>& sweeps) {
    std::ostringstream ss;
    ss << "| Model | Stage | Layer | Params | Val | Test | Profile |\n"
       << "|---|---|---|---|---|---|---|\n";
    for (const auto& sweep : sweeps) {
        if (sweep.per_layer.empty()) continue;
        const LayerAggregate& best = select_best(sweep);
        ss << "| " << sweep.model_id << " | " << stage_name(sweep.stage) << " | " << best.layer
           << " | " << fmt_params(best.param_count) << " | " << fmt(best.val_mean) << "/"
           << fmt(best.val2_mean) << " | " << fmt(best.test_mean) << "/" << fmt(best.test2_mean)
           << " | " << sweep.profile << " |\n";
    }
    return ss.str();
}

std::string layer_plot_svg(const SweepResult& sweep) {
    if (sweep.per_layer.empty()) throw ConfigError("layer_plot_svg: empty sweep");
    double ymin = 1e30, ymax = -1e30;
    for (const auto& a : sweep.per_layer) {
        ymin = std::min(ymin, a.test_mean - a.test_std);
        ymax = std::max(ymax, a.test_mean + a.test_std);
    }
    double pad = std::max(0.02, (ymax - ymin) * 0.1);
    SvgPlot plot(sweep.per_layer.front().layer, sweep.per_layer.back().layer, ymin - pad,
                 ymax + pad, "layer", "test " + sweep.metric_name);
    std::vector<std::pair<double, double>> band, mean;
    for (const auto& a : sweep.per_layer) {
        band.push_back({a.layer, a.test_mean + a.test_std});
        mean.push_back({a.layer, a.test_mean});
    }
    for (auto it = sweep.per_layer.rbegin(); it != sweep.per_layer.rend(); ++it)
        band.push_back({it->layer, it->test_mean - it->test_std});
    plot.polygon(band, "steelblue");
    plot.polyline(mean, "steelblue");
    for (const auto& a : sweep.per_layer) plot.circle(a.layer, a.test_mean, "steelblue", 3.0);
    return plot.finish();
}

std::string cka_plot_svg(const CKACurve& curve) {
    if (curve.values.empty()) throw ConfigError("cka_plot_svg: empty curve");
    SvgPlot plot(curve.values.front().first, std::max(1, curve.values.back().first), 0.0, 1.05,
                 "layer", "CKA");
    std::vector<std::pair<double, double>> pts;
    for (const auto& [l, v] : curve.values) pts.push_back({static_cast<double>(l), v});
    plot.polyline(pts, "firebrick");
    for (const auto& [x, y] : pts) plot.circle(x, y, "firebrick", 3.0);
    return plot.finish();
}

std::vector<ParetoPoint> pareto_points(const std::vector<SweepResult>& sweeps,
                                       bool include_last_layer,
                                       const std::vector<std::string>& exclude) {
    std::vector<ParetoPoint> points;
    auto excluded = [&](const std::string& id) {
        return std::find(exclude.begin(), exclude.end(), id) != exclude.end();
    };
    for (const auto& sweep : sweeps) {
        if (sweep.per_layer.empty()) continue;
        const LayerAggregate& best = select_best(sweep);
        std::string id = sweep.model_id + "@l" + std::to_string(best.layer);
        if (!excluded(id)) points.push_back({id, best.param_count, best.test_mean});
        if (include_last_layer) {
            const LayerAggregate& last = sweep.per_layer.back();
            if (last.layer != best.layer) {
                std::string lid = sweep.model_id + "@l" + std::to_string(last.layer) + "(last)";
                if (!excluded(lid)) points.push_back({lid, last.param_count, last.test_mean});
            }
        }
    }
    return points;
}

std::string pareto_csv(const std::vector<ParetoPoint>& points,
                       const std::vector<ParetoPoint>& front) {
    auto on_front = [&](const ParetoPoint& p) {
        return std::any_of(front.begin(), front.end(),
                           [&](const ParetoPoint& f) { return f.id == p.id; });
    };
    std::ostringstream ss;
    ss << "model,layer,params,test_spearman,on_front\n";
    for (const auto& p : points) {
        std::string model = p.id, layer;
        if (auto at = p.id.find("@l"); at != std::string::npos) {
            model = p.id.substr(0, at);
            layer = p.id.substr(at + 2);
        }
        ss << model << "," << layer << "," << p.params << "," << fmt(p.test_spearman) << ","
           << (on_front(p) ? "true" : "false") << "\n";
    }
    return ss.str();
}

std::string pareto_plot_svg(const std::vector<ParetoPoint>& points,
                            const std::vector<ParetoPoint>& front) {
    if (points.empty()) throw ConfigError("pareto_plot_svg: no points");
    double xmax = 0, ymin = 1e30, ymax = -1e30;
    for (const auto& p : points) {
        xmax = std::max(xmax, p.params / 1e6);
        ymin = std::min(ymin, p.test_spearman);
        ymax = std::max(ymax, p.test_spearman);
    }
    double pad = std::max(0.02, (ymax - ymin) * 0.1);
    SvgPlot plot(0.0, xmax * 1.05, ymin - pad, ymax + pad, "parameters (M)", "test spearman");
    std::vector<std::pair<double, double>> line;
    for (const auto& p : front) line.push_back({p.params / 1e6, p.test_spearman});
    plot.polyline(line, "gray");
    for (const auto& p : points) {
        plot.circle(p.params / 1e6, p.test_spearman, "steelblue");
        plot.label(p.params / 1e6, p.test_spearman, p.id);
    }
    return plot.finish();
}

}  // namespace tmft
