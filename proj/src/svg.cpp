#include "srot/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "srot/error.hpp"

namespace srot {

namespace {

// Minimal SVG canvas with a data-to-pixel affine map. No timestamps or
// other volatile metadata: identical inputs give identical files.
class SvgCanvas {
public:
    SvgCanvas(double x0, double x1, double y0, double y1, int width = 760, int height = 560)
        : width_(width), height_(height) {
        const double pad_x = 0.05 * std::max(x1 - x0, 1e-12);
        const double pad_y = 0.05 * std::max(y1 - y0, 1e-12);
        x0_ = x0 - pad_x;
        x1_ = x1 + pad_x;
        y0_ = y0 - pad_y;
        y1_ = y1 + pad_y;
        body_.precision(6);
    }

    double px(double x) const { return margin_ + (x - x0_) / (x1_ - x0_) * (width_ - 2 * margin_); }
    double py(double y) const {
        return height_ - margin_ - (y - y0_) / (y1_ - y0_) * (height_ - 2 * margin_);
    }

    void line(double x0, double y0, double x1, double y1, const std::string& color, double width,
              double opacity) {
        body_ << "<line x1=\"" << px(x0) << "\" y1=\"" << py(y0) << "\" x2=\"" << px(x1) << "\" y2=\""
              << py(y1) << "\" stroke=\"" << color << "\" stroke-width=\"" << width
              << "\" stroke-opacity=\"" << opacity << "\"/>\n";
    }

    void circle(double x, double y, double r, const std::string& fill) {
        body_ << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"" << r << "\" fill=\""
              << fill << "\"/>\n";
    }

    void cross(double x, double y, double r, const std::string& color) {
        const double cx = px(x), cy = py(y);
        body_ << "<path d=\"M" << cx - r << " " << cy - r << " L" << cx + r << " " << cy + r << " M"
              << cx - r << " " << cy + r << " L" << cx + r << " " << cy - r << "\" stroke=\"" << color
              << "\" stroke-width=\"1.5\"/>\n";
    }

    void text(double px_abs, double py_abs, const std::string& s, const std::string& color = "#333") {
        body_ << "<text x=\"" << px_abs << "\" y=\"" << py_abs << "\" font-size=\"12\" fill=\"" << color
              << "\" font-family=\"sans-serif\">" << s << "</text>\n";
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color) {
        body_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& [x, y] : pts) body_ << px(x) << "," << py(y) << " ";
        body_ << "\"/>\n";
    }

    void axes() {
        body_ << "<rect x=\"" << margin_ << "\" y=\"" << margin_ << "\" width=\"" << width_ - 2 * margin_
              << "\" height=\"" << height_ - 2 * margin_
              << "\" fill=\"none\" stroke=\"#999\" stroke-width=\"1\"/>\n";
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("svg: cannot open " + path);
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_ << "\" height=\""
            << height_ << "\" viewBox=\"0 0 " << width_ << " " << height_ << "\">\n"
            << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
            << body_.str() << "</svg>\n";
    }

private:
    int width_, height_;
    double x0_, x1_, y0_, y1_;
    double margin_ = 40.0;
    std::ostringstream body_;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

void plot_plan_svg(const ContaminatedDataset& ds, const TransportPlan& plan, const std::string& path,
                   long segment_budget) {
    if (ds.source.dim() != 2) throw IoError("plot_plan_svg: only 2D datasets are plottable");
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const DiscreteMeasure* m : {&ds.source, &ds.target}) {
        x0 = std::min(x0, m->points.col(0).minCoeff());
        x1 = std::max(x1, m->points.col(0).maxCoeff());
        y0 = std::min(y0, m->points.col(1).minCoeff());
        y1 = std::max(y1, m->points.col(1).maxCoeff());
    }
    SvgCanvas canvas(x0, x1, y0, y1);

    const double max_entry = plan.coupling.size() > 0 ? plan.coupling.maxCoeff() : 0.0;
    const bool cull = static_cast<long>(plan.coupling.size()) > segment_budget;
    long drawn = 0, culled = 0;
    if (max_entry > 0.0) {
        for (Eigen::Index i = 0; i < plan.coupling.rows(); ++i) {
            for (Eigen::Index j = 0; j < plan.coupling.cols(); ++j) {
                const double opacity = plan.coupling(i, j) / max_entry;
                if (opacity <= 0.0) continue;
                if (cull && opacity < 0.01) {
                    ++culled;
                    continue;
                }
                canvas.line(ds.source.points(i, 0), ds.source.points(i, 1), ds.target.points(j, 0),
                            ds.target.points(j, 1), "#555555", 0.8, opacity);
                ++drawn;
            }
        }
    }
    for (Eigen::Index i = 0; i < ds.source.size(); ++i) {
        if (ds.source_outlier_truth[static_cast<std::size_t>(i)]) {
            canvas.cross(ds.source.points(i, 0), ds.source.points(i, 1), 4.0, "#1f77b4");
        } else {
            canvas.circle(ds.source.points(i, 0), ds.source.points(i, 1), 2.5, "#1f77b4");
        }
    }
    for (Eigen::Index j = 0; j < ds.target.size(); ++j) {
        if (ds.target_outlier_truth[static_cast<std::size_t>(j)]) {
            canvas.cross(ds.target.points(j, 0), ds.target.points(j, 1), 4.0, "#d62728");
        } else {
            canvas.circle(ds.target.points(j, 0), ds.target.points(j, 1), 2.5, "#d62728");
        }
    }
    std::ostringstream legend;
    legend << "solver: " << to_string(plan.solver) << ", segments drawn: " << drawn;
    if (culled > 0) legend << " (" << culled << " below 1% opacity culled)";
    canvas.text(45, 20, legend.str());
    canvas.text(45, 34, "source: blue, target: red, outliers: crosses; opacity = plan / max(plan)");
    canvas.save(path);
}

void plot_traces_svg(const std::vector<FlowTrace>& traces, const std::string& path) {
    double max_iter = 1.0, max_val = 1e-12;
    for (const auto& t : traces) {
        max_iter = std::max(max_iter, static_cast<double>(t.iters));
        for (double v : t.loss_series) max_val = std::max(max_val, v);
        for (double v : t.eval_series) max_val = std::max(max_val, v);
    }
    SvgCanvas canvas(0.0, max_iter, 0.0, max_val);
    canvas.axes();
    int color_idx = 0;
    double legend_y = 20.0;
    for (const auto& t : traces) {
        const std::string color = kPalette[color_idx % 6];
        std::vector<std::pair<double, double>> loss_pts;
        for (std::size_t k = 0; k < t.loss_series.size(); ++k) {
            loss_pts.emplace_back(static_cast<double>(k), t.loss_series[k]);
        }
        if (!loss_pts.empty()) canvas.polyline(loss_pts, color);
        std::vector<std::pair<double, double>> eval_pts;
        for (std::size_t k = 0; k < t.eval_series.size(); ++k) {
            eval_pts.emplace_back(static_cast<double>(t.eval_iterations[k]), t.eval_series[k]);
        }
        if (!eval_pts.empty()) {
            for (const auto& [x, y] : eval_pts) canvas.circle(x, y, 2.0, color);
        }
        canvas.text(45, legend_y, t.loss_name + " (line: loss, dots: W to clean)", color);
        legend_y += 14.0;
        ++color_idx;
    }
    canvas.save(path);
}

void plot_labelprop_svg(const LabelPropReport& report, const std::string& path) {
    double m_lo = 1.0, m_hi = 0.0;
    for (const auto& row : report.rows) {
        m_lo = std::min(m_lo, row.m);
        m_hi = std::max(m_hi, row.m);
    }
    if (report.rows.empty()) {
        m_lo = 0.0;
        m_hi = 1.0;
    }
    SvgCanvas canvas(m_lo, std::max(m_hi, m_lo + 1e-9), 0.0, 1.0);
    canvas.axes();
    std::vector<LabelPropMethod> methods;
    for (const auto& row : report.rows) {
        if (std::find(methods.begin(), methods.end(), row.method) == methods.end()) {
            methods.push_back(row.method);
        }
    }
    double legend_y = 20.0;
    for (std::size_t k = 0; k < methods.size(); ++k) {
        const std::string color = kPalette[k % 6];
        std::vector<std::pair<double, double>> pts;
        for (const auto& row : report.rows) {
            if (row.method == methods[k]) pts.emplace_back(row.m, row.accuracy);
        }
        std::sort(pts.begin(), pts.end());
        if (!pts.empty()) canvas.polyline(pts, color);
        canvas.text(45, legend_y, to_string(methods[k]) + " accuracy vs m", color);
        legend_y += 14.0;
    }
    canvas.save(path);
}

}  // namespace srot
