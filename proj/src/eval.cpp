#include "dbd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dbd/image_io.hpp"

namespace dbd {

std::vector<double> MetricConfig::thresholds_or_default() const {
    if (!pr_thresholds.empty()) return pr_thresholds;
    std::vector<double> out;
    for (int i = 1; i <= 19; ++i) out.push_back(0.05 * i);
    return out;
}

namespace {

struct Counts {
    std::int64_t tp = 0, fp = 0, fn = 0;
};

Counts count_confusion(const Tensor& pred, const Tensor& label, double threshold) {
    Counts c;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        bool p = pred[i] >= threshold;
        bool y = label[i] >= 0.5;
        c.tp += p && y;
        c.fp += p && !y;
        c.fn += !p && y;
    }
    return c;
}

} // namespace

double mae(const Tensor& pred, const Tensor& label) {
    check_same_shape(pred, label, "mae");
    double acc = 0.0;
    for (std::int64_t i = 0; i < pred.numel(); ++i) acc += std::abs(pred[i] - label[i]);
    return acc / static_cast<double>(pred.numel());
}

double fbeta(const Tensor& pred, const Tensor& label, double beta_squared, double binarize_threshold) {
    check_same_shape(pred, label, "fbeta");
    Counts c = count_confusion(pred, label, binarize_threshold);
    if (c.tp + c.fp == 0 && c.tp + c.fn == 0) return 1.0;
    double precision = c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
    double recall = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
    double denom = beta_squared * precision + recall;
    if (denom == 0.0) return 0.0;
    return (1.0 + beta_squared) * precision * recall / denom;
}

double iou(const Tensor& pred, const Tensor& label, double binarize_threshold) {
    check_same_shape(pred, label, "iou");
    Counts c = count_confusion(pred, label, binarize_threshold);
    std::int64_t uni = c.tp + c.fp + c.fn;
    if (uni == 0) return 1.0;
    return static_cast<double>(c.tp) / static_cast<double>(uni);
}

PrCurve pr_curve(const std::vector<Tensor>& preds, const std::vector<Tensor>& labels,
                 const std::vector<double>& thresholds) {
    if (preds.empty()) throw ArgumentError("pr_curve: empty dataset");
    if (preds.size() != labels.size()) throw ArgumentError("pr_curve: prediction/label count mismatch");
    for (std::size_t i = 0; i + 1 < thresholds.size(); ++i)
        if (!(thresholds[i] < thresholds[i + 1])) throw ArgumentError("pr_curve: thresholds must strictly increase");
    for (double t : thresholds)
        if (t < 0.0 || t > 1.0) throw ArgumentError("pr_curve: thresholds must lie in [0,1]");

    PrCurve curve;
    curve.thresholds = thresholds;
    for (double t : thresholds) {
        Counts total;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            check_same_shape(preds[i], labels[i], "pr_curve");
            Counts c = count_confusion(preds[i], labels[i], t);
            total.tp += c.tp;
            total.fp += c.fp;
            total.fn += c.fn;
        }
        curve.precision.push_back(total.tp + total.fp
                                      ? static_cast<double>(total.tp) / static_cast<double>(total.tp + total.fp)
                                      : 1.0);
        curve.recall.push_back(total.tp + total.fn
                                   ? static_cast<double>(total.tp) / static_cast<double>(total.tp + total.fn)
                                   : 1.0);
    }
    return curve;
}

MetricsReport evaluate_dataset(const Predictor& predictor, const std::vector<SampleRecord>& records,
                               const MetricConfig& config) {
    if (records.empty()) throw ArgumentError("evaluate_dataset: empty dataset");
    MetricsReport report;
    report.config_echo = config;
    report.n_images = static_cast<int>(records.size());

    std::vector<Tensor> preds, labels;
    preds.reserve(records.size());
    labels.reserve(records.size());
    for (const auto& rec : records) {
        Tensor pred = predictor(rec);
        const Shape target = rec.blur_label.shape();
        if (pred.shape().h != target.h || pred.shape().w != target.w)
            pred = resize_bilinear(pred, target.h, target.w);
        report.mae += mae(pred, rec.blur_label);
        report.f_beta += fbeta(pred, rec.blur_label, config.beta_squared, config.binarize_threshold);
        report.iou += iou(pred, rec.blur_label, config.binarize_threshold);
        preds.push_back(std::move(pred));
        labels.push_back(rec.blur_label);
    }
    double inv = 1.0 / static_cast<double>(records.size());
    report.mae *= inv;
    report.f_beta *= inv;
    report.iou *= inv;
    report.pr = pr_curve(preds, labels, config.thresholds_or_default());
    return report;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string join(const std::vector<double>& vs) {
    std::string out;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        if (i) out += ",";
        out += fmt(vs[i]);
    }
    return out;
}

std::vector<double> split_doubles(const std::string& s) {
    std::vector<double> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stod(tok));
    }
    return out;
}

} // namespace

std::string MetricsReport::to_text() const {
    std::ostringstream os;
    os << "mae: " << fmt(mae) << "\n";
    os << "f_beta: " << fmt(f_beta) << "\n";
    os << "iou: " << fmt(iou) << "\n";
    os << "n_images: " << n_images << "\n";
    os << "beta_squared: " << fmt(config_echo.beta_squared) << "\n";
    os << "binarize_threshold: " << fmt(config_echo.binarize_threshold) << "\n";
    os << "positive_class: " << config_echo.positive_class << "\n";
    os << "thresholds: " << join(pr.thresholds) << "\n";
    os << "precision: " << join(pr.precision) << "\n";
    os << "recall: " << join(pr.recall) << "\n";
    return os.str();
}

MetricsReport MetricsReport::from_text(const std::string& text) {
    MetricsReport report;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        auto colon = line.find(": ");
        if (colon == std::string::npos) continue;
        std::string key = line.substr(0, colon);
        std::string value = line.substr(colon + 2);
        if (key == "mae")
            report.mae = std::stod(value);
        else if (key == "f_beta")
            report.f_beta = std::stod(value);
        else if (key == "iou")
            report.iou = std::stod(value);
        else if (key == "n_images")
            report.n_images = std::stoi(value);
        else if (key == "beta_squared")
            report.config_echo.beta_squared = std::stod(value);
        else if (key == "binarize_threshold")
            report.config_echo.binarize_threshold = std::stod(value);
        else if (key == "positive_class")
            report.config_echo.positive_class = value;
        else if (key == "thresholds")
            report.pr.thresholds = split_doubles(value);
        else if (key == "precision")
            report.pr.precision = split_doubles(value);
        else if (key == "recall")
            report.pr.recall = split_doubles(value);
    }
    return report;
}

std::string MetricsReport::summary_line() const {
    std::ostringstream os;
    os << "metrics mae=" << fmt(mae) << " f_beta=" << fmt(f_beta) << " iou=" << fmt(iou)
       << " n_images=" << n_images;
    return os.str();
}

void write_report(const std::filesystem::path& path, const MetricsReport& report) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write report: " + path.string());
    os << report.to_text();
    if (!os) throw IoError("failed writing report: " + path.string());
}

namespace {

void draw_line(Tensor& img, double x0, double y0, double x1, double y1, const double rgb[3]) {
    const Shape s = img.shape();
    int steps = static_cast<int>(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) * 2 + 1;
    for (int i = 0; i <= steps; ++i) {
        double t = static_cast<double>(i) / static_cast<double>(steps);
        std::int64_t x = static_cast<std::int64_t>(std::lround(x0 + (x1 - x0) * t));
        std::int64_t y = static_cast<std::int64_t>(std::lround(y0 + (y1 - y0) * t));
        if (x < 0 || x >= s.w || y < 0 || y >= s.h) continue;
        for (std::int64_t c = 0; c < 3; ++c) img.at(0, c, y, x) = rgb[c];
    }
}

} // namespace

void write_pr_plot(const std::filesystem::path& path, const PrCurve& curve) {
    const std::int64_t size = 512, margin = 48;
    Tensor img(Shape{1, 3, size, size}, 1.0);

    const double grid[3] = {0.85, 0.85, 0.85};
    const double axis[3] = {0.1, 0.1, 0.1};
    const double line[3] = {0.75, 0.2, 0.15};

    auto px = [&](double recall) { return margin + recall * static_cast<double>(size - 2 * margin); };
    auto py = [&](double precision) {
        return static_cast<double>(size - margin) - precision * static_cast<double>(size - 2 * margin);
    };

    for (int i = 1; i < 4; ++i) {
        double v = 0.25 * i;
        draw_line(img, px(0), py(v), px(1), py(v), grid);
        draw_line(img, px(v), py(0), px(v), py(1), grid);
    }
    draw_line(img, px(0), py(0), px(1), py(0), axis);
    draw_line(img, px(0), py(0), px(0), py(1), axis);
    draw_line(img, px(0), py(1), px(1), py(1), axis);
    draw_line(img, px(1), py(0), px(1), py(1), axis);

    for (std::size_t i = 0; i + 1 < curve.recall.size(); ++i)
        draw_line(img, px(curve.recall[i]), py(curve.precision[i]), px(curve.recall[i + 1]),
                  py(curve.precision[i + 1]), line);
    for (std::size_t i = 0; i < curve.recall.size(); ++i) {
        double cx = px(curve.recall[i]), cy = py(curve.precision[i]);
        draw_line(img, cx - 2, cy, cx + 2, cy, line);
        draw_line(img, cx, cy - 2, cx, cy + 2, line);
    }
    write_ppm(path, img);
}

} // namespace dbd
