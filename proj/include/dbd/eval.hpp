#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dbd/data.hpp"
#include "dbd/tensor.hpp"

namespace dbd {

struct MetricConfig {
    double beta_squared = 0.3;
    double binarize_threshold = 0.5;
    std::string positive_class = "blur";
    std::vector<double> pr_thresholds; // defaults to 0.05..0.95 step 0.05

    std::vector<double> thresholds_or_default() const;
};

/// Mean absolute error over pixels.
double mae(const Tensor& pred, const Tensor& label);

/// F-measure on the binarized map (>= threshold is positive). An image with
/// no predicted and no labeled positives scores 1; any other empty
/// denominator counts as 0.
double fbeta(const Tensor& pred, const Tensor& label, double beta_squared, double binarize_threshold);

/// Intersection over union on binarized positives; both-empty scores 1.
double iou(const Tensor& pred, const Tensor& label, double binarize_threshold);

struct PrCurve {
    std::vector<double> thresholds;
    std::vector<double> precision;
    std::vector<double> recall;
};

/// Micro-averaged curve: confusion counts are summed over all images at each
/// threshold before division.
PrCurve pr_curve(const std::vector<Tensor>& preds, const std::vector<Tensor>& labels,
                 const std::vector<double>& thresholds);

struct MetricsReport {
    double mae = 0;
    double f_beta = 0;
    double iou = 0;
    PrCurve pr;
    int n_images = 0;
    MetricConfig config_echo;

    std::string to_text() const;
    static MetricsReport from_text(const std::string& text);
    /// Single machine-readable summary line.
    std::string summary_line() const;
};

using Predictor = std::function<Tensor(const SampleRecord&)>;

/// Runs the predictor over every record, resizes predictions to label
/// resolution, averages MAE/F/IoU per image and micro-aggregates the curve.
MetricsReport evaluate_dataset(const Predictor& predictor, const std::vector<SampleRecord>& records,
                               const MetricConfig& config);

void write_report(const std::filesystem::path& path, const MetricsReport& report);

/// Renders the curve into a small RGB image (PPM).
void write_pr_plot(const std::filesystem::path& path, const PrCurve& curve);

} // namespace dbd
