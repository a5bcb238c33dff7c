#pragma once

#include "wsi/onestep.hpp"
#include "wsi/selection.hpp"

#include <span>

namespace wsi {

/// Sample quantile with linear interpolation between order statistics
/// (type 7). `values` need not be sorted. Throws on empty input.
double quantile_type7(std::span<const double> values, double prob);

struct Thresholds
{
    double delta1 = 0.99;
    double delta2 = 0.0;
    double tau = 0.1;
    double alpha = 0.05;

    /// Throws InvalidArgument unless delta1 in (0,1], delta2 in [0,1),
    /// tau and alpha in (0,1), delta2 < delta1 and delta1 > 1 - alpha.
    void validate() const;
};

struct Delta2Calibration
{
    double delta2 = 0.0;
    bool all_selected = false;  ///< no zero one-step coefficient to calibrate on
};

/// 100(1 - tau)% quantile of the estimated selection probabilities of the
/// covariates the one-step fit sets to zero.
Delta2Calibration calibrate_delta2(const SelectionProfile& profile, const OneStepFit& onestep,
                                   double tau);

enum class SignalClass { strong, weak, noise };

const char* to_string(SignalClass c) noexcept;

struct SignalClassification
{
    std::vector<SignalClass> labels;  ///< per covariate
    IndexList strong;
    IndexList weak;
    IndexList noise;
};

/// strong: p > delta1; weak: delta2 < p <= delta1; noise: p <= delta2.
SignalClassification classify(const SelectionProfile& profile, const Thresholds& thresholds);

} // namespace wsi
