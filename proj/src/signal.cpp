#include "wsi/signal.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace wsi {

double quantile_type7(std::span<const double> values, double prob)
{
    if (values.empty()) throw Error(ErrorKind::InvalidArgument, "quantile of empty sample");
    if (!(prob >= 0.0 && prob <= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "quantile probability must lie in [0,1]");
    }
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double h = static_cast<double>(sorted.size() - 1) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

void Thresholds::validate() const
{
    auto fail = [](const char* msg) { throw Error(ErrorKind::InvalidArgument, msg); };
    if (!(delta1 > 0.0 && delta1 <= 1.0)) fail("delta1 must lie in (0,1]");
    if (!(delta2 >= 0.0 && delta2 < 1.0)) fail("delta2 must lie in [0,1)");
    if (!(tau > 0.0 && tau < 1.0)) fail("tau must lie in (0,1)");
    if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha must lie in (0,1)");
    if (!(delta2 < delta1)) fail("delta2 must be below delta1");
    if (!(delta1 > 1.0 - alpha)) fail("delta1 must exceed 1 - alpha");
}

Delta2Calibration calibrate_delta2(const SelectionProfile& profile, const OneStepFit& onestep,
                                   double tau)
{
    if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorKind::InvalidArgument, "tau must lie in (0,1)");
    if (profile.p_hat.size() != onestep.p()) {
        throw Error(ErrorKind::DimensionMismatch, "profile and fit disagree on p");
    }
    std::vector<double> zeros;
    for (Index j = 0; j < onestep.p(); ++j) {
        if (!onestep.is_active(j)) zeros.push_back(profile.p_hat(j));
    }
    if (zeros.empty()) return {0.0, true};
    return {quantile_type7(zeros, 1.0 - tau), false};
}

const char* to_string(SignalClass c) noexcept
{
    switch (c) {
    case SignalClass::strong: return "strong";
    case SignalClass::weak: return "weak";
    case SignalClass::noise: return "noise";
    }
    return "unknown";
}

SignalClassification classify(const SelectionProfile& profile, const Thresholds& thresholds)
{
    thresholds.validate();
    SignalClassification out;
    out.labels.reserve(static_cast<std::size_t>(profile.p_hat.size()));
    for (Index j = 0; j < profile.p_hat.size(); ++j) {
        const double p = profile.p_hat(j);
        SignalClass c = SignalClass::noise;
        if (p > thresholds.delta1) {
            c = SignalClass::strong;
            out.strong.push_back(j);
        } else if (p > thresholds.delta2) {
            c = SignalClass::weak;
            out.weak.push_back(j);
        } else {
            out.noise.push_back(j);
        }
        out.labels.push_back(c);
    }
    return out;
}

} // namespace wsi
