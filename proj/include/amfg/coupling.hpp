#pragma once

#include "amfg/grid.hpp"
#include "amfg/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace amfg
{

/// Even, truncated (4 bandwidths) and discretely normalized 1D Gaussian.
class SmoothingKernel1D
{
public:
    static constexpr double truncation = 4.0;

    SmoothingKernel1D() = default;
    SmoothingKernel1D(double bandwidth, double h) : bandwidth_(bandwidth), h_(h)
    {
        if (!(bandwidth > 0.0) || !(h > 0.0))
            throw std::invalid_argument("SmoothingKernel1D: bandwidth and spacing must be positive");
        radius_ = static_cast<int>(std::floor(truncation * bandwidth / h));
        weights_.resize(static_cast<std::size_t>(radius_) + 1);
        double sum = 0.0;
        for (int k = 0; k <= radius_; ++k)
        {
            weights_[k] = std::exp(-0.5 * (k * h / bandwidth) * (k * h / bandwidth));
            sum += (k == 0 ? 1.0 : 2.0) * weights_[k];
        }
        norm_ = 1.0 / (sum * h);
        for (double& w : weights_)
            w *= norm_;
    }

    int radius() const { return radius_; }
    double weight(int k) const { return weights_[static_cast<std::size_t>(std::abs(k))]; }
    /// Factor applied to exp(-s^2/2rho^2) so that the node weights sum to 1/h.
    double normalization() const { return norm_; }
    double bandwidth() const { return bandwidth_; }

    /// Continuous profile the node weights are sampled from.
    double operator()(double s) const
    {
        if (std::abs(s) > radius_ * h_ + 1e-12)
            return 0.0;
        return norm_ * std::exp(-0.5 * (s / bandwidth_) * (s / bandwidth_));
    }

    /// sum_k w_k^2 h, the value at 0 of the kernel convolved with itself.
    double self_overlap() const
    {
        double s = weights_[0] * weights_[0];
        for (int k = 1; k <= radius_; ++k)
            s += 2 * weights_[k] * weights_[k];
        return s * h_;
    }

private:
    double bandwidth_ = 1.0, h_ = 1.0, norm_ = 1.0;
    int radius_ = 0;
    std::vector<double> weights_;
};

/// Tensor kernel K(x, v) = Kx(x) Kv(v) acting by discrete convolution on the grid.
class SmoothingKernel
{
public:
    SmoothingKernel(const PhaseGrid& grid, double bandwidth)
        : grid_(grid), kx_(bandwidth, grid.dx()), kv_(bandwidth, grid.dv())
    {
    }

    double operator()(double x, double v) const { return kx_(x) * kv_(v); }
    double sup() const { return kx_.weight(0) * kv_.weight(0); }
    double self_convolution_sup() const { return kx_.self_overlap() * kv_.self_overlap(); }

    /// Sup of |grad K| for the isotropic Gaussian profile, attained at radius rho.
    double gradient_sup() const
    {
        return kx_.normalization() * kv_.normalization() * std::exp(-0.5) / kx_.bandwidth();
    }

    /// (K * f)(z_i) = sum_j K(z_i - z_j) f(z_j) dx dv, zero outside the box.
    ScalarField apply(const ScalarField& f) const
    {
        const int nx = grid_.nx(), nv = grid_.nv();
        ScalarField tmp(grid_), out(grid_);
        const int rx = kx_.radius(), rv = kv_.radius();
        for (int i = 0; i < nx; ++i)
            for (int j = 0; j < nv; ++j)
            {
                double s = 0.0;
                for (int k = std::max(-rv, j - nv + 1); k <= std::min(rv, j); ++k)
                    s += kv_.weight(k) * f(i, j - k);
                tmp(i, j) = s * grid_.dv();
            }
        for (int i = 0; i < nx; ++i)
            for (int j = 0; j < nv; ++j)
            {
                double s = 0.0;
                for (int k = std::max(-rx, i - nx + 1); k <= std::min(rx, i); ++k)
                    s += kx_.weight(k) * tmp(i - k, j);
                out(i, j) = s * grid_.dx();
            }
        return out;
    }

private:
    PhaseGrid grid_;
    SmoothingKernel1D kx_, kv_;
};

/// Nonlocal couplings F[m] (running) and G[m] (terminal) by kernel smoothing.
struct CouplingSpec
{
    enum class Kind
    {
        gaussian,
        self_convolution_gaussian
    };
    enum class Which
    {
        F,
        G
    };

    Kind kind = Kind::gaussian;
    double rho_F = 0.5;
    double rho_G = 0.5;
    double c_F = 0.0;
    double c_G = 0.0;

    void validate() const
    {
        if (!(rho_F > 0.0) || !(rho_G > 0.0))
            throw std::invalid_argument("CouplingSpec: bandwidths must be positive");
        if (!(c_F >= 0.0) || !(c_G >= 0.0))
            throw std::invalid_argument("CouplingSpec: weights must be nonnegative");
    }

    bool decoupled() const { return c_F == 0.0 && c_G == 0.0; }
    bool monotone() const { return kind == Kind::self_convolution_gaussian; }
    double weight(Which w) const { return w == Which::F ? c_F : c_G; }
    double bandwidth(Which w) const { return w == Which::F ? rho_F : rho_G; }

    /// Uniform bound on |F[m]| (or |G[m]|) over probability densities.
    double sup_bound(const PhaseGrid& grid, Which w) const
    {
        SmoothingKernel k(grid, bandwidth(w));
        return weight(w) * (kind == Kind::gaussian ? k.sup() : k.self_convolution_sup());
    }

    /// Lipschitz constant of m -> F[m] from d_1 into sup-norm.
    double lipschitz_d1(const PhaseGrid& grid, Which w) const
    {
        return weight(w) * SmoothingKernel(grid, bandwidth(w)).gradient_sup();
    }
};

inline constexpr double coupling_mass_tolerance = 1e-3;

inline ScalarField eval_coupling(const CouplingSpec& spec, const ScalarField& m, CouplingSpec::Which which)
{
    const double mass = m.integral();
    if (std::abs(mass - 1.0) > coupling_mass_tolerance)
        throw std::invalid_argument("eval_coupling: density mass " + std::to_string(mass) + " is not 1");
    const double c = spec.weight(which);
    if (c == 0.0)
        return ScalarField(m.grid());
    SmoothingKernel k(m.grid(), spec.bandwidth(which));
    ScalarField out = k.apply(m);
    if (spec.kind == CouplingSpec::Kind::self_convolution_gaussian)
        out = k.apply(out);
    out *= c;
    return out;
}

/// Lasry-Lions integral sum (F[m1] - F[m2]) (m1 - m2) dx dv.
inline double monotonicity_integral(const CouplingSpec& spec, const ScalarField& m1, const ScalarField& m2,
                                    CouplingSpec::Which which = CouplingSpec::Which::F)
{
    ScalarField df = eval_coupling(spec, m1, which) - eval_coupling(spec, m2, which);
    ScalarField dm = m1 - m2;
    double s = 0.0;
    for (std::size_t k = 0; k < df.values().size(); ++k)
        s += df[k] * dm[k];
    return s * m1.grid().cell_area();
}

} // namespace amfg
