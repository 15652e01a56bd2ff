#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace amfg
{

/// Truncated tensor grid of phase space (x, v), nodes at both ends inclusive.
class PhaseGrid
{
public:
    PhaseGrid() = default;

    PhaseGrid(double x_min, double x_max, double v_min, double v_max, int nx, int nv)
        : x_min_(x_min), x_max_(x_max), v_min_(v_min), v_max_(v_max), nx_(nx), nv_(nv)
    {
        if (nx < 8 || nv < 8)
            throw std::invalid_argument("PhaseGrid: nx and nv must be >= 8");
        if (!(x_max > x_min) || !(v_max > v_min))
            throw std::invalid_argument("PhaseGrid: empty box");
        dx_ = (x_max - x_min) / (nx - 1);
        dv_ = (v_max - v_min) / (nv - 1);
    }

    double x_min() const { return x_min_; }
    double x_max() const { return x_max_; }
    double v_min() const { return v_min_; }
    double v_max() const { return v_max_; }
    int nx() const { return nx_; }
    int nv() const { return nv_; }
    double dx() const { return dx_; }
    double dv() const { return dv_; }
    std::size_t size() const { return static_cast<std::size_t>(nx_) * nv_; }
    double cell_area() const { return dx_ * dv_; }

    double x(int i) const { return x_min_ + i * dx_; }
    double v(int j) const { return v_min_ + j * dv_; }
    std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * nv_ + j; }

    double max_abs_v() const { return std::max(std::abs(v_min_), std::abs(v_max_)); }
    double x_center() const { return 0.5 * (x_min_ + x_max_); }
    double v_center() const { return 0.5 * (v_min_ + v_max_); }

    /// Central half of the box in each direction; all accuracy metrics live here.
    bool in_inner_half(double x, double v) const
    {
        return std::abs(x - x_center()) <= 0.25 * (x_max_ - x_min_) + 1e-12
            && std::abs(v - v_center()) <= 0.25 * (v_max_ - v_min_) + 1e-12;
    }
    bool node_in_inner_half(int i, int j) const { return in_inner_half(x(i), v(j)); }

    bool contains(double x, double v) const
    {
        return x >= x_min_ && x <= x_max_ && v >= v_min_ && v <= v_max_;
    }

    /// Same box, node counts multiplied by `scale` on the interval count.
    PhaseGrid refined(double scale) const
    {
        auto n = [scale](int count) { return static_cast<int>(std::lround((count - 1) * scale)) + 1; };
        return PhaseGrid(x_min_, x_max_, v_min_, v_max_, n(nx_), n(nv_));
    }

    bool operator==(const PhaseGrid&) const = default;

private:
    double x_min_ = 0.0, x_max_ = 1.0, v_min_ = 0.0, v_max_ = 1.0;
    int nx_ = 0, nv_ = 0;
    double dx_ = 0.0, dv_ = 0.0;
};

class TimeGrid
{
public:
    TimeGrid() = default;
    TimeGrid(double horizon, int nt) : horizon_(horizon), nt_(nt)
    {
        if (!(horizon > 0.0) || nt < 1)
            throw std::invalid_argument("TimeGrid: need T > 0 and nt >= 1");
        dt_ = horizon / nt;
    }

    double horizon() const { return horizon_; }
    int nt() const { return nt_; }
    double dt() const { return dt_; }
    double t(int n) const { return n == nt_ ? horizon_ : n * dt_; }

    TimeGrid refined(double scale) const
    {
        return TimeGrid(horizon_, static_cast<int>(std::lround(nt_ * scale)));
    }

    bool operator==(const TimeGrid&) const = default;

private:
    double horizon_ = 1.0;
    int nt_ = 1;
    double dt_ = 1.0;
};

/// Node values on a PhaseGrid, x-major (index = i * nv + j).
class ScalarField
{
public:
    ScalarField() = default;
    explicit ScalarField(const PhaseGrid& grid, double fill = 0.0)
        : grid_(grid), values_(grid.size(), fill)
    {
    }
    ScalarField(const PhaseGrid& grid, std::vector<double> values) : grid_(grid), values_(std::move(values))
    {
        if (values_.size() != grid_.size())
            throw std::invalid_argument("ScalarField: value count does not match grid");
    }

    template <class Fn>
    static ScalarField from_function(const PhaseGrid& grid, Fn&& fn)
    {
        ScalarField f(grid);
        for (int i = 0; i < grid.nx(); ++i)
            for (int j = 0; j < grid.nv(); ++j)
                f(i, j) = fn(grid.x(i), grid.v(j));
        return f;
    }

    const PhaseGrid& grid() const { return grid_; }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

    double& operator()(int i, int j) { return values_[grid_.index(i, j)]; }
    double operator()(int i, int j) const { return values_[grid_.index(i, j)]; }
    double& operator[](std::size_t k) { return values_[k]; }
    double operator[](std::size_t k) const { return values_[k]; }

    bool all_finite() const
    {
        return std::all_of(values_.begin(), values_.end(), [](double a) { return std::isfinite(a); });
    }

    /// Riemann sum over the nodes, each node owning a dx*dv cell.
    double integral() const
    {
        double s = 0.0;
        for (double a : values_)
            s += a;
        return s * grid_.cell_area();
    }

    template <class Fn>
    double integrate(Fn&& phi) const
    {
        double s = 0.0;
        for (int i = 0; i < grid_.nx(); ++i)
            for (int j = 0; j < grid_.nv(); ++j)
                s += phi(grid_.x(i), grid_.v(j)) * (*this)(i, j);
        return s * grid_.cell_area();
    }

    double max_abs() const
    {
        double m = 0.0;
        for (double a : values_)
            m = std::max(m, std::abs(a));
        return m;
    }
    double min_value() const { return *std::min_element(values_.begin(), values_.end()); }
    double max_value() const { return *std::max_element(values_.begin(), values_.end()); }

    ScalarField& operator+=(const ScalarField& o)
    {
        for (std::size_t k = 0; k < values_.size(); ++k)
            values_[k] += o.values_[k];
        return *this;
    }
    ScalarField& operator*=(double a)
    {
        for (double& x : values_)
            x *= a;
        return *this;
    }
    friend ScalarField operator-(ScalarField a, const ScalarField& b)
    {
        for (std::size_t k = 0; k < a.values_.size(); ++k)
            a.values_[k] -= b.values_[k];
        return a;
    }

    bool operator==(const ScalarField&) const = default;

private:
    PhaseGrid grid_;
    std::vector<double> values_;
};

/// One ScalarField per time node t_0 .. t_nt.
class FieldPath
{
public:
    FieldPath() = default;
    FieldPath(const PhaseGrid& grid, const TimeGrid& time, double fill = 0.0)
        : grid_(grid), time_(time), slices_(static_cast<std::size_t>(time.nt()) + 1, ScalarField(grid, fill))
    {
    }

    const PhaseGrid& grid() const { return grid_; }
    const TimeGrid& time() const { return time_; }
    int nt() const { return time_.nt(); }

    ScalarField& operator[](int n) { return slices_[static_cast<std::size_t>(n)]; }
    const ScalarField& operator[](int n) const { return slices_[static_cast<std::size_t>(n)]; }
    ScalarField& back() { return slices_.back(); }
    const ScalarField& back() const { return slices_.back(); }

    double max_abs() const
    {
        double m = 0.0;
        for (const auto& s : slices_)
            m = std::max(m, s.max_abs());
        return m;
    }

    bool operator==(const FieldPath&) const = default;

private:
    PhaseGrid grid_;
    TimeGrid time_;
    std::vector<ScalarField> slices_;
};

/// Time indices 0, nt/4, nt/2, 3nt/4, nt.
inline std::vector<int> checkpoint_slices(const TimeGrid& time)
{
    std::vector<int> s;
    for (int k = 0; k <= 4; ++k)
        s.push_back(time.nt() * k / 4);
    return s;
}

namespace detail
{

// Locate the cell [k, k+1] containing coordinate q and the local offset in [0,1].
inline void locate(double q, double lo, double h, int n, int& k, double& s)
{
    double r = (q - lo) / h;
    r = std::clamp(r, 0.0, static_cast<double>(n - 1));
    k = std::min(static_cast<int>(r), n - 2);
    s = r - k;
}

inline double cubic_weight(int m, double s)
{
    // Catmull-Rom weights for offsets -1, 0, 1, 2.
    switch (m)
    {
    case -1: return ((-s + 2.0) * s - 1.0) * s * 0.5;
    case 0: return ((3.0 * s - 5.0) * s * s + 2.0) * 0.5;
    case 1: return ((-3.0 * s + 4.0) * s + 1.0) * s * 0.5;
    default: return (s - 1.0) * s * s * 0.5;
    }
}

} // namespace detail

/// Bilinear interpolation; points outside the box are clamped to it.
inline double interp_bilinear(const ScalarField& f, double x, double v)
{
    const auto& g = f.grid();
    int i, j;
    double sx, sv;
    detail::locate(x, g.x_min(), g.dx(), g.nx(), i, sx);
    detail::locate(v, g.v_min(), g.dv(), g.nv(), j, sv);
    return (1 - sx) * ((1 - sv) * f(i, j) + sv * f(i, j + 1)) + sx * ((1 - sv) * f(i + 1, j) + sv * f(i + 1, j + 1));
}

/// Catmull-Rom bicubic interpolation with index clamping at the box edge.
inline double interp_bicubic(const ScalarField& f, double x, double v)
{
    const auto& g = f.grid();
    int i, j;
    double sx, sv;
    detail::locate(x, g.x_min(), g.dx(), g.nx(), i, sx);
    detail::locate(v, g.v_min(), g.dv(), g.nv(), j, sv);
    double acc = 0.0;
    for (int a = -1; a <= 2; ++a)
    {
        int ii = std::clamp(i + a, 0, g.nx() - 1);
        double row = 0.0;
        for (int b = -1; b <= 2; ++b)
        {
            int jj = std::clamp(j + b, 0, g.nv() - 1);
            row += detail::cubic_weight(b, sv) * f(ii, jj);
        }
        acc += detail::cubic_weight(a, sx) * row;
    }
    return acc;
}

/// Bilinear in space, linear in time.
inline double interp_path(const FieldPath& p, double x, double v, double t)
{
    const auto& tg = p.time();
    double r = std::clamp(t / tg.dt(), 0.0, static_cast<double>(tg.nt()));
    int n = std::min(static_cast<int>(r), tg.nt() - 1);
    double s = r - n;
    double a = interp_bilinear(p[n], x, v);
    if (s == 0.0)
        return a;
    return (1 - s) * a + s * interp_bilinear(p[n + 1], x, v);
}

inline double interp_path_cubic(const FieldPath& p, double x, double v, double t)
{
    const auto& tg = p.time();
    double r = std::clamp(t / tg.dt(), 0.0, static_cast<double>(tg.nt()));
    int n = std::min(static_cast<int>(r), tg.nt() - 1);
    double s = r - n;
    double a = interp_bicubic(p[n], x, v);
    if (s == 0.0)
        return a;
    return (1 - s) * a + s * interp_bicubic(p[n + 1], x, v);
}

/// Derivative fields: central differences inside, one-sided at the edge.
inline ScalarField diff_x(const ScalarField& u)
{
    const auto& g = u.grid();
    ScalarField d(g);
    const int nx = g.nx();
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < g.nv(); ++j)
        {
            if (i == 0)
                d(i, j) = (u(1, j) - u(0, j)) / g.dx();
            else if (i == nx - 1)
                d(i, j) = (u(nx - 1, j) - u(nx - 2, j)) / g.dx();
            else
                d(i, j) = (u(i + 1, j) - u(i - 1, j)) / (2 * g.dx());
        }
    return d;
}

inline ScalarField diff_v(const ScalarField& u)
{
    const auto& g = u.grid();
    ScalarField d(g);
    const int nv = g.nv();
    for (int i = 0; i < g.nx(); ++i)
        for (int j = 0; j < nv; ++j)
        {
            if (j == 0)
                d(i, j) = (u(i, 1) - u(i, 0)) / g.dv();
            else if (j == nv - 1)
                d(i, j) = (u(i, nv - 1) - u(i, nv - 2)) / g.dv();
            else
                d(i, j) = (u(i, j + 1) - u(i, j - 1)) / (2 * g.dv());
        }
    return d;
}

/// Largest absolute difference over the inner half-box.
inline double inner_sup_diff(const ScalarField& a, const ScalarField& b)
{
    const auto& g = a.grid();
    double m = 0.0;
    for (int i = 0; i < g.nx(); ++i)
        for (int j = 0; j < g.nv(); ++j)
            if (g.node_in_inner_half(i, j))
                m = std::max(m, std::abs(a(i, j) - b(i, j)));
    return m;
}

/// Thrown by the solvers when a run cannot continue (CFL, NaN, leakage, escape).
class SolverAbort : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

} // namespace amfg
