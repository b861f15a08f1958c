"""Ambient heat kernel of the closed model manifolds.

The circle and torus kernels are evaluated by Gaussian image sums (small
time) or spectral sums (large time); the sphere kernel by the zonal
Legendre series, with a leading-parametrix branch below a time floor where
the series would need thousands of terms, and an arbitrary-precision
branch where the alternating series cancels catastrophically (far pairs at
small time).

All kernels here are functions of signed coordinate differences or of the
geodesic distance alone, which is what makes term-wise analytic
differentiation (for boundary normal derivatives) straightforward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from . import geometry as geo
from .errors import ConfigurationError, NonConvergenceError, TimeDomainError
from .geometry import ManifoldModel, canonical_point, distance, log_direction

TWO_PI = 2.0 * math.pi

# below this (scaled) time the sphere series switches to the parametrix
SPHERE_TAU_SWITCH = 1.5e-3
# exponent d^2/(4t) beyond which float64 summation of the Legendre series
# loses all relative accuracy and mpmath takes over (scalar path)
CANCEL_EXPONENT = 28.0


# ---------------------------------------------------------------------------
# 1-D circle kernel (circumference L), function of the signed arclength s
# ---------------------------------------------------------------------------

def circle_kernel(s, t, circumference, deriv=0):
    """Heat kernel of the circle of given circumference at arclength lag s.

    deriv=0 returns p, deriv=1 returns dp/ds.  Image sum for
    t <= (L/2pi)^2, spectral sum otherwise (both converge everywhere; the
    switch only picks the shorter sum).
    """
    s = np.asarray(s, dtype=float)
    length = circumference
    if t <= (length / TWO_PI) ** 2:
        return _circle_images(s, t, length, deriv)
    return _circle_spectral(s, t, length, deriv)


def _circle_images(s, t, length, deriv):
    nimg = int(math.ceil(6.5 * math.sqrt(4.0 * t) / length)) + 2
    pref = (4.0 * math.pi * t) ** -0.5
    out = np.zeros_like(s)
    for m in range(-nimg, nimg + 1):
        z = s + m * length
        g = pref * np.exp(-z * z / (4.0 * t))
        out += g if deriv == 0 else -z / (2.0 * t) * g
    return out


def _circle_spectral(s, t, length, deriv):
    kmax = int(math.ceil(6.5 * length / (TWO_PI * math.sqrt(t)))) + 2
    k = np.arange(1, kmax + 1)
    freq = TWO_PI * k / length
    damp = np.exp(-freq ** 2 * t)
    phase = np.tensordot(np.asarray(s), freq, axes=0)
    if deriv == 0:
        series = 2.0 * np.tensordot(np.cos(phase), damp, axes=([-1], [0]))
        return (1.0 + series) / length
    series = -2.0 * np.tensordot(np.sin(phase) * freq, damp / 1.0, axes=([-1], [0]))
    return series / length


# ---------------------------------------------------------------------------
# sphere kernel, function of the geodesic distance d
# ---------------------------------------------------------------------------

def sphere_terms(t, radius, tol=1e-12, max_terms=4000):
    """Series length per the geometric tail bound."""
    tau = t / radius ** 2
    n = max(20, int(math.ceil(6.0 / math.sqrt(tau))))
    if n > max_terms:
        raise NonConvergenceError(
            f"sphere series needs {n} terms (cap {max_terms}) at t={t}",
            achieved=max_terms)
    return n


def sphere_series(d, t, radius, want_deriv=False, tol=1e-12, max_terms=4000):
    """Zonal Legendre series: p(d, t) and optionally dp/dd.

    Vectorized over d (scalar t); P_l and dP_l/dtheta by upward recurrence.
    """
    d = np.asarray(d, dtype=float)
    theta = d / radius
    c = np.cos(theta)
    st = np.sin(theta)
    lmax = sphere_terms(t, radius, tol, max_terms)
    tau = t / radius ** 2
    norm = 1.0 / (4.0 * math.pi * radius ** 2)
    p_prev = np.ones_like(c)
    p_cur = c.copy()
    t_prev = np.zeros_like(c)
    t_cur = -st.copy()
    acc_p = norm * (p_prev + 3.0 * math.exp(-2.0 * tau) * p_cur)
    acc_d = norm * 3.0 * math.exp(-2.0 * tau) * t_cur
    for l in range(1, lmax):
        p_next = ((2 * l + 1) * c * p_cur - l * p_prev) / (l + 1)
        t_next = ((2 * l + 1) * (c * t_cur - st * p_cur) - l * t_prev) / (l + 1)
        w = (2 * (l + 1) + 1) * math.exp(-(l + 1) * (l + 2) * tau)
        acc_p += norm * w * p_next
        if want_deriv:
            acc_d += norm * w * t_next
        p_prev, p_cur = p_cur, p_next
        t_prev, t_cur = t_cur, t_next
    if want_deriv:
        return acc_p, acc_d / radius
    return acc_p


def sphere_parametrix(d, t, radius, want_deriv=False):
    """Leading small-time parametrix: E(d, t) * sqrt(theta / sin(theta)).

    Relative error O(t) locally uniformly away from the cut locus; used
    only below SPHERE_TAU_SWITCH * R^2 or where the series cancels.
    """
    d = np.asarray(d, dtype=float)
    theta = np.clip(d / radius, 0.0, math.pi * (1.0 - 1e-12))
    ratio = np.where(theta > 1e-8, theta / np.maximum(np.sin(theta), 1e-300), 1.0 + theta ** 2 / 6.0)
    u0 = np.sqrt(ratio)
    gauss = (4.0 * math.pi * t) ** -1.0 * np.exp(-d * d / (4.0 * t))
    p = gauss * u0
    if not want_deriv:
        return p
    # u0'(theta)/u0 = 1/(2 theta) - cot(theta)/2, -> theta/6 at 0
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = 0.5 / theta - 0.5 / np.tan(theta)
    lg = np.where(theta > 1e-6, lg, theta / 6.0)
    dp = p * (-d / (2.0 * t) + lg / radius)
    return p, dp


def sphere_kernel_of_d(d, t, radius, want_deriv=False, tol=1e-12, max_terms=4000):
    """Sphere kernel (and d-derivative) vectorized over distances d.

    Branch choice: parametrix below the time switch or where the float64
    series would be pure cancellation noise; Legendre series otherwise.
    """
    d = np.asarray(d, dtype=float)
    if t <= 0:
        raise TimeDomainError("time must be positive")
    if t < SPHERE_TAU_SWITCH * radius ** 2:
        return sphere_parametrix(d, t, radius, want_deriv)
    out = sphere_series(d, t, radius, want_deriv, tol, max_terms)
    noisy = d * d / (4.0 * t) > CANCEL_EXPONENT
    if np.any(noisy):
        rep = sphere_parametrix(d, t, radius, want_deriv)
        if want_deriv:
            out = (np.where(noisy, rep[0], out[0]), np.where(noisy, rep[1], out[1]))
        else:
            out = np.where(noisy, rep, out)
    return out


def sphere_kernel_mp(d, t, radius=1.0, dps=None):
    """Arbitrary-precision zonal series; exact oracle for cancelling sums."""
    expo = d * d / (4.0 * t) if t > 0 else 0.0
    if dps is None:
        dps = int(30 + 0.9 * expo)
    with mpmath.workdps(dps):
        tau = mpmath.mpf(t) / mpmath.mpf(radius) ** 2
        x = mpmath.cos(mpmath.mpf(d) / radius)
        total = mpmath.mpf(0)
        term_scale = mpmath.mpf(0)
        l = 0
        while True:
            term = (2 * l + 1) * mpmath.exp(-l * (l + 1) * tau) * mpmath.legendre(l, x)
            total += term
            term_scale = max(term_scale, abs(term))
            if l > 3 and abs(term) < mpmath.mpf(10) ** (-dps) * term_scale:
                break
            l += 1
            if l > 20000:
                raise NonConvergenceError("mpmath sphere series did not converge")
        val = total / (4 * mpmath.pi * radius ** 2)
        return float(val)


# ---------------------------------------------------------------------------
# comparator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparatorParams:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError("comparator dimension must be >= 1")


def eval_E(params, d, t):
    """Gaussian comparator (4 pi t)^{-n/2} exp(-d^2 / 4t)."""
    n = params.n if isinstance(params, ComparatorParams) else int(params)
    if np.any(np.asarray(t) <= 0):
        raise TimeDomainError("comparator requires t > 0")
    d = np.asarray(d, dtype=float)
    return (4.0 * math.pi * t) ** (-n / 2.0) * np.exp(-d * d / (4.0 * t))


def log_E(n, d, t):
    """log of the comparator, safe where eval_E underflows."""
    return -n / 2.0 * np.log(4.0 * math.pi * t) - np.asarray(d) ** 2 / (4.0 * t)


# ---------------------------------------------------------------------------
# evaluator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TwoSidedFit:
    c: float                 # smallest feasible upper-bound prefactor
    kappa_exp: float         # fixed upper-bound exponent factor
    grid: str
    min_ratio_lower: float   # min p / E over the grid
    lower_holds: bool
    worst_node: tuple | None = None


def _default_t_min(m: ManifoldModel) -> float:
    if m.kind == "circle":
        return 1e-3 * m.scale[0] ** 2
    if m.kind == "sphere2":
        return 1e-3 * m.scale[0] ** 2
    return 1e-3 * (min(m.scale) / TWO_PI) ** 2


@dataclass(frozen=True)
class KernelEvaluator:
    """Ambient-kernel evaluator with truncation control.

    Immutable after construction; every evaluation is a pure function, so
    grid sweeps may run concurrently.
    """
    manifold: ManifoldModel
    series_tail_tol: float = 1e-12
    max_terms: int = 4000
    t_min: float | None = None

    def __post_init__(self):
        if self.series_tail_tol <= 0:
            raise ConfigurationError("series_tail_tol must be positive")
        if self.t_min is None:
            object.__setattr__(self, "t_min", _default_t_min(self.manifold))
        if self.t_min <= 0:
            raise ConfigurationError("t_min must be positive")

    # -- core evaluations ---------------------------------------------------

    def _check_t(self, t):
        if t < self.t_min:
            raise TimeDomainError(f"t={t} below the evaluator floor {self.t_min}")

    def eval_p(self, x, y, t: float) -> float:
        """Ambient kernel p(x, y, t)."""
        self._check_t(t)
        return float(self.p_unguarded(x, y, t))

    def p_unguarded(self, x, y, t: float) -> float:
        """p without the t_min guard; used by quadrature internals."""
        m = self.manifold
        x = canonical_point(m, x)
        y = canonical_point(m, y)
        if m.kind == "circle":
            s = m.scale[0] * geo.wrap_angle(x[0] - y[0])
            return float(circle_kernel(s, t, m.total_volume))
        if m.kind == "sphere2":
            d = distance(m, x, y)
            r = m.scale[0]
            if (t >= SPHERE_TAU_SWITCH * r * r
                    and d * d / (4.0 * t) > CANCEL_EXPONENT):
                return sphere_kernel_mp(d, t, r)
            return float(sphere_kernel_of_d(d, t, r, tol=self.series_tail_tol,
                                            max_terms=self.max_terms))
        l1, l2 = m.scale
        s1 = geo.wrap_angle((x[0] - y[0]) / l1 * TWO_PI) * l1 / TWO_PI
        s2 = geo.wrap_angle((x[1] - y[1]) / l2 * TWO_PI) * l2 / TWO_PI
        return float(circle_kernel(s1, t, l1) * circle_kernel(s2, t, l2))

    def p_matrix(self, xs, ys, t: float) -> np.ndarray:
        """Pairwise kernel values p(x_i, y_j, t) as an (NX, NY) array."""
        self._check_t(t)
        m = self.manifold
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        if m.kind == "circle":
            s = m.scale[0] * geo.wrap_angle(xs[:, :1] - ys[:, 0][None, :])
            return np.asarray(circle_kernel(s, t, m.total_volume))
        if m.kind == "flat-torus2":
            l1, l2 = m.scale
            s1 = geo.wrap_angle((xs[:, :1] - ys[:, 0][None, :])
                                / l1 * TWO_PI) * l1 / TWO_PI
            s2 = geo.wrap_angle((xs[:, 1:2] - ys[:, 1][None, :])
                                / l2 * TWO_PI) * l2 / TWO_PI
            return np.asarray(circle_kernel(s1, t, l1)
                              * circle_kernel(s2, t, l2))
        r = m.scale[0]
        ux = np.stack(geo._sph_to_vec(xs[:, 0], xs[:, 1]), axis=-1)
        uy = np.stack(geo._sph_to_vec(ys[:, 0], ys[:, 1]), axis=-1)
        d = r * np.arccos(np.clip(ux @ uy.T, -1.0, 1.0))
        out = np.asarray(sphere_kernel_of_d(d, t, r,
                                            tol=self.series_tail_tol,
                                            max_terms=self.max_terms))
        bad = (t >= SPHERE_TAU_SWITCH * r * r) & (d * d / (4.0 * t)
                                                  > CANCEL_EXPONENT)
        for i, j in zip(*np.nonzero(bad)):
            out[i, j] = sphere_kernel_mp(d[i, j], t, r)
        return out

    def eval_dp_dnu(self, omega, x, y, t: float) -> float:
        """Directional derivative of p at boundary point x along the
        outward normal, by term-wise analytic differentiation."""
        self._check_t(t)
        return self.dp_dnu_unguarded(omega, x, y, t)

    def dp_dnu_unguarded(self, omega, x, y, t: float) -> float:
        m = self.manifold
        nu = omega.outward_normal(x)
        x = canonical_point(m, x)
        y = canonical_point(m, y)
        if m.kind == "circle":
            s = m.scale[0] * geo.wrap_angle(x[0] - y[0])
            return float(nu.dir[0] * circle_kernel(s, t, m.total_volume, deriv=1))
        if m.kind == "sphere2":
            d = distance(m, x, y)
            if d == 0.0:
                return 0.0
            _, pd = sphere_kernel_of_d(d, t, m.scale[0], want_deriv=True,
                                       tol=self.series_tail_tol,
                                       max_terms=self.max_terms)
            td, _ = log_direction(m, x, y)
            grad_proj = -(np.dot(td.dir, nu.dir))      # <grad_x d, nu>
            return float(pd * grad_proj)
        l1, l2 = m.scale
        s1 = geo.wrap_angle((x[0] - y[0]) / l1 * TWO_PI) * l1 / TWO_PI
        s2 = geo.wrap_angle((x[1] - y[1]) / l2 * TWO_PI) * l2 / TWO_PI
        g1, g2 = circle_kernel(s1, t, l1), circle_kernel(s2, t, l2)
        d1, d2 = circle_kernel(s1, t, l1, deriv=1), circle_kernel(s2, t, l2, deriv=1)
        grad = np.array([d1 * g2, g1 * d2])
        return float(np.dot(grad, nu.dir))

    # -- section-level checks ----------------------------------------------

    def antipodal_exponent(self, t_window=(0.01, 0.1), n_points: int = 20):
        """Least-squares slope of log p(N, S, t) + (pi R)^2/(4t) vs log t.

        The antipodal pair on the round sphere; expected slope -3/2.
        Returns (slope, intercept, residual_rms, c=exp(intercept)).
        """
        if self.manifold.kind != "sphere2":
            raise ConfigurationError("antipodal exponent requires the sphere")
        r = self.manifold.scale[0]
        d = math.pi * r
        ts = np.exp(np.linspace(math.log(t_window[0]), math.log(t_window[1]), n_points))
        vals = np.array([sphere_kernel_mp(d, t, r) for t in ts])
        if np.any(vals <= 0):
            raise NonConvergenceError("antipodal kernel evaluation lost positivity; "
                                      "shrink the time window")
        ylog = np.log(vals) + d * d / (4.0 * ts)
        a = np.vstack([np.log(ts), np.ones_like(ts)]).T
        (slope, intercept), res, *_ = np.linalg.lstsq(a, ylog, rcond=None)
        resid = math.sqrt(float(res[0]) / n_points) if res.size else 0.0
        return {"slope": float(slope), "intercept": float(intercept),
                "residual_rms": resid, "c": math.exp(float(intercept)),
                "t_values": ts, "log_values": ylog}

    def _pair_at_distance(self, d):
        """A concrete (x, y) pair realizing distance d (fixed construction)."""
        m = self.manifold
        if m.kind == "circle":
            return np.array([0.0]), np.array([d / m.scale[0]])
        if m.kind == "sphere2":
            return np.array([math.pi / 3, 0.0]), geo.geodesic(
                m, geo.tangent(m, [math.pi / 3, 0.0], [0.4, math.sqrt(1 - 0.16)]), d)
        x = np.array([0.37 * m.scale[0], 0.61 * m.scale[1]])
        v = np.array([2.0, 1.0]) / math.sqrt(5.0)
        return x, geo.geodesic(m, geo.tangent(m, x, v), d)

    def near_diag_lower(self, eps: float | None = None, n_d: int = 20,
                        n_t: int = 20, t_max: float = 1.0, p_fn=None):
        """Largest eta with p >= E on the sampled near-diagonal block.

        Grid d <= eps, t <= eta; also reports the flat floor
        min {t <= min(eta, eps^2), d <= sqrt(t)} of p * t^{n/2}.
        """
        m = self.manifold
        if eps is None:
            eps = m.injectivity_radius / 4.0
        if eps > m.injectivity_radius / 4.0 + 1e-12:
            raise ConfigurationError("eps must not exceed inj(M)/4")
        if n_d < 4 or n_t < 4:
            raise ConfigurationError("need at least 4 grid points per axis")
        if p_fn is None:
            p_fn = self.p_unguarded
        n = m.dim
        ds = np.linspace(0.0, eps, n_d)
        ts = np.exp(np.linspace(math.log(max(self.t_min, 1e-3)), math.log(t_max), n_t))
        pairs = [self._pair_at_distance(d) if d > 0 else self._pair_at_distance(1e-9)
                 for d in ds]
        eta = 0.0
        ok_prefix = True
        for t in ts:
            le = log_E(n, ds, t)
            vals = np.array([p_fn(x, y, t) for x, y in pairs])
            holds = np.all(np.log(np.maximum(vals, 1e-300)) >= le - 1e-12)
            if holds and ok_prefix:
                eta = t
            else:
                ok_prefix = False
        flat_c = math.inf
        t_cap = min(eta, eps * eps) if eta > 0 else 0.0
        if t_cap > 0:
            for t in ts[ts <= t_cap]:
                for d in ds[ds <= math.sqrt(t)]:
                    x, y = self._pair_at_distance(max(d, 1e-9))
                    flat_c = min(flat_c, p_fn(x, y, t) * t ** (n / 2.0))
        return {"eta": eta, "pass": eta > 0.0, "eps": eps,
                "flat_constant": None if math.isinf(flat_c) else flat_c}

    def two_sided_comparator_fit(self, t_range=(0.05, 2.0), n_t: int = 12,
                         n_d: int = 12, kappa_exp: float = 0.5) -> TwoSidedFit:
        """Check E <= p on the grid and fit the smallest upper prefactor c
        at fixed exponent factor kappa_exp."""
        m = self.manifold
        if m.ricci_lower_coeff < 0:
            raise ConfigurationError("two-sided bounds assume Ric >= 0")
        n = m.dim
        ts = np.exp(np.linspace(math.log(t_range[0]), math.log(t_range[1]), n_t))
        ds = np.linspace(0.0, m.diameter, n_d)
        min_ratio = math.inf
        worst = None
        cfit = 0.0
        for t in ts:
            for d in ds:
                x, y = self._pair_at_distance(max(d, 1e-9))
                p = self.p_unguarded(x, y, t)
                lr = math.log(max(p, 1e-300)) - float(log_E(n, d, t))
                ratio = math.exp(min(lr, 700.0))
                if ratio < min_ratio:
                    min_ratio, worst = ratio, (float(d), float(t))
                vb = geo.ball_volume(m, x, math.sqrt(t))
                cfit = max(cfit, p * vb * math.exp(min(kappa_exp * d * d / (4.0 * t), 700.0)))
        return TwoSidedFit(c=cfit, kappa_exp=kappa_exp,
                           grid=f"{n_t}x{n_d} log-t x linear-d",
                           min_ratio_lower=min_ratio,
                           lower_holds=min_ratio >= 1.0 - 1e-10,
                           worst_node=worst)
