"""Boundary Volterra solver for the single-layer correction kernel.

The correction kernel r(x, y, t) on Sigma x (0, T] solves

    r = r1 + Kconv r,   r1(x, y, t) = -2 dp/dnu_x (x, y, t),

where (Kconv g)(x, t) = int_0^t int_Sigma r1(x, z, t - s) g(z, s) dA ds.
Two routes are provided: the successive-approximation series sum r^j and a
direct forward march in time (the resummed lower-triangular system); they
are mutual oracles.

Discretization: graded time mesh t_k = T (k/K)^gamma with per-cell
Gauss-Legendre product integration; the cell touching the t - s = 0
endpoint uses the substitution tau = Delta * u^2 to absorb the weak
square-root singularity of the boundary kernel.  The cap-rim boundary
rule is a cell-averaged circulant (exact local integration of the kernel
over each azimuth cell), which keeps the spatial rule accurate when the
kernel width sqrt(tau) drops below the node spacing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from . import ambient, geometry as geo
from .ambient import KernelEvaluator, circle_kernel
from .errors import (ConfigurationError, GridShapeError, NonConvergenceError,
                     TimeDomainError)
from .geometry import DomainSpec, canonical_point

TWO_PI = 2.0 * math.pi

_HIST_GAUSS = np.polynomial.legendre.leggauss(3)
_LAST_GAUSS = np.polynomial.legendre.leggauss(8)
_Q_GAUSS = np.polynomial.legendre.leggauss(4)


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeGrid:
    """Graded mesh t_k = T (k/K)^gamma, k = 1..K."""
    horizon: float
    count: int
    grading: float = 2.0

    def __post_init__(self):
        if self.horizon <= 0 or self.count < 2:
            raise ConfigurationError("time grid needs T > 0 and K >= 2")
        if self.grading < 1.0:
            raise ConfigurationError("grading exponent must be >= 1")

    @cached_property
    def nodes(self) -> np.ndarray:
        k = np.arange(1, self.count + 1)
        return self.horizon * (k / self.count) ** self.grading

    @cached_property
    def nodes0(self) -> np.ndarray:
        return np.concatenate([[0.0], self.nodes])


@dataclass(frozen=True)
class BoundaryQuadrature:
    """Nodes and weights on Sigma; weights sum to |Sigma|.

    For the arc the boundary is two atoms with dA = counting measure; the
    cap rim uses uniform azimuth nodes (periodic trapezoid); rect edges
    use composite midpoint nodes per edge.
    """
    domain: DomainSpec
    nodes: np.ndarray
    weights: np.ndarray

    @staticmethod
    def build(omega: DomainSpec, count: int = 32) -> "BoundaryQuadrature":
        s = omega.shape
        if s[0] == "arc":
            nodes = np.array([[s[1]], [s[2]]])
            return BoundaryQuadrature(omega, nodes, np.ones(2))
        if s[0] in ("cap", "cap-complement", "slit-cap"):
            r = omega.manifold.scale[0]
            phi = (np.arange(count) + 0.5) * TWO_PI / count
            nodes = np.stack([np.full(count, s[1]), phi], axis=-1)
            w = np.full(count, omega.boundary_measure / count)
            return BoundaryQuadrature(omega, nodes, w)
        a1, b1, a2, b2 = s[1:]
        per_edge = max(4, count // 4)
        segs = []
        for (lo, hi, fixed, axis) in ((a1, b1, a2, 1), (a1, b1, b2, 1),
                                      (a2, b2, a1, 0), (a2, b2, b1, 0)):
            u = lo + (np.arange(per_edge) + 0.5) * (hi - lo) / per_edge
            pts = np.empty((per_edge, 2))
            if axis == 1:
                pts[:, 0], pts[:, 1] = u, fixed
            else:
                pts[:, 1], pts[:, 0] = u, fixed
            w = np.full(per_edge, (hi - lo) / per_edge)
            segs.append((pts, w))
        nodes = np.concatenate([p for p, _ in segs])
        w = np.concatenate([w for _, w in segs])
        return BoundaryQuadrature(omega, nodes, w)

    @property
    def count(self) -> int:
        return self.nodes.shape[0]


@dataclass
class LayerKernelTable:
    """Sampled correction kernel r(z_i, y_m, t_k) plus series diagnostics."""
    values: np.ndarray              # (M, NY, K)
    targets: np.ndarray             # (NY, coord-dim)
    quadrature: BoundaryQuadrature
    time_grid: TimeGrid
    order_norms: list = field(default_factory=list)   # sup-norm per series order

    def interp_in_time(self, tau):
        """Cubic-spline interpolation of r in time (r -> 0 as t -> 0)."""
        spline = self.__dict__.get("_spline")
        if spline is None:
            padded = np.concatenate(
                [np.zeros(self.values.shape[:2] + (1,)), self.values], axis=2)
            spline = CubicSpline(self.time_grid.nodes0, padded, axis=2)
            self.__dict__["_spline"] = spline
        tau = np.clip(tau, 0.0, self.time_grid.horizon)
        return spline(tau)


@dataclass(frozen=True)
class SingularBoundParams:
    """Exponents of the weak-singularity audit machinery (n = 2 only;
    for n = 1 the boundary is atomic and the exponent window is empty)."""
    mu: float
    alpha: float = 0.25

    @staticmethod
    def default(n: int) -> "SingularBoundParams":
        return SingularBoundParams(mu=(0.5 + n / 2.0) / 2.0, alpha=0.25)

    def validate(self, n: int):
        if n >= 2 and not (0.5 < self.mu < n / 2.0):
            raise ConfigurationError("mu must lie in (1/2, n/2)")
        if not (0.0 < self.alpha < 0.5):
            raise ConfigurationError("alpha must lie in (0, 1/2)")


# ---------------------------------------------------------------------------
# boundary kernels (geometry-specialized, vectorized in the node indices)
# ---------------------------------------------------------------------------

class BoundaryKernels:
    """Precomputed geometry for fast evaluation of r1 and p on Sigma.

    kmat(tau)        -> (M, M) matrix of r1(z_i, z_j, tau) (cell-averaged
                        over the source cell on the cap rim)
    target_geometry  -> opaque precompute for a target set
    r1_targets       -> (M, NY) matrix of r1(z_i, y_m, tau)
    p_targets        -> (NY,) or (M,) kernel values p(., z_i, tau)
    """

    def __init__(self, evaluator: KernelEvaluator, quadrature: BoundaryQuadrature):
        self.ev = evaluator
        self.bq = quadrature
        self.omega = quadrature.domain
        m = evaluator.manifold
        self.kind = m.kind
        nodes = quadrature.nodes
        self._normals = np.array([self.omega.outward_normal(z).dir for z in nodes])
        if m.kind == "circle":
            r = m.scale[0]
            th = nodes[:, 0]
            self._s_bb = r * geo.wrap_angle(th[:, None] - th[None, :])
        elif m.kind == "sphere2":
            self._setup_rim()
        else:
            self._d_bb = None     # torus uses wrapped coordinate differences
            l = np.asarray(m.scale)
            du = nodes[:, None, :] - nodes[None, :, :]
            self._du_bb = du - l * np.round(du / l)

    # -- sphere rim precompute ---------------------------------------------

    _L_CACHE = 170

    def _setup_rim(self):
        m = self.ev.manifold
        r = m.scale[0]
        colat = self.bq.nodes[0, 0]
        mcount = self.bq.count
        h = TWO_PI / mcount
        gx, gw = np.polynomial.legendre.leggauss(8)
        # all azimuth lags needed for the cell-averaged circulant first row:
        # cell centers k*h with sub-cell Gauss offsets
        centers = np.arange(mcount) * h
        offs = 0.5 * h * gx
        self._rim_gw = 0.5 * gw                      # cell-average weights (sum 1)
        psi = centers[:, None] + offs[None, :]       # (M, G) azimuth lags
        self._rim_d, self._rim_nproj = _rim_pair_geometry(r, colat, psi)
        self._rim_stacks = _legendre_stacks(self._rim_d / r, self._L_CACHE)
        self._rim_r = r

    def kmat(self, tau: float) -> np.ndarray:
        """r1(z_i, z_j, tau) matrix (source-cell averaged on the rim)."""
        m = self.ev.manifold
        if self.kind == "circle":
            dps = circle_kernel(self._s_bb, tau, m.total_volume, deriv=1)
            return -2.0 * self._normals[:, 0][:, None] * dps
        if self.kind == "sphere2":
            pd = _sphere_pd(self._rim_d, tau, self._rim_r, self._rim_stacks)
            row = np.sum((pd * self._rim_nproj) * self._rim_gw[None, :], axis=1)
            vals = -2.0 * row
            idx = (np.arange(self.bq.count)[None, :] - np.arange(self.bq.count)[:, None]) % self.bq.count
            return vals[idx]
        l1, l2 = m.scale
        du = self._du_bb
        g1 = circle_kernel(du[:, :, 0], tau, l1)
        g2 = circle_kernel(du[:, :, 1], tau, l2)
        d1 = circle_kernel(du[:, :, 0], tau, l1, deriv=1)
        d2 = circle_kernel(du[:, :, 1], tau, l2, deriv=1)
        grad_nu = self._normals[:, 0][:, None] * d1 * g2 + \
            self._normals[:, 1][:, None] * g1 * d2
        return -2.0 * grad_nu

    # -- boundary -> target kernels ----------------------------------------

    def target_geometry(self, targets: np.ndarray):
        m = self.ev.manifold
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        nodes = self.bq.nodes
        if self.kind == "circle":
            r = m.scale[0]
            s = r * geo.wrap_angle(nodes[:, 0][:, None] - targets[:, 0][None, :])
            return ("circle", s, targets)
        if self.kind == "sphere2":
            r = m.scale[0]
            d, nproj = _sphere_pair_geometry(r, nodes, targets, self._normals)
            stacks = _legendre_stacks(d / r, self._L_CACHE)
            return ("sphere2", d, nproj, stacks, targets)
        l = np.asarray(m.scale)
        du = nodes[:, None, :] - targets[None, :, :]
        du -= l * np.round(du / l)
        return ("flat-torus2", du, targets)

    def r1_targets(self, tau: float, tgeo) -> np.ndarray:
        m = self.ev.manifold
        if tgeo[0] == "circle":
            dps = circle_kernel(tgeo[1], tau, m.total_volume, deriv=1)
            return -2.0 * self._normals[:, 0][:, None] * dps
        if tgeo[0] == "sphere2":
            _, d, nproj, stacks, _ = tgeo
            pd = _sphere_pd(d, tau, m.scale[0], stacks)
            return -2.0 * pd * nproj
        du = tgeo[1]
        l1, l2 = m.scale
        g1 = circle_kernel(du[:, :, 0], tau, l1)
        g2 = circle_kernel(du[:, :, 1], tau, l2)
        d1 = circle_kernel(du[:, :, 0], tau, l1, deriv=1)
        d2 = circle_kernel(du[:, :, 1], tau, l2, deriv=1)
        return -2.0 * (self._normals[:, 0][:, None] * d1 * g2 +
                       self._normals[:, 1][:, None] * g1 * d2)

    def p_targets(self, tau: float, tgeo) -> np.ndarray:
        """p(z_i, y_m, tau) on the same precomputed geometry: (M, NY)."""
        m = self.ev.manifold
        if tgeo[0] == "circle":
            return circle_kernel(tgeo[1], tau, m.total_volume)
        if tgeo[0] == "sphere2":
            _, d, _, stacks, _ = tgeo
            return _sphere_p(d, tau, m.scale[0], stacks)
        du = tgeo[1]
        l1, l2 = m.scale
        return circle_kernel(du[:, :, 0], tau, l1) * circle_kernel(du[:, :, 1], tau, l2)


def _legendre_stacks(theta, lmax):
    """P_l(cos theta) and dP_l/dtheta stacks, l = 0..lmax, by recurrence."""
    c = np.cos(theta)
    st = np.sin(theta)
    shape = (lmax + 1,) + c.shape
    p = np.empty(shape)
    dp = np.empty(shape)
    p[0], dp[0] = 1.0, 0.0
    p[1], dp[1] = c, -st
    for l in range(1, lmax):
        p[l + 1] = ((2 * l + 1) * c * p[l] - l * p[l - 1]) / (l + 1)
        dp[l + 1] = ((2 * l + 1) * (c * dp[l] - st * p[l]) - l * dp[l - 1]) / (l + 1)
    return p, dp


def _sphere_coeffs(tau_scaled, lmax_cache, tol=1e-14):
    l = np.arange(lmax_cache + 1)
    return (2 * l + 1) * np.exp(-l * (l + 1) * tau_scaled)


def _sphere_p(d, tau, radius, stacks):
    if tau < ambient.SPHERE_TAU_SWITCH * radius ** 2:
        return ambient.sphere_parametrix(d, tau, radius)
    w = _sphere_coeffs(tau / radius ** 2, stacks[0].shape[0] - 1)
    norm = 1.0 / (4.0 * math.pi * radius ** 2)
    return norm * np.tensordot(w, stacks[0], axes=([0], [0]))


def _sphere_pd(d, tau, radius, stacks):
    """d/dd of the sphere kernel on precomputed Legendre stacks."""
    if tau < ambient.SPHERE_TAU_SWITCH * radius ** 2:
        _, pd = ambient.sphere_parametrix(d, tau, radius, want_deriv=True)
        return pd
    w = _sphere_coeffs(tau / radius ** 2, stacks[0].shape[0] - 1)
    norm = 1.0 / (4.0 * math.pi * radius ** 3)
    return norm * np.tensordot(w, stacks[1], axes=([0], [0]))


def _rim_pair_geometry(radius, colat, psi):
    """Distance and normal projection between rim points at azimuth lag psi.

    Returns d (same shape as psi) and nproj = <grad_x d, nu_x> with nu the
    increasing-colatitude normal of the cap rim.
    """
    st, ct = math.sin(colat), math.cos(colat)
    cosd = np.clip(ct * ct + st * st * np.cos(psi), -1.0, 1.0)
    d = radius * np.arccos(cosd)
    # embedding: x at azimuth 0, z at azimuth psi, both colat
    sind = np.sqrt(np.maximum(1.0 - cosd * cosd, 0.0))
    # unit tangent at x toward z: t3 = (z - cosd * x)/sind ; nu = e_colat(x)
    e_th_dot_z = ct * np.cos(psi) * st - st * ct     # e_colat(x) . z_hat
    with np.errstate(invalid="ignore", divide="ignore"):
        nproj = -np.where(sind > 1e-14, (e_th_dot_z - 0.0) / sind, 0.0)
    return d, nproj


def _sphere_pair_geometry(radius, nodes, targets, normals):
    xv = np.stack(geo._sph_to_vec(nodes[:, 0], nodes[:, 1]), axis=-1)
    yv = np.stack(geo._sph_to_vec(targets[:, 0], targets[:, 1]), axis=-1)
    cosd = np.clip(xv @ yv.T, -1.0, 1.0)
    d = radius * np.arccos(cosd)
    sind = np.sqrt(np.maximum(1.0 - cosd ** 2, 0.0))
    nu3 = np.empty_like(xv)
    for i, z in enumerate(nodes):
        e_th, e_ph = geo._sph_frame(z[0], z[1])
        nu3[i] = normals[i, 0] * e_th + normals[i, 1] * e_ph
    # <grad_x d, nu> = -<unit tangent x->y, nu> = -(y.nu)/sin d
    ydotnu = yv @ nu3.T
    with np.errstate(invalid="ignore", divide="ignore"):
        nproj = -np.where(sind > 1e-14, ydotnu.T / sind, 0.0)
    return d, nproj


# ---------------------------------------------------------------------------
# the discrete Volterra system
# ---------------------------------------------------------------------------

class LayerSystem:
    """Bundles evaluator, domain, boundary rule and time mesh."""

    def __init__(self, evaluator: KernelEvaluator, omega: DomainSpec,
                 quadrature: BoundaryQuadrature | None = None,
                 time_grid: TimeGrid | None = None,
                 boundary_count: int = 32):
        if omega.manifold != evaluator.manifold:
            raise ConfigurationError("domain and evaluator manifolds differ")
        self.ev = evaluator
        self.omega = omega
        self.bq = quadrature or BoundaryQuadrature.build(omega, boundary_count)
        self.tg = time_grid or TimeGrid(horizon=1.0, count=144)
        self.kernels = BoundaryKernels(evaluator, self.bq)

    # -- RHS ----------------------------------------------------------------

    def r1_table(self, targets) -> np.ndarray:
        """r1(z_i, y_m, t_k) on the grid: (M, NY, K)."""
        tgeo = self.kernels.target_geometry(targets)
        out = np.stack([self.kernels.r1_targets(t, tgeo) for t in self.tg.nodes],
                       axis=2)
        return out

    # -- convolution against the boundary kernel ---------------------------

    def _conv_at(self, k_idx: int, interp):
        """int_0^{t_k} Kmat(t_k - s) W g(s) ds with g(s) = interp(s): (M, NY).

        interp must accept a scalar s and return the (M, NY) density there.
        The cell adjacent to s = t_k is handled by the caller (marching) or
        included here via interp when the density is known (series route).
        """
        t0 = self.tg.nodes0
        tk = t0[k_idx]
        w = self.bq.weights
        acc = None
        gx, gw = _HIST_GAUSS
        for c in range(1, k_idx):
            a, b = t0[c - 1], t0[c]
            s = 0.5 * (b - a) * gx + 0.5 * (a + b)
            for sg, wg in zip(s, 0.5 * (b - a) * gw):
                term = self.kernels.kmat(tk - sg) @ (w[:, None] * interp(sg))
                acc = term * wg if acc is None else acc + term * wg
        # last cell, tau = tk - s in (0, Delta): substitute tau = Delta u^2
        a = t0[k_idx - 1]
        delta = tk - a
        ux, uw = _LAST_GAUSS
        u = 0.5 * (ux + 1.0)
        for ug, wg in zip(u, 0.5 * uw):
            tau = delta * ug * ug
            s = tk - tau
            term = self.kernels.kmat(tau) @ (w[:, None] * interp(s))
            acc = term * (wg * 2.0 * delta * ug) if acc is None \
                else acc + term * (wg * 2.0 * delta * ug)
        return acc

    def _last_cell_matrices(self, k_idx: int):
        """A1, A0 with int over the last cell = A1 W g(t_k) + A0 W g(t_{k-1})
        for g linear on the cell (used by the implicit march)."""
        t0 = self.tg.nodes0
        delta = t0[k_idx] - t0[k_idx - 1]
        ux, uw = _LAST_GAUSS
        u = 0.5 * (ux + 1.0)
        mcount = self.bq.count
        a1 = np.zeros((mcount, mcount))
        a0 = np.zeros((mcount, mcount))
        for ug, wg in zip(u, 0.5 * uw):
            tau = delta * ug * ug
            km = self.kernels.kmat(tau) * (wg * 2.0 * delta * ug)
            lam = tau / delta            # interpolation weight toward t_{k-1}
            a1 += (1.0 - lam) * km
            a0 += lam * km
        return a1, a0

    def _history_sum(self, k_idx: int, values: np.ndarray):
        """History part of the convolution for grid-sampled values
        (M, NY, k_idx-1 available); linear interpolation inside cells."""
        t0 = self.tg.nodes0
        tk = t0[k_idx]
        w = self.bq.weights
        gx, gw = _HIST_GAUSS
        acc = 0.0
        for c in range(1, k_idx):
            a, b = t0[c - 1], t0[c]
            lo = values[:, :, c - 2] if c >= 2 else np.zeros(values.shape[:2])
            hi = values[:, :, c - 1]
            s = 0.5 * (b - a) * gx + 0.5 * (a + b)
            for sg, wg in zip(s, 0.5 * (b - a) * gw):
                lam = (sg - a) / (b - a)
                g = (1.0 - lam) * lo + lam * hi
                acc = acc + wg * (self.kernels.kmat(tk - sg) @ (w[:, None] * g))
        return acc

    # -- solvers ------------------------------------------------------------

    def march(self, targets) -> LayerKernelTable:
        """Direct forward-substitution solve of r = r1 + Kconv r."""
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        b = self.r1_table(targets)
        mcount, ny, kcount = b.shape
        vals = np.zeros_like(b)
        w = self.bq.weights
        eye = np.eye(mcount)
        for k in range(1, kcount + 1):
            a1, a0 = self._last_cell_matrices(k)
            rhs = b[:, :, k - 1] + self._history_sum(k, vals)
            prev = vals[:, :, k - 2] if k >= 2 else np.zeros((mcount, ny))
            rhs = rhs + a0 @ (w[:, None] * prev)
            lhs = eye - a1 * w[None, :]
            sol = np.linalg.solve(lhs, rhs)
            vals[:, :, k - 1] = sol
        return LayerKernelTable(vals, targets, self.bq, self.tg)

    def series(self, targets, j_max: int = 12, tol: float = 1e-8) -> LayerKernelTable:
        """Successive approximations r = sum_j r^j with decay diagnostics."""
        if j_max < 1:
            raise ConfigurationError("j_max must be >= 1")
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        term = self.r1_table(targets)
        total = term.copy()
        norms = [float(np.max(np.abs(term)))]
        base = norms[0]
        grow = 0
        for j in range(1, j_max):
            term = self._convolve_table(term)
            nrm = float(np.max(np.abs(term)))
            norms.append(nrm)
            total += term
            if nrm <= tol * base:
                break
            if len(norms) >= 2 and nrm >= norms[-2]:
                grow += 1
                if grow >= 3:
                    raise NonConvergenceError(
                        "series norms non-decreasing for 3 consecutive orders; "
                        "shrink the horizon T", achieved=norms)
            else:
                grow = 0
        table = LayerKernelTable(total, targets, self.bq, self.tg, norms)
        return table

    def _convolve_table(self, values: np.ndarray) -> np.ndarray:
        """Kconv applied to a grid-sampled density (all values known)."""
        mcount, ny, kcount = values.shape
        out = np.zeros_like(values)
        w = self.bq.weights
        t0 = self.tg.nodes0
        padded = np.concatenate([np.zeros((mcount, ny, 1)), values], axis=2)

        def interp(s):
            idx = np.clip(np.searchsorted(t0, s), 1, kcount)
            lam = (s - t0[idx - 1]) / (t0[idx] - t0[idx - 1])
            return (1 - lam) * padded[:, :, idx - 1] + lam * padded[:, :, idx]

        for k in range(1, kcount + 1):
            out[:, :, k - 1] = self._conv_at(k, interp)
        return out

    # -- single-layer potential against p -----------------------------------

    def single_layer(self, density: LayerKernelTable | np.ndarray, x, t: float,
                     tgeo_cache=None) -> float | np.ndarray:
        """int_0^t int_Sigma p(x, z, s) mu(z, t - s) dA(z) ds.

        density: LayerKernelTable (multi-target) or array (M, K) for one
        density; x a single point.  Returns a scalar for an (M, K) density,
        a vector over targets for a table.
        """
        if isinstance(density, LayerKernelTable):
            table = density
        else:
            arr = np.asarray(density, dtype=float)
            if arr.shape != (self.bq.count, self.tg.count):
                raise GridShapeError(
                    f"density shape {arr.shape} != (M, K) = "
                    f"({self.bq.count}, {self.tg.count})")
            table = LayerKernelTable(arr[:, None, :], np.zeros((1, 1)),
                                     self.bq, self.tg)
        out = self.single_layer_batch(table, np.asarray(x, float)[None, ...]
                                      if np.ndim(x) <= 1 else x, t)[0]
        if not isinstance(density, LayerKernelTable):
            return float(out[0])
        return out

    def single_layer_batch(self, table: LayerKernelTable, sources,
                           t: float) -> np.ndarray:
        """Potential at a batch of source points: (NX, NY) array."""
        if not (0 < t <= self.tg.horizon * (1 + 1e-12)):
            raise TimeDomainError("t outside the grid range")
        m = self.ev.manifold
        sources = np.atleast_2d(np.asarray(sources, dtype=float))
        sources = np.array([canonical_point(m, x) for x in sources])
        pgeo = self.kernels.target_geometry(sources)
        w = self.bq.weights
        t0 = self.tg.nodes0
        # split at t/2: each half is integrated in the variable that puts
        # its (possibly sharp) endpoint at the fine end of the graded mesh
        half = 0.5 * t
        cells = [(a, min(b, half)) for a, b in zip(t0[:-1], t0[1:]) if a < half]
        gx, gw = _Q_GAUSS
        acc = 0.0
        for a, b in cells:
            if a == 0.0:
                # substitute s = b v^2 so the inverse-square-root blowup of
                # p at s -> 0 (sources on the boundary) integrates cleanly
                ux, uw = _LAST_GAUSS
                v = 0.5 * (ux + 1.0)
                s = b * v * v
                ws = 0.5 * uw * 2.0 * b * v
            else:
                s = 0.5 * (b - a) * gx + 0.5 * (a + b)
                ws = 0.5 * (b - a) * gw
            for sg, wg in zip(s, ws):
                pmat = self.kernels.p_targets(sg, pgeo)             # (M, NX)
                mu = table.interp_in_time(t - sg)                   # (M, NY)
                acc = acc + wg * (pmat.T @ (w[:, None] * mu))
                pmat2 = self.kernels.p_targets(t - sg, pgeo)
                mu2 = table.interp_in_time(sg)
                acc = acc + wg * (pmat2.T @ (w[:, None] * mu2))
        return acc


# ---------------------------------------------------------------------------
# module-level convenience operations
# ---------------------------------------------------------------------------

def r1_eval(evaluator: KernelEvaluator, omega: DomainSpec, x, y, t: float) -> float:
    """First-order layer kernel r1 = -2 dp/dnu_x."""
    return -2.0 * evaluator.eval_dp_dnu(omega, x, y, t)


def neumann_series_r(evaluator, omega, targets, time_grid=None, quadrature=None,
                     j_max: int = 12, tol: float = 1e-8,
                     boundary_count: int = 32) -> LayerKernelTable:
    sys_ = LayerSystem(evaluator, omega, quadrature, time_grid, boundary_count)
    return sys_.series(targets, j_max=j_max, tol=tol)


def volterra_march_r(evaluator, omega, targets, time_grid=None, quadrature=None,
                     boundary_count: int = 32) -> LayerKernelTable:
    sys_ = LayerSystem(evaluator, omega, quadrature, time_grid, boundary_count)
    return sys_.march(targets)


def phi_density(system: LayerSystem, psi_values, volume_points, volume_weights,
                table: LayerKernelTable | None = None,
                route: str = "table") -> np.ndarray:
    """Boundary density phi(z_i, t_k) for initial datum psi.

    route="table": integrate a correction-kernel table over psi;
    route="march": solve the phi integral equation directly (mutual oracle).
    """
    psi = np.asarray(psi_values, dtype=float)
    vw = np.asarray(volume_weights, dtype=float)
    if psi.shape != vw.shape:
        raise GridShapeError("psi samples and volume weights differ in shape")
    if route == "table":
        if table is None:
            table = system.march(volume_points)
        return np.tensordot(table.values, psi * vw, axes=([1], [0]))
    if route != "march":
        raise ConfigurationError(f"unknown route {route!r}")
    tgeo = system.kernels.target_geometry(volume_points)
    b = np.stack(
        [system.kernels.r1_targets(t, tgeo) @ (psi * vw) for t in system.tg.nodes],
        axis=1)                                                    # (M, K)
    # phi = b + Kconv phi: same march with a vector density
    table_b = b[:, None, :]
    mcount, _, kcount = table_b.shape
    vals = np.zeros_like(table_b)
    w = system.bq.weights
    eye = np.eye(mcount)
    for k in range(1, kcount + 1):
        a1, a0 = system._last_cell_matrices(k)
        rhs = table_b[:, :, k - 1] + system._history_sum(k, vals)
        prev = vals[:, :, k - 2] if k >= 2 else np.zeros((mcount, 1))
        rhs = rhs + a0 @ (w[:, None] * prev)
        sol = np.linalg.solve(eye - a1 * w[None, :], rhs)
        vals[:, :, k - 1] = sol
    return vals[:, 0, :]


def normal_derivative_bound_audit(evaluator, omega, mu: float, boundary_points, field_points,
             times) -> dict:
    """Sup of |dp/dnu_x| * t^mu * d^{n-2mu} over the sample set."""
    if mu <= 0:
        raise ConfigurationError("mu must be positive")
    n = evaluator.manifold.dim
    sup, trace = 0.0, []
    for x in boundary_points:
        for y in field_points:
            d = geo.distance(evaluator.manifold, x, y)
            if d == 0:
                continue
            for t in times:
                val = abs(evaluator.dp_dnu_unguarded(omega, x, y, t)) \
                    * t ** mu * d ** (n - 2 * mu)
                trace.append((d, t, val))
                sup = max(sup, val)
    return {"constant": sup, "mu": mu, "samples": len(trace), "trace": trace}


def boundary_convolution_bound_audit(omega: DomainSpec, alpha: float, beta: float, pairs,
             boundary_count: int = 512) -> dict:
    """Boundary convolution bound: sup over pairs of the quadrature value
    of int_Sigma d^-alpha(x,z) d^-beta(z,y) dA against the stated branch."""
    n = omega.manifold.dim
    if n != 2:
        raise ConfigurationError("the exponent audit requires a 1-D boundary")
    if not (0 < alpha < n - 1 + 1e-12) or alpha >= n - 1:
        if not (0 <= alpha < n - 1):
            raise ConfigurationError("alpha must lie in [0, n-1)")
    if abs(alpha + beta - (n - 1)) < 1e-12:
        raise ConfigurationError("alpha + beta = n - 1 is excluded")
    bq = BoundaryQuadrature.build(omega, boundary_count)
    sup = 0.0
    m = omega.manifold
    for x, y in pairs:
        dxz = np.array([geo.distance(m, x, z) for z in bq.nodes])
        dzy = np.array([geo.distance(m, z, y) for z in bq.nodes])
        mask = (dxz > 1e-12) & (dzy > 1e-12)
        integral = float(np.sum(bq.weights[mask] *
                                dxz[mask] ** -alpha * dzy[mask] ** -beta))
        dxy = geo.distance(m, x, y)
        rhs = dxy ** (n - 1 - (alpha + beta)) if alpha + beta > n - 1 else 1.0
        sup = max(sup, integral / rhs)
    return {"constant": sup, "alpha": alpha, "beta": beta,
            "branch": "distance-power" if alpha + beta > n - 1 else "bounded"}
