"""Model manifolds and subdomains.

Three closed model geometries are supported: the circle of radius R, the
round 2-sphere of radius R and the flat 2-torus with periods (L1, L2).
All of them have closed-form distance, geodesics, cut locus and volumes,
which is what makes the downstream kernel checks oracle-testable.

Conventions
-----------
* circle points: angle theta (canonical range [0, 2*pi)); arc length is
  R * dtheta.
* sphere points: (colatitude, azimuth) with colatitude in [0, pi];
  tangent vectors are components in the orthonormal frame
  (e_colat, e_azim).
* torus points: (u1, u2) with ui in [0, Li); the metric is Euclidean.
* direction-set measure on the unit tangent sphere is normalized: for
  n = 2 a direction arc of angular width w has measure w / (2*pi); for
  n = 1 each of the two directions has measure 1/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundaryMembershipError, DomainValidationError

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# manifolds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifoldModel:
    kind: str                     # "circle" | "sphere2" | "flat-torus2"
    scale: tuple                  # (R,) or (L1, L2)
    dim: int
    total_volume: float
    injectivity_radius: float
    sectional_curvature_upper: float
    ricci_lower_coeff: float

    @staticmethod
    def circle(radius: float = 1.0) -> "ManifoldModel":
        if radius <= 0:
            raise DomainValidationError("circle radius must be positive")
        return ManifoldModel("circle", (radius,), 1, TWO_PI * radius,
                             math.pi * radius, 0.0, 0.0)

    @staticmethod
    def sphere2(radius: float = 1.0) -> "ManifoldModel":
        if radius <= 0:
            raise DomainValidationError("sphere radius must be positive")
        k = 1.0 / radius ** 2
        return ManifoldModel("sphere2", (radius,), 2, 4.0 * math.pi * radius ** 2,
                             math.pi * radius, k, k)

    @staticmethod
    def flat_torus2(l1: float = 1.0, l2: float = 1.0) -> "ManifoldModel":
        if l1 <= 0 or l2 <= 0:
            raise DomainValidationError("torus periods must be positive")
        return ManifoldModel("flat-torus2", (l1, l2), 2, l1 * l2,
                             0.5 * min(l1, l2), 0.0, 0.0)

    @property
    def diameter(self) -> float:
        if self.kind == "circle":
            return math.pi * self.scale[0]
        if self.kind == "sphere2":
            return math.pi * self.scale[0]
        l1, l2 = self.scale
        return 0.5 * math.hypot(l1, l2)


def canonical_point(m: ManifoldModel, coords) -> np.ndarray:
    """Reduce coordinates to the canonical fundamental range."""
    c = np.atleast_1d(np.asarray(coords, dtype=float)).copy()
    if m.kind == "circle":
        c[0] = c[0] % TWO_PI
    elif m.kind == "sphere2":
        colat = c[0] % TWO_PI
        if colat > math.pi:            # fold back through the pole
            colat = TWO_PI - colat
            c[1] = c[1] + math.pi
        c[0] = colat
        c[1] = c[1] % TWO_PI
    elif m.kind == "flat-torus2":
        c[0] = c[0] % m.scale[0]
        c[1] = c[1] % m.scale[1]
    else:
        raise DomainValidationError(f"unknown manifold kind {m.kind!r}")
    return c


@dataclass(frozen=True)
class TangentDirection:
    """Unit tangent vector at a base point (components in the local frame)."""
    base: tuple
    dir: tuple

    def __post_init__(self):
        v = np.asarray(self.dir, dtype=float)
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise DomainValidationError("tangent direction must be a unit vector")


def tangent(m: ManifoldModel, base, direction) -> TangentDirection:
    b = tuple(canonical_point(m, base))
    v = np.atleast_1d(np.asarray(direction, dtype=float))
    n = np.linalg.norm(v)
    if n == 0:
        raise DomainValidationError("zero tangent vector")
    return TangentDirection(b, tuple(v / n))


# ---------------------------------------------------------------------------
# sphere embedding helpers
# ---------------------------------------------------------------------------

def _sph_to_vec(colat, azim):
    st, ct = np.sin(colat), np.cos(colat)
    return np.array([st * np.cos(azim), st * np.sin(azim), ct])


def _vec_to_sph(v):
    v = v / np.linalg.norm(v)
    colat = math.acos(np.clip(v[2], -1.0, 1.0))
    azim = math.atan2(v[1], v[0]) % TWO_PI
    return np.array([colat, azim])


def _sph_frame(colat, azim):
    """Orthonormal frame (e_colat, e_azim) as 3-vectors."""
    e_th = np.array([math.cos(colat) * math.cos(azim),
                     math.cos(colat) * math.sin(azim),
                     -math.sin(colat)])
    e_ph = np.array([-math.sin(azim), math.cos(azim), 0.0])
    return e_th, e_ph


# ---------------------------------------------------------------------------
# distance / geodesics / cut locus
# ---------------------------------------------------------------------------

def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return math.pi - (math.pi - np.asarray(a)) % TWO_PI


def distance(m: ManifoldModel, x, y) -> float:
    """Geodesic distance d(x, y)."""
    x = canonical_point(m, x)
    y = canonical_point(m, y)
    if m.kind == "circle":
        r = m.scale[0]
        return r * abs(wrap_angle(y[0] - x[0]))
    if m.kind == "sphere2":
        r = m.scale[0]
        c = float(np.dot(_sph_to_vec(*x), _sph_to_vec(*y)))
        return r * math.acos(min(1.0, max(-1.0, c)))
    l1, l2 = m.scale
    d1 = min(abs(y[0] - x[0]), l1 - abs(y[0] - x[0]))
    d2 = min(abs(y[1] - x[1]), l2 - abs(y[1] - x[1]))
    return math.hypot(d1, d2)


def geodesic(m: ManifoldModel, td: TangentDirection, s: float) -> np.ndarray:
    """Unit-speed geodesic gamma_{x, xi}(s)."""
    if s < 0:
        raise DomainValidationError("arclength must be nonnegative")
    x = np.asarray(td.base, dtype=float)
    v = np.asarray(td.dir, dtype=float)
    if m.kind == "circle":
        r = m.scale[0]
        return canonical_point(m, [x[0] + v[0] * s / r])
    if m.kind == "sphere2":
        r = m.scale[0]
        u = _sph_to_vec(*x)
        e_th, e_ph = _sph_frame(*x)
        xi = v[0] * e_th + v[1] * e_ph
        a = s / r
        return canonical_point(m, _vec_to_sph(math.cos(a) * u + math.sin(a) * xi))
    return canonical_point(m, x + v * s)


def log_direction(m: ManifoldModel, x, y):
    """Initial direction of a minimal geodesic from x to y, with d(x, y).

    Returns (TangentDirection at x, distance).  At the cut locus one of the
    minimizers is returned.  x == y raises (no direction).
    """
    x = canonical_point(m, x)
    y = canonical_point(m, y)
    d = distance(m, x, y)
    if d == 0.0:
        raise DomainValidationError("log direction undefined at coincident points")
    if m.kind == "circle":
        dth = wrap_angle(y[0] - x[0])
        sgn = 1.0 if dth >= 0 else -1.0
        if abs(abs(dth) - math.pi) < 1e-15:
            sgn = 1.0
        return tangent(m, x, [sgn]), d
    if m.kind == "sphere2":
        u, w = _sph_to_vec(*x), _sph_to_vec(*y)
        t3 = w - float(np.dot(u, w)) * u
        nt = np.linalg.norm(t3)
        if nt < 1e-14:          # antipodal: pick any direction
            e_th, _ = _sph_frame(*x)
            t3, nt = e_th, 1.0
        t3 /= nt
        e_th, e_ph = _sph_frame(*x)
        return tangent(m, x, [float(np.dot(t3, e_th)), float(np.dot(t3, e_ph))]), d
    l = np.asarray(m.scale)
    dv = y - x
    dv -= l * np.round(dv / l)
    return tangent(m, x, dv), d


_TORUS_IMAGE_RANGE = 3   # lattice images |m_i| <= 3 cover every r <= diameter used here


def torus_images(m: ManifoldModel):
    l1, l2 = m.scale
    rng = range(-_TORUS_IMAGE_RANGE, _TORUS_IMAGE_RANGE + 1)
    return np.array([[i * l1, j * l2] for i in rng for j in rng if (i, j) != (0, 0)])


def cutlocus_distance(m: ManifoldModel, td: TangentDirection) -> float:
    """Distance r(x, xi) from the base point to the cut locus along xi."""
    if m.kind in ("circle", "sphere2"):
        return math.pi * m.scale[0]
    v = np.asarray(td.dir, dtype=float)
    best = math.inf
    for img in torus_images(m):
        proj = float(np.dot(v, img))
        if proj > 1e-15:
            best = min(best, float(np.dot(img, img)) / (2.0 * proj))
    return best


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DomainSpec:
    """Open subdomain Omega with boundary Sigma.

    shape is one of:
      * ("arc", theta0, theta1)      on the circle, 0 < theta1 - theta0 < 2*pi
      * ("cap", colat_c)             on the sphere, 0 < colat_c < pi
      * ("cap-complement", colat_c)  on the sphere (colatitude > colat_c)
      * ("slit-cap", colat_c, colat_in, half_width)  adversarial fixture:
        the cap minus the azimuthal slit {|azim - pi| < half_width,
        colat > colat_in}; used to break the chain condition.
      * ("rect", a1, b1, a2, b2)     on the torus, strictly inside one period
    """
    manifold: ManifoldModel
    shape: tuple

    def __post_init__(self):
        m, s = self.manifold, self.shape
        kind = s[0]
        if kind == "arc":
            if m.kind != "circle":
                raise DomainValidationError("arc domains live on the circle")
            if not (0 < s[2] - s[1] < TWO_PI):
                raise DomainValidationError("arc must satisfy 0 < theta1 - theta0 < 2*pi")
        elif kind in ("cap", "cap-complement"):
            if m.kind != "sphere2":
                raise DomainValidationError("cap domains live on the sphere")
            if not (0 < s[1] < math.pi):
                raise DomainValidationError("cap must satisfy 0 < colat_c < pi")
        elif kind == "slit-cap":
            if m.kind != "sphere2":
                raise DomainValidationError("slit-cap lives on the sphere")
            if not (0 < s[1] < math.pi):
                raise DomainValidationError("cap must satisfy 0 < colat_c < pi")
            if not (0 < s[2] < s[1] and 0 < s[3] < math.pi / 2):
                raise DomainValidationError("slit parameters out of range")
        elif kind == "rect":
            if m.kind != "flat-torus2":
                raise DomainValidationError("rect domains live on the torus")
            a1, b1, a2, b2 = s[1:]
            if not (0 <= a1 < b1 < m.scale[0] and 0 <= a2 < b2 < m.scale[1]):
                raise DomainValidationError("rect must lie strictly inside one period")
        else:
            raise DomainValidationError(f"unknown shape {kind!r}")

    # -- membership ---------------------------------------------------------

    @property
    def boundary_dim(self) -> int:
        return self.manifold.dim - 1

    def contains(self, x, closure: bool = False, tol: float = 0.0) -> bool:
        """Membership in Omega (or its closure)."""
        x = canonical_point(self.manifold, x)
        s = self.shape
        pad = tol if closure else -tol
        if s[0] == "arc":
            th0, th1 = s[1], s[2]
            th = x[0]
            if th < th0:
                th += TWO_PI
            return th0 - pad <= th <= th1 + pad if closure else th0 + tol < th < th1 - tol
        if s[0] == "cap":
            return x[0] <= s[1] + pad if closure else x[0] < s[1] - tol
        if s[0] == "cap-complement":
            return x[0] >= s[1] - pad if closure else x[0] > s[1] + tol
        if s[0] == "slit-cap":
            colat_c, colat_in, hw = s[1], s[2], s[3]
            in_cap = x[0] <= colat_c + pad if closure else x[0] < colat_c - tol
            if not in_cap:
                return False
            in_slit = (abs(wrap_angle(x[1] - math.pi)) < hw) and (x[0] > colat_in)
            return not in_slit
        a1, b1, a2, b2 = s[1:]
        if closure:
            return a1 - pad <= x[0] <= b1 + pad and a2 - pad <= x[1] <= b2 + pad
        return a1 + tol < x[0] < b1 - tol and a2 + tol < x[1] < b2 - tol

    def on_boundary(self, x, tol: float = 1e-9) -> bool:
        s = self.shape
        x = canonical_point(self.manifold, x)
        if s[0] == "arc":
            r = self.manifold.scale[0]
            return min(abs(wrap_angle(x[0] - s[1])), abs(wrap_angle(x[0] - s[2]))) * r <= tol
        if s[0] in ("cap", "cap-complement", "slit-cap"):
            return abs(x[0] - s[1]) * self.manifold.scale[0] <= tol
        a1, b1, a2, b2 = s[1:]
        on1 = (min(abs(x[0] - a1), abs(x[0] - b1)) <= tol) and (a2 - tol <= x[1] <= b2 + tol)
        on2 = (min(abs(x[1] - a2), abs(x[1] - b2)) <= tol) and (a1 - tol <= x[0] <= b1 + tol)
        return on1 or on2

    # -- measures -----------------------------------------------------------

    @property
    def volume(self) -> float:
        m, s = self.manifold, self.shape
        if s[0] == "arc":
            return m.scale[0] * (s[2] - s[1])
        if s[0] in ("cap", "slit-cap"):
            return TWO_PI * m.scale[0] ** 2 * (1.0 - math.cos(s[1]))
        if s[0] == "cap-complement":
            return TWO_PI * m.scale[0] ** 2 * (1.0 + math.cos(s[1]))
        a1, b1, a2, b2 = s[1:]
        return (b1 - a1) * (b2 - a2)

    @property
    def boundary_measure(self) -> float:
        m, s = self.manifold, self.shape
        if s[0] == "arc":
            return 2.0                       # counting measure on two endpoint atoms
        if s[0] in ("cap", "cap-complement", "slit-cap"):
            return TWO_PI * m.scale[0] * math.sin(s[1])
        a1, b1, a2, b2 = s[1:]
        return 2.0 * ((b1 - a1) + (b2 - a2))

    # -- normals ------------------------------------------------------------

    def outward_normal(self, x) -> TangentDirection:
        """Unit outward normal at a boundary point."""
        m, s = self.manifold, self.shape
        x = canonical_point(m, x)
        if not self.on_boundary(x, tol=1e-8):
            raise BoundaryMembershipError(f"{tuple(x)} is not on the boundary")
        if s[0] == "arc":
            r = m.scale[0]
            if abs(wrap_angle(x[0] - s[1])) * r <= abs(wrap_angle(x[0] - s[2])) * r:
                return tangent(m, x, [-1.0])
            return tangent(m, x, [1.0])
        if s[0] in ("cap", "slit-cap"):
            return tangent(m, x, [1.0, 0.0])     # increasing colatitude leaves the cap
        if s[0] == "cap-complement":
            return tangent(m, x, [-1.0, 0.0])
        a1, b1, a2, b2 = s[1:]
        cands = [(abs(x[0] - a1), [-1.0, 0.0]), (abs(x[0] - b1), [1.0, 0.0]),
                 (abs(x[1] - a2), [0.0, -1.0]), (abs(x[1] - b2), [0.0, 1.0])]
        cands.sort(key=lambda c: c[0])
        return tangent(m, x, cands[0][1])

    # -- quadratures --------------------------------------------------------

    def volume_quadrature(self, nodes_per_axis: int = 48):
        """Gauss-Legendre product rule on the parametric domain.

        Returns (points, weights) with sum(weights) == volume(Omega).
        The slit-cap reuses the cap rule (the slit has measure zero).
        """
        m, s = self.manifold, self.shape
        gx, gw = np.polynomial.legendre.leggauss(nodes_per_axis)

        def mapped(a, b):
            return 0.5 * (b - a) * gx + 0.5 * (a + b), 0.5 * (b - a) * gw

        if s[0] == "arc":
            th, w = mapped(s[1], s[2])
            return th[:, None], w * m.scale[0]
        if s[0] in ("cap", "slit-cap", "cap-complement"):
            r = m.scale[0]
            lo, hi = (0.0, s[1]) if s[0] != "cap-complement" else (s[1], math.pi)
            th, wth = mapped(lo, hi)
            ph, wph = mapped(0.0, TWO_PI)
            pts = np.stack(np.meshgrid(th, ph, indexing="ij"), axis=-1).reshape(-1, 2)
            w = (wth[:, None] * wph[None, :] * (r * r * np.sin(th))[:, None]).reshape(-1)
            return pts, w
        a1, b1, a2, b2 = s[1:]
        u1, w1 = mapped(a1, b1)
        u2, w2 = mapped(a2, b2)
        pts = np.stack(np.meshgrid(u1, u2, indexing="ij"), axis=-1).reshape(-1, 2)
        w = (w1[:, None] * w2[None, :]).reshape(-1)
        return pts, w


# ---------------------------------------------------------------------------
# volumes of balls, relative balls and cones
# ---------------------------------------------------------------------------

def ball_volume(m: ManifoldModel, x, r: float) -> float:
    """Volume of the geodesic ball B(x, r)."""
    if r <= 0:
        raise DomainValidationError("radius must be positive")
    if m.kind == "circle":
        return min(2.0 * r, m.total_volume)
    if m.kind == "sphere2":
        rr = m.scale[0]
        if r >= math.pi * rr:
            return m.total_volume
        return TWO_PI * rr * rr * (1.0 - math.cos(r / rr))
    if r <= m.injectivity_radius:
        return min(math.pi * r * r, m.total_volume)
    if r >= m.diameter:
        return m.total_volume
    return _torus_ball_grid(m, r)


def _torus_ball_grid(m, r, n=700):
    """Area of a torus metric disk beyond the injectivity radius.

    Midpoint grid on the fundamental domain; only used for
    inj < r < diameter, where no closed form is available.
    """
    l1, l2 = m.scale
    u = (np.arange(n) + 0.5) * l1 / n
    v = (np.arange(n) + 0.5) * l2 / n
    du = np.minimum(u, l1 - u)
    dv = np.minimum(v, l2 - v)
    d2 = du[:, None] ** 2 + dv[None, :] ** 2
    return float(np.count_nonzero(d2 <= r * r)) * (l1 * l2) / (n * n)


def _cap_cap_area(radius, ang1, ang2, sep):
    """Area of the intersection of two spherical caps (angular radii ang1,
    ang2, centers at angular distance sep) on the sphere of given radius.

    Gauss-Bonnet on the lens: A = 2*pi - 2*A1*cos(ang1) - 2*A2*cos(ang2)
    - 2*beta, where A1, A2 are the half-azimuths of the lens arcs and beta
    the angle of the center-vertex triangle at a vertex.
    """
    full = 4.0 * math.pi
    a1 = min(ang1, math.pi)
    a2 = min(ang2, math.pi)
    if sep >= a1 + a2:
        return 0.0
    if sep <= abs(a1 - a2):
        small = min(a1, a2)
        return TWO_PI * radius ** 2 * (1.0 - math.cos(small))
    if a1 + a2 >= TWO_PI - sep:
        # complements are disjoint; intersection = sphere minus both complements
        area = (full - TWO_PI * (1.0 + math.cos(a1)) - TWO_PI * (1.0 + math.cos(a2)))
        return area * radius ** 2
    s1, c1 = math.sin(a1), math.cos(a1)
    s2, c2 = math.sin(a2), math.cos(a2)
    sd, cd = math.sin(sep), math.cos(sep)
    half1 = math.acos(min(1.0, max(-1.0, (c2 - c1 * cd) / (s1 * sd))))
    half2 = math.acos(min(1.0, max(-1.0, (c1 - c2 * cd) / (s2 * sd))))
    beta = math.acos(min(1.0, max(-1.0, (cd - c1 * c2) / (s1 * s2))))
    area = TWO_PI - 2.0 * half1 * c1 - 2.0 * half2 * c2 - 2.0 * beta
    return area * radius ** 2


def _disk_rect_area(cx, cy, r, a1, b1, a2, b2):
    """Exact-to-quadrature area of disk((cx, cy), r) cap [a1,b1]x[a2,b2].

    Integrates the chord length in y with Gauss-Legendre panels split at
    the kink ordinates; accuracy ~1e-12 for the smooth pieces.
    """
    lo, hi = max(a2 - cy, -r), min(b2 - cy, r)
    if lo >= hi:
        return 0.0
    p, q = a1 - cx, b1 - cx
    if p >= r or q <= -r:
        return 0.0
    kinks = {lo, hi}
    for val in (p, q):
        if abs(val) < r:
            yk = math.sqrt(r * r - val * val)
            for y in (yk, -yk):
                if lo < y < hi:
                    kinks.add(y)
    edges = sorted(kinks)
    gx, gw = np.polynomial.legendre.leggauss(24)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        y = 0.5 * (b - a) * gx + 0.5 * (a + b)
        w = np.sqrt(np.maximum(r * r - y * y, 0.0))
        chord = np.minimum(q, w) - np.maximum(p, -w)
        total += 0.5 * (b - a) * float(np.sum(gw * np.maximum(chord, 0.0)))
    return total


def relative_ball_volume(omega: DomainSpec, x, r: float) -> float:
    """v(x, r) = V(B(x, r) cap Omega)."""
    if r <= 0:
        raise DomainValidationError("radius must be positive")
    m, s = omega.manifold, omega.shape
    x = canonical_point(m, x)
    if s[0] == "arc":
        rr = m.scale[0]
        th0, th1 = s[1], s[2]
        lo, hi = x[0] - r / rr, x[0] + r / rr     # ball in angle coordinates
        total = 0.0
        for k in (-1, 0, 1):
            a = max(lo + k * TWO_PI, th0)
            b = min(hi + k * TWO_PI, th1)
            if b > a:
                total += (b - a) * rr
        return min(total, min(2.0 * r, m.total_volume), omega.volume)
    if s[0] in ("cap", "slit-cap"):
        rr = m.scale[0]
        return _cap_cap_area(rr, s[1], r / rr, x[0])
    if s[0] == "cap-complement":
        ball = ball_volume(m, x, r)
        rr = m.scale[0]
        return ball - _cap_cap_area(rr, s[1], r / rr, x[0])
    a1, b1, a2, b2 = s[1:]
    l = np.asarray(m.scale)
    total = 0.0
    rng = range(-_TORUS_IMAGE_RANGE, _TORUS_IMAGE_RANGE + 1)
    for i in rng:
        for j in rng:
            cx, cy = x[0] + i * l[0], x[1] + j * l[1]
            if a1 - r < cx < b1 + r and a2 - r < cy < b2 + r:
                total += _disk_rect_area(cx, cy, r, a1, b1, a2, b2)
    return total


def s_kappa(kappa: float, r: float, n: int) -> float:
    """Constant-curvature comparison density s_kappa(r) for dimension n."""
    if r <= 0:
        raise DomainValidationError("r must be positive")
    if kappa > 0:
        sq = math.sqrt(kappa)
        if r >= math.pi / sq:
            raise DomainValidationError("r must be below pi/sqrt(kappa) for kappa > 0")
        return (math.sin(sq * r) / sq) ** (n - 1)
    if kappa < 0:
        sq = math.sqrt(-kappa)
        return (math.sinh(sq * r) / sq) ** (n - 1)
    return r ** (n - 1)


def sphere_measure(n: int) -> float:
    """Total measure of the unit direction sphere S^{n-1} (counting for n=1)."""
    return 2.0 if n == 1 else TWO_PI


@dataclass(frozen=True)
class ConeSpec:
    """Geodesic cone at an apex.

    For n = 2 the direction set is the frame-angle arc
    [angle0, angle0 + fraction * 2*pi); for n = 1 it is one or both of the
    directions -1, +1 (fraction 1/2 or 1).
    """
    apex: tuple
    reach: float
    fraction: float
    angle0: float = 0.0

    def __post_init__(self):
        if not (0 < self.fraction <= 1):
            raise DomainValidationError("cone fraction must be in (0, 1]")
        if self.reach <= 0:
            raise DomainValidationError("cone reach must be positive")

    def directions(self, m: ManifoldModel, count: int = 64):
        """Representative unit directions in the cone."""
        if m.dim == 1:
            if self.fraction > 0.5:
                return [np.array([1.0]), np.array([-1.0])]
            return [np.array([math.cos(self.angle0) >= 0 and 1.0 or -1.0])]
        width = self.fraction * TWO_PI
        angs = self.angle0 + (np.arange(count) + 0.5) / count * width
        return [np.array([math.cos(a), math.sin(a)]) for a in angs]


def _geodesic_density(m: ManifoldModel, t):
    """Density J(x, xi, t) of dV in geodesic polar coordinates."""
    if m.kind == "circle":
        return np.ones_like(np.asarray(t, dtype=float))
    if m.kind == "sphere2":
        r = m.scale[0]
        return r * np.sin(np.asarray(t) / r)
    return np.asarray(t, dtype=float)


def cone_volume(m: ManifoldModel, cone: ConeSpec) -> float:
    """V(C(x, omega_x, r)) by Gauss quadrature of the geodesic density."""
    for v in cone.directions(m, count=8):
        if cone.reach >= cutlocus_distance(m, tangent(m, cone.apex, v)):
            raise DomainValidationError("cone reach exceeds the cut-locus distance")
    gx, gw = np.polynomial.legendre.leggauss(48)
    t = 0.5 * cone.reach * (gx + 1.0)
    radial = 0.5 * cone.reach * float(np.sum(gw * _geodesic_density(m, t)))
    if m.dim == 1:
        ndir = 2 if cone.fraction > 0.5 else 1
        return ndir * radial
    return cone.fraction * TWO_PI * radial


def manifold_quadrature(m: ManifoldModel, n_per_axis: int = 48):
    """Quadrature over the whole manifold: (points, weights), sum == V(M).

    Circle and torus use periodic trapezoid rules (spectrally accurate),
    the sphere uses Gauss-Legendre in cos(colatitude) x uniform azimuth.
    """
    if m.kind == "circle":
        r = m.scale[0]
        th = (np.arange(n_per_axis) + 0.5) * TWO_PI / n_per_axis
        return th[:, None], np.full(n_per_axis, m.total_volume / n_per_axis)
    if m.kind == "sphere2":
        r = m.scale[0]
        u, wu = np.polynomial.legendre.leggauss(n_per_axis)
        colat = np.arccos(u)
        nph = 2 * n_per_axis
        ph = (np.arange(nph) + 0.5) * TWO_PI / nph
        pts = np.stack(np.meshgrid(colat, ph, indexing="ij"), axis=-1).reshape(-1, 2)
        w = (wu[:, None] * np.full((1, nph), TWO_PI / nph) * r * r).reshape(-1)
        return pts, w
    l1, l2 = m.scale
    u1 = (np.arange(n_per_axis) + 0.5) * l1 / n_per_axis
    u2 = (np.arange(n_per_axis) + 0.5) * l2 / n_per_axis
    pts = np.stack(np.meshgrid(u1, u2, indexing="ij"), axis=-1).reshape(-1, 2)
    w = np.full(pts.shape[0], l1 * l2 / n_per_axis ** 2)
    return pts, w


# ---------------------------------------------------------------------------
# chains
# ---------------------------------------------------------------------------

@dataclass
class ChainResult:
    points: list
    max_step: float
    stretch: float          # max_step * k / d(x, y)
    ok: bool
    note: str = ""


def _perpendicular(v):
    return np.array([-v[1], v[0]])


def chain_points(m: ManifoldModel, omega: DomainSpec, x, y, k: int,
                 repair_budget: int = 40) -> ChainResult:
    """Chain x = x_0, ..., x_k = y inside Omega with small steps.

    Subdivides the minimal ambient geodesic; intermediate points falling
    outside Omega are repaired by searching along the perpendicular
    direction (both signs, growing offsets).  Reports the realized maximal
    step and the stretch constant max_step * k / d(x, y).
    """
    if k < 1:
        raise DomainValidationError("k must be >= 1")
    x = canonical_point(m, x)
    y = canonical_point(m, y)
    d = distance(m, x, y)
    if d == 0.0:
        return ChainResult([x] * (k + 1), 0.0, 1.0, True, "coincident endpoints")
    td, _ = log_direction(m, x, y)
    pts = [x]
    ok = True
    note = ""
    for i in range(1, k):
        p = geodesic(m, td, d * i / k)
        if not omega.contains(p, closure=True, tol=1e-12):
            p2 = _repair_point(m, omega, p, td, d / k, repair_budget)
            if p2 is None:
                ok = False
                note = f"no in-domain repair found for chain point {i}"
                p2 = p
            p = p2
        pts.append(p)
    pts.append(y)
    steps = [distance(m, a, b) for a, b in zip(pts[:-1], pts[1:])]
    mx = max(steps)
    return ChainResult(pts, mx, mx * k / d, ok, note)


def _repair_point(m, omega, p, td, step, budget):
    if m.dim == 1:
        return None
    v = np.asarray(td.dir, dtype=float)
    perp = _perpendicular(v)
    for j in range(1, budget + 1):
        off = step * j * 0.5
        for sign in (1.0, -1.0):
            try:
                cand = geodesic(m, tangent(m, p, sign * perp), off)
            except DomainValidationError:
                continue
            if omega.contains(cand, closure=True, tol=1e-12):
                return cand
    return None
