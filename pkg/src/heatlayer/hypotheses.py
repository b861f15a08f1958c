"""Grid certification of the geometric hypotheses a domain must satisfy
for two-sided Gaussian kernel bounds: relative-ball volume lower bound
(VLB), volume doubling (DP), the chain condition (CC), strong convexity,
the interior cone condition, and ambient volume growth.

Verdicts are numerical certificates over deterministic sample sets, not
proofs: each constant is reported together with a refinement-stability
flag (value moved < 10% when the sample count doubles).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import ConfigurationError, DomainValidationError
from .geometry import (ConeSpec, DomainSpec, ManifoldModel, ball_volume,
                       chain_points, cone_volume, cutlocus_distance, distance,
                       geodesic, relative_ball_volume, s_kappa, sphere_measure,
                       tangent)
from .layer import BoundaryQuadrature

__all__ = [
    "HypothesisVerdict", "sample_domain", "check_vlb", "check_dp",
    "check_cc", "check_strong_convexity", "check_interior_cone", "check_vgc",
    "verdicts_to_json", "ratios_to_csv",
]

STABILITY_TOL = 0.10


@dataclass
class HypothesisVerdict:
    """Outcome of one hypothesis check on one domain."""
    name: str
    passed: bool
    constants: dict = field(default_factory=dict)
    sample_description: str = ""
    witness: dict = field(default_factory=dict)
    stable: bool | None = None
    ratios: list = field(default_factory=list)   # per-sample (args..., ratio)

    def to_json(self) -> dict:
        return {
            "name": self.name, "pass": bool(self.passed),
            "constants": {k: (float(v) if np.isscalar(v) else v)
                          for k, v in self.constants.items()},
            "samples": self.sample_description,
            "witness": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                        for k, v in self.witness.items()},
            "stable": self.stable,
        }


# ---------------------------------------------------------------------------
# deterministic boundary-stratified sampling
# ---------------------------------------------------------------------------

def sample_domain(omega: DomainSpec, count: int, seed: int = 0,
                  near_fraction: float = 1.0 / 3.0,
                  near_distance: float | None = None) -> np.ndarray:
    """Deterministic samples of the closed domain, boundary-stratified:
    near_fraction of the points lie within near_distance of the boundary
    (the hypotheses bind there), the rest are spread over the bulk."""
    m = omega.manifold
    rng = np.random.default_rng(seed)
    if near_distance is None:
        near_distance = 0.1 * (omega.volume if m.dim == 1
                               else math.sqrt(omega.volume))
    n_near = int(round(count * near_fraction))
    n_bulk = count - n_near
    pts = []

    # bulk: rejection sampling from the parametric bounding box
    lo, hi = _parametric_box(omega)
    guard = 0
    while len(pts) < n_bulk:
        x = lo + (hi - lo) * rng.random(len(lo))
        if omega.contains(x, closure=True):
            pts.append(geo.canonical_point(m, x))
        guard += 1
        if guard > 200 * count:
            raise ConfigurationError("rejection sampling stalled; "
                                     "check the domain volume")
    # near-boundary stratum: step inward from boundary points
    bq = BoundaryQuadrature.build(omega, 64)
    guard = 0
    while len(pts) < count:
        z = bq.nodes[rng.integers(len(bq.nodes))]
        nu = omega.outward_normal(z)
        h = near_distance * (0.05 + 0.95 * rng.random())
        p = geodesic(m, tangent(m, z, -np.asarray(nu.dir, float)), h)
        if omega.contains(p, closure=True):
            pts.append(geo.canonical_point(m, p))
        guard += 1
        if guard > 200 * count:
            raise ConfigurationError("near-boundary sampling stalled")
    return np.array(pts)


def _parametric_box(omega: DomainSpec):
    kind = omega.shape[0]
    if kind == "arc":
        _, a, b = omega.shape
        r = omega.manifold.scale[0]
        return np.array([a * r]), np.array([b * r])
    if kind in ("cap", "slit-cap"):
        thc = omega.shape[1]
        return np.array([0.0, 0.0]), np.array([thc, geo.TWO_PI])
    if kind == "cap-complement":
        thc = omega.shape[1]
        return np.array([thc, 0.0]), np.array([math.pi, geo.TWO_PI])
    _, a1, b1, a2, b2 = omega.shape
    return np.array([a1, a2]), np.array([b1, b2])


def _stability(value: float, refined: float) -> bool:
    scale = max(abs(value), abs(refined), 1e-300)
    return abs(value - refined) / scale < STABILITY_TOL


# ---------------------------------------------------------------------------
# hypothesis checks
# ---------------------------------------------------------------------------

def check_vlb(omega: DomainSpec, radii, samples=None, count: int = 48,
              seed: int = 0) -> HypothesisVerdict:
    """Relative-ball volume lower bound: C = min v(x, r) / r^n over the
    sample set; pass iff C > 0 and refinement-stable."""
    n = omega.manifold.dim
    radii = np.atleast_1d(np.asarray(radii, dtype=float))

    def constant(pts):
        best, wit = math.inf, {}
        trace = []
        for x in pts:
            for r in radii:
                ratio = relative_ball_volume(omega, x, r) / r ** n
                trace.append((list(x), float(r), ratio))
                if ratio < best:
                    best, wit = ratio, {"point": np.asarray(x), "radius": r}
        return best, wit, trace

    if samples is None:
        pts = sample_domain(omega, count, seed)
        pts2 = sample_domain(omega, 2 * count, seed + 1)
        desc = f"{count} stratified samples (seed {seed})"
    else:
        pts = np.atleast_2d(np.asarray(samples, dtype=float))
        pts2 = pts[::2]
        desc = f"{len(pts)} caller samples"
    c, wit, trace = constant(pts)
    c2, _, _ = constant(pts2)
    return HypothesisVerdict(
        "volume-lower-bound", c > 0 and math.isfinite(c),
        {"C": c, "r0": float(radii.max())}, desc, wit,
        _stability(c, c2), trace)


def check_dp(omega: DomainSpec, radius_pairs, samples=None, count: int = 48,
             seed: int = 0) -> HypothesisVerdict:
    """Doubling: C = max v(x, s) r^n / (s^n v(x, r)) over samples and
    radius pairs r <= s."""
    n = omega.manifold.dim
    pairs = [(float(r), float(s)) for r, s in radius_pairs]
    for r, s in pairs:
        if not (0 < r <= s):
            raise ConfigurationError("radius pairs must satisfy 0 < r <= s")

    def constant(pts):
        best, wit = 1.0, {}          # s = r forces C >= 1
        trace = []
        for x in pts:
            for r, s in pairs:
                vs = relative_ball_volume(omega, x, s)
                vr = relative_ball_volume(omega, x, r)
                ratio = vs * r ** n / (s ** n * vr)
                trace.append((list(x), r, s, ratio))
                if ratio > best:
                    best, wit = ratio, {"point": np.asarray(x),
                                        "radii": (r, s)}
        return best, wit, trace

    if samples is None:
        pts = sample_domain(omega, count, seed)
        pts2 = sample_domain(omega, 2 * count, seed + 1)
        desc = f"{count} stratified samples (seed {seed})"
    else:
        pts = np.atleast_2d(np.asarray(samples, dtype=float))
        pts2 = pts[::2]
        desc = f"{len(pts)} caller samples"
    c, wit, trace = constant(pts)
    c2, _, _ = constant(pts2)
    return HypothesisVerdict(
        "doubling-property", math.isfinite(c),
        {"C": c, "r1": float(max(s for _, s in pairs))}, desc, wit,
        _stability(c, c2), trace)


def check_cc(omega: DomainSpec, point_pairs, k_values=(1, 2, 4, 8, 16),
             growth_factor: float = 1.25) -> HypothesisVerdict:
    """Chain condition: builds k-chains inside the domain for each pair
    and reports C = max over pairs and k of (max step) * k / d(x, y).
    Fails when some chain cannot be completed or when C keeps growing
    with k (unbounded-constant witness)."""
    m = omega.manifold
    per_k = {}
    wit = {}
    ok_all = True
    trace = []
    for k in k_values:
        worst = 0.0
        for x, y in point_pairs:
            res = chain_points(m, omega, x, y, int(k))
            trace.append((list(np.atleast_1d(x)), list(np.atleast_1d(y)),
                          int(k), res.stretch))
            if not res.ok:
                ok_all = False
                wit = {"pair": (np.asarray(x), np.asarray(y)), "k": int(k),
                       "note": res.note}
            if res.stretch > worst:
                worst = res.stretch
                if res.stretch >= per_k.get(max(k_values), 0.0):
                    pass
        per_k[int(k)] = worst
    ks = sorted(per_k)
    growing = len(ks) >= 3 and per_k[ks[-1]] > growth_factor * per_k[ks[-3]]
    if growing and not wit:
        wit = {"constants_by_k": dict(per_k),
               "note": "stretch constant grows with k"}
    passed = ok_all and not growing
    return HypothesisVerdict(
        "chain-condition", passed,
        {"C": max(per_k.values()), **{f"C_k{k}": v for k, v in per_k.items()}},
        f"{len(point_pairs)} pairs, k in {list(k_values)}", wit,
        None, trace)


def check_strong_convexity(omega: DomainSpec, point_pairs=None,
                           midpoints: int = 9) -> HypothesisVerdict:
    """Strong convexity of the closed domain: decided by the model-domain
    criterion (arc: always; cap: iff it sits inside a closed hemisphere;
    rectangle: iff both sides are shorter than half the period) and
    confirmed by sampling points along minimal geodesics of sampled pairs."""
    m = omega.manifold
    kind = omega.shape[0]
    if kind == "arc":
        analytic = True
    elif kind == "cap":
        analytic = omega.shape[1] <= math.pi / 2 + 1e-12
    elif kind == "rect":
        _, a1, b1, a2, b2 = omega.shape
        l1, l2 = m.scale
        analytic = (b1 - a1) < l1 / 2 and (b2 - a2) < l2 / 2
    else:
        analytic = False             # slit or complement: not convex
    if point_pairs is None:
        pts = sample_domain(omega, 24, seed=3)
        point_pairs = list(zip(pts[: len(pts) // 2], pts[len(pts) // 2:]))
    sampled_ok = True
    wit = {}
    for x, y in point_pairs:
        d = distance(m, x, y)
        if d == 0:
            continue
        td, _ = geo.log_direction(m, x, y)
        for j in range(1, midpoints + 1):
            p = geodesic(m, td, d * j / (midpoints + 1))
            if not omega.contains(p, closure=True, tol=1e-9):
                sampled_ok = False
                wit = {"pair": (np.asarray(x), np.asarray(y)),
                       "exit_point": p}
                break
        if not sampled_ok:
            break
    passed = analytic and sampled_ok
    if analytic and not sampled_ok:
        # sampling contradicts the analytic criterion: surface it
        wit["note"] = "geodesic sampling exited an analytically convex domain"
    return HypothesisVerdict(
        "strong-convexity", passed,
        {"analytic": analytic, "sampled": sampled_ok},
        f"{len(point_pairs)} pairs x {midpoints} geodesic points", wit)


def check_interior_cone(omega: DomainSpec, delta: float, r: float,
                        samples=None, count: int = 32, seed: int = 0,
                        directions: int = 128,
                        ray_samples: int = 24) -> HypothesisVerdict:
    """Interior cone condition: every sampled x must admit a direction set
    of angular fraction >= delta whose geodesic rays of length r stay in
    the domain (and below the cut distance).  Candidate sets are
    contiguous runs of an evenly discretized direction circle.  Also
    reports c0 = min cone volume / r^n."""
    m = omega.manifold
    n = m.dim
    if not (0 < delta <= 1):
        raise ConfigurationError("delta must lie in (0, 1]")
    if r <= 0:
        raise ConfigurationError("r must be positive")
    if n >= 2 and directions < 16:
        raise ConfigurationError("need at least 16 search directions")
    if samples is None:
        pts = sample_domain(omega, count, seed, near_distance=min(
            r, 0.1 * math.sqrt(omega.volume) if n == 2 else r))
        desc = f"{count} stratified samples (seed {seed})"
    else:
        pts = np.atleast_2d(np.asarray(samples, dtype=float))
        desc = f"{len(pts)} caller samples"

    def ray_ok(x, direction):
        td = tangent(m, x, direction)
        if cutlocus_distance(m, td) <= r:
            return False
        for j in range(1, ray_samples + 1):
            if not omega.contains(geodesic(m, td, r * j / ray_samples),
                                  closure=True, tol=1e-12):
                return False
        return True

    worst_fraction = math.inf
    wit = {}
    c0 = math.inf
    trace = []
    for x in pts:
        if n == 1:
            flags = [ray_ok(x, np.array([1.0])), ray_ok(x, np.array([-1.0]))]
            frac = 0.5 * sum(flags)
            ang0 = 0.0 if flags[0] else math.pi
        else:
            angs = (np.arange(directions) + 0.5) / directions * geo.TWO_PI
            flags = [ray_ok(x, np.array([math.cos(a), math.sin(a)]))
                     for a in angs]
            # longest contiguous run on the direction circle
            ext = flags + flags
            best, cur, start, bstart = 0, 0, 0, 0
            for i, f in enumerate(ext):
                if f:
                    if cur == 0:
                        start = i
                    cur += 1
                    if cur > best:
                        best, bstart = cur, start
                else:
                    cur = 0
            best = min(best, directions)
            frac = best / directions
            ang0 = angs[bstart % directions] - 0.5 * geo.TWO_PI / directions
        trace.append((list(x), frac))
        if frac < worst_fraction:
            worst_fraction = frac
            wit = {"point": np.asarray(x), "fraction": frac, "radius": r}
        if frac > 0:
            cone = ConeSpec(tuple(x), r, max(frac, 1e-9), ang0)
            c0 = min(c0, cone_volume(m, cone) / r ** n)
    passed = worst_fraction >= delta - 1e-12 and math.isfinite(c0)
    return HypothesisVerdict(
        "interior-cone", passed,
        {"delta": delta, "r": r, "min_fraction": worst_fraction, "c0": c0},
        desc, wit, None, trace)


def check_vgc(m: ManifoldModel, radii, samples=None, count: int = 32,
              seed: int = 0) -> HypothesisVerdict:
    """Ambient volume growth: c1 = max V(x, r) / r^n over samples."""
    n = m.dim
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    if samples is None:
        rng = np.random.default_rng(seed)
        lo, hi = (np.zeros(n), np.array(
            [geo.TWO_PI * m.scale[0]] if m.kind == "circle"
            else [math.pi, geo.TWO_PI] if m.kind == "sphere2" else m.scale))
        pts = lo + (hi - lo) * rng.random((count, n))
        desc = f"{count} uniform samples (seed {seed})"
    else:
        pts = np.atleast_2d(np.asarray(samples, dtype=float))
        desc = f"{len(pts)} caller samples"
    best, wit = 0.0, {}
    trace = []
    for x in pts:
        for r in radii:
            ratio = ball_volume(m, x, r) / r ** n
            trace.append((list(x), float(r), ratio))
            if ratio > best:
                best, wit = ratio, {"point": np.asarray(x), "radius": float(r)}
    return HypothesisVerdict(
        "volume-growth", math.isfinite(best) and best > 0,
        {"c1": best, "r0": float(radii.max())}, desc, wit, None, trace)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def _sanitize(obj):
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def verdicts_to_json(verdicts, path=None) -> str:
    blob = json.dumps([v.to_json() for v in verdicts], indent=2,
                      default=_sanitize)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(blob)
    return blob


def ratios_to_csv(verdict: HypothesisVerdict, path) -> None:
    """Per-sample ratio trace for plotting."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["check", "args", "ratio"])
        for row in verdict.ratios:
            wr.writerow([verdict.name, json.dumps(row[:-1]), row[-1]])
