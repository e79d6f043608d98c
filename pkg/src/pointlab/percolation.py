"""Monte Carlo continuum percolation for the Poisson Boolean model.

The crossing event for one trial: a Poisson sample on the box
``[-box/2, box/2]^d`` is augmented with a point at the origin, and the
cluster of the origin (edges ``|x - y| < 2R``) reaches within ``2R`` of the
box boundary. This finite-box event stands in for "the origin cluster is
unbounded".

Trials are coupled across intensities: each trial draws one Poisson stream
at ``coupling_intensity`` with i.i.d. uniform marks, and thinning by
``mark < lambda / coupling_intensity`` produces the process at ``lambda``.
With a common seed the crossing indicator is then monotone in ``lambda``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .config import neighbor_pairs

LEVEL = 0.5
CSV_COLUMNS = ("d", "R", "lambda", "box_size", "trials", "crossing_prob", "std_err", "seed")


class BracketingError(RuntimeError):
    """No intensity bracket around the target crossing level was found."""


@dataclass(frozen=True)
class PercolationEstimate:
    dim: int
    intensity: float
    radius: float
    box_size: float
    trials: int
    crossing_prob: float
    std_err: float
    seed: int

    def csv_row(self) -> tuple:
        return (
            self.dim, self.radius, self.intensity, self.box_size,
            self.trials, self.crossing_prob, self.std_err, self.seed,
        )


@dataclass(frozen=True)
class CriticalDensityEstimate:
    dim: int
    radius: float
    lambda_c_hat: float
    bracket: tuple[float, float]
    bracket_probs: tuple[float, float]
    box_size: float
    trials_per_probe: int
    probes: tuple[PercolationEstimate, ...]

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["probes"] = [asdict(p) for p in self.probes]
        return doc


def _trial_crosses(
    child: np.random.SeedSequence,
    dim: int,
    intensity: float,
    coupling_intensity: float,
    radius: float,
    box_size: float,
    anchor: str,
) -> bool:
    rng = np.random.default_rng(child)
    half = 0.5 * box_size
    keep_frac = intensity / coupling_intensity
    while True:
        n = rng.poisson(coupling_intensity * box_size**dim)
        pts = rng.uniform(-half, half, size=(n, dim))
        marks = rng.uniform(size=n)
        pts = pts[marks < keep_frac]
        if anchor == "origin":
            pts = np.vstack([np.zeros((1, dim)), pts])
            start = 0
            break
        # anchor == "nearest": condition on a point in the central cell [-R, R]^d
        central = np.all(np.abs(pts) <= radius, axis=1)
        if central.any():
            idx = np.flatnonzero(central)
            start = int(idx[np.argmin(np.linalg.norm(pts[idx], axis=1))])
            break
    edge = half - 2.0 * radius
    if np.max(np.abs(pts[start])) > edge:
        return True
    pairs = neighbor_pairs(pts, radius)
    if len(pairs) == 0:
        return False
    m = len(pts)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(m, m))
    _, labels = connected_components(graph, directed=False)
    members = labels == labels[start]
    return bool(np.any(np.max(np.abs(pts[members]), axis=1) > edge))


def _count_crossings(children, *args) -> int:
    return sum(_trial_crosses(c, *args) for c in children)


def crossing_probability(
    intensity: float,
    radius: float,
    box_size: float,
    trials: int,
    seed: int,
    dim: int = 2,
    coupling_intensity: float | None = None,
    anchor: str = "origin",
    workers: int = 1,
) -> PercolationEstimate:
    """Estimate the probability that the origin cluster reaches the box boundary.

    ``coupling_intensity`` (default: ``intensity``) is the intensity of the
    shared stream that is thinned; calls with the same seed and the same
    coupling intensity are monotone in ``intensity`` trial by trial.
    ``anchor="nearest"`` replaces the added origin point by the sample point
    closest to the origin, conditioning on a nonempty central cell.
    """
    if dim not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {dim}")
    if not (intensity > 0 and radius > 0 and box_size > 0):
        raise ValueError("intensity, radius and box_size must be positive")
    if box_size <= 4.0 * radius:
        raise ValueError(f"box_size must exceed 4R = {4 * radius}, got {box_size}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if anchor not in ("origin", "nearest"):
        raise ValueError(f"unknown anchor {anchor!r}")
    lam_max = intensity if coupling_intensity is None else float(coupling_intensity)
    if lam_max < intensity:
        raise ValueError("coupling_intensity must be >= intensity")

    children = np.random.SeedSequence(seed).spawn(trials)
    args = (dim, float(intensity), lam_max, float(radius), float(box_size), anchor)
    if workers > 1 and trials > 1:
        chunks = [children[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            hits = sum(pool.map(_count_crossings, chunks, *[[a] * workers for a in args]))
    else:
        hits = _count_crossings(children, *args)
    p = hits / trials
    return PercolationEstimate(
        dim, float(intensity), float(radius), float(box_size), int(trials),
        p, math.sqrt(p * (1.0 - p) / trials), int(seed),
    )


def estimate_critical_density(
    radius: float,
    box_size: float,
    trials: int,
    tol: float,
    seed: int,
    dim: int = 2,
    workers: int = 1,
) -> CriticalDensityEstimate:
    """Bisect the intensity at which the crossing probability equals 1/2.

    The bracket search probes ``R^-d * 2^k`` for ``k`` in ``[-10, 10]``.
    Bisection then runs on the coupled stream at the upper bracket end until
    the bracket is at most ``tol`` wide; the estimate is the linear
    interpolation of the two bracketing probabilities at level 1/2.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if box_size < 20.0 * radius:
        raise ValueError(f"box_size must be at least 20R = {20 * radius}, got {box_size}")
    if dim == 1:
        # A gap of length >= 2R occurs a.s. somewhere on each half-line, so the
        # infinite-volume crossing probability vanishes for every intensity; a
        # finite box only sees this once it is ~exp(2 lambda R) long.
        raise BracketingError(
            "d=1: the origin cluster is bounded almost surely for every intensity "
            "(critical density is infinite); no bracket exists"
        )

    unit = radius ** (-dim)
    probes: list[PercolationEstimate] = []

    def probe(lam, lam_max=None):
        est = crossing_probability(
            lam, radius, box_size, trials, seed, dim,
            coupling_intensity=lam_max, workers=workers,
        )
        probes.append(est)
        return est.crossing_prob

    lo = hi = None
    p_lo = p_hi = None
    k = 0
    p = probe(unit)
    if p >= LEVEL:
        hi, p_hi = unit, p
        while lo is None:
            k -= 1
            if k < -10:
                raise BracketingError("crossing probability >= 1/2 down to 2^-10 R^-d")
            lam = unit * 2.0**k
            p = probe(lam)
            if p >= LEVEL:
                hi, p_hi = lam, p
            else:
                lo, p_lo = lam, p
    else:
        lo, p_lo = unit, p
        while hi is None:
            k += 1
            if k > 10:
                raise BracketingError("crossing probability < 1/2 up to 2^10 R^-d")
            lam = unit * 2.0**k
            p = probe(lam)
            if p >= LEVEL:
                hi, p_hi = lam, p
            else:
                lo, p_lo = lam, p

    # Re-probe both ends on the coupled stream; the uncoupled search used
    # different realisations, so the ends may need to be pushed outward.
    for _ in range(10):
        lam_max = hi
        p_hi = probe(hi, lam_max)
        if p_hi >= LEVEL:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise BracketingError(f"coupled crossing probability stays below 1/2 up to {hi}")
    for _ in range(10):
        p_lo = probe(lo, lam_max)
        if p_lo < LEVEL:
            break
        hi, p_hi, lo = lo, p_lo, 0.5 * lo
    else:
        raise BracketingError(f"coupled crossing probability stays >= 1/2 down to {lo}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        p = probe(mid, lam_max)
        if p >= LEVEL:
            hi, p_hi = mid, p
        else:
            lo, p_lo = mid, p

    w = (LEVEL - p_lo) / (p_hi - p_lo)
    lam_hat = lo + w * (hi - lo)
    # keep the estimate strictly inside the bracket
    lam_hat = min(max(lam_hat, lo + 1e-12 * (hi - lo)), hi - 1e-12 * (hi - lo))
    if not lo < lam_hat < hi:
        lam_hat = 0.5 * (lo + hi)
    return CriticalDensityEstimate(
        dim, float(radius), float(lam_hat), (lo, hi), (p_lo, p_hi),
        float(box_size), int(trials), tuple(probes),
    )


@dataclass(frozen=True)
class ScalingReport:
    dim: int
    radii: tuple[float, ...]
    lambda_c_hat: tuple[float, ...]
    scaled: tuple[float, ...]
    max_deviation: float
    max_pairwise_rel_diff: float
    estimates: tuple[CriticalDensityEstimate, ...]

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "rows": [
                {"R": r, "lambda_c_hat": lam, "lambda_c_hat_times_R_d": s}
                for r, lam, s in zip(self.radii, self.lambda_c_hat, self.scaled)
            ],
            "max_deviation": self.max_deviation,
            "max_pairwise_rel_diff": self.max_pairwise_rel_diff,
        }


def verify_scaling(
    radii,
    box_size: float,
    trials: int,
    rel_tol: float,
    seed: int,
    dim: int = 2,
    workers: int = 1,
) -> ScalingReport:
    """Estimate ``lambda_c(R) * R^d`` for each radius and report their spread.

    ``rel_tol`` is the bisection width in units of ``R^-d``.
    """
    radii = tuple(float(r) for r in radii)
    if not radii:
        raise ValueError("radii must be nonempty")
    ests = tuple(
        estimate_critical_density(r, box_size, trials, rel_tol * r ** (-dim), seed, dim, workers)
        for r in radii
    )
    lam = tuple(e.lambda_c_hat for e in ests)
    scaled = tuple(l * r**dim for l, r in zip(lam, radii))
    mean = sum(scaled) / len(scaled)
    dev = max(abs(s - mean) for s in scaled)
    pair = max(
        (abs(a - b) / min(a, b) for i, a in enumerate(scaled) for b in scaled[i + 1:]),
        default=0.0,
    )
    return ScalingReport(dim, radii, lam, scaled, dev, pair, ests)
