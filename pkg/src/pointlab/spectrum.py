"""Negative spectrum of finite point-interaction Hamiltonians in d = 1, 2, 3.

``E = -s^2`` is an eigenvalue exactly when the symmetric characteristic
matrix ``M(s)`` is singular. Each sorted eigenvalue of ``M(s)`` is a
continuous function of ``s``, so the negative spectrum is found by scanning
those functions on a geometric ``s`` grid and bisecting every sign change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .specfun import EULER_GAMMA, bessel_k0

FOUR_PI = 4.0 * math.pi
TWO_PI = 2.0 * math.pi
MIN_SEPARATION = 1e-9

_k0 = np.vectorize(bessel_k0, otypes=[float])


class SolverError(RuntimeError):
    """Root counting did not stabilise under grid refinement."""

    def __init__(self, message: str, trace: list | None = None):
        super().__init__(message)
        self.trace = trace or []


@dataclass(frozen=True)
class SpectralProblem:
    dim: int
    points: np.ndarray
    couplings: np.ndarray

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dim}")
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.dim)
        alpha = np.asarray(self.couplings, dtype=float).reshape(-1)
        if len(alpha) != len(pts):
            raise ValueError(f"{len(alpha)} couplings for {len(pts)} points")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(alpha))):
            raise ValueError("points and couplings must be finite")
        if len(pts) > 1 and pdist(pts).min() <= MIN_SEPARATION:
            raise ValueError(f"points closer than {MIN_SEPARATION} are not supported")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "couplings", alpha)

    @classmethod
    def from_config(cls, config) -> "SpectralProblem":
        if config.couplings is None:
            raise ValueError("configuration carries no couplings")
        return cls(config.dimension, config.points, config.couplings)

    @classmethod
    def two_point(cls, dim: int, alpha: float, distance: float) -> "SpectralProblem":
        pts = np.zeros((2, dim))
        pts[1, 0] = distance
        return cls(dim, pts, [alpha, alpha])

    def __len__(self) -> int:
        return len(self.couplings)

    def interacting(self) -> "SpectralProblem":
        """Drop d=1 points with zero coupling (no interaction there)."""
        if self.dim != 1 or np.all(self.couplings != 0):
            return self
        keep = self.couplings != 0
        return SpectralProblem(1, self.points[keep], self.couplings[keep])

    def distances(self) -> np.ndarray:
        return squareform(pdist(self.points)) if len(self) > 1 else np.zeros((len(self),) * 2)


@dataclass
class NegativeSpectrum:
    eigenvalues: list[float]
    roots_s: list[float]
    s_max: float
    refinements: int
    bracket_tol: float
    trace: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "eigenvalues": self.eigenvalues,
            "roots_s": self.roots_s,
            "s_max": self.s_max,
            "refinements": self.refinements,
            "bracket_tol": self.bracket_tol,
            "essential_spectrum": [0.0, math.inf],
        }


def _diagonal(dim: int, alpha: np.ndarray, s: np.ndarray) -> np.ndarray:
    s = s[:, None]
    if dim == 1:
        return -1.0 / alpha - 0.5 / s
    if dim == 2:
        return (TWO_PI * alpha + EULER_GAMMA + np.log(0.5 * s)) / TWO_PI
    return alpha + s / FOUR_PI


def _off_diagonal(dim: int, r: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Off-diagonal entries for distances ``r`` (shape (P,)) at each ``s`` -> (G, P)."""
    sr = s[:, None] * r[None, :]
    if dim == 1:
        return -np.exp(-sr) / (2.0 * s[:, None])
    if dim == 2:
        return -_k0(sr) / TWO_PI
    return -np.exp(-sr) / (FOUR_PI * r[None, :])


def build_matrices(problem: SpectralProblem, s) -> np.ndarray:
    """Characteristic matrices for every value in ``s``; shape ``(len(s), N, N)``."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(~(s > 0)):
        raise ValueError("s must be positive")
    if problem.dim == 1 and np.any(problem.couplings == 0):
        raise ValueError("d=1 characteristic matrix needs nonzero couplings")
    n = len(problem)
    out = np.zeros((len(s), n, n))
    idx = np.arange(n)
    out[:, idx, idx] = _diagonal(problem.dim, problem.couplings, s)
    if n > 1:
        iu, ju = np.triu_indices(n, 1)
        r = problem.distances()[iu, ju]
        off = _off_diagonal(problem.dim, r, s)
        out[:, iu, ju] = off
        out[:, ju, iu] = off
    return out


def build_matrix(problem: SpectralProblem, s: float) -> np.ndarray:
    return build_matrices(problem, [s])[0]


def symmetric_eigenvalues(matrix, method: str = "lapack") -> np.ndarray:
    """Ascending eigenvalues of a real symmetric matrix or a stack ``(..., N, N)``.

    ``method="lapack"`` calls ``numpy.linalg.eigvalsh``; ``method="jacobi"``
    runs the cyclic Jacobi iteration of :func:`jacobi_eigenvalues`.
    """
    a = np.array(matrix, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if a.size and np.max(np.abs(a - np.swapaxes(a, -1, -2))) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    if method == "jacobi":
        return jacobi_eigenvalues(a)
    if method != "lapack":
        raise ValueError(f"unknown method {method!r}")
    return np.linalg.eigvalsh(a)


def jacobi_eigenvalues(a: np.ndarray, max_sweeps: int = 60) -> np.ndarray:
    """Cyclic Jacobi rotations applied in lockstep to a stack of symmetric matrices."""
    a = np.array(a, dtype=float)
    lead = a.shape[:-2]
    n = a.shape[-1]
    a = a.reshape(-1, n, n)
    if n > 1:
        iu, ju = np.triu_indices(n, 1)
        norm = np.sqrt(np.sum(a * a, axis=(1, 2)))
        for _ in range(max_sweeps):
            off = np.sqrt(2.0 * np.sum(a[:, iu, ju] ** 2, axis=1))
            if np.all(off <= 1e-17 * norm):
                break
            for p, q in zip(iu, ju):
                apq = a[:, p, q]
                active = apq != 0.0
                if not active.any():
                    continue
                app = a[:, p, p]
                aqq = a[:, q, q]
                with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                    theta = np.where(active, (aqq - app) / (2.0 * apq), 0.0)
                    t = np.where(
                        active,
                        np.copysign(1.0, theta) / (np.abs(theta) + np.hypot(1.0, theta)),
                        0.0,
                    )
                c = 1.0 / np.sqrt(1.0 + t * t)
                sn = t * c
                c_, s_ = c[:, None], sn[:, None]
                colp = a[:, :, p].copy()
                colq = a[:, :, q]
                a[:, :, p] = c_ * colp - s_ * colq
                a[:, :, q] = s_ * colp + c_ * colq
                rowp = a[:, p, :].copy()
                rowq = a[:, q, :]
                a[:, p, :] = c_ * rowp - s_ * rowq
                a[:, q, :] = s_ * rowp + c_ * rowq
                a[:, p, q] = np.where(active, 0.0, a[:, p, q])
                a[:, q, p] = a[:, p, q]
    w = np.sort(np.diagonal(a, axis1=1, axis2=2), axis=1)
    return w.reshape(*lead, n)


def _dominance_ok(problem: SpectralProblem, s: float) -> bool:
    """Strict diagonal dominance with a diagonal that stays away from 0 for larger s.

    In each dimension the diagonal moves monotonically away from zero (after
    multiplying d=1 rows by 2s) while the off-diagonal row sums decay, so
    dominance at ``s`` rules out singular ``M`` on ``[s, inf)``.
    """
    m = build_matrix(problem, s)
    diag = np.diag(m)
    off = np.sum(np.abs(m), axis=1) - np.abs(diag)
    if problem.dim == 1:
        right_sign = np.sign(diag) == np.sign(-1.0 / problem.couplings)
    else:
        right_sign = diag > 0
    return bool(np.all(right_sign) and np.all(np.abs(diag) > off))


def initial_s_max(problem: SpectralProblem) -> float:
    n = len(problem)
    a = np.abs(problem.couplings)
    with np.errstate(over="ignore"):
        bind2 = 2.0 * np.exp(-TWO_PI * problem.couplings - EULER_GAMMA)
    per_point = np.maximum.reduce([np.ones_like(a), a, FOUR_PI * a, bind2])
    return 1.0 + float(np.max(n * per_point))


def choose_s_max(problem: SpectralProblem, max_doublings: int = 200) -> float:
    s_max = initial_s_max(problem)
    for _ in range(max_doublings):
        if _dominance_ok(problem, s_max):
            return s_max
        s_max *= 2.0
    raise SolverError(f"no s_max with a nonsingular tail found up to {s_max}")


def default_s_min(problem: SpectralProblem) -> float:
    diam = float(problem.distances().max()) if len(problem) > 1 else 0.0
    return 1e-6 / max(1.0, diam)


def _sign_changes(eigs: np.ndarray) -> list[tuple[int, int]]:
    """(grid cell, branch) pairs across which a sorted eigenvalue changes sign."""
    pos = eigs > 0
    cells, branches = np.nonzero(pos[1:] != pos[:-1])
    return list(zip(cells.tolist(), branches.tolist()))


def _bisect_branch(problem, branch: int, a: float, b: float, fa: float, tol: float) -> float:
    pos_a = fa > 0
    while b - a > tol:
        mid = 0.5 * (a + b)
        if not a < mid < b:
            break
        fm = symmetric_eigenvalues(build_matrix(problem, mid))[branch]
        if (fm > 0) == pos_a:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def negative_spectrum(
    problem: SpectralProblem,
    tol: float = 1e-12,
    grid_per_decade: int = 64,
    s_min: float | None = None,
    max_refinements: int = 6,
) -> NegativeSpectrum:
    """All negative eigenvalues ``E = -s^2`` with ``s`` in ``[s_min, s_max]``.

    The grid is doubled until the number of sign changes is the same on
    three consecutive grids; the roots of the finest grid are then bisected
    to ``|ds| <= tol`` (or to floating-point resolution).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    prob = problem.interacting()
    if len(prob) == 0:
        return NegativeSpectrum([], [], 0.0, 0, tol)
    s_max = choose_s_max(prob)
    s_lo = default_s_min(prob) if s_min is None else float(s_min)
    decades = math.log10(s_max / s_lo)

    trace = []
    counts = []
    per_decade = grid_per_decade
    changes: list[tuple[int, int]] = []
    grid = eigs = None
    for refinement in range(max_refinements + 1):
        npts = max(2, int(math.ceil(decades * per_decade)) + 1)
        grid = np.geomspace(s_lo, s_max, npts)
        eigs = symmetric_eigenvalues(build_matrices(prob, grid))
        changes = _sign_changes(eigs)
        counts.append(len(changes))
        trace.append({"grid_per_decade": per_decade, "points": npts, "roots": len(changes)})
        if len(counts) >= 3 and counts[-1] == counts[-2] == counts[-3]:
            break
        per_decade *= 2
    else:
        raise SolverError(
            f"root count did not stabilise after {max_refinements} refinements: {counts}",
            trace,
        )

    roots = sorted(
        (
            _bisect_branch(prob, j, grid[i], grid[i + 1], eigs[i, j], tol)
            for i, j in changes
        ),
        reverse=True,
    )
    return NegativeSpectrum(
        [-(r * r) for r in roots], roots, s_max, refinement, tol, trace
    )


def two_point_threshold(dim: int, alpha: float) -> float:
    """Separation above which the two-point problem gains its second eigenvalue.

    For d=3 with ``alpha >= 0`` the returned value is instead the separation
    at and beyond which no negative eigenvalue remains (``inf`` for 0).
    """
    if dim == 1:
        if alpha >= 0:
            raise ValueError("d=1 two-point threshold requires alpha < 0")
        return -2.0 / alpha
    if dim == 2:
        return math.exp(TWO_PI * alpha)
    if dim == 3:
        if alpha < 0:
            return 1.0 / (-FOUR_PI * alpha)
        return math.inf if alpha == 0 else 1.0 / (FOUR_PI * alpha)
    raise ValueError(f"dimension must be 1, 2 or 3, got {dim}")


@dataclass
class EigenvalueBranch:
    index: int
    L: np.ndarray
    E: np.ndarray
    monotonicity: str

    def rows(self):
        for l, e in zip(self.L, self.E):
            if np.isfinite(e):
                yield (float(l), self.index, float(e))


def _monotonicity(values: np.ndarray, rtol: float = 1e-11) -> str:
    """Verdict up to the root-bracketing noise ``rtol * (1 + |E|)``."""
    v = values[np.isfinite(values)]
    if len(v) < 2:
        return "undetermined"
    d = np.diff(v)
    slack = rtol * (1.0 + np.abs(v[1:]))
    if np.all(d >= -slack):
        return "increasing"
    if np.all(d <= slack):
        return "decreasing"
    return "non-monotone"


def branch_curve(
    dim: int,
    alpha: float,
    L_grid,
    base_points=None,
    tol: float = 1e-12,
    grid_per_decade: int = 64,
) -> tuple[list[EigenvalueBranch], dict[float, str]]:
    """Eigenvalue branches of ``Gamma = {L x_j}`` along ``L_grid``.

    ``base_points`` defaults to two points at unit distance. Branch ``j``
    holds the ``j``-th lowest eigenvalue at each ``L`` (NaN where absent).
    Solver failures are returned as ``{L: message}`` and leave gaps.
    """
    L_grid = np.asarray(L_grid, dtype=float)
    if np.any(L_grid <= 0) or np.any(np.diff(L_grid) <= 0):
        raise ValueError("L_grid must be positive and strictly increasing")
    if base_points is None:
        base_points = np.zeros((2, dim))
        base_points[1, 0] = 1.0
    base = np.asarray(base_points, dtype=float).reshape(-1, dim)
    alphas = np.full(len(base), float(alpha))
    per_L: list[list[float]] = []
    failures: dict[float, str] = {}
    for L in L_grid:
        try:
            spec = negative_spectrum(
                SpectralProblem(dim, base * L, alphas), tol=tol, grid_per_decade=grid_per_decade
            )
            per_L.append(spec.eigenvalues)
        except SolverError as exc:
            failures[float(L)] = str(exc)
            per_L.append(None)
    nbranch = max((len(e) for e in per_L if e is not None), default=0)
    table = np.full((len(L_grid), nbranch), np.nan)
    for i, e in enumerate(per_L):
        if e:
            table[i, : len(e)] = e
    branches = [
        EigenvalueBranch(j + 1, L_grid.copy(), table[:, j], _monotonicity(table[:, j]))
        for j in range(nbranch)
    ]
    return branches, failures


class PerronError(RuntimeError):
    pass


@dataclass(frozen=True)
class PerronResult:
    mu1: float
    eigvec: np.ndarray
    gap: float
    iterations: int


def distance_kernel(points, s: float, L: float = 1.0) -> np.ndarray:
    """Positive kernel ``exp(-s L |x_j - x_k|)``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return np.exp(-s * L * squareform(pdist(pts)))


def perron_largest(kernel, tol: float = 1e-14, max_iter: int = 200_000) -> PerronResult:
    """Largest eigenvalue and positive unit-sum eigenvector of a positive symmetric matrix.

    The LAPACK eigenpair seeds a power iteration that only has to polish it,
    so a tiny spectral gap does not stall convergence. When the top
    eigenvalues coincide to rounding the LAPACK vector may be localised with
    zero entries; the uniform vector is then an equally valid start.
    """
    k = np.asarray(kernel, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError("kernel must be square")
    if not np.all(k > 0):
        raise ValueError("kernel entries must be strictly positive")
    n = k.shape[0]
    if not np.allclose(k, k.T, rtol=0.0, atol=1e-12 * np.max(k)):
        raise ValueError("kernel must be symmetric")
    k = 0.5 * (k + k.T)
    eigs, vecs = np.linalg.eigh(k)
    v = np.abs(vecs[:, -1])
    if not np.all(v > 0):
        if n > 1 and eigs[-1] - eigs[-2] > 1e-12 * eigs[-1]:
            raise PerronError("Perron vector has components below double precision")
        v = np.ones(n)
    v /= v.sum()
    mu = float(eigs[-1])
    for it in range(max_iter + 1):
        resid = np.linalg.norm(k @ v - mu * v) / np.linalg.norm(v)
        if resid <= tol * mu:
            break
        if it == max_iter:
            raise PerronError(f"power iteration did not converge in {max_iter} steps")
        w = k @ v
        v = w / w.sum()
        mu = float(v @ k @ v / (v @ v))
    if not np.all(v > 0):
        raise PerronError("Perron vector is not strictly positive")
    gap = float(mu - eigs[-2]) if n > 1 else math.inf
    return PerronResult(mu, v, gap, it)
