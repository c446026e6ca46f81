"""Grid-search oracle for the constrained maximisations behind the QBER thresholds.

Each threshold is ``1 - H0/64`` where ``H0`` maximises a product of
``(2 + t_{i,1} + t_{i,2})`` factors over singular values that do not pass a
first security check.  The oracle evaluates the objective on a full grid,
then refines around the best feasible points with shrinking local searches.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .exceptions import InfeasibleProblem, VerificationFailure
from .security import TWO_23, Threshold, ThresholdKind, threshold

Objective = Callable[[np.ndarray], np.ndarray]

FINE_STEP = 0.002
COARSE_STEP = 0.1
LOW_DIM = 2


@dataclass(frozen=True, eq=False)
class OptProblem:
    """Maximise ``objective`` over points of [0, 1]^d where ``feasible`` holds.

    Both callables take an ``(N, d)`` array and return length-``N`` arrays.
    ``starts`` is the number of best grid points refined.
    """

    dimension: int
    objective: Objective
    feasible: Callable[[np.ndarray], np.ndarray]
    step: float
    refinement_iterations: int = 40
    name: str = ""
    starts: int = 1

    def __post_init__(self) -> None:
        if self.dimension not in range(1, 7):
            raise ValueError("dimension must lie in 1..6")
        if not 0.0 < self.step <= COARSE_STEP:
            raise ValueError(f"grid step must lie in (0, {COARSE_STEP}]")


@dataclass(frozen=True)
class OracleResult:
    point: np.ndarray
    value: float
    grid_point: np.ndarray
    grid_value: float
    evaluations: int


def _axis(step: float) -> np.ndarray:
    n = int(round(1.0 / step))
    return np.linspace(0.0, 1.0, n + 1)


def _values(points: np.ndarray, problem: OptProblem) -> np.ndarray:
    ok = problem.feasible(points)
    if not np.any(ok):
        return np.full(len(points), -np.inf)
    return np.where(ok, problem.objective(points), -np.inf)


def _best_in(points: np.ndarray, problem: OptProblem) -> tuple[int, float]:
    vals = _values(points, problem)
    k = int(np.argmax(vals))  # first maximum, i.e. lexicographically smallest
    return k, float(vals[k])


def _grid_search(problem: OptProblem, keep: int) -> tuple[list[tuple[float, np.ndarray]], int]:
    """The ``keep`` best feasible grid points, best first, ties in lexicographic order."""
    axis = _axis(problem.step)
    d = problem.dimension
    lead = min(2, d - 1)
    tail = np.stack(np.meshgrid(*([axis] * (d - lead)), indexing="ij"), axis=-1).reshape(-1, d - lead)
    best: list[tuple[float, int, np.ndarray]] = []
    count = 0
    for head in itertools.product(axis, repeat=lead):
        pts = np.hstack([np.tile(head, (len(tail), 1)), tail]) if lead else tail
        vals = _values(pts, problem)
        top = np.argsort(-vals, kind="stable")[:keep]
        best.extend((-float(vals[k]), count + int(k), pts[k].copy()) for k in top if np.isfinite(vals[k]))
        best = sorted(best, key=lambda item: (item[0], item[1]))[:keep]
        count += len(pts)
    if not best:
        raise InfeasibleProblem(f"no feasible grid point for {problem.name or 'problem'}")
    return [(-v, p) for v, _, p in best], count


_RAY_LENGTHS = 2.0 ** -np.arange(13)
_RAYS: dict[int, np.ndarray] = {}


def _rays(d: int) -> np.ndarray:
    """Probe offsets: every direction of the {-2..2}^d pattern at lengths 2, 1, 1/2, ..."""
    if d not in _RAYS:
        dirs = np.array([o for o in itertools.product(range(-2, 3), repeat=d) if any(o)], dtype=float)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        _RAYS[d] = (2.0 * _RAY_LENGTHS[:, None, None] * dirs[None]).reshape(-1, d)
    return _RAYS[d]


def _refine_rays(problem: OptProblem, point: np.ndarray, value: float) -> tuple[np.ndarray, float, int]:
    """Pattern search with rays of geometrically shrinking length around the incumbent.

    Short probes along directions pointing into the feasible set land near
    the far end of a chord, which lets the incumbent slide along an active
    curved constraint where a plain lattice window stalls.  The scale ``h``
    halves whenever a round brings no improvement.
    """
    h = problem.step
    halvings, rounds, count = 0, 0, 0
    rays = _rays(problem.dimension)
    while halvings < problem.refinement_iterations and rounds < 20 * problem.refinement_iterations:
        rounds += 1
        pts = np.clip(point + h * rays, 0.0, 1.0)
        k, v = _best_in(pts, problem)
        count += len(pts)
        if v > value:
            point, value = pts[k].copy(), v
        else:
            h /= 2.0
            halvings += 1
    return point, value, count


CAST_ANGLES = 360
CAST_SAMPLES = 32
CAST_BISECTIONS = 60


def _cast(problem: OptProblem, point: np.ndarray, j: int, k: int, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Best feasible point on each ray from ``point`` in the (j, k) coordinate plane.

    Every ray is sampled up to the unit box, then the first feasible-to-infeasible
    transition is bisected so that points on the constraint boundary are reached
    exactly.  Returns the best value and point per angle.
    """
    d = problem.dimension
    u = np.zeros((len(psi), d))
    u[:, j], u[:, k] = np.cos(psi), np.sin(psi)
    with np.errstate(divide="ignore", invalid="ignore"):
        room = np.where(u > 0, (1.0 - point) / u, np.where(u < 0, -point / u, np.inf))
    lmax = np.min(room, axis=1)
    frac = np.linspace(0.0, 1.0, CAST_SAMPLES + 1)[1:]
    steps = lmax[:, None] * frac[None]
    pts = point + steps[..., None] * u[:, None, :]
    flat = pts.reshape(-1, d)
    ok = problem.feasible(flat).reshape(len(psi), CAST_SAMPLES)
    first_bad = np.where(ok.all(axis=1), CAST_SAMPLES, np.argmin(ok, axis=1))
    inside = np.arange(CAST_SAMPLES)[None] < first_bad[:, None]
    vals = np.where(inside, problem.objective(flat).reshape(len(psi), CAST_SAMPLES), -np.inf)
    lo = np.where(first_bad > 0, steps[np.arange(len(psi)), np.maximum(first_bad - 1, 0)], 0.0)
    hi = steps[np.arange(len(psi)), np.minimum(first_bad, CAST_SAMPLES - 1)]
    crossing = first_bad < CAST_SAMPLES
    for _ in range(CAST_BISECTIONS):
        mid = 0.5 * (lo + hi)
        good = problem.feasible(point + mid[:, None] * u)
        lo = np.where(crossing & good, mid, lo)
        hi = np.where(crossing & ~good, mid, hi)
    edge_pts = point + lo[:, None] * u
    edge_vals = np.where(problem.feasible(edge_pts), problem.objective(edge_pts), -np.inf)
    best = np.argmax(vals, axis=1)
    ray_vals = vals[np.arange(len(psi)), best]
    ray_pts = pts[np.arange(len(psi)), best]
    use_edge = edge_vals > ray_vals
    return np.where(use_edge, edge_vals, ray_vals), np.where(use_edge[:, None], edge_pts, ray_pts)


ZOOM_LEVELS = 3
ZOOM_POINTS = 64
_PROBE = 1e-7


def _scan(problem, point, j, k, angles) -> list[tuple[float, np.ndarray, float, float]]:
    """Cast rays at ``angles`` (sorted), then zoom into every bin whose ends
    disagree on whether an infinitesimal step is feasible.

    Such bins contain a tangent of the active constraint, next to which the
    improving directions may form a very thin wedge (for example where two
    constraints meet).  Returns (value, point, angle, spacing) candidates.
    """
    d = problem.dimension
    out = []
    pending = [(angles, ZOOM_LEVELS)]
    while pending:
        psi, level = pending.pop()
        vals, pts = _cast(problem, point, j, k, psi)
        spacing = float(psi[1] - psi[0])
        a = int(np.argmax(vals))
        out.append((float(vals[a]), pts[a], float(psi[a]), spacing))
        if level == 0:
            continue
        u = np.zeros((len(psi), d))
        u[:, j], u[:, k] = np.cos(psi), np.sin(psi)
        tiny = problem.feasible(np.clip(point + _PROBE * u, 0.0, 1.0))
        for i in np.flatnonzero(tiny[:-1] != tiny[1:]):
            pending.append((np.linspace(psi[i], psi[i + 1], ZOOM_POINTS + 1), level - 1))
    return out


def _polish(problem: OptProblem, point: np.ndarray, value: float) -> tuple[np.ndarray, float, int]:
    """Coordinate-pair ascent: in each coordinate plane move to the best point reachable by a ray.

    The ray angle is scanned, zoomed near constraint tangents and refined with
    bounded Brent, so an active curved constraint is followed to the optimum
    along the boundary.
    """
    count = 0
    coarse = np.linspace(0.0, 2.0 * np.pi, CAST_ANGLES + 1)
    per_ray = CAST_SAMPLES + CAST_BISECTIONS + 1
    for _ in range(problem.refinement_iterations):
        start_value = value
        for j, k in itertools.combinations(range(problem.dimension), 2):
            base = point.copy()
            cands = _scan(problem, base, j, k, coarse)
            count += sum(CAST_ANGLES for _ in cands) * per_ray
            cand_v, cand_p, ang, spacing = max(cands, key=lambda c: c[0])
            if cand_v > value:
                res = minimize_scalar(
                    lambda t: -float(_cast(problem, base, j, k, np.array([t]))[0][0]),
                    bounds=(ang - spacing, ang + spacing), method="bounded", options={"xatol": 1e-13},
                )
                count += int(res.nfev) * per_ray
                if np.isfinite(res.fun) and -res.fun > cand_v:
                    v1, p1 = _cast(problem, base, j, k, np.array([res.x]))
                    cand_v, cand_p = float(v1[0]), p1[0]
                point, value = cand_p.copy(), float(cand_v)
        if value - start_value <= 1e-15 * max(1.0, abs(value)):
            break
    return point, value, count


def _refine(problem: OptProblem, point: np.ndarray, value: float) -> tuple[np.ndarray, float, int]:
    if problem.dimension == 1:
        return _refine_rays(problem, point, value)
    point, value, n1 = _refine_rays(problem, point, value)
    point, value, n2 = _polish(problem, point, value)
    return point, value, n1 + n2


def grid_maximize(problem: OptProblem) -> OracleResult:
    """Best feasible grid points, each refined locally; the best refined point wins.

    Deterministic for fixed parameters; ties resolve to the refinement that
    started from the lexicographically smallest grid point.

    Raises
    ------
    InfeasibleProblem
        If no grid point is feasible.
    """
    starts, count = _grid_search(problem, problem.starts)
    result = None
    for gv, gp in starts:
        point, value, n = _refine(problem, gp, gv)
        count += n
        if result is None or value > result[1]:
            result = (point, value, gp, gv)
    point, value, gp, gv = result
    return OracleResult(point, value, gp, gv, count)


def default_step(dimension: int, requested: float | None = None) -> float:
    """Grid step for a problem of the given dimension.

    Low-dimensional problems use ``requested`` (default 0.002); six-dimensional
    ones never go below 0.1 so a full run stays well under a minute.
    """
    if dimension <= LOW_DIM:
        return FINE_STEP if requested is None else requested
    return COARSE_STEP if requested is None else max(requested, COARSE_STEP)


# --- the threshold problems ----------------------------------------------------


def _pairs(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split (N, 6) points into t_{i,1} and t_{i,2} columns, each (N, 3)."""
    return x[:, 0::2], x[:, 1::2]


def _product_objective(x: np.ndarray) -> np.ndarray:
    t1, t2 = _pairs(x)
    return np.prod(2.0 + t1 + t2, axis=1)


def _ordered(x: np.ndarray) -> np.ndarray:
    t1, t2 = _pairs(x)
    return np.all(t1 >= t2, axis=1)


def identical_problem(step: float | None = None) -> OptProblem:
    """Maximise (2 + t1 + t2)^3 subject to t1^2 + t2^2 <= 2^{2/3}."""
    return OptProblem(
        2,
        lambda x: (2.0 + x[:, 0] + x[:, 1]) ** 3,
        lambda x: x[:, 0] ** 2 + x[:, 1] ** 2 <= TWO_23,
        default_step(2, step),
        name="TrilocalIdentical",
    )


def general_trilocal_problem(step: float | None = None) -> OptProblem:
    """Maximise Π(2 + t_{i,1} + t_{i,2}) over ordered pairs without FNN violation."""

    def feasible(x):
        t1, t2 = _pairs(x)
        lhs = np.cbrt(np.prod(t1, axis=1)) ** 2 + np.cbrt(np.prod(t2, axis=1)) ** 2
        return _ordered(x) & (lhs <= TWO_23)

    return OptProblem(6, _product_objective, feasible, default_step(6, step), name="TrilocalGeneral")


def chsh_problem(c: int, step: float | None = None) -> OptProblem:
    """Maximise Π(2 + t_{i,1} + t_{i,2}) with the last ``c`` links CHSH-local."""
    if c not in (1, 2, 3):
        raise ValueError("c must be 1, 2 or 3")

    def feasible(x):
        t1, t2 = _pairs(x)
        local = t1[:, 3 - c:] ** 2 + t2[:, 3 - c:] ** 2 <= 1.0
        return _ordered(x) & np.all(local, axis=1)

    return OptProblem(6, _product_objective, feasible, default_step(6, step), name=f"ChshCount({c})")


@dataclass(frozen=True)
class ThresholdRow:
    kind: str
    analytic: float
    numeric: float
    argmax: tuple[float, ...]
    seconds: float

    @property
    def delta(self) -> float:
        return abs(self.numeric - self.analytic)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "analytic": self.analytic, "numeric": self.numeric,
                "delta": self.delta, "argmax": list(self.argmax), "seconds": self.seconds}


def threshold_problems(step: float | None = None) -> list[tuple[Threshold, OptProblem]]:
    return [
        (threshold(ThresholdKind.TRILOCAL_IDENTICAL), identical_problem(step)),
        (threshold(ThresholdKind.TRILOCAL_GENERAL), general_trilocal_problem(step)),
        (threshold(ThresholdKind.CHSH_COUNT, 1), chsh_problem(1, step)),
        (threshold(ThresholdKind.CHSH_COUNT, 2), chsh_problem(2, step)),
        (threshold(ThresholdKind.CHSH_COUNT, 3), chsh_problem(3, step)),
    ]


def tolerance_for(step: float | None) -> float:
    return 1e-3 if step is None else max(1e-3, step / 10.0)


def verify_thresholds(grid_step: float | None = None, tol: float | None = None,
                      raise_on_failure: bool = True) -> list[ThresholdRow]:
    """Recompute every threshold numerically and compare with its closed form.

    Raises
    ------
    VerificationFailure
        For the first threshold whose numeric value is off by more than ``tol``.
    """
    tol = tolerance_for(grid_step) if tol is None else tol
    rows = []
    for thr, problem in threshold_problems(grid_step):
        start = time.perf_counter()
        res = grid_maximize(problem)
        row = ThresholdRow(thr.label, thr.value, 1.0 - res.value / 64.0,
                           tuple(float(v) for v in res.point), time.perf_counter() - start)
        rows.append(row)
        if raise_on_failure and row.delta > tol:
            raise VerificationFailure(row.kind, row.analytic, row.numeric, tol)
    return rows
