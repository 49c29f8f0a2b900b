"""Bound evaluators for the asynchronous-capacity tradeoff.

Synchronization threshold, achievability and converse bounds on the
asynchronism exponent at a given rate, the closed-form capacity for
channels whose noise cannot produce every output, training-scheme bounds,
discontinuity tests, a Gaussian-input bound via quantization, and rate
sweeps.

The maximizations over input distributions are discretized: for input
alphabets of size <= 3 an exhaustive barycentric grid with local
refinement, beyond that multi-start projected coordinate ascent.  Grid
maxima under-approximate the true maxima; every evaluator is deterministic
given its GridSpec.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import ndtr

from .chernoff import (
    chernoff_info,
    chernoff_values_to,
    cond_chernoff,
    cond_chernoff_values,
    cond_h_table,
    grid_max_concave,
)
from .prob import Channel, Dist, blahut_arimoto, enumerate_types, kl

__all__ = [
    "BoundKind",
    "BoundPoint",
    "GridSpec",
    "InfeasibleRateError",
    "GridResolutionError",
    "sync_threshold",
    "lower_bound_alpha",
    "upper_bound_alpha",
    "alpha_bar",
    "training_bounds",
    "discontinuity_at_capacity",
    "discontinuity_at_zero",
    "gaussian_lower_bound",
    "sweep",
    "SweepRow",
    "SweepResult",
]

# Slack absorbing float dust when testing the mutual-information constraint
# at the capacity boundary.
_RATE_SLACK = 1e-9


class InfeasibleRateError(ValueError):
    """Requested rate lies outside the valid range for the bound."""


class GridResolutionError(RuntimeError):
    """No grid point satisfies the constraints; tighten the grid."""


class BoundKind(Enum):
    SYNC_THRESHOLD = "sync_threshold"
    ACHIEVABILITY_LOWER = "achievability_lower"
    CONVERSE_UPPER = "converse_upper"
    INF_THRESHOLD_CAPACITY = "inf_threshold_capacity"
    TRAINING_LOWER = "training_lower"
    TRAINING_UPPER = "training_upper"
    GAUSSIAN_LOWER = "gaussian_lower"


@dataclass(frozen=True)
class BoundPoint:
    """A (rate, exponent) pair with provenance and an optional witness."""

    rate: float
    alpha: float
    kind: BoundKind
    witness: dict | None = None


@dataclass(frozen=True)
class GridSpec:
    """Discretization controls for the input-simplex and delta searches."""

    simplex_step: float = 0.01
    delta_step: float = 0.02
    refine_rounds: int = 2
    starts: int = 20
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.simplex_step <= 1.0:
            raise ValueError("simplex_step must be in (0, 1]")
        if not 0.0 < self.delta_step <= 1.0:
            raise ValueError("delta_step must be in (0, 1]")
        if self.refine_rounds < 0:
            raise ValueError("refine_rounds must be non-negative")
        if self.starts < 1:
            raise ValueError("starts must be positive")


def _simplex_grid(k: int, step: float) -> np.ndarray:
    m = max(1, round(1.0 / step))
    if k == 1:
        return np.ones((1, 1))
    counts = np.array([t.counts for t in enumerate_types(k, m)], dtype=np.float64)
    return counts / m


def _local_grid(center: np.ndarray, fine_step: float, radius: int = 10) -> np.ndarray:
    k = center.size
    if k == 1:
        return center[None, :].copy()
    comps = np.array([t.counts for t in enumerate_types(k, k * radius)], dtype=np.float64)
    pts = center[None, :] + fine_step * (comps - radius)
    pts = pts[pts.min(axis=1) >= -1e-12]
    pts = np.maximum(pts, 0.0)
    pts /= pts.sum(axis=1, keepdims=True)
    return pts


def _mutual_info_batch(ps: np.ndarray, rows: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        row_sl = np.where(rows > 0.0, rows * np.log(np.where(rows > 0.0, rows, 1.0)), 0.0)
        c = row_sl.sum(axis=1)
        outs = ps @ rows
        ent = np.where(outs > 0.0, outs * np.log(np.where(outs > 0.0, outs, 1.0)), 0.0).sum(axis=1)
    return ps @ c - ent


def _kl_rows_to(ps: np.ndarray, target: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.where(ps > 0.0, np.log(np.where(ps > 0.0, ps, 1.0)), 0.0)
        logq = np.where(target > 0.0, np.log(np.where(target > 0.0, target, 1.0)), -math.inf)
        contrib = np.where(ps > 0.0, ps * (logp - logq[None, :]), 0.0)
    return contrib.sum(axis=1)


def sync_threshold(q: Channel) -> float:
    """Largest divergence from a channel row to the noise row.

    +inf exactly when some output is reachable from an input but never
    produced by noise.
    """
    return float(_kl_rows_to(q.rows, q.rows[q.star]).max())


def _feasible(ps: np.ndarray, rows: np.ndarray, rate: float) -> np.ndarray:
    return ps[_mutual_info_batch(ps, rows) >= rate - _RATE_SLACK]


def _maximize_over_simplex(q, grid, objective_batch, rate=None):
    """Grid-with-refinement (or multi-start ascent) maximizer over inputs."""
    k = q.num_inputs
    if k > 3:
        return _ascent_max(q, grid, objective_batch, rate)
    cands = _simplex_grid(k, grid.simplex_step)
    if rate is not None:
        cands = _feasible(cands, q.rows, rate)
        if cands.shape[0] == 0:
            raise GridResolutionError(
                "no grid point satisfies the mutual-information constraint; tighten grid"
            )
    vals = objective_batch(cands)
    i = int(np.argmax(vals))
    best_p, best_val = cands[i].copy(), float(vals[i])
    step = grid.simplex_step
    for _ in range(grid.refine_rounds):
        if math.isinf(best_val):
            break
        step /= 10.0
        local = _local_grid(best_p, step)
        if rate is not None:
            local = _feasible(local, q.rows, rate)
            if local.shape[0] == 0:
                continue
        vals = objective_batch(local)
        i = int(np.argmax(vals))
        if float(vals[i]) > best_val:
            best_p, best_val = local[i].copy(), float(vals[i])
    return best_p, best_val


def _ascent_max(q, grid, objective_batch, rate=None):
    """Multi-start projected coordinate ascent for |X| > 3."""
    k = q.num_inputs
    rng = np.random.default_rng(grid.seed)
    starts = rng.dirichlet(np.ones(k), size=grid.starts)
    anchor = blahut_arimoto(q).argmax.probs

    def feasible(p):
        return rate is None or _mutual_info_batch(p[None, :], q.rows)[0] >= rate - _RATE_SLACK

    best_p, best_val = None, -math.inf
    for p in starts:
        if not feasible(p):
            lo, hi = 0.0, 1.0  # blend toward the capacity-achieving anchor
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                if feasible((1 - mid) * p + mid * anchor):
                    hi = mid
                else:
                    lo = mid
            p = (1 - hi) * p + hi * anchor
        val = float(objective_batch(p[None, :])[0])
        for step in (0.1, 0.02, 0.004, 0.0008):
            for _ in range(60):
                moves = []
                for i in range(k):
                    for jj in range(k):
                        if i == jj or p[jj] <= 0.0:
                            continue
                        d = min(step, p[jj])
                        cand = p.copy()
                        cand[i] += d
                        cand[jj] -= d
                        if feasible(cand):
                            moves.append(cand)
                if not moves:
                    break
                mv = np.array(moves)
                vv = objective_batch(mv)
                j = int(np.argmax(vv))
                if float(vv[j]) > val + 1e-14:
                    p, val = mv[j], float(vv[j])
                else:
                    break
        if val > best_val:
            best_p, best_val = p, val
    if best_p is None:
        raise GridResolutionError("no feasible start; tighten constraints")
    return best_p, best_val


def lower_bound_alpha(q: Channel, rate: float, grid: GridSpec | None = None) -> BoundPoint:
    """Largest exponent achievable by joint synchronization-and-coding.

    Maximizes the equidistant-point value between the induced output
    distribution and the noise distribution over input distributions with
    mutual information at least ``rate``.
    """
    grid = grid or GridSpec()
    cap = blahut_arimoto(q).capacity
    if rate <= 0.0:
        raise InfeasibleRateError("rate must be positive")
    if rate > cap + _RATE_SLACK:
        raise InfeasibleRateError(f"rate {rate} exceeds synchronous capacity {cap}")
    star = q.rows[q.star]

    def objective(ps: np.ndarray) -> np.ndarray:
        return chernoff_values_to(ps @ q.rows, star)

    best_p, _ = _maximize_over_simplex(q, grid, objective, rate=rate)
    res = chernoff_info(Dist(best_p @ q.rows), q.star_dist)
    witness = {"input_dist": Dist(best_p), "lambda_star": res.lambda_star}
    return BoundPoint(rate, res.value, BoundKind.ACHIEVABILITY_LOWER, witness)


def alpha_bar(q: Channel, grid: GridSpec | None = None) -> BoundPoint:
    """Asynchronous capacity constant for infinite-threshold channels.

    Maximum over input distributions of the conditional equidistant-point
    value; also the training-scheme constant m1 on any channel.  Reports
    +inf as soon as any grid point yields +inf.
    """
    grid = grid or GridSpec()

    def objective(ps: np.ndarray) -> np.ndarray:
        return cond_chernoff_values(ps, q)

    best_p, best_val = _maximize_over_simplex(q, grid, objective)
    if math.isinf(best_val):
        witness = {"input_dist": Dist(best_p), "lambda_star": 0.5}
        return BoundPoint(0.0, math.inf, BoundKind.INF_THRESHOLD_CAPACITY, witness)
    res = cond_chernoff(q, Dist(best_p))
    witness = {"input_dist": Dist(best_p), "lambda_star": res.lambda_star}
    return BoundPoint(0.0, res.value, BoundKind.INF_THRESHOLD_CAPACITY, witness)


def _upper_inner_best(q, rate, p1s, deltas, prune: bool = True):
    """Best min{alpha1, alpha2} over deltas and mixture vertices per p1 row.

    alpha2 is convex in the mixture distribution, so its maximum over the
    third distribution sits at a vertex of the sub-simplex; vertices are
    enumerated exactly.  With the shared tilting table,
    P2 . h = delta*(P1 . h) + (1-delta)*h[:, x], so each (delta, vertex)
    pair costs one fused pass over the table.

    With ``prune`` the rows that cannot beat the global incumbent are
    skipped; per-row values then remain valid lower estimates but only the
    global argmax is faithful.  Callers needing every row exact (the
    coordinate-ascent objective) disable it.
    """
    k = q.num_inputs
    star = q.rows[q.star]
    i1 = _mutual_info_batch(p1s, q.rows)
    dout = _kl_rows_to(p1s @ q.rows, star)
    f = p1s.shape[0]
    alpha1 = deltas[None, :] * (i1 - rate + dout)[:, None]  # (F, D)
    _, h, _ = cond_h_table(q)  # finite-threshold branch: no inf rows
    g1 = p1s @ h.T  # (F, L)
    best_vals = np.full((f,), -math.inf)
    best_delta = np.zeros(f, dtype=np.int64)
    best_vertex = np.zeros(f, dtype=np.int64)

    # delta = 1 makes the mixture independent of the vertex; evaluating it
    # first seeds the incumbent so that later (vertex, delta) passes can
    # skip every candidate whose alpha1 already falls below it.
    di_one = int(np.argmin(np.abs(deltas - 1.0)))
    if deltas[di_one] == 1.0:
        a2_one = grid_max_concave(g1)
        best_vals = np.minimum(alpha1[:, di_one], a2_one)
        best_delta[:] = di_one

    order = np.argsort(-deltas)
    incumbent = float(best_vals.max()) if f else -math.inf
    for x in range(k):
        hx = h[:, x]
        for di in order:
            delta = float(deltas[di])
            if delta == 1.0:
                continue
            if prune:
                live = np.flatnonzero(alpha1[:, di] > incumbent)
            else:
                live = np.arange(f)
            if live.size == 0:
                continue
            a2 = grid_max_concave(delta * g1[live] + (1.0 - delta) * hx[None, :])
            vals = np.minimum(alpha1[live, di], a2)
            upd = vals > best_vals[live]
            if upd.any():
                rows = live[upd]
                best_vals[rows] = vals[upd]
                best_delta[rows] = di
                best_vertex[rows] = x
                incumbent = max(incumbent, float(vals.max()))
    return best_vals, best_delta, best_vertex


def upper_bound_alpha(q: Channel, rate: float, grid: GridSpec | None = None) -> BoundPoint:
    """Converse bound on the exponent at a given rate.

    For channels whose noise can produce every output, maximizes
    min{alpha1, alpha2} over codeword distributions, mixture weights, and
    mixture partners; alpha1 captures the false-alarm constraint and alpha2
    the miss constraint.  For infinite-threshold channels the bound is the
    rate-independent conditional equidistant-point maximum.
    """
    grid = grid or GridSpec()
    if rate <= 0.0:
        raise InfeasibleRateError("rate must be positive")
    if math.isinf(sync_threshold(q)):
        ab = alpha_bar(q, grid)
        return BoundPoint(rate, ab.alpha, BoundKind.CONVERSE_UPPER, ab.witness)

    cap = blahut_arimoto(q).capacity
    k = q.num_inputs
    m = max(1, round(1.0 / grid.delta_step))
    deltas = np.arange(m + 1) * grid.delta_step
    deltas[-1] = 1.0

    if k > 3:
        def objective(ps: np.ndarray) -> np.ndarray:
            return _upper_inner_best(q, rate, ps, deltas, prune=False)[0]

        try:
            best_p1, best_val = _ascent_max(q, grid, objective, rate=rate)
        except GridResolutionError:
            if rate > cap + _RATE_SLACK:
                return BoundPoint(rate, 0.0, BoundKind.CONVERSE_UPPER, None)
            raise
        vals, bd, bx = _upper_inner_best(q, rate, best_p1[None, :], deltas)
        best_delta, best_x = float(deltas[bd[0]]), int(bx[0])
        return _finish_upper(q, rate, best_p1, best_delta, best_x, float(vals[0]))

    cands = _simplex_grid(k, grid.simplex_step)
    feas = _feasible(cands, q.rows, rate)
    if feas.shape[0] == 0:
        if rate > cap + _RATE_SLACK:
            return BoundPoint(rate, 0.0, BoundKind.CONVERSE_UPPER, None)
        raise GridResolutionError(
            "no grid point satisfies the mutual-information constraint; tighten grid"
        )
    vals, bd, bx = _upper_inner_best(q, rate, feas, deltas)
    i = int(np.argmax(vals))
    best_p1, best_val = feas[i].copy(), float(vals[i])
    best_delta, best_x = float(deltas[bd[i]]), int(bx[i])

    step_p, step_d = grid.simplex_step, grid.delta_step
    for _ in range(grid.refine_rounds):
        step_p /= 10.0
        step_d /= 10.0
        local_p = _feasible(_local_grid(best_p1, step_p), q.rows, rate)
        if local_p.shape[0] == 0:
            local_p = best_p1[None, :]
        local_d = np.unique(np.clip(best_delta + np.arange(-10, 11) * step_d, 0.0, 1.0))
        vals, bd, bx = _upper_inner_best(q, rate, local_p, local_d)
        i = int(np.argmax(vals))
        if float(vals[i]) > best_val:
            best_p1, best_val = local_p[i].copy(), float(vals[i])
            best_delta, best_x = float(local_d[bd[i]]), int(bx[i])
    return _finish_upper(q, rate, best_p1, best_delta, best_x, best_val)


def _finish_upper(q, rate, p1, delta, x, val):
    k = q.num_inputs
    vertex = np.zeros(k)
    vertex[x] = 1.0
    p2 = delta * p1 + (1.0 - delta) * vertex
    witness = {
        "p1": Dist(p1),
        "p1_prime": Dist(vertex),
        "delta": delta,
        "p2": Dist(p2),
    }
    return BoundPoint(rate, max(0.0, val), BoundKind.CONVERSE_UPPER, witness)


def _scaled_or_zero(constant: float, eta: float) -> float:
    # eta == 0 with an infinite constant is the rate-equals-capacity edge;
    # the preamble vanishes and the bound with it.
    if eta == 0.0:
        return 0.0
    return constant * eta


def training_bounds(
    q: Channel, rate: float, grid: GridSpec | None = None
) -> tuple[BoundPoint, BoundPoint, float]:
    """Exponent bounds for schemes with a dedicated synchronization preamble.

    Returns (lower, upper, eta) where eta = 1 - rate/capacity is the
    largest preamble fraction a rate-``rate`` scheme can afford.
    """
    grid = grid or GridSpec()
    cap = blahut_arimoto(q).capacity
    if rate <= 0.0 or rate > cap + _RATE_SLACK:
        raise InfeasibleRateError(f"rate must lie in (0, {cap}]")
    m1 = alpha_bar(q, grid).alpha
    m2 = training_m2(q)
    eta = max(0.0, 1.0 - rate / cap)
    lower_val = _scaled_or_zero(m1, eta)
    upper_val = min(_scaled_or_zero(m2, eta), upper_bound_alpha(q, rate, grid).alpha)
    lower = BoundPoint(rate, lower_val, BoundKind.TRAINING_LOWER, {"m1": m1, "eta": eta})
    upper = BoundPoint(rate, upper_val, BoundKind.TRAINING_UPPER, {"m2": m2, "eta": eta})
    return lower, upper, eta


def training_m2(q: Channel) -> float:
    """-ln of the least likely noise output; +inf iff noise misses an output."""
    star = q.rows[q.star]
    if np.any(star == 0.0):
        return math.inf
    return float(-np.log(star.min()))


def discontinuity_at_capacity(q: Channel, tol: float = 1e-6) -> bool:
    """Whether a positive exponent is available at the synchronous capacity.

    True iff the noise distribution differs (in L1, by more than ``tol``)
    from the capacity-achieving output distribution.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    ba = blahut_arimoto(q)
    gap = float(np.abs(q.rows[q.star] - ba.cap_output.probs).sum())
    return gap > tol


def discontinuity_at_zero(q: Channel) -> bool:
    """Sufficient condition for an exponent gap at vanishing rate.

    True iff the synchronization threshold strictly exceeds
    max_x D(Qstar || Q(.|x)).  This is only the sufficient direction; the
    general question is open.
    """
    reverse = max(kl(q.star_dist, Dist(r)) for r in q.rows)
    return sync_threshold(q) > reverse


def gaussian_lower_bound(
    power: float,
    rate: float,
    quant: tuple[float, float] = (20.0, 0.01),
    tol: float = 1e-9,
) -> BoundPoint:
    """Achievability bound for the unit-noise additive Gaussian channel.

    Restricted to Gaussian inputs: the mean is pushed as high as the power
    and rate constraints allow, with rate = 0.5*ln(1 + power - mean^2).
    The output and noise densities are quantized onto a uniform grid over
    [-L/2, L/2] (tail mass folded into the end cells) and the equidistant
    point of the two quantized distributions is returned.
    """
    L, delta = quant
    if delta <= 0.0 or L <= 0.0:
        raise ValueError("quantization parameters must be positive")
    cells = L / delta
    if abs(cells - round(cells)) > 1e-9 or round(cells) % 2 != 0:
        raise ValueError("L/delta must be an even integer")
    cells = int(round(cells))
    if power < 0.0:
        raise ValueError("power must be non-negative")
    cap = 0.5 * math.log1p(power)
    if rate < 0.0 or rate > cap + 1e-12:
        raise InfeasibleRateError(f"rate infeasible for power {power} (max {cap})")
    mu2 = power - math.expm1(2.0 * rate)
    mu2 = max(0.0, mu2)
    mu = math.sqrt(mu2)
    sigma_out = math.exp(rate)  # sqrt(power - mu^2 + 1)

    edges = -L / 2.0 + delta * np.arange(cells + 1)

    def quantize(mean: float, sigma: float) -> Dist:
        c = ndtr((edges - mean) / sigma)
        probs = np.diff(c)
        probs[0] += c[0]
        probs[-1] += 1.0 - c[-1]
        return Dist(probs)

    out_q = quantize(mu, sigma_out)
    noise_q = quantize(0.0, 1.0)
    res = chernoff_info(out_q, noise_q, tol)
    witness = {
        "mean": mu,
        "input_variance": power - mu2,
        "L": L,
        "delta": delta,
        "lambda_star": res.lambda_star,
    }
    return BoundPoint(rate, res.value, BoundKind.GAUSSIAN_LOWER, witness)


@dataclass(frozen=True)
class SweepRow:
    rate: float
    alpha_lower: float
    alpha_upper: float
    train_lower: float
    train_upper: float
    eta: float
    status: str = "ok"


@dataclass(frozen=True)
class SweepResult:
    capacity: float
    sync_threshold: float
    m1: float
    m2: float
    discontinuous_at_capacity: bool
    discontinuous_at_zero: bool
    rows: list[SweepRow] = field(default_factory=list)


def sweep(
    q: Channel,
    rates: list[float],
    grid: GridSpec | None = None,
    workers: int | None = None,
) -> SweepResult:
    """Evaluate all bounds over a list of rates.

    Per-rate errors become row-level statuses rather than aborting the
    sweep.  Rows are independent; with ``workers`` they are evaluated on a
    thread pool and results are identical to sequential evaluation.
    """
    grid = grid or GridSpec()
    ba = blahut_arimoto(q)
    cap = ba.capacity
    st = sync_threshold(q)
    m1 = alpha_bar(q, grid).alpha
    m2 = training_m2(q)

    def one(rate: float) -> SweepRow:
        try:
            lower = lower_bound_alpha(q, rate, grid).alpha
            upper = upper_bound_alpha(q, rate, grid).alpha
            eta = max(0.0, 1.0 - rate / cap)
            t_lo = _scaled_or_zero(m1, eta)
            t_up = min(_scaled_or_zero(m2, eta), upper)
            return SweepRow(rate, lower, upper, t_lo, t_up, eta)
        except (InfeasibleRateError, GridResolutionError) as exc:
            nan = math.nan
            return SweepRow(rate, nan, nan, nan, nan, nan, status=str(exc))

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, rates))
    else:
        rows = [one(r) for r in rates]
    return SweepResult(
        capacity=cap,
        sync_threshold=st,
        m1=m1,
        m2=m2,
        discontinuous_at_capacity=discontinuity_at_capacity(q),
        discontinuous_at_zero=discontinuity_at_zero(q),
        rows=rows,
    )
