"""Min-max divergence solvers.

The "equidistant point" between two output distributions, and its
conditional version over channels, both reduced to a one-dimensional
concave maximization over an exponential-tilting parameter and solved by
golden section.  Golden section is used instead of derivative bisection
because the objective's derivative vanishes non-smoothly when supports
differ; function evaluations are all that is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .prob import Channel, Dist, cond_kl, kl

__all__ = ["ChernoffResult", "tilted_dist", "chernoff_info", "cond_chernoff"]

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ChernoffResult:
    """Solution of min over V of max{D(V||left), D(V||right)}.

    ``equalizer`` is the minimizing distribution (a per-row matrix for the
    conditional problem), or None when the supports are disjoint and the
    value is +inf.  When lambda_star is interior and both divergences are
    finite they agree up to the equalization tolerance; at a boundary the
    value is a supremum and d_left, d_right may differ.
    """

    value: float
    lambda_star: float
    equalizer: Dist | np.ndarray | None
    d_left: float
    d_right: float


def _interior(lam) -> float | np.ndarray:
    # The tilting sum is evaluated only at interior parameters so that terms
    # with a zero probability on either side vanish; exact endpoints would
    # produce 0*(-inf).  Golden-section brackets can collapse onto 0 or 1 in
    # floating point, hence the clamp.
    return np.clip(lam, 1e-15, 1.0 - 1e-15)


def _log_tilt_terms(logp0: np.ndarray, logp1: np.ndarray, lam: float) -> np.ndarray:
    lam = float(_interior(lam))
    return lam * logp0 + (1.0 - lam) * logp1


def _neg_log_sum_exp(terms: np.ndarray) -> float:
    m = terms.max()
    if m == -math.inf:
        return math.inf
    return -(m + math.log(np.exp(terms - m).sum()))


def _golden_max(g, tol: float) -> tuple[float, float]:
    """Maximize a concave g on [0,1]; returns (argmax, value)."""
    lo, hi = 0.0, 1.0
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1, f2 = g(x1), g(x2)
    while hi - lo > tol:
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = g(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = g(x2)
    mid = 0.5 * (lo + hi)
    return mid, g(mid)


def _safe_log(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(p > 0.0, np.log(np.where(p > 0.0, p, 1.0)), -math.inf)


def tilted_dist(p0: Dist, p1: Dist, lam: float) -> Dist:
    """Geodesic family V_lam proportional to p0^lam * p1^(1-lam).

    V_1 is p0 exactly and V_0 is p1 exactly; interior members live on the
    common support.
    """
    if len(p0) != len(p1):
        raise ValueError("alphabet size mismatch")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0,1]")
    if lam == 1.0:
        return Dist(p0.probs.copy())
    if lam == 0.0:
        return Dist(p1.probs.copy())
    common = (p0.probs > 0.0) & (p1.probs > 0.0)
    if not common.any():
        raise ValueError("supports do not intersect")
    logw = lam * np.log(p0.probs[common]) + (1.0 - lam) * np.log(p1.probs[common])
    logw -= logw.max()
    w = np.exp(logw)
    probs = np.zeros(len(p0))
    probs[common] = w / w.sum()
    return Dist(probs)


def chernoff_info(p0: Dist, p1: Dist, tol: float = 1e-9) -> ChernoffResult:
    """min over V of max{D(V||p0), D(V||p1)}.

    Equals the maximum over lam in [0,1] of -ln sum_y p0^lam p1^(1-lam)
    (concave), solved by golden section to bracket width ``tol``.  Returns
    +inf for disjoint supports.  When one support strictly contains the
    other the maximum may sit at a boundary; the supremum is returned and
    the two divergences need not be equal there.
    """
    if len(p0) != len(p1):
        raise ValueError("alphabet size mismatch")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if np.array_equal(p0.probs, p1.probs):
        return ChernoffResult(0.0, 0.5, Dist(p0.probs.copy()), 0.0, 0.0)
    common = (p0.probs > 0.0) & (p1.probs > 0.0)
    if not common.any():
        return ChernoffResult(math.inf, 0.5, None, math.inf, math.inf)
    logp0 = _safe_log(p0.probs)
    logp1 = _safe_log(p1.probs)

    def g(lam: float) -> float:
        return _neg_log_sum_exp(_log_tilt_terms(logp0, logp1, lam))

    lam_star, value = _golden_max(g, tol)
    v = tilted_dist(p0, p1, lam_star)
    return ChernoffResult(value + 0.0, lam_star, v, kl(v, p0), kl(v, p1))


def cond_chernoff(q: Channel, p: Dist, tol: float = 1e-9) -> ChernoffResult:
    """min over channels W of max{D(W||Q|p), D(W||Qstar|p)}.

    Qstar is the channel's designated noise row, repeated.  By minimax
    exchange the value equals the maximum over lam of
    sum_x p(x) * (-ln sum_y Q(y|x)^lam Qstar(y)^(1-lam)); the minimizing W
    is recovered row-wise by tilting each Q(.|x) toward Qstar with the same
    lam.
    """
    if len(p) != q.num_inputs:
        raise ValueError("input distribution does not match channel")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    star = q.rows[q.star]
    logrows = _safe_log(q.rows)
    logstar = _safe_log(star)
    active = np.flatnonzero(p.probs > 0.0)
    for x in active:
        if not ((q.rows[x] > 0.0) & (star > 0.0)).any():
            return ChernoffResult(math.inf, 0.5, None, math.inf, math.inf)

    def g(lam: float) -> float:
        total = 0.0
        for x in active:
            total += float(p.probs[x]) * _neg_log_sum_exp(
                _log_tilt_terms(logrows[x], logstar, lam)
            )
        return total

    lam_star, value = _golden_max(g, tol)
    star_dist = q.star_dist
    w_rows = np.empty_like(q.rows)
    for x in range(q.num_inputs):
        if ((q.rows[x] > 0.0) & (star > 0.0)).any():
            w_rows[x] = tilted_dist(Dist(q.rows[x]), star_dist, lam_star).probs
        else:
            w_rows[x] = star
    d_left = _cond_kl_rows(w_rows, q.rows, p.probs)
    d_right = _cond_kl_rows(w_rows, np.tile(star, (q.num_inputs, 1)), p.probs)
    return ChernoffResult(value, lam_star, w_rows, d_left, d_right)


def _cond_kl_rows(w1: np.ndarray, w2: np.ndarray, p: np.ndarray) -> float:
    total = 0.0
    for x in np.flatnonzero(p > 0.0):
        a, b = w1[x], w2[x]
        mask = a > 0.0
        if np.any(b[mask] == 0.0):
            return math.inf
        total += float(p[x]) * float(np.sum(a[mask] * (np.log(a[mask]) - np.log(b[mask]))))
    return total


# Vectorized evaluators used by the bound-level grid searches.  They share
# the scalar solvers' zero handling: interior tilting parameters make terms
# with a zero on either side vanish.


def _golden_max_batch(g_batch, n: int, iters: int) -> np.ndarray:
    lo = np.zeros(n)
    hi = np.ones(n)
    for _ in range(iters):
        x1 = hi - _INVPHI * (hi - lo)
        x2 = lo + _INVPHI * (hi - lo)
        take_left = g_batch(x1) >= g_batch(x2)
        hi = np.where(take_left, x2, hi)
        lo = np.where(take_left, lo, x1)
    return g_batch(0.5 * (lo + hi))


def chernoff_values_to(p0s: np.ndarray, p1: np.ndarray, iters: int = 44) -> np.ndarray:
    """Chernoff info value of each row of p0s against a fixed p1."""
    p0s = np.atleast_2d(np.asarray(p0s, dtype=np.float64))
    logp0s = _safe_log(p0s)
    logp1 = _safe_log(np.asarray(p1, dtype=np.float64))

    def g_batch(lams: np.ndarray) -> np.ndarray:
        lams = _interior(lams)
        terms = lams[:, None] * logp0s + (1.0 - lams)[:, None] * logp1[None, :]
        m = terms.max(axis=1)
        finite = m > -math.inf
        out = np.full(lams.size, math.inf)
        if finite.any():
            t = terms[finite] - m[finite, None]
            out[finite] = -(m[finite] + np.log(np.exp(t).sum(axis=1)))
        return out

    return _golden_max_batch(g_batch, p0s.shape[0], iters)


def cond_h_table(q: Channel, num: int = 1025) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tilting-exponent table h[lam, x] = -ln sum_y Q(y|x)^lam Qstar(y)^(1-lam).

    The conditional min-max value for any input distribution P is
    max over lam of P . h(lam), so one table serves every candidate in a
    grid search.  Columns of rows whose support misses the noise support
    are +inf for every lam; they are zeroed in the returned table and
    flagged in ``row_inf`` so callers can mask affected candidates.
    """
    lams = _interior(np.linspace(0.0, 1.0, num))
    logrows = _safe_log(q.rows)
    logstar = _safe_log(q.rows[q.star])
    terms = (
        lams[:, None, None] * logrows[None, :, :]
        + (1.0 - lams)[:, None, None] * logstar[None, None, :]
    )
    m = terms.max(axis=2)
    with np.errstate(invalid="ignore"):
        h = np.where(
            m > -math.inf,
            -(m + np.log(np.exp(terms - m[:, :, None]).sum(axis=2))),
            math.inf,
        )
    row_inf = np.isinf(h).any(axis=0)
    h = np.where(row_inf[None, :], 0.0, h)
    return lams, h, row_inf


def grid_max_concave(vals: np.ndarray) -> np.ndarray:
    """Row-wise max of concave-in-column samples, parabola-refined at the peak.

    A peak on the first or last column is a boundary supremum and is
    returned as sampled; extrapolating the parabola there would overshoot.
    """
    n = vals.shape[1]
    j = vals.argmax(axis=1)
    rows = np.arange(vals.shape[0])
    v0 = vals[rows, np.maximum(j - 1, 0)]
    v1 = vals[rows, j]
    v2 = vals[rows, np.minimum(j + 1, n - 1)]
    denom = 2.0 * v1 - v0 - v2
    interior = (j > 0) & (j < n - 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        bump = np.where(interior & (denom > 1e-300), (v2 - v0) ** 2 / (8.0 * denom), 0.0)
    return v1 + bump


def cond_chernoff_values(ps: np.ndarray, q: Channel, chunk: int = 1 << 14) -> np.ndarray:
    """cond_chernoff value for each input distribution row of ps."""
    ps = np.atleast_2d(np.asarray(ps, dtype=np.float64))
    _, h, row_inf = cond_h_table(q)
    out = np.empty(ps.shape[0])
    for start in range(0, ps.shape[0], chunk):
        block = ps[start : start + chunk]
        vals = grid_max_concave(block @ h.T)
        if row_inf.any():
            vals = np.where((block[:, row_inf] > 0.0).any(axis=1), math.inf, vals)
        out[start : start + chunk] = vals
    return out
