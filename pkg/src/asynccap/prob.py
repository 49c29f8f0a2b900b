"""Finite-alphabet probability primitives.

Distributions, channels, divergences, mutual information, empirical types,
type-class combinatorics, and synchronous capacity via alternating
maximization.  All information quantities are in nats.  Infinite divergences
are represented by ``math.inf`` and propagate through comparisons; they are
never produced by overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "Dist",
    "Channel",
    "EmpiricalType",
    "JointType",
    "kl",
    "cond_kl",
    "mutual_info",
    "output_dist",
    "blahut_arimoto",
    "CapacityResult",
    "type_class_log_prob",
    "enumerate_types",
    "empirical_type",
    "joint_type",
    "cond_kl_from_counts",
]

# Raw probability vectors further from 1 than this are treated as malformed
# input rather than float dust.
_SUM_SLACK = 1e-6
_NEG_DUST = 1e-12


def _clean_probs(raw, what: str) -> np.ndarray:
    probs = np.asarray(raw, dtype=np.float64)
    if probs.ndim != 1 or probs.size == 0:
        raise ValueError(f"{what} must be a non-empty 1-D vector")
    if np.any(probs < -_NEG_DUST):
        raise ValueError(f"{what} has a negative entry: {probs.min()}")
    probs = np.maximum(probs, 0.0)
    total = float(probs.sum())
    if abs(total - 1.0) > _SUM_SLACK:
        raise ValueError(f"{what} sums to {total}, expected 1 within {_SUM_SLACK}")
    probs = probs / total
    probs.flags.writeable = False
    return probs


@dataclass(frozen=True)
class Dist:
    """Probability vector over a finite alphabet 0..K-1.

    Entries are renormalized at construction; raw sums further than 1e-6
    from 1 are rejected so malformed channel files fail loudly.
    """

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _clean_probs(self.probs, "distribution"))

    def __len__(self) -> int:
        return self.probs.size

    @property
    def support(self) -> np.ndarray:
        return self.probs > 0.0

    @staticmethod
    def point_mass(index: int, size: int) -> "Dist":
        p = np.zeros(size)
        p[index] = 1.0
        return Dist(p)

    @staticmethod
    def uniform(size: int) -> "Dist":
        return Dist(np.full(size, 1.0 / size))


@dataclass(frozen=True)
class Channel:
    """Row-stochastic matrix Q(y|x) with a designated no-input row.

    ``star`` indexes the input whose row is the noise distribution observed
    when the transmitter is idle.  Every output symbol must be reachable
    from some input.
    """

    rows: np.ndarray
    star: int = 0

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] == 0 or rows.shape[1] == 0:
            raise ValueError("channel must be a non-empty 2-D matrix")
        cleaned = np.vstack([_clean_probs(r, f"channel row {i}") for i, r in enumerate(rows)])
        if np.any(cleaned.max(axis=0) <= 0.0):
            bad = int(np.flatnonzero(cleaned.max(axis=0) <= 0.0)[0])
            raise ValueError(f"output symbol {bad} is unreachable from every input")
        if not 0 <= self.star < cleaned.shape[0]:
            raise ValueError(f"star index {self.star} out of range")
        cleaned.flags.writeable = False
        object.__setattr__(self, "rows", cleaned)

    @property
    def num_inputs(self) -> int:
        return self.rows.shape[0]

    @property
    def num_outputs(self) -> int:
        return self.rows.shape[1]

    def row(self, x: int) -> Dist:
        return Dist(self.rows[x])

    @property
    def star_dist(self) -> Dist:
        return Dist(self.rows[self.star])


@dataclass(frozen=True)
class EmpiricalType:
    """Integer-count type of a length-n sequence."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size == 0:
            raise ValueError("type counts must be a non-empty 1-D vector")
        if np.any(counts < 0):
            raise ValueError("type counts must be non-negative")
        if counts.sum() <= 0:
            raise ValueError("type must have positive length")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def as_dist(self) -> Dist:
        return Dist(self.counts / self.n)


@dataclass(frozen=True)
class JointType:
    """Joint integer-count type of an aligned sequence pair."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2:
            raise ValueError("joint type counts must be a 2-D matrix")
        if np.any(counts < 0) or counts.sum() <= 0:
            raise ValueError("joint type counts must be non-negative with positive total")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def x_marginal(self) -> EmpiricalType:
        return EmpiricalType(self.counts.sum(axis=1))

    def y_marginal(self) -> EmpiricalType:
        return EmpiricalType(self.counts.sum(axis=0))


def kl(p: Dist, q: Dist) -> float:
    """Information divergence D(p || q) in nats.

    Uses the convention 0 ln(0/0) = 0 and returns +inf exactly when p puts
    mass where q does not.
    """
    if len(p) != len(q):
        raise ValueError(f"alphabet size mismatch: {len(p)} vs {len(q)}")
    pp, qq = p.probs, q.probs
    mask = pp > 0.0
    if np.any(qq[mask] == 0.0):
        return math.inf
    return float(np.sum(pp[mask] * (np.log(pp[mask]) - np.log(qq[mask]))))


def cond_kl(w1: Channel, w2: Channel, p: Dist) -> float:
    """Conditional divergence D(w1 || w2 | p) = sum_x p(x) D(w1(.|x) || w2(.|x))."""
    if w1.rows.shape != w2.rows.shape:
        raise ValueError("channel shape mismatch")
    if len(p) != w1.num_inputs:
        raise ValueError("input distribution does not match channel")
    total = 0.0
    for x in np.flatnonzero(p.probs > 0.0):
        d = kl(Dist(w1.rows[x]), Dist(w2.rows[x]))
        if math.isinf(d):
            return math.inf
        total += float(p.probs[x]) * d
    return total


def output_dist(p: Dist, q: Channel) -> Dist:
    """Output marginal of input distribution p pushed through channel q."""
    if len(p) != q.num_inputs:
        raise ValueError("input distribution does not match channel")
    return Dist(p.probs @ q.rows)


def mutual_info(p: Dist, q: Channel) -> float:
    """Mutual information I(pq) in nats, by direct double summation."""
    if len(p) != q.num_inputs:
        raise ValueError("input distribution does not match channel")
    out = p.probs @ q.rows
    total = 0.0
    for x in np.flatnonzero(p.probs > 0.0):
        row = q.rows[x]
        mask = row > 0.0
        total += float(p.probs[x]) * float(
            np.sum(row[mask] * (np.log(row[mask]) - np.log(out[mask])))
        )
    return max(0.0, total)


class CapacityResult(NamedTuple):
    capacity: float
    argmax: Dist
    cap_output: Dist


def blahut_arimoto(
    q: Channel,
    inputs: Iterable[int] | None = None,
    tol: float = 1e-9,
    max_iter: int = 100_000,
) -> CapacityResult:
    """Synchronous capacity max_P I(PQ) by alternating maximization.

    ``inputs`` optionally restricts the maximization to a subset of the
    input alphabet (useful when the idle symbol duplicates a noise row and
    should be excluded from coding).  Convergence is certified by the
    standard bracket [I(p), max_x D(Q_x || out)]; iteration stops when its
    width is at most ``tol``.  The returned capacity is the achieved lower
    end I(p), so ``mutual_info(argmax, q) == capacity`` exactly.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    active = np.arange(q.num_inputs) if inputs is None else np.asarray(sorted(set(inputs)), dtype=np.int64)
    if active.size == 0:
        raise ValueError("input subset must be non-empty")
    if active.min() < 0 or active.max() >= q.num_inputs:
        raise ValueError("input subset out of range")

    rows = q.rows[active]
    logrows = np.where(rows > 0.0, np.log(np.where(rows > 0.0, rows, 1.0)), 0.0)
    p = np.full(active.size, 1.0 / active.size)
    for _ in range(max_iter):
        out = p @ rows
        with np.errstate(divide="ignore"):
            logout = np.where(out > 0.0, np.log(np.where(out > 0.0, out, 1.0)), 0.0)
        d = np.einsum("xy,xy->x", rows, np.where(rows > 0.0, logrows - logout[None, :], 0.0))
        i_low = float(p @ d)
        i_high = float(d.max())
        if i_high - i_low <= tol:
            full = np.zeros(q.num_inputs)
            full[active] = p
            return CapacityResult(max(0.0, i_low), Dist(full), Dist(full @ q.rows))
        p = p * np.exp(d - i_high)
        p /= p.sum()
    raise RuntimeError(
        f"no convergence after {max_iter} iterations; bracket [{i_low}, {i_high}]"
    )


def type_class_log_prob(p_source: Dist, t: EmpiricalType) -> float:
    """Exact ln P(X^n lands in the type class of t) under i.i.d. p_source.

    Computed in log space via lgamma; returns -inf when t assigns count to
    a zero-probability symbol.
    """
    if len(p_source) != t.counts.size:
        raise ValueError("alphabet size mismatch")
    counts = t.counts
    probs = p_source.probs
    if np.any((counts > 0) & (probs == 0.0)):
        return -math.inf
    n = t.n
    log_multinom = math.lgamma(n + 1) - sum(math.lgamma(int(c) + 1) for c in counts)
    log_seq = float(sum(int(c) * math.log(probs[i]) for i, c in enumerate(counts) if c > 0))
    return log_multinom + log_seq


def enumerate_types(alphabet_size: int, n: int, cap: int = 2_000_000) -> list[EmpiricalType]:
    """All length-n types over an alphabet, i.e. compositions of n into K parts.

    The count is binomial(n+K-1, K-1); a guard rejects enumerations larger
    than ``cap``.
    """
    if alphabet_size < 1 or n < 1:
        raise ValueError("alphabet_size and n must be positive")
    total = math.comb(n + alphabet_size - 1, alphabet_size - 1)
    if total > cap:
        raise ValueError(f"{total} types exceeds enumeration cap {cap}")

    out: list[EmpiricalType] = []

    def rec(prefix: list[int], remaining: int, slots: int):
        if slots == 1:
            out.append(EmpiricalType(np.array(prefix + [remaining])))
            return
        for c in range(remaining, -1, -1):
            rec(prefix + [c], remaining - c, slots - 1)

    rec([], n, alphabet_size)
    return out


def empirical_type(seq: Sequence[int], alphabet_size: int | None = None) -> EmpiricalType:
    """Count type of a symbol sequence."""
    arr = np.asarray(seq, dtype=np.int64)
    if arr.size == 0:
        raise ValueError("sequence must be non-empty")
    size = alphabet_size if alphabet_size is not None else int(arr.max()) + 1
    return EmpiricalType(np.bincount(arr, minlength=size))


def joint_type(
    xs: Sequence[int],
    ys: Sequence[int],
    shape: tuple[int, int] | None = None,
) -> JointType:
    """Joint count type of an aligned pair of sequences."""
    ax = np.asarray(xs, dtype=np.int64)
    ay = np.asarray(ys, dtype=np.int64)
    if ax.size != ay.size:
        raise ValueError(f"length mismatch: {ax.size} vs {ay.size}")
    if ax.size == 0:
        raise ValueError("sequences must be non-empty")
    nx = shape[0] if shape else int(ax.max()) + 1
    ny = shape[1] if shape else int(ay.max()) + 1
    flat = np.bincount(ax * ny + ay, minlength=nx * ny)
    return JointType(flat.reshape(nx, ny))


def cond_kl_from_counts(j: JointType, ref_rows: np.ndarray) -> float:
    """D(conditional type of j || ref | x-marginal type of j) in nats.

    With J the joint counts and n their total, equals
    (1/n) sum_ab J_ab [ln J_ab - ln(row-sum_a) - ln ref(b|a)]; +inf when a
    counted pair has zero reference probability.
    """
    counts = j.counts
    ref = np.asarray(ref_rows, dtype=np.float64)
    if ref.shape != counts.shape:
        raise ValueError("reference shape mismatch")
    n = j.n
    rowsum = counts.sum(axis=1)
    total = 0.0
    for a, b in zip(*np.nonzero(counts)):
        c = counts[a, b]
        if ref[a, b] == 0.0:
            return math.inf
        total += c * (math.log(c) - math.log(rowsum[a]) - math.log(ref[a, b]))
    return total / n
