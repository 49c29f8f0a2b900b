"""Monte-Carlo simulation of the asynchronous discrete-time channel.

A codeword of length n is transmitted starting at a uniformly random slot
nu in {1..A}; outside the transmission window the receiver sees i.i.d.
noise.  Three sequential decoders are provided: the two-phase joint
scheme (noise-type test, then strong-typicality decoding), the
training/preamble scheme (sliding likelihood test on the preamble window,
then maximum-likelihood decoding of the payload), and a genie baseline
that is told nu.

Reproducibility protocol
------------------------
All randomness flows through counter-based Philox streams:

* codebook stream        ``SeedSequence([seed, 0, 0])``
* trial stream (m, k)    ``SeedSequence([seed, m + 1, k])`` (message m
  0-based, trial index k)

Within a trial the draw order is: (1) nu -- one ``integers(1, A+1)`` call
when A fits in 62 bits, otherwise fixed-width rejection sampling from raw
bits; (2) channel outputs in time order, one uniform per symbol, mapped
through the row's cumulative distribution (symbol = #{j: cum[j] <= u});
(3) any random message declaration.  The genie materializes only its
n-symbol window.

Scaling
-------
Streams up to ``EXACT_STREAM_CAP`` symbols are simulated exactly.  Beyond
that (A grows like e^(alpha*n), far past any stepwise budget) noise-only
stretches are advanced by geometric jumps to the next window whose
empirical distribution triggers the decoder, using the exactly computed
per-window trigger probability from the window-type distribution; the
triggering window is then materialized from the conditional type law and
everything near it -- including every window that overlaps the codeword --
is simulated symbol-exactly.  The only approximation is treating trigger
events of overlapping noise windows as independent across jumps.

Reaction delay is reported as (tau - nu + 1)^+ so a genie decoder that
reads exactly the codeword window scores a delay of n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from .bounds import GridSpec, alpha_bar
from .prob import Channel, Dist, blahut_arimoto, enumerate_types, kl, type_class_log_prob

__all__ = [
    "Scheme",
    "SimConfig",
    "SimResult",
    "Codebook",
    "TrialOutcome",
    "make_codebook",
    "run_trial",
    "run_experiment",
    "genie_decoder",
    "JointDecoder",
    "TrainingDecoder",
    "noise_window_trigger_prob",
    "EXACT_STREAM_CAP",
]

EXACT_STREAM_CAP = 1 << 20

_INT62 = 1 << 62


class Scheme(str, Enum):
    JOINT = "joint"
    TRAINING = "training"
    GENIE = "genie"


@dataclass(frozen=True)
class SimConfig:
    """One Monte-Carlo experiment's inputs."""

    channel: Channel
    n: int
    alpha: float
    num_messages: int
    scheme: Scheme
    input_dist: Dist | None = None
    typicality_mu: float = 0.05
    eta: float | None = None
    trials: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("codeword length must be positive")
        if self.alpha < 0.0:
            raise ValueError("asynchronism exponent must be non-negative")
        if self.num_messages < 2:
            raise ValueError("need at least two messages")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if self.typicality_mu <= 0.0:
            raise ValueError("typicality parameter must be positive")
        if self.scheme is Scheme.TRAINING:
            if self.eta is None:
                raise ValueError("training scheme requires eta")
            if not 0.0 < self.eta <= 1.0:
                raise ValueError("eta must lie in (0, 1]")
            if math.floor(self.eta * self.n) < 1:
                raise ValueError("preamble length floor(eta*n) must be at least 1")
        elif self.eta is not None:
            raise ValueError(f"eta is only meaningful for the training scheme, not {self.scheme.value}")
        if self.input_dist is not None and len(self.input_dist) != self.channel.num_inputs:
            raise ValueError("input distribution does not match channel")

    @property
    def async_level(self) -> int:
        return _async_level(self.alpha, self.n)


@dataclass(frozen=True)
class Codebook:
    codewords: np.ndarray  # (M, n) input-symbol indices
    generator_dist: Dist
    preamble_len: int = 0

    def __post_init__(self):
        cw = np.asarray(self.codewords, dtype=np.int64)
        cw.flags.writeable = False
        object.__setattr__(self, "codewords", cw)


@dataclass(frozen=True)
class SimResult:
    """Measured error and delay functionals of one experiment."""

    max_error_rate: float
    avg_error_rate: float
    mean_reaction_delay: float
    empirical_rate: float
    false_alarm_rate: float
    miss_rate: float
    trials_per_message: int
    ci_halfwidth: float

    def to_dict(self) -> dict:
        return {
            "max_error_rate": self.max_error_rate,
            "avg_error_rate": self.avg_error_rate,
            "mean_reaction_delay": self.mean_reaction_delay,
            "empirical_rate": self.empirical_rate,
            "false_alarm_rate": self.false_alarm_rate,
            "miss_rate": self.miss_rate,
            "trials_per_message": self.trials_per_message,
            "ci_halfwidth": self.ci_halfwidth,
        }


class TrialOutcome(NamedTuple):
    decoded: int
    tau: int
    nu: int


def _async_level(alpha: float, n: int) -> int:
    x = alpha * n
    if x <= 0.0:
        return 1
    if x <= 700.0:
        return max(1, int(math.floor(math.exp(x))))
    # e^x = e^r * 2^k exactly enough; the magnitude is what matters here.
    k = int(x / math.log(2.0))
    r = x - k * math.log(2.0)
    mant = int(math.exp(r) * (1 << 52))
    return mant << (k - 52)


def _stream_rng(seed: int, a: int, b: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, a, b])))


def _draw_nu(rng: np.random.Generator, a_level: int) -> int:
    if a_level <= _INT62:
        return int(rng.integers(1, a_level + 1))
    bits = a_level.bit_length()
    words = (bits + 31) // 32
    while True:
        limbs = rng.integers(0, 1 << 32, size=words, dtype=np.uint64)
        val = 0
        for w in limbs:
            val = (val << 32) | int(w)
        val &= (1 << bits) - 1
        if val < a_level:
            return val + 1


def _float_or_inf(x) -> float:
    try:
        return float(x)
    except OverflowError:
        return math.inf


def _safe_log(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(p > 0.0, np.log(np.where(p > 0.0, p, 1.0)), -math.inf)


def _symbols_from_uniform(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.minimum(np.searchsorted(cum, u, side="right"), cum.size - 1)


def _row_symbols(rows_cum: np.ndarray, codeword: np.ndarray, u: np.ndarray) -> np.ndarray:
    sel = rows_cum[codeword]
    return np.minimum((u[:, None] >= sel).sum(axis=1), sel.shape[1] - 1)


def _geometric(rng: np.random.Generator, p: float) -> float:
    """Windows until the first trigger (>= 1); inf when p == 0."""
    if p <= 0.0:
        return math.inf
    if p >= 1.0:
        return 1.0
    u = max(rng.random(), 1e-300)
    return math.floor(math.log(u) / math.log1p(-p)) + 1.0


def _noise_d_tables(n: int, qstar: np.ndarray) -> np.ndarray:
    """Lookup T[v][c]: contribution of count c of symbol v to D(window type || noise)."""
    counts = np.arange(n + 1, dtype=np.float64)
    tabs = np.empty((qstar.size, n + 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        for v in range(qstar.size):
            if qstar[v] == 0.0:
                col = np.full(n + 1, math.inf)
                col[0] = 0.0
            else:
                frac = counts / n
                col = np.where(
                    counts > 0, frac * (np.log(np.where(counts > 0, frac, 1.0)) - math.log(qstar[v])), 0.0
                )
            tabs[v] = col
    return tabs


class _TriggerModel(NamedTuple):
    prob: float
    type_counts: np.ndarray  # (T, Y) counts of triggering window types
    cond_probs: np.ndarray   # conditional law over triggering types


def _window_trigger_model(channel: Channel, n: int, alpha: float, cap: int = 5_000_000) -> _TriggerModel:
    qstar = channel.rows[channel.star]
    tabs = _noise_d_tables(n, qstar)
    star_dist = channel.star_dist
    types = enumerate_types(qstar.size, n, cap=cap)
    counts = np.array([t.counts for t in types], dtype=np.int64)
    # Divergences via the same tables the scanners use, so the trigger set
    # is float-identical between model and stepwise simulation.
    d = np.zeros(len(types))
    for v in range(qstar.size):
        d += tabs[v][counts[:, v]]
    logp = np.array([type_class_log_prob(star_dist, t) for t in types])
    trig = d >= alpha
    if not trig.any():
        return _TriggerModel(0.0, counts[:0], np.empty(0))
    lp = logp[trig]
    m = lp.max()
    if m == -math.inf:
        return _TriggerModel(0.0, counts[:0], np.empty(0))
    w = np.exp(lp - m)
    prob = float(math.exp(m) * w.sum())
    return _TriggerModel(prob, counts[trig], w / w.sum())


def noise_window_trigger_prob(channel: Channel, n: int, alpha: float) -> float:
    """Exact probability that an n-window of pure noise fails the noise-type test."""
    return _window_trigger_model(channel, n, alpha).prob


def _sample_type_window(rng: np.random.Generator, counts: np.ndarray) -> np.ndarray:
    syms = np.repeat(np.arange(counts.size), counts)
    rng.shuffle(syms)
    return syms


class _DetectionModel(NamedTuple):
    prob: float
    blocks: list  # per preamble symbol: (symbol, positions, count)
    combo_counts: list  # list of per-symbol count vectors, aligned with cond_probs
    cond_probs: np.ndarray


def _detection_model(channel: Channel, preamble: np.ndarray, lmap: np.ndarray, cap: int = 5_000_000) -> _DetectionModel:
    """Exact law of the preamble detector on a pure-noise window.

    The detection statistic depends on the window only through the
    per-preamble-symbol conditional type; blocks are independent
    multinomials under noise.
    """
    qstar = channel.rows[channel.star]
    star_dist = channel.star_dist
    symbols = np.unique(preamble)
    blocks = []
    per_block = []
    total = 1
    for a in symbols:
        pos = np.flatnonzero(preamble == a)
        blocks.append((int(a), pos, pos.size))
        types = enumerate_types(qstar.size, pos.size, cap=cap)
        total *= len(types)
        if total > cap:
            raise ValueError("preamble detection model too large; reduce alphabet or preamble")
        entries = []
        for t in types:
            lp = type_class_log_prob(star_dist, t)
            with np.errstate(invalid="ignore"):
                s = float(np.where(t.counts > 0, t.counts * lmap[a], 0.0).sum())
            if math.isnan(s):
                s = math.inf
            entries.append((t.counts, lp, s))
        per_block.append(entries)

    combos = [([], 0.0, 0.0)]
    for entries in per_block:
        combos = [
            (cs + [c], lp0 + lp, s0 + s)
            for cs, lp0, s0 in combos
            for c, lp, s in entries
        ]
    scores = np.array([s for _, _, s in combos])
    logps = np.array([lp for _, lp, _ in combos])
    det = scores >= 0.0
    if not det.any():
        return _DetectionModel(0.0, blocks, [], np.empty(0))
    lp = logps[det]
    m = lp.max()
    w = np.exp(lp - m)
    prob = float(math.exp(m) * w.sum())
    combo_counts = [cs for (cs, _, _), d in zip(combos, det) if d]
    return _DetectionModel(prob, blocks, combo_counts, w / w.sum())


def _sample_detection_window(rng: np.random.Generator, model: _DetectionModel, w: int) -> np.ndarray:
    idx = int(rng.choice(len(model.combo_counts), p=model.cond_probs))
    window = np.empty(w, dtype=np.int64)
    for (a, pos, size), counts in zip(model.blocks, model.combo_counts[idx]):
        syms = _sample_type_window(rng, np.asarray(counts))
        window[pos] = syms
    return window


class _Context:
    """Per-experiment precomputation shared across trials (read-only)."""

    def __init__(self, cfg: SimConfig, codebook: Codebook):
        ch = cfg.channel
        self.a_level = cfg.async_level
        self.rows_cum = np.cumsum(ch.rows, axis=1)
        self.star_cum = np.cumsum(ch.rows[ch.star])
        self.log_rows = _safe_log(ch.rows)
        self.num_outputs = ch.num_outputs
        n = cfg.n
        exact = self.a_level + n - 1 <= EXACT_STREAM_CAP
        if cfg.scheme is Scheme.JOINT:
            self.d_tables = _noise_d_tables(n, ch.rows[ch.star])
            m = cfg.num_messages
            comp = np.array(
                [np.bincount(codebook.codewords[i], minlength=ch.num_inputs) for i in range(m)]
            ) / n
            self.targets = comp[:, :, None] * ch.rows[None, :, :]  # (M, X, Y)
            self.cw_codes = codebook.codewords * ch.num_outputs
            self.trigger = None if exact else _window_trigger_model(ch, n, cfg.alpha)
        elif cfg.scheme is Scheme.TRAINING:
            w = codebook.preamble_len
            self.w = w
            star = ch.rows[ch.star]
            with np.errstate(invalid="ignore"):
                lmap = self.log_rows - _safe_log(star)[None, :]
            # pairs impossible under both hypotheses favor stopping
            lmap = np.where(np.isnan(lmap), math.inf, lmap)
            self.lmap = lmap
            self.preamble = codebook.codewords[0, :w]
            self.detection = None if exact else _detection_model(ch, self.preamble, lmap)


def make_codebook(cfg: SimConfig, rng: np.random.Generator) -> Codebook:
    """Draw the experiment's codebook.

    Joint and genie codebooks are i.i.d. from the generator distribution
    (capacity-achieving by default).  Training codebooks share a preamble
    of length floor(eta*n) whose type tracks the maximizer of the
    conditional equidistant-point value, deterministically perturbed in
    ceil(ln n) spots to break shift coincidences, followed by i.i.d.
    near-capacity symbols.
    """
    ch = cfg.channel
    m, n = cfg.num_messages, cfg.n
    gen = cfg.input_dist or blahut_arimoto(ch).argmax
    cum = np.cumsum(gen.probs)
    if cfg.scheme is not Scheme.TRAINING:
        u = rng.random((m, n))
        cw = np.minimum(np.searchsorted(cum, u.ravel(), side="right"), len(gen) - 1).reshape(m, n)
        return Codebook(cw, gen, 0)

    w = math.floor(cfg.eta * n)
    if w < 1 or w > n:
        raise ValueError("infeasible preamble length")
    p_sync = alpha_bar(ch, GridSpec()).witness["input_dist"]
    counts = np.floor(w * p_sync.probs).astype(np.int64)
    rem = w - counts.sum()
    if rem > 0:
        frac = w * p_sync.probs - counts
        counts[np.argsort(-frac)[:rem]] += 1
    preamble = np.repeat(np.arange(ch.num_inputs), counts)
    star = ch.rows[ch.star]
    div = [kl(Dist(r), Dist(star)) for r in ch.rows]
    x_max = int(np.argmax(div))
    flips = max(1, math.ceil(math.log(max(n, 2))))
    for k in range(flips):
        preamble[min(w - 1, (k * w) // flips)] = x_max
    u = rng.random((m, n - w))
    info = np.minimum(np.searchsorted(cum, u.ravel(), side="right"), len(gen) - 1).reshape(m, n - w)
    cw = np.concatenate([np.tile(preamble, (m, 1)), info], axis=1)
    return Codebook(cw, gen, w)


def _ml_decode(block: np.ndarray, codewords: np.ndarray, log_rows: np.ndarray) -> int:
    """Maximum-likelihood message for an aligned output block; ties and the
    all-impossible case resolve to the lowest index."""
    k = block.size
    if k == 0:
        return 0
    scores = log_rows[codewords[:, :k], block[None, :k]].sum(axis=1)
    return int(np.argmax(scores))


def genie_decoder(window: np.ndarray, codebook: Codebook, channel: Channel) -> int:
    """ML decoding of the exact codeword window (nu revealed)."""
    return _ml_decode(np.asarray(window, dtype=np.int64), codebook.codewords, _safe_log(channel.rows))


class JointDecoder:
    """Reference incremental two-step decoder.

    Feed one output symbol at a time; returns the decoded message at the
    instant it fires, else None.  Decisions depend only on the last n
    outputs, enforced by the bounded window buffer.  The decoding window
    spans n instants starting at the trigger instant; on expiry the
    noise-type scan resumes at the next instant.
    """

    def __init__(self, codebook: Codebook, channel: Channel, alpha: float, mu: float):
        if alpha < 0.0 or mu <= 0.0:
            raise ValueError("alpha must be non-negative and mu positive")
        self.n = codebook.codewords.shape[1]
        self.m = codebook.codewords.shape[0]
        self.alpha = alpha
        self.mu = mu
        self.num_outputs = channel.num_outputs
        self.d_tables = _noise_d_tables(self.n, channel.rows[channel.star])
        comp = np.array(
            [np.bincount(codebook.codewords[i], minlength=channel.num_inputs) for i in range(self.m)]
        ) / self.n
        self.targets = comp[:, :, None] * channel.rows[None, :, :]
        self.cw_codes = codebook.codewords * channel.num_outputs
        self.window = np.full(self.n, -1, dtype=np.int64)
        self.counts = np.zeros(channel.num_outputs, dtype=np.int64)
        self.filled = 0
        self.decode_left = 0

    def feed(self, y: int) -> int | None:
        old = self.window[0]
        self.window[:-1] = self.window[1:]
        self.window[-1] = y
        self.counts[y] += 1
        if self.filled < self.n:
            self.filled += 1
        else:
            self.counts[old] -= 1
        if self.filled < self.n:
            return None
        if self.decode_left == 0:
            d = float(sum(self.d_tables[v][self.counts[v]] for v in range(self.num_outputs)))
            if d >= self.alpha:
                self.decode_left = self.n
        if self.decode_left > 0:
            self.decode_left -= 1
            return self._typical_unique()
        return None

    def _typical_unique(self) -> int | None:
        found = None
        for mm in range(self.m):
            j = np.bincount(
                self.cw_codes[mm] + self.window, minlength=self.targets[mm].size
            ).reshape(self.targets[mm].shape)
            if np.all(np.abs(j / self.n - self.targets[mm]) <= self.mu):
                if found is not None:
                    return None
                found = mm
        return found


class TrainingDecoder:
    """Reference incremental preamble-then-ML decoder.

    The stopping decision at each instant is a function of the last
    floor(eta*n) outputs only; after detection the decoder reads the
    payload length and returns the ML message.
    """

    def __init__(self, codebook: Codebook, channel: Channel):
        if not 0 < codebook.preamble_len < codebook.codewords.shape[1]:
            raise ValueError("training decoder needs 0 < preamble_len < n")
        self.w = codebook.preamble_len
        self.n = codebook.codewords.shape[1]
        self.preamble = codebook.codewords[0, : self.w]
        self.info = codebook.codewords[:, self.w :]
        self.log_rows = _safe_log(channel.rows)
        star = channel.rows[channel.star]
        with np.errstate(invalid="ignore"):
            lmap = self.log_rows - _safe_log(star)[None, :]
        self.lmap = np.where(np.isnan(lmap), math.inf, lmap)
        self.window = np.full(self.w, -1, dtype=np.int64)
        self.filled = 0
        self.detected = False
        self.payload: list[int] = []

    def feed(self, y: int) -> int | None:
        if self.detected:
            self.payload.append(y)
            if len(self.payload) == self.n - self.w:
                return _ml_decode(np.array(self.payload, dtype=np.int64), self.info, self.log_rows)
            return None
        self.window[:-1] = self.window[1:]
        self.window[-1] = y
        if self.filled < self.w:
            self.filled += 1
            return None
        score = float(self.lmap[self.preamble, self.window].sum())
        if math.isnan(score):
            score = math.inf
        if score >= 0.0:
            self.detected = True
        return None


def _joint_scan(cfg, ctx, ybuf: np.ndarray, buf_start: int, t_begin, t_end, stream_end):
    """Scan step-1 windows ending in [t_begin, t_end] over a materialized buffer.

    Episodes (decoding windows) may run past t_end but never past the
    buffer or the stream.  Returns ((decoded, tau), resume_time); exactly
    one of the pair members is meaningful.
    """
    n = cfg.n
    length = ybuf.size
    num_win = length - n + 1
    if num_win <= 0:
        return None, t_end + 1
    d = np.zeros(num_win)
    for v in range(ctx.num_outputs):
        ind = np.concatenate([[0], np.cumsum(ybuf == v)])
        d += ctx.d_tables[v][ind[n:] - ind[:-n]]
    trig = d >= cfg.alpha

    j = t_begin - buf_start - n + 1
    j_end = t_end - buf_start - n + 1
    while j <= j_end:
        nz = np.flatnonzero(trig[j : j_end + 1])
        if nz.size == 0:
            return None, t_end + 1
        j0 = j + int(nz[0])
        last = min(j0 + n - 1, num_win - 1, stream_end - buf_start - n + 1)
        for jj in range(j0, last + 1):
            mhat = _typical_unique_window(ctx, ybuf[jj : jj + n], cfg)
            if mhat is not None:
                return (mhat, buf_start + jj + n - 1), None
        j = j0 + n
    return None, buf_start + j + n - 1


def _typical_unique_window(ctx, window: np.ndarray, cfg) -> int | None:
    found = None
    n, mu = cfg.n, cfg.typicality_mu
    size = ctx.targets.shape[1] * ctx.targets.shape[2]
    for mm in range(cfg.num_messages):
        j = np.bincount(ctx.cw_codes[mm] + window, minlength=size).reshape(ctx.targets[mm].shape)
        if np.all(np.abs(j / n - ctx.targets[mm]) <= mu):
            if found is not None:
                return None
            found = mm
    return found


def _materialize(cfg, ctx, codeword: np.ndarray, rng, t_lo, t_hi, nu) -> np.ndarray:
    """Channel outputs for absolute times t_lo..t_hi, drawn in time order."""
    span = t_hi - t_lo + 1
    u = rng.random(span)
    y = _symbols_from_uniform(ctx.star_cum, u)
    lo = max(t_lo, nu)
    hi = min(t_hi, nu + cfg.n - 1)
    if lo <= hi:
        sl = slice(lo - t_lo, hi - t_lo + 1)
        y[sl] = _row_symbols(ctx.rows_cum, codeword[lo - nu : hi - nu + 1], u[sl])
    return y


def _joint_trial_exact(cfg, cb, ctx, message, rng, nu):
    n = cfg.n
    t_total = ctx.a_level + n - 1
    y = _materialize(cfg, ctx, cb.codewords[message], rng, 1, t_total, nu)
    fire, _ = _joint_scan(cfg, ctx, y, 1, n, t_total, t_total)
    if fire is not None:
        return TrialOutcome(fire[0], fire[1], nu)
    return TrialOutcome(int(rng.integers(0, cfg.num_messages)), t_total, nu)


def _joint_far_phase(cfg, cb, ctx, message, rng, t_from, t_to, stream_end):
    """Geometric skipping across an all-noise stretch of step-1 positions."""
    n = cfg.n
    model = ctx.trigger
    t = t_from
    while t <= t_to:
        remaining = t_to - t + 1
        gap = _geometric(rng, model.prob)
        if gap > _float_or_inf(remaining):
            return None, t_to + 1
        t0 = t + int(gap) - 1
        idx = int(rng.choice(model.cond_probs.size, p=model.cond_probs))
        wsym = _sample_type_window(rng, model.type_counts[idx])
        extra = _symbols_from_uniform(ctx.star_cum, rng.random(n - 1))
        buf = np.concatenate([wsym, extra])
        last_k = min(n - 1, stream_end - t0)
        for k in range(0, last_k + 1):
            mhat = _typical_unique_window(ctx, buf[k : k + n], cfg)
            if mhat is not None:
                return (mhat, t0 + k), None
        t = t0 + n
    return None, t


def _joint_trial_fast(cfg, cb, ctx, message, rng, nu):
    n = cfg.n
    t_total = ctx.a_level + n - 1
    resume = n
    # Far pre-transmission noise: triggers whose whole episode stays in noise.
    far_end = nu - n
    if far_end >= resume:
        fire, resume = _joint_far_phase(cfg, cb, ctx, message, rng, resume, far_end, t_total)
        if fire is not None:
            return TrialOutcome(fire[0], fire[1], nu)
    # Boundary: every window whose episode can touch the codeword.
    tb_begin = max(resume, n)
    tb_end = min(nu + 2 * n - 2, t_total)
    if tb_begin <= tb_end:
        buf_lo = tb_begin - n + 1
        buf_hi = min(tb_end + n - 1, t_total)
        y = _materialize(cfg, ctx, cb.codewords[message], rng, buf_lo, buf_hi, nu)
        fire, resume = _joint_scan(cfg, ctx, y, buf_lo, tb_begin, tb_end, t_total)
        if fire is not None:
            return TrialOutcome(fire[0], fire[1], nu)
    # Far post-transmission noise.
    tc_begin = max(resume, nu + 2 * n - 1)
    if tc_begin <= t_total:
        fire, _ = _joint_far_phase(cfg, cb, ctx, message, rng, tc_begin, t_total, t_total)
        if fire is not None:
            return TrialOutcome(fire[0], fire[1], nu)
    return TrialOutcome(int(rng.integers(0, cfg.num_messages)), t_total, nu)


def _detection_scores(y: np.ndarray, preamble: np.ndarray, lmap: np.ndarray) -> np.ndarray:
    w = preamble.size
    num = y.size - w + 1
    if num <= 0:
        return np.empty(0)
    score = np.zeros(num)
    for i in range(w):
        score = score + lmap[preamble[i]][y[i : i + num]]
    return np.where(np.isnan(score), math.inf, score)


def _training_decode_at(cfg, cb, ctx, rng, t_det, ybuf, buf_start, stream_end, nu):
    """ML decode the payload following a detection at time t_det."""
    n, w = cfg.n, ctx.w
    k = min(n - w, stream_end - t_det)
    lo, hi = t_det + 1, t_det + k
    have_hi = buf_start + ybuf.size - 1
    if hi > have_hi:
        extra = _materialize(cfg, ctx, cb.codewords[0], rng, have_hi + 1, hi, nu) if hi >= have_hi + 1 else np.empty(0, np.int64)
        ybuf = np.concatenate([ybuf, extra])
    block = ybuf[lo - buf_start : hi - buf_start + 1]
    decoded = _ml_decode(block, cb.codewords[:, w:], ctx.log_rows)
    tau = min(t_det + (n - w), stream_end)
    return TrialOutcome(decoded, tau, nu)


def _training_trial_exact(cfg, cb, ctx, message, rng, nu):
    n, w = cfg.n, ctx.w
    t_total = ctx.a_level + n - 1
    y = _materialize(cfg, ctx, cb.codewords[message], rng, 1, t_total, nu)
    scores = _detection_scores(y, ctx.preamble, ctx.lmap)
    det = np.flatnonzero(scores >= 0.0)
    if det.size == 0:
        return TrialOutcome(int(rng.integers(0, cfg.num_messages)), t_total, nu)
    t_det = int(det[0]) + w  # window ends at time index w + j (1-based times)
    return _training_decode_at(cfg, cb, ctx, rng, t_det, y, 1, t_total, nu)


def _training_far_phase(cfg, cb, ctx, message, rng, t_from, t_to, stream_end, nu):
    model = ctx.detection
    t = t_from
    if t > t_to:
        return None
    remaining = t_to - t + 1
    gap = _geometric(rng, model.prob)
    if gap > _float_or_inf(remaining):
        return None
    t_det = t + int(gap) - 1
    window = _sample_detection_window(rng, model, ctx.w)
    return _training_decode_at(cfg, cb, ctx, rng, t_det, window, t_det - ctx.w + 1, stream_end, nu)


def _training_trial_fast(cfg, cb, ctx, message, rng, nu):
    n, w = cfg.n, ctx.w
    t_total = ctx.a_level + n - 1
    # Detections are final: the first one anywhere decides the trial.
    far_end = min(nu - 1 - (n - w), t_total)
    if far_end >= w:
        out = _training_far_phase(cfg, cb, ctx, message, rng, w, far_end, t_total, nu)
        if out is not None:
            return out
    tb_begin = max(w, nu - (n - w))
    tb_end = min(nu + n + w - 2, t_total)
    if tb_begin <= tb_end:
        buf_lo = max(1, tb_begin - w + 1)
        buf_hi = min(tb_end + (n - w), t_total)
        y = _materialize(cfg, ctx, cb.codewords[message], rng, buf_lo, buf_hi, nu)
        scores = _detection_scores(y, ctx.preamble, ctx.lmap)
        lo_idx = tb_begin - (buf_lo + w - 1)
        hi_idx = tb_end - (buf_lo + w - 1)
        det = np.flatnonzero(scores[lo_idx : hi_idx + 1] >= 0.0)
        if det.size > 0:
            t_det = tb_begin + int(det[0])
            return _training_decode_at(cfg, cb, ctx, rng, t_det, y, buf_lo, t_total, nu)
    tc_begin = max(tb_end + 1, nu + n + w - 1)
    if tc_begin <= t_total:
        out = _training_far_phase(cfg, cb, ctx, message, rng, tc_begin, t_total, t_total, nu)
        if out is not None:
            return out
    return TrialOutcome(int(rng.integers(0, cfg.num_messages)), t_total, nu)


def _genie_trial(cfg, cb, ctx, message, rng, nu):
    n = cfg.n
    u = rng.random(n)
    y = _row_symbols(ctx.rows_cum, cb.codewords[message], u)
    decoded = _ml_decode(y, cb.codewords, ctx.log_rows)
    return TrialOutcome(decoded, nu + n - 1, nu)


def run_trial(
    cfg: SimConfig,
    codebook: Codebook,
    message: int,
    rng: np.random.Generator,
    _ctx: _Context | None = None,
) -> TrialOutcome:
    """Simulate one transmission of ``message`` and run the configured decoder.

    Draws nu uniformly on {1..A}; the stopping time is bounded by A+n-1 and
    a decoder that never fires declares a uniformly random message at the
    final instant.
    """
    ctx = _ctx if _ctx is not None else _Context(cfg, codebook)
    nu = _draw_nu(rng, ctx.a_level)
    if cfg.scheme is Scheme.GENIE:
        return _genie_trial(cfg, codebook, ctx, message, rng, nu)
    exact = ctx.a_level + cfg.n - 1 <= EXACT_STREAM_CAP
    if cfg.scheme is Scheme.JOINT:
        fn = _joint_trial_exact if exact else _joint_trial_fast
    else:
        fn = _training_trial_exact if exact else _training_trial_fast
    return fn(cfg, codebook, ctx, message, rng, nu)


def run_experiment(cfg: SimConfig, workers: int = 1) -> SimResult:
    """Run ``cfg.trials`` independent trials per message and aggregate.

    nu is re-drawn each trial, giving an unbiased Monte-Carlo estimate of
    the uniform time average.  Results are bit-identical for any worker count:
    each trial owns an exclusive counter-based stream and an exclusive
    output slot.
    """
    if cfg.scheme is Scheme.TRAINING and cfg.eta == 1.0:
        raise ValueError("eta = 1 leaves no payload; rate measurement undefined")
    codebook = make_codebook(cfg, _stream_rng(cfg.seed, 0, 0))
    ctx = _Context(cfg, codebook)
    m, k = cfg.num_messages, cfg.trials
    err = np.zeros((m, k), dtype=bool)
    fa = np.zeros((m, k), dtype=bool)
    miss = np.zeros((m, k), dtype=bool)
    delay = np.zeros((m, k))

    def one(task):
        mm, kk = task
        out = run_trial(cfg, codebook, mm, _stream_rng(cfg.seed, mm + 1, kk), _ctx=ctx)
        err[mm, kk] = out.decoded != mm
        d = out.tau - out.nu + 1
        delay[mm, kk] = _float_or_inf(d) if d > 0 else 0.0
        fa[mm, kk] = out.tau < out.nu
        miss[mm, kk] = out.tau >= out.nu + 2 * cfg.n

    tasks = [(mm, kk) for mm in range(m) for kk in range(k)]
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one, tasks))
    else:
        for t in tasks:
            one(t)

    per_msg_err = err.mean(axis=1)
    max_err = float(per_msg_err.max())
    mean_delay = float(delay.mean(axis=1).max())
    rate = math.log(m) / mean_delay if mean_delay > 0.0 else math.inf
    return SimResult(
        max_error_rate=max_err,
        avg_error_rate=float(err.mean()),
        mean_reaction_delay=mean_delay,
        empirical_rate=rate,
        false_alarm_rate=float(fa.mean()),
        miss_rate=float(miss.mean()),
        trials_per_message=k,
        ci_halfwidth=1.96 * math.sqrt(max(max_err * (1.0 - max_err), 0.0) / k),
    )
