"""Command-line front end.

Subcommands:

* ``channels list`` / ``channels validate FILE`` -- bundled channels and
  channel-file validation.
* ``bounds FILE --rates ...`` -- bound tables and sweeps, optional CSV.
* ``simulate FILE --scheme ...`` -- one Monte-Carlo experiment, JSON out.

Exit codes: 0 ok, 2 malformed input file, 3 infeasible rate, 4 flag
conflict.  Channel files are JSON (schema_version 1) with probabilities as
numbers or decimal strings.  The CSV schema is fixed:
``rate,alpha_lower,alpha_upper,train_lower,train_upper,eta`` with ``inf``
spelled literally.  ASYNC_CAP_THREADS caps worker threads (0 = auto).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import re
import sys
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import bounds as bnd
from . import sim as simulation
from .prob import Channel, Dist, blahut_arimoto

SCHEMA_VERSION = 1
CSV_HEADER = ["rate", "alpha_lower", "alpha_upper", "train_lower", "train_upper", "eta"]

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RATE = 3
EXIT_FLAGS = 4


class ChannelFileError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelFile:
    """Parsed channel description; rows validate into a Channel."""

    name: str
    input_alphabet: list[str]
    output_alphabet: list[str]
    star: str
    channel: Channel


def _parse_prob(value, where: str) -> float:
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            raise ChannelFileError(f"{where}: not a probability: {value!r}") from None
    raise ChannelFileError(f"{where}: not a probability: {value!r}")


def parse_channel_dict(doc: dict, origin: str = "<dict>") -> ChannelFile:
    for key in ("name", "input_alphabet", "output_alphabet", "star", "rows"):
        if key not in doc:
            raise ChannelFileError(f"{origin}: missing field {key!r}")
    inputs = [str(s) for s in doc["input_alphabet"]]
    outputs = [str(s) for s in doc["output_alphabet"]]
    star_label = str(doc["star"])
    if star_label not in inputs:
        raise ChannelFileError(f"{origin}: star label {star_label!r} not in input alphabet")
    rows_raw = doc["rows"]
    if len(rows_raw) != len(inputs):
        raise ChannelFileError(f"{origin}: {len(rows_raw)} rows for {len(inputs)} inputs")
    rows = []
    for i, row in enumerate(rows_raw):
        if len(row) != len(outputs):
            raise ChannelFileError(f"{origin}: row {i} has {len(row)} entries, expected {len(outputs)}")
        vals = [_parse_prob(v, f"{origin}: row {i}") for v in row]
        total = sum(vals)
        if abs(total - 1.0) > 1e-6:
            raise ChannelFileError(f"{origin}: row {i} sums to {total}, expected 1")
        rows.append(vals)
    try:
        channel = Channel(np.array(rows), star=inputs.index(star_label))
    except ValueError as exc:
        raise ChannelFileError(f"{origin}: {exc}") from None
    return ChannelFile(str(doc["name"]), inputs, outputs, star_label, channel)


def load_channel_file(path: str) -> ChannelFile:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ChannelFileError(f"{path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ChannelFileError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ChannelFileError(f"{path}: expected a JSON object")
    return parse_channel_dict(doc, origin=path)


def bundled_channel_names() -> list[str]:
    pkg = resources.files("asynccap").joinpath("data")
    return sorted(p.name[: -len(".json")] for p in pkg.iterdir() if p.name.endswith(".json"))


def load_bundled_channel(name: str) -> ChannelFile:
    pkg = resources.files("asynccap").joinpath("data").joinpath(f"{name}.json")
    doc = json.loads(pkg.read_text())
    return parse_channel_dict(doc, origin=f"bundled:{name}")


def _resolve_channel(token: str) -> ChannelFile:
    if os.path.exists(token):
        return load_channel_file(token)
    base = token[: -len(".json")] if token.endswith(".json") else token
    if base in bundled_channel_names():
        return load_bundled_channel(base)
    raise ChannelFileError(f"{token}: no such file or bundled channel")


_RATE_TOKEN = re.compile(r"^(?:(\d*\.?\d+(?:[eE][-+]?\d+)?)\s*\*?\s*)?C$")


def _parse_rates(tokens: list[str], capacity: float) -> list[float]:
    rates = []
    for tok in tokens:
        tok = tok.strip()
        m = _RATE_TOKEN.match(tok)
        if m:
            scale = float(m.group(1)) if m.group(1) else 1.0
            rates.append(scale * capacity)
            continue
        try:
            rates.append(float(tok))
        except ValueError:
            raise ValueError(f"bad rate token {tok!r}") from None
    return rates


def _workers() -> int:
    raw = os.environ.get("ASYNC_CAP_THREADS", "1")
    try:
        val = int(raw)
    except ValueError:
        return 1
    if val == 0:
        return os.cpu_count() or 1
    return max(1, val)


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf"
    if math.isnan(x):
        return "nan"
    return f"{x:.6f}"


def cmd_channels(args) -> int:
    if args.action == "list":
        for name in bundled_channel_names():
            cf = load_bundled_channel(name)
            print(f"{name}: inputs {cf.input_alphabet}, outputs {cf.output_alphabet}, star {cf.star!r}")
        return EXIT_OK
    try:
        cf = _resolve_channel(args.file)
    except ChannelFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    cap = blahut_arimoto(cf.channel).capacity
    st = bnd.sync_threshold(cf.channel)
    print(f"{cf.name}: valid")
    print(f"capacity = {_fmt(cap)} nats")
    print(f"sync_threshold = {_fmt(st)}")
    return EXIT_OK


def cmd_bounds(args) -> int:
    try:
        cf = _resolve_channel(args.channel)
    except ChannelFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    q = cf.channel
    grid = bnd.GridSpec(
        simplex_step=args.grid_step, delta_step=args.delta_step, refine_rounds=args.refine
    )
    cap = blahut_arimoto(q).capacity
    if args.rates:
        try:
            rates = _parse_rates(args.rates.split(","), cap)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
    else:
        k = args.rate_grid
        rates = [cap * (i + 1) / k for i in range(k)]
    for r in rates:
        if r <= 0.0 or r > cap + 1e-9:
            print(f"error: rate {r} outside (0, C] with C = {cap}", file=sys.stderr)
            return EXIT_RATE
    result = bnd.sweep(q, rates, grid, workers=_workers())
    print(f"channel = {cf.name}")
    print(f"C = {_fmt(result.capacity)}")
    print(f"alpha0 = {_fmt(result.sync_threshold)}")
    print(f"m1 = {_fmt(result.m1)}")
    print(f"m2 = {_fmt(result.m2)}")
    print(f"discontinuous_at_capacity = {result.discontinuous_at_capacity}")
    print(f"discontinuous_at_zero = {result.discontinuous_at_zero}")
    print(",".join(CSV_HEADER))
    for row in result.rows:
        if row.status != "ok":
            print(f"# rate {row.rate}: {row.status}")
            continue
        print(
            ",".join(
                _fmt(v)
                for v in (row.rate, row.alpha_lower, row.alpha_upper, row.train_lower, row.train_upper, row.eta)
            )
        )
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for row in result.rows:
                if row.status != "ok":
                    continue
                writer.writerow(
                    str(v)
                    for v in (row.rate, row.alpha_lower, row.alpha_upper, row.train_lower, row.train_upper, row.eta)
                )
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        cf = _resolve_channel(args.channel)
    except ChannelFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        scheme = simulation.Scheme(args.scheme)
    except ValueError:
        print(f"error: unknown scheme {args.scheme!r}", file=sys.stderr)
        return EXIT_FLAGS
    if scheme is simulation.Scheme.TRAINING and args.eta is None:
        print("error: --eta is required with --scheme training", file=sys.stderr)
        return EXIT_FLAGS
    if scheme is not simulation.Scheme.TRAINING and args.eta is not None:
        print("error: --eta is only valid with --scheme training", file=sys.stderr)
        return EXIT_FLAGS
    try:
        cfg = simulation.SimConfig(
            channel=cf.channel,
            n=args.n,
            alpha=args.alpha,
            num_messages=args.messages,
            scheme=scheme,
            typicality_mu=args.mu,
            eta=args.eta,
            trials=args.trials,
            seed=args.seed,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FLAGS
    result = simulation.run_experiment(cfg, workers=_workers())
    doc = {
        "schema_version": SCHEMA_VERSION,
        "channel": cf.name,
        "config": {
            "scheme": scheme.value,
            "n": args.n,
            "alpha": args.alpha,
            "num_messages": args.messages,
            "typicality_mu": args.mu,
            "eta": args.eta,
            "trials": args.trials,
            "seed": args.seed,
        },
        "result": result.to_dict(),
    }
    print(json.dumps(doc, indent=2, sort_keys=True))
    if args.csv:
        fields = ["channel", "scheme", "n", "alpha", "num_messages", "eta", "trials", "seed"]
        row = [cf.name, scheme.value, args.n, args.alpha, args.messages, args.eta, args.trials, args.seed]
        metrics = result.to_dict()
        exists = os.path.exists(args.csv)
        with open(args.csv, "a", newline="") as fh:
            writer = csv.writer(fh)
            if not exists:
                writer.writerow(fields + list(metrics))
            writer.writerow([str(v) for v in row] + [str(v) for v in metrics.values()])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asynccap",
        description="Asynchronous-channel capacity bounds and decoder simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ch = sub.add_parser("channels", help="list bundled channels or validate a file")
    p_ch.add_argument("action", choices=["list", "validate"])
    p_ch.add_argument("file", nargs="?", help="channel file (validate)")
    p_ch.set_defaults(func=cmd_channels)

    p_b = sub.add_parser("bounds", help="evaluate bound curves over rates")
    p_b.add_argument("channel", help="channel file or bundled name")
    p_b.add_argument("--rates", help="comma list; accepts C and scaled tokens like 0.9C")
    p_b.add_argument("--rate-grid", type=int, default=25, help="number of rates on (0, C]")
    p_b.add_argument("--grid-step", type=float, default=0.01)
    p_b.add_argument("--delta-step", type=float, default=0.02)
    p_b.add_argument("--refine", type=int, default=2)
    p_b.add_argument("--csv", help="write rows to this CSV file")
    p_b.set_defaults(func=cmd_bounds)

    p_s = sub.add_parser("simulate", help="run a Monte-Carlo experiment")
    p_s.add_argument("channel", help="channel file or bundled name")
    p_s.add_argument("--scheme", required=True, help="joint | training | genie")
    p_s.add_argument("--n", type=int, required=True)
    p_s.add_argument("--alpha", type=float, required=True)
    p_s.add_argument("--M", dest="messages", type=int, required=True)
    p_s.add_argument("--trials", type=int, required=True)
    p_s.add_argument("--seed", type=int, default=0)
    p_s.add_argument("--mu", type=float, default=0.05)
    p_s.add_argument("--eta", type=float)
    p_s.add_argument("--csv", help="append a result row to this CSV file")
    p_s.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "channels" and args.action == "validate" and not args.file:
        print("error: validate requires a file", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except bnd.InfeasibleRateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RATE
    except bnd.GridResolutionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RATE


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
