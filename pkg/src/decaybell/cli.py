"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 data or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import chsh, hyperon, kaon, qkd
from .errors import DecayBellError

EXIT_USAGE = 2
EXIT_DATA = 3

OSCILLATION_COLUMNS = ("t", "p_K0", "p_K0bar", "p_decayed")
SCAN_COLUMNS = ("t1", "t2", "t3", "t4", "S")


class UsageError(Exception):
    pass


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# --- subcommands -------------------------------------------------------------


def cmd_kaon_oscillate(args) -> int:
    c = kaon.load_constants(args.constants)
    if not (args.t_max > 0) or args.steps < 2:
        raise UsageError("need --t-max > 0 and --steps >= 2")
    ts = np.linspace(0.0, args.t_max, args.steps)
    rows = []
    for t in ts:
        rows.append((t, *kaon.oscillation_probabilities(args.initial, t, c)))
    header = list(OSCILLATION_COLUMNS)
    if args.beta_gamma is not None:
        unit = _time_unit(args.constants)
        rows = [(*r, kaon.distance_from_time(r[0], args.beta_gamma, unit)) for r in rows]
        header.append("distance_m")
    if args.format == "json":
        _emit(_json_text([dict(zip(header, r)) for r in rows]), args.out)
    else:
        _emit(_csv_text(header, rows), args.out)
    return 0


def _time_unit(source: str) -> float:
    if source in kaon.PRESETS:
        meta = kaon.load_preset_metadata(source)
    else:
        meta = json.loads(Path(source).read_text())
    return float(meta.get("time_unit_seconds", 1.0))


def _parse_questions(text: str) -> tuple:
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) == 1:
        parts = parts * 4
    if len(parts) != 4:
        raise UsageError("--questions takes one flavour or four comma-separated flavours (n, m, n', m')")
    try:
        return tuple(kaon.Flavor.parse(p) for p in parts)
    except DecayBellError as exc:
        raise UsageError(str(exc)) from None


def scan_summary(result: chsh.KaonScanResult, c: kaon.KaonConstants) -> dict:
    return {
        "max_S": result.max_S,
        "s_at_max": result.s_at_max,
        "argmax": dict(zip(SCAN_COLUMNS[:4], result.argmax)),
        "coarse_max_S": result.coarse_max_S,
        "coarse_argmax": dict(zip(SCAN_COLUMNS[:4], result.coarse_argmax)),
        "classical_bound": chsh.CLASSICAL_BOUND,
        "quantum_bound": chsh.QUANTUM_BOUND,
        "violation": result.max_S > chsh.CLASSICAL_BOUND,
        "questions": [str(f) for f in result.flavors],
        "grid": result.grid.to_dict(),
        "refined": result.refined,
        "min_separation": result.min_separation,
        "constants": c.to_dict(),
        "constants_hash": c.digest(),
    }


def scan_rows(result: chsh.KaonScanResult, top: int | None):
    ts = result.grid.values()
    flat = result.table.reshape(-1)
    valid = np.flatnonzero(~np.isnan(flat))
    if top is not None:
        # stable sort keeps grid (lexicographic) order among equal |S|
        order = np.argsort(-np.abs(flat[valid]), kind="stable")[:top]
        valid = valid[order]
    idx = np.unravel_index(valid, result.table.shape)
    for i, j, k, l, s in zip(*idx, flat[valid]):
        yield ts[i], ts[j], ts[k], ts[l], s


def cmd_kaon_chsh(args) -> int:
    c = kaon.load_constants(args.constants)
    flavors = _parse_questions(args.questions)
    try:
        if args.t_max is None:
            base = chsh.TimeGrid.default(c, args.grid_points)
            grid = chsh.TimeGrid(args.t_min, base.t_max, args.grid_points)
        else:
            grid = chsh.TimeGrid(args.t_min, args.t_max, args.grid_points)
    except DecayBellError as exc:
        raise UsageError(f"bad grid: {exc}") from None
    if args.min_separation is not None and not args.min_separation >= 0:
        raise UsageError("--min-separation must be non-negative")
    result = chsh.kaon_chsh_scan(
        c,
        flavors,
        grid,
        refine=not args.no_refine,
        distinct_settings=not args.allow_degenerate,
        min_separation=args.min_separation,
        outcome_sign=-1.0 if args.flip_outcomes else 1.0,
    )
    summary = scan_summary(result, c)
    if args.out:
        top = None if args.table == "full" else args.top
        _emit(_csv_text(SCAN_COLUMNS, scan_rows(result, top)), args.out)
    if args.summary and args.summary != "-":
        _emit(_json_text(summary), args.summary)
    elif args.summary == "-" or not args.out:
        sys.stdout.write(_json_text(summary))
    return 0


def _hyperon_alphas(args) -> tuple[float, float]:
    if args.alpha_product is not None:
        p = args.alpha_product
        if abs(p) > 1:
            raise UsageError("--alpha-product must lie in [-1, 1]")
        root = math.sqrt(abs(p))
        return root, math.copysign(root, p) if p != 0 else 0.0
    source = args.hyperon_config
    try:
        if source:
            data = json.loads(Path(source).read_text())
        else:
            from importlib import resources

            data = json.loads(resources.files("decaybell").joinpath("presets").joinpath("hyperon.json").read_text())
        return float(data["alpha_L"]), float(data["alpha_Lbar"])
    except (OSError, KeyError, ValueError) as exc:
        raise DecayBellError(f"cannot read hyperon config: {exc}") from None


def cmd_hyperon(args) -> int:
    if args.from_events:
        batch = hyperon.read_events(args.from_events)
        a_l = a_b = None
    else:
        if args.count < 1:
            raise UsageError("--count must be at least 1")
        a_l, a_b = _hyperon_alphas(args)
        batch = hyperon.sample_events(a_l, a_b, args.count, seed=args.seed, workers=args.workers)
    if args.events:
        hyperon.write_events(batch, args.events)
    report = hyperon.witness_from_events(batch)
    out = report.to_dict()
    out.update({"seed": batch.seed, "alpha_product": batch.alpha_product, "expected_witness": None})
    if batch.alpha_product is not None:
        out["expected_witness"] = 1.0 / 3.0 - batch.alpha_product
    if a_l is not None:
        max_s, violated = hyperon.hyperon_chsh_bound(a_l, a_b)
        out["chsh_bound"] = {"max_S": max_s, "violated": violated}
    _emit(_json_text(out), args.out)
    return 0


def _parse_vector(text: str) -> np.ndarray:
    try:
        v = np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise UsageError(f"cannot parse direction {text!r}") from None
    if v.size != 3 or not np.linalg.norm(v) > 0:
        raise UsageError("direction must be three comma-separated numbers, not all zero")
    return v / np.linalg.norm(v)


def cmd_qkd(args) -> int:
    if args.pairs < 1:
        raise UsageError("--pairs must be at least 1")
    if args.eve == "none":
        eve = qkd.Eavesdropper()
    elif args.eve == "intercept-random":
        eve = qkd.Eavesdropper("intercept-resend", None, args.intercept_probability)
    else:
        if not args.eve_direction:
            raise UsageError("--eve intercept-fixed needs --eve-direction x,y,z")
        eve = qkd.Eavesdropper("intercept-resend", _parse_vector(args.eve_direction), args.intercept_probability)
    cfg = qkd.ProtocolConfig(args.pairs, seed=args.seed, eve=eve)
    transcript, _, _, report = qkd.run_session(cfg, workers=args.workers)
    if args.transcript:
        transcript.write_csv(args.transcript)
    _emit(_json_text(qkd.session_report_json(cfg, report)), args.out)
    return 0


def cmd_constants(args) -> int:
    c = kaon.load_constants(args.constants)
    out = c.to_dict()
    out["width_ratio"] = c.width_ratio if math.isfinite(c.width_ratio) else None
    out["constants_hash"] = c.digest()
    out["source"] = args.constants
    _emit(_json_text(out), args.out)
    return 0


# --- parser ------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--constants", default="physical",
                        help="bundled preset (physical, cp-conserving, no-decay) or path to a constants JSON file")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--workers", type=int, default=1, help="threads for Monte Carlo; results do not depend on it")

    p = _Parser(prog="decaybell", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("kaon-oscillate", parents=[common], help="strangeness oscillation table")
    s.add_argument("--t-max", type=float, default=20.0)
    s.add_argument("--steps", type=int, default=201)
    s.add_argument("--initial", type=kaon.Flavor.parse, default=kaon.Flavor.K0)
    s.add_argument("--beta-gamma", type=float, help="add a lab-distance column for this beta*gamma")
    s.set_defaults(func=cmd_kaon_oscillate)

    s = sub.add_parser("kaon-chsh", parents=[common], help="CHSH scan over active-measurement times")
    s.add_argument("--questions", default="K0bar", help="flavour asked at n,m,n',m' (one value applies to all four)")
    s.add_argument("--grid-points", type=int, default=40)
    s.add_argument("--t-min", type=float, default=0.0)
    s.add_argument("--t-max", type=float, help="default 4/gamma_S, or one oscillation period without decay")
    s.add_argument("--no-refine", action="store_true")
    s.add_argument("--allow-degenerate", action="store_true", help="include tuples where a party repeats a setting")
    s.add_argument("--min-separation", type=float,
                   help="smallest time gap between one party's two same-flavour settings (default: one grid step)")
    s.add_argument("--flip-outcomes", action="store_true", help="map yes to -1 on one side (flips the sign of E)")
    s.add_argument("--table", choices=("top", "full"), default="top")
    s.add_argument("--top", type=int, default=1000, help="rows written with --table top, ordered by |S|")
    s.add_argument("--summary", help="summary JSON path ('-' for stdout)")
    s.set_defaults(func=cmd_kaon_chsh)

    s = sub.add_parser("hyperon", parents=[common], help="hyperon-pair events and entanglement witness")
    s.add_argument("--count", type=int, default=1_000_000)
    s.add_argument("--alpha-product", type=float, help="alpha_L * alpha_Lbar; overrides --hyperon-config")
    s.add_argument("--hyperon-config", help="JSON with alpha_L and alpha_Lbar (default: bundled, product 0.46)")
    s.add_argument("--events", help="write sampled events to this CSV")
    s.add_argument("--from-events", help="read events from this CSV instead of sampling")
    s.set_defaults(func=cmd_hyperon)

    s = sub.add_parser("qkd", parents=[common], help="entanglement-based key distribution session")
    s.add_argument("--pairs", type=int, default=100_000)
    s.add_argument("--eve", choices=("none", "intercept-random", "intercept-fixed"), default="none")
    s.add_argument("--eve-direction")
    s.add_argument("--intercept-probability", type=float, default=1.0)
    s.add_argument("--transcript", help="write the round transcript CSV here")
    s.set_defaults(func=cmd_qkd)

    s = sub.add_parser("constants", parents=[common], help="print the active constants")
    s.set_defaults(func=cmd_constants)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        parser.error("--workers must be at least 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"decaybell: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DecayBellError, OSError) as exc:
        print(f"decaybell: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
