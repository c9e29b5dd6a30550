"""Command-line front end: ``aquaclean {validate,run,sweep,report}``.

Exit codes: 0 ok, 1 validation or domain failure, 2 unreadable or
malformed input, 3 output could not be written.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import imaging
from .engine import RunResult, run_config
from .world import SCHEMA_VERSION, default_config, load_config, validate_config

log = logging.getLogger("aquaclean")

EXIT_OK, EXIT_INVALID, EXIT_INPUT, EXIT_OUTPUT = 0, 1, 2, 3
DEFAULT_OUT = "aquaclean-out"
TIER_ORDER = ("mec", "cloud", "biosensor")
SUMMARY_COLUMNS = ("point", "value", "mec_p50", "cloud_p50", "biosensor_p50", "makespan")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# helpers

def _read_config(path):
    if path is None:
        return default_config()
    try:
        return load_config(path)
    except (OSError, UnicodeDecodeError) as exc:
        raise CliError(EXIT_INPUT, f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_INPUT, f"{path} is not valid JSON: {exc}") from exc


def _require_valid(cfg):
    diags = validate_config(cfg)
    if diags:
        for d in diags:
            print(d, file=sys.stderr)
        raise CliError(EXIT_INVALID, f"configuration invalid ({len(diags)} problem(s))")


def atomic_write(path, data) -> None:
    """Write ``data`` (str or bytes) to ``path`` through a temp file and rename."""
    path = Path(path)
    raw = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def metrics_json(metrics: dict) -> str:
    return json.dumps(metrics, indent=2, sort_keys=True) + "\n"


def _out_dir(arg) -> Path:
    return Path(arg or os.environ.get("AQUACLEAN_OUT") or DEFAULT_OUT)


def _write_outputs(result: RunResult, out: Path, debug_images: bool = False) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        atomic_write(out / "metrics.json", metrics_json(result.metrics))
        atomic_write(out / "events.csv", result.csv_text())
        if debug_images:
            _dump_debug_images(result, out / "debug")
    except OSError as exc:
        raise CliError(EXIT_OUTPUT, f"cannot write to {out}: {exc}") from exc


def _dump_debug_images(result: RunResult, out: Path) -> None:
    """Dump every pipeline stage for the first resolved object of each class."""
    out.mkdir(parents=True, exist_ok=True)
    world = result.world
    seen = set()
    for r in result.resolutions:
        if r["class_id"] in seen:
            continue
        seen.add(r["class_id"])
        obj = world.objects[r["object"]]
        raw = world.capture(obj)
        stages = imaging.run_pipeline(raw, world.tiers.theta_bg)
        stem = f"obj{obj.object_id:04d}_class{obj.class_id}"
        imaging.write_pnm(out / f"{stem}_0raw.pgm", raw.mosaic)
        imaging.write_pnm(out / f"{stem}_1demosaic.ppm", stages.rgb)
        imaging.write_pnm(out / f"{stem}_2balanced.ppm", stages.balanced)
        imaging.write_pnm(out / f"{stem}_3denoised.ppm", stages.denoised)
        imaging.write_pnm(out / f"{stem}_4mask.pgm", stages.mask.astype(np.float64))
        imaging.write_pnm(out / f"{stem}_5enhanced.ppm", stages.enhanced)


# ---------------------------------------------------------------------------
# parameter paths

def resolve_param(cfg, path: str):
    """Expand a dotted path with ``*`` wildcards into concrete key lists.

    Raises :class:`KeyError` when nothing numeric matches.
    """
    found = []

    def walk(node, parts, trail):
        if not parts:
            if isinstance(node, (int, float)) and not isinstance(node, bool):
                found.append(trail)
            return
        head, rest = parts[0], parts[1:]
        if isinstance(node, dict):
            keys = sorted(node) if head == "*" else [head] if head in node else []
            for k in keys:
                walk(node[k], rest, trail + [k])
        elif isinstance(node, list):
            if head == "*":
                idx = range(len(node))
            elif head.isdigit() and int(head) < len(node):
                idx = [int(head)]
            else:
                idx = []
            for i in idx:
                walk(node[i], rest, trail + [i])

    walk(cfg, path.split("."), [])
    if not found:
        raise KeyError(path)
    return found


def set_param(cfg, path: str, value) -> dict:
    """Return a copy of ``cfg`` with every field matched by ``path`` set to ``value``."""
    new = copy.deepcopy(cfg)
    for keys in resolve_param(new, path):
        node = new
        for k in keys[:-1]:
            node = node[k]
        old = node[keys[-1]]
        node[keys[-1]] = int(round(value)) if isinstance(old, int) else float(value)
    return new


def _sweep_point(args):
    i, value, cfg = args
    return i, value, run_config(cfg)


# ---------------------------------------------------------------------------
# subcommands

def cmd_validate(ns) -> int:
    cfg = _read_config(ns.config)
    diags = validate_config(cfg)
    for d in diags:
        print(d)
    if diags:
        return EXIT_INVALID
    print("ok")
    return EXIT_OK


def cmd_run(ns) -> int:
    cfg = _read_config(ns.config)
    if ns.seed is not None:
        cfg["seed"] = ns.seed
    _require_valid(cfg)
    result = run_config(cfg)
    out = _out_dir(ns.out)
    _write_outputs(result, out, ns.debug_images)
    m = result.metrics
    print(f"{m['resolutions']} resolutions, {m['collected_count']} collected, "
          f"makespan {m['makespan']:.1f} s -> {out}")
    return EXIT_OK


def cmd_sweep(ns) -> int:
    cfg = _read_config(ns.config)
    if ns.seed is not None:
        cfg["seed"] = ns.seed
    try:
        resolve_param(cfg, ns.param)
    except KeyError:
        raise CliError(EXIT_INVALID, f"parameter {ns.param!r} does not address a numeric field")
    if ns.steps < 1:
        raise CliError(EXIT_INVALID, "--steps must be >= 1")
    values = [float(v) for v in np.linspace(ns.start, ns.stop, ns.steps)]
    points = []
    for i, v in enumerate(values):
        pcfg = set_param(cfg, ns.param, v)
        diags = validate_config(pcfg)
        if diags:
            for d in diags:
                print(f"point {i} ({ns.param}={v!r}): {d}", file=sys.stderr)
            raise CliError(EXIT_INVALID, f"sweep point {i} is invalid")
        points.append((i, v, pcfg))

    if ns.jobs > 1:
        with ProcessPoolExecutor(max_workers=ns.jobs) as pool:
            results = list(pool.map(_sweep_point, points))
    else:
        results = [_sweep_point(p) for p in points]

    out = _out_dir(ns.out)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for i, v, res in results:
        _write_outputs(res, out / f"point_{i:03d}", ns.debug_images)
        lat = res.metrics["latency"]
        w.writerow([i, repr(v)] + [_blank(lat[t]["p50"]) for t in ("mec", "cloud", "biosensor")]
                   + [repr(res.metrics["makespan"])])
    try:
        atomic_write(out / "summary.csv", buf.getvalue())
    except OSError as exc:
        raise CliError(EXIT_OUTPUT, f"cannot write summary: {exc}") from exc
    print(f"{len(results)} point(s) -> {out}")
    return EXIT_OK


def _blank(v):
    return "" if v is None else repr(v)


def _fmt_s(v):
    return "-" if v is None else f"{v:.6g}"


def _fmt_pct(v):
    return "-" if v is None else f"{100.0 * v:.2f}%"


def format_report(path: str, m: dict) -> str:
    lines = [f"== {path} (seed {m.get('seed')})"]
    total = m["resolutions"]
    lines.append(f"resolutions: {total}")
    lines.append("tier hits:")
    tiers = [t for t in TIER_ORDER if t in m["tier_hits"]]
    for tier in tiers:
        n = m["tier_hits"][tier]
        share = n / total if total else None
        lines.append(f"  {tier:<10} {n:>6}  {_fmt_pct(share)}")
    lines.append("latency (s):         p50         p95         max")
    for tier in tiers:
        p = m["latency"][tier]
        lines.append(f"  {tier:<10} {_fmt_s(p['p50']):>11} {_fmt_s(p['p95']):>11} {_fmt_s(p['max']):>11}")
    lines.append("waste:")
    lines.append(f"  collected items     {m['collected_count']}")
    lines.append(f"  collected gravity   {m['collected_gravity']:.6g} N (bound {m['capacity_bound']:.6g} N)")
    lines.append(f"  left in place       {m['left_count']} ({m['left_biodegradable']} biodegradable)")
    lines.append(f"  skipped / remaining {m['skipped_count']} / {m['remaining_count']}")
    acc = m["accuracy"]
    lines.append("accuracy:")
    lines.append(f"  decisions                   {_fmt_pct(acc['decision'])}")
    lines.append(f"  collected non-biodegradable {_fmt_pct(acc['collected_non_biodegradable'])}")
    lines.append(f"  left biodegradable          {_fmt_pct(acc['left_biodegradable'])}")
    lines.append(f"makespan: {m['makespan']:.6g} s (phase 1: {m['phase1_duration']:.6g} s)")
    return "\n".join(lines)


def cmd_report(ns) -> int:
    if not ns.files:
        raise CliError(EXIT_INVALID, "report needs at least one metrics file")
    docs = []
    for path in ns.files:
        try:
            with open(path, encoding="utf-8") as fh:
                m = json.load(fh)
        except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_INPUT, f"cannot read {path}: {exc}") from exc
        version = m.get("schema_version") if isinstance(m, dict) else None
        if version != SCHEMA_VERSION:
            raise CliError(EXIT_INPUT, f"{path}: schema_version {version!r}, expected {SCHEMA_VERSION}")
        docs.append((path, m))
    try:
        print("\n\n".join(format_report(p, m) for p, m in docs))
    except (KeyError, TypeError) as exc:
        raise CliError(EXIT_INPUT, f"malformed metrics document: missing {exc}") from exc
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for progress, -vv for per-event debug output")

    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("--config", metavar="PATH", help="scenario JSON (default: shipped scenario)")
    scen.add_argument("--seed", type=int, metavar="N", help="override the scenario seed")

    outp = argparse.ArgumentParser(add_help=False)
    outp.add_argument("--out", metavar="DIR", help=f"output directory (default: $AQUACLEAN_OUT or {DEFAULT_OUT})")
    outp.add_argument("--debug-images", action="store_true", help="dump pipeline stages as PGM/PPM files")

    p = argparse.ArgumentParser(prog="aquaclean", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", parents=[common], help="check a scenario file")
    v.add_argument("--config", metavar="PATH")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", parents=[common, scen, outp], help="run one scenario")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common, scen, outp], help="run a one-parameter sweep")
    s.add_argument("--param", required=True, metavar="NAME",
                   help="dotted config path; '*' matches every list item or key")
    s.add_argument("--from", dest="start", type=float, required=True, metavar="A")
    s.add_argument("--to", dest="stop", type=float, required=True, metavar="B")
    s.add_argument("--steps", type=int, required=True, metavar="K")
    s.add_argument("--jobs", type=int, default=1, metavar="J", help="worker processes")
    s.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", parents=[common], help="summarize metrics files")
    rep.add_argument("files", nargs="*", metavar="METRICS")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(ns.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return ns.func(ns)
    except CliError as exc:
        print(f"aquaclean: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
