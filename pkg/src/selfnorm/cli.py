"""Command-line experiment runner.

Each command reads a JSON config, runs one experiment and writes CSV tables
(and, for ratio-type commands, an SVG plot) into the output directory::

    selfnorm ratio --config ratio.json --out results/
    selfnorm coverage --config cov.json --data matrix.csv --out results/

Exit codes: 0 success, 1 oracle gate failed, 2 bad config, 3 I/O error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, blocks, inference, stats
from .approx import TailPoint, ValidityConfig, normal_sf, tail_approx
from .errors import SelfNormError
from .montecarlo import (
    coverage_experiment, enumerate_exact, estimate_tail, make_statistic, scheme_of,
    default_batch_size,
)
from .processes import (
    ProcessSpec, RngStream, aggregated_rho, analytic_moments, analytic_rho, gen, gen_batch,
    iid_moments,
)

EXIT_OK, EXIT_GATE, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
SEED_ENV = "SELFNORM_SEED"
WORKERS_ENV = "SELFNORM_WORKERS"
U64_MAX = 2**64 - 1

# ---------------------------------------------------------------------------
# config schemas

_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}
_process = {
    "type": "object",
    "properties": {
        "family": {"type": "string"},
        "nu": _num, "beta": _num, "theta": _num, "a": _num,
        "m": _pos_int, "burn_in": {"type": "integer", "minimum": 0},
        "innovation": {"$ref": "#/$defs/process"},
        "atoms": {"type": "array", "items": _num, "minItems": 1},
        "probs": {"type": "array", "items": _num, "minItems": 1},
    },
    "required": ["family"],
    "additionalProperties": False,
}
_statistic = {
    "type": "object",
    "properties": {
        "name": {"enum": ["self_normalized", "student_t", "standardized_sum", "sn_winsorized",
                          "studentized_winsorized", "sn_trimmed"]},
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "mu": _num,
        "sigma": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["name"],
    "additionalProperties": False,
}
_grid = {"type": "array", "items": _num, "minItems": 1}
_common = {
    "seed": {"type": "integer", "minimum": 0, "maximum": U64_MAX},
    "workers": _pos_int,
    "out": {"type": "string"},
    "conf": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    "plot": {"type": "boolean"},
    "batch_size": _pos_int,
}


def _schema(props: dict, required: list) -> dict:
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "$defs": {"process": _process},
        "type": "object",
        "properties": {**_common, **props},
        "required": ["seed", *required],
        "additionalProperties": False,
    }


SCHEMAS = {
    "ratio": _schema({
        "process": {"$ref": "#/$defs/process"}, "n": _pos_int, "reps": _pos_int, "xs": _grid,
        "statistic": _statistic,
        "validity": {"type": "object", "properties": {"c1": _num, "c0": _num},
                     "additionalProperties": False},
    }, ["process", "n", "reps", "xs", "statistic"]),
    "blocks": _schema({
        "process": {"$ref": "#/$defs/process"}, "n": _pos_int, "reps": _pos_int, "xs": _grid,
        "scheme": {"enum": ["one_dep", "mixing", "gmc"]},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "tau_mix": {"type": "number", "exclusiveMinimum": 0},
        "aggregate_m": _pos_int,
        "rho": {"type": ["number", "null"]},
    }, ["process", "n", "reps", "xs", "scheme"]),
    "coverage": _schema({
        "process": {"$ref": "#/$defs/process"},
        "processes": {"type": "array", "items": {"$ref": "#/$defs/process"}, "minItems": 1},
        "p": _pos_int, "n": {"type": "integer", "minimum": 2}, "reps": _pos_int,
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "tau": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "mu": {"oneOf": [_num, {"type": "array", "items": _num}]},
    }, ["alpha"]),
    "oracle": _schema({
        "atoms": {"type": "array", "items": _num, "minItems": 1},
        "probs": {"type": "array", "items": _num, "minItems": 1},
        "ns": {"type": "array", "items": _pos_int, "minItems": 1},
        "xs": _grid, "reps": _pos_int,
        "statistic": _statistic,
    }, ["atoms", "probs", "ns", "xs", "reps"]),
    "estimators": _schema({
        "process": {"$ref": "#/$defs/process"}, "n": _pos_int, "reps": _pos_int,
        "tau": {"type": ["number", "null"], "exclusiveMinimum": 0},
    }, ["process", "n", "reps"]),
}


class ConfigError(Exception):
    pass


def load_config(command: str, path, seed=None, workers=None) -> dict:
    """Read and validate a config; CLI flags beat environment variables beat the file."""
    try:
        text = Path(path).read_text()
    except OSError:
        raise
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    for key, env, value in (("seed", SEED_ENV, seed), ("workers", WORKERS_ENV, workers)):
        if value is None and os.environ.get(env):
            try:
                value = int(os.environ[env], 0)
            except ValueError:
                raise ConfigError(f"{env} is not an integer") from None
        if value is not None:
            cfg[key] = value
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {where}: {exc.message}") from None
    return cfg


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical config, ignoring settings that cannot change results."""
    core = {k: v for k, v in cfg.items() if k not in ("workers", "out", "plot")}
    blob = json.dumps(core, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# output

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return "" if v is None else str(v)


def write_csv(path: Path, cfg: dict, header, rows) -> None:
    """Metadata comment line, header, then rows; CRLF line ends and minimal quoting."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# selfnorm {__version__} config_sha256={config_hash(cfg)} seed={cfg['seed']}\r\n")
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


class _Counter:
    """Replication counter on stderr."""

    def __init__(self, reps: int, batch: int, label: str):
        self.reps, self.batch, self.label = reps, batch, label

    def __call__(self, done: int, total: int):
        count = self.reps if done == total else done * self.batch
        end = "\n" if done == total else ""
        print(f"\r{self.label}: {count}/{self.reps} replications", end=end, file=sys.stderr, flush=True)


def _spec(d: dict) -> ProcessSpec:
    return ProcessSpec.from_dict(d)


def _stat_params(d: dict) -> dict:
    return {k: v for k, v in d.items() if k != "name"}


def _plot(cfg, out: Path, name: str, xs, rows, title: str):
    if not cfg.get("plot", True):
        return
    from .plotting import ratio_figure

    col = list(zip(*rows))
    ratio_figure(out / name, xs, {"corrected": col[8], "uncorrected": col[7]},
                 lo=np.asarray(col[2]) / np.asarray(col[6]), hi=np.asarray(col[3]) / np.asarray(col[6]),
                 title=title)


RATIO_HEADER = ["x", "p_hat", "wilson_lo", "wilson_hi", "base_tail", "psi", "corrected",
                "ratio_uncorrected", "ratio_corrected", "g1_margin", "g2_margin", "degenerate_count"]


def _ratio_rows(est, base, psi, g1, g2):
    rows = []
    for e, b, s, m1, m2 in zip(est, base, psi, g1, g2):
        corrected = b * s
        rows.append([e.x, e.p_hat, e.wilson_lo, e.wilson_hi, b, s, corrected,
                     e.p_hat / b, e.p_hat / corrected, m1, m2, e.degenerate])
    return rows


# ---------------------------------------------------------------------------
# commands

def cmd_ratio(cfg: dict, out: Path) -> int:
    spec = _spec(cfg["process"])
    n, reps, xs = cfg["n"], cfg["reps"], cfg["xs"]
    sd = cfg["statistic"]
    stat = make_statistic(sd["name"], n, **_stat_params(sd))
    batch = cfg.get("batch_size") or default_batch_size(n)
    est = estimate_tail(spec, stat, xs, reps, cfg["seed"], n, workers=cfg.get("workers", 1),
                        conf=cfg.get("conf", 0.99), batch_size=batch,
                        progress=_Counter(reps, batch, "ratio"))
    base = [float(normal_sf(x)) for x in xs]
    psi = [1.0] * len(xs)
    g1 = g2 = [math.nan] * len(xs)
    # skewness correction for the plain self-normalized sum of a mean-zero i.i.d. law
    if sd["name"] == "self_normalized" and spec.is_iid:
        try:
            profile = analytic_moments(spec, n)
        except SelfNormError:
            profile = None
        if profile is not None:
            v = ValidityConfig(**cfg.get("validity", {}))
            approx = [tail_approx(profile, TailPoint(x), v) if x > 0 else None for x in xs]
            psi = [a.psi if a else 1.0 for a in approx]
            g1 = [a.g1_margin if a else math.nan for a in approx]
            g2 = [a.g2_margin if a else math.nan for a in approx]
    rows = _ratio_rows(est, base, psi, g1, g2)
    write_csv(out / "ratio.csv", cfg, RATIO_HEADER, rows)
    _plot(cfg, out, "ratio.svg", xs, rows, f"{spec.family}, n={n}, {sd['name']}")
    return EXIT_OK


def _block_stat(cfg):
    kind = cfg["scheme"]
    alpha = cfg.get("alpha")
    if alpha is None:
        alpha = blocks.alpha_selector(cfg["tau_mix"]) if kind == "mixing" and "tau_mix" in cfg else 0.5
    name = "onedep_block" if kind == "one_dep" else "block_T"
    return make_statistic(name, cfg["n"], alpha=alpha, scheme=kind,
                          aggregate_m=cfg.get("aggregate_m", 1))


def _block_rho(cfg, spec: ProcessSpec) -> float:
    if cfg.get("rho") is not None:
        return float(cfg["rho"])
    m = cfg.get("aggregate_m", 1)
    try:
        return aggregated_rho(spec, m) if m > 1 else analytic_rho(spec)
    except SelfNormError:
        # pilot path on a stream no replication batch uses
        return blocks.rho_hat(gen(spec, cfg["n"], RngStream(cfg["seed"], U64_MAX)))


def cmd_blocks(cfg: dict, out: Path) -> int:
    spec = _spec(cfg["process"])
    n, reps, xs = cfg["n"], cfg["reps"], cfg["xs"]
    stat = _block_stat(cfg)
    scheme = scheme_of(stat, n)
    rho = _block_rho(cfg, spec) if cfg["scheme"] == "one_dep" else 0.0
    print(f"scheme={scheme.kind} alpha={scheme.alpha:.6g} block_len={scheme.big_len} "
          f"k={scheme.k} rho={rho:.6g}")
    batch = cfg.get("batch_size") or default_batch_size(n)
    est = estimate_tail(spec, stat, xs, reps, cfg["seed"], n, workers=cfg.get("workers", 1),
                        conf=cfg.get("conf", 0.99), batch_size=batch,
                        progress=_Counter(reps, batch, "blocks"))
    base = [float(normal_sf(x)) for x in xs]
    corrected = [float(blocks.corrected_tail_onedep(x, rho)) for x in xs]
    psi = [c / b for c, b in zip(corrected, base)]
    nan = [math.nan] * len(xs)
    rows = _ratio_rows(est, base, psi, nan, nan)
    write_csv(out / "blocks.csv", cfg, RATIO_HEADER, rows)
    _plot(cfg, out, "blocks.svg", xs, rows,
          f"{spec.family}, n={n}, {scheme.kind} blocks l={scheme.big_len} k={scheme.k}")
    return EXIT_OK


def _coverage_specs(cfg) -> list:
    if "processes" in cfg:
        specs = [_spec(d) for d in cfg["processes"]]
        if "p" in cfg and cfg["p"] != len(specs):
            raise ConfigError(f"p={cfg['p']} but {len(specs)} processes given")
        return specs
    if "process" not in cfg or "p" not in cfg:
        raise ConfigError("coverage needs 'p' and 'process', or a 'processes' list")
    return [_spec(cfg["process"])] * cfg["p"]


def read_matrix(path) -> np.ndarray:
    """Plain numeric CSV, one coordinate per row; '#' lines are skipped."""
    rows = []
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row if v.strip()])
            except ValueError:
                raise ConfigError(f"{path}:{line_no}: non-numeric value") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigError(f"{path}: rows must be non-empty and of equal length")
    return np.asarray(rows)


def cmd_coverage(cfg: dict, out: Path, data_path=None) -> int:
    if data_path is not None:
        data = read_matrix(data_path)
        p, n = data.shape
        ci = inference.simultaneous_ci(data, inference.CiSpec(cfg["alpha"], p, n, cfg.get("tau")))
        write_csv(out / "intervals.csv", cfg, ["coordinate", "lower", "upper", "tau", "t0"],
                  [[j, lo, hi, t, ci.t0] for j, (lo, hi, t) in enumerate(zip(ci.lower, ci.upper, ci.tau))])
        return EXIT_OK
    specs = _coverage_specs(cfg)
    for key in ("n", "reps"):
        if key not in cfg:
            raise ConfigError(f"coverage experiment needs '{key}'")
    p, n, reps = len(specs), cfg["n"], cfg["reps"]
    guard = inference.CiSpec(cfg["alpha"], p, n, cfg.get("tau")).design_guard
    batch = cfg.get("batch_size") or max(1, (1 << 21) // (p * n))
    res = coverage_experiment(p, n, specs, cfg.get("tau"), cfg["alpha"], reps, cfg["seed"],
                              workers=cfg.get("workers", 1), mu=cfg.get("mu", 0.0),
                              conf=cfg.get("conf", 0.99), batch_size=batch,
                              progress=_Counter(reps, batch, "coverage"))
    write_csv(out / "coverage.csv", cfg,
              ["coverage_rate", "wilson_lo", "wilson_hi", "t0", "reps", "degenerate_count", "design_guard"],
              [[res.coverage_rate, res.wilson_lo, res.wilson_hi, res.t0, res.reps, res.degenerate, guard]])
    write_csv(out / "coverage_misses.csv", cfg, ["coordinate", "misses", "prefix_coverage"],
              [[j, m, c] for j, (m, c) in enumerate(zip(res.misses, res.prefix_coverage))])
    return EXIT_OK


def cmd_oracle(cfg: dict, out: Path) -> int:
    atoms, probs = cfg["atoms"], cfg["probs"]
    spec = ProcessSpec("iid_discrete", atoms=tuple(atoms), probs=tuple(probs))
    sd = cfg.get("statistic", {"name": "self_normalized"})
    conf = cfg.get("conf", 0.999)
    rows, ok = [], True
    for n in cfg["ns"]:
        stat = make_statistic(sd["name"], n, **_stat_params(sd))
        exact = enumerate_exact(atoms, probs, n, stat, np.asarray(cfg["xs"], dtype=float))
        # each n gets its own seed offset so the sub-runs are independent
        est = estimate_tail(spec, stat, cfg["xs"], cfg["reps"], (cfg["seed"] + n) % 2**64, n,
                            workers=cfg.get("workers", 1), conf=conf,
                            batch_size=cfg.get("batch_size"))
        for e, p_exact in zip(est, exact):
            inside = e.wilson_lo <= p_exact <= e.wilson_hi
            ok &= inside
            rows.append([sd["name"], n, e.x, p_exact, e.p_hat, e.wilson_lo, e.wilson_hi, inside])
    write_csv(out / "oracle.csv", cfg,
              ["statistic", "n", "x", "exact", "p_hat", "wilson_lo", "wilson_hi", "inside"], rows)
    return EXIT_OK if ok else EXIT_GATE


ESTIMATORS = ("mean", "winsorized", "trimmed", "huber")


def estimator_rows(paths: np.ndarray, tau: float) -> np.ndarray:
    """Mean, winsorized mean, trimmed mean and Huber estimate of every row."""
    mean = np.mean(paths, axis=-1)
    if math.isinf(tau):
        return np.stack([mean, mean, mean, mean], axis=-1)
    wins = np.mean(stats.winsorize(paths, tau), axis=-1)
    keep = np.abs(paths) <= tau
    with np.errstate(invalid="ignore", divide="ignore"):
        trim = np.sum(np.where(keep, paths, 0.0), axis=-1) / keep.sum(axis=-1)
    return np.stack([mean, wins, trim, stats.huber_rows(paths, tau)], axis=-1)


def cmd_estimators(cfg: dict, out: Path) -> int:
    spec = _spec(cfg["process"])
    n, reps = cfg["n"], cfg["reps"]
    tau = cfg.get("tau")
    tau = math.inf if tau is None else float(tau)
    truth = iid_moments(spec).mean if spec.is_iid else 0.0
    batch = cfg.get("batch_size") or default_batch_size(n)
    counter = _Counter(reps, batch, "estimators")
    parts = []
    nb = -(-reps // batch)
    for b in range(nb):
        size = min(batch, reps - b * batch)
        parts.append(estimator_rows(gen_batch(spec, n, size, RngStream(cfg["seed"], b)), tau))
        counter(b + 1, nb)
    est = np.concatenate(parts)
    write_csv(out / "estimators.csv", cfg, ["rep", *ESTIMATORS],
              [[i, *row] for i, row in enumerate(est.tolist())])
    err = est - truth
    summary = []
    for j, name in enumerate(ESTIMATORS):
        e = err[:, j][~np.isnan(err[:, j])]
        rmse = float(np.sqrt(np.mean(e * e))) if e.size else math.nan
        bias = float(np.mean(e)) if e.size else math.nan
        summary.append([name, rmse, bias, int(err.shape[0] - e.size)])
    write_csv(out / "estimators_summary.csv", cfg, ["estimator", "rmse", "bias", "undefined_count"], summary)
    return EXIT_OK


COMMANDS = {
    "ratio": cmd_ratio, "blocks": cmd_blocks, "coverage": cmd_coverage,
    "oracle": cmd_oracle, "estimators": cmd_estimators,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="selfnorm", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"selfnorm {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--seed", type=lambda s: int(s, 0), help="override the config seed (u64)")
        sp.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")
        sp.add_argument("--out", help="output directory (default: config 'out' or '.')")
        sp.add_argument("--print-schema", action="store_true", help="print the config schema and exit")
        if name == "coverage":
            sp.add_argument("--data", help="numeric CSV, one coordinate per row")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.print_schema:
        print(json.dumps(SCHEMAS[args.command], indent=2))
        return EXIT_OK
    try:
        cfg = load_config(args.command, args.config, args.seed, args.workers)
    except ConfigError as exc:
        print(f"selfnorm: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"selfnorm: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    out = Path(args.out or cfg.get("out") or ".")
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "coverage":
            return cmd_coverage(cfg, out, args.data)
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, SelfNormError) as exc:
        print(f"selfnorm: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"selfnorm: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
