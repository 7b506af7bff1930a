"""Command-line entry point: ``fsheat {simulate,verify-green,uniqueness,apriori,fbm}``.

Exit status is 0 on success, 2 for configuration errors and 3 for numerical
failures.  Every command writes a ``manifest.json`` next to its artifacts.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .config import RunConfig, blob_sha1, load_config
from .errors import ConfigError, DomainError, PicardDivergence
from .fbm import generate_paths, write_paths_csv
from .green import build_propagator, verify_kernel_estimate
from .solver import (
    fit_apriori_envelope,
    fixed_point_residual,
    moment_estimate,
    picard_solve,
    run_ensemble,
    uniqueness_check,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
FLOAT_FMT = "%.16e"

log = logging.getLogger("fsheat")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _finite(obj):
    """Replace non-finite floats by None so the output stays strict JSON."""
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _write_json(path: Path, obj) -> None:
    obj = _finite(json.loads(json.dumps(obj, default=_json_default)))
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


class _Run:
    """Collects artifacts for one command and writes the manifest last."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command, self.cfg = command, cfg
        self.out = cfg.out_dir
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.out / name
        self.artifacts.append(p)
        return p

    def json(self, name: str, obj) -> None:
        if "json" in self.cfg.formats:
            _write_json(self.path(name), obj)

    def finish(self, status: int, extra: dict | None = None) -> int:
        manifest = {
            "command": self.command,
            "version": __version__,
            "status": status,
            "config": self.cfg.data,
            "config_sha1": self.cfg.digest,
            "seed": self.cfg.seed,
            "backend": kernels.BACKEND,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "artifacts": {p.name: blob_sha1(p.read_bytes()) for p in self.artifacts if p.exists()},
        }
        manifest.update(extra or {})
        _write_json(self.out / "manifest.json", manifest)
        return status


def _write_field(path: Path, u) -> None:
    x, t = u.space.x, u.time.times
    with path.open("w", newline="") as fh:
        fh.write("x,t,u\n")
        for m in range(t.size):
            rows = np.column_stack([x, np.full_like(x, t[m]), u.values[m]])
            np.savetxt(fh, rows, fmt=FLOAT_FMT, delimiter=",")


# ---------------------------------------------------------------------------- #
def cmd_simulate(cfg: RunConfig, args) -> int:
    spec = cfg.problem()
    run = _Run("simulate", cfg)
    t0 = time.perf_counter()
    noise, green = spec.noise(), spec.green()
    try:
        u, rep = picard_solve(spec, noise, green)
    except PicardDivergence as exc:
        log.error("%s", exc)
        run.json("report.json", {**exc.report.to_dict(), "error": str(exc)})
        return run.finish(EXIT_NUMERIC)
    out = rep.to_dict()
    out["residual"] = fixed_point_residual(spec, noise, green, u)["recursive"]
    out["seconds"] = time.perf_counter() - t0
    if "csv" in cfg.formats:
        _write_field(run.path("field.csv"), u)
    run.json("report.json", out)
    log.info("converged in %d iterations, sup|u| = %.6g", rep.iterations, rep.norm_sup)
    return run.finish(EXIT_OK)


def cmd_verify_green(cfg: RunConfig, args) -> int:
    spec = cfg.problem()
    gcfg = cfg.data["green"]
    ids = args.estimates.split(",") if args.estimates else gcfg["estimates"]
    run = _Run("verify-green", cfg)
    table = build_propagator(spec.k, spec.space, spec.time)
    reports = []
    for est in ids:
        mu = gcfg["mu"] if est in ("dG1", "dG2") else 0
        nu = gcfg["nu"] if est in ("dG1", "dG2") else 0
        rep = verify_kernel_estimate(table, est, mu=mu, nu=nu, delta=gcfg["delta"])
        reports.append(rep.to_dict())
        log.info("%s: C_fit = %.6g", est, rep.C_fit)
    finite = all(np.isfinite(r["C_fit"]) for r in reports)
    run.json("green.json", {"substeps": table.substeps, "k_lower": table.k_lower,
                            "k_upper": table.k_upper, "reports": reports})
    return run.finish(EXIT_OK if finite else EXIT_NUMERIC)


def _parse_starts(text: str) -> list:
    starts = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok == "gphi":
            starts.append(None)
            continue
        try:
            starts.append(float(tok))
        except ValueError:
            raise ConfigError(f"--starts: expected numbers or 'gphi', got {tok!r}") from None
    if len(starts) < 2:
        raise ConfigError("--starts needs at least two entries")
    return starts


def cmd_uniqueness(cfg: RunConfig, args) -> int:
    spec = cfg.problem()
    run = _Run("uniqueness", cfg)
    try:
        res = uniqueness_check(spec, spec.noise(), spec.green(), _parse_starts(args.starts))
    except PicardDivergence as exc:
        log.error("%s", exc)
        run.json("uniqueness.json", {**exc.report.to_dict(), "error": str(exc)})
        return run.finish(EXIT_NUMERIC)
    out = res.to_dict()
    out["gap"] = res.sup_gap
    out["within_10_tol"] = bool(res.sup_gap <= 10 * spec.tol)
    run.json("uniqueness.json", out)
    log.info("sup gap %.3e, alpha gap %.3e", res.sup_gap, res.alpha_inf_gap)
    return run.finish(EXIT_OK)


def cmd_apriori(cfg: RunConfig, args) -> int:
    spec = cfg.problem()
    n = args.n if args.n is not None else cfg.data["ensemble"]["n"]
    if n < 30:
        raise ConfigError(f"ensemble size must be at least 30, got {n}")
    run = _Run("apriori", cfg)
    members = run_ensemble(spec, n, workers=args.workers)
    ok = [m for m in members if m.converged]
    failed = [m.index for m in members if not m.converged]
    if "csv" in cfg.formats:
        with run.path("ensemble.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["member", "converged", "iterations", "sup_abs", "norm_alpha_inf", "xi"])
            for m in members:
                w.writerow([m.index, int(m.converged), m.iterations] +
                           [FLOAT_FMT % v for v in (m.sup_abs, m.lhs, m.xi)])
    out = {"n": n, "failed_members": failed}
    if len(ok) >= 2:
        fit = fit_apriori_envelope([m.lhs for m in ok], [m.xi for m in ok], spec.alpha)
        out["envelope"] = fit.to_dict()
        out["violations"] = fit.violations
        out["moments"] = [moment_estimate(spec, n, p, members=members).to_dict()
                          for p in cfg.data["ensemble"]["moments"]]
    run.json("apriori.json", out)
    if failed:
        log.error("members %s did not converge", failed)
    return run.finish(EXIT_NUMERIC if failed else EXIT_OK)


def cmd_fbm(cfg: RunConfig, args) -> int:
    spec = cfg.problem()
    count = args.count if args.count is not None else cfg.data["fbm"]["count"]
    if count < 1:
        raise ConfigError(f"count must be positive, got {count}")
    run = _Run("fbm", cfg)
    paths = generate_paths(spec.time, spec.hurst, count, cfg.seed)
    with run.path("fbm.csv").open("w", newline="") as fh:
        write_paths_csv(paths, fh)
    return run.finish(EXIT_OK, {"count": count})


COMMANDS = {
    "simulate": cmd_simulate,
    "verify-green": cmd_verify_green,
    "uniqueness": cmd_uniqueness,
    "apriori": cmd_apriori,
    "fbm": cmd_fbm,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fsheat", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override noise.seed")
    common.add_argument("--out", help="override output.dir")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a scalar, e.g. grid.nt=512 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="solve one realisation")
    g = sub.add_parser("verify-green", parents=[common], help="fit kernel-estimate constants")
    g.add_argument("--estimates", help="comma-separated estimate ids")
    un = sub.add_parser("uniqueness", parents=[common], help="solve from two starts and compare")
    un.add_argument("--starts", default="0,gphi",
                    help="comma-separated constant starts or 'gphi' for G*phi (default: 0,gphi)")
    a = sub.add_parser("apriori", parents=[common], help="ensemble envelope fit and moments")
    a.add_argument("--n", type=int, help="ensemble size")
    a.add_argument("--workers", type=int, help="worker processes (default: $FSHEAT_WORKERS or 1)")
    f = sub.add_parser("fbm", parents=[common], help="write sample fBm paths")
    f.add_argument("--count", type=int, help="number of paths")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides, seed=args.seed, out=args.out)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        for line in exc.diagnostics:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
