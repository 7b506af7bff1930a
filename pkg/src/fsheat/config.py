"""JSON run configuration: schema, overrides, semantic checks and hashing."""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError, DomainError
from .green import ESTIMATES
from .presets import F_PRESETS, K_PRESETS, PHI_PRESETS, Coefficient, InitialPreset, ScalarPreset
from .solver import ProblemSpec

__all__ = ["SCHEMA", "DEFAULTS", "RunConfig", "load_config", "apply_overrides", "blob_sha1"]

_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}
_params = {"type": "object", "additionalProperties": {"type": "number"}}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "nx": {"type": "integer", "minimum": 2},
                "nt": _pos_int,
                "T": {"type": "number", "minimum": 0},
            },
        },
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "hurst": _num,
                "alpha": _num,
                "modes": _pos_int,
                "lambda_gamma": _num,
                "scale": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "problem": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k_preset": {"enum": sorted(K_PRESETS)},
                "f_preset": {"enum": sorted(F_PRESETS)},
                "h_preset": {"enum": sorted(F_PRESETS)},
                "phi_preset": {"enum": sorted(PHI_PRESETS)},
                "params": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"k": _params, "f": _params, "h": _params, "phi": _params},
                },
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": _pos_int,
            },
        },
        "ensemble": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 30},
                "moments": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
            },
        },
        "green": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "estimates": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "mu": {"type": "integer", "minimum": 0, "maximum": 2},
                "nu": {"type": "integer", "minimum": 0, "maximum": 1},
                "delta": _num,
            },
        },
        "fbm": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"count": _pos_int},
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string", "minLength": 1},
                "formats": {
                    "type": "array",
                    "items": {"enum": ["csv", "json"]},
                    "uniqueItems": True,
                },
            },
        },
    },
}

DEFAULTS = {
    "grid": {"nx": 64, "nt": 256, "T": 0.5},
    "noise": {"hurst": 0.7, "alpha": 0.35, "modes": 16, "lambda_gamma": 3.0, "scale": 1.0, "seed": 0},
    "problem": {
        "k_preset": "constant",
        "f_preset": "zero",
        "h_preset": "zero",
        "phi_preset": "cos",
        "params": {"k": {}, "f": {}, "h": {}, "phi": {}},
    },
    "solver": {"tol": 1e-6, "max_iter": 50},
    "ensemble": {"n": 200, "moments": [2.0, 4.0]},
    "green": {"estimates": ["gaus", "dG1", "deltaG1", "deltaG", "deltaG2"], "mu": 1, "nu": 0, "delta": 0.6},
    "fbm": {"count": 3},
    "output": {"dir": "out", "formats": ["csv", "json"]},
}


def blob_sha1(data: bytes) -> str:
    """Content hash in git's blob format, ``sha1(b"blob <len>\\0" + data)``."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _line_of(text: str, path) -> int | None:
    """Best-effort line of the key at ``path`` in the JSON source."""
    if not text:
        return None
    pos = 0
    found = None
    for part in path:
        if isinstance(part, int):
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(str(part))).search(text, pos)
        if m is None:
            break
        pos = m.end()
        found = m.start()
    if found is None:
        return None
    return text.count("\n", 0, found) + 1


def _where(text: str, path) -> str:
    dotted = ".".join(str(p) for p in path) or "<root>"
    line = _line_of(text, path)
    return f"line {line}: {dotted}" if line else dotted


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``key.sub=value`` overrides; values parse as JSON scalars, else strings."""
    doc = copy.deepcopy(doc)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, raw = item.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ConfigError(f"override {item!r}: empty key")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        if isinstance(value, (dict, list)):
            raise ConfigError(f"override {key}: only scalar values may be set from the command line")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key}: {p} is not a section")
        node[parts[-1]] = value
    return doc


@dataclass(frozen=True)
class RunConfig:
    """A validated configuration (user document merged over :data:`DEFAULTS`)."""

    data: dict
    source: str = ""

    @property
    def canonical(self) -> bytes:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":")).encode()

    @property
    def digest(self) -> str:
        return blob_sha1(self.canonical)

    @property
    def seed(self) -> int:
        return int(self.data["noise"]["seed"])

    @property
    def out_dir(self) -> Path:
        return Path(self.data["output"]["dir"])

    @property
    def formats(self) -> list:
        return list(self.data["output"]["formats"])

    def problem(self):
        """Build the :class:`~fsheat.solver.ProblemSpec`; raises :class:`ConfigError`."""
        g, nz, pr, so = (self.data[k] for k in ("grid", "noise", "problem", "solver"))
        par = pr.get("params", {})
        try:
            return ProblemSpec(
                k=Coefficient(pr["k_preset"], par.get("k", {})),
                f=ScalarPreset(pr["f_preset"], par.get("f", {})),
                h=ScalarPreset(pr["h_preset"], par.get("h", {})),
                phi=InitialPreset(pr["phi_preset"], par.get("phi", {})),
                hurst=float(nz["hurst"]),
                alpha=float(nz["alpha"]),
                nx=int(g["nx"]),
                nt=int(g["nt"]),
                T=float(g["T"]),
                modes=int(nz["modes"]),
                gamma=float(nz["lambda_gamma"]),
                scale=float(nz["scale"]),
                seed=int(nz["seed"]),
                tol=float(so["tol"]),
                max_iter=int(so["max_iter"]),
            )
        except DomainError as exc:
            raise ConfigError([f"{_where(self.source, self._blame(str(exc)))}: {exc}"]) from exc

    @staticmethod
    def _blame(msg: str) -> list:
        if "alpha" in msg:
            return ["noise", "alpha"]
        if "Hurst" in msg or "H " in msg:
            return ["noise", "hurst"]
        if "lambda_gamma" in msg:
            return ["noise", "lambda_gamma"]
        if "tolerance" in msg:
            return ["solver", "tol"]
        return ["problem"]

    def validate_semantics(self) -> None:
        spec = self.problem()
        try:
            lo = spec.k.lower
            if not lo > 0:
                raise DomainError(f"coefficient is not uniformly elliptic (lower bound {lo:.6g})")
            # also check on nodes and half nodes of the actual grid
            xs = np.linspace(0.0, 1.0, 2 * spec.nx + 1)
            ts = np.linspace(0.0, spec.T, 2 * spec.nt + 1)
            kmin = float(np.min(spec.k(xs[None, :], ts[:, None])))
            if not kmin > 0:
                raise DomainError(f"coefficient is not uniformly elliptic on the grid (min k = {kmin:.6g})")
        except DomainError as exc:
            raise ConfigError([f"{_where(self.source, ['problem', 'params', 'k'])}: {exc}"]) from exc
        bad = [e for e in self.data["green"]["estimates"] if e not in ESTIMATES]
        if bad:
            raise ConfigError([f"{_where(self.source, ['green', 'estimates'])}: unknown estimate(s) {bad}"])


def load_config(path: str | Path | None = None, overrides=(), seed: int | None = None, out: str | None = None) -> RunConfig:
    """Read, merge, validate.  All problems are collected into one :class:`ConfigError`."""
    text = ""
    user = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}, column {exc.colno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(user, dict):
            raise ConfigError("line 1: top-level value must be an object")
    user = apply_overrides(user, overrides)
    if seed is not None:
        user = _merge(user, {"noise": {"seed": int(seed)}})
    if out is not None:
        user = _merge(user, {"output": {"dir": str(out)}})

    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(user), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ConfigError([f"{_where(text, list(e.absolute_path))}: {e.message}" for e in errors])
    cfg = RunConfig(_merge(DEFAULTS, user), text)
    cfg.validate_semantics()
    return cfg
