"""Named coefficient, nonlinearity and initial-value presets.

Presets are small frozen records (name + parameters) so that problem
descriptions pickle cleanly into worker processes and echo into manifests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = ["Coefficient", "ScalarPreset", "InitialPreset", "K_PRESETS", "F_PRESETS", "PHI_PRESETS"]


def _params(given: dict, defaults: dict, what: str) -> dict:
    unknown = set(given) - set(defaults)
    if unknown:
        raise DomainError(f"unknown parameter(s) {sorted(unknown)} for {what}")
    return {**defaults, **given}


# k(x, t) presets -------------------------------------------------------------
def _k_constant(x, t, value):
    return np.full(np.broadcast(x, t).shape, float(value))


def _k_variable(x, t, a, b):
    return 1.0 + a * np.cos(np.pi * x) + b * np.sin(2 * np.pi * t) * np.cos(2 * np.pi * x)


K_PRESETS = {
    "constant": (_k_constant, {"value": 1.0}, lambda p: p["value"]),
    # lower bound 1 - |a| - |b|
    "variable": (_k_variable, {"a": 0.3, "b": 0.2}, lambda p: 1.0 - abs(p["a"]) - abs(p["b"])),
}


@dataclass(frozen=True)
class Coefficient:
    """Diffusivity ``k(x, t)``; ``lower`` is the preset's ellipticity bound."""

    name: str = "constant"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in K_PRESETS:
            raise DomainError(f"unknown k preset {self.name!r}; known: {sorted(K_PRESETS)}")
        object.__setattr__(self, "params", _params(dict(self.params), K_PRESETS[self.name][1], f"k={self.name}"))

    def __call__(self, x, t):
        return K_PRESETS[self.name][0](np.asarray(x, float), np.asarray(t, float), **self.params)

    @property
    def lower(self) -> float:
        return K_PRESETS[self.name][2](self.params)

    @property
    def time_independent(self) -> bool:
        return self.name == "constant" or self.params.get("b", 0.0) == 0.0

    def __hash__(self):
        return hash((self.name, tuple(sorted(self.params.items()))))


# f / h presets -----------------------------------------------------------------
# each entry: (defaults, Lipschitz constant of the map, of its derivative)
F_PRESETS = {
    "zero": ({}, lambda p: 0.0, lambda p: 0.0),
    "constant": ({"value": 1.0}, lambda p: 0.0, lambda p: 0.0),
    "linear": ({"slope": 1.0, "offset": 0.0}, lambda p: abs(p["slope"]), lambda p: 0.0),
    "sin": ({"amp": 1.0, "freq": 1.0}, lambda p: abs(p["amp"] * p["freq"]),
            lambda p: abs(p["amp"]) * p["freq"] ** 2),
}


def _eval_scalar(name, u, p):
    if name == "zero":
        return np.zeros_like(u)
    if name == "constant":
        return np.full_like(u, p["value"])
    if name == "linear":
        return p["slope"] * u + p["offset"]
    return p["amp"] * np.sin(p["freq"] * u)


@dataclass(frozen=True)
class ScalarPreset:
    """A globally Lipschitz scalar map with a Lipschitz derivative."""

    name: str = "zero"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in F_PRESETS:
            raise DomainError(f"unknown f/h preset {self.name!r}; known: {sorted(F_PRESETS)}")
        object.__setattr__(self, "params", _params(dict(self.params), F_PRESETS[self.name][0], self.name))

    def __call__(self, u):
        return _eval_scalar(self.name, np.asarray(u, dtype=float), self.params)

    @property
    def lipschitz(self) -> float:
        return F_PRESETS[self.name][1](self.params)

    @property
    def derivative_lipschitz(self) -> float:
        return F_PRESETS[self.name][2](self.params)

    @property
    def is_zero(self) -> bool:
        if self.name == "zero":
            return True
        if self.name == "constant":
            return self.params["value"] == 0.0
        if self.name == "linear":
            return self.params["slope"] == 0.0 and self.params["offset"] == 0.0
        return self.params["amp"] == 0.0

    def __hash__(self):
        return hash((self.name, tuple(sorted(self.params.items()))))


# phi presets -------------------------------------------------------------------
# every preset has phi'(0) = phi'(1) = 0
PHI_PRESETS = {
    "zero": {},
    "constant": {"value": 1.0},
    "cos": {"amp": 1.0, "mode": 1, "offset": 0.0},
}


@dataclass(frozen=True)
class InitialPreset:
    name: str = "cos"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in PHI_PRESETS:
            raise DomainError(f"unknown phi preset {self.name!r}; known: {sorted(PHI_PRESETS)}")
        p = _params(dict(self.params), PHI_PRESETS[self.name], f"phi={self.name}")
        if self.name == "cos" and int(p["mode"]) != p["mode"]:
            raise DomainError("phi=cos needs an integer mode for the Neumann condition")
        object.__setattr__(self, "params", p)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.name == "zero":
            return np.zeros_like(x)
        if self.name == "constant":
            return np.full_like(x, p["value"])
        return p["offset"] + p["amp"] * np.cos(p["mode"] * np.pi * x)

    def __hash__(self):
        return hash((self.name, tuple(sorted(self.params.items()))))
