"""Scenario configuration: parsing, validation, defaults and initial data."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from .flow import FlowParams
from .torus import GridError, ScalarField, TorusGrid, make_grid, read_snapshot

RNG_ALGORITHM = "Philox"
IC_FAMILIES = ("zero", "single_mode", "multi_mode", "random_bandlimited", "from_file")
DIAGNOSTIC_DEFAULTS = {"decay_fit": True, "residuals": False, "plots": False}
DEFAULT_OUTPUT_DIR = "hermflow-run"


class ConfigError(ValueError):
    """All violations found in a scenario document, as (pointer, message) pairs."""

    def __init__(self, violations):
        self.violations = sorted(violations)
        lines = [f"{p or '/'}: {m}" for p, m in self.violations]
        super().__init__("invalid scenario:\n  " + "\n  ".join(lines))

    @property
    def pointers(self) -> list[str]:
        return [p for p, _ in self.violations]


def load_schema(name: str = "scenario") -> dict:
    text = resources.files("hermflow").joinpath(f"schemas/{name}.schema.json").read_text()
    return json.loads(text)


_VALIDATOR = None


def _validator():
    global _VALIDATOR
    if _VALIDATOR is None:
        _VALIDATOR = Draft202012Validator(load_schema("scenario"))
    return _VALIDATOR


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


@dataclass
class InitialCondition:
    family: str = "zero"
    amplitude: float | None = None
    wave_vector: tuple | None = None
    phase: float | None = None
    modes: list | None = None
    max_k: float | None = None
    seed: int | None = None
    path: str | None = None

    def to_dict(self) -> dict:
        out = {"family": self.family}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "family" or v is None:
                continue
            if f.name == "wave_vector":
                v = list(v)
            elif f.name == "modes":
                v = [dict(m, wave_vector=list(m["wave_vector"])) for m in v]
            out[f.name] = v
        return out


@dataclass
class ScenarioConfig:
    grid: TorusGrid
    ic: InitialCondition
    flow: FlowParams = field(default_factory=FlowParams)
    diagnostics: dict = field(default_factory=lambda: dict(DIAGNOSTIC_DEFAULTS))
    output_dir: str = DEFAULT_OUTPUT_DIR
    base_dir: Path | None = field(default=None, compare=False, repr=False)

    @property
    def seed(self) -> int | None:
        return self.ic.seed

    def to_dict(self) -> dict:
        return {
            "n": self.grid.n,
            "resolution": list(self.grid.resolution),
            "periods": [float(p) for p in self.grid.periods],
            "active_axes": list(self.grid.active_axes),
            "ic": self.ic.to_dict(),
            "flow": self.flow.to_dict(),
            "diagnostics": dict(self.diagnostics),
            "output_dir": self.output_dir,
        }


def serialize(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def normalize(doc) -> dict:
    """The canonical form of a scenario document: defaults filled, derived fields explicit."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    return parse_config(doc).to_dict()


def _finite_violations(doc, path=()):
    """Non-finite numbers survive JSON parsing (NaN, Infinity) and the schema."""
    if isinstance(doc, dict):
        for k, v in doc.items():
            yield from _finite_violations(v, path + (k,))
    elif isinstance(doc, list):
        for i, v in enumerate(doc):
            yield from _finite_violations(v, path + (i,))
    elif isinstance(doc, float) and not math.isfinite(doc):
        yield _pointer(path), f"{doc!r} is not a finite number"


def _wave_vector_violations(vec, grid: TorusGrid, where: str):
    out = []
    if len(vec) != 2 * grid.n:
        return [(where, f"wave vector needs {2 * grid.n} entries, got {len(vec)}")]
    for ax, (k, m) in enumerate(zip(vec, grid.resolution)):
        if m == 1 and k != 0:
            out.append((f"{where}/{ax}", f"axis {ax} is inactive; wave number must be 0"))
        elif m > 1 and not abs(k) < m // 2:
            out.append((f"{where}/{ax}", f"|k| = {abs(k)} is not resolved (need < {m // 2})"))
    return out


def parse_config(text, base_dir=None) -> ScenarioConfig:
    """Validate a scenario document (JSON text or decoded dict).

    Raises ConfigError listing every violation with its JSON pointer.
    """
    if isinstance(text, (str, bytes)):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([("", f"malformed JSON: {exc}")]) from None
    else:
        doc = text
    violations = [(_pointer(e.absolute_path), e.message) for e in _validator().iter_errors(doc)]
    violations += list(_finite_violations(doc))
    if violations or not isinstance(doc, dict):
        raise ConfigError(violations or [("", "document must be an object")])

    n = doc["n"]
    try:
        grid = make_grid(n, doc["resolution"], doc.get("periods"))
    except GridError as exc:
        raise ConfigError([("/resolution", str(exc))]) from None
    if "active_axes" in doc and list(doc["active_axes"]) != list(grid.active_axes):
        violations.append(("/active_axes",
                           f"must equal the axes with resolution > 1: {list(grid.active_axes)}"))

    ic_doc = dict(doc["ic"])
    fam = ic_doc["family"]
    if "wave_vector" in ic_doc:
        violations += _wave_vector_violations(ic_doc["wave_vector"], grid, "/ic/wave_vector")
        ic_doc["wave_vector"] = tuple(ic_doc["wave_vector"])
    for i, m in enumerate(ic_doc.get("modes") or []):
        violations += _wave_vector_violations(m["wave_vector"], grid, f"/ic/modes/{i}/wave_vector")
    if fam == "random_bandlimited" and "max_k" in ic_doc:
        kmax = min(m // 2 for m in grid.resolution if m > 1)
        if ic_doc["max_k"] >= kmax:
            violations.append(("/ic/max_k", f"max_k must be below the Nyquist index {kmax}"))

    flow_doc = doc.get("flow", {})
    try:
        params = FlowParams(**flow_doc)
    except ValueError as exc:
        violations.append(("/flow", str(exc)))
        params = None
    if violations:
        raise ConfigError(violations)

    diag = dict(DIAGNOSTIC_DEFAULTS)
    diag.update(doc.get("diagnostics", {}))
    return ScenarioConfig(grid, InitialCondition(**ic_doc), params, diag,
                          doc.get("output_dir", DEFAULT_OUTPUT_DIR),
                          Path(base_dir) if base_dir is not None else None)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


# -- initial conditions ------------------------------------------------------------

def _plane_wave(grid: TorusGrid, amplitude, vec, phase=0.0) -> np.ndarray:
    xs = grid.coordinates()
    arg = sum(2 * np.pi * k * x / p for k, x, p in zip(vec, xs, grid.periods))
    return amplitude * np.broadcast_to(np.cos(arg + phase), grid.shape)


def random_bandlimited(grid: TorusGrid, amplitude: float, max_k: float, seed: int) -> ScalarField:
    """Zero-mean real field with modes 0 < |k| <= max_k, no Nyquist content,
    sup norm equal to ``amplitude``.  Draws come from a Philox stream."""
    rng = np.random.Generator(np.random.Philox(seed))
    shape = grid.shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    kk = sum(np.asarray(k, dtype=float) ** 2 for k in grid.wave_ints)
    keep = (kk > 0) & (kk <= max_k ** 2) & ~grid.nyquist_mask
    c = np.where(keep, c, 0.0)
    # Hermitian symmetrization c(-k) = conj c(k) makes the field real
    axes = tuple(range(len(shape)))
    mirror = np.roll(np.flip(c, axis=axes), 1, axis=axes)
    c = 0.5 * (c + np.conj(mirror))
    f = ScalarField.from_spectral(grid, c)
    sup = float(np.max(np.abs(f.values)))
    if sup == 0.0:
        return ScalarField.constant(grid, 0.0)
    return f * (amplitude / sup)


def initial_condition(cfg: ScenarioConfig) -> ScalarField:
    grid, ic = cfg.grid, cfg.ic
    if ic.family == "zero":
        return ScalarField.constant(grid, 0.0)
    if ic.family == "single_mode":
        return ScalarField(grid, _plane_wave(grid, ic.amplitude, ic.wave_vector, ic.phase or 0.0))
    if ic.family == "multi_mode":
        vals = sum(_plane_wave(grid, m["amplitude"], m["wave_vector"], m.get("phase", 0.0))
                   for m in ic.modes)
        return ScalarField(grid, np.array(vals, dtype=float))
    if ic.family == "random_bandlimited":
        return random_bandlimited(grid, ic.amplitude, ic.max_k, ic.seed)
    if ic.family == "from_file":
        path = Path(ic.path)
        if not path.is_absolute() and cfg.base_dir is not None:
            path = cfg.base_dir / path
        _, f = read_snapshot(path)
        if f.grid != grid:
            raise ValueError(f"{path}: snapshot grid {f.grid.to_dict()} differs from the scenario")
        return f
    raise ValueError(f"unknown IC family {ic.family!r}")
