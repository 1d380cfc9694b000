#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Run configuration: INI-style sections over dotenv line syntax.

    [geometry]
    a = 1
    nx = 64
    [model]
    lambda = 8pi

Sections become dotted prefixes (geometry.nx). Precedence, lowest first:
built-in defaults < config file < TORUSLAB_<SECTION>_<KEY> env vars < --set/--seed flags.
"""

import hashlib
import io
import json
import logging
import os
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np
from dotenv import dotenv_values

from scripts.common.errors import ConfigError
from scripts.common.flow import FlowConfig
from scripts.common.functionals import EIGHT_PI
from scripts.common.initial import InitialSpec, parse_modes
from scripts.common.linops import KINDS
from scripts.common.torus import TorusGrid

log = logging.getLogger(__name__)

ENV_PREFIX = "TORUSLAB_"
OUTDIR_ENV = "TORUSLAB_OUTDIR"

_SECTION_RE = re.compile(r"^\[\s*([A-Za-z_][A-Za-z0-9_]*)\s*\]$")
_LAMBDA_RE = re.compile(r"^([0-9]*\.?[0-9]*(?:[eE][-+]?[0-9]+)?)\s*\*?\s*pi(\^2)?$")


# ---------- value parsers ----------
def parse_lambda(text: Any) -> float:
    """Float, or a multiple of pi / pi^2 written as '8pi', '2pi^2', '8*pi'."""
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip().lower().replace(" ", "")
    m = _LAMBDA_RE.match(s)
    if m:
        coef = float(m.group(1)) if m.group(1) else 1.0
        return coef * (np.pi ** 2 if m.group(2) else np.pi)
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"model.lambda: cannot parse '{text}' (number, '8pi' or '2pi^2')") from None


def _parse_bool(text: Any) -> bool:
    if isinstance(text, bool):
        return text
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text}")


def _parse_int(text: Any) -> int:
    f = float(text)
    if f != int(f):
        raise ValueError(f"not an integer: {text}")
    return int(f)


def _optional(parse: Callable[[Any], Any]) -> Callable[[Any], Any]:
    def inner(text):
        if text is None or str(text).strip().lower() in ("", "none", "null"):
            return None
        return parse(text)
    return inner


def _modes_text(text: Any) -> str:
    parse_modes(str(text))
    return ",".join(s.strip() for s in str(text).split(",") if s.strip())


# key -> (parser, default)
SCHEMA: Dict[str, Tuple[Callable[[Any], Any], Any]] = {
    "geometry.a": (float, 1.0),
    "geometry.b": (float, 1.0),
    "geometry.nx": (_parse_int, 64),
    "geometry.ny": (_parse_int, 64),
    "model.lambda": (parse_lambda, EIGHT_PI),
    "initial.preset": (str, "constant+cos_x"),
    "initial.amplitude": (float, 0.1),
    "initial.modes": (_modes_text, ""),
    "initial.noise_amplitude": (float, 0.0),
    "initial.noise_modes": (_parse_int, 3),
    "initial.seed": (_parse_int, 0),
    "flow.dt_initial": (float, 1e-3),
    "flow.t_end": (float, 40.0),
    "flow.scheme": (str, "explicit_rk4"),
    "flow.dt_safety": (float, 0.9),
    "flow.renormalize_mass": (_parse_bool, True),
    "flow.record_every": (_parse_int, 10),
    "flow.energy_slack": (float, 1e-12),
    "flow.stop_tol": (float, 1e-11),
    "flow.max_retries": (_parse_int, 20),
    "flow.implicit_tol": (float, 1e-13),
    "flow.implicit_max_iters": (_parse_int, 30),
    "flow.dealias": (_parse_bool, False),
    "flow.tmf_diagnostic": (_parse_bool, False),
    "flow.h_theta": (_optional(float), 0.5),
    "solver.tol": (float, 1e-11),
    "solver.max_iters": (_parse_int, 50),
    "spectrum.k": (_parse_int, 12),
    "spectrum.operator": (str, "B"),
    "continuation.lambda_end": (_optional(parse_lambda), None),
    "continuation.steps": (_parse_int, 20),
    "manifold.radius": (float, 0.1),
    "manifold.samples": (_parse_int, 100),
    "manifold.sample_radius": (float, 1e-2),
    "rates.grad_lo": (float, 1e-9),
    "rates.grad_hi": (float, 1e-3),
    "output.plots": (_parse_bool, True),
}

SECTIONS = sorted({k.split(".", 1)[0] for k in SCHEMA})


# ---------- sources ----------
def read_config_file(path: str) -> Dict[str, str]:
    """Raw string values keyed 'section.key'; each section body is parsed by python-dotenv."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    bodies: Dict[str, List[str]] = {"": []}
    current = ""
    with open(path, "r", encoding="utf-8") as f:
        for raw in f:
            m = _SECTION_RE.match(raw.strip())
            if m:
                current = m.group(1).lower()
                bodies.setdefault(current, [])
                continue
            bodies[current].append(raw)

    out: Dict[str, str] = {}
    for section, lines in bodies.items():
        values = dotenv_values(stream=io.StringIO("".join(lines)), interpolate=True)
        for key, value in values.items():
            name = f"{section}.{key.strip().lower()}" if section else key.strip().lower()
            if value is None:
                raise ConfigError(f"{path}: '{name}' has no value")
            out[name] = value
    return out


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX) or name == OUTDIR_ENV:
            continue
        section, _, key = name[len(ENV_PREFIX):].lower().partition("_")
        if section in SECTIONS and key:
            out[f"{section}.{key}"] = value
    return out


def parse_assignment(text: str) -> Tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"expected KEY=VALUE (got '{text}')")
    return key.strip().lower(), value.strip()


def parse_sweep(text: str) -> Tuple[str, List[str]]:
    """'model.lambda=20,25' -> ('model.lambda', ['20', '25'])."""
    key, values = parse_assignment(text)
    if key not in SCHEMA:
        raise ConfigError(f"--sweep: unknown key '{key}'")
    items = [v.strip() for v in values.split(",") if v.strip()]
    if not items:
        raise ConfigError(f"--sweep {key}: no values given")
    return key, items


# ---------- resolved config ----------
@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-11
    max_iters: int = 50

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError(f"solver.tol must be > 0 (got {self.tol})")
        if self.max_iters < 1:
            raise ConfigError("solver.max_iters must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    grid: TorusGrid
    lam: float
    initial: InitialSpec
    flow: FlowConfig
    solver: SolverConfig
    values: Dict[str, Any] = field(default_factory=dict, compare=False)

    def get(self, key: str) -> Any:
        return self.values[key]

    @property
    def config_hash(self) -> str:
        return config_hash(self.values)

    def warnings(self) -> List[str]:
        out = []
        if self.lam > EIGHT_PI * (1.0 + 1e-12):
            out.append(f"lambda={self.lam:.6g} > 8*pi: global existence of the flow is only "
                       f"guaranteed for 0 < lambda <= 8*pi")
        return out

    def with_values(self, overrides: Mapping[str, Any]) -> "RunConfig":
        vals = dict(self.values)
        vals.update(overrides)
        return resolve(vals)


def config_hash(values: Mapping[str, Any]) -> str:
    canonical = json.dumps(dict(values), sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def resolve(raw: Mapping[str, Any]) -> RunConfig:
    """Validate and type every value before any computation."""
    values: Dict[str, Any] = {k: default for k, (_, default) in SCHEMA.items()}
    for key, text in raw.items():
        key = key.lower()
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key '{key}'")
        parse = SCHEMA[key][0]
        try:
            values[key] = parse(text)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{key}: {e}") from None

    grid = TorusGrid(a=values["geometry.a"], b=values["geometry.b"],
                     nx=values["geometry.nx"], ny=values["geometry.ny"])
    lam = values["model.lambda"]
    if not lam > 0:
        raise ConfigError(f"model.lambda must be > 0 (got {lam})")
    initial = InitialSpec(
        preset=values["initial.preset"],
        amplitude=values["initial.amplitude"],
        modes=parse_modes(values["initial.modes"]),
        noise_amplitude=values["initial.noise_amplitude"],
        noise_modes=values["initial.noise_modes"],
        seed=values["initial.seed"],
    )
    flow = FlowConfig(**{k.split(".", 1)[1]: v for k, v in values.items() if k.startswith("flow.")})
    solver = SolverConfig(tol=values["solver.tol"], max_iters=values["solver.max_iters"])

    if values["spectrum.operator"] not in KINDS:
        raise ConfigError(f"spectrum.operator must be one of {', '.join(KINDS)} (got {values['spectrum.operator']})")
    if values["spectrum.k"] < 1:
        raise ConfigError("spectrum.k must be >= 1")
    lam_end = values["continuation.lambda_end"]
    if lam_end is not None and not lam_end > 0:
        raise ConfigError("continuation.lambda_end must be > 0")
    if values["continuation.steps"] < 1:
        raise ConfigError("continuation.steps must be >= 1")
    if not values["manifold.radius"] > 0 or not values["manifold.sample_radius"] > 0:
        raise ConfigError("manifold.radius and manifold.sample_radius must be > 0")
    if values["manifold.samples"] < 1:
        raise ConfigError("manifold.samples must be >= 1")
    if not 0 < values["rates.grad_lo"] < values["rates.grad_hi"]:
        raise ConfigError("rates window needs 0 < rates.grad_lo < rates.grad_hi")

    return RunConfig(grid=grid, lam=lam, initial=initial, flow=flow, solver=solver, values=values)


def load_run_config(config_path: Optional[str] = None, assignments: Optional[List[str]] = None,
                    seed: Optional[int] = None, environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    raw: Dict[str, Any] = {}
    if config_path:
        raw.update(read_config_file(config_path))
    raw.update(env_overrides(environ))
    for a in assignments or []:
        key, value = parse_assignment(a)
        raw[key] = value
    if seed is not None:
        raw["initial.seed"] = seed
    return resolve(raw)


def default_outdir(command: str, environ: Optional[Mapping[str, str]] = None) -> str:
    environ = os.environ if environ is None else environ
    ts = datetime.now(timezone.utc).strftime("%Y%m%d_%H%M%S")
    return os.path.join(environ.get(OUTDIR_ENV, "outputs"), f"{command}_{ts}")
