"""INI experiment files.

Sections and keys (all optional unless noted):

[sweep]
    name        label used in reports
    strategy    oscillator | separable | grid            (required)
    theorem     main | main2 | main3                     (default main)
    gamma       Riesz order in [0, 1]                    (default 0)
    mode        sharp | capped                           (default capped)
    hbars       comma list, strictly decreasing; or
    hbar_max, hbar_min, points   geometric list          (points >= 6)
    seed        integer                                  (default 0)
    budget      max unknowns per grid run / retained sums for separable
    resolution  grid steps per hbar/sqrt(depth)          (default 8)
    fit         auto | residual | envelope | band        (default auto)
    framing     on | off                                 (default on for rough specs)
    timing      on | off                                 (default off; off writes 0 seconds)
    kernel      auto | 2 | 4, mollifier order for framing    (default auto)
    tolerance   slope tolerance                          (default 0.15 oracle, 0.35 otherwise)

[potential]
    dim, well (comma list or scalar), offset, nu, k, mu, box, lambda
    bumps       ';'-separated entries center:coeff:exponent[:radius],
                center itself a comma list

    For strategy = separable, the section describes the one-dimensional
    factor and ``dim`` is the number of factors.
    For strategy = oscillator only dim and lambda are read.

[output]
    csv, json   paths, relative to the config file

[mollify]       function = abs_power, exponent, k, mu, eps (comma list), alpha_max
[phase]         gamma, hbar, eps (comma list), n (grid points)
[cover]         hbars, n, half_width, rho, delta
[bracketing]    hbar, n, margin, half_width
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, PreconditionError
from .potentials import Bump, HolderClass, PotentialSpec

STRATEGIES = ("oscillator", "separable", "grid")
THEOREMS = ("main", "main2", "main3")
FITS = ("auto", "residual", "envelope", "band")


@dataclass
class SweepConfig:
    name: str
    strategy: str
    gamma: float
    mode: str
    hbars: list[float]
    theorem: str = "main"
    spec: PotentialSpec | None = None
    dim: int = 1
    lam: float = 1.0
    seed: int = 0
    budget: int = 2_000_000
    resolution: float = 8.0
    fit: str = "auto"
    framing: bool = True
    timing: bool = False
    tolerance: float | None = None
    kernel: int | None = None
    csv_path: Path | None = None
    json_path: Path | None = None
    echo: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.theorem not in THEOREMS:
            raise ConfigError(f"theorem must be one of {THEOREMS}, got {self.theorem!r}")
        if self.fit not in FITS:
            raise ConfigError(f"fit must be one of {FITS}, got {self.fit!r}")
        if self.mode not in ("sharp", "capped"):
            raise ConfigError("mode must be sharp or capped")
        if not 0 <= self.gamma <= 1:
            raise ConfigError("gamma must lie in [0, 1]")
        h = np.asarray(self.hbars, dtype=float)
        if h.size < 6:
            raise ConfigError("an hbar sweep needs at least 6 points")
        if np.any(h <= 0) or np.any(np.diff(h) >= 0):
            raise ConfigError("hbar list must be positive and strictly decreasing")
        if self.strategy != "oscillator" and self.spec is None:
            raise ConfigError(f"strategy {self.strategy} needs a [potential] section")
        if self.kernel not in (None, 2, 4):
            raise ConfigError("kernel must be auto, 2 or 4")
        if self.budget < 1:
            raise ConfigError("budget must be positive")
        if self.dim < 1:
            raise ConfigError("dim must be at least 1")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ConfigError("lambda must be positive and finite")

    @property
    def oracle(self) -> bool:
        return self.strategy == "oscillator"

    @property
    def slope_tolerance(self) -> float:
        if self.tolerance is not None:
            return self.tolerance
        return 0.15 if self.oracle else 0.35

    def fit_column(self) -> str:
        if self.fit != "auto":
            return self.fit
        if self.strategy == "oscillator":
            return "envelope"
        if self.spec is not None and self.spec.bumps and self.framing:
            return "band"
        return "residual"


def geometric_hbars(hmax: float, hmin: float, points: int) -> list[float]:
    if not (hmax > hmin > 0):
        raise ConfigError("need hbar_max > hbar_min > 0")
    return [float(x) for x in np.geomspace(hmax, hmin, int(points))]


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("on", "true", "yes", "1"):
        return True
    if t in ("off", "false", "no", "0"):
        return False
    raise ConfigError(f"expected on/off, got {text!r}")


def parse_bumps(text: str, dim: int) -> tuple[Bump, ...]:
    out = []
    for entry in filter(None, (e.strip() for e in text.split(";"))):
        parts = entry.split(":")
        if len(parts) not in (3, 4):
            raise ConfigError(f"bump entry {entry!r} must be center:coeff:exponent[:radius]")
        center = _floats(parts[0])
        if len(center) not in (1, dim):
            raise ConfigError(f"bump center {parts[0]!r} has the wrong dimension")
        radius = float(parts[3]) if len(parts) == 4 else None
        out.append(Bump(tuple(center), float(parts[1]), float(parts[2]), radius))
    return tuple(out)


def potential_from_section(sec, name: str = "", factor: bool = False) -> PotentialSpec:
    try:
        dim = 1 if factor else sec.getint("dim", 1)
        well = _floats(sec.get("well", "1.0"))
        hc = HolderClass(sec.getint("k", 1), sec.getfloat("mu", 1.0))
        spec = PotentialSpec(
            dim=dim,
            well=tuple(well) if len(well) > 1 else well[0],
            offset=sec.getfloat("offset", -1.0),
            nu=sec.getfloat("nu", 0.25),
            regularity=hc,
            bumps=parse_bumps(sec.get("bumps", ""), dim),
            box=sec.getfloat("box", 3.0),
            name=name,
        )
    except (PreconditionError, ValueError) as exc:
        raise ConfigError(f"[potential]: {exc}") from exc
    return spec


def read_ini(path) -> tuple[configparser.ConfigParser, Path]:
    path = Path(path)
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return cp, path.parent


def echo(cp: configparser.ConfigParser) -> dict:
    return {s: dict(cp[s]) for s in cp.sections()}


def _output_paths(cp, base: Path):
    if not cp.has_section("output"):
        return None, None
    out = cp["output"]
    csv = base / out["csv"] if "csv" in out else None
    js = base / out["json"] if "json" in out else None
    return csv, js


def load_sweep_config(path) -> SweepConfig:
    cp, base = read_ini(path)
    if not cp.has_section("sweep"):
        raise ConfigError("missing [sweep] section")
    s = cp["sweep"]
    try:
        strategy = s.get("strategy")
        if strategy is None:
            raise ConfigError("[sweep] strategy is required")
        if "hbars" in s:
            hbars = _floats(s["hbars"])
        else:
            hbars = geometric_hbars(s.getfloat("hbar_max", 0.2), s.getfloat("hbar_min", 0.02),
                                    s.getint("points", 8))
        spec = None
        dim, lam = 1, 1.0
        if cp.has_section("potential"):
            p = cp["potential"]
            dim = p.getint("dim", 1)
            lam = p.getfloat("lambda", 1.0)
            if strategy != "oscillator":
                spec = potential_from_section(p, s.get("name", ""), factor=strategy == "separable")
        csv, js = _output_paths(cp, base)
        cfg = SweepConfig(
            name=s.get("name", Path(path).stem),
            strategy=strategy,
            gamma=s.getfloat("gamma", 0.0),
            mode=s.get("mode", "capped"),
            hbars=hbars,
            theorem=s.get("theorem", "main"),
            spec=spec,
            dim=dim,
            lam=lam,
            seed=s.getint("seed", 0),
            budget=s.getint("budget", 2_000_000),
            resolution=s.getfloat("resolution", 8.0),
            fit=s.get("fit", "auto"),
            framing=_bool(s.get("framing", "on")),
            timing=_bool(s.get("timing", "off")),
            tolerance=s.getfloat("tolerance") if "tolerance" in s else None,
            kernel=None if s.get("kernel", "auto") == "auto" else s.getint("kernel"),
            csv_path=csv,
            json_path=js,
            echo=echo(cp),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg
