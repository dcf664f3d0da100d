"""Experiment configuration: a TOML file validated in full before any compute.

Every section is optional; missing keys take the defaults below.  Errors
point at the source line and the ``[section] key`` at fault.  A ``manifest.json``
written by a previous run is also accepted, in which case its embedded
resolved config is used.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .domain import DomainMesh, TimeGrid, build_interval_mesh, build_rectangle_mesh
from .inverse import geometric_rho_grid
from .wave import DampingField

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config",
           "build_damping", "PROFILES"]

PROFILES = ("constant", "sine", "bump", "piecewise")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class _Source:
    """Maps ``(section, key)`` back to a line of the original text."""

    def __init__(self, text: str, name: str):
        self.name = name
        self.lines = {}
        section = None
        for no, line in enumerate(text.splitlines(), 1):
            s = line.strip()
            m = re.match(r"\[\s*([A-Za-z0-9_]+)\s*\]", s)
            if m:
                section = m.group(1)
                self.lines.setdefault((section, None), no)
                continue
            m = re.match(r"([A-Za-z0-9_]+)\s*=", s)
            if m:
                self.lines.setdefault((section, m.group(1)), no)

    def error(self, section, key, msg):
        no = self.lines.get((section, key)) or self.lines.get((section, None))
        where = f"{self.name}:{no}" if no else self.name
        field_ = f"[{section}] {key}" if key else f"[{section}]"
        return ConfigError(f"{where}: {field_}: {msg}")


@dataclass(frozen=True)
class DomainSpec:
    dim: int = 1
    n: int = 256
    nx: int = 64
    ny: int = 64

    def build(self) -> DomainMesh:
        if self.dim == 1:
            return build_interval_mesh(self.n)
        return build_rectangle_mesh(self.nx, self.ny)


@dataclass(frozen=True)
class TimeSpec:
    tau: float = 2.0
    cfl_factor: float = 0.9


@dataclass(frozen=True)
class DampingSpec:
    profile: str = "constant"
    value: float = 0.5
    base: float = 0.3
    amplitude: float = 0.2
    center: float = 0.5
    width: float = 0.3
    breaks: tuple = ()
    values: tuple = ()


@dataclass(frozen=True)
class InitialSpec:
    mode: int = 0
    n_modes: int = 5


@dataclass(frozen=True)
class SweepSpec:
    rho: tuple = tuple(geometric_rho_grid())


@dataclass(frozen=True)
class ReconstructSpec:
    rho: float = 0.01
    noise_level: float = 0.01
    seed: int = 20240611
    ridge: float = 0.0
    # reaches far below rho = 0.01 so the rise of the O(h^2)/rho term shows
    rho_scan: tuple = (0.2, 0.1, 0.05, 0.02, 0.01, 1e-3, 1e-4, 1e-5, 1e-6,
                       1e-7, 1e-8, 1e-9, 1e-10)


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "runs/out"
    dump: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    domain: DomainSpec = field(default_factory=DomainSpec)
    time: TimeSpec = field(default_factory=TimeSpec)
    damping: DampingSpec = field(default_factory=DampingSpec)
    initial: InitialSpec = field(default_factory=InitialSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    reconstruct: ReconstructSpec = field(default_factory=ReconstructSpec)
    output: OutputSpec = field(default_factory=OutputSpec)

    def to_dict(self) -> dict:
        """Fully resolved config holding only the keys that apply."""
        d = asdict(self)
        for key in (("nx", "ny") if self.domain.dim == 1 else ("n",)):
            del d["domain"][key]
        d["damping"] = {k: v for k, v in d["damping"].items()
                        if k in ("profile",) + _PROFILE_KEYS[self.damping.profile]}
        # tuples become lists so the dict survives a JSON round trip unchanged
        return json.loads(json.dumps(d))

    @property
    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def mesh(self) -> DomainMesh:
        return self.domain.build()

    def time_grid(self, mesh: DomainMesh) -> TimeGrid:
        return TimeGrid.from_cfl(self.time.tau, mesh.h, self.time.cfl_factor)

    def damping_field(self, mesh: DomainMesh) -> DampingField:
        return build_damping(self.damping, mesh)

    def with_output(self, out_dir) -> "ExperimentConfig":
        out = OutputSpec(dir=str(out_dir), dump=self.output.dump)
        return replace(self, output=out)

    def with_dump(self, dump: bool) -> "ExperimentConfig":
        return replace(self, output=OutputSpec(dir=self.output.dir, dump=dump))


def build_damping(spec: DampingSpec, mesh: DomainMesh) -> DampingField:
    """Sample the configured profile at the gamma1 nodes."""
    if spec.profile == "constant":
        return DampingField.constant(mesh, spec.value)
    if mesh.dim == 1:
        raise ConfigError(f"damping profile {spec.profile!r} needs a 2-D domain")
    y = mesh.gamma1_coords[:, 0]
    if spec.profile == "sine":
        vals = spec.base + spec.amplitude * np.sin(np.pi * y)
    elif spec.profile == "bump":
        s = np.abs(y - spec.center) / spec.width
        vals = spec.base + np.where(
            s < 1.0, spec.amplitude * 0.5 * (1.0 + np.cos(np.pi * s)), 0.0)
    else:
        idx = np.searchsorted(np.asarray(spec.breaks), y, side="right")
        vals = np.asarray(spec.values, dtype=float)[idx]
    return DampingField(mesh, vals)


_PROFILE_KEYS = {
    "constant": ("value",),
    "sine": ("base", "amplitude"),
    "bump": ("base", "amplitude", "center", "width"),
    "piecewise": ("breaks", "values"),
}

# key -> kind per section; kind drives coercion and checks
_SCHEMA = {
    "domain": {"dim": "int", "n": "int", "nx": "int", "ny": "int"},
    "time": {"tau": "float", "cfl_factor": "float"},
    "damping": {"profile": "str", "value": "float", "base": "float",
                "amplitude": "float", "center": "float", "width": "float",
                "breaks": "floats", "values": "floats"},
    "initial": {"mode": "int", "n_modes": "int"},
    "sweep": {"rho": "floats", "rho_max": "float", "rho_min": "float",
              "ratio": "float"},
    "reconstruct": {"rho": "float", "noise_level": "float", "seed": "int",
                    "ridge": "float", "rho_scan": "floats"},
    "output": {"dir": "str", "dump": "bool"},
}


def _coerce(kind, val, err):
    if kind == "int":
        if isinstance(val, bool) or not isinstance(val, int):
            raise err(f"expected an integer, got {val!r}")
        return val
    if kind == "float":
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise err(f"expected a number, got {val!r}")
        if not math.isfinite(val):
            raise err(f"must be finite, got {val!r}")
        return float(val)
    if kind == "floats":
        if not isinstance(val, list):
            raise err(f"expected a list of numbers, got {val!r}")
        return tuple(_coerce("float", v, err) for v in val)
    if kind == "bool":
        if not isinstance(val, bool):
            raise err(f"expected true or false, got {val!r}")
        return val
    if not isinstance(val, str):
        raise err(f"expected a string, got {val!r}")
    return val


def parse_config(data: dict, src: _Source | None = None) -> ExperimentConfig:
    """Validate a raw mapping and resolve defaults."""
    src = src or _Source("", "<config>")
    raw = {}
    for section, body in data.items():
        if section not in _SCHEMA:
            raise src.error(section, None, f"unknown section (expected one of "
                            f"{', '.join(_SCHEMA)})")
        if not isinstance(body, dict):
            raise src.error(section, None, "expected a table")
        vals = {}
        for key, val in body.items():
            if key not in _SCHEMA[section]:
                raise src.error(section, key, "unknown key (expected one of "
                                f"{', '.join(_SCHEMA[section])})")

            def err(msg, s=section, k=key):
                return src.error(s, k, msg)
            vals[key] = _coerce(_SCHEMA[section][key], val, err)
        raw[section] = vals

    def check(ok, section, key, msg):
        if not ok:
            raise src.error(section, key, msg)

    d = raw.get("domain", {})
    dim = d.get("dim", 1)
    check(dim in (1, 2), "domain", "dim", f"must be 1 or 2, got {dim}")
    for key in ("n", "nx", "ny"):
        if key in d:
            check(d[key] >= 4, "domain", key, f"must be >= 4, got {d[key]}")
    if dim == 1:
        check("nx" not in d and "ny" not in d, "domain", "nx" if "nx" in d else "ny",
              "only valid with dim = 2")
    else:
        check("n" not in d, "domain", "n", "use nx and ny with dim = 2")
    domain = DomainSpec(dim=dim, **{k: d[k] for k in ("n", "nx", "ny") if k in d})

    t = raw.get("time", {})
    tau = t.get("tau", 2.0)
    check(tau > 0, "time", "tau", f"must be > 0, got {tau}")
    # stability is the solver's call; only the sign is a config error
    cfl = t.get("cfl_factor", 0.9 if dim == 1 else 0.6)
    check(cfl > 0, "time", "cfl_factor", f"must be > 0, got {cfl}")
    time = TimeSpec(tau=tau, cfl_factor=cfl)

    b = raw.get("damping", {})
    profile = b.get("profile", "constant")
    check(profile in PROFILES, "damping", "profile",
          f"must be one of {', '.join(PROFILES)}, got {profile!r}")
    check(dim == 2 or profile == "constant", "damping", "profile",
          "gamma1 is a single point in 1-D; only 'constant' applies")
    for key in b:
        check(key == "profile" or key in _PROFILE_KEYS[profile], "damping", key,
              f"not used by profile {profile!r} (expects "
              f"{', '.join(_PROFILE_KEYS[profile])})")
    for key in ("value", "base", "amplitude"):
        if key in b:
            check(b[key] >= 0, "damping", key, f"must be >= 0, got {b[key]}")
    if profile == "bump":
        c = b.get("center", 0.5)
        w = b.get("width", 0.3)
        check(w > 0, "damping", "width", f"must be > 0, got {w}")
        check(c - w > 0 and c + w < 1, "damping", "center" if "center" in b else "width",
              f"bump support ({c - w:g}, {c + w:g}) must lie strictly inside (0, 1)")
    if profile == "piecewise":
        brk, vals = b.get("breaks", ()), b.get("values", ())
        check(len(vals) == len(brk) + 1, "damping", "values",
              f"need len(breaks) + 1 = {len(brk) + 1} values, got {len(vals)}")
        check(all(0 < x < 1 for x in brk) and list(brk) == sorted(set(brk)),
              "damping", "breaks", "must be strictly increasing inside (0, 1)")
        check(all(v >= 0 for v in vals), "damping", "values", "must all be >= 0")
    damping = DampingSpec(profile=profile, **{k: v for k, v in b.items() if k != "profile"})

    i = raw.get("initial", {})
    mode = i.get("mode", 0)
    n_modes = i.get("n_modes", 5)
    check(mode >= 0, "initial", "mode", f"must be >= 0, got {mode}")
    check(n_modes >= 1, "initial", "n_modes", f"must be >= 1, got {n_modes}")
    initial = InitialSpec(mode=mode, n_modes=max(n_modes, mode + 1))

    s = raw.get("sweep", {})
    if "rho" in s:
        check(not ({"rho_max", "rho_min", "ratio"} & s.keys()), "sweep", "rho",
              "give either an explicit rho list or rho_max/rho_min/ratio")
        rho = s["rho"]
    else:
        hi, lo, q = s.get("rho_max", 0.1), s.get("rho_min", 1e-3), s.get("ratio", 0.5)
        check(0 < q < 1, "sweep", "ratio", f"must be in (0, 1), got {q}")
        check(0 < lo <= hi, "sweep", "rho_min", f"need 0 < rho_min <= rho_max, got {lo}")
        rho = tuple(geometric_rho_grid(hi, lo, q))
    check(len(rho) >= 1, "sweep", "rho", "must not be empty")
    check(all(0 < r <= 1 for r in rho), "sweep", "rho", "values must lie in (0, 1]")
    check(all(a > b_ for a, b_ in zip(rho, rho[1:])), "sweep", "rho",
          "values must be strictly decreasing")
    sweep = SweepSpec(rho=tuple(float(r) for r in rho))

    r = raw.get("reconstruct", {})
    rr = r.get("rho", 0.01)
    check(0 < rr <= 1, "reconstruct", "rho", f"must be in (0, 1], got {rr}")
    lvl = r.get("noise_level", 0.01)
    check(lvl >= 0, "reconstruct", "noise_level", f"must be >= 0, got {lvl}")
    check(r.get("seed", 0) >= 0, "reconstruct", "seed", "must be >= 0")
    check(r.get("ridge", 0.0) >= 0, "reconstruct", "ridge", "must be >= 0")
    scan = r.get("rho_scan", ReconstructSpec.rho_scan)
    check(len(scan) >= 1 and all(0 < x <= 1 for x in scan), "reconstruct",
          "rho_scan", "values must lie in (0, 1]")
    reconstruct = ReconstructSpec(**{**r, "rho_scan": tuple(scan)})

    o = raw.get("output", {})
    check(o.get("dir", "x") != "", "output", "dir", "must not be empty")
    output = OutputSpec(**o)

    return ExperimentConfig(domain=domain, time=time, damping=damping,
                            initial=initial, sweep=sweep,
                            reconstruct=reconstruct, output=output)


def load_config(path) -> ExperimentConfig:
    """Read and validate a TOML config (or a previous run's manifest)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    if path.suffix == ".json":
        try:
            data = json.loads(text)["config"]
        except (ValueError, KeyError, TypeError):
            raise ConfigError(f"{path}: not a run manifest with a 'config' entry") from None
        return parse_config(data, _Source("", str(path)))
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, _Source(text, str(path)))
