"""Run configuration in flat ``dotted.key = value`` text form.

One setting per line, ``#`` starts a comment.  Every key has a default;
unknown keys and malformed values raise :class:`ConfigError`.  ``to_text``
writes the canonical form, which parses back to an equal configuration.
"""

from dataclasses import dataclass, field, fields
import math
from pathlib import Path

from .errors import ConfigError
from .mesh import CAD_VARIANTS, CUI_DING_WU
from .problems import CATALOG

AUDIT_PROFILES = ("debug", "release")
OUTPUT_FORMATS = ("csv", "vtk")
_TRUE = {"on", "true", "yes", "1"}
_FALSE = {"off", "false", "no", "0"}


def _parse_bool(text):
    low = text.lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def _parse_optional(convert):
    def parse(text):
        return None if text.lower() in ("default", "none") else convert(text)
    return parse


def _parse_formats(text):
    items = tuple(part.strip() for part in text.split(",") if part.strip())
    for item in items:
        if item not in OUTPUT_FORMATS:
            raise ValueError(f"unknown output format {item!r}")
    return items


def _format(value):
    if value is None:
        return "default"
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(value)
    return str(value)


@dataclass
class RunConfig:
    problem_name: str = field(default="orszag_tang", metadata={"key": "problem.name", "parse": str})
    problem_B0: float = field(default=None, metadata={"key": "problem.B0", "parse": _parse_optional(float)})
    problem_mach: float = field(default=None, metadata={"key": "problem.mach", "parse": _parse_optional(float)})
    grid_nx: int = field(default=None, metadata={"key": "grid.nx", "parse": _parse_optional(int)})
    grid_ny: int = field(default=None, metadata={"key": "grid.ny", "parse": _parse_optional(int)})
    t_end: float = field(default=None, metadata={"key": "t_end", "parse": _parse_optional(float)})
    k: int = field(default=2, metadata={"key": "solver.k", "parse": int})
    cad_variant: str = field(default=CUI_DING_WU, metadata={"key": "cad.variant", "parse": str})
    cfl_nu: float = field(default=0.2, metadata={"key": "cfl.nu", "parse": float})
    cfl_theta_cap: float = field(default=1.0, metadata={"key": "cfl.theta_cap", "parse": float})
    cfl_pp_bound: bool = field(default=True, metadata={"key": "cfl.pp_bound", "parse": _parse_bool})
    cos_enabled: bool = field(default=True, metadata={"key": "cos.enabled", "parse": _parse_bool})
    cos_c: float = field(default=1.0, metadata={"key": "cos.c", "parse": float})
    limiter_enabled: bool = field(default=True, metadata={"key": "limiter.enabled", "parse": _parse_bool})
    audit_profile: str = field(default="debug", metadata={"key": "audit.profile", "parse": str})
    output_interval: float = field(default=0.0, metadata={"key": "output.interval", "parse": float})
    output_directory: str = field(default="output", metadata={"key": "output.directory", "parse": str})
    output_formats: tuple = field(default=("csv",), metadata={"key": "output.formats", "parse": _parse_formats})

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.problem_name not in CATALOG:
            raise ConfigError(f"problem.name: unknown problem {self.problem_name!r}")
        if self.cad_variant not in CAD_VARIANTS:
            raise ConfigError(f"cad.variant must be one of {CAD_VARIANTS}")
        if self.audit_profile not in AUDIT_PROFILES:
            raise ConfigError(f"audit.profile must be one of {AUDIT_PROFILES}")
        if not 1 <= self.k <= 3:
            raise ConfigError("solver.k must be 1, 2 or 3")
        for name in ("grid_nx", "grid_ny"):
            value = getattr(self, name)
            if value is not None and value < 2:
                raise ConfigError(f"{_key(name)} must be at least 2")
        if self.t_end is not None and not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ConfigError("t_end must be positive")
        if not 0 < self.cfl_nu <= 1:
            raise ConfigError("cfl.nu must lie in (0, 1]")
        if not 0 < self.cfl_theta_cap <= 1:
            raise ConfigError("cfl.theta_cap must lie in (0, 1]")
        if self.cos_c < 0:
            raise ConfigError("cos.c must be nonnegative")
        if self.output_interval < 0:
            raise ConfigError("output.interval must be nonnegative")

    def to_text(self):
        return "".join(f"{_key(f.name)} = {_format(getattr(self, f.name))}\n" for f in fields(self))

    def with_overrides(self, pairs):
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(_parse_pairs(pairs))
        return RunConfig(**values)

    def problem(self):
        from .problems import init_problem

        return init_problem(self.problem_name, mach=self.problem_mach, b0=self.problem_B0)

    def solver_options(self):
        from .solver import SolverOptions

        return SolverOptions(k=self.k, cad_variant=self.cad_variant, cfl_nu=self.cfl_nu,
                             theta_cap=self.cfl_theta_cap, pp_bound=self.cfl_pp_bound,
                             cos_enabled=self.cos_enabled, cos_c=self.cos_c,
                             limiter_enabled=self.limiter_enabled,
                             audit_every=1 if self.audit_profile == "debug" else 10)


_BY_KEY = {f.metadata["key"]: f for f in fields(RunConfig)}


def _key(name):
    return next(f.metadata["key"] for f in fields(RunConfig) if f.name == name)


def _parse_pairs(pairs):
    values = {}
    for lineno, key, text in pairs:
        where = f"line {lineno}: " if lineno else ""
        if key not in _BY_KEY:
            raise ConfigError(f"{where}unknown key {key!r}")
        spec = _BY_KEY[key]
        try:
            values[spec.name] = spec.metadata["parse"](text)
        except ValueError as exc:
            raise ConfigError(f"{where}bad value for {key}: {exc}") from None
    return values


def split_assignment(text, lineno=None):
    if "=" not in text:
        where = f"line {lineno}: " if lineno else ""
        raise ConfigError(f"{where}expected 'key = value', got {text.strip()!r}")
    key, value = text.split("=", 1)
    return lineno, key.strip(), value.strip()


def parse_config(text):
    """Parse the flat key/value format into a :class:`RunConfig`."""
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            pairs.append(split_assignment(line, lineno))
    return RunConfig(**_parse_pairs(pairs))


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_config(text)
