"""Experiment configuration read from TOML, with strict key checking."""

import math
import sys
from dataclasses import asdict, dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..errors import ConfigError

KINDS = ("girsanov", "scaling", "gibbs-invariance", "convergence", "kernel-convergence", "walk-scaling")
SEED_LIMIT = 2 ** 64


def _opt(default, kind="float"):
    """Dataclass field with a coercion tag: float, int, floats, ints, str, bool."""
    if isinstance(default, (list, tuple)):
        return field(default=tuple(default), metadata={"kind": kind})
    return field(default=default, metadata={"kind": kind})


def _coerce(value, kind, where):
    def num(v, integer):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {v!r}")
        if integer:
            if isinstance(v, float) and not v.is_integer():
                raise ConfigError(f"{where}: expected an integer, got {v!r}")
            return int(v)
        return float(v)

    if kind in ("float", "int"):
        return num(value, kind == "int")
    if kind in ("floats", "ints"):
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{where}: expected a non-empty list")
        return tuple(num(v, kind == "ints") for v in value)
    if kind == "bound":
        # a number or the strings "inf" / "-inf"
        if isinstance(value, str) and value in ("inf", "+inf", "-inf"):
            return float(value)
        return num(value, False)
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true or false")
        return value
    raise AssertionError(kind)


def _build(cls, table, where):
    if not isinstance(table, dict):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name for f in fields(cls)}
    extra = sorted(set(table) - names)
    if extra:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(extra)}")
    kw = {f.name: _coerce(table[f.name], f.metadata["kind"], f"{where}.{f.name}") for f in fields(cls) if f.name in table}
    obj = cls(**kw)
    obj.validate(where)
    return obj


def _check(cond, msg):
    if not cond:
        raise ConfigError(msg)


@dataclass(frozen=True)
class BridgeSetup:
    """Boundary data, tilts and grid shared by the continuous equivalence tests."""

    a: float = _opt(0.0)
    b: float = _opt(1.0)
    x: tuple = _opt((2.0, 1.0), "floats")
    y: tuple = _opt((2.0, 1.0), "floats")
    floor: float = _opt(0.0)
    tilts: tuple = _opt((1.0, 1.0), "floats")
    intervals: int = _opt(256, "int")
    test_nodes: int = _opt(15, "int")
    max_attempts: int = _opt(10 ** 7, "int")

    def validate(self, where):
        _check(self.a < self.b, f"{where}: need a < b")
        _check(len(self.x) == len(self.y) == len(self.tilts), f"{where}: x, y and tilts need equal length")
        _check(all(p > q for p, q in zip(self.x, self.x[1:])), f"{where}: x must be strictly decreasing")
        _check(all(p > q for p, q in zip(self.y, self.y[1:])), f"{where}: y must be strictly decreasing")
        _check(min(self.x[-1], self.y[-1]) > self.floor, f"{where}: floor must lie below x and y")
        _check(all(t >= 0 and math.isfinite(t) for t in self.tilts), f"{where}: tilts must be finite and >= 0")
        _check(self.intervals >= 2, f"{where}: intervals must be >= 2")
        _check(1 <= self.test_nodes <= self.intervals - 1, f"{where}: test_nodes must be in [1, intervals - 1]")
        _check(self.max_attempts >= 1, f"{where}: max_attempts must be >= 1")

    @property
    def k(self):
        return len(self.x)


@dataclass(frozen=True)
class GirsanovParams(BridgeSetup):
    # the parabola (tilt/2) s^2 + c s + d; every curve carries the same tilt
    tilt: float = _opt(1.0)
    c: float = _opt(0.0)
    d: float = _opt(0.0)
    tilts: tuple = _opt((), "floats")

    def __post_init__(self):
        if not self.tilts:
            object.__setattr__(self, "tilts", (self.tilt,) * len(self.x))

    def validate(self, where):
        _check(self.tilt >= 0 and math.isfinite(self.tilt), f"{where}: tilt must be finite and >= 0")
        _check(all(t == self.tilt for t in self.tilts), f"{where}: use 'tilt' (one value for every curve)")
        BridgeSetup.validate(self, where)


@dataclass(frozen=True)
class ScalingParams(BridgeSetup):
    lam: float = _opt(2.0 ** (1.0 / 3.0))
    r: float = _opt(0.0)
    u: float = _opt(0.0)

    def validate(self, where):
        BridgeSetup.validate(self, where)
        _check(self.lam > 0 and math.isfinite(self.lam), f"{where}: lam must be positive")


@dataclass(frozen=True)
class ContinuousGibbsParams(BridgeSetup):
    window_curves: tuple = _opt((1, 2), "ints")
    window: tuple = _opt((0.1, 0.9), "floats")

    def validate(self, where):
        BridgeSetup.validate(self, where)
        _check(len(self.window_curves) == 2 and 1 <= self.window_curves[0] <= self.window_curves[1] <= self.k,
               f"{where}: window_curves must be [k1, k2] with 1 <= k1 <= k2 <= {self.k}")
        _check(len(self.window) == 2 and self.a <= self.window[0] < self.window[1] <= self.b,
               f"{where}: window must be [c, d] inside [a, b]")


@dataclass(frozen=True)
class DiscreteGibbsParams:
    n_curves: int = _opt(3, "int")
    m_param: int = _opt(1000, "int")
    burn_in: int = _opt(-1, "int")
    thin: int = _opt(2, "int")
    window_width: int = _opt(128, "int")
    control_lam: float = _opt(0.0)
    enabled: bool = _opt(True, "bool")

    def validate(self, where):
        _check(self.n_curves >= 1 and self.m_param >= 2, f"{where}: need n_curves >= 1 and m_param >= 2")
        _check(self.thin >= 1, f"{where}: thin must be >= 1")
        _check(2 <= self.window_width <= 2 * self.m_param, f"{where}: window_width must be in [2, 2 m_param]")
        _check(self.control_lam >= 0, f"{where}: control_lam must be >= 0")


@dataclass(frozen=True)
class WalkScalingParams:
    m_values: tuple = _opt((200, 800), "ints")
    a: float = _opt(0.0)
    b: float = _opt(1.0)
    x: tuple = _opt((2.0, 1.0), "floats")
    y: tuple = _opt((2.0, 1.0), "floats")
    tilt: float = _opt(1.0)
    intervals: int = _opt(256, "int")

    def validate(self, where):
        _check(len(self.m_values) >= 2 and all(m >= 8 for m in self.m_values), f"{where}: need >= 2 m_values >= 8")
        _check(list(self.m_values) == sorted(set(self.m_values)), f"{where}: m_values must be increasing")
        _check(self.a < self.b, f"{where}: need a < b")
        _check(len(self.x) == len(self.y) and all(v > 0 for v in self.x + self.y), f"{where}: x, y positive, equal length")
        _check(all(p > q for p, q in zip(self.x, self.x[1:])) and all(p > q for p, q in zip(self.y, self.y[1:])),
               f"{where}: x and y must be strictly decreasing")
        _check(self.tilt >= 0, f"{where}: tilt must be >= 0")
        _check(self.intervals % 2 == 0 and self.intervals >= 2, f"{where}: intervals must be even")


@dataclass(frozen=True)
class ConvergenceParams:
    n_values: tuple = _opt((25, 50, 100, 200), "ints")
    s_values: tuple = _opt((-2.0, -1.0, 0.0, 1.0, 2.0), "floats")
    n_report: int = _opt(100, "int")
    box: float = _opt(2.0)
    grid_pts: int = _opt(21, "int")
    cdf_tol: float = _opt(0.02)
    dpp_samples: int = _opt(4000, "int")
    dpp_s_values: tuple = _opt((-1.0, 0.0, 1.0), "floats")
    dpp_tol: float = _opt(0.05)
    tail_n: int = _opt(100, "int")
    tail_m_values: tuple = _opt((2.0, 4.0, 6.0), "floats")
    envelope_lo: float = _opt(1.0)
    envelope_hi: float = _opt(6.0)
    envelope_pts: int = _opt(11, "int")
    envelope_max: float = _opt(10.0)
    order: int = _opt(40, "int")

    def validate(self, where):
        _check(all(n >= 1 for n in self.n_values), f"{where}: n_values must be positive")
        _check(self.n_report >= 1 and self.tail_n >= 1, f"{where}: n_report and tail_n must be positive")
        _check(self.box >= 0 and self.grid_pts >= 2, f"{where}: need box >= 0 and grid_pts >= 2")
        _check(self.cdf_tol > 0 and self.dpp_tol > 0, f"{where}: tolerances must be positive")
        _check(self.dpp_samples >= 0, f"{where}: dpp_samples must be >= 0")
        _check(self.envelope_lo < self.envelope_hi and self.envelope_pts >= 2, f"{where}: bad envelope grid")
        _check(self.order >= 4, f"{where}: order must be >= 4")


SECTIONS = {
    "girsanov": {"girsanov": GirsanovParams},
    "scaling": {"scaling": ScalingParams},
    "gibbs-invariance": {"continuous": ContinuousGibbsParams, "discrete": DiscreteGibbsParams},
    "walk-scaling": {"walk_scaling": WalkScalingParams},
    "convergence": {"convergence": ConvergenceParams},
    "kernel-convergence": {"convergence": ConvergenceParams},
}

TOP_KEYS = ("kind", "seed", "samples", "level", "output_dir")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int = 0
    samples: int = 10_000
    level: float = 0.01
    output_dir: str = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < SEED_LIMIT:
            raise ConfigError("seed must be an integer in [0, 2^64)")
        if isinstance(self.samples, bool) or not isinstance(self.samples, int) or self.samples < 100:
            raise ConfigError("samples must be an integer >= 100")
        if not 0 < self.level <= 0.1:
            raise ConfigError("level must lie in (0, 0.1]")
        params = dict(self.params)
        for name, cls in SECTIONS[self.kind].items():
            if name not in params:
                params[name] = cls()
                params[name].validate(name)
            elif not isinstance(params[name], cls):
                raise ConfigError(f"section [{name}] has the wrong type")
        extra = set(params) - set(SECTIONS[self.kind])
        if extra:
            raise ConfigError(f"sections not used by {self.kind}: {', '.join(sorted(extra))}")
        object.__setattr__(self, "params", params)

    def section(self, name):
        return self.params[name]

    def as_dict(self):
        return {
            "kind": self.kind, "seed": self.seed, "samples": self.samples, "level": self.level,
            "output_dir": self.output_dir,
            "params": {name: asdict(p) for name, p in self.params.items()},
        }


def config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a table")
    kind = data.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"missing or unknown 'kind' (expected one of {', '.join(KINDS)})")
    sections = SECTIONS[kind]
    extra = sorted(set(data) - set(TOP_KEYS) - set(sections))
    if extra:
        raise ConfigError(f"unknown key(s) at top level: {', '.join(extra)}")
    top = {}
    for key, kind_tag in (("seed", "int"), ("samples", "int"), ("level", "float")):
        if key in data:
            top[key] = _coerce(data[key], kind_tag, key)
    if "output_dir" in data:
        top["output_dir"] = _coerce(data["output_dir"], "str", "output_dir")
    params = {name: _build(cls, data[name], name) for name, cls in sections.items() if name in data}
    return ExperimentConfig(kind=kind, params=params, **top)


def load_config(path):
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return config_from_dict(data)


def default_config(kind, **overrides):
    return ExperimentConfig(kind=kind, **overrides)
