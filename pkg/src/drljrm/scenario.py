"""MC-NOMA problem instances: configuration, generation and text/CSV I/O.

All power quantities are converted to watts once, when a :class:`Scenario`
is generated; everything downstream works in linear units.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "ScenarioConfig",
    "Scenario",
    "ConfigError",
    "dbm_to_watts",
    "generate",
    "parse_config_text",
    "load_config",
    "dump_scenario",
    "load_scenario",
]


class ConfigError(ValueError):
    """Raised for malformed or out-of-range configuration values."""


def dbm_to_watts(x: float) -> float:
    """Convert a power level in dBm to watts."""
    if not math.isfinite(x):
        raise ConfigError(f"power level must be finite, got {x!r}")
    return 10.0 ** (x / 10.0) * 1e-3


@dataclass(frozen=True)
class ScenarioConfig:
    num_users: int = 4
    num_subcarriers: int = 3
    max_per_subcarrier: int = 2
    total_power_dbm: float = 40.0
    bandwidth_hz: float = 5e6
    noise_psd_dbm_per_hz: float = -173.0
    pdsc_threshold_dbm: float = -110.0
    sic_error_sq: float = 1e-4
    radius_min: float = 30.0
    radius_max: float = 300.0
    pathloss_exponent: float = 3.6
    pathloss_intercept_db: float = 38.46
    ppp_density: float = 2.0
    qos_mean: float = 80e3
    qos_std: float = 10e3
    qos_floor: float = 1e3
    rng_seed: int = 0

    def validate(self) -> None:
        if self.num_users < 1:
            raise ConfigError("num_users must be >= 1")
        if self.num_subcarriers < 1:
            raise ConfigError("num_subcarriers must be >= 1")
        if not 1 <= self.max_per_subcarrier <= self.num_users:
            raise ConfigError("max_per_subcarrier must lie in [1, num_users]")
        if self.sic_error_sq < 0:
            raise ConfigError("sic_error_sq must be >= 0")
        if self.radius_min <= 0:
            raise ConfigError("user distances must be positive (radius_min <= 0)")
        if self.radius_min >= self.radius_max:
            raise ConfigError("radius_min must be < radius_max")
        if self.qos_std < 0:
            raise ConfigError("qos_std must be >= 0")
        if self.bandwidth_hz <= 0:
            raise ConfigError("bandwidth_hz must be positive")
        for name in ("total_power_dbm", "noise_psd_dbm_per_hz", "pdsc_threshold_dbm"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Scenario:
    """An immutable MC-NOMA instance.

    ``gains[i, m]`` is the linear power gain of user ``m`` on subcarrier
    ``i``; the array is read-only.
    """

    gains: np.ndarray
    distances: np.ndarray
    weights: np.ndarray
    qos_min: np.ndarray
    total_power: float
    noise_var: float
    pdsc_threshold: float
    sic_error_sq: float
    bandwidth: float
    max_per_subcarrier: int
    config: ScenarioConfig | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("gains", "distances", "weights", "qos_min"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.gains.ndim != 2:
            raise ConfigError("gains must be a (num_subcarriers, num_users) matrix")
        n_users = self.gains.shape[1]
        for name in ("distances", "weights", "qos_min"):
            if getattr(self, name).shape != (n_users,):
                raise ConfigError(f"{name} must have one entry per user")
        if np.any(self.gains <= 0):
            raise ConfigError("channel gains must be positive")
        if np.any(self.distances <= 0):
            raise ConfigError("user distances must be positive")
        if self.noise_var <= 0 or self.total_power <= 0:
            raise ConfigError("noise_var and total_power must be positive")
        if not 1 <= self.max_per_subcarrier <= n_users:
            raise ConfigError("max_per_subcarrier must lie in [1, num_users]")

    @property
    def num_users(self) -> int:
        return self.gains.shape[1]

    @property
    def num_subcarriers(self) -> int:
        return self.gains.shape[0]

    @property
    def subcarrier_bandwidth(self) -> float:
        return self.bandwidth / self.num_subcarriers

    def with_params(self, **changes) -> "Scenario":
        """Copy with some scalar parameters replaced (channel draw unchanged)."""
        return dataclasses.replace(self, **changes)

    def same_as(self, other: "Scenario") -> bool:
        """Bitwise equality of every numeric field."""
        arrays = ("gains", "distances", "weights", "qos_min")
        scalars = ("total_power", "noise_var", "pdsc_threshold", "sic_error_sq",
                   "bandwidth", "max_per_subcarrier")
        return all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays) and all(
            getattr(self, s) == getattr(other, s) for s in scalars
        )


def _pathloss_linear(config: ScenarioConfig, d: np.ndarray) -> np.ndarray:
    pl_db = config.pathloss_intercept_db + 10.0 * config.pathloss_exponent * np.log10(d)
    return 10.0 ** (pl_db / 10.0)


def generate(config: ScenarioConfig) -> Scenario:
    """Draw a scenario: users uniform in the annulus, Rayleigh fading."""
    config.validate()
    rng = np.random.default_rng(config.rng_seed)
    m, n_f = config.num_users, config.num_subcarriers

    # uniform placement over the annulus area; the angle does not affect
    # any single-cell quantity but is drawn to keep the stream layout fixed
    r2 = rng.uniform(config.radius_min**2, config.radius_max**2, size=m)
    distances = np.sqrt(r2)
    rng.uniform(0.0, 2.0 * np.pi, size=m)

    g = (rng.standard_normal((n_f, m)) + 1j * rng.standard_normal((n_f, m))) / np.sqrt(2.0)
    gains = np.abs(g) ** 2 / _pathloss_linear(config, distances)[None, :]
    # |g|^2 can underflow to exactly zero with vanishing probability
    gains = np.maximum(gains, np.finfo(np.float64).tiny)

    qos = rng.normal(config.qos_mean, config.qos_std, size=m)
    qos = np.maximum(qos, config.qos_floor)

    noise_var = config.bandwidth_hz * dbm_to_watts(config.noise_psd_dbm_per_hz) / n_f
    return Scenario(
        gains=gains,
        distances=distances,
        weights=distances / distances.max(),
        qos_min=qos,
        total_power=dbm_to_watts(config.total_power_dbm),
        noise_var=noise_var,
        pdsc_threshold=dbm_to_watts(config.pdsc_threshold_dbm),
        sic_error_sq=float(config.sic_error_sq),
        bandwidth=float(config.bandwidth_hz),
        max_per_subcarrier=int(config.max_per_subcarrier),
        config=config,
    )


# --- key = value config files -------------------------------------------------

def _coerce(raw: str):
    low = raw.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Comma-separated values become lists. Values are coerced to bool, int or
    float where possible.
    """
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if "," in value:
            out[key] = [_coerce(v.strip()) for v in value.split(",") if v.strip()]
        else:
            out[key] = _coerce(value)
    return out


def scenario_config_from_dict(values: dict) -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from the keys it knows, ignoring others."""
    known = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
    kwargs = {}
    for key, value in values.items():
        if key not in known:
            continue
        if isinstance(value, list):
            raise ConfigError(f"{key} must be a scalar")
        typ = known[key].type
        try:
            kwargs[key] = int(value) if typ == "int" else float(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: cannot convert {value!r}") from exc
    cfg = ScenarioConfig(**kwargs)
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ScenarioConfig:
    return scenario_config_from_dict(parse_config_text(Path(path).read_text()))


# --- CSV dump / load ------------------------------------------------------------

_SCALARS = ("total_power", "noise_var", "pdsc_threshold", "sic_error_sq", "bandwidth",
            "max_per_subcarrier")


def dump_scenario(scenario: Scenario, path: str | Path | None = None) -> str:
    """Serialise to CSV blocks: scalars, the gain matrix (row-major), per-user vectors.

    Floats are written with ``repr`` so a dump/load round trip is exact.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["#scalars"])
    for name in _SCALARS:
        w.writerow([name, repr(getattr(scenario, name))])
    w.writerow(["#gains", scenario.num_subcarriers, scenario.num_users])
    for row in scenario.gains:
        w.writerow([repr(float(x)) for x in row])
    w.writerow(["#users", "distance", "weight", "qos_min"])
    for d, wt, q in zip(scenario.distances, scenario.weights, scenario.qos_min):
        w.writerow([repr(float(d)), repr(float(wt)), repr(float(q))])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def load_scenario(source: str | Path) -> Scenario:
    """Inverse of :func:`dump_scenario`; accepts a path or the CSV text itself."""
    text = source
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    scalars: dict = {}
    gains: list[list[float]] = []
    users: list[list[float]] = []
    block = None
    for row in rows:
        if not row:
            continue
        if row[0].startswith("#"):
            block = row[0][1:]
            continue
        if block == "scalars":
            scalars[row[0]] = float(row[1])
        elif block == "gains":
            gains.append([float(x) for x in row])
        elif block == "users":
            users.append([float(x) for x in row])
        else:
            raise ConfigError(f"unexpected CSV row outside a block: {row!r}")
    missing = [s for s in _SCALARS if s not in scalars]
    if missing:
        raise ConfigError(f"scenario file missing scalars: {missing}")
    u = np.array(users, dtype=np.float64)
    return Scenario(
        gains=np.array(gains, dtype=np.float64),
        distances=u[:, 0],
        weights=u[:, 1],
        qos_min=u[:, 2],
        total_power=scalars["total_power"],
        noise_var=scalars["noise_var"],
        pdsc_threshold=scalars["pdsc_threshold"],
        sic_error_sq=scalars["sic_error_sq"],
        bandwidth=scalars["bandwidth"],
        max_per_subcarrier=int(scalars["max_per_subcarrier"]),
    )
