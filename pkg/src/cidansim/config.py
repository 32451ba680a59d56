"""TOML configuration: geometry, timing, energy, host-cost profiles, seed."""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dram import DramGeometry, EnergyParams, TimingParams

BACKEND_NAMES = ("cidan", "ambit", "redram", "drisa")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class HostCostModel:
    """Host CPU time for the stages that stay on the processor.

    ``ns_per_byte`` prices byte-oriented stages (AES SubBytes/ShiftRows,
    loading data); ``ns_per_word`` a 64-bit ALU op (shift, add, popcount);
    ``ns_per_divide`` one floating-point division.
    """

    ns_per_byte: float = 0.0
    ns_per_word: float = 0.0
    ns_per_divide: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be non-negative")

    def bytes_ns(self, n: int) -> float:
        return self.ns_per_byte * n

    def words_ns(self, n: int) -> float:
        return self.ns_per_word * n

    def divides_ns(self, n: int) -> float:
        return self.ns_per_divide * n


@dataclass(frozen=True)
class SimConfig:
    geometry: DramGeometry = field(default_factory=DramGeometry)
    timing: TimingParams = field(default_factory=TimingParams)
    energy: EnergyParams = field(default_factory=EnergyParams)
    host_profiles: dict = field(default_factory=lambda: {"zero": HostCostModel()})
    backends: tuple = ("cidan", "redram", "ambit")
    seed: int = 0
    output_dir: str = "results"
    source: str = "<defaults>"

    def host(self, profile: str = "zero") -> HostCostModel:
        try:
            return self.host_profiles[profile]
        except KeyError:
            raise ConfigError(f"unknown host profile {profile!r}", source=self.source) from None

    def as_dict(self) -> dict:
        return {
            "geometry": asdict(self.geometry),
            "timing": asdict(self.timing),
            "energy": asdict(self.energy),
            "host": {k: asdict(v) for k, v in sorted(self.host_profiles.items())},
            "experiment": {"backends": list(self.backends), "seed": self.seed,
                           "output_dir": self.output_dir},
        }

    def digest(self) -> str:
        """Stable hash of every simulation-relevant setting."""
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _line_of(text: str, key: str, section: str | None = None) -> int | None:
    """1-based line of ``key = ...``, searched from the ``[section]`` header on."""
    start = 0
    if section is not None:
        h = re.search(rf"^[ \t]*\[[ \t]*{re.escape(section)}[ \t]*\]", text, re.MULTILINE)
        if h:
            start = h.end()
    m = re.compile(rf"^[ \t]*{re.escape(key)}[ \t]*=", re.MULTILINE).search(text, start)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _section(cls, table: dict, name: str, text: str, source: str):
    known = {f.name for f in fields(cls)}
    for key in table:
        if key not in known:
            raise ConfigError(f"unknown key '{key}' in [{name}]", _line_of(text, key, name), source)
    try:
        return cls(**table)
    except (TypeError, ValueError) as exc:
        line = next((_line_of(text, k, name) for k in table if k in str(exc)), None)
        raise ConfigError(f"[{name}] {exc}", line, source) from None


def parse_config(text: str, source: str = "<config>") -> SimConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", int(m.group(1)) if m else None, source) from None
    allowed = {"geometry", "timing", "energy", "host", "experiment"}
    for key in doc:
        if key not in allowed:
            m = re.search(rf"^[ \t]*\[+[ \t]*{re.escape(key)}\b", text, re.MULTILINE)
            line = text.count("\n", 0, m.start()) + 1 if m else None
            raise ConfigError(f"unknown section [{key}]", line, source)
    geometry = _section(DramGeometry, doc.get("geometry", {}), "geometry", text, source)
    timing = _section(TimingParams, doc.get("timing", {}), "timing", text, source)
    energy = _section(EnergyParams, doc.get("energy", {}), "energy", text, source)
    profiles = {"zero": HostCostModel()}
    for name, table in doc.get("host", {}).items():
        if not isinstance(table, dict):
            raise ConfigError(f"[host.{name}] must be a table", _line_of(text, name), source)
        profiles[name] = _section(HostCostModel, table, f"host.{name}", text, source)
    exp = dict(doc.get("experiment", {}))
    unknown = set(exp) - {"backends", "seed", "output_dir"}
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key '{key}' in [experiment]", _line_of(text, key, "experiment"), source)
    backends = tuple(str(b).lower() for b in exp.get("backends", SimConfig.backends))
    bad = [b for b in backends if b not in BACKEND_NAMES]
    if bad:
        raise ConfigError(f"unknown backend {bad[0]!r}", _line_of(text, "backends", "experiment"), source)
    seed = exp.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer", _line_of(text, "seed", "experiment"), source)
    return SimConfig(geometry, timing, energy, profiles, backends, seed,
                     str(exp.get("output_dir", "results")), source)


def load_config(path=None) -> SimConfig:
    """Load ``path``, or the packaged default configuration when ``None``."""
    if path is None:
        text = resources.files("cidansim.data").joinpath("default.toml").read_text()
        return parse_config(text, "default.toml")
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from None
    return parse_config(text, str(path))


def load_reference_values() -> dict:
    text = resources.files("cidansim.data").joinpath("reference_values.toml").read_text()
    return tomllib.loads(text)
