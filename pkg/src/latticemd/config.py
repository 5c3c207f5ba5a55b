"""Run configuration: a flat ``key = value`` text format.

Lines starting with ``#`` (and anything after a ``#``) are comments.  Keys
with a dot address a nested group (``pka.energy``).  Vector values are
whitespace separated.  Recognised keys and their defaults:

====================  =========  ==============================================
key                   default    meaning
====================  =========  ==============================================
potential             (required) tabulated EAM file; relative to the config file
box                   20 20 20   local cells along x, y, z
a0                    from file  lattice constant, Å
temperature           600        initial temperature, K
seed                  12345      PRNG seed for thermal velocities
steps                 1000       maximum number of timesteps
duration              0          stop once this much time (ps) has elapsed; 0 = off
dt_max                0.001      largest timestep, ps
adaptive_dt           true       cap each step's displacement at max_disp
max_disp              0.05       largest displacement per step, Å
skin                  0.3        neighbor search skin, in units of a0
ghost_width           derived    ghost shell cells; default ceil((cutoff + skin) / a0)
workers               1          force-pass worker threads
equilibration_steps   0          steps run before the PKA is launched
pka.position          none       PKA site in units of a0 (omit for no PKA)
pka.energy            0          PKA kinetic energy, keV
pka.direction         1 3 5      PKA direction as an integer triple
thermostat            off        ``off`` or ``rescale``
thermostat.interval   10         steps between rescalings
thermostat.region     all        ``all`` or ``boundary``
thermostat.width      2          boundary layer thickness, cells
thermostat.target     =temperature target temperature, K
output.dir            none       directory for CSV/XYZ/PNG output
output.prefix         run        file name prefix
output.defect_interval 10        steps between defect reports
output.snapshot_interval 0       steps between snapshots (0 = final only)
output.thermo_interval 10        steps between thermo rows
output.figures        true       render PNG figures next to the CSV files
====================  =========  ==============================================

The environment variable ``CASCADE_WORKERS`` supplies ``workers`` when
neither the file nor an override sets it.
"""

from dataclasses import dataclass, field, replace
import os
from pathlib import Path

from .errors import ConfigError, ParseError


@dataclass(frozen=True)
class PkaSpec:
    position: tuple = None
    energy: float = 0.0  # keV
    direction: tuple = (1, 3, 5)


@dataclass(frozen=True)
class ThermostatSpec:
    mode: str = "off"
    interval: int = 10
    region: str = "all"
    width: int = 2
    target: float = None


@dataclass(frozen=True)
class OutputSpec:
    directory: str = None
    prefix: str = "run"
    defect_interval: int = 10
    snapshot_interval: int = 0
    thermo_interval: int = 10
    figures: bool = True


@dataclass(frozen=True)
class SimConfig:
    potential: str = None
    box: tuple = (20, 20, 20)
    a0: float = None
    temperature: float = 600.0
    seed: int = 12345
    steps: int = 1000
    duration: float = 0.0
    dt_max: float = 0.001
    adaptive_dt: bool = True
    max_disp: float = 0.05
    skin: float = 0.3
    ghost_width: int = None
    workers: int = 1
    equilibration_steps: int = 0
    pka: PkaSpec = field(default_factory=PkaSpec)
    thermostat: ThermostatSpec = field(default_factory=ThermostatSpec)
    output: OutputSpec = field(default_factory=OutputSpec)

    def validate(self, a0=None):
        """Raise :class:`ConfigError` naming the first invalid key."""
        a0 = a0 if a0 is not None else self.a0
        if len(self.box) != 3 or any(int(n) < 1 for n in self.box):
            raise ConfigError(f"need three positive cell counts, got {self.box}", key="box")
        if a0 is not None and not a0 > 0:
            raise ConfigError("lattice constant must be positive", key="a0")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0", key="temperature")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0", key="steps")
        if not self.dt_max > 0:
            raise ConfigError("dt_max must be > 0", key="dt_max")
        if a0 is not None and not 0 < self.max_disp < a0 / 2:
            raise ConfigError(f"max_disp must lie in (0, a0/2 = {a0 / 2:g})", key="max_disp")
        if self.skin < 0:
            raise ConfigError("skin must be >= 0", key="skin")
        if self.ghost_width is not None and self.ghost_width < 1:
            raise ConfigError("ghost_width must be >= 1", key="ghost_width")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1", key="workers")
        if self.pka.energy < 0:
            raise ConfigError("PKA energy must be >= 0", key="pka.energy")
        if len(self.pka.direction) != 3 or not any(self.pka.direction):
            raise ConfigError("direction must be a non-zero integer triple", key="pka.direction")
        if self.pka.position is not None and len(self.pka.position) != 3:
            raise ConfigError("position needs three components", key="pka.position")
        if self.thermostat.mode not in ("off", "rescale"):
            raise ConfigError("expected 'off' or 'rescale'", key="thermostat")
        if self.thermostat.region not in ("all", "boundary"):
            raise ConfigError("expected 'all' or 'boundary'", key="thermostat.region")
        if self.thermostat.interval < 1:
            raise ConfigError("interval must be >= 1", key="thermostat.interval")
        for key in ("defect_interval", "thermo_interval"):
            if getattr(self.output, key) < 1:
                raise ConfigError("interval must be >= 1", key=f"output.{key}")
        return self


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text):
    return tuple(int(v) for v in text.split())


def _floats(text):
    return tuple(float(v) for v in text.split())


def _optional_str(text):
    t = text.strip()
    return None if t.lower() in ("", "none") else t


def _optional_floats(text):
    t = text.strip()
    return None if t.lower() in ("", "none") else _floats(t)


def _optional_float(text):
    t = text.strip()
    return None if t.lower() in ("", "none") else float(t)


# key -> (group, field, converter)
KEYS = {
    "potential": (None, "potential", _optional_str),
    "box": (None, "box", _ints),
    "a0": (None, "a0", _optional_float),
    "temperature": (None, "temperature", float),
    "seed": (None, "seed", int),
    "steps": (None, "steps", int),
    "duration": (None, "duration", float),
    "dt_max": (None, "dt_max", float),
    "adaptive_dt": (None, "adaptive_dt", _bool),
    "max_disp": (None, "max_disp", float),
    "skin": (None, "skin", float),
    "ghost_width": (None, "ghost_width", lambda s: None if s.strip().lower() in ("", "none") else int(s)),
    "workers": (None, "workers", int),
    "equilibration_steps": (None, "equilibration_steps", int),
    "pka.position": ("pka", "position", _optional_floats),
    "pka.energy": ("pka", "energy", float),
    "pka.direction": ("pka", "direction", _ints),
    "thermostat": ("thermostat", "mode", lambda s: s.strip().lower()),
    "thermostat.interval": ("thermostat", "interval", int),
    "thermostat.region": ("thermostat", "region", lambda s: s.strip().lower()),
    "thermostat.width": ("thermostat", "width", int),
    "thermostat.target": ("thermostat", "target", _optional_float),
    "output.dir": ("output", "directory", _optional_str),
    "output.prefix": ("output", "prefix", str.strip),
    "output.defect_interval": ("output", "defect_interval", int),
    "output.snapshot_interval": ("output", "snapshot_interval", int),
    "output.thermo_interval": ("output", "thermo_interval", int),
    "output.figures": ("output", "figures", _bool),
}


def parse_pairs(text, source="<config>"):
    """``(key, value, line)`` triples from config text."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", line=lineno, path=source)
        key, value = line.split("=", 1)
        out.append((key.strip(), value.strip(), lineno))
    return out


def apply(cfg, key, value):
    """Return ``cfg`` with one textual setting applied."""
    if key not in KEYS:
        raise ConfigError("unknown key", key=key)
    group, name, conv = KEYS[key]
    try:
        parsed = conv(value)
    except ValueError as exc:
        raise ConfigError(f"bad value {value!r}: {exc}", key=key) from None
    if group is None:
        return replace(cfg, **{name: parsed})
    return replace(cfg, **{group: replace(getattr(cfg, group), **{name: parsed})})


def load_config(path=None, text=None, overrides=(), env=None):
    """Build a :class:`SimConfig` from a file (or text) plus ``key=value`` overrides.

    A relative ``potential`` path in a file is resolved against the file's
    directory.
    """
    env = os.environ if env is None else env
    cfg = SimConfig()
    seen = set()
    base = None
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}", key="config")
        text = path.read_text()
        base = path.parent
    if text is not None:
        for key, value, _ in parse_pairs(text, source=str(path) if path else "<config>"):
            cfg = apply(cfg, key, value)
            seen.add(key)
    if base is not None and cfg.potential and not Path(cfg.potential).is_absolute():
        cfg = replace(cfg, potential=str(base / cfg.potential))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}", key=item)
        key, value = item.split("=", 1)
        cfg = apply(cfg, key.strip(), value.strip())
        seen.add(key.strip())
    if "workers" not in seen and env.get("CASCADE_WORKERS"):
        cfg = apply(cfg, "workers", env["CASCADE_WORKERS"])
    return cfg
