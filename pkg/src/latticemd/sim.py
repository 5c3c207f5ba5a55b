"""Simulation driver: thermal BCC start, PKA launch and velocity-Verlet stepping."""

from dataclasses import dataclass, field, replace
import logging
import math
from pathlib import Path
import time

import numpy as np

from .analysis import (
    DefectReport,
    count_defects,
    write_snapshot,
    write_thermo,
    write_timeseries,
)
from .config import SimConfig
from .errors import ConfigError, OverlapError
from .forces import ForceEngine, ForceResult, build_color_partition
from .lattice import BoxSpec, hash_periodic, required_ghost_width
from .neighbors import build_offsets
from .potential import EamPotential, parse_potential_file
from .store import LatticeStore, perfect_lattice_records
from .units import FORCE_TO_ACCEL, K_B, kinetic_energy_ev, speed_from_energy

log = logging.getLogger(__name__)

DT_FLOOR = 1e-7  # ps


@dataclass
class StepState:
    step: int = 0
    t: float = 0.0
    dt: float = 0.0
    kinetic: float = 0.0
    pair: float = 0.0
    embedding: float = 0.0
    max_speed: float = 0.0
    rho_clamped: int = 0
    dt_floored: int = 0

    @property
    def potential(self):
        return self.pair + self.embedding

    @property
    def total(self):
        return self.kinetic + self.potential


def _views(store):
    """``(records, mask)`` for local slot atoms and local clash atoms."""
    return ((store.slots, store.local_slot_mask()), (store.clash.atoms, store.clash.local))


def local_velocities(store):
    return np.concatenate([rec["vel"][m] for rec, m in _views(store)])


def kinetic_energy(store, mass):
    v = local_velocities(store)
    return kinetic_energy_ev(mass, float(np.einsum("ij,ij->", v, v)))


def measured_temperature(store, mass, mask_fn=None):
    """Kinetic temperature ``2 KE / (3 N k_B)`` over local atoms (optionally a subset)."""
    ke = 0.0
    n = 0
    for rec, m in _views(store):
        if mask_fn is not None:
            m = m & mask_fn(rec["pos"])
        v = rec["vel"][m]
        ke += kinetic_energy_ev(mass, float(np.einsum("ij,ij->", v, v)))
        n += len(v)
    return 2.0 * ke / (3.0 * n * K_B) if n else 0.0


def total_momentum(store, mass):
    """Net momentum of the local atoms, amu·Å/ps."""
    return mass * local_velocities(store).sum(axis=0)


def max_speed(store):
    v = local_velocities(store)
    if len(v) == 0:
        return 0.0
    return float(np.sqrt(np.einsum("ij,ij->i", v, v).max()))


def make_box(cfg: SimConfig, pot: EamPotential):
    """Ghost-inclusive box; the ghost width defaults to the ``cutoff + skin`` reach."""
    a0 = cfg.a0 if cfg.a0 is not None else pot.a0
    g = cfg.ghost_width
    if g is None:
        g = required_ghost_width(pot.cutoff + cfg.skin * a0, a0)
    return BoxSpec(*(int(n) for n in cfg.box), a0, g)


def init_bcc(cfg: SimConfig, pot: EamPotential, box=None):
    """Fill every local site and draw Maxwell-Boltzmann velocities.

    Velocities are drawn per component from a normal distribution with
    variance ``k_B T / m`` using ``numpy.random.default_rng(cfg.seed)``;
    the mean is then subtracted so the net momentum is zero.  No rescaling
    to the exact target is applied.

    Returns
    -------
    store : LatticeStore
    diagnostics : dict
        ``n_atoms``, ``temperature`` (measured) and ``clash`` (always 0).
    """
    box = box or make_box(cfg, pot)
    store = LatticeStore(box)
    rec = perfect_lattice_records(box)
    n = len(rec)
    if cfg.temperature > 0:
        rng = np.random.default_rng(cfg.seed)
        sigma = math.sqrt(K_B * cfg.temperature / pot.mass * FORCE_TO_ACCEL)
        vel = rng.normal(0.0, sigma, size=(n, 3))
        vel -= vel.mean(axis=0)
        rec["vel"] = vel
    store.insert_many(rec)
    store.fill_ghosts()
    diag = {
        "n_atoms": store.n_atoms(),
        "temperature": measured_temperature(store, pot.mass),
        "clash": int(store.clash.local.sum()),
    }
    return store, diag


def set_pka(store: LatticeStore, cfg: SimConfig, mass):
    """Overwrite the velocity of the atom at ``cfg.pka.position`` (units of a0).

    The speed is ``sqrt(2 E / m)`` along the normalised direction triple.
    Returns the tag of the launched atom.
    """
    pka = cfg.pka
    box = store.box
    pos = np.asarray(pka.position, dtype=float) * box.a0
    site, _ = hash_periodic(pos, box)
    site = int(site[0])
    if not store.slots["valid"][site]:
        raise ConfigError(f"no atom at lattice site {tuple(pka.position)}", key="pka.position")
    d = np.asarray(pka.direction, dtype=float)
    speed = speed_from_energy(pka.energy * 1000.0, mass)
    store.slots["vel"][site] = speed * d / np.linalg.norm(d)
    store.refresh_ghosts("vel")
    return int(store.slots["tag"][site])


def adaptive_dt(state: StepState, cfg: SimConfig):
    """``min(dt_max, max_disp / max_speed)`` with a floor of 1e-7 ps."""
    if not cfg.adaptive_dt or state.max_speed <= 0:
        return cfg.dt_max
    return max(min(cfg.dt_max, cfg.max_disp / state.max_speed), DT_FLOOR)


def boundary_mask_fn(box, width):
    """Position predicate for atoms within ``width`` cells of any box face."""
    w = width * box.a0
    lengths = np.array(box.lengths)

    def inside(pos):
        near = (pos < w) | (pos >= lengths - w)
        return near.any(axis=1)

    return inside


def thermostat_rescale(store, target_T, mass, mask_fn=None):
    """Scale velocities by ``sqrt(target_T / T_measured)``.

    With ``mask_fn`` both the measurement and the rescaling are restricted to
    the atoms it selects.  Returns the factor applied, or ``None`` when the
    measured temperature is zero and nothing was done.
    """
    t_now = measured_temperature(store, mass, mask_fn)
    if t_now <= 0:
        log.warning("thermostat skipped: measured temperature is zero")
        return None
    factor = math.sqrt(target_T / t_now)
    for rec, m in _views(store):
        if mask_fn is not None:
            m = m & mask_fn(rec["pos"])
        rec["vel"][m] *= factor
    return factor


class Simulation:
    """Owns a store, its neighbor offsets and the force engine.

    ``force_fn``, when given, replaces the EAM force pass: it is called with
    the store, must fill ``force`` on local atoms and return a
    :class:`ForceResult`.
    """

    def __init__(self, store, pot, cfg, force_fn=None, workers=None):
        self.store = store
        self.pot = pot
        self.cfg = cfg
        self.mass = pot.mass
        box = store.box
        skin = cfg.skin * box.a0
        self.idx = build_offsets(box, pot.cutoff, skin)
        workers = cfg.workers if workers is None else workers
        self.partition = build_color_partition(box, workers, pot.cutoff + skin)
        self.engine = ForceEngine(pot, self.idx, self.partition)
        self.force_fn = force_fn
        self.state = StepState()
        self._accel = FORCE_TO_ACCEL / self.mass

    def close(self):
        self.engine.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def compute_forces(self):
        if self.force_fn is not None:
            res = self.force_fn(self.store)
        else:
            res = self.engine.compute(self.store)
        s = self.state
        s.pair, s.embedding, s.rho_clamped = res.pair_energy, res.embedding_energy, res.rho_clamped
        s.kinetic = kinetic_energy(self.store, self.mass)
        s.max_speed = max_speed(self.store)
        return res

    def _kick(self, half_dt):
        for rec, m in _views(self.store):
            if m.any():
                rec["vel"][m] += rec["force"][m] * (self._accel * half_dt)

    def _drift(self, dt):
        for rec, m in _views(self.store):
            if m.any():
                rec["pos"][m] += rec["vel"][m] * dt

    def step(self, dt=None):
        """Advance one velocity-Verlet step; forces must be current on entry."""
        s = self.state
        if dt is None:
            dt = adaptive_dt(s, self.cfg)
            if self.cfg.adaptive_dt and dt == DT_FLOOR:
                s.dt_floored += 1
        self._kick(0.5 * dt)
        self._drift(dt)
        self.store.update_hash()
        self.store.fill_ghosts()
        try:
            self.compute_forces()
        except OverlapError as exc:
            raise OverlapError(*exc.tags, step=s.step + 1) from exc
        self._kick(0.5 * dt)
        s.kinetic = kinetic_energy(self.store, self.mass)
        s.max_speed = max_speed(self.store)
        s.step += 1
        s.t += dt
        s.dt = dt
        return s


@dataclass
class RunResult:
    reports: list
    thermo: list
    snapshots: list = field(default_factory=list)
    state: StepState = None
    store: LatticeStore = None
    outputs: dict = field(default_factory=dict)
    pka_tag: int = None
    wall_time: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def peak_frenkel(self):
        return max(r.frenkel_pairs for r in self.reports)

    @property
    def final_frenkel(self):
        return self.reports[-1].frenkel_pairs


THERMO_FIELDS = ("step", "t_ps", "dt_ps", "kinetic_ev", "potential_ev", "total_ev", "temperature_k", "max_speed")


def _thermo_row(state, store, mass):
    n = store.n_atoms()
    temp = 2.0 * state.kinetic / (3.0 * n * K_B) if n else 0.0
    return (state.step, state.t, state.dt, state.kinetic, state.potential, state.total, temp, state.max_speed)


def load_potential(cfg):
    if not cfg.potential:
        raise ConfigError("no potential file given", key="potential")
    path = Path(cfg.potential)
    if not path.is_file():
        raise ConfigError(f"potential file not found: {path}", key="potential")
    return parse_potential_file(path)


def run(cfg: SimConfig, pot: EamPotential = None, progress=None):
    """Initialise, launch the PKA and integrate until ``steps`` or ``duration``.

    Defect reports are taken at t = 0 and every ``output.defect_interval``
    steps, plus the final step.  If ``output.dir`` is set the defect CSV,
    thermo CSV, snapshots and (optionally) figures are written there.  A
    fatal error during stepping dumps the current state to
    ``<prefix>_postmortem.xyz`` and re-raises with ``dump_path`` attached.
    """
    started = time.perf_counter()
    pot = pot or load_potential(cfg)
    a0 = cfg.a0 if cfg.a0 is not None else pot.a0
    cfg.validate(a0)
    if cfg.a0 is None:
        cfg = replace(cfg, a0=a0)
    store, diag = init_bcc(cfg, pot)
    out = cfg.output
    outdir = Path(out.directory) if out.directory else None
    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)

    def path(suffix):
        return outdir / f"{out.prefix}{suffix}"

    result = RunResult(reports=[], thermo=[], store=store, diagnostics=diag)
    with Simulation(store, pot, cfg) as sim:
        sim.compute_forces()
        mask_fn = None
        if cfg.thermostat.region == "boundary":
            mask_fn = boundary_mask_fn(store.box, cfg.thermostat.width)
        target = cfg.thermostat.target if cfg.thermostat.target is not None else cfg.temperature

        # optional thermalisation before the PKA: whole-box rescaling
        for k in range(cfg.equilibration_steps):
            sim.step()
            if cfg.temperature > 0 and (k + 1) % cfg.thermostat.interval == 0:
                thermostat_rescale(store, cfg.temperature, pot.mass)
        sim.state = replace(sim.state, step=0, t=0.0, dt=0.0, dt_floored=0)

        if cfg.pka.position is not None and cfg.pka.energy > 0:
            result.pka_tag = set_pka(store, cfg, pot.mass)
        state = sim.state
        state.kinetic = kinetic_energy(store, pot.mass)
        state.max_speed = max_speed(store)
        result.reports.append(count_defects(store, state.t))
        result.thermo.append(_thermo_row(state, store, pot.mass))
        n0 = store.n_atoms()

        try:
            while state.step < cfg.steps and (cfg.duration <= 0 or state.t < cfg.duration):
                sim.step()
                k = state.step
                if cfg.thermostat.mode == "rescale" and k % cfg.thermostat.interval == 0:
                    thermostat_rescale(store, target, pot.mass, mask_fn)
                    state.kinetic = kinetic_energy(store, pot.mass)
                if k % out.defect_interval == 0:
                    result.reports.append(count_defects(store, state.t))
                if k % out.thermo_interval == 0:
                    result.thermo.append(_thermo_row(state, store, pot.mass))
                if outdir is not None and out.snapshot_interval > 0 and k % out.snapshot_interval == 0:
                    p = path(f"_{k:07d}.xyz")
                    write_snapshot(store, p, t=state.t, atomic_number=pot.atomic_number)
                    result.snapshots.append(p)
                if progress is not None:
                    progress(state)
        except Exception as exc:
            if outdir is not None:
                dump = path("_postmortem.xyz")
                write_snapshot(store, dump, t=state.t, atomic_number=pot.atomic_number)
                exc.dump_path = dump
            raise
        if store.n_atoms() != n0:
            raise RuntimeError(f"atom count changed from {n0} to {store.n_atoms()}")

        if result.reports[-1].t != state.t:
            result.reports.append(count_defects(store, state.t))
        if result.thermo[-1][0] != state.step:
            result.thermo.append(_thermo_row(state, store, pot.mass))
        result.state = state

    if outdir is not None:
        result.outputs["defects"] = write_timeseries(result.reports, path("_defects.csv"))
        result.outputs["thermo"] = write_thermo(result.thermo, path("_thermo.csv"), THERMO_FIELDS)
        final = path("_final.xyz")
        write_snapshot(store, final, t=state.t, atomic_number=pot.atomic_number)
        result.snapshots.append(final)
        if out.figures:
            from .plotting import plot_defects, plot_thermo

            nrt = None
            if cfg.pka.energy > 0:
                from .analysis import nrt_estimate

                nrt = nrt_estimate(cfg.pka.energy)
            result.outputs["defects_png"] = plot_defects(result.reports, path("_defects.png"), nrt=nrt)
            result.outputs["thermo_png"] = plot_thermo(result.thermo, path("_thermo.png"))
    result.wall_time = time.perf_counter() - started
    return result


__all__ = [
    "DT_FLOOR",
    "DefectReport",
    "ForceResult",
    "RunResult",
    "Simulation",
    "StepState",
    "adaptive_dt",
    "boundary_mask_fn",
    "init_bcc",
    "kinetic_energy",
    "load_potential",
    "make_box",
    "max_speed",
    "measured_temperature",
    "run",
    "set_pka",
    "thermostat_rescale",
    "total_momentum",
]
