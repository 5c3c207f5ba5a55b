"""Defect counting from site occupancy, the NRT estimate and output files."""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError

SYMBOLS = (
    "X H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni Cu Zn "
    "Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe Cs Ba La Ce Pr "
    "Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au Hg Tl Pb Bi Po At Rn"
).split()

TIMESERIES_HEADER = ("t_ps", "vacancies", "interstitials", "frenkel_pairs")


@dataclass(frozen=True)
class DefectReport:
    """Point-defect tally at time ``t`` (ps).

    ``frenkel_pairs`` is ``max(vacancies, interstitials)``: replacement
    sequences can leave the two tallies briefly unequal.
    """

    t: float
    vacancies: int
    interstitials: int
    frenkel_pairs: int


def site_occupancy(store):
    """Atoms per local site: the slot indicator plus clash entries filed there."""
    ids = store.local_ids
    occ = store.slots["valid"][ids].astype(np.int64)
    cl = store.clash
    lm = cl.local
    if lm.any():
        extra = np.bincount(cl.ids[lm], minlength=store.box.n_sites)
        occ += extra[ids]
    return occ


def count_defects(store, t=0.0):
    """Wigner-Seitz style vacancy and interstitial counts.

    Nearest-site hashing is exactly the Wigner-Seitz cell assignment for
    BCC, so the occupancy of each site falls straight out of the store.
    """
    occ = site_occupancy(store)
    vac = int(np.count_nonzero(occ == 0))
    excess = int(np.maximum(occ - 1, 0).sum())
    return DefectReport(t=float(t), vacancies=vac, interstitials=excess, frenkel_pairs=max(vac, excess))


def nrt_estimate(energy_kev, displacement_energy=40.0):
    """NRT displacement count ``0.8 E / (2 E_d)`` with E in keV and E_d in eV."""
    if not energy_kev > 0 or not displacement_energy > 0:
        raise ValueError("energy and displacement threshold must be positive")
    return 0.8 * energy_kev * 1000.0 / (2.0 * displacement_energy)


def format_time(t):
    """Positional decimal with at most 9 significant digits (``0.0`` for zero)."""
    return np.format_float_positional(float(t), precision=9, unique=True, fractional=False, trim="0")


def write_timeseries(reports, path):
    reports = list(reports)
    if not reports:
        raise ValueError("need at least one defect report")
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TIMESERIES_HEADER)
            for r in reports:
                w.writerow((format_time(r.t), r.vacancies, r.interstitials, r.frenkel_pairs))
    except OSError as exc:
        raise OSError(f"cannot write defect time series to {path}: {exc.strerror}") from exc
    return path


def read_timeseries(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TIMESERIES_HEADER:
        raise ParseError(f"expected header {','.join(TIMESERIES_HEADER)}", line=1, path=path)
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            t, v, i, f = row
            out.append(DefectReport(float(t), int(v), int(i), int(f)))
        except ValueError:
            raise ParseError(f"bad row {row!r}", line=lineno, path=path) from None
    return out


def write_thermo(rows, path, fields):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([v if isinstance(v, (int, np.integer)) else repr(float(v)) for v in row])
    return path


def read_thermo(path):
    """Thermo CSV as a dict of column arrays."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}


def symbol(atomic_number):
    return SYMBOLS[atomic_number] if 0 < atomic_number < len(SYMBOLS) else "X"


def write_snapshot(store, path, t=0.0, atomic_number=0):
    """Extended-XYZ frame of the local atoms, sorted by tag.

    Positions are in Å, velocities in Å/ps.
    """
    rec = store.local_records()
    rec = rec[np.argsort(rec["tag"], kind="stable")]
    lx, ly, lz = (float(v) for v in store.box.lengths)
    sym = symbol(atomic_number)
    path = Path(path)
    comment = (
        f'Lattice="{lx!r} 0.0 0.0 0.0 {ly!r} 0.0 0.0 0.0 {lz!r}" '
        f'Properties=species:S:1:pos:R:3:vel:R:3 Time={float(t)!r} pbc="T T T"'
    )
    body = np.concatenate([rec["pos"], rec["vel"]], axis=1)
    try:
        with open(path, "w") as fh:
            fh.write(f"{len(rec)}\n{comment}\n")
            for row in body:
                fh.write(sym + " " + " ".join(f"{v:.12g}" for v in row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write snapshot to {path}: {exc.strerror}") from exc
    return path


@dataclass
class Snapshot:
    time: float
    lattice: np.ndarray
    species: list
    positions: np.ndarray
    velocities: np.ndarray


def read_snapshot(path):
    """Parse a frame written by :func:`write_snapshot`."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    try:
        n = int(lines[0])
    except (IndexError, ValueError):
        raise ParseError("first line must be the atom count", line=1, path=path) from None
    comment = lines[1]
    info = {}
    for part in comment.split('" '):
        key, _, value = part.partition("=")
        info[key.strip()] = value.strip().strip('"')
    time_val = float(comment.split("Time=")[1].split()[0])
    lattice = np.array(info["Lattice"].split(), dtype=float).reshape(3, 3)
    rows = lines[2:2 + n]
    if len(rows) != n:
        raise ParseError(f"expected {n} atom lines, found {len(rows)}", line=len(lines), path=path)
    species = [r.split()[0] for r in rows]
    data = np.array([r.split()[1:7] for r in rows], dtype=float).reshape(n, 6)
    return Snapshot(time_val, lattice, species, data[:, :3], data[:, 3:])
