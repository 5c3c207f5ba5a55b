"""EAM densities and forces over the lattice store.

The evaluation follows the usual three passes: accumulate electron density
per atom, evaluate the embedding derivative, then accumulate pair forces

    F_ij = -[dF_i rho'(r_ij) + dF_j rho'(r_ij) + phi'(r_ij)] (r_i - r_j) / r_ij

Slot-slot pairs use the half offset lists (each unordered pair once, both
atoms updated).  To run that pass on several threads without write
conflicts the local z range is cut into ``2W`` slabs colored red and blue
alternately; all red slabs run concurrently, then all blue ones.  A slab
only writes to its own sites and to sites up to ``reach`` layers above it,
so two same-colored slabs never touch the same memory as long as every slab
is at least ``reach`` layers thick.

Pairs involving clash atoms are rare and are handled serially afterwards.
Values accumulated on ghost images are folded back onto their source atoms.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math

import numba
import numpy as np

from .errors import OverlapError
from .potential import _eval_array, spline_eval

RED, BLUE = "red", "blue"


@dataclass(frozen=True)
class ColorPartition:
    """Alternately colored z slabs; ``blocks`` are half-open local z ranges."""

    blocks: tuple
    colors: tuple
    workers: int
    min_thickness: int

    def phase(self, color):
        return [b for b, c in zip(self.blocks, self.colors) if c == color]


def build_color_partition(box, workers, cutoff):
    """Split the local z range into ``2 W'`` alternating slabs.

    ``W'`` is the largest worker count not above ``workers`` for which every
    slab is at least ``ceil(cutoff / a0)`` cells thick.  Boxes too thin for
    even one red/blue pair fall back to ``W' = 1``, which runs serially.
    """
    if workers < 1:
        raise ValueError(f"worker count must be >= 1, got {workers}")
    tmin = max(1, int(math.ceil(cutoff / box.a0 - 1e-12)))
    nz = box.box_z
    w = min(int(workers), nz // (2 * tmin))
    if w < 1:
        w = 1
        nblocks = min(2, nz)
    else:
        nblocks = 2 * w
    edges = [(k * nz) // nblocks for k in range(nblocks + 1)]
    blocks = tuple((edges[k], edges[k + 1]) for k in range(nblocks))
    colors = tuple(RED if k % 2 == 0 else BLUE for k in range(nblocks))
    return ColorPartition(blocks=blocks, colors=colors, workers=w, min_thickness=tmin)


# ----------------------------------------------------------------------
# kernels

@numba.njit(nogil=True, cache=True)
def _slot_density(z0, z1, y0, y1, x0, x1, sy, sz, valid, pos, rho,
                  half_even, half_odd, cut2, rc, rx0, rh):
    for z in range(z0, z1):
        for y in range(y0, y1):
            base = z * sz + y * sy
            for x in range(x0, x1):
                i = base + x
                if valid[i] == 0:
                    continue
                offs = half_odd if x & 1 else half_even
                xi = pos[i, 0]
                yi = pos[i, 1]
                zi = pos[i, 2]
                acc = 0.0
                for k in range(offs.shape[0]):
                    j = i + offs[k]
                    if valid[j] == 0:
                        continue
                    dx = xi - pos[j, 0]
                    dy = yi - pos[j, 1]
                    dz = zi - pos[j, 2]
                    r2 = dx * dx + dy * dy + dz * dz
                    if r2 > cut2:
                        continue
                    if r2 == 0.0:
                        return i, j
                    v, _ = spline_eval(rc, rx0, rh, math.sqrt(r2))
                    acc += v
                    rho[j] += v
                rho[i] += acc
    return -1, -1


@numba.njit(nogil=True, cache=True)
def _slot_forces(z0, z1, y0, y1, x0, x1, sy, sz, valid, pos, df, force,
                 half_even, half_odd, cut2, rc, rx0, rh, zc, zx0, zh):
    energy = 0.0
    for z in range(z0, z1):
        for y in range(y0, y1):
            base = z * sz + y * sy
            for x in range(x0, x1):
                i = base + x
                if valid[i] == 0:
                    continue
                offs = half_odd if x & 1 else half_even
                xi = pos[i, 0]
                yi = pos[i, 1]
                zi = pos[i, 2]
                dfi = df[i]
                fx = 0.0
                fy = 0.0
                fz = 0.0
                for k in range(offs.shape[0]):
                    j = i + offs[k]
                    if valid[j] == 0:
                        continue
                    dx = xi - pos[j, 0]
                    dy = yi - pos[j, 1]
                    dz = zi - pos[j, 2]
                    r2 = dx * dx + dy * dy + dz * dz
                    if r2 > cut2:
                        continue
                    if r2 == 0.0:
                        return energy, i, j
                    r = math.sqrt(r2)
                    _, drho = spline_eval(rc, rx0, rh, r)
                    zr, dzr = spline_eval(zc, zx0, zh, r)
                    phi = zr / r
                    dphi = (dzr - phi) / r
                    energy += phi
                    s = -((dfi + df[j]) * drho + dphi) / r
                    gx = s * dx
                    gy = s * dy
                    gz = s * dz
                    fx += gx
                    fy += gy
                    fz += gz
                    force[j, 0] -= gx
                    force[j, 1] -= gy
                    force[j, 2] -= gz
                force[i, 0] += fx
                force[i, 1] += fy
                force[i, 2] += fz
    return energy, -1, -1


@numba.njit(nogil=True, cache=True)
def _clash_pass(mode, valid, pos, rho, df, force,
                cids, cpos, cghost, crho, cdf, cforce,
                full_even, full_odd, cut2, rc, rx0, rh, zc, zx0, zh):
    """Pairs with at least one clash atom.

    mode 0 accumulates density, mode 1 forces.  Clash-slot pairs update both
    atoms; clash-clash pairs update only the local clash atom doing the loop
    (its partner picks up the same pair from its own loop).
    Returns (pair energy, error kind, a, b) with kind 1 = clash-slot overlap,
    2 = clash-clash overlap.
    """
    energy = 0.0
    n = cids.shape[0]
    for k in range(n):
        if cghost[k] != 0:
            continue
        h = cids[k]
        offs = full_odd if h & 1 else full_even
        xk = cpos[k, 0]
        yk = cpos[k, 1]
        zk = cpos[k, 2]
        for m in range(-1, offs.shape[0]):
            s_id = h if m < 0 else h + offs[m]
            # slot partner
            if valid[s_id] != 0:
                dx = xk - pos[s_id, 0]
                dy = yk - pos[s_id, 1]
                dz = zk - pos[s_id, 2]
                r2 = dx * dx + dy * dy + dz * dz
                if r2 <= cut2:
                    if r2 == 0.0:
                        return energy, 1, k, s_id
                    r = math.sqrt(r2)
                    if mode == 0:
                        v, _ = spline_eval(rc, rx0, rh, r)
                        crho[k] += v
                        rho[s_id] += v
                    else:
                        _, drho = spline_eval(rc, rx0, rh, r)
                        zr, dzr = spline_eval(zc, zx0, zh, r)
                        phi = zr / r
                        energy += phi
                        sc = -((cdf[k] + df[s_id]) * drho + (dzr - phi) / r) / r
                        cforce[k, 0] += sc * dx
                        cforce[k, 1] += sc * dy
                        cforce[k, 2] += sc * dz
                        force[s_id, 0] -= sc * dx
                        force[s_id, 1] -= sc * dy
                        force[s_id, 2] -= sc * dz
            # clash partners filed under the same site
            e = np.searchsorted(cids, s_id)
            while e < n and cids[e] == s_id:
                if e != k:
                    dx = xk - cpos[e, 0]
                    dy = yk - cpos[e, 1]
                    dz = zk - cpos[e, 2]
                    r2 = dx * dx + dy * dy + dz * dz
                    if r2 <= cut2:
                        if r2 == 0.0:
                            return energy, 2, k, e
                        r = math.sqrt(r2)
                        if mode == 0:
                            v, _ = spline_eval(rc, rx0, rh, r)
                            crho[k] += v
                        else:
                            _, drho = spline_eval(rc, rx0, rh, r)
                            zr, dzr = spline_eval(zc, zx0, zh, r)
                            phi = zr / r
                            energy += 0.5 * phi
                            sc = -((cdf[k] + cdf[e]) * drho + (dzr - phi) / r) / r
                            cforce[k, 0] += sc * dx
                            cforce[k, 1] += sc * dy
                            cforce[k, 2] += sc * dz
                e += 1
    return energy, 0, -1, -1


# ----------------------------------------------------------------------

@dataclass
class ForceResult:
    embedding_energy: float
    pair_energy: float
    rho_clamped: int = 0

    @property
    def potential_energy(self):
        return self.embedding_energy + self.pair_energy


def _geometry(box):
    (x0, x1), (y0, y1), _ = box.local_ranges()
    _, sy, sz = box.strides
    return x0, x1, y0, y1, sy, sz


def _tables(pot):
    return (pot.rho.coeffs, pot.rho.x0, pot.rho.h), (pot.rphi.coeffs, pot.rphi.x0, pot.rphi.h)


def _raise_slot_overlap(store, i, j):
    raise OverlapError(store.slots["tag"][i], store.slots["tag"][j])


def _clash_args(store):
    c = store.clash.atoms
    return (store.clash.ids, c["pos"], c["ghost"], c["rho"], c["df"], c["force"])


def _run_clash(store, idx, pot, mode):
    s = store.slots
    (rc, rx0, rh), (zc, zx0, zh) = _tables(pot)
    if len(store.clash) == 0:
        return 0.0
    energy, kind, a, b = _clash_pass(
        mode, s["valid"], s["pos"], s["rho"], s["df"], s["force"], *_clash_args(store),
        idx.even_offsets, idx.odd_offsets, pot.cutoff ** 2, rc, rx0, rh, zc, zx0, zh,
    )
    if kind:
        ctags = store.clash.atoms["tag"]
        other = s["tag"][b] if kind == 1 else ctags[b]
        raise OverlapError(ctags[a], other)
    return energy


class ForceEngine:
    """Runs the colored slot pass on a thread pool plus the serial clash pass.

    With ``partition=None`` the slot pass is a single serial sweep over the
    whole local box in id order; this is the reference the colored pass is
    checked against.
    """

    def __init__(self, pot, idx, partition=None):
        self.pot = pot
        self.idx = idx
        self.partition = partition
        self._pool = None
        if partition is not None and partition.workers > 1:
            self._pool = ThreadPoolExecutor(max_workers=partition.workers)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- slot pass --------------------------------------------------------
    def _z_blocks(self, store):
        g = store.box.ghost_width
        if self.partition is None:
            return [[(g, g + store.box.box_z)]]
        return [
            [(z0 + g, z1 + g) for z0, z1 in self.partition.phase(color)]
            for color in (RED, BLUE)
        ]

    def _map(self, fn, blocks):
        if self._pool is None or len(blocks) < 2:
            return [fn(b) for b in blocks]
        return list(self._pool.map(fn, blocks))

    def _slot_pass(self, store, mode):
        s = store.slots
        x0, x1, y0, y1, sy, sz = _geometry(store.box)
        (rc, rx0, rh), (zc, zx0, zh) = _tables(self.pot)
        cut2 = self.pot.cutoff ** 2
        he, ho = self.idx.even_half, self.idx.odd_half
        valid, pos = s["valid"], s["pos"]
        if mode == 0:
            rho = s["rho"]

            def work(block):
                i, j = _slot_density(block[0], block[1], y0, y1, x0, x1, sy, sz,
                                     valid, pos, rho, he, ho, cut2, rc, rx0, rh)
                return 0.0, i, j
        else:
            df, force = s["df"], s["force"]

            def work(block):
                return _slot_forces(block[0], block[1], y0, y1, x0, x1, sy, sz,
                                    valid, pos, df, force, he, ho, cut2,
                                    rc, rx0, rh, zc, zx0, zh)

        energy = 0.0
        for phase in self._z_blocks(store):
            for e, i, j in self._map(work, phase):
                if i >= 0:
                    _raise_slot_overlap(store, i, j)
                energy += e
        return energy

    # -- public passes ----------------------------------------------------
    def compute_density(self, store):
        """Electron density on every local atom (slots and clash)."""
        store.slots["rho"] = 0.0
        store.clash.atoms["rho"] = 0.0
        self._slot_pass(store, 0)
        _run_clash(store, self.idx, self.pot, 0)
        store.fold_ghosts("rho")

    def compute_pair_forces(self, store):
        """Forces from cached embedding derivatives; returns the pair energy."""
        store.slots["force"] = 0.0
        store.clash.atoms["force"] = 0.0
        energy = self._slot_pass(store, 1)
        energy += _run_clash(store, self.idx, self.pot, 1)
        store.fold_ghosts("force")
        return energy

    def compute(self, store):
        """Full density -> embedding -> force evaluation."""
        self.compute_density(store)
        emb, clamped = compute_embedding_derivative(store, self.pot)
        pair = self.compute_pair_forces(store)
        return ForceResult(embedding_energy=emb, pair_energy=pair, rho_clamped=clamped)


def compute_embedding_derivative(store, pot):
    """Cache dF/drho on every local atom and copy it to ghost images.

    Returns the total embedding energy and the number of atoms whose density
    fell outside the F table (those are evaluated at the clamped end knot).
    """
    total = 0.0
    clamped = 0
    for rec, mask in ((store.slots, store.local_slot_mask()), (store.clash.atoms, store.clash.local)):
        if not mask.any():
            continue
        rho = rec["rho"][mask]
        f, dfv = _eval_array(pot.F.coeffs, pot.F.x0, pot.F.h, np.ascontiguousarray(rho))
        clamped += int(np.count_nonzero((rho > pot.F.x_end) | (rho < pot.F.x0)))
        rec["df"][mask] = dfv
        total += float(f.sum())
    store.refresh_ghosts("df")
    return total, clamped


def compute_density(store, idx, pot, partition=None):
    with ForceEngine(pot, idx, partition) as eng:
        eng.compute_density(store)


def compute_pair_forces(store, idx, pot, partition=None):
    with ForceEngine(pot, idx, partition) as eng:
        return eng.compute_pair_forces(store)


def compute_forces(store, idx, pot, partition=None):
    """One-shot full force evaluation; see :class:`ForceEngine` for reuse."""
    with ForceEngine(pot, idx, partition) as eng:
        return eng.compute(store)


def parallel_force_pass(store, idx, pot, part):
    return compute_forces(store, idx, pot, part)


def block_write_sets(store, idx, part):
    """Slot ids each slab writes during the slot pass, keyed by block index.

    Pure-Python instrumentation of the coloring contract: a slab writes to
    every valid site it owns and every valid half-list neighbor of those.
    """
    box = store.box
    g = box.ghost_width
    x0, x1, y0, y1, sy, sz = _geometry(box)
    valid = store.slots["valid"]
    sets = {}
    for b, (z0, z1) in enumerate(part.blocks):
        out = set()
        for z in range(z0 + g, z1 + g):
            for y in range(y0, y1):
                for x in range(x0, x1):
                    i = z * sz + y * sy + x
                    if not valid[i]:
                        continue
                    out.add(i)
                    for off in idx.half(x & 1):
                        if valid[i + off]:
                            out.add(int(i + off))
        sets[b] = out
    return sets
