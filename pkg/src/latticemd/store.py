"""Lattice list: one atom slot per BCC site plus a sorted clash multimap.

Slots and clash entries share one packed record layout (:data:`ATOM_DTYPE`,
104 bytes).  The clash map keeps its entries sorted by lattice id with
insertion order preserved inside a key, which is what an ordered multimap
gives and what the neighbor kernels need for ``searchsorted`` lookups.

Ghost-shell slots and clash entries hold periodic images of local atoms and
carry ``ghost = 1``.  They are rebuilt from scratch by
:meth:`LatticeStore.fill_ghosts`.
"""

from dataclasses import dataclass, field
from collections import Counter

import numpy as np

from .lattice import (
    BoxSpec,
    hash_periodic,
    ids_to_coords,
    is_ghost_site,
    local_site_ids,
    nearest_sites,
    site_positions,
)

ATOM_DTYPE = np.dtype(
    [
        ("tag", np.int64),
        ("pos", np.float64, 3),
        ("vel", np.float64, 3),
        ("force", np.float64, 3),
        ("rho", np.float64),
        ("df", np.float64),
        ("species", np.int32),
        ("valid", np.uint8),
        ("ghost", np.uint8),
    ],
    align=True,
)


@dataclass
class AtomRecord:
    """One atom: positions in Å, velocities in Å/ps, forces in eV/Å."""

    tag: int
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    species: int = 0
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rho_bar: float = 0.0
    dF: float = 0.0

    def pack(self):
        rec = np.zeros((), dtype=ATOM_DTYPE)
        rec["tag"] = self.tag
        rec["pos"] = self.position
        rec["vel"] = self.velocity
        rec["force"] = self.force
        rec["rho"] = self.rho_bar
        rec["df"] = self.dF
        rec["species"] = self.species
        rec["valid"] = 1
        return rec

    @classmethod
    def unpack(cls, rec):
        return cls(
            tag=int(rec["tag"]),
            position=np.array(rec["pos"]),
            velocity=np.array(rec["vel"]),
            species=int(rec["species"]),
            force=np.array(rec["force"]),
            rho_bar=float(rec["rho"]),
            dF=float(rec["df"]),
        )

    def to_bytes(self):
        return self.pack().tobytes()


class ClashMap:
    """Atoms that share a nearest site with a slot atom, keyed by lattice id.

    ``ids`` is sorted; ``src[k]`` is the index of the local entry a ghost
    entry ``k`` images, or -1 for local entries.
    """

    def __init__(self):
        self.ids = np.zeros(0, dtype=np.int64)
        self.atoms = np.zeros(0, dtype=ATOM_DTYPE)
        self.src = np.zeros(0, dtype=np.int64)

    def __len__(self):
        return len(self.ids)

    @property
    def nbytes(self):
        return self.ids.nbytes + self.atoms.nbytes + self.src.nbytes

    @property
    def local(self):
        return self.atoms["ghost"] == 0

    def _set(self, ids, atoms, src):
        order = np.argsort(ids, kind="stable")
        inverse = np.empty_like(order)
        inverse[order] = np.arange(len(order))
        src = src[order]
        remap = src >= 0
        src[remap] = inverse[src[remap]]
        self.ids = ids[order]
        self.atoms = atoms[order]
        self.src = src

    def insert(self, ids, atoms):
        """Add local entries; each lands after existing entries with the same id."""
        ids = np.atleast_1d(np.asarray(ids, dtype=np.int64))
        atoms = np.atleast_1d(atoms)
        self._set(
            np.concatenate([self.ids, ids]),
            np.concatenate([self.atoms, atoms]),
            np.concatenate([self.src, np.full(len(ids), -1, dtype=np.int64)]),
        )

    def keep(self, mask):
        """Drop every entry where ``mask`` is False.  Ghost entries lose their source link."""
        mask = np.asarray(mask, dtype=bool)
        self.ids = self.ids[mask]
        self.atoms = self.atoms[mask]
        self.src = np.full(len(self.ids), -1, dtype=np.int64)

    def at(self, lattice_id):
        """Slice of entries stored under ``lattice_id`` (in insertion order)."""
        lo = np.searchsorted(self.ids, lattice_id, side="left")
        hi = np.searchsorted(self.ids, lattice_id, side="right")
        return slice(lo, hi)

    def items(self):
        """Iterate ``(lattice_id, records)`` in key order."""
        keys, starts = np.unique(self.ids, return_index=True)
        ends = np.append(starts[1:], len(self.ids))
        for k, s, e in zip(keys, starts, ends):
            yield int(k), self.atoms[s:e]


class LatticeStore:
    """Hash array of atom slots over a ghost-inclusive BCC box."""

    def __init__(self, box: BoxSpec):
        self.box = box
        try:
            self.slots = np.zeros(box.n_sites, dtype=ATOM_DTYPE)
        except MemoryError as exc:
            raise MemoryError(f"cannot allocate {box.n_sites} atom slots for box {box}") from exc
        self.clash = ClashMap()
        self.local_ids = local_site_ids(box)
        self._build_ghost_map()

    def _build_ghost_map(self):
        box = self.box
        ghost = np.flatnonzero(is_ghost_site(np.arange(box.n_sites), box))
        coords = ids_to_coords(ghost, box)
        g = box.ghost_width
        cells = np.stack([coords[:, 0] // 2, coords[:, 1], coords[:, 2]], axis=1) - g
        parity = coords[:, 0] & 1
        wrapped = np.mod(cells, np.array(box.cells))
        sx, sy, _ = box.shape
        src = sx * sy * (wrapped[:, 2] + g) + sx * (wrapped[:, 1] + g) + 2 * (wrapped[:, 0] + g) + parity
        self.ghost_ids = ghost.astype(np.int64)
        self.ghost_src = src.astype(np.int64)
        self.ghost_shift = ((cells - wrapped) * box.a0).astype(float)
        # local site -> its ghost images, for imaging clash entries
        order = np.argsort(self.ghost_src, kind="stable")
        self._img_order = order
        self._img_start = np.searchsorted(self.ghost_src[order], np.arange(box.n_sites + 1))

    # ------------------------------------------------------------------
    @property
    def nbytes(self):
        """Bytes held by slots, clash and ghost bookkeeping."""
        return (
            self.slots.nbytes
            + self.clash.nbytes
            + self.ghost_ids.nbytes
            + self.ghost_src.nbytes
            + self.ghost_shift.nbytes
            + self._img_order.nbytes
            + self._img_start.nbytes
        )

    def local_slot_mask(self):
        return (self.slots["valid"] == 1) & (self.slots["ghost"] == 0)

    def n_atoms(self):
        """Number of non-ghost atoms (slots plus clash)."""
        return int(self.local_slot_mask().sum() + self.clash.local.sum())

    def local_records(self):
        """Copies of all non-ghost atom records, slots first then clash."""
        return np.concatenate([self.slots[self.local_slot_mask()], self.clash.atoms[self.clash.local]])

    def tags(self):
        return Counter(self.local_records()["tag"].tolist())

    # ------------------------------------------------------------------
    def insert(self, atom):
        """Place one atom, given as an :class:`AtomRecord` or packed record."""
        rec = atom.pack() if isinstance(atom, AtomRecord) else np.array(atom, dtype=ATOM_DTYPE)
        self.insert_many(rec.reshape(1))

    def insert_many(self, records):
        """Place many packed records; later atoms hashing to a taken slot go to clash."""
        records = np.array(records, dtype=ATOM_DTYPE).reshape(-1)
        if len(records) == 0:
            return
        nearest_sites(records["pos"], self.box)  # domain check
        ids, wrapped = hash_periodic(records["pos"], self.box)
        records["pos"] = wrapped
        records["valid"] = 1
        records["ghost"] = 0
        # first of each id claims a free slot; the rest clash
        order = np.argsort(ids, kind="stable")
        sid = ids[order]
        first = np.ones(len(sid), dtype=bool)
        first[1:] = sid[1:] != sid[:-1]
        free = first & (self.slots["valid"][sid] == 0)
        take = order[free]
        self.slots[ids[take]] = records[take]
        rest = np.sort(order[~free])
        if len(rest):
            self.clash.insert(ids[rest], records[rest])

    # ------------------------------------------------------------------
    def clear_ghosts(self):
        self.slots["valid"][self.ghost_ids] = 0
        self.slots["ghost"][self.ghost_ids] = 0
        if len(self.clash):
            self.clash.keep(self.clash.local)

    def update_hash(self):
        """Re-hash every local atom after positions changed.

        Slot atoms whose nearest site moved go to the clash map (in slot-id
        order); then every local clash atom is re-keyed and the first one in
        key order whose site is empty is promoted into the slot.  Atoms that
        left the box are re-imaged periodically.  Ghosts are cleared and must
        be rebuilt with :meth:`fill_ghosts`.
        """
        self.clear_ghosts()
        slots = self.slots
        occupied = np.flatnonzero(slots["valid"] == 1)
        moved_ids = np.zeros(0, dtype=np.int64)
        moved = np.zeros(0, dtype=ATOM_DTYPE)
        if len(occupied):
            new_ids, wrapped = hash_periodic(slots["pos"][occupied], self.box)
            slots["pos"][occupied] = wrapped
            off = new_ids != occupied
            moved_ids = new_ids[off]
            moved = slots[occupied[off]].copy()
            slots["valid"][occupied[off]] = 0

        atoms = np.concatenate([self.clash.atoms, moved])
        if len(atoms) == 0:
            self.clash = ClashMap()
            return
        ids = np.concatenate([self.clash.ids, moved_ids])
        # old clash entries rehash too; stable sort keeps map order inside a key
        old = len(self.clash)
        if old:
            ids[:old], atoms["pos"][:old] = hash_periodic(atoms["pos"][:old], self.box)
        order = np.argsort(ids, kind="stable")
        sid = ids[order]
        first = np.ones(len(sid), dtype=bool)
        first[1:] = sid[1:] != sid[:-1]
        promote = first & (slots["valid"][sid] == 0)
        slots[sid[promote]] = atoms[order[promote]]
        rest = order[~promote]
        self.clash = ClashMap()
        if len(rest):
            self.clash._set(ids[rest], atoms[rest], np.full(len(rest), -1, dtype=np.int64))

    def fill_ghosts(self):
        """Populate the ghost shell with periodic images of local atoms."""
        self.clear_ghosts()
        g_ids, g_src = self.ghost_ids, self.ghost_src
        if len(g_ids):
            self.slots[g_ids] = self.slots[g_src]
            self.slots["pos"][g_ids] += self.ghost_shift
            self.slots["ghost"][g_ids] = 1
        n_local = len(self.clash)
        if n_local == 0 or len(g_ids) == 0:
            return
        starts = self._img_start[self.clash.ids]
        counts = self._img_start[self.clash.ids + 1] - starts
        if counts.sum() == 0:
            return
        owner = np.repeat(np.arange(n_local), counts)
        within = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        ghost_rows = self._img_order[np.repeat(starts, counts) + within]
        images = self.clash.atoms[owner].copy()
        images["pos"] += self.ghost_shift[ghost_rows]
        images["ghost"] = 1
        self.clash._set(
            np.concatenate([self.clash.ids, g_ids[ghost_rows]]),
            np.concatenate([self.clash.atoms, images]),
            np.concatenate([np.full(n_local, -1, dtype=np.int64), owner]),
        )

    def refresh_ghosts(self, name):
        """Copy one field from local atoms to their ghost images."""
        if len(self.ghost_ids):
            self.slots[name][self.ghost_ids] = self.slots[name][self.ghost_src]
        src = self.clash.src
        img = src >= 0
        if img.any():
            self.clash.atoms[name][img] = self.clash.atoms[name][src[img]]

    def fold_ghosts(self, name):
        """Add values accumulated on ghost images back onto their source atoms."""
        values = self.slots[name]
        n = len(self.slots)
        if len(self.ghost_ids):
            add = values[self.ghost_ids]
            if add.ndim == 1:
                values += np.bincount(self.ghost_src, weights=add, minlength=n)
            else:
                for k in range(add.shape[1]):
                    values[:, k] += np.bincount(self.ghost_src, weights=add[:, k], minlength=n)
            values[self.ghost_ids] = 0.0
        src = self.clash.src
        img = np.flatnonzero(src >= 0)
        if len(img):
            cvals = self.clash.atoms[name]
            np.add.at(cvals, src[img], cvals[img])
            cvals[img] = 0.0

    # ------------------------------------------------------------------
    def check_invariants(self):
        """Full rescan of the post-update guarantees; returns a list of violations."""
        problems = []
        slots = self.slots
        local = np.flatnonzero(self.local_slot_mask())
        if len(local):
            ids, _ = hash_periodic(slots["pos"][local], self.box)
            bad = local[ids != local]
            if len(bad):
                problems.append(f"{len(bad)} slot atoms do not hash to their slot (first: {bad[0]})")
        cl = self.clash
        lm = cl.local
        if lm.any():
            ids, _ = hash_periodic(cl.atoms["pos"][lm], self.box)
            if np.any(ids != cl.ids[lm]):
                problems.append("clash entries filed under a stale lattice id")
            empty = slots["valid"][cl.ids[lm]] == 0
            if empty.any():
                problems.append(f"{int(empty.sum())} clash atoms sit over an empty slot")
        if np.any(np.diff(cl.ids) < 0):
            problems.append("clash ids not sorted")
        return problems


def create_store(box: BoxSpec):
    return LatticeStore(box)


def perfect_lattice_records(box: BoxSpec, species=0):
    """Packed records for a fully occupied local lattice, tagged by site order."""
    ids = local_site_ids(box)
    rec = np.zeros(len(ids), dtype=ATOM_DTYPE)
    rec["tag"] = np.arange(len(ids))
    rec["pos"] = site_positions(ids, box)
    rec["species"] = species
    rec["valid"] = 1
    return rec
