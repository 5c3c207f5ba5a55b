"""Neighbor offset index: precomputed lattice-id deltas covering a cutoff sphere.

Because the doubled-x layout gives a constant stride per axis, the ids of
all sites within ``r`` of a site differ from its id by a fixed set of
offsets that depends only on the site's sublattice.  Corner sites have even
ids and center sites odd ids (the x stride is the only odd stride), so
``id & 1`` selects the list.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ConfigError
from .lattice import BoxSpec


@dataclass(frozen=True)
class OffsetIndex:
    """Signed id offsets to every site within ``cutoff + skin`` of a site.

    ``even_*`` lists apply to corner sites, ``odd_*`` lists to body-center
    sites.  The half lists keep only positive offsets, so every unordered
    pair of sites is reached from exactly one of its two members.
    """

    even_offsets: np.ndarray
    odd_offsets: np.ndarray
    even_half: np.ndarray
    odd_half: np.ndarray
    cutoff: float
    skin: float = 0.0
    reach: int = 0
    even_deltas: np.ndarray = field(default=None, repr=False)
    odd_deltas: np.ndarray = field(default=None, repr=False)

    @property
    def radius(self):
        return self.cutoff + self.skin

    def full(self, parity):
        return self.odd_offsets if parity else self.even_offsets

    def half(self, parity):
        return self.odd_half if parity else self.even_half

    @property
    def nbytes(self):
        return sum(a.nbytes for a in (self.even_offsets, self.odd_offsets, self.even_half, self.odd_half))


def _scan(source_odd, radius, a0, ncell):
    """Doubled-x/y/z coordinate deltas from one site to all sites within ``radius``."""
    r = np.arange(-ncell, ncell + 1)
    cz, cy, cx = np.meshgrid(r, r, r, indexing="ij")
    cells = np.stack([cx.ravel(), cy.ravel(), cz.ravel()], axis=1)
    src = 0.5 * source_odd
    out = []
    for target_odd in (0, 1):
        disp = (cells + 0.5 * target_odd - src) * a0
        dist = np.sqrt((disp ** 2).sum(axis=1))
        keep = (dist <= radius * (1 + 1e-12)) & (dist > 0)
        d = cells[keep].copy()
        d[:, 0] = 2 * d[:, 0] + target_odd - source_odd
        out.append(d)
    return np.concatenate(out)


def build_offsets(box: BoxSpec, cutoff, skin=0.0):
    """Build the offset index for ``box``.

    Parameters
    ----------
    box : BoxSpec
        Ghost-inclusive box; the per-axis strides come from its total extents.
    cutoff : float
        Interaction cutoff in Å.
    skin : float
        Extra search radius (Å) so that atoms displaced off their sites are
        still found.  Sites are kept when their center-to-center distance is
        at most ``cutoff + skin``.

    Raises
    ------
    ConfigError
        If the cutoff is non-positive, exceeds ``ghost_width * a0``, or the
        offsets would reach past the ghost shell.
    """
    if not cutoff > 0:
        raise ConfigError(f"cutoff must be positive, got {cutoff}", key="cutoff")
    g = box.ghost_width
    if cutoff > g * box.a0 * (1 + 1e-12):
        raise ConfigError(
            f"cutoff {cutoff:g} Å exceeds ghost capacity ghost_width*a0 = {g * box.a0:g} Å",
            key="ghost_width",
        )
    radius = cutoff + skin
    ncell = int(math.ceil(radius / box.a0)) + 1
    _, sy, sz = box.strides

    lists = []
    for parity in (0, 1):
        d = _scan(parity, radius, box.a0, ncell)
        lo = -2 * g - parity
        hi = 2 * g + 1 - parity
        if d.size and (
            d[:, 0].min() < lo or d[:, 0].max() > hi or np.abs(d[:, 1:]).max() > g
        ):
            raise ConfigError(
                f"offset reach (radius {radius:g} Å) exceeds ghost width {g}",
                key="ghost_width",
            )
        offs = d[:, 0] + d[:, 1] * sy + d[:, 2] * sz
        order = np.argsort(offs)
        lists.append((offs[order].astype(np.int64), d[order]))

    (even, even_d), (odd, odd_d) = lists
    reach = int(max(np.abs(even_d[:, 2]).max(initial=0), np.abs(odd_d[:, 2]).max(initial=0)))
    return OffsetIndex(
        even_offsets=even,
        odd_offsets=odd,
        even_half=even[even > 0],
        odd_half=odd[odd > 0],
        cutoff=float(cutoff),
        skin=float(skin),
        reach=reach,
        even_deltas=even_d,
        odd_deltas=odd_d,
    )


def neighbors_of(lattice_id, idx: OffsetIndex, box: BoxSpec, half=False):
    """Ids of the lattice sites within the index radius of ``lattice_id``."""
    parity = int(lattice_id) & 1
    offs = idx.half(parity) if half else idx.full(parity)
    out = int(lattice_id) + offs
    assert out.size == 0 or (out.min() >= 0 and out.max() < box.n_sites)
    return out
