"""BCC lattice geometry and the position -> nearest-site hash.

Sites are addressed by a doubled-x coordinate: even ``x`` is a cube-corner
site, odd ``x`` the body-center site of the same cell.  All coordinates and
ids are ghost-inclusive, so local sites start at ``(2g, g, g)`` where ``g``
is the ghost width, and the lattice id is::

    id = 2 * nx * ny * z + 2 * nx * y + x

with ``nx, ny`` the ghost-inclusive cell counts.  Positions use the local
frame: the first local corner site sits at the origin and ghost sites have
negative coordinates or coordinates beyond the box length.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import BoundsError, DomainError


@dataclass(frozen=True)
class BoxSpec:
    """Simulation box measured in BCC cells.

    Parameters
    ----------
    box_x, box_y, box_z : int
        Local (non-ghost) cells per dimension.
    a0 : float
        Lattice constant in Å.
    ghost_width : int
        Ghost shell thickness in cells, applied on every face.
    """

    box_x: int
    box_y: int
    box_z: int
    a0: float
    ghost_width: int = 0

    def __post_init__(self):
        for name in ("box_x", "box_y", "box_z"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.a0 > 0:
            raise ValueError(f"a0 must be positive, got {self.a0}")
        if self.ghost_width < 0:
            raise ValueError(f"ghost_width must be >= 0, got {self.ghost_width}")

    @property
    def cells(self):
        return (self.box_x, self.box_y, self.box_z)

    @property
    def total_cells(self):
        """Ghost-inclusive cell counts per dimension."""
        g2 = 2 * self.ghost_width
        return (self.box_x + g2, self.box_y + g2, self.box_z + g2)

    @property
    def shape(self):
        """Ghost-inclusive coordinate extents ``(x, y, z)`` with doubled x."""
        nx, ny, nz = self.total_cells
        return (2 * nx, ny, nz)

    @property
    def n_sites(self):
        sx, sy, sz = self.shape
        return sx * sy * sz

    @property
    def n_local_sites(self):
        return 2 * self.box_x * self.box_y * self.box_z

    @property
    def strides(self):
        """Id increments for a unit step in doubled-x, y and z."""
        sx, sy, _ = self.shape
        return (1, sx, sx * sy)

    @property
    def lengths(self):
        """Local box edge lengths in Å."""
        return np.array(self.cells, dtype=float) * self.a0

    def local_ranges(self):
        """Half-open coordinate ranges of the non-ghost region."""
        g = self.ghost_width
        return (
            (2 * g, 2 * (g + self.box_x)),
            (g, g + self.box_y),
            (g, g + self.box_z),
        )

    def with_ghost(self, ghost_width):
        return BoxSpec(self.box_x, self.box_y, self.box_z, self.a0, ghost_width)


def required_ghost_width(cutoff, a0):
    return int(math.ceil(cutoff / a0 - 1e-12))


def coord_to_id(coord, box):
    """Flat lattice id of a ghost-inclusive coordinate.

    A two-component ``(x, y)`` coordinate uses the planar form
    ``2 * nx * y + x``.
    """
    shape = box.shape
    if len(coord) not in (2, 3):
        raise ValueError(f"coordinate must have 2 or 3 components, got {coord!r}")
    for axis, (value, extent) in enumerate(zip(coord, shape)):
        if not 0 <= value < extent:
            raise BoundsError(
                f"coordinate {'xyz'[axis]}={value} outside [0, {extent}) for box {shape}"
            )
    x, y = int(coord[0]), int(coord[1])
    z = int(coord[2]) if len(coord) == 3 else 0
    sx, sy, _ = shape
    return sx * sy * z + sx * y + x


def id_to_coord(lattice_id, box):
    """Inverse of :func:`coord_to_id` for 3D boxes."""
    sx, sy, sz = box.shape
    if not 0 <= lattice_id < sx * sy * sz:
        raise BoundsError(f"lattice id {lattice_id} outside [0, {sx * sy * sz})")
    lattice_id = int(lattice_id)
    z, rem = divmod(lattice_id, sx * sy)
    y, x = divmod(rem, sx)
    return (x, y, z)


def ids_to_coords(ids, box):
    """Vectorized :func:`id_to_coord`; returns an ``(n, 3)`` int array."""
    sx, sy, _ = box.shape
    ids = np.asarray(ids, dtype=np.int64)
    z, rem = np.divmod(ids, sx * sy)
    y, x = np.divmod(rem, sx)
    return np.stack([x, y, z], axis=-1)


def site_position(coord, box):
    """Cartesian position (Å) of the site at a ghost-inclusive coordinate."""
    coord_to_id(coord, box)
    return _site_positions(np.asarray([coord], dtype=np.int64), box)[0]


def _site_positions(coords, box):
    g = box.ghost_width
    odd = (coords[:, 0] & 1).astype(float)
    cell = np.stack([coords[:, 0] // 2, coords[:, 1], coords[:, 2]], axis=1) - g
    return (cell + 0.5 * odd[:, None]) * box.a0


def site_positions(ids, box):
    """Positions (Å) of many sites given their ids."""
    return _site_positions(ids_to_coords(ids, box), box)


def _nearest_candidates(u):
    """Nearest corner and body-center cell indices for cell-unit positions ``u``.

    Rounds half down so exact ties fall on the smaller index.
    """
    corner = np.ceil(u - 0.5).astype(np.int64)
    center = np.ceil(u - 1.0).astype(np.int64)
    return corner, center


def _site_ids(cells, odd, box):
    """Ids for ghost-inclusive cell indices on the corner (odd=0) or center (odd=1) sublattice."""
    sx, sy, _ = box.shape
    return sx * sy * cells[..., 2] + sx * cells[..., 1] + 2 * cells[..., 0] + odd


def _choose(u, corner, center, id_c, id_h):
    dc = ((u - corner) ** 2).sum(axis=-1)
    dh = ((u - center - 0.5) ** 2).sum(axis=-1)
    return (dh < dc) | ((dh == dc) & (id_h < id_c))


def nearest_sites(positions, box):
    """Ids of the nearest BCC sites (either sublattice) for an ``(n, 3)`` array.

    Positions must lie inside the ghost-inclusive box volume.  Equidistant
    candidates resolve to the smaller id.
    """
    p = np.atleast_2d(np.asarray(positions, dtype=float))
    u = p / box.a0 + box.ghost_width
    ncell = np.array(box.total_cells)
    outside = (u < 0) | (u >= ncell)
    if np.any(outside):
        row, axis = np.argwhere(outside)[0]
        raise DomainError(
            f"position {p[row].tolist()} outside the ghost-inclusive box along {'xyz'[axis]}"
        )
    # per-axis clipping is exact: distance to a grid point is separable
    corner, center = _nearest_candidates(u)
    np.clip(corner, 0, ncell - 1, out=corner)
    np.clip(center, 0, ncell - 1, out=center)
    id_c = _site_ids(corner, 0, box)
    id_h = _site_ids(center, 1, box)
    return np.where(_choose(u, corner, center, id_c, id_h), id_h, id_c)


def nearest_site(position, box):
    """Id of the BCC site nearest to a single position."""
    return int(nearest_sites(np.asarray(position, dtype=float)[None, :], box)[0])


def hash_periodic(positions, box):
    """Periodic nearest-site hash for local atoms.

    Each position is assigned to its nearest site of the infinite lattice,
    that site is folded back into the local box, and the position is shifted
    by the same whole number of box lengths, so the returned positions stay
    within a Wigner-Seitz cell of a local site.

    Returns
    -------
    ids : ndarray of int64
        Ghost-inclusive ids of local sites.
    wrapped : ndarray, shape (n, 3)
        Positions re-imaged next to their site.
    """
    p = np.atleast_2d(np.asarray(positions, dtype=float))
    cells = np.array(box.cells)
    g = box.ghost_width
    u = p / box.a0
    corner, center = _nearest_candidates(u)
    corner_w = np.mod(corner, cells)
    center_w = np.mod(center, cells)
    id_c = _site_ids(corner_w + g, 0, box)
    id_h = _site_ids(center_w + g, 1, box)
    take_center = _choose(u, corner, center, id_c, id_h)
    ids = np.where(take_center, id_h, id_c)
    image = np.where(take_center[:, None], center - center_w, corner - corner_w)
    return ids.astype(np.int64), p - image * box.a0


def is_ghost_site(ids, box):
    """Boolean mask: True where an id lies in the ghost shell."""
    c = ids_to_coords(ids, box)
    (x0, x1), (y0, y1), (z0, z1) = box.local_ranges()
    inside = (
        (c[..., 0] >= x0) & (c[..., 0] < x1)
        & (c[..., 1] >= y0) & (c[..., 1] < y1)
        & (c[..., 2] >= z0) & (c[..., 2] < z1)
    )
    return ~inside


def local_site_ids(box):
    """Ids of every non-ghost site, ordered by id."""
    (x0, x1), (y0, y1), (z0, z1) = box.local_ranges()
    _, sy_stride, sz_stride = box.strides
    z = np.arange(z0, z1)[:, None, None]
    y = np.arange(y0, y1)[None, :, None]
    x = np.arange(x0, x1)[None, None, :]
    return (z * sz_stride + y * sy_stride + x).ravel()
