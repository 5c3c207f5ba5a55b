"""Tabulated single-element EAM potential with cubic-spline interpolation.

Each tabulated function is stored as per-segment cubics

    S_i(x)  = a_i t^3 + b_i t^2 + c_i t + d_i,      t = x - x_i
    S_i'(x) = e_i t^2 + f_i t + g_i

with all seven coefficients precomputed once per segment.  The pair term is
tabulated as r*phi(r) so the spline never has to follow the 1/r core.
"""

from dataclasses import dataclass
import numba
import numpy as np
from scipy.linalg import solve_banded

from .errors import DomainError, ParseError


@dataclass(frozen=True)
class SplineTable:
    """Cubic spline on a uniform grid ``x0 + i*h``, ``i = 0..n-1``.

    ``coeffs`` has shape ``(n - 1, 7)`` holding ``(a, b, c, d, e, f, g)``.
    """

    x0: float
    h: float
    knots: np.ndarray
    coeffs: np.ndarray

    @property
    def n(self):
        return len(self.knots)

    @property
    def x_end(self):
        return self.x0 + (self.n - 1) * self.h

    def __call__(self, x):
        """Value and first derivative at ``x`` (scalar or array), clamped to the table."""
        x = np.asarray(x, dtype=float)
        v, d = _eval_array(self.coeffs, self.x0, self.h, np.atleast_1d(x).ravel())
        if x.ndim == 0:
            return float(v[0]), float(d[0])
        return v.reshape(x.shape), d.reshape(x.shape)


def build_spline(y, h, x0=0.0):
    """Not-a-knot cubic spline through uniformly spaced knots ``y``.

    Not-a-knot ends (continuous third derivative at the second and
    second-to-last knots) reproduce cubic polynomials exactly.  With a
    uniform grid the two end conditions decouple into ``6 M_1 = r_1`` and
    ``6 M_{n-2} = r_{n-2}``, leaving a tridiagonal system for the interior
    second derivatives.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 4:
        raise ValueError(f"a spline needs at least 4 knots, got {n}")
    if not h > 0:
        raise ValueError(f"knot spacing must be positive, got {h}")
    rhs = 6.0 * (y[:-2] - 2.0 * y[1:-1] + y[2:]) / (h * h)  # rows for M_1..M_{n-2}
    m = len(rhs)
    ab = np.zeros((3, m))
    ab[0, 1:] = 1.0
    ab[1, :] = 4.0
    ab[2, :-1] = 1.0
    ab[1, 0] = ab[1, -1] = 6.0
    ab[0, 1] = 0.0  # row 0 decoupled from M_2
    ab[2, -2] = 0.0  # last row decoupled from M_{n-3}
    inner = solve_banded((1, 1), ab, rhs)
    M = np.empty(n)
    M[1:-1] = inner
    M[0] = 2.0 * M[1] - M[2]
    M[-1] = 2.0 * M[-2] - M[-3]

    a = (M[1:] - M[:-1]) / (6.0 * h)
    b = 0.5 * M[:-1]
    c = (y[1:] - y[:-1]) / h - h * (2.0 * M[:-1] + M[1:]) / 6.0
    d = y[:-1].copy()
    coeffs = np.stack([a, b, c, d, 3.0 * a, 2.0 * b, c], axis=1)
    return SplineTable(x0=float(x0), h=float(h), knots=y.copy(), coeffs=np.ascontiguousarray(coeffs))


def build_spline_from_points(x, y):
    """Spline from explicit abscissae, which must be uniformly spaced."""
    x = np.asarray(x, dtype=float)
    steps = np.diff(x)
    h = steps.mean()
    if not h > 0 or np.max(np.abs(steps - h)) > 1e-9 * abs(h):
        raise ValueError("knot abscissae are not uniformly spaced (tolerance 1e-9 relative)")
    return build_spline(y, h, x0=x[0])


@numba.njit(nogil=True, cache=True, inline="always")
def spline_eval(coeffs, x0, h, x):
    """Value and derivative of a :class:`SplineTable` at scalar ``x``.

    ``x`` below the first knot evaluates the first segment at its start;
    beyond the last knot the last segment is evaluated at its end.
    """
    nseg = coeffs.shape[0]
    t = (x - x0) / h
    if t <= 0.0:
        i = 0
        dx = 0.0
    elif t >= nseg:
        i = nseg - 1
        dx = h
    else:
        i = int(t)
        dx = x - (x0 + i * h)
    c = coeffs[i]
    val = ((c[0] * dx + c[1]) * dx + c[2]) * dx + c[3]
    der = (c[4] * dx + c[5]) * dx + c[6]
    return val, der


@numba.njit(nogil=True, cache=True)
def _eval_array(coeffs, x0, h, xs):
    v = np.empty(xs.shape[0])
    d = np.empty(xs.shape[0])
    for k in range(xs.shape[0]):
        v[k], d[k] = spline_eval(coeffs, x0, h, xs[k])
    return v, d


@dataclass(frozen=True)
class EamPotential:
    """Single-element EAM tables.

    ``F`` is tabulated over density with spacing ``drho``; ``rho`` and
    ``rphi`` (r times the pair energy, eV·Å) over distance with spacing ``dr``.
    """

    atomic_number: int
    mass: float
    a0: float
    lattice: str
    F: SplineTable
    rho: SplineTable
    rphi: SplineTable
    cutoff: float
    comment: str = ""

    @property
    def nrho(self):
        return self.F.n

    @property
    def drho(self):
        return self.F.h

    @property
    def nr(self):
        return self.rho.n

    @property
    def dr(self):
        return self.rho.h

    @property
    def rho_max(self):
        return self.F.x_end

    def embedding(self, rho_bar):
        """Embedding energy F and dF/drho at the given density."""
        return self.F(rho_bar)

    def density(self, r):
        """Density contribution rho(r) and its radial derivative."""
        return self.rho(r)

    def phi_and_dphi(self, r):
        """Pair energy (eV) and its radial derivative (eV/Å) at ``r``."""
        r_arr = np.asarray(r, dtype=float)
        if np.any(r_arr <= 0):
            raise DomainError(f"pair distance must be positive, got {r}")
        z, dz = self.rphi(r_arr)
        return z / r_arr, (dz * r_arr - z) / (r_arr * r_arr)

    def energy_per_atom(self, neighbor_distances):
        """Energy of one atom whose neighbors sit at ``neighbor_distances`` (Å)."""
        r = np.asarray(neighbor_distances, dtype=float)
        r = r[r <= self.cutoff]
        rho_bar = float(np.sum(self.density(r)[0]))
        phi, _ = self.phi_and_dphi(r)
        return self.embedding(rho_bar)[0] + 0.5 * float(np.sum(phi))


def _tokens(lines, first_line):
    for lineno, text in enumerate(lines, start=first_line):
        for tok in text.split():
            yield lineno, tok


def parse_potential_file(path, strict_cutoff=True):
    """Read a single-element tabulated EAM file.

    Layout: comment line; ``Z mass a0 lattice``; ``Nrho drho Nr dr cutoff``;
    then ``Nrho`` values of F, ``Nr`` values of r*phi and ``Nr`` values of
    rho, whitespace separated with free line wrapping.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    if len(lines) < 3:
        raise ParseError("file too short for a three-line header", line=len(lines), path=path)
    comment = lines[0].strip()

    head = lines[1].split()
    if len(head) < 3:
        raise ParseError("expected 'atomic_number mass a0 [lattice]'", line=2, path=path)
    try:
        z_num = int(head[0])
        mass = float(head[1])
        a0 = float(head[2])
    except ValueError as exc:
        raise ParseError(f"bad element line: {exc}", line=2, path=path) from None
    lattice = head[3] if len(head) > 3 else "bcc"
    if mass <= 0 or a0 <= 0:
        raise ParseError("mass and lattice constant must be positive", line=2, path=path)

    grid = lines[2].split()
    if len(grid) != 5:
        raise ParseError("expected 'Nrho drho Nr dr cutoff'", line=3, path=path)
    try:
        nrho, drho, nr, dr, cutoff = int(grid[0]), float(grid[1]), int(grid[2]), float(grid[3]), float(grid[4])
    except ValueError as exc:
        raise ParseError(f"bad grid line: {exc}", line=3, path=path) from None
    if drho <= 0 or dr <= 0:
        raise ParseError("table spacings must be positive (monotone increasing grid)", line=3, path=path)
    if nrho < 4 or nr < 4:
        raise ParseError("tables need at least 4 values", line=3, path=path)
    if strict_cutoff and abs(nr * dr - cutoff) > 1e-9 * max(1.0, cutoff):
        raise ParseError(f"cutoff {cutoff} inconsistent with Nr*dr = {nr * dr}", line=3, path=path)

    want = nrho + 2 * nr
    values = np.empty(want)
    count = 0
    last_line = 3
    for lineno, tok in _tokens(lines[3:], 4):
        last_line = lineno
        if count == want:
            raise ParseError(f"extra value {tok!r} beyond the declared {want}", line=lineno, path=path)
        try:
            values[count] = float(tok)
        except ValueError:
            raise ParseError(f"not a number: {tok!r}", line=lineno, path=path) from None
        count += 1
    if count < want:
        raise ParseError(
            f"expected {want} table values (Nrho + 2*Nr), found {count}", line=last_line, path=path
        )
    if not np.all(np.isfinite(values)):
        raise ParseError("non-finite table value", path=path)

    f_vals = values[:nrho]
    rphi_vals = values[nrho:nrho + nr]
    rho_vals = values[nrho + nr:]
    return EamPotential(
        atomic_number=z_num,
        mass=mass,
        a0=a0,
        lattice=lattice,
        F=build_spline(f_vals, drho),
        rho=build_spline(rho_vals, dr),
        rphi=build_spline(rphi_vals, dr),
        cutoff=cutoff,
        comment=comment,
    )


def write_potential_file(path, *, comment, atomic_number, mass, a0, lattice,
                         drho, dr, cutoff, F, rphi, rho, per_line=5):
    """Write tables in the layout :func:`parse_potential_file` reads.

    Values are printed with 17 significant digits so a round trip is exact.
    """
    F, rphi, rho = (np.asarray(v, dtype=float) for v in (F, rphi, rho))
    if len(rphi) != len(rho):
        raise ValueError("r*phi and rho tables must have equal length")
    with open(path, "w") as fh:
        fh.write(comment.replace("\n", " ") + "\n")
        fh.write(f"{int(atomic_number):d} {float(mass)!r} {float(a0)!r} {lattice}\n")
        fh.write(f"{len(F):d} {float(drho)!r} {len(rho):d} {float(dr)!r} {float(cutoff)!r}\n")
        for table in (F, rphi, rho):
            for start in range(0, len(table), per_line):
                fh.write(" ".join(f"{v:.16e}" for v in table[start:start + per_line]) + "\n")


def coefficient_bytes(pot: EamPotential):
    return pot.F.coeffs.nbytes + pot.rho.coeffs.nbytes + pot.rphi.coeffs.nbytes
