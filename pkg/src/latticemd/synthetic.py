"""Closed-form Fe-like EAM functions and a table generator for them.

The long-range part is the Finnis-Sinclair iron form (Finnis & Sinclair,
Phil. Mag. A 50, 45 (1984)) with every length scaled so that the BCC energy
minimum sits at ``A0``.  Below 2 Å the pair term is blended into the
universal screened-Coulomb (ZBL) repulsion so close collisions stay
repulsive, and the density is held at its maximum inside its turning point
(the bare polynomial turns negative at short range).
"""

import numpy as np

from .potential import write_potential_file

A0 = 2.8553
MASS = 55.845
ATOMIC_NUMBER = 26

# Finnis-Sinclair Fe parameters, lengths in Å of the original fit
FS_A0 = 2.8665
FS_D = 3.569745
FS_A = 1.828905
FS_BETA = 1.8
FS_C = 3.40
FS_C0 = 1.2371147
FS_C1 = -0.3592185
FS_C2 = -0.0385607

SCALE = FS_A0 / A0
CUTOFF = FS_D / SCALE
RHO_PEAK_R = FS_D * (1.0 - 2.0 / (3.0 * FS_BETA)) / SCALE

BLEND_INNER = 1.0
BLEND_OUTER = 2.0
COULOMB = 14.399645  # e^2 / (4 pi eps0) in eV·Å
ZBL_A = 0.46850 / (2.0 * ATOMIC_NUMBER ** 0.23)
ZBL_C = (0.18175, 0.50986, 0.28022, 0.02817)
ZBL_K = (3.19980, 0.94229, 0.40290, 0.20162)

NRHO = 5000
NR = 5000
RHO_MAX = 40.0


def _fs_pair(r):
    x = SCALE * r
    return np.where(x < FS_C, (x - FS_C) ** 2 * (FS_C0 + FS_C1 * x + FS_C2 * x * x), 0.0)


def _zbl_screen(r):
    x = r / ZBL_A
    return sum(c * np.exp(-k * x) for c, k in zip(ZBL_C, ZBL_K))


def _blend(r):
    t = np.clip((r - BLEND_INNER) / (BLEND_OUTER - BLEND_INNER), 0.0, 1.0)
    return t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


def r_phi(r):
    """r times the pair energy, eV·Å."""
    r = np.asarray(r, dtype=float)
    w = _blend(r)
    core = ATOMIC_NUMBER ** 2 * COULOMB * _zbl_screen(r)
    return w * r * _fs_pair(r) + (1.0 - w) * core


def pair(r):
    """Pair energy phi(r) in eV (r > 0)."""
    r = np.asarray(r, dtype=float)
    return r_phi(r) / r


def density(r):
    """Density contribution rho(r)."""
    x = SCALE * np.maximum(np.asarray(r, dtype=float), RHO_PEAK_R)
    u = x - FS_D
    return np.where(x < FS_D, u * u + FS_BETA * u ** 3 / FS_D, 0.0)


def embedding(rho):
    """Embedding energy F(rho) = -A sqrt(rho), eV."""
    return -FS_A * np.sqrt(np.maximum(np.asarray(rho, dtype=float), 0.0))


HEADER = (
    "Synthetic Fe-like EAM: F(rho)=-{A}*sqrt(rho); "
    "rho(r)=u^2+{beta}*u^3/{d} with u=s*max(r,{rp:.6f})-{d} for s*r<{d}; "
    "phi(r)=w*(x-{c})^2*({c0}+({c1})*x+({c2})*x^2)+(1-w)*{zz}*zbl(r/{za:.6f})/r with x=s*r, "
    "w=quintic smoothstep on [{b0},{b1}] A, s={s:.10f}; tables: F over rho, r*phi and rho over r"
)


def header():
    return HEADER.format(
        A=FS_A, beta=FS_BETA, d=FS_D, rp=RHO_PEAK_R, c=FS_C, c0=FS_C0, c1=FS_C1, c2=FS_C2,
        zz=ATOMIC_NUMBER ** 2 * COULOMB, za=ZBL_A, b0=BLEND_INNER, b1=BLEND_OUTER, s=SCALE,
    )


def tables(nrho=NRHO, nr=NR, rho_max=RHO_MAX, cutoff=CUTOFF):
    """Knot values ``(drho, dr, F, r_phi, rho)`` on the file grids."""
    drho = rho_max / (nrho - 1)
    dr = cutoff / nr
    rho_grid = np.arange(nrho) * drho
    r_grid = np.arange(nr) * dr
    return drho, dr, embedding(rho_grid), r_phi(r_grid), density(r_grid)


def write_synthetic_potential(path, nrho=NRHO, nr=NR, rho_max=RHO_MAX):
    drho, dr, F, rphi, rho = tables(nrho, nr, rho_max)
    write_potential_file(
        path,
        comment=header(),
        atomic_number=ATOMIC_NUMBER,
        mass=MASS,
        a0=A0,
        lattice="bcc",
        drho=drho,
        dr=dr,
        cutoff=CUTOFF,
        F=F,
        rphi=rphi,
        rho=rho,
    )
    return path
