"""Metal units (Å, ps, eV, amu, K) and the conversion factors between them.

Both conversion factors are derived from the SI definitions rather than
typed in, so a change of CODATA values propagates automatically.
"""

import math

ELECTRON_VOLT = 1.602176634e-19  # J, exact
ATOMIC_MASS_UNIT = 1.66053906660e-27  # kg
ANGSTROM = 1e-10  # m
PICOSECOND = 1e-12  # s
BOLTZMANN_SI = 1.380649e-23  # J/K, exact

#: Boltzmann constant in eV/K.
K_B = BOLTZMANN_SI / ELECTRON_VOLT

#: eV/(amu·Å) -> Å/ps²; also eV/amu -> Å²/ps².
FORCE_TO_ACCEL = ELECTRON_VOLT / ATOMIC_MASS_UNIT * PICOSECOND**2 / ANGSTROM**2

#: sqrt(eV/amu) -> Å/ps, so that v = sqrt(2 E / m) * ENERGY_TO_SPEED.
ENERGY_TO_SPEED = math.sqrt(FORCE_TO_ACCEL)


def kinetic_energy_ev(mass_amu, speed_sq):
    """Kinetic energy in eV of a mass (amu) moving with squared speed (Å²/ps²)."""
    return 0.5 * mass_amu * speed_sq / FORCE_TO_ACCEL


def speed_from_energy(energy_ev, mass_amu):
    """Speed in Å/ps of a particle of ``mass_amu`` carrying ``energy_ev`` of kinetic energy."""
    if energy_ev < 0:
        raise ValueError(f"kinetic energy must be non-negative, got {energy_ev}")
    return math.sqrt(2.0 * energy_ev / mass_amu) * ENERGY_TO_SPEED
