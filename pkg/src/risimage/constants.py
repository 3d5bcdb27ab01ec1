"""Free-space electromagnetic constants (vacuum values throughout)."""

import math

VACUUM_PERMEABILITY = 4.0 * math.pi * 1e-7  # H/m
VACUUM_PERMITTIVITY = 8.8541878128e-12  # F/m
FREE_SPACE_IMPEDANCE = math.sqrt(VACUUM_PERMEABILITY / VACUUM_PERMITTIVITY)  # ohm, ~376.730
SPEED_OF_LIGHT = 1.0 / math.sqrt(VACUUM_PERMEABILITY * VACUUM_PERMITTIVITY)  # m/s
