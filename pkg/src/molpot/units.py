"""Unit system and physical constants.

Internal mechanical units are Angstrom, femtosecond and atomic mass unit
(amu).  Model energies are in eV and are converted exactly once, at the
model/dynamics boundary.  The derived internal energy unit is
amu * A^2 / fs^2.

Conversion constants are derived from the 2019 SI definitions
(1 eV = 1.602176634e-19 J exactly) and the CODATA 2018 atomic mass
constant (1 amu = 1.66053906660e-27 kg), at full double precision.
"""

# 1 eV expressed in amu * A^2 / fs^2  (multiply eV quantities by this to
# get internal energy; forces in eV/A times this give amu * A / fs^2).
EV_TO_INTERNAL = 1.602176634e-19 / (1.66053906660e-27 * 1e-20 / 1e-30)

# 1 amu * A^2 / fs^2 expressed in eV.
INTERNAL_TO_EV = 1.0 / EV_TO_INTERNAL

# Boltzmann constant.
KB_EV = 8.617333262e-5               # eV / K
KB_INTERNAL = KB_EV * EV_TO_INTERNAL  # amu * A^2 / (fs^2 * K)

# Wavenumber conversion: a frequency of 1/fs corresponds to
# 1e15 Hz / c = 1e15 / 2.99792458e10 cm^-1.
CM1_PER_INV_FS = 1e15 / 2.99792458e10

# Second radiation constant h*c/kB in cm * K, used by the Raman
# cross-section prefactor.
HC_OVER_KB_CM_K = 1.4387768775039337
