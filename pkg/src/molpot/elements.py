"""Element symbols, atomic numbers and standard atomic masses.

Masses are the CIAAW abridged standard atomic weights in unified atomic
mass units (amu). For elements with no stable isotope the mass of the
longest-lived isotope is used.
"""

from .errors import UnsupportedElementError

SYMBOLS = [
    "H", "He",
    "Li", "Be", "B", "C", "N", "O", "F", "Ne",
    "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar",
    "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr",
    "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd",
    "In", "Sn", "Sb", "Te", "I", "Xe",
    "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy",
    "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt",
    "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn",
    "Fr", "Ra", "Ac", "Th", "Pa", "U",
]

MASSES = [
    1.008, 4.0026,
    6.94, 9.0122, 10.81, 12.011, 14.007, 15.999, 18.998, 20.180,
    22.990, 24.305, 26.982, 28.085, 30.974, 32.06, 35.45, 39.95,
    39.098, 40.078, 44.956, 47.867, 50.942, 51.996, 54.938, 55.845,
    58.933, 58.693, 63.546, 65.38,
    69.723, 72.630, 74.922, 78.971, 79.904, 83.798,
    85.468, 87.62, 88.906, 91.224, 92.906, 95.95, 97.907, 101.07,
    102.91, 106.42, 107.87, 112.41,
    114.82, 118.71, 121.76, 127.60, 126.90, 131.29,
    132.91, 137.33, 138.91, 140.12, 140.91, 144.24, 144.913, 150.36,
    151.96, 157.25, 158.93, 162.50, 164.93, 167.26, 168.93, 173.05,
    174.97, 178.49, 180.95, 183.84, 186.21, 190.23, 192.22, 195.08,
    196.97, 200.59, 204.38, 207.2, 208.98, 208.982, 209.987, 222.018,
    223.020, 226.025, 227.028, 232.04, 231.04, 238.03,
]

SYMBOL_TO_Z = {sym: i + 1 for i, sym in enumerate(SYMBOLS)}
Z_TO_SYMBOL = {i + 1: sym for i, sym in enumerate(SYMBOLS)}


def atomic_number(symbol):
    """Atomic number for an element symbol (case sensitive, e.g. 'Cl')."""
    try:
        return SYMBOL_TO_Z[symbol]
    except KeyError:
        raise UnsupportedElementError(f"unknown element symbol {symbol!r}") from None


def symbol(z):
    """Element symbol for an atomic number."""
    try:
        return Z_TO_SYMBOL[int(z)]
    except KeyError:
        raise UnsupportedElementError(f"unsupported atomic number {z}") from None


def mass(z):
    """Standard atomic mass in amu for an atomic number."""
    z = int(z)
    if not 1 <= z <= len(MASSES):
        raise UnsupportedElementError(f"no tabulated mass for atomic number {z}")
    return MASSES[z - 1]


def masses_for(numbers):
    """Vector of atomic masses (amu) for an iterable of atomic numbers."""
    return [mass(z) for z in numbers]
