"""Equivariant message-passing potentials for molecules.

Energies, forces and tensorial response properties from rotationally
equivariant atomwise features, with molecular dynamics and vibrational
spectra built on top. Everything runs on numpy through a small
reverse-mode engine with second-order support.
"""

__version__ = "0.1.0"
