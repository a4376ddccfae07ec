"""Calkit, a desk-scale numerical laboratory for the Calderón problem.

Calkit solves Schrödinger and conductivity problems on a cube, assembles
their Dirichlet-to-Neumann maps, builds complex geometric optics solutions
with a periodic Fourier solver, samples potentials through boundary
pairings and checks the Carleman estimate behind partial-data uniqueness.
"""

from importlib.metadata import version

__version__ = version("calkit")
