"""Acoustic-mode damping by coupled viscous/Knudsen boundary layers.

Library layout:

- domain:    model domains (slab / rectangle / disk) and boundary frame
- spectrum:  Neumann Laplacian eigenmodes, analytic
- collision: velocity grids, relaxation collision models, transport coefficients
- acoustic:  acoustic operator, eigenpairs, shifted spectral solver
- viscous:   sqrt(eps) boundary-layer profiles and the damping coefficient
- knudsen:   half-space kinetic layer: solvability, fluid BCs, solver
- assembly:  two-scale approximate eigenfunctions, rounds 0..2, residuals
- sim:       linearized kinetic slab simulator with Maxwell walls
- cli:       batch pipelines, CSV/JSON artifacts, SVG figures
"""

__version__ = "0.1.0"
