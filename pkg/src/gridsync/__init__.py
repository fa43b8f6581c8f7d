"""Simulation and certification toolkit for decentralized synchronization
control of mixed machine/converter power grids.

Modules:
    algebra:   angle embeddings, rotation stacks and 2x2 block impedance algebra
    network:   topology, parameters and the steady-state maps
    dynamics:  model right-hand sides, frame conversion and the RK4 integrator
    control:   controller catalog and the energy functions they realize
    stability: energy functions, Q matrices and damping certificates
    opf:       OPF set-point to local reference translation
    cycles:    loop minima, landscapes and equilibrium search
    cli:       command line driver
"""

__version__ = "0.1.0"
