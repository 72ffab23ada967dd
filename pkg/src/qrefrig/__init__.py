"""Simulation of qubit refrigerators driven by a spin-locked ancilla.

Submodules:

``quantum``        dense multi-qubit linear algebra
``dynamics``       GKSL propagation and the Liouvillian expm oracle
``thermo``         heat / work accounting for a bipartite system
``refrigerators``  the reset-based and continuous refrigerator protocols
``frames``         flux-qubit model, rotating frames and the RWA check
``cli``            the ``qrefrig`` command line
"""

__version__ = "0.1.0"
