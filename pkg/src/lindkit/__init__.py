"""lindkit: weak-coupling open-quantum-system engine.

Builds Lindblad and Redfield generators from microscopic inputs (system
Hamiltonian, coupling operators, bath spectral density), solves the
corresponding non-Markovian memory-kernel dynamics where that is exactly
possible, and reports on the validity of the approximations in between.
"""

__version__ = "0.1.0"

from . import bath, diagnostics, eigenops, master, memory, qops  # noqa: F401
