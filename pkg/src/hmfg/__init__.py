"""Mean field games on Heisenberg-type structures.

Deterministic OCP solvers (two-point shooting, direct transcription, a
semi-Lagrangian grid oracle), particle transport under the equilibrium
feedback, and a fictitious-play fixed point loop, all built on horizontal
vector fields with an optional epsilon completion.
"""

from hmfg._kernels import COMPILED as KERNELS_COMPILED
from hmfg._kernels import backend as kernels_backend
from hmfg.geometry import (
    HTypeStructure,
    StructureError,
    degenerate,
    from_table,
    group_inverse,
    group_op,
    grushin,
    h_norm,
    heisenberg,
)
from hmfg.hamiltonian import HamiltonianSpec
from hmfg.couplings import CouplingSpec
from hmfg.mfg import MfgProblem, MfgSolution, mild_certificate, solve_equilibrium
from hmfg.transport import M0Spec, MeasurePath, ParticleMeasure, wasserstein1

__version__ = "0.1.0"
