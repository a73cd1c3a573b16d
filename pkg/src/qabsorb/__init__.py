"""Recurrence, enclosures, fixed points and absorption operators of quantum channels."""

from qabsorb.numerics import DEFAULT_TOL, Subspace, ToleranceContext
from qabsorb.channel import (
    GKLSGenerator,
    QuantumChannel,
    SampledChannel,
    generator_channel,
    restrict_channel,
    validate_channel,
)
from qabsorb.structure import (
    fixed_point_space,
    is_enclosure,
    maximal_invariant_state,
    minimal_enclosures,
    recurrence_decomposition,
)
from qabsorb.absorption import (
    ClassicalChain,
    absorption_iterative,
    absorption_linear,
    algebra_criterion,
    classical_absorption,
    embed_classical_chain,
    fixed_points_via_absorption,
)

__version__ = "0.1.0"
