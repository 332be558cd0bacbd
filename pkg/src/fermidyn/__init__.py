"""Mean-field and bosonized dynamics of fermions on a periodic box."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("fermidyn")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from .errors import FermidynError, NumericalError, ResourceLimitError, ScenarioError
from .lattice import (
    FermiBall,
    HbarConvention,
    MomentumLattice,
    Potential,
    build_fermi_ball,
    build_lattice,
    make_potential,
    scaling_constants,
)
from .density import DensityMatrix
from .hartree_fock import hf_evolve, trace_norm_distance
from .phasespace import PhaseSpaceDensity, vlasov_evolve, weyl_quantize, wigner_transform

__all__ = [
    "__version__",
    "FermidynError",
    "NumericalError",
    "ResourceLimitError",
    "ScenarioError",
    "FermiBall",
    "HbarConvention",
    "MomentumLattice",
    "Potential",
    "build_fermi_ball",
    "build_lattice",
    "make_potential",
    "scaling_constants",
    "DensityMatrix",
    "hf_evolve",
    "trace_norm_distance",
    "PhaseSpaceDensity",
    "vlasov_evolve",
    "weyl_quantize",
    "wigner_transform",
]
