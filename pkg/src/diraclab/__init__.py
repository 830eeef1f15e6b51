"""Laboratory for a single relativistic spin-1/2 particle whose quantum state
lives on spacelike hyperplanes, with stochastic generation of classical events.

The package provides:

* ``algebra``      gamma matrices, spinor representations of restricted
                   Lorentz transformations, charge conjugation
* ``hyperplane``   the parameter domain of spacelike hyperplanes, their
                   embeddings and quadrature grids
* ``states``       plane-wave-superposition and grid-slice states, the
                   hyperplane inner product, Poincare action and charge
                   conjugation on states
* ``evolution``    free and external-potential Dirac propagation, detector
                   coupling operators
* ``events``       the ideal-measurement sampler and the piecewise
                   deterministic detection process
* ``scenario``     scenario files, validation and ensemble running
* ``verification`` the executable invariant suite behind ``diraclab verify``
"""

from diraclab.algebra import (
    GammaSet,
    LorentzTransform,
    SpinorRep,
    ChargeConjugator,
    build_gamma_dirac,
    spinor_rep,
    charge_conjugator,
)
from diraclab.hyperplane import HyperplaneParams, HyperplaneGrid, sigma, surface_element, make_grid
from diraclab.states import (
    ModeListState,
    GridSliceState,
    SystemState,
    evaluate,
    inner_product,
    inner_product_on,
    mode_inner_product,
    restrict,
    lift,
    poincare_transform,
    charge_conjugate,
    gaussian_packet,
)

__version__ = "0.1.0"
