"""Numerical laboratory for Berezin-Toeplitz quantization on flat tori.

Exact trig-polynomial symbol algebra with Poisson / Nambu / hyperkahler
brackets, theta-function section bases with Toeplitz compression, generalized
commutators with structured (direct-sum / Kronecker) operators, and a
residual-rate harness that fits semiclassical decay exponents over k-sweeps.
"""

__version__ = "0.1.0"

from .experiments import (
    THEOREMS,
    ResidualSeries,
    detect_ik_sign,
    experiment_symbols,
    fit_rate,
    run_sweep,
)
from .hilbert import (
    QuadratureGrid,
    ThetaBasis,
    TorusGeometry,
    build_theta_basis,
    default_grid_n,
    get_geometry,
    quantize_triple,
    toeplitz_matrix,
)
from .operators import (
    DenseOperator,
    DirectSum,
    KronSum,
    NormEstimate,
    comm4_expand,
    gen_commutator,
    hs_norm,
    kron3,
    kron_comm4,
    kron_commutator,
    kron_product,
    op_norm,
)
from .symbols import (
    ConstantSymplecticForm,
    FourierSymbol,
    VolumeDensity,
    bracket4_hyp,
    bracket4_r,
    hyperkahler_forms,
    hyperkahler_volume_density,
    nambu_bracket_det,
    nambu_bracket_pairwise,
    partial_derivative,
    poisson_bracket,
    random_symbol,
    standard_t2_form,
    sup_norm,
    sym_mul,
    symbol_preset,
)

__all__ = [
    "THEOREMS",
    "ResidualSeries",
    "detect_ik_sign",
    "experiment_symbols",
    "fit_rate",
    "run_sweep",
    "QuadratureGrid",
    "ThetaBasis",
    "TorusGeometry",
    "build_theta_basis",
    "default_grid_n",
    "get_geometry",
    "quantize_triple",
    "toeplitz_matrix",
    "DenseOperator",
    "DirectSum",
    "KronSum",
    "NormEstimate",
    "comm4_expand",
    "gen_commutator",
    "hs_norm",
    "kron3",
    "kron_comm4",
    "kron_commutator",
    "kron_product",
    "op_norm",
    "ConstantSymplecticForm",
    "FourierSymbol",
    "VolumeDensity",
    "bracket4_hyp",
    "bracket4_r",
    "hyperkahler_forms",
    "hyperkahler_volume_density",
    "nambu_bracket_det",
    "nambu_bracket_pairwise",
    "partial_derivative",
    "poisson_bracket",
    "random_symbol",
    "standard_t2_form",
    "sup_norm",
    "sym_mul",
    "symbol_preset",
    "__version__",
]
