"""Random projections and sketches built from dependent (adapted) entries,
with the chaos-deviation machinery and Monte-Carlo checks behind them."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .complexity import (
    DeviationBound,
    FiniteList,
    ToeplitzBand,
    VThetaFinite,
    VThetaSparse,
    VThetaSphere,
    complexity_report,
    deviation_bound,
    gaussian_width_mc,
    sample_size,
    tail_probability,
)
from .graph import Dag, build_gm_template, d_separated, parse_dag, parse_query, verify_sp2
from .processes import (
    DependentMatrixConfig,
    ProcessConfig,
    sample_dependent_matrices,
    sample_path,
    sample_paths,
    sample_with_tangent,
)
from .transforms import (
    CountSketch,
    DenseSketch,
    ToeplitzSketch,
    build_countsketch,
    build_jl,
    build_toeplitz,
    dump_operator,
    load_operator,
)
from .verify import TrialReport, jl_distortion, rip_constant

__all__ = [name for name in dir() if not name.startswith("_")]
