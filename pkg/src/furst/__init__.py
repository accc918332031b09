"""Exact-counting workbench for discretized Furstenberg-set geometry.

Core layout:
  grid        delta-discretized plane sets on the fixed dyadic window
  linespace   the metric space of affine lines and separated families
  regularity  Frostman extraction, refinement split, set-class verdicts
  generators  Cantor-target / train-track / random instance builders
  stats       pair counts, the deficiency exponent, appendix accounting
  projective  the involution psi, pushforwards, projection counts
  pipeline    the instrumented proof pipeline
  cli         generate | verify | stats | pipeline run | sweep | fit

Hot kernels live in a compiled extension with a pure-numpy fallback;
see furst.kernels (env FURST_KERNELS selects, benchmark in benchmarks/).
"""

from . import kernels
from .errors import FurstError
from .generators import FurstInstance, gen_cantor_target, gen_random, gen_train_track
from .grid import CellSet, IntervalSet, Scale
from .linespace import DualPoint, Line, LineFamily, SlopeIntercept
from .pipeline import PipelineParams, run_pipeline

__version__ = "0.1.0"

COMPILED_KERNELS = kernels.COMPILED_AVAILABLE

__all__ = [
    "CellSet",
    "COMPILED_KERNELS",
    "DualPoint",
    "FurstError",
    "FurstInstance",
    "IntervalSet",
    "Line",
    "LineFamily",
    "PipelineParams",
    "Scale",
    "SlopeIntercept",
    "gen_cantor_target",
    "gen_random",
    "gen_train_track",
    "kernels",
    "run_pipeline",
]
