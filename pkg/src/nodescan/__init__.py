"""Two-stage Bayesian classification of spectral node scans.

The package turns per-pixel optical spectra of excised lymph nodes into a
metastatic / not-metastatic verdict.  The pipeline: preprocess raw spectra,
reduce to a small discriminant score space, fit a three-component
multivariate-t mixture with conjugate priors and a position-dependent mixing
field (stage 1), then smooth the label image with a Markov random field and
refit (stage 2).  A node is called metastatic when any pixel carries the
metastatic label.
"""

from .classify import EvalReport, classify_node, evaluate, ppv, render_ppm, roc_points
from .config import RunConfig, make_config
from .mixture import EmConfig, MixtureState, run_stage1, t_logpdf
from .model import Model, fit_model
from .mrf import MrfConfig, run_stage2
from .preprocess import PreprocessConfig, preprocess_node, preprocess_training
from .priors import GroupPrior, PositionField, position_field
from .synth import SynthConfig, gen_node, gen_nonnodal, gen_training
from .types import (
    METASTATIC,
    NONNODAL,
    NORMAL,
    ClassifiedNode,
    InputError,
    ManualTrainingSet,
    NodeScan,
    NumericalError,
    SpectralMatrix,
    WavelengthGrid,
)

__version__ = "0.1.0"

__all__ = [
    "METASTATIC",
    "NONNODAL",
    "NORMAL",
    "ClassifiedNode",
    "EmConfig",
    "EvalReport",
    "GroupPrior",
    "InputError",
    "ManualTrainingSet",
    "MixtureState",
    "Model",
    "MrfConfig",
    "NodeScan",
    "NumericalError",
    "PositionField",
    "PreprocessConfig",
    "RunConfig",
    "SpectralMatrix",
    "SynthConfig",
    "WavelengthGrid",
    "classify_node",
    "evaluate",
    "fit_model",
    "gen_node",
    "gen_nonnodal",
    "gen_training",
    "make_config",
    "position_field",
    "ppv",
    "preprocess_node",
    "preprocess_training",
    "render_ppm",
    "roc_points",
    "run_stage1",
    "run_stage2",
    "t_logpdf",
    "__version__",
]
