"""Desk-scale workbench for controllable disentanglement.

Trains small encoder/decoder models whose representation splits into an
interpretable soft-target part and a free latent part, penalizes statistical
dependence between the two, edits images by steering soft-target coordinates,
and scores how well attributes were factored out.
"""

__version__ = "0.1.0"

from .checkpoint import load_checkpoint, save_checkpoint  # noqa: E402,F401
from .config import (ExperimentConfig,  # noqa: E402,F401
                     load_experiment_config)
from .data import (Dataset, GlyphConfig, generate_glyphs,  # noqa: E402,F401
                   load_idx, save_idx, split_dataset)
from .dependence import (cross_covariance,  # noqa: E402,F401
                         distance_correlation, distance_covariance_sq,
                         permutation_independence_test)
from .editing import EditRequest, synthesize  # noqa: E402,F401
from .evaluation import (disentanglement_protocol,  # noqa: E402,F401
                         image_metrics)
from .losses import LossWeights  # noqa: E402,F401
from .networks import (Model, ModelParams, NetworkSpec,  # noqa: E402,F401
                       init_params)
from .training import TrainConfig, TrainLog, train  # noqa: E402,F401
