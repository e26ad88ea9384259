"""Self-supervised architecture search for gridded ensemble rainfall post-processing.

The package turns a c-member ensemble forecast stack into one corrected
rainfall grid: a block-wise operator search picks a path through a small
supernet by self-supervision, a supervised retrain fits that path with a
skill-regularized loss, and a verification suite (continuous scores,
categorical skill, statistical baselines, significance testing) measures
the result.  Everything runs deterministically from a seed on one core.
"""

from .autodiff import (Adam, BatchNorm2d, Conv2d, Linear, SGD, Tensor,
                       load_weights, no_grad, ops, save_weights, zero_grads)
from .baselines import ensemble_mean, fit_wem_weights, prob_match, weighted_em
from .blocks import (OP_KINDS, ChannelAwareBlock, ResidualBlock,
                     SpaceAwareBlock, cab_forward)
from .data import (Dataset, GridSample, dataset_arrays, generate_synthetic,
                   read_dataset, read_raster, screen, split_timeline,
                   write_dataset, write_raster)
from .estimators import (ArchitectureSearch, EnsembleMean, ProbabilityMatching,
                         RainfallPostProcessor, WeightedEnsembleMean)
from .metrics import (ContingencyTable, acc, bias, classify, contingency,
                      forecast_report, hss, mae, nse, pixel_metric_maps, rmse)
from .network import (NetworkConfig, SearchNetwork, derive_arch,
                      load_architecture, sample_arch, save_architecture)
from .search import (SearchConfig, SearchResult, TwinState, contrastive_loss,
                     ema_sync, random_crop4, run_search)
from .stats import DMResult, dm_test, normal_cdf, per_sample_mse
from .training import (TrainConfig, composite_loss, predict_network, retrain,
                       soft_hss, soft_level_probs, train_network)

__version__ = "0.1.0"

__all__ = [
    "Tensor", "no_grad", "zero_grads", "ops",
    "Conv2d", "BatchNorm2d", "Linear", "SGD", "Adam",
    "save_weights", "load_weights",
    "OP_KINDS", "cab_forward", "ResidualBlock", "SpaceAwareBlock", "ChannelAwareBlock",
    "NetworkConfig", "SearchNetwork", "sample_arch", "derive_arch",
    "save_architecture", "load_architecture",
    "SearchConfig", "SearchResult", "TwinState",
    "random_crop4", "contrastive_loss", "ema_sync", "run_search",
    "TrainConfig", "soft_level_probs", "soft_hss", "composite_loss",
    "train_network", "retrain", "predict_network",
    "bias", "mae", "rmse", "nse", "classify", "ContingencyTable",
    "contingency", "acc", "hss", "forecast_report", "pixel_metric_maps",
    "ensemble_mean", "prob_match", "weighted_em", "fit_wem_weights",
    "DMResult", "dm_test", "normal_cdf", "per_sample_mse",
    "GridSample", "Dataset", "screen", "split_timeline", "generate_synthetic",
    "dataset_arrays", "read_dataset", "write_dataset", "read_raster", "write_raster",
    "ArchitectureSearch", "RainfallPostProcessor",
    "EnsembleMean", "ProbabilityMatching", "WeightedEnsembleMean",
]
