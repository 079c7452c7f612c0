"""Constrained sequential-learning optimization for expensive batch experiments.

Gaussian-process surrogates with multiplicative probabilistic constraints
drive batch suggestions over a gridded process space; model-free planners
and a gradient-boosted teacher model provide virtual benchmarking; a
campaign service orchestrates the human-in-the-loop rounds.
"""

from .space import (
    ParameterSpace,
    ProcessCondition,
    ProcessVariable,
    enumerate_grid,
    neighbors,
    normalize,
    denormalize,
    snap_to_grid,
)
from .gp import GpFitConfig, GpModel, KernelHyperparams, Prediction, fit, predict
from .acquisition import (
    AcquisitionConfig,
    ConstraintSpec,
    PenalizerState,
    combined_acquisition,
    constraint_probability,
    estimate_lipschitz,
    select_batch,
    soften,
    ucb,
)
from .records import Observation
from .samplers import SamplingTrace, fspgs_run, lhs, ovats_run, random_sample
from .refine import PsoConfig, RefineWindow, WindowSpec, build_window, final_round_batch, pso_argmax
from .teacher import TeacherConfig, TeacherModel, fit_teacher, normalize_pce, percentile_marks, spearman
from .bench import MethodEnsemble, VirtualBoConfig, ensemble, run_virtual_campaign
from .campaign import (
    CampaignConfig,
    CampaignState,
    CostTable,
    RoundPlan,
    batch_time,
    ingest_results,
    load_snapshot,
    manifold_projection,
    new_campaign,
    save_snapshot,
    suggest_next_round,
)

__version__ = "0.1.0"