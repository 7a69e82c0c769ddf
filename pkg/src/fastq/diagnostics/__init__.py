"""Offline analyses: disparity, clustering, Q-spread, uncertainty, objectives, ablations."""
from .embed import embed_2d
from .evaluate import (
    balance_report, final_mean_q, mc_uncertainty, models_from_checkpoint, objective_report,
    objective_weights, preference_fractions, q_spread, sample_rows,
)
from .experiments import ABLATIONS, RunCache, ablate, ablation_config, exploration_curve, run_variant
from .report import write_report, write_tsv
from .stats import (
    cluster_count, cluster_sweep, dbscan_labels, disparity, random_split_disparity,
    support_percent, unit_scale, wasserstein_1d,
)
