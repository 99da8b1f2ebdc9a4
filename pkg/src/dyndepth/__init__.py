"""Training-free per-token dynamic-depth inference on a toy next-scale transformer."""

from .dynamic import (
    LayerCache,
    PipelineConfig,
    RunReport,
    accumulate_feature,
    blend_codes,
    hard_prune_scale_inference,
    masked_scale_inference,
    restore_fully_masked,
    run_pipeline,
)
from .mask import active_layer_set, bit_reverse, build_layer_mask, compute_fraction, layer_permutation, uniform_layer_set
from .model import ScaleSchedule, ToyVarModel, init_model
from .schedule import (
    BudgetMode,
    ReferenceMetric,
    ScheduleFamily,
    SchedulerConfig,
    depth_map,
    depth_scores,
    percentile_ranks,
    rotated_schedule,
    schedule_value,
    solve_budget_param,
)

__all__ = [
    "LayerCache",
    "PipelineConfig",
    "RunReport",
    "ScaleSchedule",
    "ToyVarModel",
    "SchedulerConfig",
    "ScheduleFamily",
    "ReferenceMetric",
    "BudgetMode",
    "accumulate_feature",
    "active_layer_set",
    "bit_reverse",
    "blend_codes",
    "build_layer_mask",
    "compute_fraction",
    "depth_map",
    "depth_scores",
    "hard_prune_scale_inference",
    "init_model",
    "layer_permutation",
    "masked_scale_inference",
    "percentile_ranks",
    "restore_fully_masked",
    "rotated_schedule",
    "run_pipeline",
    "schedule_value",
    "solve_budget_param",
    "uniform_layer_set",
]
