"""Masked multi-scale execution with cached-proxy restoration.

At a dynamic scale, each layer runs only on its active positions (attention
context restricted to those positions); masked positions advance by adding
the upsampled per-layer delta cached from the previous scale, so every layer
still emits a spatially complete grid. Fully skipped positions can borrow
logits from a similar active neighbor, and predicted codes are blended by
depth score before being accumulated into the running feature map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mask as mask_mod
from .grid import bilinear_resize, ssim
from .model import (
    ToyVarModel,
    ScaleSchedule,
    embed_input,
    full_scale_inference,
    grid_positions,
    head_logits,
    layer_forward,
    lookup_codes,
)
from .schedule import (
    SchedulerConfig,
    base_decision_map,
    depth_map,
    depth_scores,
    percentile_ranks,
    solve_budget_param,
)


class LayerCache:
    """Per-layer state deltas from the previous scale.

    ``deltas[j] = r^{j+1} - r^j`` for layer j, plus the base state r^0, so
    base + sum(deltas) telescopes back to r^L exactly.
    """

    def __init__(self, states, scale_i: int):
        self.scale_index = scale_i
        self.base = states[0]
        self.height, self.width = states[0].shape[:2]
        self.deltas = [states[j + 1] - states[j] for j in range(len(states) - 1)]

    def layer_delta(self, layer: int) -> np.ndarray:
        if not 0 <= layer < len(self.deltas):
            raise KeyError(f"layer {layer} not cached (have 0..{len(self.deltas) - 1})")
        return self.deltas[layer]

    def reconstruct_final(self) -> np.ndarray:
        return self.base + sum(self.deltas)


@dataclass(frozen=True)
class PipelineConfig:
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    dynamic_start: int = 1
    mask_strategy: str = mask_mod.BIT_REVERSAL
    blending_enabled: bool = True
    restore_threshold: float = 0.9
    restore_window: int = 5

    def __post_init__(self):
        if self.dynamic_start < 1:
            raise ValueError("dynamic_start must be >= 1 (scale 0 is the start token)")
        if not -1.0 <= self.restore_threshold <= 1.0:
            raise ValueError(f"restore threshold must be in [-1, 1], got {self.restore_threshold}")
        if self.restore_window < 1 or self.restore_window % 2 == 0:
            raise ValueError(f"restore window must be odd and >= 1, got {self.restore_window}")


@dataclass
class ScaleReport:
    scale: int
    height: int
    width: int
    dynamic: bool
    compute_fraction: float
    mean_depth: float
    budget_target: float | None
    ssim_codes: float
    mse_codes: float
    ssim_feature: float
    mse_feature: float


@dataclass
class RunReport:
    scales: list[ScaleReport]
    speedup: float
    depth_maps: dict[int, np.ndarray]
    score_maps: dict[int, np.ndarray]
    final_feature: np.ndarray


def masked_scale_inference(
    model: ToyVarModel,
    f_prev: np.ndarray,
    layer_mask: np.ndarray,
    cache: LayerCache,
    h: int,
    w: int,
    scale_i: int,
):
    """Run one scale under an (L, h, w) layer mask.

    Active positions of layer j are gathered, processed with attention
    restricted to themselves (rotary phases keyed by original grid
    coordinates), and scattered back; masked positions take the cached
    proxy r^j + up(delta_j). Returns (states, logits).
    """
    layer_mask = np.asarray(layer_mask)
    if layer_mask.shape != (model.num_layers, h, w):
        raise ValueError(f"mask shape {layer_mask.shape} != {(model.num_layers, h, w)}")
    r0 = embed_input(model, f_prev, h, w, scale_i)
    positions = grid_positions(h, w)
    states = [r0]
    cur = r0
    for j in range(model.num_layers):
        active = layer_mask[j].ravel().astype(bool)
        proxy = bilinear_resize(cache.layer_delta(j), h, w)
        nxt = cur + proxy
        if active.any():
            rows = cur.reshape(h * w, model.channels)[active]
            out = layer_forward(model, j, rows, positions[active])
            flat = nxt.reshape(h * w, model.channels)
            flat[active] = out
            nxt = flat.reshape(h, w, model.channels)
        states.append(nxt)
        cur = nxt
    return states, head_logits(model, states[-1])


def hard_prune_scale_inference(
    model: ToyVarModel,
    f_prev: np.ndarray,
    keep_mask: np.ndarray,
    cache: LayerCache,
    h: int,
    w: int,
    scale_i: int,
) -> np.ndarray:
    """Binary keep/discard baseline: kept positions run all layers, pruned take the pure proxy path."""
    keep = np.asarray(keep_mask)
    if keep.shape != (h, w):
        raise ValueError(f"keep mask shape {keep.shape} != {(h, w)}")
    depths = keep.astype(np.int64) * model.num_layers
    layer_mask = mask_mod.build_layer_mask(depths, model.num_layers)
    _, logits = masked_scale_inference(model, f_prev, layer_mask, cache, h, w, scale_i)
    return logits


def restore_fully_masked(
    logits: np.ndarray,
    depth0_mask: np.ndarray,
    f_prev_up: np.ndarray,
    threshold: float,
    window: int,
) -> np.ndarray:
    """Give fully skipped positions the logits of their most similar active neighbor.

    Similarity is cosine over the upsampled previous-scale feature vectors
    within a window x window neighborhood; the copy only fires when the
    best similarity exceeds the threshold, otherwise the proxy-path logits
    stay. Ties keep the first neighbor in row-major scan order.
    """
    depth0 = np.asarray(depth0_mask).astype(bool)
    if not depth0.any():
        return logits
    h, w = depth0.shape
    half = window // 2
    out = logits.copy()
    for m, n in zip(*np.nonzero(depth0)):
        me = f_prev_up[m, n]
        me_norm = np.linalg.norm(me)
        best_sim = -np.inf
        best_pos = None
        for mm in range(max(0, m - half), min(h, m + half + 1)):
            for nn in range(max(0, n - half), min(w, n + half + 1)):
                if depth0[mm, nn]:
                    continue
                other = f_prev_up[mm, nn]
                denom = me_norm * np.linalg.norm(other)
                sim = float(me @ other / denom) if denom > 0.0 else 0.0
                if sim > best_sim:
                    best_sim = sim
                    best_pos = (mm, nn)
        if best_pos is not None and best_sim > threshold:
            out[m, n] = logits[best_pos]
    return out


def blend_codes(scores: np.ndarray, codes: np.ndarray, enabled: bool = True) -> np.ndarray:
    """Scale each position's code vector by its depth score."""
    codes = np.asarray(codes, dtype=np.float64)
    if not enabled:
        return codes
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != codes.shape[:2]:
        raise ValueError(f"score shape {scores.shape} != code spatial shape {codes.shape[:2]}")
    return codes * scores[:, :, None]


def accumulate_feature(f_prev: np.ndarray, z: np.ndarray, h_final: int, w_final: int) -> np.ndarray:
    """Running feature update: add the code residual upsampled to the final resolution."""
    return f_prev + bilinear_resize(np.asarray(z, dtype=np.float64), h_final, w_final)


def _channel_mean(grid: np.ndarray) -> np.ndarray:
    return np.asarray(grid).mean(axis=-1)


def _fidelity(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """(SSIM of channel means, mean squared error) between two feature grids."""
    return ssim(_channel_mean(a), _channel_mean(b)), float(np.mean((a - b) ** 2))


def _dense_reference(model: ToyVarModel, schedule: ScaleSchedule):
    """Full-depth pipeline trace: per-scale codes and accumulated features."""
    h_f, w_f = schedule.final_size
    f = np.zeros((h_f, w_f, model.channels))
    codes_per_scale, features_per_scale = [], []
    for i, (h, w) in enumerate(schedule.sizes):
        _, _, codes = full_scale_inference(model, f, h, w, i)
        f = accumulate_feature(f, codes, h_f, w_f)
        codes_per_scale.append(codes)
        features_per_scale.append(f)
    return codes_per_scale, features_per_scale


def run_pipeline(model: ToyVarModel, schedule: ScaleSchedule, cfg: PipelineConfig) -> RunReport:
    """Multi-scale generation with dynamic depth on scales past the reference scale.

    Scales below ``dynamic_start`` or at/below the reference scale run all
    layers; later scales solve the budget parameter for the target
    (area of the reference scale) / (area of this scale), derive depth
    scores from the previous scale's cached layer deltas, and execute under
    the resulting layer mask. Fidelity columns compare against a dense
    reference run of the same model.
    """
    sched_cfg = cfg.scheduler
    ref = sched_cfg.reference_scale
    if not 0 <= ref < len(schedule):
        raise ValueError(f"reference scale {ref} outside schedule of {len(schedule)} scales")
    h_f, w_f = schedule.final_size
    h_r, w_r = schedule[ref]

    ref_codes, ref_features = _dense_reference(model, schedule)

    f = np.zeros((h_f, w_f, model.channels))
    cache = None
    scales: list[ScaleReport] = []
    depth_maps: dict[int, np.ndarray] = {}
    score_maps: dict[int, np.ndarray] = {}
    dense_cost = 0.0
    masked_cost = 0.0

    for i, (h, w) in enumerate(schedule.sizes):
        dynamic = i >= cfg.dynamic_start and i > ref and cache is not None
        dense_cost += h * w * model.num_layers
        if not dynamic:
            states, logits, codes = full_scale_inference(model, f, h, w, i)
            scores = np.ones((h, w))
            fraction = 1.0
            mean_depth = float(model.num_layers)
            target = None
        else:
            target = min(1.0, (h_r * w_r) / (h * w))
            solution = solve_budget_param(sched_cfg.family, sched_cfg.eta, target, sched_cfg.budget_mode)
            base = base_decision_map(cache, sched_cfg, h, w)
            ranks = percentile_ranks(base)
            scores = depth_scores(ranks, sched_cfg, solution.c)
            depths = depth_map(scores, model.num_layers)
            layer_mask = mask_mod.build_layer_mask(depths, model.num_layers, cfg.mask_strategy)
            states, logits = masked_scale_inference(model, f, layer_mask, cache, h, w, i)
            logits = restore_fully_masked(
                logits,
                depths == 0,
                bilinear_resize(f, h, w),
                cfg.restore_threshold,
                cfg.restore_window,
            )
            codes = lookup_codes(model, logits)
            fraction = mask_mod.compute_fraction(layer_mask)
            mean_depth = float(depths.mean())
            depth_maps[i] = depths
            score_maps[i] = scores
        masked_cost += h * w * model.num_layers * fraction

        z = blend_codes(scores, codes, cfg.blending_enabled)
        f = accumulate_feature(f, z, h_f, w_f)
        cache = LayerCache(states, i)

        ssim_c, mse_c = _fidelity(codes, ref_codes[i])
        ssim_f, mse_f = _fidelity(f, ref_features[i])
        scales.append(
            ScaleReport(i, h, w, dynamic, fraction, mean_depth, target, ssim_c, mse_c, ssim_f, mse_f)
        )

    return RunReport(scales, dense_cost / masked_cost, depth_maps, score_maps, f)
