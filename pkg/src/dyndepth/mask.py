"""Depth maps to layer-major binary masks.

A position with integer depth d activates the first d entries of a fixed
layer ordering. The default ordering is the bit-reversal permutation (the
radix-2 FFT index order), which spreads any prefix near-evenly across the
stack; the uniform ordering used by the ablation baseline places d layers
equidistantly instead.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

BIT_REVERSAL = "bit_reversal"
UNIFORM = "uniform"


def bit_reverse(x: int, k: int) -> int:
    """Reverse the k-bit binary representation of x."""
    if not 0 <= x < (1 << k):
        raise ValueError(f"x={x} out of range for {k} bits")
    r = 0
    for _ in range(k):
        r = (r << 1) | (x & 1)
        x >>= 1
    return r


@lru_cache(maxsize=None)
def layer_permutation(num_layers: int) -> tuple[int, ...]:
    """Bit-reversal ordering of layer indices 0..L-1.

    For non-power-of-two L the k-bit reversal sequence (k = ceil(log2 L))
    is filtered to indices < L, preserving order; the result is always a
    bijection on {0..L-1}.
    """
    if num_layers < 1:
        raise ValueError(f"layer count must be >= 1, got {num_layers}")
    k = max(1, (num_layers - 1).bit_length())
    seq = (bit_reverse(x, k) for x in range(1 << k))
    return tuple(layer for layer in seq if layer < num_layers)


def active_layer_set(depth: int, num_layers: int) -> list[int]:
    """First ``depth`` entries of the bit-reversal layer ordering."""
    if not 0 <= depth <= num_layers:
        raise ValueError(f"depth {depth} out of range [0, {num_layers}]")
    return list(layer_permutation(num_layers)[:depth])


def uniform_layer_set(depth: int, num_layers: int) -> list[int]:
    """``depth`` equidistant layer indices floor(j * L / depth)."""
    if not 0 <= depth <= num_layers:
        raise ValueError(f"depth {depth} out of range [0, {num_layers}]")
    return [(j * num_layers) // depth for j in range(depth)]


def build_layer_mask(depths: np.ndarray, num_layers: int, strategy: str = BIT_REVERSAL) -> np.ndarray:
    """Expand a (h, w) integer depth map into an (L, h, w) binary mask.

    Each position's column along the layer axis is the indicator of its
    active layer set, so the column sum equals the position's depth.
    """
    depths = np.asarray(depths)
    if depths.ndim != 2:
        raise ValueError(f"depth map must be 2-d, got shape {depths.shape}")
    if depths.min() < 0 or depths.max() > num_layers:
        raise ValueError(f"depths must lie in [0, {num_layers}]")
    if strategy == BIT_REVERSAL:
        order = layer_permutation(num_layers)
        # layer l is active iff its rank in the ordering is below the depth
        rank = np.empty(num_layers, dtype=np.int64)
        for pos, layer in enumerate(order):
            rank[layer] = pos
        mask = rank[:, None, None] < depths[None, :, :]
    elif strategy == UNIFORM:
        mask = np.zeros((num_layers,) + depths.shape, dtype=bool)
        for d in np.unique(depths):
            where = depths == d
            for layer in uniform_layer_set(int(d), num_layers):
                mask[layer][where] = True
    else:
        raise ValueError(f"unknown mask strategy {strategy!r}")
    return mask.astype(np.uint8)


def compute_fraction(mask: np.ndarray) -> float:
    """Fraction of (layer, position) pairs that are active."""
    mask = np.asarray(mask)
    if mask.ndim != 3:
        raise ValueError(f"layer mask must be 3-d, got shape {mask.shape}")
    return float(mask.sum() / mask.size)
