"""Deterministic toy next-scale-prediction transformer.

A stack of pre-norm single-head attention + FFN blocks over token grids,
with 2D rotary phases keyed by original grid coordinates, a linear head and
a hard-argmax codebook lookup. All parameters are drawn from a seeded PRNG,
so two models built from the same (seed, L, C, V) are bit-identical.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .grid import bilinear_resize

DEFAULT_SCALES = ((1, 1), (2, 2), (3, 3), (4, 4), (6, 6), (9, 9), (13, 13), (18, 18), (24, 24), (32, 32))

_ROPE_BASE = 10000.0
_NORM_EPS = 1e-6


@dataclass(frozen=True)
class ScaleSchedule:
    """Ordered (h_i, w_i) token-grid sizes, coarse to fine."""

    sizes: tuple[tuple[int, int], ...] = DEFAULT_SCALES

    def __post_init__(self):
        if len(self.sizes) < 2:
            raise ValueError("schedule needs at least 2 scales")
        if self.sizes[0] != (1, 1):
            raise ValueError("schedule must start from the 1x1 start token")
        prev = (0, 0)
        for h, w in self.sizes:
            if h < prev[0] or w < prev[1]:
                raise ValueError("scale sizes must be non-decreasing")
            prev = (h, w)

    def __len__(self):
        return len(self.sizes)

    def __getitem__(self, i):
        return self.sizes[i]

    @property
    def final_size(self):
        return self.sizes[-1]


@dataclass
class LayerParams:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    gain_attn: np.ndarray
    gain_ffn: np.ndarray


@dataclass
class ToyVarModel:
    seed: int
    num_layers: int
    channels: int
    codebook_size: int
    w_embed: np.ndarray = field(repr=False, default=None)
    w_head: np.ndarray = field(repr=False, default=None)
    codebook: np.ndarray = field(repr=False, default=None)
    layers: list[LayerParams] = field(repr=False, default=None)


def init_model(seed: int, num_layers: int, channels: int, codebook_size: int) -> ToyVarModel:
    """Build a model with seeded parameters.

    Weights are scaled by 1/sqrt(C) so block outputs stay O(1); residual
    branch outputs are further scaled by 1/L inside the forward pass.
    Channels must be divisible by 4 for the 2D rotary split.
    """
    if num_layers < 1 or channels < 1 or codebook_size < 1:
        raise ValueError("num_layers, channels and codebook_size must be >= 1")
    if channels % 4 != 0:
        raise ValueError(f"channels must be divisible by 4 for 2D rotary pairs, got {channels}")
    rng = np.random.default_rng(seed)
    c = channels
    scale = 1.0 / np.sqrt(c)

    def mat(rows, cols):
        return rng.standard_normal((rows, cols)) * scale

    w_embed = mat(c, c)
    w_head = mat(c, codebook_size)
    codebook = rng.standard_normal((codebook_size, c))
    layers = []
    for _ in range(num_layers):
        layers.append(
            LayerParams(
                wq=mat(c, c),
                wk=mat(c, c),
                wv=mat(c, c),
                wo=mat(c, c),
                w1=mat(c, 2 * c),
                w2=mat(2 * c, c) / np.sqrt(2.0),
                gain_attn=1.0 + 0.05 * rng.standard_normal(c),
                gain_ffn=1.0 + 0.05 * rng.standard_normal(c),
            )
        )
    return ToyVarModel(seed, num_layers, channels, codebook_size, w_embed, w_head, codebook, layers)


def scale_embedding(model: ToyVarModel, scale_i: int) -> np.ndarray:
    """Additive per-scale embedding vector, derived from (seed, scale index)."""
    rng = np.random.default_rng([model.seed, 1000 + scale_i])
    return rng.standard_normal(model.channels) / np.sqrt(model.channels)


_POS_FREQS = (1.0, 2.0, 4.0)


def position_field(model: ToyVarModel, h: int, w: int) -> np.ndarray:
    """Additive positional embedding grid, shape (h, w, C).

    Sinusoids of the normalized pixel-center coordinates are mixed through a
    seeded projection. Because the coordinates are continuous (not index
    based), coarse scales sample the same underlying field as fine ones;
    without this term every token is identical and the stack collapses to
    spatially constant outputs, since attention mixes equal values into
    equal values no matter how rotary phases reshape the weights.
    """
    u = ((np.arange(h) + 0.5) / h)[:, None, None]
    v = ((np.arange(w) + 0.5) / w)[None, :, None]
    freqs = 2.0 * np.pi * np.asarray(_POS_FREQS)
    feats = np.concatenate(
        [
            np.broadcast_to(np.sin(u * freqs), (h, w, len(_POS_FREQS))),
            np.broadcast_to(np.cos(u * freqs), (h, w, len(_POS_FREQS))),
            np.broadcast_to(np.sin(v * freqs), (h, w, len(_POS_FREQS))),
            np.broadcast_to(np.cos(v * freqs), (h, w, len(_POS_FREQS))),
        ],
        axis=2,
    )
    rng = np.random.default_rng([model.seed, 777])
    proj = rng.standard_normal((feats.shape[2], model.channels)) / np.sqrt(feats.shape[2])
    return feats @ proj


def _rms_norm(x: np.ndarray, gain: np.ndarray) -> np.ndarray:
    return x / np.sqrt((x * x).mean(axis=-1, keepdims=True) + _NORM_EPS) * gain


def _rope_angles(model: ToyVarModel, positions: np.ndarray):
    """Per-token rotation angles: row phases for the first channel half, column for the second."""
    half = model.channels // 2
    npairs = half // 2
    inv_freq = _ROPE_BASE ** (-np.arange(npairs) * 2.0 / half)
    rows = positions[:, 0:1] * inv_freq[None, :]
    cols = positions[:, 1:2] * inv_freq[None, :]
    return rows, cols


def _apply_rope(x: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    n, c = x.shape
    half = c // 2
    out = np.empty_like(x)
    for start, ang in ((0, rows), (half, cols)):
        block = x[:, start : start + half].reshape(n, half // 2, 2)
        cos, sin = np.cos(ang), np.sin(ang)
        r0 = block[:, :, 0] * cos - block[:, :, 1] * sin
        r1 = block[:, :, 0] * sin + block[:, :, 1] * cos
        out[:, start : start + half] = np.stack((r0, r1), axis=-1).reshape(n, half)
    return out


def layer_forward(model: ToyVarModel, layer_idx: int, x: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """One pre-norm residual block over the active token rows.

    ``x`` is (N, C); ``positions`` is (N, 2) original (row, col) grid
    coordinates used for the rotary phases. Attention runs over exactly
    these N tokens, so excluded tokens never enter the context.
    """
    x = np.asarray(x, dtype=np.float64)
    positions = np.asarray(positions)
    if x.ndim != 2 or positions.shape != (x.shape[0], 2):
        raise ValueError(f"positions/rows mismatch: x {x.shape}, positions {positions.shape}")
    p = model.layers[layer_idx]
    res_scale = 1.0 / model.num_layers

    xn = _rms_norm(x, p.gain_attn)
    rows, cols = _rope_angles(model, positions)
    q = _apply_rope(xn @ p.wq, rows, cols)
    k = _apply_rope(xn @ p.wk, rows, cols)
    v = xn @ p.wv
    scores = (q @ k.T) / np.sqrt(model.channels)
    scores -= scores.max(axis=1, keepdims=True)
    w = np.exp(scores)
    w /= w.sum(axis=1, keepdims=True)
    x = x + ((w @ v) @ p.wo) * res_scale

    xn = _rms_norm(x, p.gain_ffn)
    hidden = np.maximum(xn @ p.w1, 0.0)
    return x + (hidden @ p.w2) * res_scale


def grid_positions(h: int, w: int) -> np.ndarray:
    """Row-major (row, col) coordinates of an h x w grid, shape (h*w, 2)."""
    mm, nn = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return np.stack((mm.ravel(), nn.ravel()), axis=1)


def embed_input(model: ToyVarModel, f_prev: np.ndarray, h: int, w: int, scale_i: int) -> np.ndarray:
    """Initial layer state: resized previous feature map, projected, plus the
    scale embedding and the fixed positional field."""
    down = bilinear_resize(np.asarray(f_prev, dtype=np.float64), h, w)
    return down @ model.w_embed + scale_embedding(model, scale_i) + position_field(model, h, w)


def head_logits(model: ToyVarModel, r_final: np.ndarray) -> np.ndarray:
    return np.asarray(r_final, dtype=np.float64) @ model.w_head


def lookup_codes(model: ToyVarModel, logits: np.ndarray) -> np.ndarray:
    """Codebook rows at the per-position argmax; ties go to the lowest index."""
    idx = np.argmax(logits, axis=-1)
    return model.codebook[idx]


def head_and_lookup(model: ToyVarModel, r_final: np.ndarray):
    logits = head_logits(model, r_final)
    return logits, lookup_codes(model, logits)


def full_scale_inference(model: ToyVarModel, f_prev: np.ndarray, h: int, w: int, scale_i: int):
    """Dense run of all L layers at one scale.

    Returns (states, logits, codes) where states is the list of L+1 grids
    r^0..r^L, each (h, w, C); states seed the next scale's layer cache.
    """
    r0 = embed_input(model, f_prev, h, w, scale_i)
    positions = grid_positions(h, w)
    states = [r0]
    x = r0.reshape(h * w, model.channels)
    for layer_idx in range(model.num_layers):
        x = layer_forward(model, layer_idx, x, positions)
        states.append(x.reshape(h, w, model.channels))
    logits, codes = head_and_lookup(model, states[-1])
    return states, logits, codes


def early_exit_inference(model: ToyVarModel, f_prev: np.ndarray, h: int, w: int, scale_i: int, exit_layer: int):
    """Dense run with the head applied to r^exit_layer instead of r^L."""
    if not 0 <= exit_layer <= model.num_layers:
        raise ValueError(f"exit layer {exit_layer} out of range [0, {model.num_layers}]")
    states, _, _ = full_scale_inference(model, f_prev, h, w, scale_i)
    logits, codes = head_and_lookup(model, states[exit_layer])
    return logits, codes


def layer_similarity(states) -> np.ndarray:
    """Cosine similarity between consecutive layer states, per token.

    Returns shape (L, h, w) for L+1 input states; zero-norm vectors get
    similarity 0.
    """
    if len(states) < 2:
        raise ValueError("need at least 2 states")
    sims = []
    for prev, cur in zip(states[:-1], states[1:]):
        dot = (prev * cur).sum(axis=-1)
        norm = np.linalg.norm(prev, axis=-1) * np.linalg.norm(cur, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(norm > 0.0, dot / np.where(norm > 0.0, norm, 1.0), 0.0)
        sims.append(s)
    return np.stack(sims)


_BLOB_MAGIC = b"DDF1"


def write_state_blob(path, array: np.ndarray) -> None:
    """Store an array as little-endian float32 with a (magic, ndim, shape) header."""
    a = np.ascontiguousarray(array, dtype="<f4")
    with open(path, "wb") as f:
        f.write(_BLOB_MAGIC)
        f.write(struct.pack("<I", a.ndim))
        f.write(struct.pack(f"<{a.ndim}I", *a.shape))
        f.write(a.tobytes())


def read_state_blob(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.read(4) != _BLOB_MAGIC:
            raise ValueError(f"{path}: bad magic")
        (ndim,) = struct.unpack("<I", f.read(4))
        shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
        data = np.frombuffer(f.read(), dtype="<f4")
    return data.reshape(shape)
