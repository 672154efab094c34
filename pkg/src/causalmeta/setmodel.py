"""Permutation-invariant set regressor.

Rows of a dataset are embedded independently, mixed by pre-norm multi-head
self-attention blocks, pooled (mean or attention with a learned seed) and
mapped to a scalar by a small head. No operation depends on row order, so the
output is invariant to permutations of the rows.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ContractError, NumericError, ParameterError
from .numerics import autodiff as ad
from .numerics.autodiff import Tensor
from .numerics.params import ParamTree, watch
from .numerics.rng import RngStream

FORMAT_VERSION = 1


@dataclass(frozen=True)
class SetModelConfig:
    input_width: int
    embed_dim: int = 64
    num_blocks: int = 8
    num_heads: int = 4
    feedforward_width: int | None = None
    pooling: str = "mean"

    def __post_init__(self):
        if self.feedforward_width is None:
            object.__setattr__(self, "feedforward_width", 4 * self.embed_dim)
        for name in ("input_width", "embed_dim", "num_blocks", "num_heads", "feedforward_width"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if self.embed_dim % self.num_heads:
            raise ParameterError("embed_dim must be divisible by num_heads")
        if self.pooling not in ("mean", "attention"):
            raise ParameterError(f"unknown pooling {self.pooling!r}")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads


def init_params(config: SetModelConfig, stream: RngStream) -> ParamTree:
    """Fan-in scaled uniform weights, zero biases, unit normalisation gains."""
    E, F, H = config.embed_dim, config.input_width, config.feedforward_width
    params: ParamTree = {}

    def dense(name, fan_in, fan_out, bias=True):
        bound = 1.0 / np.sqrt(fan_in)
        params[f"{name}.w"] = stream.uniform(-bound, bound, (fan_in, fan_out))
        if bias:
            params[f"{name}.b"] = np.zeros(fan_out)

    def norm(name):
        params[f"{name}.gain"] = np.ones(E)
        params[f"{name}.offset"] = np.zeros(E)

    dense("embed.0", F, E)
    dense("embed.1", E, E)
    for i in range(config.num_blocks):
        p = f"blocks.{i}"
        norm(f"{p}.norm1")
        for proj in ("q", "k", "v"):
            dense(f"{p}.attn.{proj}", E, E, bias=False)
        dense(f"{p}.attn.out", E, E)
        norm(f"{p}.norm2")
        dense(f"{p}.ff.0", E, H)
        dense(f"{p}.ff.1", H, E)
    norm("final_norm")
    if config.pooling == "attention":
        params["pool.seed"] = stream.uniform(-1.0, 1.0, (1, E))
        dense("pool.k", E, E, bias=False)
        dense("pool.v", E, E, bias=False)
    dense("head.0", E, E)
    dense("head.1", E, 1)
    return params


def _dense(h: Tensor, p: Mapping[str, Tensor], name: str) -> Tensor:
    out = h @ p[f"{name}.w"]
    b = p.get(f"{name}.b")
    return out if b is None else out + b


def _split_heads(h: Tensor, m: int, n: int, heads: int, dh: int) -> Tensor:
    return h.reshape(m, n, heads, dh).transpose(0, 2, 1, 3)


def _self_attention(h: Tensor, p, name: str, config: SetModelConfig) -> Tensor:
    m, n, E = h.shape
    H, dh = config.num_heads, config.head_dim
    q = _split_heads(_dense(h, p, f"{name}.q"), m, n, H, dh)
    k = _split_heads(_dense(h, p, f"{name}.k"), m, n, H, dh)
    v = _split_heads(_dense(h, p, f"{name}.v"), m, n, H, dh)
    scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dh))
    mixed = ad.softmax(scores, axis=-1) @ v
    mixed = mixed.transpose(0, 2, 1, 3).reshape(m, n, E)
    return _dense(mixed, p, f"{name}.out")


def _attention_pool(h: Tensor, p, config: SetModelConfig) -> Tensor:
    m, n, E = h.shape
    H, dh = config.num_heads, config.head_dim
    q = p["pool.seed"].reshape(1, 1, H, dh).transpose(0, 2, 1, 3)  # (1, H, 1, dh)
    k = _split_heads(_dense(h, p, "pool.k"), m, n, H, dh)
    v = _split_heads(_dense(h, p, "pool.v"), m, n, H, dh)
    scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dh))  # (m, H, 1, n)
    pooled = ad.softmax(scores, axis=-1) @ v  # (m, H, 1, dh)
    return pooled.transpose(0, 2, 1, 3).reshape(m, E)


def forward_batch(params: Mapping[str, Tensor | np.ndarray], rows: np.ndarray | Tensor,
                  config: SetModelConfig) -> Tensor:
    """Predictions for a stack of equally sized datasets, ``rows`` shaped (m, N, F)."""
    p = {k: ad.as_tensor(v) for k, v in params.items()}
    x = ad.as_tensor(rows)
    if x.ndim != 3 or x.shape[-1] != config.input_width:
        raise ContractError(f"expected rows shaped (m, N, {config.input_width}), got {x.shape}")
    h = _dense(ad.gelu(_dense(x, p, "embed.0")), p, "embed.1")
    for i in range(config.num_blocks):
        b = f"blocks.{i}"
        h = h + _self_attention(ad.layer_norm(h, p[f"{b}.norm1.gain"], p[f"{b}.norm1.offset"]),
                                p, f"{b}.attn", config)
        z = ad.layer_norm(h, p[f"{b}.norm2.gain"], p[f"{b}.norm2.offset"])
        h = h + _dense(ad.gelu(_dense(z, p, f"{b}.ff.0")), p, f"{b}.ff.1")
    h = ad.layer_norm(h, p["final_norm.gain"], p["final_norm.offset"])
    pooled = h.mean(axis=1) if config.pooling == "mean" else _attention_pool(h, p, config)
    out = _dense(ad.gelu(_dense(pooled, p, "head.0")), p, "head.1")
    return out.reshape(out.shape[0])


def featurize(dataset, query: np.ndarray | None = None) -> np.ndarray:
    """Row features for one dataset: its columns in role order, then the query on every row."""
    feats = dataset.feature_matrix()
    if query is not None:
        q = np.broadcast_to(np.atleast_1d(np.asarray(query, dtype=np.float64)),
                            (feats.shape[0], np.size(query)))
        feats = np.concatenate([feats, q], axis=1)
    return feats


def forward(params, dataset, config: SetModelConfig, query=None) -> float:
    rows = featurize(dataset, query)
    return float(forward_batch(params, rows[None], config).data[0])


def batch_loss(params: ParamTree, rows: np.ndarray, targets: np.ndarray,
               config: SetModelConfig) -> tuple[float, ParamTree]:
    """Mean squared error over a stacked batch and its gradient tree."""
    if len(rows) == 0:
        raise ParameterError("batch is empty")
    leaves = watch(params)
    pred = forward_batch(leaves, rows, config)
    bad = np.flatnonzero(~np.isfinite(pred.data))
    if bad.size:
        raise NumericError(f"non-finite prediction at batch index {int(bad[0])}")
    diff = pred - np.asarray(targets, dtype=np.float64)
    mse = (diff * diff).mean()
    return float(mse.data), ad.backward(mse, leaves)


def stack_rows(items: Sequence[np.ndarray]) -> list[tuple[np.ndarray, np.ndarray]]:
    """Group row matrices by shape so each group runs as one batched pass.

    Returns ``(indices, stacked)`` pairs.
    """
    groups: dict[tuple, list[int]] = {}
    for i, r in enumerate(items):
        groups.setdefault(r.shape, []).append(i)
    return [(np.array(idx), np.stack([items[i] for i in idx])) for idx in groups.values()]


def predict_rows(params, items: Sequence[np.ndarray], config: SetModelConfig,
                 chunk: int = 256) -> np.ndarray:
    out = np.empty(len(items))
    for idx, stacked in stack_rows(items):
        for lo in range(0, len(idx), chunk):
            out[idx[lo:lo + chunk]] = forward_batch(params, stacked[lo:lo + chunk], config).data
    return out


def save_checkpoint(path: str | Path, config: SetModelConfig, params: ParamTree,
                    extra: dict | None = None) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "config": asdict(config),
        "params": {k: {"shape": list(v.shape), "values": np.ravel(v).tolist()}
                   for k, v in params.items()},
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path: str | Path) -> tuple[SetModelConfig, ParamTree, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != FORMAT_VERSION:
        raise ContractError(f"unsupported checkpoint format {doc.get('format_version')!r}")
    config = SetModelConfig(**doc["config"])
    params = {k: np.asarray(v["values"], dtype=np.float64).reshape(v["shape"])
              for k, v in doc["params"].items()}
    return config, params, doc.get("extra", {})
