"""Parameter trees: flat mappings from dotted names to float64 arrays.

``"blocks.0.attn.wq"`` nests under ``blocks`` -> ``0`` -> ``attn``; the dotted
form keeps lookups cheap and ordering explicit.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .autodiff import Tensor, leaf

ParamTree = dict  # str -> np.ndarray


def flatten(tree: Mapping[str, np.ndarray]) -> tuple[np.ndarray, list[tuple[str, tuple[int, ...]]]]:
    layout = [(name, tuple(np.shape(tree[name]))) for name in tree]
    if not layout:
        return np.zeros(0), layout
    vec = np.concatenate([np.ravel(np.asarray(tree[n], dtype=np.float64)) for n, _ in layout])
    return vec, layout


def unflatten(vec: np.ndarray, layout) -> ParamTree:
    out, pos = {}, 0
    for name, shape in layout:
        size = int(np.prod(shape, dtype=int))
        out[name] = np.array(vec[pos:pos + size], dtype=np.float64).reshape(shape)
        pos += size
    if pos != len(vec):
        raise ValueError(f"vector has {len(vec)} entries, layout needs {pos}")
    return out


def count(tree: Mapping[str, np.ndarray]) -> int:
    return int(sum(np.size(v) for v in tree.values()))


def watch(tree: Mapping[str, np.ndarray]) -> dict[str, Tensor]:
    """Wrap every array as a recorded leaf for one forward/backward pass."""
    return {name: leaf(value, name=name) for name, value in tree.items()}


def subtree(tree: Mapping, prefix: str) -> dict:
    """Entries under ``prefix``, with the prefix stripped."""
    p = prefix.rstrip(".") + "."
    return {k[len(p):]: v for k, v in tree.items() if k.startswith(p)}


def map_tree(fn, tree: Mapping[str, np.ndarray], *others: Mapping[str, np.ndarray]) -> ParamTree:
    return {k: fn(v, *(o[k] for o in others)) for k, v in tree.items()}


def global_norm(tree: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.vdot(v, v)) for v in tree.values())))


def all_finite(tree: Mapping[str, np.ndarray]) -> bool:
    return all(np.isfinite(v).all() for v in tree.values())
