"""Encoder, decoder and dense layers with hand-written backward passes.

All layers work on a batch of graphs stacked as one block-diagonal graph:
node rows of consecutive graphs are concatenated, and a per-graph *plan*
holds the precomputed index arrays (which parameter sits at which matrix
entry). Sparse products are done with ``np.bincount`` over flattened
``row * k + column`` indices, which sums in a fixed order and keeps runs
bit-reproducible.

Parameters live in a :class:`~sharegnn.sharing.ParameterPool`; layers only
hold block names. ``backward`` adds into the pool's gradient buffers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ContractViolation, NumericFault
from .sharing import ParameterPool


# ---------------------------------------------------------------------------
# activations

ACTIVATIONS = ("tanh", "leaky_relu", "relu", "identity")
LEAKY_SLOPE = 0.01


def activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "leaky_relu":
        return np.where(z > 0, z, LEAKY_SLOPE * z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "identity":
        return z
    raise ContractViolation(f"unknown activation {name!r}")


def activation_grad(name: str, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Derivative of the activation at ``z`` (``y`` is the activated value)."""
    if name == "tanh":
        return 1.0 - y * y
    if name == "leaky_relu":
        return np.where(z > 0, 1.0, LEAKY_SLOPE)
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "identity":
        return np.ones_like(z)
    raise ContractViolation(f"unknown activation {name!r}")


def _check_finite(arr: np.ndarray, where: str):
    if not np.all(np.isfinite(arr)):
        raise NumericFault(f"non-finite values in {where}")


def _scatter_rows(index: np.ndarray, values: np.ndarray, num_rows: int) -> np.ndarray:
    """``out[index[e]] += values[e]`` for a 2-d ``values``, in element order."""
    k = values.shape[1]
    if index.shape[0] == 0 or k == 0:
        return np.zeros((num_rows, k))
    flat = (index[:, None] * k + np.arange(k)).ravel()
    return np.bincount(flat, weights=values.ravel(), minlength=num_rows * k).reshape(num_rows, k)


# ---------------------------------------------------------------------------
# plans


@dataclass
class EncoderPlan:
    """Matrix entries of one graph (or a stacked batch).

    ``rows``/``cols`` are message target/source, ``pidx`` the message
    parameter per entry; ``bias_idx`` the bias vector row per node (-1 for
    none). Entries whose triple is absent are not stored.
    """

    num_nodes: int
    rows: np.ndarray
    cols: np.ndarray
    pidx: np.ndarray
    bias_idx: np.ndarray | None

    @classmethod
    def from_pairs(cls, num_nodes, rows, cols, pidx, bias_idx=None) -> "EncoderPlan":
        keep = pidx >= 0
        return cls(num_nodes, rows[keep], cols[keep], pidx[keep], bias_idx)

    @staticmethod
    def stack(plans: Sequence["EncoderPlan"]) -> "EncoderPlan":
        if len(plans) == 1:
            return plans[0]
        offs = np.cumsum([0] + [p.num_nodes for p in plans])
        rows = np.concatenate([p.rows + o for p, o in zip(plans, offs)])
        cols = np.concatenate([p.cols + o for p, o in zip(plans, offs)])
        pidx = np.concatenate([p.pidx for p in plans])
        bias = None if plans[0].bias_idx is None else np.concatenate([p.bias_idx for p in plans])
        return EncoderPlan(int(offs[-1]), rows, cols, pidx, bias)


@dataclass
class DecoderPlan:
    """Pooling-vector row per node (-1 for none) and graph sizes of a batch."""

    pidx: np.ndarray
    sizes: np.ndarray

    @staticmethod
    def stack(plans: Sequence["DecoderPlan"]) -> "DecoderPlan":
        if len(plans) == 1:
            return plans[0]
        return DecoderPlan(np.concatenate([p.pidx for p in plans]), np.concatenate([p.sizes for p in plans]))


def assemble_encoder_matrix(plan: EncoderPlan, weights: np.ndarray) -> sp.csr_matrix:
    """The ``n x n`` message matrix: entry (i, j) is the weight of the message j -> i."""
    n = plan.num_nodes
    return sp.csr_matrix((np.asarray(weights)[plan.pidx], (plan.rows, plan.cols)), shape=(n, n))


# ---------------------------------------------------------------------------
# layers


class EncoderHead:
    """``sigma(W X P + B)``: shared message matrix, optional feature map ``P``, label bias."""

    def __init__(self, name: str, num_params: int, num_bias: int, k_in: int, k_out: int | None,
                 activation: str, pool: ParameterPool):
        self.name = name
        self.k_in = k_in
        self.project = k_out is not None
        self.k_out = k_out if k_out is not None else k_in
        self.activation = activation
        self.msg = f"{name}.msg"
        pool.add(self.msg, (num_params,), "message")
        self.bias = None
        if num_bias:
            self.bias = f"{name}.bias"
            pool.add(self.bias, (num_bias, self.k_out), "bias")
        self.proj = None
        if self.project:
            self.proj = f"{name}.proj"
            pool.add(self.proj, (k_in, self.k_out), "dense")
        self._cache = None

    def forward(self, pool: ParameterPool, plan: EncoderPlan, x: np.ndarray) -> np.ndarray:
        if x.shape != (plan.num_nodes, self.k_in):
            raise ContractViolation(f"{self.name}: expected input {(plan.num_nodes, self.k_in)}, got {x.shape}")
        xw = x @ pool[self.proj] if self.proj else x
        w = pool[self.msg][plan.pidx]
        z = _scatter_rows(plan.rows, w[:, None] * xw[plan.cols], plan.num_nodes)
        if self.bias is not None and plan.bias_idx is not None:
            valid = plan.bias_idx >= 0
            z[valid] += pool[self.bias][plan.bias_idx[valid]]
        y = activate(self.activation, z)
        _check_finite(y, self.name)
        self._cache = (plan, x, xw, w, z, y)
        return y

    def backward(self, pool: ParameterPool, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise ContractViolation(f"{self.name}: backward without forward")
        plan, x, xw, w, z, y = self._cache
        dz = dy * activation_grad(self.activation, z, y)
        if plan.pidx.shape[0]:
            contrib = np.einsum("ek,ek->e", dz[plan.rows], xw[plan.cols])
            pool.grads[self.msg] += np.bincount(plan.pidx, weights=contrib, minlength=pool[self.msg].shape[0])
        dxw = _scatter_rows(plan.cols, w[:, None] * dz[plan.rows], plan.num_nodes)
        if self.bias is not None and plan.bias_idx is not None:
            valid = plan.bias_idx >= 0
            pool.grads[self.bias] += _scatter_rows(plan.bias_idx[valid], dz[valid], pool[self.bias].shape[0])
        if self.proj:
            pool.grads[self.proj] += x.T @ dxw
            dx = dxw @ pool[self.proj].T
        else:
            dx = dxw
        _check_finite(dx, f"{self.name} (backward)")
        return dx


class DecoderHead:
    """``sigma((1/n) W X + b)`` per graph, flattened row-major to ``m * k`` features."""

    def __init__(self, name: str, num_vectors: int, m: int, k: int, activation: str, pool: ParameterPool):
        if m < 1:
            raise ContractViolation("decoder output rows must be >= 1")
        self.name = name
        self.m, self.k = m, k
        self.activation = activation
        self.pool_name = f"{name}.pool"
        self.bias = f"{name}.bias"
        pool.add(self.pool_name, (num_vectors, m), "vector")
        pool.add(self.bias, (m, k), "dense_bias")
        self._cache = None

    @property
    def width(self) -> int:
        return self.m * self.k

    def forward(self, pool: ParameterPool, plan: DecoderPlan, x: np.ndarray) -> np.ndarray:
        if np.any(plan.sizes <= 0):
            raise ContractViolation(f"{self.name}: empty graph")
        if x.shape != (int(plan.sizes.sum()), self.k):
            raise ContractViolation(f"{self.name}: expected {self.k} input features, got {x.shape}")
        valid = plan.pidx >= 0
        p = np.zeros((x.shape[0], self.m))
        p[valid] = pool[self.pool_name][plan.pidx[valid]]
        starts = np.concatenate([[0], np.cumsum(plan.sizes)[:-1]])
        outer = p[:, :, None] * x[:, None, :]
        summed = np.add.reduceat(outer, starts, axis=0)
        z = summed / plan.sizes[:, None, None] + pool[self.bias]
        y = activate(self.activation, z)
        _check_finite(y, self.name)
        self._cache = (plan, x, p, valid, z, y)
        return y.reshape(y.shape[0], -1)

    def backward(self, pool: ParameterPool, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise ContractViolation(f"{self.name}: backward without forward")
        plan, x, p, valid, z, y = self._cache
        dz = dy.reshape(z.shape) * activation_grad(self.activation, z, y)
        pool.grads[self.bias] += dz.sum(axis=0)
        ds = np.repeat(dz / plan.sizes[:, None, None], plan.sizes, axis=0)
        dp = np.einsum("nmk,nk->nm", ds, x)
        pool.grads[self.pool_name] += _scatter_rows(plan.pidx[valid], dp[valid], pool[self.pool_name].shape[0])
        dx = np.einsum("nmk,nm->nk", ds, p)
        _check_finite(dx, f"{self.name} (backward)")
        return dx


class Dense:
    """Row-wise affine map plus activation; used for combiners, lifting and readout."""

    def __init__(self, name: str, k_in: int, k_out: int, activation: str, pool: ParameterPool):
        self.name = name
        self.k_in, self.k_out = k_in, k_out
        self.activation = activation
        self.w = f"{name}.W"
        self.b = f"{name}.b"
        pool.add(self.w, (k_in, k_out), "dense")
        pool.add(self.b, (k_out,), "dense_bias")
        self._cache = None

    def forward(self, pool: ParameterPool, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.k_in:
            raise ContractViolation(f"{self.name}: expected {self.k_in} input features, got {x.shape}")
        z = x @ pool[self.w] + pool[self.b]
        y = activate(self.activation, z)
        _check_finite(y, self.name)
        self._cache = (x, z, y)
        return y

    def backward(self, pool: ParameterPool, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise ContractViolation(f"{self.name}: backward without forward")
        x, z, y = self._cache
        dz = dy * activation_grad(self.activation, z, y)
        pool.grads[self.w] += x.T @ dz
        pool.grads[self.b] += dz.sum(axis=0)
        return dz @ pool[self.w].T


# ---------------------------------------------------------------------------
# stateless forms of the single-layer maps


def encoder_forward(plan: EncoderPlan, weights, x, bias_vectors=None, activation="identity", proj=None):
    """``sigma(W x P + B)`` for one graph, from explicit parameter arrays."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != plan.num_nodes:
        raise ContractViolation("feature rows do not match the graph")
    xw = x @ proj if proj is not None else x
    z = assemble_encoder_matrix(plan, weights) @ xw
    if bias_vectors is not None and plan.bias_idx is not None:
        valid = plan.bias_idx >= 0
        z[valid] += np.asarray(bias_vectors)[plan.bias_idx[valid]]
    y = activate(activation, z)
    _check_finite(y, "encoder")
    return y


def decoder_forward(pool_idx, pool_vectors, x, bias, activation="identity"):
    """``sigma((1/n) W x + b)`` for one graph; column i of W is the vector of node i's label."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        raise ContractViolation("decoder needs at least one node")
    pool_idx = np.asarray(pool_idx)
    vecs = np.asarray(pool_vectors, dtype=np.float64)
    w = np.zeros((vecs.shape[1], n))
    valid = pool_idx >= 0
    w[:, valid] = vecs[pool_idx[valid]].T
    y = activate(activation, w @ x / n + np.asarray(bias))
    _check_finite(y, "decoder")
    return y


def dense_transform(x, w, bias, activation="identity"):
    x, w = np.asarray(x, dtype=np.float64), np.asarray(w, dtype=np.float64)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0] or np.shape(bias) not in ((w.shape[1],), ()):
        raise ContractViolation(f"cannot map {x.shape} features with a {w.shape} matrix")
    return activate(activation, x @ w + bias)


def combine_heads(outputs: Sequence[np.ndarray], w, bias, activation="identity"):
    """Concatenate head outputs along the feature axis and apply a dense layer."""
    rows = {o.shape[0] for o in outputs}
    if len(rows) != 1:
        raise ContractViolation("head outputs must have the same number of rows")
    cat = np.concatenate(outputs, axis=1)
    if cat.shape[1] != np.shape(w)[0]:
        raise ContractViolation(f"combined width {cat.shape[1]} does not match the combiner ({np.shape(w)[0]})")
    return dense_transform(cat, w, bias, activation)
