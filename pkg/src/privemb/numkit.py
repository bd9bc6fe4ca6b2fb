"""Float64 numeric kernels with hand-written backward passes.

Everything here is pure and deterministic: the same inputs and the same
seed produce the same bits on every platform. Dense carriers are numpy
float64 arrays, sparse carriers are scipy CSR matrices.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    """Operand dimensions are inconsistent."""


class NumericError(ArithmeticError):
    """A kernel or a training loss produced a non-finite value."""


_DETERMINISTIC = False


def set_deterministic(on: bool) -> None:
    """Strict mode: re-validate kernel outputs for NaN/Inf after every call."""
    global _DETERMINISTIC
    _DETERMINISTIC = bool(on)


def deterministic_mode() -> bool:
    return _DETERMINISTIC


def _checked(out: np.ndarray) -> np.ndarray:
    if _DETERMINISTIC and not np.all(np.isfinite(out)):
        raise NumericError("kernel produced a non-finite value")
    return out


def as_dense(values) -> np.ndarray:
    """Coerce to a 2-d float64 array, rejecting NaN/Inf."""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"dense matrix must be 2-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError("dense matrix contains NaN or Inf")
    return arr


def as_csr(matrix) -> sp.csr_matrix:
    """Coerce to float64 CSR with sorted, deduplicated column indices."""
    m = sp.csr_matrix(matrix, dtype=np.float64)
    m.sum_duplicates()
    m.sort_indices()
    if not np.all(np.isfinite(m.data)):
        raise NumericError("sparse matrix contains NaN or Inf")
    return m


def densify(s) -> np.ndarray:
    return np.asarray(sp.csr_matrix(s).todense(), dtype=np.float64)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("matmul operands must be 2-d")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return _checked(a @ b)


def spmm(s, b: np.ndarray) -> np.ndarray:
    """Sparse (CSR) times dense."""
    if not sp.issparse(s):
        raise ShapeError("spmm expects a sparse left operand")
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 2 or s.shape[1] != b.shape[0]:
        raise ShapeError(f"spmm shape mismatch: {s.shape} x {b.shape}")
    return _checked(np.asarray(s @ b))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(cotangent: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Subgradient convention: zero at the kink."""
    cotangent = np.asarray(cotangent, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if cotangent.shape != x.shape:
        raise ShapeError("cotangent shape must match input shape")
    return cotangent * (x > 0.0)


def sigmoid(x):
    """Numerically stable logistic function, exact for |x| up to 1e3 and beyond."""
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    e = np.exp(arr[~pos])
    out[~pos] = e / (1.0 + e)
    return float(out[0]) if scalar else out


def softplus(x):
    """log(1 + exp(x)) without overflow."""
    return np.logaddexp(0.0, np.asarray(x, dtype=np.float64))


def softmax_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError("softmax_rows expects a 2-d array")
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return _checked(e / e.sum(axis=1, keepdims=True))


def _log_softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def bce_with_logits(logits: np.ndarray, targets: np.ndarray, pos_weight: float = 1.0):
    """Weighted binary cross-entropy over every entry.

    loss = mean( pos_weight * t * softplus(-x) + (1 - t) * softplus(x) )

    Returns (loss, grad) where grad is the exact derivative with respect to
    the logits, including the mean scaling.
    """
    x = np.asarray(logits, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if x.shape != t.shape:
        raise ShapeError(f"logits {x.shape} and targets {t.shape} differ")
    if not pos_weight > 0:
        raise ValueError("pos_weight must be positive")
    per = pos_weight * t * softplus(-x) + (1.0 - t) * softplus(x)
    loss = float(per.mean())
    s = sigmoid(x)
    grad = (pos_weight * t * (s - 1.0) + (1.0 - t) * s) / x.size
    return loss, _checked(grad)


def softmax_cross_entropy(logits: np.ndarray, onehot: np.ndarray, mask):
    """Mean softmax cross-entropy over the rows selected by ``mask``.

    Rows outside the mask contribute nothing and receive zero gradient.
    """
    x = np.asarray(logits, dtype=np.float64)
    y = np.asarray(onehot, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"logits {x.shape} and labels {y.shape} differ")
    mask = np.asarray(mask, dtype=np.int64).ravel()
    if mask.size == 0:
        raise ValueError("label mask is empty")
    ym = y[mask]
    if not np.all(ym.sum(axis=1) == 1.0):
        raise ValueError("masked rows must be one-hot")
    logp = _log_softmax_rows(x[mask])
    loss = float(-(ym * logp).sum() / mask.size)
    grad = np.zeros_like(x)
    grad[mask] = (np.exp(logp) - ym) / mask.size
    return loss, _checked(grad)


class Adam(object):
    """Bias-corrected Adam over a named collection of parameter arrays."""

    def __init__(self, params: dict, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        """Apply one update in place. State must match the parameter set."""
        if set(params) != set(self.m):
            raise ShapeError("optimizer state does not match the parameter set")
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = np.asarray(grads[k], dtype=np.float64)
            if g.shape != p.shape or self.m[k].shape != p.shape:
                raise ShapeError(f"gradient shape mismatch for '{k}'")
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def derive_seed(seed: int, label: str) -> int:
    """Expand one top-level seed into an independent per-component seed."""
    digest = hashlib.blake2b(f"{seed}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


class Rng(object):
    """Seeded deterministic RNG.

    Gaussian draws use the Marsaglia polar transform on top of the uniform
    stream, so the sequence depends only on the seed.
    """

    def __init__(self, seed: int):
        self._gen = np.random.Generator(np.random.PCG64(int(seed)))

    def random(self, size=None):
        return self._gen.random(size=size)

    def uniform(self, low: float, high: float, size=None):
        return self._gen.uniform(low, high, size=size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, x):
        return self._gen.permutation(x)

    def randn(self, rows: int, cols: int) -> np.ndarray:
        if rows <= 0 or cols <= 0:
            raise ShapeError("randn dimensions must be positive")
        need = rows * cols
        chunks = []
        have = 0
        while have < need:
            k = max(64, need - have)
            uv = self._gen.uniform(-1.0, 1.0, size=(k, 2))
            s = uv[:, 0] ** 2 + uv[:, 1] ** 2
            ok = (s > 0.0) & (s < 1.0)
            uv = uv[ok]
            s = s[ok]
            f = np.sqrt(-2.0 * np.log(s) / s)
            pair = uv * f[:, None]
            vals = pair.reshape(-1)
            chunks.append(vals)
            have += vals.size
        return np.concatenate(chunks)[:need].reshape(rows, cols)

    def glorot(self, rows: int, cols: int) -> np.ndarray:
        """Glorot uniform init: bound sqrt(6 / (rows + cols))."""
        if rows <= 0 or cols <= 0:
            raise ShapeError("glorot dimensions must be positive")
        bound = math.sqrt(6.0 / (rows + cols))
        return self._gen.uniform(-bound, bound, size=(rows, cols))


def grad_check(fn, params: dict, step: float = 1e-5) -> float:
    """Compare analytic gradients against central finite differences.

    ``fn(params) -> (loss, grads)`` must be deterministic and must read the
    arrays in ``params`` fresh on every call. Returns the worst error over
    all coordinates, scaled by max(1, |analytic|, |numeric|).
    """
    _, grads = fn(params)
    kept = {k: np.array(grads[k], dtype=np.float64, copy=True) for k in params}
    worst = 0.0
    for name, p in params.items():
        g = kept[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape mismatch for '{name}'")
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + step
            hi, _ = fn(params)
            p[idx] = orig - step
            lo, _ = fn(params)
            p[idx] = orig
            numeric = (hi - lo) / (2.0 * step)
            err = abs(numeric - g[idx]) / max(1.0, abs(numeric), abs(g[idx]))
            if err > worst:
                worst = err
    return worst
