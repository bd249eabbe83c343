"""Truncated sequence-space vectors and linear forward operators.

Square-summable sequences are represented at a fixed truncation length as
plain 1-D float64 numpy arrays.  Operators come in three kinds:

* ``DiagonalOperator`` -- componentwise multiplication by positive,
  nonincreasing singular values ``sigma_k`` (the standard compact-operator
  model for ill-posed equations),
* ``DenseOperator`` -- an explicit M x N matrix,
* ``StackedOperator`` -- the augmentation ``[A; sqrt(w) I]`` that absorbs a
  ridge term ``(w/2)||x||^2`` into the data misfit.

All operators implement an exact adjoint.  ``representer_norms`` computes,
for each coordinate k, the least-norm range element ``f_k`` with
``A* f_k = e_k``; the growth of ``||f_k||`` with k is one of the two
ingredients of the convergence-rate calculus in :mod:`seqreg.smoothness`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "as_vector",
    "norm",
    "LinearOperator",
    "DiagonalOperator",
    "DenseOperator",
    "StackedOperator",
    "operator_from_json",
    "operator_hash",
    "Representers",
    "representer_norms",
    "op_norm_estimate",
]


def as_vector(values, name: str = "x") -> np.ndarray:
    """Coerce ``values`` to a finite 1-D float64 array (read-only)."""
    x = np.array(values, dtype=float, copy=True).reshape(-1)
    if x.size == 0:
        raise ValueError(f"{name} must have length >= 1")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    x.setflags(write=False)
    return x


def norm(x, p=2) -> float:
    """p-norm of a sequence vector, p in {1, 2, inf}."""
    x = np.asarray(x, dtype=float)
    if p == 1:
        return float(np.sum(np.abs(x)))
    if p == 2:
        return float(np.sqrt(np.dot(x, x)))
    if p in (np.inf, float("inf"), "inf"):
        return float(np.max(np.abs(x)))
    raise ValueError("p must be 1, 2 or inf")


class LinearOperator:
    """Base class: a bounded linear map with an exact adjoint."""

    domain_dim: int
    range_dim: int

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def as_matrix(self) -> np.ndarray:
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def _check_domain(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.domain_dim,):
            raise ValueError(
                f"expected domain vector of length {self.domain_dim}, got shape {x.shape}"
            )
        return x

    def _check_range(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.range_dim,):
            raise ValueError(
                f"expected range vector of length {self.range_dim}, got shape {v.shape}"
            )
        return v

    def norm_bound(self) -> float:
        """Cached upper estimate of the operator norm (see op_norm_estimate)."""
        est = getattr(self, "_norm_bound", None)
        if est is None:
            est = op_norm_estimate(self)
            self._norm_bound = est
        return est


class DiagonalOperator(LinearOperator):
    """Multiplication by positive, nonincreasing singular values."""

    kind = "diagonal"

    def __init__(self, sigma):
        sigma = as_vector(sigma, "sigma")
        if np.any(sigma <= 0):
            raise ValueError("singular values must be positive")
        if np.any(np.diff(sigma) > 0):
            raise ValueError("singular values must be nonincreasing")
        self.sigma = sigma
        self.domain_dim = sigma.size
        self.range_dim = sigma.size

    def apply(self, x):
        return self.sigma * self._check_domain(x)

    def adjoint(self, v):
        return self.sigma * self._check_range(v)

    def as_matrix(self):
        return np.diag(self.sigma)

    def to_json(self):
        return {"kind": "diagonal", "sigma": self.sigma.tolist()}


class DenseOperator(LinearOperator):
    """An explicit M x N matrix acting by matrix-vector products."""

    kind = "dense"

    def __init__(self, matrix):
        a = np.array(matrix, dtype=float, copy=True)
        if a.ndim != 2 or a.size == 0:
            raise ValueError("matrix must be 2-D and nonempty")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix contains NaN or Inf entries")
        a.setflags(write=False)
        self.matrix = a
        self.range_dim, self.domain_dim = a.shape

    def apply(self, x):
        return self.matrix @ self._check_domain(x)

    def adjoint(self, v):
        return self.matrix.T @ self._check_range(v)

    def as_matrix(self):
        return np.array(self.matrix)

    def to_json(self):
        return {
            "kind": "dense",
            "rows": self.range_dim,
            "cols": self.domain_dim,
            "data": self.matrix.reshape(-1).tolist(),
        }


class StackedOperator(LinearOperator):
    """The augmented operator [A; sqrt(w) I] with ridge weight w >= 0.

    Satisfies ||[A; sqrt(w) I] x||^2 = ||A x||^2 + w ||x||^2, so an l1
    solve on the stacked operator with data [y; 0] reproduces the
    elastic-net solve on A.
    """

    kind = "stacked"

    def __init__(self, op: LinearOperator, ridge_weight: float):
        w = float(ridge_weight)
        if w < 0:
            raise ValueError("ridge_weight must be nonnegative")
        self.op = op
        self.ridge_weight = w
        self._sqrt_w = np.sqrt(w)
        self.domain_dim = op.domain_dim
        self.range_dim = op.range_dim + op.domain_dim

    def apply(self, x):
        x = self._check_domain(x)
        return np.concatenate([self.op.apply(x), self._sqrt_w * x])

    def adjoint(self, v):
        v = self._check_range(v)
        m = self.op.range_dim
        return self.op.adjoint(v[:m]) + self._sqrt_w * v[m:]

    def as_matrix(self):
        return np.vstack(
            [self.op.as_matrix(), self._sqrt_w * np.eye(self.domain_dim)]
        )

    def to_json(self):
        return {
            "kind": "stacked",
            "ridge_weight": self.ridge_weight,
            "op": self.op.to_json(),
        }


def operator_from_json(doc: dict) -> LinearOperator:
    """Rebuild an operator from its JSON document."""
    kind = doc.get("kind")
    if kind == "diagonal":
        return DiagonalOperator(doc["sigma"])
    if kind == "dense":
        rows, cols = int(doc["rows"]), int(doc["cols"])
        data = np.asarray(doc["data"], dtype=float).reshape(rows, cols)
        return DenseOperator(data)
    if kind == "stacked":
        return StackedOperator(operator_from_json(doc["op"]), doc["ridge_weight"])
    raise ValueError(f"unknown operator kind: {kind!r}")


def operator_hash(op: LinearOperator) -> str:
    """sha256 of the canonical JSON document of the operator."""
    text = json.dumps(op.to_json(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass(frozen=True)
class Representers:
    """Norms (and optionally the vectors f_k as columns) with A* f_k = e_k."""

    norms: np.ndarray
    vectors: np.ndarray | None = None


def representer_norms(op: LinearOperator, with_vectors: bool = False) -> Representers:
    """Least-norm solutions f_k of A* f = e_k for every coordinate k.

    For a diagonal operator f_k = e_k / sigma_k, so the norms are exactly
    1/sigma_k.  Otherwise all representers are obtained at once from the
    Gram system (A^T A) C = I, F = A C, factored by Cholesky with a small
    jitter retry; an irreparably rank-deficient operator raises
    ``numpy.linalg.LinAlgError``.
    """
    if isinstance(op, DiagonalOperator):
        norms = 1.0 / op.sigma
        vectors = np.diag(norms) if with_vectors else None
        return Representers(norms=norms, vectors=vectors)

    a = op.as_matrix()
    gram = a.T @ a
    n = gram.shape[0]
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * np.trace(gram) / n
        try:
            chol = np.linalg.cholesky(gram + jitter * np.eye(n))
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                "operator is rank deficient: cannot solve A* f = e_k"
            ) from exc
    coeffs = np.linalg.solve(chol.T, np.linalg.solve(chol, np.eye(n)))
    vectors = a @ coeffs
    norms = np.sqrt(np.sum(vectors * vectors, axis=0))
    return Representers(norms=norms, vectors=vectors if with_vectors else None)


def op_norm_estimate(op: LinearOperator, iters: int = 100, seed: int = 0) -> float:
    """Upper estimate of ||A|| by power iteration on A*A, inflated by 1%.

    Runs at least ``iters`` iterations from a seeded start vector, then
    continues until the Rayleigh quotient stabilizes to 1e-13 relative
    (at most 1000 extra iterations).
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.domain_dim)
    v /= np.sqrt(np.dot(v, v))
    est = 0.0
    for i in range(iters + 1000):
        w = op.adjoint(op.apply(v))
        rayleigh = float(np.dot(v, w))
        new_est = np.sqrt(max(rayleigh, 0.0))
        nw = np.sqrt(np.dot(w, w))
        if nw == 0.0:
            # v in the null space of A*A; restart from a fresh direction
            v = rng.standard_normal(op.domain_dim)
            v /= np.sqrt(np.dot(v, v))
            continue
        converged = abs(new_est - est) <= 1e-13 * max(new_est, 1e-300)
        est = new_est
        if i + 1 >= iters and converged:
            break
        v = w / nw
    return 1.01 * est
