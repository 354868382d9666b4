"""Closed-form multi-output ridge regression, linear and kernelized.

Shapes follow the column convention used throughout the package: class
attributes are stacked as columns of a ``(K, S)`` matrix and regression
targets as columns of a ``(D_out, S)`` matrix.

Linear ridge::

    W = M A^T (A A^T + lam I_K)^{-1}            (D_out, K)

Kernel ridge::

    alpha = M (G + lam I_S)^{-1}                (D_out, S)
    f(a)  = alpha k(a),  k(a)_i = kernel(a, a_i)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.linalg as la

__all__ = [
    "SolverError",
    "KernelSpec",
    "RidgeSolution",
    "KernelSolution",
    "fit_linear",
    "predict_linear",
    "gram",
    "kernel_vector",
    "fit_kernel",
    "fit_kernel_solution",
    "predict_kernel",
]

KERNELS = ("linear", "quadratic", "rbf")


class SolverError(np.linalg.LinAlgError):
    """The regularized normal equations could not be factorized."""


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "quadratic"
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf" and not self.gamma > 0:
            raise ValueError("rbf kernel needs gamma > 0")


@dataclass(frozen=True, eq=False)
class RidgeSolution:
    weights: np.ndarray  # (D_out, K)
    lam: float

    @property
    def n_inputs(self) -> int:
        return self.weights.shape[1]

    def predict(self, a) -> np.ndarray:
        return predict_linear(self, a)


@dataclass(frozen=True, eq=False)
class KernelSolution:
    coeffs: np.ndarray  # (D_out, S)
    attributes: np.ndarray  # (K, S), the seen-class attributes
    kernel: KernelSpec
    lam: float

    def __post_init__(self):
        if self.coeffs.shape[1] != self.attributes.shape[1]:
            raise ValueError("coefficient columns must match stored classes")

    @property
    def n_inputs(self) -> int:
        return self.attributes.shape[0]

    def predict(self, a) -> np.ndarray:
        return predict_kernel(self, a)


Solution = Union[RidgeSolution, KernelSolution]


def _check_lambda(lam):
    if not (np.isfinite(lam) and lam > 0):
        raise ValueError(f"ridge penalty must be positive, got {lam}")


def _spd_solve(lhs: np.ndarray, rhs: np.ndarray, jitter: bool) -> np.ndarray:
    """Solve ``lhs @ X = rhs`` for symmetric positive-definite ``lhs``."""
    if not (np.all(np.isfinite(lhs)) and np.all(np.isfinite(rhs))):
        raise SolverError("regularized system has non-finite entries (inputs too large)")
    try:
        factor = la.cho_factor(lhs, lower=True, check_finite=True)
    except (la.LinAlgError, ValueError) as exc:
        if not jitter:
            raise SolverError(f"regularized system is not positive definite: {exc}")
        n = lhs.shape[0]
        eps = 1e-10 * max(np.trace(lhs) / n, np.finfo(float).tiny)
        try:
            factor = la.cho_factor(lhs + eps * np.eye(n), lower=True)
        except (la.LinAlgError, ValueError) as exc2:
            raise SolverError(
                f"regularized system is not positive definite even with jitter: {exc2}"
            ) from exc
    out = la.cho_solve(factor, rhs)
    if not np.all(np.isfinite(out)):
        raise SolverError("regularized system is numerically singular")
    return out


def fit_linear(targets, inputs, lam: float) -> RidgeSolution:
    """Multi-output ridge regression of ``targets`` (D_out, S) on ``inputs`` (K, S)."""
    M = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    A = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if M.shape[1] != A.shape[1]:
        raise ValueError(
            f"targets have {M.shape[1]} columns but inputs have {A.shape[1]}"
        )
    _check_lambda(lam)
    K = A.shape[0]
    with np.errstate(over="ignore", invalid="ignore"):
        lhs = A @ A.T + lam * np.eye(K)
        rhs = A @ M.T
    # W (AA^T + lam I) = M A^T  <=>  (AA^T + lam I) W^T = A M^T
    W = _spd_solve(lhs, rhs, jitter=True).T
    return RidgeSolution(np.ascontiguousarray(W), float(lam))


def predict_linear(sol: RidgeSolution, a) -> np.ndarray:
    """``W a`` for a K-vector, or ``W A`` for a (K, n) matrix of attributes."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[0] != sol.n_inputs:
        raise ValueError(f"attribute has {a.shape[0]} dims, expected {sol.n_inputs}")
    return sol.weights @ a


def _pair_kernel(kernel: KernelSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    # X: (K, n), Y: (K, m) -> (n, m)
    dots = X.T @ Y
    if kernel.kind == "linear":
        return dots
    if kernel.kind == "quadratic":
        return (dots + 1.0) ** 2
    sq = (X * X).sum(axis=0)[:, None] + (Y * Y).sum(axis=0)[None, :] - 2.0 * dots
    return np.exp(-kernel.gamma * np.maximum(sq, 0.0))


def gram(kernel: KernelSpec, A) -> np.ndarray:
    """Kernel matrix between the columns of ``A`` (K, S)."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if A.shape[1] < 1:
        raise ValueError("need at least one class")
    G = _pair_kernel(kernel, A, A)
    G = 0.5 * (G + G.T)
    if kernel.kind == "rbf":
        np.fill_diagonal(G, 1.0)
    return G


def kernel_vector(kernel: KernelSpec, A_seen, a) -> np.ndarray:
    """Similarities ``k(a, a_i)`` to each stored class; (S,) or (S, n) for batched ``a``."""
    A_seen = np.atleast_2d(np.asarray(A_seen, dtype=np.float64))
    a = np.asarray(a, dtype=np.float64)
    if a.shape[0] != A_seen.shape[0]:
        raise ValueError(
            f"attribute has {a.shape[0]} dims, stored classes have {A_seen.shape[0]}"
        )
    single = a.ndim == 1
    k = _pair_kernel(kernel, A_seen, a[:, None] if single else a)
    return k[:, 0] if single else k


def fit_kernel(targets, gram_matrix, lam: float) -> np.ndarray:
    """Kernel ridge coefficients ``M (G + lam I)^{-1}``, shape (D_out, S)."""
    M = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    G = np.atleast_2d(np.asarray(gram_matrix, dtype=np.float64))
    if G.shape[0] != G.shape[1]:
        raise ValueError("gram matrix must be square")
    if M.shape[1] != G.shape[0]:
        raise ValueError(f"targets have {M.shape[1]} columns, gram is {G.shape[0]}")
    scale = max(float(np.abs(G).max()), 1.0)
    if not np.allclose(G, G.T, rtol=1e-10, atol=1e-12 * scale):
        raise ValueError("gram matrix is not symmetric")
    _check_lambda(lam)
    S = G.shape[0]
    # alpha (G + lam I) = M  <=>  (G + lam I) alpha^T = M^T
    alpha = _spd_solve(G + lam * np.eye(S), M.T, jitter=True).T
    return np.ascontiguousarray(alpha)


def fit_kernel_solution(targets, A, kernel: KernelSpec, lam: float) -> KernelSolution:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    coeffs = fit_kernel(targets, gram(kernel, A), lam)
    return KernelSolution(coeffs, A.copy(), kernel, float(lam))


def predict_kernel(sol: KernelSolution, a) -> np.ndarray:
    return sol.coeffs @ kernel_vector(sol.kernel, sol.attributes, a)
