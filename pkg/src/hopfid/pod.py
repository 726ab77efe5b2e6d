"""Snapshot proper orthogonal decomposition with a weighted inner product."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SnapshotEnsemble",
    "PodResult",
    "mean_snapshot",
    "correlation_matrix",
    "symmetric_eigendecomposition",
    "pod_modes_and_amplitudes",
    "pod",
    "truncation_residual",
]


@dataclass(frozen=True)
class SnapshotEnsemble:
    """M snapshots of a field with ``n_cells`` cells and ``dim`` components.

    ``fields`` has shape (M, n_cells, dim) (a 2-d array is read as dim = 1);
    ``weights`` holds the cell volumes of the quadrature.
    """

    fields: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.fields, dtype=float)
        if f.ndim == 2:
            f = f[:, :, None]
        if f.ndim != 3 or f.shape[0] < 1:
            raise ValueError("fields must have shape (M, n_cells[, dim]) with M >= 1")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (f.shape[1],):
            raise ValueError(f"weights must have shape ({f.shape[1]},)")
        if np.any(w < 0) or not w.sum() > 0:
            raise ValueError("weights must be nonnegative with positive sum")
        object.__setattr__(self, "fields", f)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, fields) -> "SnapshotEnsemble":
        f = np.asarray(fields, dtype=float)
        return cls(f, np.ones(f.shape[1]))

    @property
    def m_snapshots(self) -> int:
        return self.fields.shape[0]

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        """Weighted L2 inner product of two fields of shape (n_cells, dim)."""
        return float(np.einsum("c,cd,cd->", self.weights, u, v))


def mean_snapshot(ens: SnapshotEnsemble) -> np.ndarray:
    return ens.fields.mean(axis=0)


def correlation_matrix(ens: SnapshotEnsemble) -> np.ndarray:
    """C_mn = (1/M) <u_m - u0, u_n - u0>."""
    M = ens.m_snapshots
    if M < 2:
        raise ValueError("need at least two snapshots")
    fl = ens.fields - mean_snapshot(ens)
    C = np.einsum("c,mcd,ncd->mn", ens.weights, fl, fl) / M
    return 0.5 * (C + C.T)


def symmetric_eigendecomposition(C, tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi eigensolver.

    Returns eigenvalues in descending order and the matching orthonormal
    eigenvectors as columns.  Ties keep the original index order.
    """
    A = np.array(C, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(np.abs(A).max(), np.finfo(float).tiny)
    if np.abs(A - A.T).max() > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    V = np.eye(n)
    norm = np.linalg.norm(A)
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off < tol * norm or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = math.sqrt(1.0 / (1.0 + t * t))  # |t| <= 1
                s = t * c
                app, aqq = A[p, p], A[q, q]
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                # diagonal from the rotation angle directly: less round-off
                A[p, p] = app - t * apq
                A[q, q] = aqq + t * apq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise ArithmeticError("Jacobi iteration did not converge")
    lam = np.diag(A).copy()
    order = sorted(range(n), key=lambda i: (-lam[i], i))
    return lam[order], V[:, order]


@dataclass(frozen=True)
class PodResult:
    mean: np.ndarray
    eigenvalues: np.ndarray
    modes: np.ndarray
    amplitudes: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.modes.shape[0]

    def reconstruct(self, n_modes: int | None = None) -> np.ndarray:
        """Snapshots rebuilt from the mean and the first ``n_modes`` modes."""
        n = self.n_modes if n_modes is None else n_modes
        return self.mean + np.einsum("im,icd->mcd", self.amplitudes[:n], self.modes[:n])


def pod_modes_and_amplitudes(ens: SnapshotEnsemble, eig=None,
                             rel_cutoff: float = 1e-12) -> PodResult:
    """Modes u_i = sum_m e_i^m (u_m - u0) / sqrt(M lam_i) and amplitudes a_i^m = sqrt(M lam_i) e_i^m.

    Eigenpairs with eigenvalue below ``rel_cutoff * lam_1`` are dropped.
    """
    M = ens.m_snapshots
    if eig is None:
        eig = symmetric_eigendecomposition(correlation_matrix(ens))
    lam, E = eig
    lam = np.asarray(lam, dtype=float)
    if lam.size == 0 or not lam[0] > 0:
        raise ValueError("ensemble has no fluctuation energy")
    keep = lam > rel_cutoff * lam[0]
    lam_k = lam[keep]
    E_k = np.asarray(E)[:, keep]
    u0 = mean_snapshot(ens)
    fl = ens.fields - u0
    modes = np.einsum("mi,mcd->icd", E_k, fl) / np.sqrt(M * lam_k)[:, None, None]
    amps = (np.sqrt(M * lam_k)[:, None] * E_k.T)
    eigenvalues = np.where(lam < 0, 0.0, lam)
    return PodResult(u0, eigenvalues, modes, amps)


def pod(ens: SnapshotEnsemble, rel_cutoff: float = 1e-12) -> PodResult:
    return pod_modes_and_amplitudes(ens, rel_cutoff=rel_cutoff)


def truncation_residual(ens: SnapshotEnsemble, result: PodResult, n_modes: int) -> float:
    """Mean squared weighted norm of u_m - u0 - sum_{i<=n} a_i^m u_i."""
    diff = ens.fields - result.reconstruct(n_modes)
    return float(np.einsum("c,mcd,mcd->", ens.weights, diff, diff)) / ens.m_snapshots
