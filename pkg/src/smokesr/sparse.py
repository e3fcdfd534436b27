"""Classical sparse coding: OMP, ISTA, and K-SVD dictionary learning.

These serve as baselines, optional dictionary initialization, and as the
reference implementations the learned network is tested against.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .fields import write_raw_field, read_raw_field


class SingularSystemError(Exception):
    """The active-set least-squares system is numerically singular."""


@dataclass(frozen=True)
class Dictionary:
    """Atoms stored one per column; columns unit l2 norm."""

    atoms: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError("atoms must be a 2D matrix")
        if not np.all(np.isfinite(a)):
            raise ValueError("dictionary contains non-finite values")
        norms = np.linalg.norm(a, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("dictionary columns must be unit norm")
        a.setflags(write=False)
        object.__setattr__(self, "atoms", a)

    @property
    def signal_dim(self) -> int:
        return self.atoms.shape[0]

    @property
    def atom_count(self) -> int:
        return self.atoms.shape[1]


def normalize_atoms(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    return matrix / norms


def omp(y: np.ndarray, dictionary: Dictionary, max_nonzeros: int, tol: float = 0.0) -> np.ndarray:
    """Orthogonal matching pursuit: greedy atom selection with least-squares refit.

    Stops when max_nonzeros atoms are active or the residual norm drops to tol.
    """
    if max_nonzeros < 1:
        raise ValueError("max_nonzeros must be >= 1")
    d = dictionary.atoms
    if y.shape != (d.shape[0],):
        raise ValueError(f"signal dim {y.shape} does not match dictionary {d.shape}")
    residual = y.astype(np.float64)
    support: list[int] = []
    coeffs = np.zeros(0)
    for _ in range(max_nonzeros):
        if np.linalg.norm(residual) <= tol:
            break
        scores = np.abs(d.T @ residual)
        scores[support] = -np.inf
        j = int(np.argmax(scores))
        support.append(j)
        sub = d[:, support]
        gram = sub.T @ sub
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond > 1e12:
            raise SingularSystemError(
                f"active set {support} is numerically singular (cond={cond:.2e})"
            )
        coeffs = np.linalg.solve(gram, sub.T @ y)
        residual = y - sub @ coeffs
    w = np.zeros(d.shape[1])
    w[support] = coeffs
    return w


def ista(y: np.ndarray, dictionary: Dictionary, lam: float, iters: int, h: float) -> np.ndarray:
    """Iterative shrinkage-thresholding from w=0: w <- shrink(S w + B y; lam*h)
    with B = h D^T and S = I - B D. Converges for h <= 1/||D||_2^2."""
    d = dictionary.atoms
    b = h * d.T
    s = np.eye(d.shape[1]) - b @ d
    thresh = lam * h
    w = np.zeros(d.shape[1])
    for _ in range(iters):
        z = s @ w + b @ y
        w = np.sign(z) * np.maximum(np.abs(z) - thresh, 0.0)
    return w


def lasso_objective(y: np.ndarray, dictionary: Dictionary, w: np.ndarray, lam: float) -> float:
    r = y - dictionary.atoms @ w
    return 0.5 * float(r @ r) + lam * float(np.abs(w).sum())


def ksvd(
    signals: np.ndarray,
    atom_count: int,
    max_nonzeros: int,
    sweeps: int,
    seed: int = 0,
    tol: float = 0.0,
) -> tuple[Dictionary, np.ndarray]:
    """K-SVD: alternate OMP coding with rank-1 atom/coefficient updates.

    `signals` holds one signal per row. Unused atoms are reseeded from the
    worst-represented signals. Returns the dictionary and per-sweep
    reconstruction errors ||Y - D W||_F.
    """
    y = np.asarray(signals, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] < atom_count:
        raise ValueError("need at least atom_count signals, one per row")
    if not np.any(np.abs(y).sum(axis=1) > 0):
        raise ValueError("all signals are zero")
    rng = np.random.default_rng(seed)
    picks = rng.choice(y.shape[0], size=atom_count, replace=False)
    d = normalize_atoms(y[picks].T.copy())
    # degenerate picked signals fall back to random directions
    zero_cols = np.linalg.norm(d, axis=0) < 1e-12
    if zero_cols.any():
        d[:, zero_cols] = normalize_atoms(rng.normal(size=(d.shape[0], zero_cols.sum())))

    errors = []
    w = np.zeros((y.shape[0], atom_count))
    for _ in range(sweeps):
        dic = Dictionary(normalize_atoms(d))
        for i in range(y.shape[0]):
            w[i] = omp(y[i], dic, max_nonzeros, tol)
        d = np.array(dic.atoms)

        recon_err = y - w @ d.T
        for j in range(atom_count):
            users = np.nonzero(w[:, j])[0]
            if users.size == 0:
                worst = int(np.argmax((recon_err**2).sum(axis=1)))
                atom = y[worst]
                nrm = np.linalg.norm(atom)
                d[:, j] = atom / nrm if nrm > 0 else d[:, j]
                continue
            # restricted residual with atom j's contribution added back
            e = recon_err[users] + np.outer(w[users, j], d[:, j])
            u, svals, vt = np.linalg.svd(e.T, full_matrices=False)
            new_atom = u[:, 0]
            if new_atom @ d[:, j] < 0:  # keep a stable sign convention
                new_atom = -new_atom
                svals = svals.copy()
                vt = -vt
            coeff = svals[0] * vt[0]
            recon_err[users] += np.outer(w[users, j], d[:, j]) - np.outer(coeff, new_atom)
            d[:, j] = new_atom
            w[users, j] = coeff
        errors.append(float(np.linalg.norm(y - w @ d.T)))
    return Dictionary(normalize_atoms(d)), np.asarray(errors)


def code_signals(signals: np.ndarray, dictionary: Dictionary, max_nonzeros: int,
                 tol: float = 0.0) -> np.ndarray:
    return np.stack([omp(s, dictionary, max_nonzeros, tol) for s in signals])


def save_dictionary(dictionary: Dictionary, path: str | os.PathLike) -> None:
    write_raw_field(path, [dictionary.atoms], dictionary.atoms.shape, 1.0)


def load_dictionary(path: str | os.PathLike) -> Dictionary:
    arrays, dims, _spacing = read_raw_field(path)
    return Dictionary(arrays[0].reshape(dims))
