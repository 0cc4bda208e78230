"""Temporal prediction of the panel through the latent factor series.

The j-step-ahead best linear predictor of the factor vector given its
last j0 + 1 readouts is

    x_hat(j) = R W^{-1} X,   X = (x_n', ..., x_{n-j0}')',
    R = (S(j), S(j+1), ..., S(j+j0)),

where S(k) is the lag-k factor autocovariance and W the symmetric block
Toeplitz matrix with (i, l) block S(l - i) for l >= i and S(i - l)' below
the diagonal. W grows with j0, but its inverse obeys a one-block-border
recursion: with U_k = (S(k+1)', ..., S(1)')' and the innovation block
V_k = (S(0) - U_k' W_k^{-1} U_k)^{-1},

    W_{k+1}^{-1} = [[W_k^{-1} + W_k^{-1} U_k V_k U_k' W_k^{-1},
                     -W_k^{-1} U_k V_k],
                    [-V_k U_k' W_k^{-1}, V_k]],

so only d x d matrices are ever inverted (asserted structurally). Factor
autocovariances come from the fitted loadings: S(k) = A' C_y(k) A with
C_y(k) the lag-k autocovariance of the panel columns in the loading's
location set. Panel-level predictions are y_hat = A x_hat(j) per side of
the partition, using raw (uncentered) factor readouts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _util
from .covariance import lagged_auto_covariance
from .errors import LagTooLarge, NotPositiveDefinite, SingularBlock, SingularInnovation
from .factors import FactorModelFit, fit_factors
from .stdata import SpatioTemporalFrame, random_partition

_REL_SINGULAR = 1e-10


def _check_invertible(mat: np.ndarray, exc, what: str) -> None:
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv[-1] <= _REL_SINGULAR * sv[0]:
        raise exc(f"{what} is numerically singular")


def partitioned_inverse(H11: np.ndarray, H12: np.ndarray, H21: np.ndarray,
                        H22: np.ndarray) -> np.ndarray:
    """Inverse of [[H11, H12], [H21, H22]] via the H11 Schur complement.

    With Q = (H22 - H21 H11^{-1} H12)^{-1}:

        [[H11^{-1} + H11^{-1} H12 Q H21 H11^{-1}, -H11^{-1} H12 Q],
         [-Q H21 H11^{-1}, Q]]

    Raises SingularBlock when H11 or the Schur complement is singular.
    """
    h11 = np.atleast_2d(np.asarray(H11, dtype=np.float64))
    h12 = np.atleast_2d(np.asarray(H12, dtype=np.float64))
    h21 = np.atleast_2d(np.asarray(H21, dtype=np.float64))
    h22 = np.atleast_2d(np.asarray(H22, dtype=np.float64))
    _check_invertible(h11, SingularBlock, "H11")
    inv11_12 = np.linalg.solve(h11, h12)
    inv11 = np.linalg.inv(h11)
    schur = h22 - h21 @ inv11_12
    _check_invertible(schur, SingularBlock, "Schur complement of H11")
    q = np.linalg.inv(schur)
    top_left = inv11 + inv11_12 @ q @ h21 @ inv11
    top_right = -inv11_12 @ q
    bottom_left = -q @ h21 @ inv11
    return np.block([[top_left, top_right], [bottom_left, q]])


def woodbury_identity_check(H11: np.ndarray, H12: np.ndarray, H21: np.ndarray,
                            H22: np.ndarray) -> float:
    """Max |difference| between the two Schur-complement inversion routes.

    Compares (H22 - H21 H11^{-1} H12)^{-1} against
    H22^{-1} + H22^{-1} H21 (H11 - H12 H22^{-1} H21)^{-1} H12 H22^{-1};
    the two sides agree identically, so the return value measures
    roundoff only.
    """
    h11 = np.atleast_2d(np.asarray(H11, dtype=np.float64))
    h12 = np.atleast_2d(np.asarray(H12, dtype=np.float64))
    h21 = np.atleast_2d(np.asarray(H21, dtype=np.float64))
    h22 = np.atleast_2d(np.asarray(H22, dtype=np.float64))
    _check_invertible(h11, SingularBlock, "H11")
    _check_invertible(h22, SingularBlock, "H22")
    lhs_core = h22 - h21 @ np.linalg.solve(h11, h12)
    _check_invertible(lhs_core, SingularBlock, "Schur complement of H11")
    lhs = np.linalg.inv(lhs_core)
    rhs_core = h11 - h12 @ np.linalg.solve(h22, h21)
    _check_invertible(rhs_core, SingularBlock, "Schur complement of H22")
    inv22 = np.linalg.inv(h22)
    rhs = inv22 + inv22 @ h21 @ np.linalg.inv(rhs_core) @ h12 @ inv22
    return float(np.max(np.abs(lhs - rhs)))


def assemble_block_toeplitz(sigma_x: list[np.ndarray], k: int) -> np.ndarray:
    """Dense W_k from lag blocks S(0..k); the oracle for the recursion."""
    if k + 1 > len(sigma_x):
        raise ValueError("need lag blocks 0..k")
    d = sigma_x[0].shape[0]
    w = np.empty(((k + 1) * d, (k + 1) * d))
    for i in range(k + 1):
        for l in range(k + 1):
            block = sigma_x[l - i] if l >= i else sigma_x[i - l].T
            w[i * d:(i + 1) * d, l * d:(l + 1) * d] = block
    return w


@dataclass
class BlockToeplitzSystem:
    """Inverse of the block-Toeplitz autocovariance matrix, grown lag by lag."""

    sigma_x: list[np.ndarray]
    W_inv: np.ndarray
    k: int
    d: int

    @classmethod
    def start(cls, sigma_x: list[np.ndarray]) -> "BlockToeplitzSystem":
        s0 = np.asarray(sigma_x[0], dtype=np.float64)
        d = s0.shape[0]
        norm = np.linalg.norm(s0)
        if norm > 0 and np.linalg.norm(s0 - s0.T) > 1e-8 * norm:
            raise NotPositiveDefinite("lag-0 block must be symmetric")
        evals = np.linalg.eigvalsh(0.5 * (s0 + s0.T))
        if evals[0] <= _REL_SINGULAR * max(evals[-1], 0.0) or evals[-1] <= 0.0:
            raise NotPositiveDefinite("lag-0 block is not positive definite")
        return cls(sigma_x=[np.asarray(s, dtype=np.float64) for s in sigma_x],
                   W_inv=_inv_small(s0, d), k=0, d=d)

    def extend(self) -> "BlockToeplitzSystem":
        """One border step: W_k^{-1} -> W_{k+1}^{-1} inverting only d x d."""
        k, d = self.k, self.d
        if k + 1 >= len(self.sigma_x):
            raise ValueError("no lag block available for the next step")
        u = np.vstack([self.sigma_x[j] for j in range(k + 1, 0, -1)])
        wu = self.W_inv @ u
        schur = self.sigma_x[0] - u.T @ wu
        schur = 0.5 * (schur + schur.T)
        evals = np.linalg.eigvalsh(schur)
        if np.min(np.abs(evals)) <= _REL_SINGULAR * np.max(np.abs(evals)):
            raise SingularInnovation(f"innovation block singular at depth {k + 1}")
        v = _inv_small(schur, d)
        wuv = wu @ v
        top_left = self.W_inv + wuv @ wu.T
        new_inv = np.block([[top_left, -wuv], [-wuv.T, v]])
        return BlockToeplitzSystem(sigma_x=self.sigma_x, W_inv=new_inv,
                                   k=k + 1, d=d)


def _inv_small(mat: np.ndarray, d: int) -> np.ndarray:
    # every inversion in the recursion flows through here: d x d only
    assert mat.shape == (d, d), "recursion must never invert beyond d x d"
    return np.linalg.inv(mat)


def recursive_toeplitz_inverse(sigma_x: list[np.ndarray], j0: int) -> np.ndarray:
    """W_{j0}^{-1} from lag blocks S(0..j0) by the border recursion."""
    if j0 < 0:
        raise ValueError("j0 must be >= 0")
    if j0 + 1 > len(sigma_x):
        raise ValueError("need lag blocks 0..j0")
    system = BlockToeplitzSystem.start(sigma_x)
    for _ in range(j0):
        system = system.extend()
    return system.W_inv


def estimate_sigma_x(frame: SpatioTemporalFrame, fit: FactorModelFit,
                     max_lag: int, set_index: int = 1) -> list[np.ndarray]:
    """Latent autocovariances S(k) = A' C_y(k) A for k = 0..max_lag.

    set_index selects which side of the partition supplies the panel
    columns and loading basis (1 or 2). S(0) is symmetric positive
    semidefinite by construction; lags need max_lag < n/2.
    """
    if set_index == 1:
        cols, a = fit.partition.set1, fit.A1_hat
    elif set_index == 2:
        cols, a = fit.partition.set2, fit.A2_hat
    else:
        raise ValueError("set_index must be 1 or 2")
    panel_lags = lagged_auto_covariance(frame, cols, max_lag)
    return [a.T @ c @ a for c in panel_lags]


def forecast(frame: SpatioTemporalFrame, fit: FactorModelFit, j: int,
             j0: int = 6, ridge: float = 0.0) -> np.ndarray:
    """j-step-ahead prediction of the panel at every location.

    Each side of the partition is predicted from its own factor readouts:
    x_hat(j) = R W_{j0}^{-1} X with X stacking the raw readouts at times
    n, n-1, ..., n-j0, then y_hat = A x_hat(j). Requires j >= 1 and
    j + j0 < n/2 so all needed lags are identifiable.

    Sample lag covariances are not jointly PSD, so W can be numerically
    singular; by default that surfaces as SingularInnovation. A positive
    ridge adds ridge*I to the lag-0 block before the recursion (opt-in,
    never silent).
    """
    if int(j) != j or j < 1:
        raise ValueError("j must be an integer >= 1")
    if int(j0) != j0 or j0 < 0:
        raise ValueError("j0 must be an integer >= 0")
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    j, j0 = int(j), int(j0)
    if j + j0 >= frame.n / 2:
        raise LagTooLarge(f"j + j0 = {j + j0} needs n > 2*(j + j0) (n={frame.n})")
    if j0 + 1 > frame.n:
        raise LagTooLarge("j0 + 1 readouts exceed the panel length")
    out = np.empty(frame.p)
    for set_index, cols, a in ((1, fit.partition.set1, fit.A1_hat),
                               (2, fit.partition.set2, fit.A2_hat)):
        sig = estimate_sigma_x(frame, fit, j + j0, set_index)
        if ridge > 0.0:
            sig[0] = sig[0] + ridge * np.eye(sig[0].shape[0])
        w_inv = recursive_toeplitz_inverse(sig[:j0 + 1], j0)
        r = np.hstack([sig[k] for k in range(j, j + j0 + 1)])
        y_block = frame.obs[:, list(cols)]
        x_stack = np.concatenate([y_block[frame.n - 1 - back] @ a
                                  for back in range(j0 + 1)])
        x_pred = r @ (w_inv @ x_stack)
        out[list(cols)] = a @ x_pred
    return out


def forecast_ensemble(frame: SpatioTemporalFrame, J: int, j: int, j0: int = 6,
                      tau: float = 0.0, k0: int = 0,
                      p_star: int | None = None, d_override: int | None = None,
                      rng_seed: int = 0, ridge: float = 0.0,
                      workers: int | None = None) -> np.ndarray:
    """Average of j-step predictions over J random-partition fits.

    Member seeds derive deterministically from rng_seed by member index
    and members are averaged in index order, so the result is identical
    for any worker count.
    """
    if J < 1:
        raise ValueError("J must be >= 1")
    seeds = _util.member_seeds(rng_seed, J)

    def one(seed: int) -> np.ndarray:
        part = random_partition(frame.p, seed)
        fit = fit_factors(frame, part, tau, k0=k0, p_star=p_star,
                          d_override=d_override)
        return forecast(frame, fit, j, j0, ridge=ridge)

    preds = _util.ordered_map(one, seeds, workers)
    return np.mean(np.stack(preds, axis=0), axis=0)
