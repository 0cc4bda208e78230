"""Spatial interpolation of the latent field and missing-cell recovery.

Kriging over space uses normalized kernel weights on the fitted latent
field: xi_hat_t(s0) = sum_j xi_hat_t(s_j) K_h(s_j - s0) / sum_j K_h.
Kernel normalizing constants cancel in the weight ratio, so only the
shape matters. The same predictor arises from the formal best-linear-
predictor route c(s0)' Sigma_y^{-1} y_t with c(s0) the sample covariance
between the kriged latent series and the panel: because the latent field
is a block projection of the panel, the two coincide identically, and
``verify_dual_route`` checks that identity numerically on a fitted
model.

Missing cells are recovered with the best linear predictor of the cell
given the observations available at the same time point, with all
covariances estimated pairwise over the times where the target location
is observed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .covariance import masked_pairwise
from .errors import (
    EmptyKernelWindow,
    NonInvertible,
    NotPositiveDefinite,
    NotSymmetric,
)
from .factors import FactorModelFit
from .stdata import LocationSet, SpatioTemporalFrame, distances_to_point

logger = logging.getLogger(__name__)

_FAMILIES = ("gaussian", "epanechnikov_2d")

_DUAL_ROUTE_MAX_P = 200


@dataclass
class KernelSpec:
    """Kernel family and bandwidth h > 0.

    gaussian: radial, K(u) proportional to exp(-|u|^2 / 2), valid for any
    distance metric. epanechnikov_2d: product kernel (1 - u1^2)(1 - u2^2)
    on the unit square of scaled displacements, planar coordinates only;
    its compact support can empty a kernel window.
    """

    family: str
    h: float

    def __post_init__(self) -> None:
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not self.h > 0:
            raise ValueError("bandwidth must be positive")


def kernel_weights(locations: LocationSet, s0, kernel: KernelSpec) -> np.ndarray:
    """Normalized weights w_j >= 0 with sum 1 at prediction site s0."""
    if kernel.family == "gaussian":
        u = distances_to_point(locations, s0) / kernel.h
        raw = np.exp(-0.5 * u * u)
    else:
        if locations.distance_metric != "euclidean":
            raise ValueError("epanechnikov_2d requires planar coordinates")
        disp = (locations.coords - np.asarray(s0, dtype=np.float64)) / kernel.h
        raw = np.prod(np.clip(1.0 - disp * disp, 0.0, None), axis=1)
    total = raw.sum()
    if total <= 0.0:
        s0 = np.asarray(s0, dtype=np.float64)
        raise EmptyKernelWindow(
            f"no kernel mass at site ({s0[0]:g}, {s0[1]:g})")
    return raw / total


@dataclass
class SpatialPrediction:
    """Latent series predicted at one site, with the weights used."""

    s0: tuple[float, float]
    xi_hat_series: np.ndarray
    weights: np.ndarray


def krige_space(latent: np.ndarray, locations: LocationSet, s0,
                kernel: KernelSpec) -> SpatialPrediction:
    """Weighted latent series at s0 from an (n, p) latent field."""
    latent = np.asarray(latent, dtype=np.float64)
    if latent.ndim != 2 or latent.shape[1] != locations.p:
        raise ValueError("latent field width disagrees with locations")
    w = kernel_weights(locations, s0, kernel)
    s = np.asarray(s0, dtype=np.float64)
    return SpatialPrediction(s0=(float(s[0]), float(s[1])),
                             xi_hat_series=latent @ w, weights=w)


def verify_dual_route(fit: FactorModelFit, frame: SpatioTemporalFrame,
                           s0, kernel: KernelSpec) -> float:
    """Max |difference| between the two spatial-prediction routes.

    Route one krigs the fitted latent field directly. Route two computes
    c(s0)' Sigma_y^{-1} y_t with c(s0) the sample covariance between the
    kriged latent series and the panel (both centered) and Sigma_y the
    dense panel covariance with divisor n. Equality is an algebraic
    identity, so the return value only measures linear-algebra roundoff.

    Guards: the dense route inverts a p x p matrix, so p is capped at 200
    and n <= p (or a numerically singular Sigma_y) raises NonInvertible.
    """
    if frame.p > _DUAL_ROUTE_MAX_P:
        raise ValueError(f"dense route capped at p <= {_DUAL_ROUTE_MAX_P}")
    if not frame.is_complete:
        raise NonInvertible("dense panel covariance needs a complete frame")
    if frame.n <= frame.p:
        raise NonInvertible("need n > p for an invertible panel covariance")
    pred = krige_space(fit.xi_hat, frame.locations, s0, kernel)
    series = pred.xi_hat_series
    yc = frame.obs - frame.obs.mean(axis=0)
    sigma_y = (yc.T @ yc) / frame.n
    evals = np.linalg.eigvalsh(sigma_y)
    if evals[0] <= 1e-12 * evals[-1]:
        raise NonInvertible("panel covariance is numerically singular")
    c = ((series - series.mean()) @ yc) / frame.n
    dense = np.linalg.solve(sigma_y, frame.obs.T).T @ c
    return float(np.max(np.abs(dense - series)))


def best_linear_predictor(cov_zeta_eta: np.ndarray, var_eta: np.ndarray,
                          mean_zeta, mean_eta, eta,
                          var_zeta: np.ndarray | None = None
                          ) -> tuple[np.ndarray, np.ndarray | None]:
    """Best linear predictor of zeta from eta, and its error covariance.

    prediction = E[zeta] + Cov(zeta, eta) Var(eta)^{-1} (eta - E[eta]).
    When ``var_zeta`` is given the second return value is the error
    covariance Var(zeta) - Cov(zeta, eta) Var(eta)^{-1} Cov(eta, zeta);
    otherwise it is None. Var(eta) must be symmetric positive definite
    (relative eigenvalue floor 1e-12).
    """
    c = np.atleast_2d(np.asarray(cov_zeta_eta, dtype=np.float64))
    v = np.asarray(var_eta, dtype=np.float64)
    mu_z = np.atleast_1d(np.asarray(mean_zeta, dtype=np.float64))
    mu_e = np.atleast_1d(np.asarray(mean_eta, dtype=np.float64))
    e = np.atleast_1d(np.asarray(eta, dtype=np.float64))
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise ValueError("var_eta must be square")
    norm = np.linalg.norm(v)
    if norm > 0 and np.linalg.norm(v - v.T) > 1e-8 * norm:
        raise NotSymmetric("var_eta deviates from symmetry")
    evals = np.linalg.eigvalsh(0.5 * (v + v.T))
    if evals[0] <= 1e-12 * max(evals[-1], 0.0) or evals[-1] <= 0.0:
        raise NotPositiveDefinite("var_eta is not positive definite")
    gain = np.linalg.solve(0.5 * (v + v.T), c.T).T
    pred = mu_z + gain @ (e - mu_e)
    err = None
    if var_zeta is not None:
        vz = np.atleast_2d(np.asarray(var_zeta, dtype=np.float64))
        err = vz - gain @ c.T
    return pred, err


def impute_missing(frame: SpatioTemporalFrame) -> SpatioTemporalFrame:
    """Fill every missing cell by its best linear predictor.

    For a missing cell (t, i) the predictor is
    Cov(y(s_i), y^a) Var(y^a)^{-1} y^a over the locations a observed at
    time t. Covariance entries come from ``pairwise_covariance`` on the
    subpanel of time points where location i is observed, so every entry
    conditions on the information actually available about the target.
    Pairwise-complete estimates need not be PSD, and directions of
    Var(y^a) estimated below its own sampling-noise floor must not be
    inverted. The spectrum of Var(y^a) is floored at max(1e-8 * trace /
    dim, median eigenvalue * dim / rows); the second term tracks the
    lower bulk edge of a noise spectrum at this aspect ratio, so
    informative directions pass through untouched while sampling
    artifacts are neutralized. When every eigenvalue clears the floor
    the matrix is used exactly as estimated, which keeps structural
    identities (a duplicated column predicts its twin exactly) intact.
    One pass: predictors never feed on previously filled cells. Observed
    cells are returned bit-identical; provenance on ``filled_cells``.
    """
    if frame.is_complete:
        return frame
    obs = np.array(frame.obs)
    filled: list[tuple[int, str]] = []
    for i in range(frame.p):
        miss_t = np.nonzero(frame.missing[:, i])[0]
        if miss_t.size == 0:
            continue
        have_t = np.nonzero(~frame.missing[:, i])[0]
        sub_obs = frame.obs[have_t, :]
        sub_missing = frame.missing[have_t, :]
        for t in miss_t:
            avail = np.nonzero(~frame.missing[t, :])[0]
            block = masked_pairwise(sub_obs, sub_missing,
                                    [i] + list(avail), list(avail))
            c = block[0]
            v = 0.5 * (block[1:] + block[1:].T)
            evals, evecs = np.linalg.eigh(v)
            dim = v.shape[0]
            ridge = max(1e-8 * np.trace(v) / dim, 1e-300)
            floor = max(ridge, float(np.median(evals)) * dim / len(have_t))
            if evals[0] < floor:
                if evals[0] <= 1e-12 * max(evals[-1], 0.0):
                    logger.warning(
                        "non-PSD available-covariance at t=%d, id=%s; "
                        "spectrum floored at %.3e",
                        t, frame.locations.ids[i], floor)
                v = (evecs * np.maximum(evals, floor)) @ evecs.T
            obs[t, i] = c @ np.linalg.solve(v, frame.obs[t, avail])
            filled.append((int(t), frame.locations.ids[i]))
    return SpatioTemporalFrame(locations=frame.locations, obs=obs,
                               covariates=frame.covariates,
                               filled_cells=tuple(filled))
