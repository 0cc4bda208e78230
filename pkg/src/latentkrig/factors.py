"""Latent factor estimation by penalized eigenanalysis of split covariances.

Model: after detrending, y_t(s) = sum_j a_j(s) x_tj + eps_t(s) with an
unknown number d of factors, smooth loading functions a_j, and a nugget
eps that is uncorrelated across both time and locations. Splitting the
locations into two sets kills the nugget in the cross-set covariance S,
so the column space of S identifies the loading values on set 1 and the
row space those on set 2.

Estimation on each set runs an eigendecomposition of a Gram matrix of S
(optionally augmented with lagged blocks) minus a roughness penalty:

    M1 = S S' + sum_{j<=k0} [S_1(j) S_1(j)' + S_12(j) S_12(j)'
                             + S_12(-j) S_12(-j)']
    eigenvectors of M1 - tau * L1

where L1 is the graph Laplacian of set 1 with weights w_ij =
1 / (1 + dist(s_i, s_j)). The penalty tau * a' L a = tau/2 * sum w_ij
(a_i - a_j)^2 favours loading vectors that vary smoothly over space.
M2 mirrors M1 with transposed blocks. The factor count is estimated by
the eigenvalue ratio method on the spectrum of M1 - tau * L1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .covariance import cross_covariance, lagged_covariances
from .errors import NotSymmetric, RankDeficient, TooFewEigenvalues, TooFewLocations
from .stdata import (LocationSet, Partition, SpatioTemporalFrame,
                     distance_matrix, locations_from_doc, locations_to_doc)

_SIGN_EPS = 1e-12
_EIG_FLOOR = 1e-300


@dataclass
class GraphLaplacian:
    """L = G - W for inverse-distance weights w_ij = 1/(1 + dist)."""

    W: np.ndarray
    G: np.ndarray
    L: np.ndarray

    @property
    def spectral_norm_bound(self) -> float:
        # Gershgorin: every eigenvalue of L lies within max_i 2*G_ii
        return float(2.0 * self.G.diagonal().max())


def build_laplacian(locations: LocationSet, subset) -> GraphLaplacian:
    """Graph Laplacian of the sites ``subset`` under the set's metric."""
    idx = list(subset)
    if not idx:
        raise TooFewLocations("laplacian needs a nonempty subset")
    coords = locations.coords[idx]
    dist = distance_matrix(coords, coords, locations.distance_metric,
                           locations.radius)
    w = 1.0 / (1.0 + dist)
    np.fill_diagonal(w, 0.0)
    g = np.diag(w.sum(axis=1))
    return GraphLaplacian(W=w, G=g, L=g - w)


def _laplacian_matrix(penalty, dim: int, tau: float) -> np.ndarray:
    if penalty is None:
        if tau != 0.0:
            raise ValueError("tau > 0 requires a Laplacian")
        return np.zeros((dim, dim))
    mat = penalty.L if isinstance(penalty, GraphLaplacian) else np.asarray(penalty, float)
    if mat.shape != (dim, dim):
        raise ValueError("Laplacian shape disagrees with M")
    return mat


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    v = vectors.copy()
    for j in range(v.shape[1]):
        col = v[:, j]
        big = np.nonzero(np.abs(col) > _SIGN_EPS)[0]
        if big.size and col[big[0]] < 0:
            v[:, j] = -col
    return v


def _eig_desc(M: np.ndarray, penalty, tau: float) -> tuple[np.ndarray, np.ndarray]:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be square")
    norm = np.linalg.norm(M)
    if norm > 0 and np.linalg.norm(M - M.T) > 1e-8 * norm:
        raise NotSymmetric("M deviates from symmetry beyond 1e-8 relative")
    lap = _laplacian_matrix(penalty, M.shape[0], tau)
    target = 0.5 * (M + M.T) - tau * lap
    evals, evecs = np.linalg.eigh(target)
    order = np.argsort(evals)[::-1]
    return evals[order], evecs[:, order]


def penalized_eigvecs(M: np.ndarray, penalty, tau: float,
                      d: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-d orthonormal eigenvectors of sym(M) - tau * L.

    M must be symmetric up to roundoff (relative Frobenius defect at most
    1e-8); it is symmetrized as (M + M')/2 before decomposition. Returns
    (vectors, eigenvalues) with the full eigenvalue list in descending
    order. Signs follow a fixed convention: the first entry of each
    vector larger than 1e-12 in magnitude is positive. Within numerically
    tied eigenvalues the solver's ordering is kept.
    """
    if int(d) != d or not 1 <= d <= np.asarray(M).shape[0]:
        raise ValueError("d out of range")
    evals, evecs = _eig_desc(M, penalty, tau)
    return _fix_signs(evecs[:, :int(d)]), evals


def estimate_d(eigenvalues, p_star: int) -> int:
    """Eigenvalue-ratio estimate of the factor count.

    Scans j = 1..p_star-1 and returns the j maximizing lam_j / lam_{j+1}
    on the descending, positive-part spectrum (values floored at 1e-300
    so trailing zeros cannot produce 0/0). Ties resolve to the smallest j.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if int(p_star) != p_star or p_star < 2:
        raise ValueError("p_star must be an integer >= 2")
    p_star = int(p_star)
    if lam.ndim != 1 or lam.size < p_star:
        raise TooFewEigenvalues(f"need at least p_star={p_star} eigenvalues")
    if np.any(np.diff(lam) > 1e-9 * max(1.0, np.abs(lam[0]))):
        raise ValueError("eigenvalues must be in descending order")
    lam = np.maximum(lam, _EIG_FLOOR)
    ratios = lam[:p_star - 1] / lam[1:p_star]
    return int(np.argmax(ratios)) + 1


def default_p_star(p1: int, p2: int) -> int:
    return max(2, min(p1, p2) // 2)


@dataclass
class FactorModelFit:
    """Result of one split-panel fit.

    A1_hat (p1, d) and A2_hat (p2, d) are orthonormal loading estimates
    for the two location sets; x_hat = y_t1' A1_hat and x_star_hat =
    y_t2' A2_hat are the two factor-series readouts; xi_hat (n, p) holds
    the latent-field estimate A A' y at every original column position.
    eigenvalues is the full descending spectrum of M1 - tau * L1 used by
    the ratio estimator.
    """

    partition: Partition
    A1_hat: np.ndarray
    A2_hat: np.ndarray
    x_hat: np.ndarray
    x_star_hat: np.ndarray
    d_hat: int
    eigenvalues: np.ndarray
    xi_hat: np.ndarray
    tau: float
    k0: int


def gram_matrices(frame: SpatioTemporalFrame, partition: Partition,
                  k0: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """The two Gram matrices (M1, M2) fed to the penalized eigensolver.

    Exposed separately from fit_factors so that tau grid searches can
    build them once per partition and sweep tau via solve_loadings.
    """
    s = cross_covariance(frame, partition).matrix
    m1 = s @ s.T
    m2 = s.T @ s
    if k0 >= 1:
        blocks = lagged_covariances(frame, partition, k0)
        for j in range(k0):
            s1, s2, s12p, s12m = (b.matrix for b in blocks[4 * j: 4 * j + 4])
            m1 += s1 @ s1.T + s12p @ s12p.T + s12m @ s12m.T
            m2 += s2 @ s2.T + s12p.T @ s12p + s12m.T @ s12m
    return m1, m2


def solve_loadings(m1: np.ndarray, m2: np.ndarray, lap1, lap2, tau: float,
                   p_star: int | None = None, d_override: int | None = None
                   ) -> tuple[np.ndarray, np.ndarray, int, np.ndarray]:
    """Loading bases for both sides from precomputed Gram matrices.

    Returns (A1_hat, A2_hat, d_hat, eigenvalues). The factor count is
    read off the penalized side-1 spectrum unless overridden. Exposed
    separately so grid searches over tau can reuse the Gram matrices.
    """
    p1, p2 = m1.shape[0], m2.shape[0]
    evals1, evecs1 = _eig_desc(m1, lap1, tau)
    if d_override is not None:
        if int(d_override) != d_override or not 1 <= d_override <= min(p1, p2):
            raise ValueError("d_override out of range")
        d_hat = int(d_override)
    else:
        d_hat = estimate_d(evals1, p_star if p_star is not None
                           else default_p_star(p1, p2))
        d_hat = min(d_hat, p2)  # side-2 basis cannot exceed p2 columns
    a1 = _fix_signs(evecs1[:, :d_hat])
    a2, _ = penalized_eigvecs(m2, lap2, tau, d_hat)
    return a1, a2, d_hat, evals1


def fit_factors(frame: SpatioTemporalFrame, partition: Partition, tau: float,
                k0: int = 0, p_star: int | None = None,
                d_override: int | None = None) -> FactorModelFit:
    """Fit the latent factor structure on one location split.

    Parameters
    ----------
    frame : complete panel (impute first otherwise).
    partition : the location split; covariance blocks are built across it.
    tau : roughness penalty weight, >= 0.
    k0 : number of extra lags folded into the Gram matrices (0 = none).
    p_star : scan width for the ratio estimator. Defaults to
        max(2, floor(min(p1, p2)/2)), which requires p >= 8; pass an
        explicit value (or d_override) for smaller panels.
    d_override : skip estimation and use this factor count.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    if p_star is None and d_override is None and frame.p < 8:
        raise TooFewLocations(
            "default p_star needs p >= 8; pass p_star or d_override")
    m1, m2 = gram_matrices(frame, partition, k0)
    lap1 = build_laplacian(frame.locations, partition.set1)
    lap2 = build_laplacian(frame.locations, partition.set2)
    a1, a2, d_hat, evals1 = solve_loadings(m1, m2, lap1, lap2, tau,
                                           p_star, d_override)
    x_hat = frame.obs[:, list(partition.set1)] @ a1
    x_star_hat = frame.obs[:, list(partition.set2)] @ a2
    xi = assemble_latent(frame, partition, a1, a2)
    return FactorModelFit(partition=partition, A1_hat=a1, A2_hat=a2,
                          x_hat=x_hat, x_star_hat=x_star_hat, d_hat=d_hat,
                          eigenvalues=evals1, xi_hat=xi, tau=float(tau),
                          k0=int(k0))


def assemble_latent(frame: SpatioTemporalFrame, partition: Partition,
                    a1: np.ndarray, a2: np.ndarray) -> np.ndarray:
    """Latent field A A' y per side, written back to original columns.

    The factor readouts use the raw (uncentered) panel; the nugget was
    removed through the cross-set covariance already, not by centering.
    """
    xi = np.empty((frame.n, frame.p))
    xi[:, list(partition.set1)] = (frame.obs[:, list(partition.set1)] @ a1) @ a1.T
    xi[:, list(partition.set2)] = (frame.obs[:, list(partition.set2)] @ a2) @ a2.T
    return xi


def subspace_distance(B1: np.ndarray, B2: np.ndarray) -> float:
    """Distance between the column spaces of two full-rank matrices.

    D = sqrt(1 - tr(P1 P2) / max(d1, d2)) with P_i the orthogonal
    projector onto span(B_i). Zero iff the spans coincide (equal widths),
    one iff they are orthogonal. Unequal widths are allowed; the wider
    rank normalizes, so D > 0 whenever the dimensions differ.
    """
    out = []
    for b in (B1, B2):
        b = np.asarray(b, dtype=np.float64)
        if b.ndim != 2 or b.shape[1] == 0:
            raise ValueError("loading matrices must be 2-d with >= 1 column")
        sv = np.linalg.svd(b, compute_uv=False)
        if sv[-1] <= 1e-10 * sv[0]:
            raise RankDeficient("loading matrix is rank deficient")
        q, _ = np.linalg.qr(b)
        out.append(q)
    q1, q2 = out
    overlap = np.linalg.norm(q1.T @ q2) ** 2
    val = 1.0 - overlap / max(q1.shape[1], q2.shape[1])
    return float(np.sqrt(max(val, 0.0)))


# ---- serialization ----

def _matrix_doc(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"rows": int(a.shape[0]), "cols": int(a.shape[1]),
            "data": [float(v) for v in a.reshape(-1)]}


def _matrix_from_doc(doc: dict) -> np.ndarray:
    return np.array(doc["data"], dtype=np.float64).reshape(doc["rows"], doc["cols"])


def fit_to_document(fit: FactorModelFit, locations: LocationSet | None = None,
                    include_latent: bool = True) -> dict:
    """JSON-ready dict for a fit; optionally embeds sites and latent field."""
    doc = {
        "format": "latentkrig-fit",
        "version": 1,
        "partition": {"set1": list(fit.partition.set1),
                      "set2": list(fit.partition.set2)},
        "d_hat": int(fit.d_hat),
        "tau": float(fit.tau),
        "k0": int(fit.k0),
        "eigenvalues": [float(v) for v in fit.eigenvalues],
        "A1_hat": _matrix_doc(fit.A1_hat),
        "A2_hat": _matrix_doc(fit.A2_hat),
        "x_hat": _matrix_doc(fit.x_hat),
        "x_star_hat": _matrix_doc(fit.x_star_hat),
    }
    if include_latent:
        doc["xi_hat"] = _matrix_doc(fit.xi_hat)
    if locations is not None:
        doc["locations"] = locations_to_doc(locations)
    return doc


def fit_from_document(doc: dict) -> tuple[FactorModelFit, LocationSet | None]:
    part = Partition(set1=tuple(doc["partition"]["set1"]),
                     set2=tuple(doc["partition"]["set2"]))
    xi = doc.get("xi_hat")
    fit = FactorModelFit(
        partition=part,
        A1_hat=_matrix_from_doc(doc["A1_hat"]),
        A2_hat=_matrix_from_doc(doc["A2_hat"]),
        x_hat=_matrix_from_doc(doc["x_hat"]),
        x_star_hat=_matrix_from_doc(doc["x_star_hat"]),
        d_hat=int(doc["d_hat"]),
        eigenvalues=np.array(doc["eigenvalues"], dtype=np.float64),
        xi_hat=_matrix_from_doc(xi) if xi is not None else np.zeros((0, part.p)),
        tau=float(doc["tau"]),
        k0=int(doc["k0"]),
    )
    locs = locations_from_doc(doc["locations"]) if "locations" in doc else None
    return fit, locs


def save_fit(fit: FactorModelFit, path, locations: LocationSet | None = None) -> None:
    doc = fit_to_document(fit, locations)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_fit(path) -> tuple[FactorModelFit, LocationSet | None]:
    doc = json.loads(Path(path).read_text())
    return fit_from_document(doc)
