"""Mean + truncated principal-component decomposition of snapshot matrices.

States decompose as ``x = scores @ eofs + mean``; truncation keeps the
first tau components. EOF rows are orthonormal and sign-fixed (largest
magnitude entry positive) so fitted bases are reproducible.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import romf
from .errors import (
    DegenerateData,
    InvalidConfig,
    NonFiniteInput,
    NumericalFailure,
    ShapeMismatch,
)


@dataclass(frozen=True)
class PcaBasis:
    mean: np.ndarray  # (m,)
    eofs: np.ndarray  # (r, m), orthonormal rows
    singular_values: np.ndarray  # (r,), nonincreasing
    tau: int
    n: int
    m: int

    def __post_init__(self):
        if not 1 <= self.tau <= self.eofs.shape[0]:
            raise InvalidConfig(f"tau={self.tau} outside [1, {self.eofs.shape[0]}]")

    @property
    def rank(self):
        return self.eofs.shape[0]

    def save(self, path):
        romf.write_arrays(path, {
            "mean": self.mean,
            "eofs": self.eofs,
            "singular_values": self.singular_values,
        })
        with open(str(path) + ".json", "w") as fh:
            json.dump({"tau": self.tau, "n": self.n, "m": self.m}, fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        arrays = romf.read_arrays(path)
        with open(str(path) + ".json") as fh:
            meta = json.load(fh)
        return cls(
            mean=arrays["mean"],
            eofs=arrays["eofs"],
            singular_values=arrays["singular_values"],
            tau=int(meta["tau"]),
            n=int(meta["n"]),
            m=int(meta["m"]),
        )


def _as_matrix(snapshots):
    data = getattr(snapshots, "data", snapshots)
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ShapeMismatch("expected an n x m matrix")
    if data.shape[0] < 2:
        raise InvalidConfig("need at least 2 snapshots to fit a basis")
    if not np.all(np.isfinite(data)):
        raise NonFiniteInput("snapshot data contains NaN/Inf")
    return data


def fit(snapshots, tau=None, variance=None):
    """Fit a PCA basis; truncate to ``tau`` or by explained-variance fraction.

    Exactly one of ``tau`` / ``variance`` must be given. With a variance
    fraction v in (0, 1], tau becomes the smallest k whose cumulative
    explained variance reaches v.
    """
    if (tau is None) == (variance is None):
        raise InvalidConfig("give exactly one of tau or variance")
    data = _as_matrix(snapshots)
    n, m = data.shape
    mean = data.mean(axis=0)
    centered = data - mean
    try:
        u, s, vt = np.linalg.svd(centered, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD failed to converge: {exc}") from exc
    if not np.any(s > 0):
        raise DegenerateData("centered snapshot matrix is zero; tau undefined")

    # sign convention: each EOF's largest-magnitude entry is positive
    flip = np.sign(vt[np.arange(vt.shape[0]), np.argmax(np.abs(vt), axis=1)])
    flip[flip == 0] = 1.0
    vt = vt * flip[:, None]

    if variance is not None:
        if not 0.0 < variance <= 1.0:
            raise InvalidConfig("variance fraction must lie in (0, 1]")
        fractions = _cumulative_fractions(s)
        tau = int(np.searchsorted(fractions, variance, side="left")) + 1
        tau = min(tau, s.size)
    else:
        tau = int(tau)
        if not 1 <= tau <= s.size:
            raise InvalidConfig(f"tau={tau} outside [1, {s.size}]")
    return PcaBasis(mean=mean, eofs=vt, singular_values=s, tau=tau, n=n, m=m)


def project(basis, states):
    """Map k x m states to k x tau scores: (states - mean) @ eofs_tau.T."""
    states = np.asarray(states, dtype=np.float64)
    one_d = states.ndim == 1
    if one_d:
        states = states[None, :]
    if states.shape[1] != basis.m:
        raise ShapeMismatch(f"expected {basis.m} columns, got {states.shape[1]}")
    scores = (states - basis.mean) @ basis.eofs[: basis.tau].T
    return scores[0] if one_d else scores


def reconstruct(basis, scores):
    """Map k x tau scores back to state space: scores @ eofs_tau + mean."""
    scores = np.asarray(scores, dtype=np.float64)
    one_d = scores.ndim == 1
    if one_d:
        scores = scores[None, :]
    if scores.shape[1] != basis.tau:
        raise ShapeMismatch(f"expected {basis.tau} columns, got {scores.shape[1]}")
    states = scores @ basis.eofs[: basis.tau] + basis.mean
    return states[0] if one_d else states


def explained_variance(basis):
    """Cumulative explained-variance fractions, one entry per component."""
    return _cumulative_fractions(basis.singular_values)


def _cumulative_fractions(singular_values):
    energy = np.cumsum(singular_values**2)
    if energy[-1] <= 0:
        raise DegenerateData("all singular values are zero")
    return energy / energy[-1]
