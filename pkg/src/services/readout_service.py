"""Linear readout training by minimum-norm least squares, prediction and NMSE."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from services.reservoir_service import ConcatTrajectory

LOGGER = logging.getLogger("rcbench.readout")


class ReadoutError(ValueError):
    """Raised when readout inputs are empty, non-finite or inconsistent."""


@dataclass(frozen=True, eq=False)
class ReadoutWeights:
    """Output weights, shape (N_out, D) or (N_out, D+1) with a trailing bias column."""

    w_out: np.ndarray
    bias_enabled: bool = False

    @property
    def n_out(self) -> int:
        return int(self.w_out.shape[0])

    @property
    def state_dim(self) -> int:
        return int(self.w_out.shape[1]) - (1 if self.bias_enabled else 0)


@dataclass(frozen=True)
class FitReport:
    residual_sse: float
    effective_rank: int
    singular_cutoff: float


def _design(x_hat: ConcatTrajectory | np.ndarray) -> np.ndarray:
    rows = x_hat.rows if isinstance(x_hat, ConcatTrajectory) else x_hat
    arr = np.asarray(rows, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ReadoutError(f"Design matrix must be non-empty 2-D, got shape {arr.shape}.")
    if not np.all(np.isfinite(arr)):
        raise ReadoutError("Design matrix contains non-finite values.")
    return arr


def _with_bias(x: np.ndarray) -> np.ndarray:
    return np.hstack([x, np.ones((x.shape[0], 1))])


def _targets(targets: np.ndarray, n_rows: int) -> np.ndarray:
    y = np.asarray(targets, dtype=float)
    if y.ndim == 1:
        y = y.reshape(-1, 1)
    if y.ndim != 2 or y.shape[0] != n_rows:
        raise ReadoutError(f"Targets must have {n_rows} rows, got shape {np.shape(targets)}.")
    if not np.all(np.isfinite(y)):
        raise ReadoutError("Targets contain non-finite values.")
    return y


def fit_readout(
    x_hat: ConcatTrajectory | np.ndarray,
    targets: np.ndarray,
    bias: bool = True,
) -> tuple[ReadoutWeights, FitReport]:
    """
    Minimum-norm least-squares readout, no regularisation.

    Singular values below max(T, D) * eps * sigma_max are treated as zero, so
    rank-deficient designs (e.g. duplicated concatenated neurons) are solved
    in the minimum-norm sense instead of failing.

    Returns:
        (weights, report) with weights.w_out of shape (N_out, D[+1]).
    """
    x = _design(x_hat)
    y = _targets(targets, x.shape[0])
    design = _with_bias(x) if bias else x
    cond = max(design.shape) * np.finfo(float).eps
    solution, _, rank, singular = linalg.lstsq(design, y, cond=cond, lapack_driver="gelsd")
    residual = y - design @ solution
    sigma_max = float(singular[0]) if singular.size else 0.0
    report = FitReport(
        residual_sse=float(np.sum(residual * residual)),
        effective_rank=int(rank),
        singular_cutoff=cond * sigma_max,
    )
    if report.effective_rank < min(design.shape):
        LOGGER.debug("rank-deficient design: rank=%s shape=%s", report.effective_rank, design.shape)
    return ReadoutWeights(w_out=solution.T.copy(), bias_enabled=bias), report


def predict(w: ReadoutWeights, x_hat: ConcatTrajectory | np.ndarray) -> np.ndarray:
    """y = W_out x_hat (plus bias); returns shape (T_eff, N_out)."""
    x = _design(x_hat)
    if x.shape[1] != w.state_dim:
        raise ReadoutError(f"Readout expects {w.state_dim} state columns, got {x.shape[1]}.")
    design = _with_bias(x) if w.bias_enabled else x
    return design @ w.w_out.T


def nmse(pred: np.ndarray, target: np.ndarray) -> float:
    """<|y - y_tc|^2> / <|y_tc - <y_tc>|^2>, averaged over time."""
    y = np.asarray(pred, dtype=float)
    y_tc = np.asarray(target, dtype=float)
    if y.ndim == 1:
        y = y.reshape(-1, 1)
    if y_tc.ndim == 1:
        y_tc = y_tc.reshape(-1, 1)
    if y.shape != y_tc.shape:
        raise ReadoutError(f"Prediction shape {y.shape} does not match target shape {y_tc.shape}.")
    if y.shape[0] < 2:
        raise ReadoutError("nmse needs at least two time steps.")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(y_tc))):
        raise ReadoutError("nmse inputs contain non-finite values.")
    err = np.mean(np.sum((y - y_tc) ** 2, axis=1))
    spread = np.mean(np.sum((y_tc - y_tc.mean(axis=0)) ** 2, axis=1))
    if spread <= 0.0:
        raise ReadoutError("nmse is undefined for a constant target.")
    return float(err / spread)
