"""Reservoir construction, state evolution and the state-concatenation schemes.

The reservoir follows x(t) = tanh(W_res x(t-1) + W_in u(t)). A readout may
see more than the current state: past states (delay scheme), input-free
evolutions of the current state (drift scheme), or past states of a
reservoir that takes extra internal steps per input (transient scheme).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import linalg

import config
from utils.seeding import check_seed, derive_seed, make_rng

LOGGER = logging.getLogger("rcbench.reservoir")


class ReservoirValidationError(ValueError):
    """Raised when reservoir inputs, weights or schemes are inconsistent."""


class InsufficientHistoryError(ReservoirValidationError):
    """Raised when a trajectory is too short for the requested delays."""


class DegenerateDrawError(RuntimeError):
    """Raised when a random matrix cannot be rescaled to a target spectral radius."""


# ---------- Types ----------


@dataclass(frozen=True)
class ReservoirConfig:
    """Dimensions, scale parameters and seed of one reservoir."""

    n_in: int
    n_res: int
    n_out: int
    rho_in: float
    rho_res: float
    rho_drift: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("n_in", "n_res", "n_out"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ReservoirValidationError(f"{name} must be a positive integer, got {value!r}.")
        if not self.rho_in > 0:
            raise ReservoirValidationError(f"rho_in must be > 0, got {self.rho_in!r}.")
        if not self.rho_res > 0:
            raise ReservoirValidationError(f"rho_res must be > 0, got {self.rho_res!r}.")
        if self.rho_drift is not None and not self.rho_drift > 0:
            raise ReservoirValidationError(f"rho_drift must be > 0 when set, got {self.rho_drift!r}.")
        try:
            check_seed(self.seed)
        except ValueError as e:
            raise ReservoirValidationError(str(e)) from e

    def with_params(self, **changes: object) -> "ReservoirConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class WeightSet:
    """The fixed random matrices of a reservoir. Arrays are read-only."""

    w_in: np.ndarray
    w_res: np.ndarray
    w_drift: np.ndarray | None = None

    def __post_init__(self) -> None:
        w_in = np.array(self.w_in, dtype=float, ndmin=2)
        w_res = np.array(self.w_res, dtype=float, ndmin=2)
        if w_res.shape[0] != w_res.shape[1]:
            raise ReservoirValidationError(f"w_res must be square, got shape {w_res.shape}.")
        if w_in.shape[0] != w_res.shape[0]:
            raise ReservoirValidationError(
                f"w_in has {w_in.shape[0]} rows but the reservoir has {w_res.shape[0]} neurons."
            )
        w_in.setflags(write=False)
        w_res.setflags(write=False)
        object.__setattr__(self, "w_in", w_in)
        object.__setattr__(self, "w_res", w_res)
        if self.w_drift is not None:
            w_drift = np.array(self.w_drift, dtype=float, ndmin=2)
            if w_drift.shape != w_res.shape:
                raise ReservoirValidationError(
                    f"w_drift must match w_res shape {w_res.shape}, got {w_drift.shape}."
                )
            w_drift.setflags(write=False)
            object.__setattr__(self, "w_drift", w_drift)

    @property
    def n_res(self) -> int:
        return int(self.w_res.shape[0])

    @property
    def n_in(self) -> int:
        return int(self.w_in.shape[1])


class SchemeKind(str, Enum):
    STANDARD = "standard"
    DELAY = "delay"
    DRIFT = "drift"
    TRANSIENT = "transient"


@dataclass(frozen=True)
class Scheme:
    """Which states the readout sees.

    standard  -> x(t)
    delay     -> x(t), x(t-Q), ..., x(t-PQ)
    drift     -> x(t), P input-free evolutions of x(t) under W_drift
    transient -> delay scheme on a timeline with n_tran extra steps per input
    """

    kind: SchemeKind = SchemeKind.STANDARD
    p: int = 0
    q: int = 1
    n_tran: int = 0

    def __post_init__(self) -> None:
        kind = SchemeKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is SchemeKind.STANDARD:
            if self.p != 0:
                raise ReservoirValidationError("standard scheme has no concatenated blocks (p must be 0).")
        elif kind is SchemeKind.DRIFT:
            if self.p < 1:
                raise ReservoirValidationError(f"drift scheme needs p >= 1, got {self.p}.")
        elif self.p < 0:
            raise ReservoirValidationError(f"p must be >= 0, got {self.p}.")
        if self.q < 1:
            raise ReservoirValidationError(f"q must be >= 1, got {self.q}.")
        if kind is SchemeKind.TRANSIENT:
            if self.n_tran < 1:
                raise ReservoirValidationError(f"transient scheme needs n_tran >= 1, got {self.n_tran}.")
        elif self.n_tran != 0:
            raise ReservoirValidationError(f"n_tran only applies to the transient scheme ({kind.value}).")

    @classmethod
    def standard(cls) -> "Scheme":
        return cls(SchemeKind.STANDARD)

    @classmethod
    def delay_state(cls, p: int, q: int) -> "Scheme":
        return cls(SchemeKind.DELAY, p=p, q=q)

    @classmethod
    def drift_state(cls, p: int) -> "Scheme":
        return cls(SchemeKind.DRIFT, p=p)

    @classmethod
    def delay_transient(cls, p: int, q: int, n_tran: int) -> "Scheme":
        return cls(SchemeKind.TRANSIENT, p=p, q=q, n_tran=n_tran)

    @classmethod
    def from_name(cls, name: str, p: int = 0, q: int = 1, n_tran: int = 1) -> "Scheme":
        """Build a scheme from its CLI name, ignoring parameters it does not use."""
        try:
            kind = SchemeKind(str(name).strip().lower())
        except ValueError as e:
            valid = ", ".join(k.value for k in SchemeKind)
            raise ReservoirValidationError(f"Unknown scheme {name!r}; expected one of {valid}.") from e
        if kind is SchemeKind.STANDARD:
            return cls.standard()
        if kind is SchemeKind.DRIFT:
            return cls.drift_state(p)
        if kind is SchemeKind.DELAY:
            return cls.delay_state(p, q)
        return cls.delay_transient(p, q, n_tran)

    def concat_factor(self) -> int:
        return self.p + 1

    @property
    def history(self) -> int:
        """Steps of past state the scheme needs (internal steps for transient)."""
        if self.kind in (SchemeKind.DELAY, SchemeKind.TRANSIENT):
            return self.p * self.q
        return 0

    @property
    def label(self) -> str:
        if self.kind is SchemeKind.STANDARD:
            return "standard"
        if self.kind is SchemeKind.DRIFT:
            return f"drift(P={self.p})"
        if self.kind is SchemeKind.DELAY:
            return f"delay(P={self.p},Q={self.q})"
        return f"transient(P={self.p},Q={self.q},Ntran={self.n_tran})"


@dataclass(frozen=True, eq=False)
class StateTrajectory:
    """Row t is the reservoir state after consuming input t."""

    states: np.ndarray
    initial_state: np.ndarray

    @property
    def length(self) -> int:
        return int(self.states.shape[0])


@dataclass(frozen=True, eq=False)
class ConcatTrajectory:
    """Design matrix of concatenated states; time_index[r] is the output time of row r."""

    rows: np.ndarray
    time_index: np.ndarray
    scheme: Scheme = field(default_factory=Scheme.standard)

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])

    @property
    def length(self) -> int:
        return int(self.rows.shape[0])

    def since(self, start: int) -> "ConcatTrajectory":
        """Rows whose output time is >= start."""
        keep = self.time_index >= start
        return ConcatTrajectory(self.rows[keep], self.time_index[keep], self.scheme)


# ---------- Validation helpers ----------


def _require_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise ReservoirValidationError(f"{name} contains non-finite values.")


def _as_state(w: WeightSet, x: np.ndarray | None) -> np.ndarray:
    if x is None:
        return np.zeros(w.n_res)
    state = np.asarray(x, dtype=float).reshape(-1)
    if state.shape[0] != w.n_res:
        raise ReservoirValidationError(f"State has length {state.shape[0]}, expected {w.n_res}.")
    _require_finite("state", state)
    return state


def _as_inputs(w: WeightSet, inputs: np.ndarray) -> np.ndarray:
    arr = np.asarray(inputs, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if w.n_in == 1 else arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != w.n_in:
        raise ReservoirValidationError(f"Inputs must have shape (T, {w.n_in}), got {np.shape(inputs)}.")
    if arr.shape[0] < 1:
        raise ReservoirValidationError("Inputs must contain at least one step.")
    _require_finite("inputs", arr)
    return arr


# ---------- Operations ----------


def spectral_radius(m: np.ndarray) -> float:
    """Largest eigenvalue magnitude of a square matrix (dense eigensolver)."""
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ReservoirValidationError(f"spectral_radius needs a square matrix, got shape {arr.shape}.")
    _require_finite("matrix", arr)
    if arr.size == 0:
        return 0.0
    return float(np.max(np.abs(linalg.eigvals(arr))))


def _scaled_draw(seed: int, label: str, n: int, rho: float) -> np.ndarray:
    for attempt in range(config.DEGENERATE_DRAW_RETRIES + 1):
        sub_seed = derive_seed(seed, label, attempt)
        raw = make_rng(sub_seed).uniform(-1.0, 1.0, size=(n, n))
        radius = spectral_radius(raw)
        if radius >= config.DEGENERATE_RADIUS:
            return raw * (rho / radius)
        LOGGER.warning(
            "degenerate %s draw (radius=%.3e, attempt=%s, sub_seed=%s); retrying",
            label,
            radius,
            attempt,
            sub_seed,
        )
    raise DegenerateDrawError(
        f"{label}: spectral radius stayed below {config.DEGENERATE_RADIUS} "
        f"after {config.DEGENERATE_DRAW_RETRIES} retries."
    )


def init_weights(cfg: ReservoirConfig) -> WeightSet:
    """Draw W_in ~ U(-rho_in, rho_in) and W_res (and W_drift) rescaled to their spectral radius."""
    w_in = make_rng(derive_seed(cfg.seed, "w_in")).uniform(-cfg.rho_in, cfg.rho_in, size=(cfg.n_res, cfg.n_in))
    w_res = _scaled_draw(cfg.seed, "w_res", cfg.n_res, cfg.rho_res)
    w_drift = None
    if cfg.rho_drift is not None:
        w_drift = _scaled_draw(cfg.seed, "w_drift", cfg.n_res, cfg.rho_drift)
    return WeightSet(w_in=w_in, w_res=w_res, w_drift=w_drift)


def step(w: WeightSet, x: np.ndarray, u: np.ndarray | float) -> np.ndarray:
    """One reservoir update tanh(W_res x + W_in u)."""
    state = _as_state(w, x)
    drive = np.asarray(u, dtype=float).reshape(-1)
    if drive.shape[0] != w.n_in:
        raise ReservoirValidationError(f"Input has length {drive.shape[0]}, expected {w.n_in}.")
    _require_finite("input", drive)
    return np.tanh(w.w_res @ state + w.w_in @ drive)


def run(w: WeightSet, inputs: np.ndarray, x0: np.ndarray | None = None) -> StateTrajectory:
    """Drive the reservoir through *inputs*; x0 defaults to the zero state."""
    u = _as_inputs(w, inputs)
    x = _as_state(w, x0)
    initial = x.copy()
    drive = u @ w.w_in.T
    w_res = w.w_res
    states = np.empty((u.shape[0], w.n_res))
    for t in range(u.shape[0]):
        x = np.tanh(w_res @ x + drive[t])
        states[t] = x
    return StateTrajectory(states=states, initial_state=initial)


def drift_run(w_drift: np.ndarray | None, x: np.ndarray, p: int) -> list[np.ndarray]:
    """P input-free updates of x under W_drift; element i is the (i+1)-th drifting state."""
    if w_drift is None:
        raise ReservoirValidationError("drift states need w_drift; set rho_drift in the reservoir config.")
    if p < 1:
        raise ReservoirValidationError(f"drift_run needs p >= 1, got {p}.")
    matrix = np.asarray(w_drift, dtype=float)
    current = np.asarray(x, dtype=float).reshape(-1)
    if current.shape[0] != matrix.shape[0]:
        raise ReservoirValidationError(f"State has length {current.shape[0]}, expected {matrix.shape[0]}.")
    out: list[np.ndarray] = []
    for _ in range(p):
        current = np.tanh(matrix @ current)
        out.append(current)
    return out


def drift_states_batch(w_drift: np.ndarray | None, states: np.ndarray, p: int) -> list[np.ndarray]:
    """drift_run applied to every row of *states* at once; returns P (T, N) blocks."""
    if w_drift is None:
        raise ReservoirValidationError("drift states need w_drift; set rho_drift in the reservoir config.")
    current = np.asarray(states, dtype=float)
    blocks: list[np.ndarray] = []
    for _ in range(p):
        current = np.tanh(current @ np.asarray(w_drift).T)
        blocks.append(current)
    return blocks


def _stack_delays(states: np.ndarray, idx: np.ndarray, p: int, q: int) -> np.ndarray:
    return np.hstack([states[idx - i * q] for i in range(p + 1)])


def concatenate(traj: StateTrajectory, scheme: Scheme, w: WeightSet | None = None) -> ConcatTrajectory:
    """Build the readout design matrix for *scheme*.

    For the transient scheme *traj* must be the internal timeline returned by
    transient_run; one row is emitted per external output time.
    """
    states = np.asarray(traj.states, dtype=float)
    length = states.shape[0]

    if scheme.kind is SchemeKind.STANDARD:
        return ConcatTrajectory(states, np.arange(length), scheme)

    if scheme.kind is SchemeKind.DRIFT:
        if w is None or w.w_drift is None:
            raise ReservoirValidationError("drift scheme needs a WeightSet with w_drift.")
        blocks = [states] + drift_states_batch(w.w_drift, states, scheme.p)
        return ConcatTrajectory(np.hstack(blocks), np.arange(length), scheme)

    history = scheme.history
    if scheme.kind is SchemeKind.DELAY:
        if length <= history:
            raise InsufficientHistoryError(
                f"delay scheme with P*Q={history} needs more than {history} steps, got {length}."
            )
        idx = np.arange(history, length)
        return ConcatTrajectory(_stack_delays(states, idx, scheme.p, scheme.q), idx, scheme)

    stride = scheme.n_tran + 1
    if length % stride:
        raise ReservoirValidationError(
            f"transient trajectory length {length} is not a multiple of n_tran+1={stride}."
        )
    external = np.arange(length // stride)
    internal = stride * external + scheme.n_tran
    keep = internal >= history
    if not np.any(keep):
        raise InsufficientHistoryError(
            f"transient scheme with P*Q={history} internal steps has no complete row in {length} steps."
        )
    rows = _stack_delays(states, internal[keep], scheme.p, scheme.q)
    return ConcatTrajectory(rows, external[keep], scheme)


def transient_run(
    w: WeightSet,
    inputs: np.ndarray,
    n_tran: int,
    x0: np.ndarray | None = None,
) -> StateTrajectory:
    """Run with every input held for n_tran+1 internal steps (internal step t reads u(t // (n_tran+1)))."""
    if n_tran < 1:
        raise ReservoirValidationError(f"n_tran must be >= 1, got {n_tran}.")
    u = _as_inputs(w, inputs)
    return run(w, np.repeat(u, n_tran + 1, axis=0), x0)


def external_rows(traj: StateTrajectory, n_tran: int) -> np.ndarray:
    """States at the external output times (N^tran+1)t + N^tran of an internal trajectory."""
    stride = n_tran + 1
    return traj.states[n_tran::stride]


def scheme_features(
    w: WeightSet,
    inputs: np.ndarray,
    scheme: Scheme,
    x0: np.ndarray | None = None,
) -> ConcatTrajectory:
    """Run the dynamics *scheme* needs and return the concatenated states."""
    if scheme.kind is SchemeKind.TRANSIENT:
        traj = transient_run(w, inputs, scheme.n_tran, x0)
    else:
        traj = run(w, inputs, x0)
    return concatenate(traj, scheme, w)


def memory_cost(p: int, q: int, n_out: int) -> int:
    """Values kept in memory by a streaming delay readout: (P+1)(PQ+2)N_out/2."""
    if p < 0 or q < 1 or n_out < 1:
        raise ReservoirValidationError(f"memory_cost needs p>=0, q>=1, n_out>=1; got ({p}, {q}, {n_out}).")
    # (P+1)(PQ+2) is always even.
    return (p + 1) * (p * q + 2) * n_out // 2


def state_memory_cost(p: int, n_res: int) -> int:
    """Memory of a reservoir enlarged (P+1) times instead of concatenated."""
    return (p + 1) * n_res
