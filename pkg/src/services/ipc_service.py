"""Information processing capacity of a (concatenated) reservoir.

Capacities are measured against products of Legendre polynomials of past
i.i.d. uniform inputs. The design matrix is factorised once; every basis
target is then scored by its projection onto the state column space.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Any, Iterator, Sequence

import numpy as np
from scipy import linalg

import config
from services.dataset_service import uniform_inputs
from services.readout_service import fit_readout
from services.reservoir_service import ConcatTrajectory, Scheme, WeightSet, scheme_features

LOGGER = logging.getLogger("rcbench.ipc")

VALID_MAX_ORDERS = (1, 3, 5, 7, 9)


class IpcConfigError(ValueError):
    """Raised for invalid IPC settings or degenerate capacity targets."""


# ---------- Types ----------


@dataclass(frozen=True)
class BasisTerm:
    """Product of Legendre factors: (delay, degree) pairs with distinct delays, sorted by delay."""

    terms: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        normalized = tuple(sorted((int(d), int(g)) for d, g in self.terms))
        if not normalized:
            raise IpcConfigError("A basis needs at least one (delay, degree) term.")
        delays = [d for d, _ in normalized]
        if len(set(delays)) != len(delays):
            raise IpcConfigError(f"Basis delays must be distinct: {normalized}.")
        if any(d < 0 for d in delays) or any(g < 1 for _, g in normalized):
            raise IpcConfigError(f"Basis needs delays >= 0 and degrees >= 1: {normalized}.")
        object.__setattr__(self, "terms", normalized)

    @classmethod
    def from_delays(cls, delays: Sequence[int]) -> "BasisTerm":
        """Basis from a multiset of delays; a delay repeated k times has degree k."""
        counts: dict[int, int] = {}
        for d in delays:
            counts[int(d)] = counts.get(int(d), 0) + 1
        return cls(tuple(counts.items()))

    def order(self) -> int:
        return sum(g for _, g in self.terms)

    def max_delay(self) -> int:
        return self.terms[-1][0]

    def sort_key(self) -> tuple[int, tuple[tuple[int, int], ...]]:
        return (self.max_delay(), self.terms)

    def degrees(self) -> dict[int, int]:
        return dict(self.terms)

    @property
    def label(self) -> str:
        return " ".join(f"{d}:{g}" for d, g in self.terms)


@dataclass(frozen=True)
class IpcConfig:
    t_steps: int = config.IPC_T_STEPS
    tau_max: int = config.IPC_TAU_MAX
    max_order: int = config.IPC_MAX_ORDER
    threshold_scale: float = 1.0
    input_seed: int = 0
    washout: int = config.IPC_WASHOUT
    high_order: bool = False
    batch_size: int = config.IPC_BATCH_SIZE
    workers: int = 1

    def validate(self, concat_dim: int) -> None:
        if self.max_order not in VALID_MAX_ORDERS:
            raise IpcConfigError(f"max_order must be one of {VALID_MAX_ORDERS}, got {self.max_order}.")
        if self.max_order > config.IPC_FULL_ORDER_LIMIT and not self.high_order:
            raise IpcConfigError(
                f"max_order={self.max_order} needs high_order=True (pruned enumeration above "
                f"order {config.IPC_FULL_ORDER_LIMIT})."
            )
        if self.tau_max < 0:
            raise IpcConfigError(f"tau_max must be >= 0, got {self.tau_max}.")
        if self.t_steps < 100 * concat_dim:
            raise IpcConfigError(
                f"t_steps={self.t_steps} is below 100 x concatenated dimension ({100 * concat_dim})."
            )
        if not self.threshold_scale > 0:
            raise IpcConfigError(f"threshold_scale must be > 0, got {self.threshold_scale}.")
        if self.washout < self.tau_max:
            raise IpcConfigError(f"washout ({self.washout}) must cover tau_max ({self.tau_max}).")
        if self.batch_size < 1 or self.workers < 1:
            raise IpcConfigError("batch_size and workers must be >= 1.")

    def threshold(self, concat_dim: int) -> float:
        """Chance capacity is about D/T; the cutoff is a fixed multiple of it."""
        return self.threshold_scale * concat_dim * config.THRESHOLD_CHANCE_MULTIPLE / self.t_steps


@dataclass
class IpcReport:
    total: float
    per_order: dict[int, float]
    per_order_delay: dict[tuple[int, int], float]
    per_basis: dict[BasisTerm, float]
    threshold_used: float
    concat_dim: int = 0
    n_evaluated: int = 0
    lower_bound: bool = False
    exceeds_bound: bool = False
    scheme_label: str = ""
    meta: dict[str, Any] = field(default_factory=dict)

    def csv_rows(self) -> list[tuple[int, int, float]]:
        return [(k, tau, c) for (k, tau), c in sorted(self.per_order_delay.items())]

    def to_dict(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "per_order": {str(k): v for k, v in sorted(self.per_order.items())},
            "per_order_delay": [
                {"order": k, "tau": tau, "capacity": c} for k, tau, c in self.csv_rows()
            ],
            "per_basis": [
                {"terms": [list(t) for t in b.terms], "capacity": c}
                for b, c in sorted(self.per_basis.items(), key=lambda kv: (kv[0].order(), kv[0].sort_key()))
            ],
            "threshold_used": self.threshold_used,
            "concat_dim": self.concat_dim,
            "n_evaluated": self.n_evaluated,
            "lower_bound": self.lower_bound,
            "exceeds_bound": self.exceeds_bound,
            "scheme": self.scheme_label,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "IpcReport":
        return cls(
            total=float(payload["total"]),
            per_order={int(k): float(v) for k, v in payload.get("per_order", {}).items()},
            per_order_delay={
                (int(r["order"]), int(r["tau"])): float(r["capacity"])
                for r in payload.get("per_order_delay", [])
            },
            per_basis={
                BasisTerm(tuple((int(d), int(g)) for d, g in r["terms"])): float(r["capacity"])
                for r in payload.get("per_basis", [])
            },
            threshold_used=float(payload.get("threshold_used", 0.0)),
            concat_dim=int(payload.get("concat_dim", 0)),
            n_evaluated=int(payload.get("n_evaluated", 0)),
            lower_bound=bool(payload.get("lower_bound", False)),
            exceeds_bound=bool(payload.get("exceeds_bound", False)),
            scheme_label=str(payload.get("scheme", "")),
            meta=dict(payload.get("meta", {})),
        )


# ---------- Legendre bases ----------


def legendre(d: int, x: float | np.ndarray) -> float | np.ndarray:
    """P_d(x) via (d+1) P_{d+1} = (2d+1) x P_d - d P_{d-1}."""
    if d < 0:
        raise IpcConfigError(f"Legendre degree must be >= 0, got {d}.")
    arr = np.asarray(x, dtype=float)
    prev = np.ones_like(arr)
    if d == 0:
        return prev if arr.ndim else float(prev)
    cur = arr.copy()
    for k in range(1, d):
        prev, cur = cur, ((2 * k + 1) * arr * cur - k * prev) / (k + 1)
    return cur if arr.ndim else float(cur)


def legendre_table(max_degree: int, u: np.ndarray) -> np.ndarray:
    """Row d holds P_d(u); shape (max_degree + 1, len(u))."""
    x = np.asarray(u, dtype=float).reshape(-1)
    table = np.empty((max_degree + 1, x.shape[0]))
    table[0] = 1.0
    if max_degree >= 1:
        table[1] = x
    for k in range(1, max_degree):
        table[k + 1] = ((2 * k + 1) * x * table[k] - k * table[k - 1]) / (k + 1)
    return table


def target_signal(basis: BasisTerm, u: np.ndarray) -> np.ndarray:
    """prod_i P_{d_i}(u(t - i)) for t = max_delay ... len(u)-1."""
    x = np.asarray(u, dtype=float).reshape(-1)
    tau = basis.max_delay()
    if x.shape[0] <= tau:
        raise IpcConfigError(f"Input series of length {x.shape[0]} is too short for delay {tau}.")
    table = legendre_table(max(g for _, g in basis.terms), x)
    return _basis_column(table, basis, tau, x.shape[0] - tau)


def _basis_column(table: np.ndarray, basis: BasisTerm, start: int, length: int) -> np.ndarray:
    col = np.ones(length)
    for delay, degree in basis.terms:
        col *= table[degree, start - delay : start - delay + length]
    return col


def enumerate_basis(order: int, tau_max: int) -> Iterator[BasisTerm]:
    """Every basis of total degree *order* over delays 0..tau_max, ordered by (max_delay, terms)."""
    if order < 1:
        raise IpcConfigError(f"order must be >= 1, got {order}.")
    for tau in range(tau_max + 1):
        # A basis with maximum delay tau is tau plus any (order-1)-multiset of 0..tau.
        group = [
            BasisTerm.from_delays(rest + (tau,))
            for rest in combinations_with_replacement(range(tau + 1), order - 1)
        ]
        group.sort(key=BasisTerm.sort_key)
        yield from group


def _raise_by_two(parent: BasisTerm, tau_max: int) -> set[BasisTerm]:
    base = parent.degrees()
    out: set[BasisTerm] = set()
    for a in range(tau_max + 1):
        grown = dict(base)
        grown[a] = grown.get(a, 0) + 2
        out.add(BasisTerm(tuple(grown.items())))
        for b in range(a + 1, tau_max + 1):
            pair = dict(base)
            pair[a] = pair.get(a, 0) + 1
            pair[b] = pair.get(b, 0) + 1
            out.add(BasisTerm(tuple(pair.items())))
    return out


def pruned_candidates(survivors: Sequence[BasisTerm], tau_max: int) -> list[BasisTerm]:
    """Bases of order k+2 reachable from order-k bases that scored above threshold."""
    found: set[BasisTerm] = set()
    for parent in survivors:
        found |= _raise_by_two(parent, tau_max)
    return sorted(found, key=BasisTerm.sort_key)


# ---------- Capacity ----------


def capacity(x_hat: ConcatTrajectory | np.ndarray, target: np.ndarray) -> float:
    """1 - SSE / sum((z - mean z)^2) of a bias-free readout fit, clamped to [0, 1]."""
    z = np.asarray(target, dtype=float).reshape(-1)
    centered = z - z.mean()
    spread = float(centered @ centered)
    if spread <= 0.0:
        raise IpcConfigError("capacity is undefined for a constant target.")
    _, report = fit_readout(x_hat, z, bias=False)
    return float(np.clip(1.0 - report.residual_sse / spread, 0.0, 1.0))


@dataclass(frozen=True, eq=False)
class _Projector:
    """Orthonormal basis of the design column space (rank-revealing QR)."""

    q: np.ndarray
    rank: int

    @classmethod
    def build(cls, x: np.ndarray) -> "_Projector":
        q, r, _ = linalg.qr(x, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        if diag.size == 0 or diag[0] == 0.0:
            return cls(np.zeros((x.shape[0], 0)), 0)
        tol = max(x.shape) * np.finfo(float).eps * diag[0]
        rank = int(np.count_nonzero(diag > tol))
        return cls(np.ascontiguousarray(q[:, :rank]), rank)

    def capacities(self, z: np.ndarray) -> np.ndarray:
        """Column-wise capacities of the targets in z (shape (T, B))."""
        proj = self.q.T @ z
        explained = np.einsum("ij,ij->j", proj, proj)
        energy = np.einsum("ij,ij->j", z, z)
        mean = z.mean(axis=0)
        spread = energy - z.shape[0] * mean * mean
        with np.errstate(divide="ignore", invalid="ignore"):
            caps = 1.0 - (energy - explained) / spread
        caps = np.where(spread > 0.0, caps, 0.0)
        return np.clip(caps, 0.0, 1.0)


def _score(
    projector: _Projector,
    table: np.ndarray,
    bases: Sequence[BasisTerm],
    start: int,
    length: int,
    cfg: IpcConfig,
) -> np.ndarray:
    batches = [bases[i : i + cfg.batch_size] for i in range(0, len(bases), cfg.batch_size)]

    def run_batch(batch: Sequence[BasisTerm]) -> np.ndarray:
        z = np.empty((length, len(batch)), order="F")
        for j, basis in enumerate(batch):
            z[:, j] = _basis_column(table, basis, start, length)
        return projector.capacities(z)

    if not batches:
        return np.zeros(0)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(run_batch, batches))
    else:
        parts = [run_batch(b) for b in batches]
    return np.concatenate(parts)


def ipc_report(w: WeightSet, scheme: Scheme, cfg: IpcConfig) -> IpcReport:
    """Capacity spectrum of *w* under *scheme* for i.i.d. U(-1, 1) inputs."""
    concat_dim = scheme.concat_factor() * w.n_res
    cfg.validate(concat_dim)
    if w.n_in != 1:
        raise IpcConfigError(f"IPC is measured for scalar inputs; reservoir has n_in={w.n_in}.")

    u = uniform_inputs(cfg.washout + cfg.t_steps, cfg.input_seed)
    x_hat = scheme_features(w, u, scheme).since(cfg.washout)
    if x_hat.length != cfg.t_steps:
        raise IpcConfigError(
            f"washout={cfg.washout} does not cover the {scheme.label} history; "
            f"got {x_hat.length} of {cfg.t_steps} rows."
        )
    start = int(x_hat.time_index[0])
    projector = _Projector.build(x_hat.rows)
    table = legendre_table(cfg.max_order, u)
    threshold = cfg.threshold(concat_dim)

    per_order: dict[int, float] = {}
    per_order_delay: dict[tuple[int, int], float] = {}
    per_basis: dict[BasisTerm, float] = {}
    survivors: dict[int, list[BasisTerm]] = {}
    n_evaluated = 0
    pruned = False

    for order in range(1, cfg.max_order + 1):
        if order <= config.IPC_FULL_ORDER_LIMIT:
            candidates = list(enumerate_basis(order, cfg.tau_max))
        else:
            pruned = True
            candidates = pruned_candidates(survivors.get(order - 2, []), cfg.tau_max)
        caps = _score(projector, table, candidates, start, cfg.t_steps, cfg)
        caps = np.where(caps < threshold, 0.0, caps)
        n_evaluated += len(candidates)

        delay_sums = np.zeros(cfg.tau_max + 1)
        kept: list[BasisTerm] = []
        for basis, c in zip(candidates, caps):
            if c > 0.0:
                per_basis[basis] = float(c)
                delay_sums[basis.max_delay()] += c
                kept.append(basis)
        survivors[order] = kept
        for tau in range(cfg.tau_max + 1):
            per_order_delay[(order, tau)] = float(delay_sums[tau])
        per_order[order] = float(sum(per_order_delay[(order, tau)] for tau in range(cfg.tau_max + 1)))
        LOGGER.info(
            "ipc order=%s evaluated=%s nonzero=%s capacity=%.4f",
            order,
            len(candidates),
            len(kept),
            per_order[order],
        )

    total = float(sum(per_order[k] for k in sorted(per_order)))
    exceeds = total > concat_dim * (1.0 + config.IPC_BOUND_SLACK)
    if exceeds:
        LOGGER.warning("total capacity %.4f exceeds bound %s (+%.0f%% slack)", total, concat_dim, 100 * config.IPC_BOUND_SLACK)
    if projector.rank < concat_dim:
        LOGGER.info("design rank %s below concatenated dimension %s", projector.rank, concat_dim)

    return IpcReport(
        total=total,
        per_order=per_order,
        per_order_delay=per_order_delay,
        per_basis=per_basis,
        threshold_used=threshold,
        concat_dim=concat_dim,
        n_evaluated=n_evaluated,
        lower_bound=pruned,
        exceeds_bound=exceeds,
        scheme_label=scheme.label,
        meta={"rank": projector.rank, "t_steps": cfg.t_steps, "tau_max": cfg.tau_max, "max_order": cfg.max_order},
    )


def capacity_weighted_mean_delay(report: IpcReport, order: int = 1) -> float:
    """sum_tau tau * C_tau / sum_tau C_tau for one order; 0.0 when the order has no capacity."""
    items = [(tau, c) for (k, tau), c in report.per_order_delay.items() if k == order]
    weight = sum(c for _, c in items)
    if weight <= 0.0:
        return 0.0
    return float(sum(tau * c for tau, c in items) / weight)
