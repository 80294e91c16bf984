"""CHSH correlations, the local-hidden-variable bound and setting optimisation.

``S(n, m, n', m') = E(n, m) - E(n, m') + E(n', m) + E(n', m')``; local
realistic models obey ``|S| <= 2`` and quantum states reach ``2 sqrt 2``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.optimize import minimize

from . import quantum as qc
from .errors import InvalidInputError
from .kaon import ActiveQuestion, Flavor, KaonConstants, correlation_grid

CLASSICAL_BOUND = 2.0
QUANTUM_BOUND = 2.0 * math.sqrt(2.0)


@dataclass(frozen=True)
class JointOutcomeTable:
    """``probabilities[a, b]`` with row/column 0 meaning outcome +1 and 1 meaning -1."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=float)
        if p.shape != (2, 2):
            raise InvalidInputError(f"joint outcome table must be 2x2, got {p.shape}")
        if np.any(p < -1e-12) or abs(p.sum() - 1) > 1e-12:
            raise InvalidInputError("joint outcome table must be non-negative and sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    @classmethod
    def from_counts(cls, counts) -> JointOutcomeTable:
        counts = np.asarray(counts, dtype=float)
        return cls(counts / counts.sum())


_SIGNS = np.array([[1.0, -1.0], [-1.0, 1.0]])


def correlation_from_table(table: JointOutcomeTable | np.ndarray) -> float:
    if not isinstance(table, JointOutcomeTable):
        table = JointOutcomeTable(table)
    return float(np.sum(_SIGNS * table.probabilities))


def chsh_value(e_nm: float, e_nm2: float, e_n2m: float, e_n2m2: float) -> float:
    es = (e_nm, e_nm2, e_n2m, e_n2m2)
    for e in es:
        if not (-1 - 1e-12 <= e <= 1 + 1e-12):
            raise InvalidInputError(f"correlation {e} outside [-1, 1]")
    return e_nm - e_nm2 + e_n2m + e_n2m2


# --- settings -----------------------------------------------------------------


@dataclass(frozen=True)
class SpinSetting:
    direction: np.ndarray

    def __post_init__(self):
        d = qc.unit(self.direction)
        d.setflags(write=False)
        object.__setattr__(self, "direction", d)

    @classmethod
    def planar(cls, angle_deg: float) -> SpinSetting:
        """Unit vector at ``angle_deg`` from z towards x in the x-z plane."""
        a = math.radians(angle_deg)
        return cls(np.array([math.sin(a), 0.0, math.cos(a)]))

    def key(self):
        return ("spin", tuple(self.direction))


MeasurementSetting = Union[SpinSetting, ActiveQuestion]


def _setting_key(s: MeasurementSetting):
    if isinstance(s, SpinSetting):
        return s.key()
    return ("kaon", int(s.target), s.time)


@dataclass(frozen=True)
class CHSHConfig:
    """Settings ``n, n'`` for Alice (left) and ``m, m'`` for Bob (right)."""

    n: MeasurementSetting
    m: MeasurementSetting
    n_prime: MeasurementSetting
    m_prime: MeasurementSetting

    def __post_init__(self):
        kinds = {type(s) for s in self.settings}
        if len(kinds) != 1 or not kinds <= {SpinSetting, ActiveQuestion}:
            raise InvalidInputError("all four CHSH settings must be of one kind")

    @property
    def settings(self) -> tuple:
        return (self.n, self.m, self.n_prime, self.m_prime)

    @classmethod
    def planar(cls, n: float, m: float, n_prime: float, m_prime: float) -> CHSHConfig:
        return cls(*(SpinSetting.planar(a) for a in (n, m, n_prime, m_prime)))


# Alice at 0 and 90 degrees, Bob at 45 and 135: S = -2 sqrt 2 on the singlet
OPTIMAL_PLANAR_ANGLES = (0.0, 45.0, 90.0, 135.0)


def optimal_config() -> CHSHConfig:
    return CHSHConfig.planar(*OPTIMAL_PLANAR_ANGLES)


@dataclass(frozen=True)
class CHSHResult:
    s_value: float
    settings: CHSHConfig | None = None
    correlations: tuple[float, float, float, float] = ()
    classical_bound: float = CLASSICAL_BOUND
    quantum_bound: float = QUANTUM_BOUND

    @property
    def magnitude(self) -> float:
        return abs(self.s_value)

    @property
    def violates_local_realism(self) -> bool:
        return self.magnitude > self.classical_bound


# --- local hidden variables ---------------------------------------------------


def lhv_strategy_values(settings: CHSHConfig | None = None) -> np.ndarray:
    """S for each of the 16 deterministic local strategies.

    A strategy assigns +-1 to each of ``n, n', m, m'``. When a party's two
    settings are identical they must receive the same outcome, so the
    enumeration collapses the duplicate (and returns fewer distinct values).
    """
    same_left = same_right = False
    if settings is not None:
        same_left = _setting_key(settings.n) == _setting_key(settings.n_prime)
        same_right = _setting_key(settings.m) == _setting_key(settings.m_prime)
    values = []
    for a, a2, b, b2 in itertools.product((1, -1), repeat=4):
        if same_left:
            a2 = a
        if same_right:
            b2 = b
        values.append(a * b - a * b2 + a2 * b + a2 * b2)
    return np.array(values, dtype=float)


def lhv_brute_force_bound(settings: CHSHConfig | None = None) -> float:
    return float(lhv_strategy_values(settings).max())


# --- quantum spin states ------------------------------------------------------


def quantum_correlation(rho: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """``Tr((a.sigma) x (b.sigma) rho)`` for a two-qubit ket or density matrix."""
    return qc.expectation(qc.tensor(qc.spin_observable(a), qc.spin_observable(b)), rho)


def quantum_chsh(rho: np.ndarray, cfg: CHSHConfig | None = None) -> CHSHResult:
    cfg = optimal_config() if cfg is None else cfg
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[0] != 4:
        raise InvalidInputError(f"quantum_chsh needs a two-qubit state, got dimension {rho.shape[0]}")
    if not isinstance(cfg.n, SpinSetting):
        raise InvalidInputError("quantum_chsh needs spin-direction settings")
    n, m, n2, m2 = (s.direction for s in cfg.settings)
    es = tuple(quantum_correlation(rho, a, b) for a, b in ((n, m), (n, m2), (n2, m), (n2, m2)))
    return CHSHResult(chsh_value(*es), cfg, es)


# --- kaon time scan -----------------------------------------------------------


@dataclass(frozen=True)
class TimeGrid:
    t_min: float
    t_max: float
    points: int

    def __post_init__(self):
        if self.points < 1:
            raise InvalidInputError("time grid must have at least one point")
        if not (math.isfinite(self.t_min) and math.isfinite(self.t_max)) or self.t_min < 0:
            raise InvalidInputError("time grid bounds must be finite and non-negative")
        if self.t_max < self.t_min or (self.points > 1 and self.t_max == self.t_min):
            raise InvalidInputError("time grid needs t_max > t_min")

    def values(self) -> np.ndarray:
        if self.points == 1:
            return np.array([float(self.t_min)])
        return np.linspace(self.t_min, self.t_max, self.points)

    @classmethod
    def default(cls, c: KaonConstants, points: int = 40) -> TimeGrid:
        """``[0, 4/gamma_S]``; without decay, one full oscillation period instead."""
        if c.gamma_S > 0:
            return cls(0.0, 4.0 / c.gamma_S, points)
        if c.delta_m > 0:
            return cls(0.0, 2 * math.pi / c.delta_m, points)
        raise InvalidInputError("cannot choose a default grid with gamma_S = delta_m = 0")

    def to_dict(self) -> dict:
        return {"t_min": self.t_min, "t_max": self.t_max, "points": self.points}


@dataclass(frozen=True)
class KaonScanResult:
    """Outcome of :func:`kaon_chsh_scan`.

    ``table[i, j, k, l]`` holds S at times ``(grid[i], grid[j], grid[k], grid[l])``
    for settings ``(n, m, n', m')``; tuples excluded by the distinct-settings
    rule hold NaN. ``max_S`` is the largest |S| found after refinement.
    """

    max_S: float
    s_at_max: float
    argmax: tuple[float, float, float, float]
    coarse_max_S: float
    coarse_argmax: tuple[float, float, float, float]
    table: np.ndarray = field(repr=False)
    grid: TimeGrid
    flavors: tuple[Flavor, Flavor, Flavor, Flavor]
    refined: bool
    min_separation: float = 0.0


def _s_from_times(times, flavors, c: KaonConstants, sign: float) -> float:
    tn, tm, tn2, tm2 = times
    fn, fm, fn2, fm2 = flavors
    e = lambda fa, ta, fb, tb: float(correlation_grid(c, fa, fb, [ta], [tb])[0, 0])  # noqa: E731
    return sign * (e(fn, tn, fm, tm) - e(fn, tn, fm2, tm2) + e(fn2, tn2, fm, tm) + e(fn2, tn2, fm2, tm2))


def kaon_chsh_scan(
    c: KaonConstants,
    flavors: Sequence[Flavor | str] = (Flavor.K0BAR,) * 4,
    grid: TimeGrid | None = None,
    *,
    refine: bool = True,
    distinct_settings: bool = True,
    min_separation: float | None = None,
    outcome_sign: float = 1.0,
    maxiter: int = 200,
    tol: float = 1e-10,
) -> KaonScanResult:
    """Maximise |S| over four active-measurement times.

    Every 4-tuple of grid times is evaluated, then a Nelder-Mead search
    starts from the best tuple. ``flavors`` gives the question asked at
    ``(n, m, n', m')``. With ``distinct_settings`` a party's two settings
    must be different measurements: either different flavours, or times at
    least ``min_separation`` apart (default: one grid step). Letting the two
    times merge turns S into ``2 E(n, m)``, which reaches 2 trivially.
    Ties go to the lexicographically smallest time tuple.
    """
    flavors = tuple(Flavor.parse(f) for f in flavors)
    if len(flavors) != 4:
        raise InvalidInputError("need four flavour questions (n, m, n', m')")
    grid = TimeGrid.default(c) if grid is None else grid
    ts = grid.values()
    if min_separation is None:
        min_separation = float(ts[1] - ts[0]) if ts.size > 1 else 0.0
    if not (math.isfinite(min_separation) and min_separation >= 0):
        raise InvalidInputError("min_separation must be finite and non-negative")
    sep = min_separation if distinct_settings else 0.0
    # slack so that neighbouring grid points are never lost to rounding
    sep_test = sep * (1.0 - 1e-9)
    fn, fm, fn2, fm2 = flavors
    e1 = correlation_grid(c, fn, fm, ts, ts)
    e2 = correlation_grid(c, fn, fm2, ts, ts)
    e3 = correlation_grid(c, fn2, fm, ts, ts)
    e4 = correlation_grid(c, fn2, fm2, ts, ts)
    # table[i, j, k, l] = E1[i, j] - E2[i, l] + E3[k, j] + E4[k, l]
    table = outcome_sign * (
        e1[:, :, None, None]
        - e2[:, None, None, :]
        + np.transpose(e3)[None, :, :, None]
        + e4[None, None, :, :]
    )
    if distinct_settings:
        # grid points closer than sep (always including equal indices) are one setting
        close = np.abs(ts[:, None] - ts[None, :]) < sep_test
        np.fill_diagonal(close, True)
        same_left = close if fn == fn2 else np.zeros((ts.size,) * 2, bool)
        same_right = close if fm == fm2 else np.zeros((ts.size,) * 2, bool)
        excluded = same_left[:, None, :, None] | same_right[None, :, None, :]
        table = np.where(excluded, np.nan, table)
        if np.all(excluded):
            raise InvalidInputError("grid has no tuple with distinct settings; add points or set distinct_settings=False")
    table.setflags(write=False)

    mag = np.abs(table)
    flat = int(np.nanargmax(mag))
    best = np.unravel_index(flat, table.shape)
    coarse_times = tuple(float(ts[i]) for i in best)
    coarse_max = float(mag[best])
    best_times, best_val = coarse_times, coarse_max

    if refine and ts.size > 1:
        lo, hi = float(ts[0]), float(ts[-1])
        step = float(ts[1] - ts[0])

        def degenerate(t):
            if not distinct_settings:
                return False
            return bool((fn == fn2 and (abs(t[0] - t[2]) < sep_test or t[0] == t[2]))
                        or (fm == fm2 and (abs(t[1] - t[3]) < sep_test or t[1] == t[3])))

        def objective(x):
            t = np.clip(x, lo, hi)
            if degenerate(t):
                return 0.0
            return -abs(_s_from_times(t, flavors, c, outcome_sign))

        x0 = np.array(coarse_times)
        simplex = np.vstack([x0] + [x0 + step * np.eye(4)[i] * (1 if x0[i] + step <= hi else -1) for i in range(4)])
        res = minimize(
            objective, x0, method="Nelder-Mead",
            options={"maxiter": maxiter, "xatol": tol, "fatol": tol, "initial_simplex": simplex},
        )
        t_ref = tuple(float(v) for v in np.clip(res.x, lo, hi))
        val = -objective(np.array(t_ref))
        if val > best_val:
            best_times, best_val = t_ref, val

    s_signed = _s_from_times(best_times, flavors, c, outcome_sign)
    return KaonScanResult(
        max_S=best_val,
        s_at_max=s_signed,
        argmax=best_times,
        coarse_max_S=coarse_max,
        coarse_argmax=coarse_times,
        table=table,
        grid=grid,
        flavors=flavors,
        refined=refine,
        min_separation=sep,
    )
