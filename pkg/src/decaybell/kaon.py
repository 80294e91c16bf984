"""Neutral kaon time evolution, CP-violation observables and active strangeness questions.

Conventions
-----------
Flavour basis ordering is ``(K0, K0bar)``. With CP-violation parameter ``eps``
the mass eigenstates are::

    |K_S> = N (p|K0> - q|K0bar>),   |K_L> = N (p|K0> + q|K0bar>)
    p = 1 + eps,  q = 1 - eps,  N = 1 / sqrt(2 (1 + |eps|^2))

so that for ``eps = 0`` one has ``|K0> = (|K_S> + |K_L>)/sqrt(2)`` and
``|K0bar> = (-|K_S> + |K_L>)/sqrt(2)`` (minus sign on ``K_S``), and
``<K_S|K_L> = 2 Re(eps) / (1 + |eps|^2)``.

Each mass eigenstate evolves with ``exp(-i m t - Gamma t / 2)``; ``hbar = 1``
and the bundled presets measure time in units of 1e-10 s.

Decay is never renormalised away. An active measurement asks "is the kaon
in flavour f at time t, or not?"; "not" collects the opposite flavour and
every decay before t.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, InvalidTimeError

PRESETS = ("physical", "cp-conserving", "no-decay")


class Flavor(enum.IntEnum):
    """Strangeness eigenstate; the value is the index in the flavour basis."""

    K0 = 0
    K0BAR = 1

    @property
    def strangeness(self) -> int:
        return +1 if self is Flavor.K0 else -1

    @property
    def other(self) -> Flavor:
        return Flavor.K0BAR if self is Flavor.K0 else Flavor.K0

    @classmethod
    def parse(cls, text: str | Flavor) -> Flavor:
        if isinstance(text, Flavor):
            return text
        if isinstance(text, (int, np.integer)) and not isinstance(text, bool) and int(text) in (0, 1):
            return cls(int(text))
        key = str(text).strip().lower().replace("-", "").replace("_", "")
        if key in ("k0", "k", "kaon"):
            return cls.K0
        if key in ("k0bar", "kbar", "antikaon", "k0b"):
            return cls.K0BAR
        raise InvalidInputError(f"unknown flavour {text!r}; use K0 or K0bar")

    def __str__(self) -> str:
        return "K0" if self is Flavor.K0 else "K0bar"


@dataclass(frozen=True)
class KaonConstants:
    """Widths, mass difference and CP-violation parameter (``hbar = 1``)."""

    gamma_S: float
    gamma_L: float
    delta_m: float
    epsilon: complex = 0j
    m_S: float = 0.0
    name: str = "custom"

    def __post_init__(self):
        vals = (self.gamma_S, self.gamma_L, self.delta_m, self.m_S, self.epsilon.real, self.epsilon.imag)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidConfigError("kaon constants must be finite")
        # gamma_S = gamma_L = 0 is allowed for the artificial no-decay limit
        if not (self.gamma_S >= self.gamma_L >= 0):
            raise InvalidConfigError("need gamma_S >= gamma_L >= 0")
        object.__setattr__(self, "epsilon", complex(self.epsilon))
        if abs(self.epsilon - 1) < 1e-9:
            raise InvalidConfigError("epsilon = 1 leaves no K0bar component in the mass eigenstates")
        # Probability conservation needs i(H - H^dagger) >= 0: a state can decay
        # but never gain norm. Large Re(eps) with small widths violates this.
        low = float(np.linalg.eigvalsh(decay_matrix(self)).min())
        if low < -1e-12 * max(self.gamma_S, 1.0):
            raise InvalidConfigError(
                f"constants give a decay matrix with negative eigenvalue {low:.3g}; "
                "probabilities would exceed one"
            )

    @property
    def m_L(self) -> float:
        return self.m_S + self.delta_m

    @property
    def width_ratio(self) -> float:
        return self.gamma_S / self.gamma_L if self.gamma_L > 0 else math.inf

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "gamma_S": self.gamma_S,
            "gamma_L": self.gamma_L,
            "delta_m": self.delta_m,
            "epsilon_re": self.epsilon.real,
            "epsilon_im": self.epsilon.imag,
        }

    def digest(self) -> str:
        """SHA-256 of the physical values, independent of the preset name."""
        d = self.to_dict()
        d.pop("name")
        payload = json.dumps({k: repr(float(v)) for k, v in sorted(d.items())}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict, name: str = "custom") -> KaonConstants:
        try:
            return cls(
                gamma_S=float(data["gamma_S"]),
                gamma_L=float(data["gamma_L"]),
                delta_m=float(data["delta_m"]),
                epsilon=complex(float(data.get("epsilon_re", 0.0)), float(data.get("epsilon_im", 0.0))),
                name=str(data.get("name", name)),
            )
        except KeyError as exc:
            raise InvalidConfigError(f"constants file is missing key {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise InvalidConfigError(f"bad constants value: {exc}") from None


def load_constants(source: str | Path) -> KaonConstants:
    """Load constants from a bundled preset name or a JSON file path."""
    if str(source) in PRESETS:
        text = resources.files("decaybell").joinpath("presets").joinpath(f"{source}.json").read_text()
        name = str(source)
    else:
        path = Path(source)
        if not path.is_file():
            raise InvalidConfigError(f"constants file {path} not found")
        text = path.read_text()
        name = path.stem
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(f"constants file is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise InvalidConfigError("constants file must hold a JSON object")
    return KaonConstants.from_dict(data, name=name)


def load_preset_metadata(name: str) -> dict:
    return json.loads(resources.files("decaybell").joinpath("presets").joinpath(f"{name}.json").read_text())


# --- CP observables ----------------------------------------------------------


def mass_eigenstate_overlap(epsilon: complex) -> float:
    """``<K_S|K_L> = 2 Re(eps) / (1 + |eps|^2)``; zero when CP is conserved."""
    epsilon = complex(epsilon)
    return 2 * epsilon.real / (1 + abs(epsilon) ** 2)


def semileptonic_asymmetry(epsilon: complex) -> float:
    """Charge asymmetry ``(G(l+) - G(l-)) / (G(l+) + G(l-))`` of semileptonic decays.

    Uses the standard identification ``delta_l = 2 Re(eps) / (1 + |eps|^2)``:
    positive means the kaon prefers the positively charged lepton.
    """
    epsilon = complex(epsilon)
    return 2 * epsilon.real / (1 + abs(epsilon) ** 2)


# --- evolution ---------------------------------------------------------------


def mass_eigenvectors(epsilon: complex) -> np.ndarray:
    """2x2 matrix whose columns are ``|K_S>`` and ``|K_L>`` in the flavour basis."""
    eps = complex(epsilon)
    p, q = 1 + eps, 1 - eps
    n = 1 / math.sqrt(2 * (1 + abs(eps) ** 2))
    return n * np.array([[p, p], [-q, q]], dtype=complex)


def effective_hamiltonian(c: KaonConstants) -> np.ndarray:
    """Flavour-basis ``H = M - i Gamma / 2``."""
    m = mass_eigenvectors(c.epsilon)
    return m @ np.diag(_eigenvalues(c)) @ np.linalg.inv(m)


def decay_matrix(c: KaonConstants) -> np.ndarray:
    """``i (H - H^dagger)``; its expectation in a state is that state's decay rate."""
    h = effective_hamiltonian(c)
    return 1j * (h - h.conj().T)


def _eigenvalues(c: KaonConstants) -> np.ndarray:
    return np.array([c.m_S - 0.5j * c.gamma_S, c.m_L - 0.5j * c.gamma_L])


def _check_time(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)) or np.any(t < 0):
        raise InvalidTimeError(f"times must be finite and non-negative, got {t}")
    return t


def _decay_factors(t, c: KaonConstants) -> np.ndarray:
    """``exp(-i lambda_X t)`` for X in (S, L); shape ``t.shape + (2,)``."""
    t = _check_time(t)
    return np.exp(-1j * np.multiply.outer(t, _eigenvalues(c)))


def propagator(t, c: KaonConstants) -> np.ndarray:
    """Non-unitary single-kaon evolution in the flavour basis; broadcasts over ``t``."""
    m = mass_eigenvectors(c.epsilon)
    minv = np.linalg.inv(m)
    return np.einsum("ax,...x,xb->...ab", m, _decay_factors(t, c), minv)


@dataclass(frozen=True)
class SingleKaonAmplitude:
    """Coefficients of ``|K_S>`` and ``|K_L>`` at ``time``.

    The mass eigenstates are not orthogonal when ``epsilon`` has a real
    part, so norms go through :meth:`flavor_amplitudes`.
    """

    a_S: complex
    a_L: complex
    time: float
    epsilon: complex = 0j

    def flavor_amplitudes(self) -> np.ndarray:
        return mass_eigenvectors(self.epsilon) @ np.array([self.a_S, self.a_L])

    @property
    def norm_sq(self) -> float:
        amp = self.flavor_amplitudes()
        return float(np.vdot(amp, amp).real)


def evolve_single(initial: Flavor | str, t: float, c: KaonConstants) -> SingleKaonAmplitude:
    initial = Flavor.parse(initial)
    start = np.zeros(2, dtype=complex)
    start[initial] = 1
    coeffs = np.linalg.solve(mass_eigenvectors(c.epsilon), start) * _decay_factors(t, c)
    return SingleKaonAmplitude(complex(coeffs[0]), complex(coeffs[1]), float(t), c.epsilon)


def oscillation_probabilities(initial: Flavor | str, t: float, c: KaonConstants) -> tuple[float, float, float]:
    """``(p_K0, p_K0bar, p_decayed)`` at time ``t`` for a kaon born with flavour ``initial``."""
    amp = evolve_single(initial, t, c).flavor_amplitudes()
    p_k0, p_k0bar = (float(abs(a) ** 2) for a in amp)
    # clamp round-off at t = 0
    return p_k0, p_k0bar, max(1.0 - p_k0 - p_k0bar, 0.0)


# --- entangled pairs ---------------------------------------------------------

# (|K0 K0bar> - |K0bar K0>)/sqrt(2) as a matrix psi[f_left, f_right]
_PSI_MINUS_FLAVOR = np.array([[0, 1], [-1, 0]], dtype=complex) / math.sqrt(2)


@dataclass(frozen=True)
class KaonPairState:
    """Antisymmetric kaon pair with each side evolved to its own proper time.

    ``amplitudes[x, y]`` is the coefficient of ``|x>_left |y>_right`` with
    x, y running over (K_S, K_L).
    """

    amplitudes: np.ndarray
    t_left: float
    t_right: float
    epsilon: complex = 0j

    def flavor_amplitudes(self) -> np.ndarray:
        m = mass_eigenvectors(self.epsilon)
        return m @ self.amplitudes @ m.T

    @property
    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.flavor_amplitudes()) ** 2))


def evolve_pair(t_left: float, t_right: float, c: KaonConstants) -> KaonPairState:
    m = mass_eigenvectors(c.epsilon)
    minv = np.linalg.inv(m)
    start = minv @ _PSI_MINUS_FLAVOR @ minv.T
    dl, dr = _decay_factors(t_left, c), _decay_factors(t_right, c)
    amps = dl[:, None] * start * dr[None, :]
    amps.setflags(write=False)
    return KaonPairState(amps, float(t_left), float(t_right), c.epsilon)


@dataclass(frozen=True)
class ActiveQuestion:
    """"Are you, at proper time ``time``, in flavour ``target`` or not?\""""

    target: Flavor
    time: float

    def __post_init__(self):
        object.__setattr__(self, "target", Flavor.parse(self.target))
        t = float(self.time)
        if not math.isfinite(t) or t < 0:
            raise InvalidTimeError(f"question time must be finite and >= 0, got {self.time}")
        object.__setattr__(self, "time", t)


def _marginal_yes(flavor: Flavor, t: float, c: KaonConstants, side: str) -> float:
    # The partner's evolution (decay products included) is trace preserving,
    # so a one-sided probability can be read off with the partner kept at t=0.
    pair = evolve_pair(t, 0.0, c) if side == "left" else evolve_pair(0.0, t, c)
    amp = pair.flavor_amplitudes()
    row = amp[flavor, :] if side == "left" else amp[:, flavor]
    return float(np.sum(np.abs(row) ** 2))


def _check_consistent(pair: KaonPairState, q_left: ActiveQuestion, q_right: ActiveQuestion) -> None:
    if not (math.isclose(pair.t_left, q_left.time, abs_tol=1e-12)
            and math.isclose(pair.t_right, q_right.time, abs_tol=1e-12)):
        raise InvalidInputError(
            f"question times ({q_left.time}, {q_right.time}) do not match pair times "
            f"({pair.t_left}, {pair.t_right})"
        )


def active_strangeness_joint(
    pair: KaonPairState, q_left: ActiveQuestion, q_right: ActiveQuestion, c: KaonConstants
) -> np.ndarray:
    """Joint probabilities ``[[yes-yes, yes-no], [no-yes, no-no]]`` of two active questions.

    Nothing is post-selected: the four entries sum to one, decays before the
    question time counting as "no".
    """
    _check_consistent(pair, q_left, q_right)
    amp = pair.flavor_amplitudes()
    p_yy = float(abs(amp[q_left.target, q_right.target]) ** 2)
    p_l = _marginal_yes(q_left.target, q_left.time, c, "left")
    p_r = _marginal_yes(q_right.target, q_right.time, c, "right")
    p_yn = max(p_l - p_yy, 0.0)
    p_ny = max(p_r - p_yy, 0.0)
    return np.array([[p_yy, p_yn], [p_ny, max(1.0 - p_yy - p_yn - p_ny, 0.0)]])


def strangeness_table(q_left: ActiveQuestion, q_right: ActiveQuestion, c: KaonConstants) -> np.ndarray:
    """:func:`active_strangeness_joint` with the pair evolved to the question times."""
    return active_strangeness_joint(evolve_pair(q_left.time, q_right.time, c), q_left, q_right, c)


def strangeness_outcomes(t_left: float, t_right: float, c: KaonConstants) -> np.ndarray:
    """Diagnostic three-outcome table over {K0, K0bar, decayed} on each side."""
    amp = evolve_pair(t_left, t_right, c).flavor_amplitudes()
    out = np.zeros((3, 3))
    out[:2, :2] = np.abs(amp) ** 2
    for f in Flavor:
        out[f, 2] = max(_marginal_yes(f, t_left, c, "left") - out[f, :2].sum(), 0.0)
        out[2, f] = max(_marginal_yes(f, t_right, c, "right") - out[:2, f].sum(), 0.0)
    out[2, 2] = max(1.0 - out.sum(), 0.0)
    return out


def correlation_grid(
    c: KaonConstants,
    flavor_left: Flavor | str,
    flavor_right: Flavor | str,
    times_left,
    times_right,
) -> np.ndarray:
    """``E(t_l, t_r)`` for yes=+1 / no=-1 on every pair of grid times.

    Vectorised equivalent of building a :func:`active_strangeness_joint`
    table per grid point and taking ``sum k l P``; which simplifies to
    ``1 - 2 P_left - 2 P_right + 4 P_yes,yes``.
    """
    fl, fr = Flavor.parse(flavor_left), Flavor.parse(flavor_right)
    ul = propagator(times_left, c)
    ur = propagator(times_right, c)
    # amp[i, j] = (U_i psi U_j^T)[fl, fr]
    left_rows = np.einsum("ib,bc->ic", ul[:, fl, :], _PSI_MINUS_FLAVOR)
    p_yy = np.abs(np.einsum("ic,jc->ij", left_rows, ur[:, fr, :])) ** 2
    p_l = np.sum(np.abs(left_rows) ** 2, axis=1)
    right_cols = np.einsum("bc,jc->jb", _PSI_MINUS_FLAVOR, ur[:, fr, :])
    p_r = np.sum(np.abs(right_cols) ** 2, axis=1)
    return 1.0 - 2.0 * p_l[:, None] - 2.0 * p_r[None, :] + 4.0 * p_yy


def distance_from_time(t: float, beta_gamma: float, time_unit_seconds: float) -> float:
    """Lab distance in metres travelled in proper time ``t`` at momentum/mass ``beta_gamma``."""
    return float(t) * time_unit_seconds * beta_gamma * 299_792_458.0
