"""Weak hyperon decay as an imperfect spin measurement.

A decaying spin-s hyperon is modelled by two Kraus operators
``K+- = sqrt(w+-) P(w1 +- w2)`` where ``P(v)`` is the pure state with Bloch
vector ``v`` (Gell-Mann normalisation of :mod:`decaybell.quantum`) and
``w+- = (1 +- alpha)/2``. For spin 1/2, ``w1 = 0`` and ``w2`` is the unit
vector along the daughter momentum, so the decay measures the spin along the
momentum with analysing power ``alpha``.

For a Lambda / anti-Lambda pair produced in the singlet state the joint
momentum distribution is ``(1 - aL aLb nL.nLb) / (4 pi)^2``. The witness
``W = (1/3)(1 + sum_i s_i x s_i)`` evaluates to ``1/3 - aL aLb`` on the
measured data and is non-negative for every separable state; dividing the
data by ``aL aLb`` would break that guarantee, so it is never done here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import quantum as qc
from ._streams import CHUNK_SIZE, generate
from .errors import InvalidInputError

FOUR_PI = 4.0 * math.pi
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class HyperonSpecies:
    spin: Fraction
    alpha: float
    omega1: np.ndarray
    omega2: np.ndarray

    def __post_init__(self):
        spin = Fraction(self.spin).limit_denominator(1000)
        if spin <= 0 or (2 * spin).denominator != 1:
            raise InvalidInputError(f"spin must be a positive multiple of 1/2, got {self.spin}")
        object.__setattr__(self, "spin", spin)
        alpha = float(self.alpha)
        if not -1.0 <= alpha <= 1.0:
            raise InvalidInputError(f"decay asymmetry alpha must lie in [-1, 1], got {alpha}")
        object.__setattr__(self, "alpha", alpha)
        n = self.dim**2 - 1
        w1 = np.array(self.omega1, dtype=float).reshape(-1)
        w2 = np.array(self.omega2, dtype=float).reshape(-1)
        if w1.size != n or w2.size != n:
            raise InvalidInputError(f"spin {spin} needs Bloch vectors of length {n}")
        if abs(w1 @ w2) > 1e-12:
            raise InvalidInputError("omega1 and omega2 must be orthogonal")
        length = float(spin * (2 * spin + 1))
        for v in (w1 + w2, w1 - w2):
            if abs(v @ v - length) > 1e-10:
                raise InvalidInputError(f"|omega1 +- omega2|^2 must equal s(2s+1) = {length}")
        if spin == Fraction(1, 2) and np.any(np.abs(w1) > 1e-12):
            raise InvalidInputError("omega1 must vanish for spin 1/2")
        for v in (w1, w2):
            v.setflags(write=False)
        object.__setattr__(self, "omega1", w1)
        object.__setattr__(self, "omega2", w2)

    @classmethod
    def spin_half(cls, alpha: float, direction: Sequence[float] = (0.0, 0.0, 1.0)) -> HyperonSpecies:
        return cls(Fraction(1, 2), alpha, np.zeros(3), qc.unit(direction))

    @property
    def dim(self) -> int:
        return int(2 * self.spin + 1)

    @property
    def omega_plus(self) -> float:
        return (1.0 + self.alpha) / 2.0

    @property
    def omega_minus(self) -> float:
        return (1.0 - self.alpha) / 2.0

    def oriented(self, direction: Sequence[float]) -> HyperonSpecies:
        """Copy with ``omega2`` turned along ``direction`` (spin 1/2 only)."""
        if self.spin != Fraction(1, 2):
            raise NotImplementedError("orientation along a momentum direction is only defined for spin 1/2")
        n = np.asarray(direction, dtype=float)
        return HyperonSpecies(self.spin, self.alpha, self.omega1, n / np.linalg.norm(n) * np.linalg.norm(self.omega2))


def _pure_projector(bloch: np.ndarray) -> np.ndarray:
    p = qc.density_from_bloch(bloch)
    if np.max(np.abs(p @ p - p)) > 1e-10 or np.linalg.eigvalsh(p).min() < -1e-10:
        raise InvalidInputError("omega1 +- omega2 is not the Bloch vector of a pure state")
    return p


def kraus_from_species(h: HyperonSpecies) -> qc.KrausChannel:
    """``{sqrt(w+) P(w1+w2), sqrt(w-) P(w1-w2)}``."""
    k_plus = math.sqrt(h.omega_plus) * _pure_projector(h.omega1 + h.omega2)
    k_minus = math.sqrt(h.omega_minus) * _pure_projector(h.omega1 - h.omega2)
    return qc.KrausChannel((k_plus, k_minus))


@dataclass(frozen=True)
class DecayDirection:
    theta: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= math.pi:
            raise InvalidInputError(f"theta must lie in [0, pi], got {self.theta}")
        if not 0.0 <= self.phi < TWO_PI:
            raise InvalidInputError(f"phi must lie in [0, 2 pi), got {self.phi}")

    @property
    def vector(self) -> np.ndarray:
        return angles_to_vectors(np.array(self.theta), np.array(self.phi))

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> DecayDirection:
        theta, phi = vectors_to_angles(np.asarray(v, dtype=float))
        return cls(float(theta), float(phi))


def angles_to_vectors(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def vectors_to_angles(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    v = v / np.linalg.norm(v, axis=-1, keepdims=True)
    theta = np.arccos(np.clip(v[..., 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(v[..., 1], v[..., 0]), TWO_PI)
    phi = np.where(phi >= TWO_PI, phi - TWO_PI, phi)
    return theta, phi


def _as_vector(d) -> np.ndarray:
    if isinstance(d, DecayDirection):
        return d.vector
    return qc.unit(d, atol=1e-10)


def single_angular_pdf(rho_spin: np.ndarray, h: HyperonSpecies, direction) -> float:
    """Solid-angle density of the daughter momentum for a hyperon in spin state ``rho_spin``."""
    rho_spin = np.asarray(rho_spin, dtype=complex)
    if rho_spin.shape != (h.dim, h.dim):
        raise InvalidInputError(f"spin state must be {h.dim}x{h.dim} for spin {h.spin}")
    if abs(np.trace(rho_spin).real - 1) > qc.get_tolerance():
        raise InvalidInputError("spin state must be normalised")
    channel = kraus_from_species(h.oriented(_as_vector(direction)))
    weight = np.trace(qc.apply_channel(channel, rho_spin)).real
    # the raw weight integrates to 4 pi / d over the sphere
    return float(h.dim * weight / FOUR_PI)


def _check_alpha(*alphas: float) -> None:
    for a in alphas:
        if not -1.0 <= a <= 1.0:
            raise InvalidInputError(f"decay asymmetry must lie in [-1, 1], got {a}")


def joint_angular_pdf(alpha_L: float, alpha_Lbar: float, n_L, n_Lbar) -> float:
    """``(1 - aL aLb nL.nLb) / (4 pi)^2`` for a singlet-produced pair."""
    _check_alpha(alpha_L, alpha_Lbar)
    return float((1.0 - alpha_L * alpha_Lbar * _as_vector(n_L) @ _as_vector(n_Lbar)) / FOUR_PI**2)


def joint_angular_pdf_from_state(
    rho_pair: np.ndarray, species_L: HyperonSpecies, species_Lbar: HyperonSpecies, n_L, n_Lbar
) -> float:
    """Joint density computed by pushing ``rho_pair`` through the tensor product of both decay channels."""
    channel = kraus_from_species(species_L.oriented(_as_vector(n_L))).tensor(
        kraus_from_species(species_Lbar.oriented(_as_vector(n_Lbar)))
    )
    rho_pair = qc.as_density(rho_pair)
    weight = np.trace(qc.apply_channel(channel, rho_pair)).real
    return float(species_L.dim * species_Lbar.dim * weight / FOUR_PI**2)


# --- event generation --------------------------------------------------------


@dataclass(frozen=True)
class EventBatch:
    """Decay directions of hyperon / anti-hyperon daughters, stored as angles.

    Angles are the canonical form: unit vectors are always recomputed from
    them, so a batch re-read from disk gives bit-identical estimates.
    """

    theta_L: np.ndarray
    phi_L: np.ndarray
    theta_Lbar: np.ndarray
    phi_Lbar: np.ndarray
    seed: int | None = None
    alpha_product: float | None = None

    def __post_init__(self):
        cols = [np.array(c, dtype=float).reshape(-1) for c in (self.theta_L, self.phi_L, self.theta_Lbar, self.phi_Lbar)]
        n = cols[0].size
        if n == 0 or any(c.size != n for c in cols):
            raise InvalidInputError("event batch must be non-empty with equal-length columns")
        for th, ph in (cols[:2], cols[2:]):
            if np.any((th < 0) | (th > math.pi)) or np.any((ph < 0) | (ph >= TWO_PI)):
                raise InvalidInputError("event angles out of range")
        for name, c in zip(("theta_L", "phi_L", "theta_Lbar", "phi_Lbar"), cols):
            c.setflags(write=False)
            object.__setattr__(self, name, c)

    def __len__(self) -> int:
        return self.theta_L.size

    @property
    def n_L(self) -> np.ndarray:
        return angles_to_vectors(self.theta_L, self.phi_L)

    @property
    def n_Lbar(self) -> np.ndarray:
        return angles_to_vectors(self.theta_Lbar, self.phi_Lbar)


def _orthonormal_frame(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # branchless basis (Duff et al. 2017)
    x, y, z = n[:, 0], n[:, 1], n[:, 2]
    sign = np.where(z >= 0, 1.0, -1.0)
    a = -1.0 / (sign + z)
    b = x * y * a
    e1 = np.stack([1.0 + sign * x * x * a, sign * b, -sign * x], axis=1)
    e2 = np.stack([b, sign + y * y * a, -y], axis=1)
    return e1, e2


def linear_cosine_inverse_cdf(u: np.ndarray, a: float) -> np.ndarray:
    """Invert the CDF of ``chi`` on [-1, 1] with density ``(1 - a chi) / 2``.

    Root of ``a chi^2 - 2 chi - (2 + a - 4u) = 0`` in the cancellation-free
    form, which also covers ``a = 0``.
    """
    disc = (1.0 + a) ** 2 - 4.0 * a * u
    return -(2.0 + a - 4.0 * u) / (1.0 + np.sqrt(np.maximum(disc, 0.0)))


def _tilt_about(axis: np.ndarray, a: float, u_cos: np.ndarray, u_az: np.ndarray) -> np.ndarray:
    """Unit vectors whose cosine with ``axis`` has density ``(1 - a chi)/2``; azimuth uniform."""
    chi = linear_cosine_inverse_cdf(u_cos, a)
    psi = TWO_PI * u_az
    e1, e2 = _orthonormal_frame(axis)
    sin_chi = np.sqrt(np.maximum(1.0 - chi * chi, 0.0))
    return chi[:, None] * axis + sin_chi[:, None] * (np.cos(psi)[:, None] * e1 + np.sin(psi)[:, None] * e2)


def _uniform_directions(u_cos: np.ndarray, u_az: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    theta = np.arccos(1.0 - 2.0 * u_cos)
    phi = TWO_PI * u_az
    return theta, phi


def sample_events(
    alpha_L: float, alpha_Lbar: float, count: int, seed: int = 42, workers: int = 1, chunk_size: int = CHUNK_SIZE
) -> EventBatch:
    """Draw ``count`` decay pairs from the singlet joint distribution."""
    _check_alpha(alpha_L, alpha_Lbar)
    if count < 1:
        raise InvalidInputError("event count must be at least 1")
    a = alpha_L * alpha_Lbar

    def draw(rng: np.random.Generator, n: int):
        u = rng.random((4, n))
        theta_l, phi_l = _uniform_directions(u[0], u[1])
        m = _tilt_about(angles_to_vectors(theta_l, phi_l), a, u[2], u[3])
        theta_b, phi_b = vectors_to_angles(m)
        return theta_l, phi_l, theta_b, phi_b

    cols = generate(seed, count, draw, workers=workers, chunk_size=chunk_size)
    return EventBatch(*cols, seed=seed, alpha_product=a)


def sample_separable_events(
    alpha_L: float, alpha_Lbar: float, count: int, seed: int = 42, workers: int = 1, chunk_size: int = CHUNK_SIZE
) -> EventBatch:
    """Null model: classically anti-aligned product spin states in random directions.

    Each pair is prepared as ``|u><u| x |-u><-u|`` with ``u`` uniform on the
    sphere, then both decay independently. The state is separable but the
    decay directions are correlated.
    """
    _check_alpha(alpha_L, alpha_Lbar)
    if count < 1:
        raise InvalidInputError("event count must be at least 1")

    def draw(rng: np.random.Generator, n: int):
        u = rng.random((6, n))
        spin = angles_to_vectors(*_uniform_directions(u[0], u[1]))
        # density (1 + alpha n.s)/2 in the cosine with s
        n_l = _tilt_about(spin, -alpha_L, u[2], u[3])
        n_b = _tilt_about(-spin, -alpha_Lbar, u[4], u[5])
        return (*vectors_to_angles(n_l), *vectors_to_angles(n_b))

    cols = generate(seed, count, draw, workers=workers, chunk_size=chunk_size)
    return EventBatch(*cols, seed=seed, alpha_product=None)


# --- estimators --------------------------------------------------------------


@dataclass(frozen=True)
class WitnessReport:
    witness_value: float
    standard_error: float
    entangled: bool
    count: int = 0

    def to_dict(self) -> dict:
        return {
            "witness_value": self.witness_value,
            "standard_error": self.standard_error,
            "entangled": self.entangled,
            "count": self.count,
        }


def spin_correlation_matrix(batch: EventBatch) -> np.ndarray:
    """Estimate of ``alpha_L alpha_Lbar <s_i x s_j>`` as ``9 <n_i m_j>``."""
    return 9.0 * (batch.n_L.T @ batch.n_Lbar) / len(batch)


def witness_from_events(batch: EventBatch) -> WitnessReport:
    """Evaluate ``(1/3)(1 + sum_i 9 <n_i m_i>)``; entangled when below zero by 3 standard errors."""
    if len(batch) == 0:
        raise InvalidInputError("empty event batch")
    prod = batch.n_L * batch.n_Lbar
    n = prod.shape[0]
    value = (1.0 + 9.0 * prod.mean(axis=0).sum()) / 3.0
    if n > 1:
        se = 3.0 * math.sqrt(float(prod.var(axis=0, ddof=1).sum()) / n)
    else:
        se = math.inf
    return WitnessReport(float(value), se, bool(value + 3.0 * se < 0.0), n)


def tagged_polarization(batch: EventBatch, axis: Sequence[float] = (0.0, 0.0, 1.0)) -> tuple[float, float]:
    """Least-squares slope of ``nL.axis`` on ``nLbar.axis`` and its standard error.

    Expected value ``-alpha_L alpha_Lbar / 3``: one daughter direction tags
    the other hyperon as if polarised along it.
    """
    axis = qc.unit(axis)
    x = batch.n_Lbar @ axis
    y = batch.n_L @ axis
    xc = x - x.mean()
    slope = float(xc @ (y - y.mean()) / (xc @ xc))
    resid = y - y.mean() - slope * xc
    se = math.sqrt(float(resid @ resid) / (len(x) - 2) / float(xc @ xc)) if len(x) > 2 else math.inf
    return slope, se


def hyperon_chsh_bound(alpha_L: float, alpha_Lbar: float) -> tuple[float, bool]:
    """Largest CHSH value reachable from singlet decay data: ``2 sqrt 2 aL aLb``.

    ``violated`` is ``aL aLb > 1/sqrt 2``. Even a violation would not be a
    conclusive Bell test: the decay picks its own quantisation axis, so the
    measurement is passive.
    """
    _check_alpha(alpha_L, alpha_Lbar)
    product = alpha_L * alpha_Lbar
    return 2.0 * math.sqrt(2.0) * product, bool(product > 1.0 / math.sqrt(2.0))


# --- persistence -------------------------------------------------------------

EVENT_COLUMNS = ("theta_L", "phi_L", "theta_Lbar", "phi_Lbar")


def write_events(batch: EventBatch, path) -> None:
    header = f"# seed={batch.seed},alpha_product={batch.alpha_product!r},count={len(batch)}\n" + ",".join(EVENT_COLUMNS)
    data = np.column_stack([batch.theta_L, batch.phi_L, batch.theta_Lbar, batch.phi_Lbar])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=header, comments="")


def read_events(path) -> EventBatch:
    with open(path) as fh:
        meta_line = fh.readline().strip()
        columns = fh.readline().strip().split(",")
        if tuple(columns) != EVENT_COLUMNS or not meta_line.startswith("#"):
            raise InvalidInputError(f"{path} is not an event file")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    meta = dict(item.split("=", 1) for item in meta_line.lstrip("# ").split(","))
    seed = None if meta.get("seed") in (None, "None") else int(meta["seed"])
    ap = None if meta.get("alpha_product") in (None, "None") else float(meta["alpha_product"])
    if data.shape[0] != int(meta.get("count", data.shape[0])):
        raise InvalidInputError(f"{path}: row count does not match header")
    return EventBatch(data[:, 0], data[:, 1], data[:, 2], data[:, 3], seed=seed, alpha_product=ap)
