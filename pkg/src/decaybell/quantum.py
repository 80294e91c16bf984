"""Dense state and operator primitives.

States are plain numpy arrays: kets are 1-d complex vectors, density
operators are square complex matrices. Sub-normalised states are allowed
everywhere; a missing norm is read as accumulated decay probability.

The generalised Gell-Mann basis is normalised so that
``Tr(G_i G_j) = 2 delta_ij``, which makes the d=2 basis the Pauli triple
and the Bloch map ``rho = (1/d)(1 + b.G)`` the textbook one.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .errors import InvalidDimensionError, InvalidInputError

_ATOL = 1e-10


def get_tolerance() -> float:
    return _ATOL


def set_tolerance(atol: float) -> None:
    """Set the package-wide structural tolerance (Hermiticity, positivity, trace)."""
    global _ATOL
    if not atol > 0:
        raise InvalidInputError("tolerance must be positive")
    _ATOL = float(atol)


@contextmanager
def tolerance(atol: float) -> Iterator[None]:
    old = _ATOL
    set_tolerance(atol)
    try:
        yield
    finally:
        set_tolerance(old)


SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SIGMA_X, SIGMA_Y, SIGMA_Z)
for _m in PAULI:
    _m.setflags(write=False)

UP = np.array([1, 0], dtype=complex)
DOWN = np.array([0, 1], dtype=complex)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def singlet() -> np.ndarray:
    """The antisymmetric Bell state (|up,down> - |down,up>)/sqrt(2)."""
    return (np.kron(UP, DOWN) - np.kron(DOWN, UP)) / np.sqrt(2)


def projector(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


# --- validation -------------------------------------------------------------


def hermiticity_residual(a: np.ndarray) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0


def is_hermitian(a: np.ndarray, atol: float | None = None) -> bool:
    atol = _ATOL if atol is None else atol
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and hermiticity_residual(a) <= atol


def check_state_vector(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1 or psi.size == 0:
        raise InvalidInputError("state vector must be a non-empty 1-d array")
    if not np.all(np.isfinite(psi)):
        raise InvalidInputError("state vector has non-finite amplitudes")
    if np.vdot(psi, psi).real > 1 + _ATOL:
        raise InvalidInputError("state vector norm exceeds 1")
    return psi


def check_density(rho: np.ndarray) -> np.ndarray:
    """Validate a (possibly sub-normalised) density operator and return it as a complex array.

    Raises InvalidInputError unless ``rho`` is square, Hermitian, positive
    semidefinite and has trace in [0, 1], all to the global tolerance.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] == 0:
        raise InvalidInputError(f"density operator must be square, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise InvalidInputError("density operator has non-finite entries")
    if hermiticity_residual(rho) > _ATOL:
        raise InvalidInputError("density operator is not Hermitian")
    if np.linalg.eigvalsh(rho).min() < -_ATOL:
        raise InvalidInputError("density operator is not positive semidefinite")
    tr = np.trace(rho).real
    if tr < -_ATOL or tr > 1 + _ATOL:
        raise InvalidInputError(f"density operator trace {tr} outside [0, 1]")
    return rho


def as_density(state: np.ndarray) -> np.ndarray:
    """Accept either a ket or a density matrix and return a validated density matrix."""
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        return projector(check_state_vector(state))
    return check_density(state)


# --- Gell-Mann basis and Bloch vectors --------------------------------------


@lru_cache(maxsize=16)
def _gellmann(d: int) -> tuple[np.ndarray, ...]:
    sym, asym, diag = [], [], []
    for j in range(d):
        for k in range(j + 1, d):
            s = np.zeros((d, d), dtype=complex)
            s[j, k] = s[k, j] = 1
            sym.append(_frozen(s))
            a = np.zeros((d, d), dtype=complex)
            a[j, k] = -1j
            a[k, j] = 1j
            asym.append(_frozen(a))
    for l in range(1, d):
        entries = [1.0] * l + [-float(l)] + [0.0] * (d - l - 1)
        diag.append(_frozen(np.sqrt(2.0 / (l * (l + 1))) * np.diag(entries)))
    return tuple(sym + asym + diag)


def gellmann_basis(d: int) -> list[np.ndarray]:
    """Generalised Gell-Mann matrices for dimension ``d``.

    Ordering is symmetric, antisymmetric, then diagonal elements, so ``d=2``
    returns ``[sigma_x, sigma_y, sigma_z]``. Every element is Hermitian,
    traceless, and ``Tr(G_i G_j) = 2 delta_ij``.
    """
    if not isinstance(d, (int, np.integer)) or d < 2:
        raise InvalidDimensionError(f"Gell-Mann basis needs d >= 2, got {d!r}")
    return list(_gellmann(int(d)))


@dataclass(frozen=True)
class BlochExpansion:
    """Real coefficient vector ``b`` of ``rho = (1/d)(1 + b.G)``."""

    d: int
    vector: np.ndarray

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d < 2:
            raise InvalidDimensionError(f"Bloch expansion needs d >= 2, got {self.d!r}")
        v = np.array(self.vector, dtype=float).reshape(-1)
        if v.size != self.d**2 - 1:
            raise InvalidInputError(f"Bloch vector for d={self.d} needs {self.d**2 - 1} entries, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("Bloch vector has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)

    @property
    def pure_length(self) -> float:
        """Length of the Bloch vector of any pure state in this dimension."""
        return float(np.sqrt(self.d * (self.d - 1) / 2))


def density_from_bloch(b: BlochExpansion | Sequence[float], d: int | None = None) -> np.ndarray:
    if not isinstance(b, BlochExpansion):
        vec = np.asarray(b, dtype=float).reshape(-1)
        if d is None:
            d = int(round(np.sqrt(vec.size + 1)))
        b = BlochExpansion(d, vec)
    basis = _gellmann(b.d)
    rho = np.eye(b.d, dtype=complex)
    for coeff, g in zip(b.vector, basis):
        rho = rho + coeff * g
    return rho / b.d


def bloch_from_density(rho: np.ndarray) -> BlochExpansion:
    """Inverse of :func:`density_from_bloch` for unit-trace operators."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {rho.shape}")
    d = rho.shape[0]
    if d < 2:
        raise InvalidDimensionError("Bloch expansion needs d >= 2")
    if abs(np.trace(rho) - 1) > _ATOL:
        raise InvalidInputError("Bloch expansion requires a unit-trace operator")
    b = [(d / 2) * np.trace(g @ rho).real for g in _gellmann(d)]
    return BlochExpansion(d, np.array(b))


# --- composition ------------------------------------------------------------


def tensor(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of kets or operators, left to right."""
    if not ops:
        raise InvalidInputError("tensor needs at least one factor")
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op, dtype=complex))
    return out


def partial_trace(rho: np.ndarray, dims: tuple[int, int], trace_out: str = "B") -> np.ndarray:
    """Trace out subsystem ``"A"`` or ``"B"`` of a bipartite operator on ``dims = (dA, dB)``."""
    rho = np.asarray(rho, dtype=complex)
    da, db = (int(x) for x in dims)
    if da < 1 or db < 1 or rho.shape != (da * db, da * db):
        raise InvalidInputError(f"operator of shape {rho.shape} does not factor as {da}x{db}")
    r = rho.reshape(da, db, da, db)
    if trace_out == "B":
        return np.einsum("ijkj->ik", r)
    if trace_out == "A":
        return np.einsum("ijil->jl", r)
    raise InvalidInputError(f"trace_out must be 'A' or 'B', got {trace_out!r}")


# --- observables ------------------------------------------------------------


def spin_observable(direction: Sequence[float]) -> np.ndarray:
    """``n.sigma`` for a 3-vector ``n`` (not necessarily unit length)."""
    n = np.asarray(direction, dtype=float).reshape(-1)
    if n.size != 3:
        raise InvalidInputError("spin direction must be a 3-vector")
    return n[0] * SIGMA_X + n[1] * SIGMA_Y + n[2] * SIGMA_Z


def unit(v: Sequence[float], atol: float = 1e-12) -> np.ndarray:
    """Return ``v`` as a float array after checking it has unit length."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if abs(np.linalg.norm(v) - 1) > atol:
        raise InvalidInputError(f"direction {v} is not normalised")
    return v


def is_dichotomic(obs: np.ndarray, atol: float | None = None) -> bool:
    atol = _ATOL if atol is None else atol
    obs = np.asarray(obs, dtype=complex)
    return is_hermitian(obs, atol) and bool(np.allclose(obs @ obs, np.eye(obs.shape[0]), atol=atol))


def expectation(obs: np.ndarray, state: np.ndarray) -> float:
    """``Tr(O rho)`` for Hermitian ``O``; ``state`` may be a ket or a density matrix."""
    obs = np.asarray(obs, dtype=complex)
    if not is_hermitian(obs):
        raise InvalidInputError("observable must be Hermitian")
    state = np.asarray(state, dtype=complex)
    if state.shape[0] != obs.shape[0]:
        raise InvalidInputError(f"observable dim {obs.shape[0]} does not match state dim {state.shape[0]}")
    if state.ndim == 1:
        return float(np.vdot(state, obs @ state).real)
    return float(np.trace(obs @ state).real)


# --- channels ---------------------------------------------------------------


@dataclass(frozen=True)
class KrausChannel:
    """Completely positive, trace non-increasing map ``rho -> sum K rho K^dagger``.

    ``sum K^dagger K`` may be strictly below the identity: the deficit is the
    probability that the process removes the state altogether.
    """

    operators: tuple[np.ndarray, ...]

    def __post_init__(self):
        ops = tuple(_frozen(k) for k in self.operators)
        if not ops:
            raise InvalidInputError("a Kraus channel needs at least one operator")
        shape = ops[0].shape
        if len(shape) != 2 or any(k.shape != shape for k in ops):
            raise InvalidInputError("Kraus operators must be 2-d and share one shape")
        gram = sum(k.conj().T @ k for k in ops)
        if np.linalg.eigvalsh(gram).max() > 1 + _ATOL:
            raise InvalidInputError("sum of K^dagger K exceeds the identity")
        object.__setattr__(self, "operators", ops)

    @property
    def dim_in(self) -> int:
        return self.operators[0].shape[1]

    @property
    def dim_out(self) -> int:
        return self.operators[0].shape[0]

    def effect(self) -> np.ndarray:
        """``sum K^dagger K``: the operator whose expectation is the survival probability."""
        return sum(k.conj().T @ k for k in self.operators)

    def tensor(self, other: KrausChannel) -> KrausChannel:
        return KrausChannel(tuple(np.kron(a, b) for a in self.operators for b in other.operators))


def apply_channel(channel: KrausChannel, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (channel.dim_in, channel.dim_in):
        raise InvalidInputError(f"channel expects {channel.dim_in}x{channel.dim_in} input, got {rho.shape}")
    out = np.zeros((channel.dim_out, channel.dim_out), dtype=complex)
    for k in channel.operators:
        out += k @ rho @ k.conj().T
    return out
