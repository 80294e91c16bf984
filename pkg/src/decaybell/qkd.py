"""Entanglement-based key distribution with a CHSH security test.

Alice and Bob each measure one of three spin directions on singlet pairs.
Rounds where their directions coincide give anti-correlated outcomes and
become key bits; the other rounds are announced publicly and four of the
setting pairs estimate S. The session counts as secure when S exceeds the
classical bound 2 by more than three standard errors.

The channel is noiseless, so every key error comes from the eavesdropper.
The only attack modelled is intercept-resend on Bob's particle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import quantum as qc
from ._streams import CHUNK_SIZE, generate
from .chsh import CLASSICAL_BOUND
from .errors import InsufficientDataError, InvalidConfigError

ALICE_ANGLES = (0.0, 45.0, 90.0)
BOB_ANGLES = (45.0, 90.0, 135.0)
# (alice index, bob index) for E(n,m), E(n,m'), E(n',m), E(n',m')
CHSH_PAIRS = ((0, 0), (0, 2), (2, 0), (2, 2))


def planar_direction(angle_deg: float) -> np.ndarray:
    a = math.radians(angle_deg)
    return np.array([math.sin(a), 0.0, math.cos(a)])


@dataclass(frozen=True)
class Eavesdropper:
    """``kind`` is ``"none"`` or ``"intercept-resend"``.

    For intercept-resend, ``direction=None`` means a fresh uniformly random
    measurement axis for every pair; ``probability`` is the fraction of
    pairs intercepted.
    """

    kind: str = "none"
    direction: np.ndarray | None = None
    probability: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "intercept-resend"):
            raise InvalidConfigError(f"unknown eavesdropper model {self.kind!r}")
        if self.direction is not None:
            d = qc.unit(self.direction, atol=1e-12)
            d.setflags(write=False)
            object.__setattr__(self, "direction", d)
        if not 0.0 <= self.probability <= 1.0:
            raise InvalidConfigError("interception probability must lie in [0, 1]")

    @property
    def active(self) -> bool:
        return self.kind != "none" and self.probability > 0

    def describe(self) -> dict:
        if self.kind == "none":
            return {"kind": "none"}
        return {
            "kind": self.kind,
            "direction": "uniform-random" if self.direction is None else [float(x) for x in self.direction],
            "probability": self.probability,
        }


@dataclass(frozen=True)
class ProtocolConfig:
    pair_count: int
    alice_settings: np.ndarray = field(default_factory=lambda: np.array([planar_direction(a) for a in ALICE_ANGLES]))
    bob_settings: np.ndarray = field(default_factory=lambda: np.array([planar_direction(a) for a in BOB_ANGLES]))
    seed: int = 42
    eve: Eavesdropper = field(default_factory=Eavesdropper)
    chsh_pairs: tuple[tuple[int, int], ...] = CHSH_PAIRS

    def __post_init__(self):
        if int(self.pair_count) < 1:
            raise InvalidConfigError("pair_count must be at least 1")
        a = np.array(self.alice_settings, dtype=float)
        b = np.array(self.bob_settings, dtype=float)
        if a.shape != (3, 3) or b.shape != (3, 3):
            raise InvalidConfigError("each party needs exactly three 3-vector settings")
        if not np.allclose(np.linalg.norm(a, axis=1), 1, atol=1e-12, rtol=0) or not np.allclose(
            np.linalg.norm(b, axis=1), 1, atol=1e-12, rtol=0
        ):
            raise InvalidConfigError("measurement settings must be unit vectors")
        if not self.shared_pairs_of(a, b):
            raise InvalidConfigError("at least one Alice setting must equal one Bob setting")
        if len(self.chsh_pairs) != 4:
            raise InvalidConfigError("CHSH needs four setting pairs")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "alice_settings", a)
        object.__setattr__(self, "bob_settings", b)
        object.__setattr__(self, "pair_count", int(self.pair_count))

    @staticmethod
    def shared_pairs_of(a: np.ndarray, b: np.ndarray) -> list[tuple[int, int]]:
        return [(i, j) for i in range(3) for j in range(3) if np.array_equal(a[i], b[j])]

    @property
    def shared_pairs(self) -> list[tuple[int, int]]:
        return self.shared_pairs_of(self.alice_settings, self.bob_settings)

    @property
    def match_matrix(self) -> np.ndarray:
        m = np.zeros((3, 3), dtype=bool)
        for i, j in self.shared_pairs:
            m[i, j] = True
        return m


@dataclass(frozen=True)
class SessionTranscript:
    a_choice: np.ndarray
    b_choice: np.ndarray
    a_out: np.ndarray
    b_out: np.ndarray

    def __len__(self) -> int:
        return self.a_choice.size

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "a_choice", "b_choice", "a_out", "b_out"])
            for i, row in enumerate(zip(self.a_choice, self.b_choice, self.a_out, self.b_out)):
                w.writerow([i, *map(int, row)])


@dataclass(frozen=True)
class SecurityReport:
    s_estimate: float
    s_stderr: float
    qber: float
    sifted_length: int
    secure: bool

    def to_dict(self) -> dict:
        def num(x):
            return None if not math.isfinite(x) else float(x)

        return {
            "s_estimate": num(self.s_estimate),
            "s_stderr": num(self.s_stderr),
            "qber": float(self.qber),
            "sifted_length": int(self.sifted_length),
            "secure": bool(self.secure),
        }


def _uniform_sphere(rng: np.random.Generator, n: int) -> np.ndarray:
    z = 1.0 - 2.0 * rng.random(n)
    phi = 2.0 * math.pi * rng.random(n)
    r = np.sqrt(1.0 - z * z)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _sample_rounds(cfg: ProtocolConfig, workers: int = 1, chunk_size: int = CHUNK_SIZE) -> SessionTranscript:
    eve = cfg.eve
    alice, bob = cfg.alice_settings, cfg.bob_settings

    def draw(rng: np.random.Generator, n: int):
        a_choice = rng.integers(0, 3, n)
        b_choice = rng.integers(0, 3, n)
        u = rng.random((3, n))
        a = alice[a_choice]
        b = bob[b_choice]
        # singlet: Alice uniform, Bob anti-correlated with probability (1 + a.b)/2
        k = np.where(u[0] < 0.5, 1, -1)
        ab = np.einsum("ij,ij->i", a, b)
        l_clean = np.where(u[1] < (1.0 + ab) / 2.0, -k, k)
        if eve.active:
            hit = rng.random(n) < eve.probability
            e = np.broadcast_to(eve.direction, (n, 3)) if eve.direction is not None else _uniform_sphere(rng, n)
            # Eve measures Bob's particle along e (outcome r uniform), Alice's
            # collapses to -r e, Bob receives a fresh spin along r e
            r = np.where(rng.random(n) < 0.5, 1, -1)
            ae = np.einsum("ij,ij->i", a, e)
            be = np.einsum("ij,ij->i", b, e)
            k_eve = np.where(u[0] < (1.0 - r * ae) / 2.0, 1, -1)
            l_eve = np.where(u[2] < (1.0 + r * be) / 2.0, 1, -1)
            k = np.where(hit, k_eve, k)
            l_out = np.where(hit, l_eve, l_clean)
        else:
            l_out = l_clean
        return (a_choice.astype(np.int8), b_choice.astype(np.int8), k.astype(np.int8), l_out.astype(np.int8))

    cols = generate(cfg.seed, cfg.pair_count, draw, workers=workers, chunk_size=chunk_size)
    return SessionTranscript(*cols)


def _chsh_from_public(
    a_choice: np.ndarray, b_choice: np.ndarray, a_out: np.ndarray, b_out: np.ndarray, pairs
) -> tuple[float, float]:
    s, var = 0.0, 0.0
    for sign, (i, j) in zip((1, -1, 1, 1), pairs):
        sel = (a_choice == i) & (b_choice == j)
        n = int(sel.sum())
        if n == 0:
            raise InsufficientDataError(f"no rounds for setting pair ({i}, {j})")
        e = float(np.mean(a_out[sel].astype(float) * b_out[sel]))
        s += sign * e
        var += (1.0 - e * e) / n if n > 1 else 1.0
    return abs(s), math.sqrt(var)


def estimate_chsh(transcript: SessionTranscript, cfg: ProtocolConfig) -> tuple[float, float]:
    """``|S|`` from the four designated setting pairs and its standard error."""
    return _chsh_from_public(transcript.a_choice, transcript.b_choice, transcript.a_out, transcript.b_out, cfg.chsh_pairs)


def _matched(a_choice, b_choice, cfg: ProtocolConfig) -> np.ndarray:
    return np.flatnonzero(cfg.match_matrix[a_choice, b_choice])


def sift_keys(transcript: SessionTranscript, cfg: ProtocolConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Keep matched-setting rounds. Alice maps +1 to 0; Bob's map is inverted."""
    idx = _matched(transcript.a_choice, transcript.b_choice, cfg)
    alice_key = (transcript.a_out[idx] < 0).astype(np.uint8)
    bob_key = (transcript.b_out[idx] > 0).astype(np.uint8)
    return alice_key, bob_key, idx


def _report(s: float, se: float, alice_key: np.ndarray, bob_key: np.ndarray) -> SecurityReport:
    qber = float(np.mean(alice_key != bob_key)) if alice_key.size else 0.0
    secure = bool(math.isfinite(s) and s - 3.0 * se > CLASSICAL_BOUND)
    return SecurityReport(s, se, qber, int(alice_key.size), secure)


def run_session(cfg: ProtocolConfig, workers: int = 1, chunk_size: int = CHUNK_SIZE):
    """Simulate a full session.

    Returns ``(transcript, alice_key, bob_key, report)``. If some CHSH
    setting pair never occurred, S is NaN and the session is insecure.
    Results depend on ``(cfg, chunk_size)`` but never on ``workers``.
    """
    transcript = _sample_rounds(cfg, workers=workers, chunk_size=chunk_size)
    alice_key, bob_key, _ = sift_keys(transcript, cfg)
    try:
        s, se = estimate_chsh(transcript, cfg)
    except InsufficientDataError:
        s, se = math.nan, math.nan
    return transcript, alice_key, bob_key, _report(s, se, alice_key, bob_key)


# --- what each party may see -------------------------------------------------


@dataclass(frozen=True)
class PublicRecord:
    """Everything announced on the open channel: all choices, outcomes of mismatched rounds only."""

    a_choice: np.ndarray
    b_choice: np.ndarray
    mismatched: np.ndarray
    a_out_mismatched: np.ndarray
    b_out_mismatched: np.ndarray


def announce(transcript: SessionTranscript, cfg: ProtocolConfig) -> PublicRecord:
    mismatched = np.flatnonzero(~cfg.match_matrix[transcript.a_choice, transcript.b_choice])
    return PublicRecord(
        transcript.a_choice.copy(),
        transcript.b_choice.copy(),
        mismatched,
        transcript.a_out[mismatched].copy(),
        transcript.b_out[mismatched].copy(),
    )


def audit_report(
    public: PublicRecord, alice_outcomes: Sequence[int], bob_outcomes: Sequence[int], cfg: ProtocolConfig
) -> SecurityReport:
    """Rebuild the security report from the public record plus each party's private outcomes.

    S uses only announced data. Each party forms its key from its own
    outcomes on the matched rounds; the two keys are compared only to
    measure the error rate.
    """
    pa, pb = public.a_choice[public.mismatched], public.b_choice[public.mismatched]
    try:
        s, se = _chsh_from_public(pa, pb, public.a_out_mismatched, public.b_out_mismatched, cfg.chsh_pairs)
    except InsufficientDataError:
        s, se = math.nan, math.nan
    idx = _matched(public.a_choice, public.b_choice, cfg)
    alice_key = (np.asarray(alice_outcomes)[idx] < 0).astype(np.uint8)
    bob_key = (np.asarray(bob_outcomes)[idx] > 0).astype(np.uint8)
    return _report(s, se, alice_key, bob_key)


def session_report_json(cfg: ProtocolConfig, report: SecurityReport) -> dict:
    out = {
        "n_pairs": cfg.pair_count,
        "settings": {
            "alice": [[float(x) for x in v] for v in cfg.alice_settings],
            "bob": [[float(x) for x in v] for v in cfg.bob_settings],
        },
        "eve_model": cfg.eve.describe(),
    }
    out.update(report.to_dict())
    return out
