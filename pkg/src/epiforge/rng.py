"""Deterministic randomness plumbing.

Two mechanisms, both derived from a single master seed:

* ``stream(master_seed, *labels)`` returns an independent numpy ``Generator``
  (Philox) keyed by the hashed label path.  Used for phase-level sampling
  where a sequential stream is fine (population synthesis, seeding draws).

* ``counter_u01(seed, a, b, c)`` is a stateless splitmix64-style hash of a
  (seed, a, b, c) counter tuple to a uniform in [0, 1).  The simulation
  engine keys every per-agent decision by (master seed, agent id, step,
  purpose), so outcomes never depend on evaluation order or on how agents
  are partitioned across threads.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV53 = 1.0 / 9007199254740992.0  # 2**-53

# Purpose codes for per-decision counter streams.  Values are part of the
# reproducibility contract: changing them changes every simulation output.
PURPOSE_INFECT = 1
PURPOSE_ATTRIBUTE = 2
PURPOSE_SYMPTOMATIC = 3
PURPOSE_ONSET = 4
PURPOSE_LATENT = 5
PURPOSE_SEED = 6


def _label_to_int(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & _MASK64
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(master_seed: int, *labels) -> np.random.Generator:
    """Independent Philox generator for the given label path."""
    key = (int(master_seed) & _MASK64,) + tuple(_label_to_int(l) for l in labels)
    return np.random.Generator(
        np.random.Philox(key=np.random.SeedSequence(key).generate_state(2, np.uint64)))


def mix64(z: int) -> int:
    """splitmix64 finalizer (python reference; kernels carry a njit twin)."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def counter_hash(seed: int, a: int, b: int, c: int) -> int:
    """Hash a (seed, a, b, c) tuple to 64 well-mixed bits."""
    z = mix64((seed + GAMMA * (a + 1)) & _MASK64)
    z = mix64((z + GAMMA * (b + 1)) & _MASK64)
    z = mix64((z + GAMMA * (c + 1)) & _MASK64)
    return z


def counter_u01(seed: int, a: int, b: int, c: int) -> float:
    """Uniform in [0, 1) for the (seed, a, b, c) counter tuple."""
    return (counter_hash(seed, a, b, c) >> 11) * _INV53


def counter_u01_array(seed: int, a: np.ndarray, b: int, c: int) -> np.ndarray:
    """Vectorized ``counter_u01`` over an array of ``a`` values."""
    g = np.uint64(GAMMA)
    with np.errstate(over="ignore"):  # uint64 wrap-around is the point
        z = np.uint64(seed) + g * (a.astype(np.uint64) + np.uint64(1))
        z = _mix64_array(z)
        z = _mix64_array(z + np.uint64((GAMMA * (b + 1)) & _MASK64))
        z = _mix64_array(z + np.uint64((GAMMA * (c + 1)) & _MASK64))
    return (z >> np.uint64(11)).astype(np.float64) * _INV53


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))
