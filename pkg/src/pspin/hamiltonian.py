"""Gaussian disorder sampling and landscape evaluation on the ball.

The random landscape for a mixture nu and dimension n is
H(sigma) = sum_p gamma_p n^{-(p-1)/2} sum_{i1<=...<=ip} Jt * sigma_i1...sigma_ip,
where each symmetrized coefficient Jt is sqrt(r) times a standard Gaussian
and r is the number of distinct orderings of the multi-index. This is
identical in law to summing independent coefficients over all n^p ordered
tuples while storing only C(n+p-1, p) numbers per degree.

Points are plain numpy vectors of length n; the squared-radius fraction
q = |sigma|^2 / n is always recomputed, never trusted.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import CapacityError
from .mixture import Mixture

__all__ = [
    "Disorder",
    "sample_disorder",
    "energy",
    "euclidean_gradient",
    "euclidean_hessian",
    "projected_gradient",
    "projected_hessian",
    "covariance_expectation",
    "overlap_q",
    "tensor_entries",
    "estimate_bytes",
    "dump_disorder",
    "load_disorder",
]

DEFAULT_BUDGET_BYTES = 2**31  # 2 GiB of coefficient storage

_MAGIC = b"PSPINDIS"
_DUMP_VERSION = 1


def tensor_entries(n: int, p: int) -> int:
    """Number of sorted multi-indices of length p over n letters."""
    return math.comb(n + p - 1, p)


def estimate_bytes(mixture: Mixture, n: int) -> int:
    """Coefficient storage estimate: 8 bytes per symmetrized entry."""
    return sum(8 * tensor_entries(n, p) for p in mixture.degrees)


@lru_cache(maxsize=3)
def _sorted_tuples(n: int, p: int) -> np.ndarray:
    """All nondecreasing index rows of length p over 0..n-1, lex order."""
    if p == 1:
        out = np.arange(n, dtype=np.int32).reshape(-1, 1)
    else:
        prev = _sorted_tuples(n, p - 1)
        starts = np.searchsorted(prev[:, 0], np.arange(n), side="left")
        counts = prev.shape[0] - starts
        first = np.repeat(np.arange(n, dtype=np.int32), counts)
        rest = np.concatenate([prev[s:] for s in starts], axis=0)
        out = np.column_stack([first, rest])
    out.setflags(write=False)
    return out


@dataclass(eq=False)
class Disorder:
    """Frozen coefficient tensors for one sample of the landscape."""

    mixture: Mixture
    n: int
    seed: int
    tensors: dict[int, np.ndarray] = field(repr=False)

    def indices(self, p: int) -> np.ndarray:
        return _sorted_tuples(self.n, p)

    def prefactor(self, p: int) -> float:
        return self.mixture.gamma(p) * self.n ** (-(p - 1) / 2)


def sample_disorder(
    mixture: Mixture,
    n: int,
    seed: int,
    max_bytes: int = DEFAULT_BUDGET_BYTES,
) -> Disorder:
    """Draw the coefficient tensors for (mixture, n) from a seeded stream.

    Degrees are sampled in increasing order; within a degree, one Gaussian
    per sorted multi-index in lexicographic order, scaled by sqrt(orderings).
    Regeneration from the same (mixture, n, seed) is bit-identical.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    need = estimate_bytes(mixture, n)
    if need > max_bytes:
        raise CapacityError(need, max_bytes)
    rng = np.random.default_rng(seed)
    tensors: dict[int, np.ndarray] = {}
    for p in mixture.degrees:
        idx = _sorted_tuples(n, p)
        scale = np.sqrt(_kernels.orderings_count(idx))
        jt = scale * rng.standard_normal(idx.shape[0])
        jt.setflags(write=False)
        tensors[p] = jt
    return Disorder(mixture=mixture, n=n, seed=seed, tensors=tensors)


def overlap_q(x: np.ndarray) -> float:
    """Squared-radius fraction |x|^2 / n of a point in the ball."""
    x = np.asarray(x, dtype=np.float64)
    return float(x @ x) / x.shape[0]


def _check_point(d: Disorder, x: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (d.n,):
        raise ValueError(f"point has shape {x.shape}, expected ({d.n},)")
    return x


def energy(d: Disorder, x: np.ndarray) -> float:
    """H(x): one contraction pass per active degree."""
    x = _check_point(d, x)
    total = 0.0
    for p, jt in d.tensors.items():
        total += d.prefactor(p) * _kernels.energy_contract(d.indices(p), jt, x)
    return total


def euclidean_gradient(d: Disorder, x: np.ndarray) -> np.ndarray:
    """Exact gradient of the polynomial landscape at x."""
    x = _check_point(d, x)
    grad = np.zeros(d.n)
    for p, jt in d.tensors.items():
        grad += d.prefactor(p) * _kernels.gradient_contract(d.indices(p), jt, x)
    return grad


def euclidean_hessian(d: Disorder, x: np.ndarray) -> np.ndarray:
    """Exact symmetric second-derivative matrix at x."""
    x = _check_point(d, x)
    hess = np.zeros((d.n, d.n))
    for p, jt in d.tensors.items():
        hess += d.prefactor(p) * _kernels.hessian_contract(d.indices(p), jt, x)
    return hess


def _unit_radial(x: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(x)
    if norm == 0.0:
        raise ValueError("projection undefined at the origin")
    return x / norm


def projected_gradient(d: Disorder, x: np.ndarray) -> np.ndarray:
    """Gradient projected onto the tangent space at x."""
    x = _check_point(d, x)
    u = _unit_radial(x)
    g = euclidean_gradient(d, x)
    return g - u * (u @ g)


def projected_hessian(d: Disorder, x: np.ndarray) -> np.ndarray:
    """Tangent-space Hessian M A M with M = I - x x^T / |x|^2.

    Annihilates the radial direction exactly up to roundoff.
    """
    x = _check_point(d, x)
    u = _unit_radial(x)
    a = euclidean_hessian(d, x)
    return project_out(a, u)


def project_out(a: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Compress a symmetric matrix onto the complement of unit vector u."""
    w = a @ u
    c = float(u @ w)
    b = a - np.outer(w, u) - np.outer(u, w) + c * np.outer(u, u)
    return 0.5 * (b + b.T)


def covariance_expectation(mixture: Mixture, x: np.ndarray, y: np.ndarray) -> float:
    """Analytic E[H(x) H(y)] = n * nu(x.y / n); Monte Carlo oracle target."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"points must share one shape, got {x.shape} and {y.shape}")
    n = x.shape[0]
    return n * mixture.nu(float(x @ y) / n)


# ---------------------------------------------------------------------------
# binary dump / restore
# ---------------------------------------------------------------------------


def dump_disorder(d: Disorder, path) -> None:
    """Write header + per-degree raw little-endian float64 coefficient arrays."""
    mix = d.mixture.text().encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _DUMP_VERSION))
        fh.write(struct.pack("<I", len(mix)))
        fh.write(mix)
        fh.write(struct.pack("<QQ", d.n, d.seed))
        for p in d.mixture.degrees:
            fh.write(d.tensors[p].astype("<f8").tobytes())


def load_disorder(path, mixture: Mixture, n: int, seed: int) -> Disorder:
    """Restore a dump, verifying its header against the requested parameters."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a disorder dump (bad magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _DUMP_VERSION:
            raise ValueError(f"{path}: unsupported dump version {version}")
        (mix_len,) = struct.unpack("<I", fh.read(4))
        mix_text = fh.read(mix_len).decode("utf-8")
        file_n, file_seed = struct.unpack("<QQ", fh.read(16))
        if mix_text != mixture.text() or file_n != n or file_seed != seed:
            raise ValueError(
                f"{path}: header (mixture={mix_text!r}, n={file_n}, seed={file_seed}) "
                f"does not match requested (mixture={mixture.text()!r}, n={n}, seed={seed})"
            )
        tensors: dict[int, np.ndarray] = {}
        for p in mixture.degrees:
            count = tensor_entries(n, p)
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise ValueError(f"{path}: truncated tensor for degree {p}")
            jt = np.frombuffer(raw, dtype="<f8").astype(np.float64)
            jt.setflags(write=False)
            tensors[p] = jt
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after the last tensor")
    return Disorder(mixture=mixture, n=n, seed=seed, tensors=tensors)
