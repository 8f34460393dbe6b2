"""Greedy Hessian-descent path construction.

Two variants share one direction-finding core:

* the radial construction, which walks from the origin to the full sphere in
  k orthogonal increments sigma_{(j+1)/k} = sigma_{j/k} + sqrt(n/k) v_j, and
* the on-sphere iteration for pure models, which steps by sqrt(n tau) v and
  rescales back to radius sqrt(n).

At each point the chosen unit direction v must be tangent (v . sigma = 0),
non-ascending (v . grad <= 0, enforced by a sign flip) and spectrally deep:
v^T Hess v <= -2 sqrt(nu''(q)) + epsilon. Directions come from shifted power
iteration on the projected Hessian, with an optional dense-eigensolve
fallback when the iteration stalls.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SpectralFailureError, TraceMismatchError
from .hamiltonian import (
    Disorder,
    energy,
    euclidean_gradient,
    euclidean_hessian,
    overlap_q,
    project_out,
)
from .mixture import Mixture, energy_benchmark

__all__ = [
    "AlgorithmParams",
    "DirectionResult",
    "PathTrace",
    "SphereTrace",
    "find_direction",
    "run_radial_path",
    "interpolate_energy",
    "run_pure_sphere",
    "TRACE_COLUMNS",
]

TRACE_COLUMNS = (
    "step",
    "q",
    "energy_per_spin",
    "benchmark_eh",
    "gap",
    "rayleigh",
    "grad_dot",
    "used_fallback",
)


@dataclass(frozen=True)
class AlgorithmParams:
    """Tuning knobs for direction finding and path construction.

    power_shift_L=None uses 3 sqrt(nu''(q)) + 1 per step, comfortably above
    the semicircle support +-2 sqrt(nu''(q)) so the shifted iteration locks
    onto the bottom edge.
    """

    k: int = 50
    epsilon: float = 0.1
    power_shift_L: float | None = None
    power_iters_max: int = 500
    rayleigh_check: bool = True
    rng_seed: int = 0
    randomize_v0: bool = False

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.power_iters_max < 1:
            raise ValueError(f"power_iters_max must be >= 1, got {self.power_iters_max}")
        if self.power_shift_L is not None and self.power_shift_L <= 0:
            raise ValueError(f"power_shift_L must be > 0, got {self.power_shift_L}")


@dataclass(frozen=True)
class DirectionResult:
    v: np.ndarray
    rayleigh: float
    grad_dot: float
    used_fallback: bool
    iterations: int


def _project_perp(vec: np.ndarray, unit: np.ndarray) -> np.ndarray:
    return vec - unit * (unit @ vec)


def find_direction(
    hess: np.ndarray,
    grad: np.ndarray,
    sigma: np.ndarray,
    params: AlgorithmParams,
    nu2_q: float,
    rng: np.random.Generator | None = None,
) -> DirectionResult:
    """Unit direction v orthogonal to sigma with a deep Rayleigh quotient.

    Shifted power iteration v <- (hess - L I) v from a uniformly random
    start in the tangent space, re-projected and renormalized each sweep,
    stopping as soon as v^T hess v <= -2 sqrt(nu2_q) + epsilon. If the cap
    is hit, a dense eigensolve of hess supplies the most negative
    eigenvector (when rayleigh_check is on); failing even then raises
    SpectralFailureError with the best quotient achieved. The sign of v is
    flipped if needed so that v . grad <= 0.
    """
    if rng is None:
        rng = np.random.default_rng(params.rng_seed)
    norm = np.linalg.norm(sigma)
    if norm == 0.0:
        raise ValueError("direction finding undefined at the origin")
    u_rad = sigma / norm
    target = -2.0 * math.sqrt(nu2_q) + params.epsilon
    shift = params.power_shift_L if params.power_shift_L is not None else 3.0 * math.sqrt(nu2_q) + 1.0

    v = _project_perp(rng.standard_normal(sigma.shape[0]), u_rad)
    v /= np.linalg.norm(v)
    rayleigh = math.inf
    used_fallback = False
    iters = 0
    for iters in range(1, params.power_iters_max + 1):
        w = hess @ v
        rayleigh = float(v @ w)
        if rayleigh <= target:
            break
        v = _project_perp(w - shift * v, u_rad)
        nrm = np.linalg.norm(v)
        if nrm == 0.0:  # pathological cancellation; restart from noise
            v = _project_perp(rng.standard_normal(sigma.shape[0]), u_rad)
            nrm = np.linalg.norm(v)
        v /= nrm

    if rayleigh > target and params.rayleigh_check:
        used_fallback = True
        eigvals, eigvecs = np.linalg.eigh(hess)
        for col in range(eigvecs.shape[1]):
            cand = _project_perp(eigvecs[:, col], u_rad)
            nrm = np.linalg.norm(cand)
            if nrm > 1e-8:
                cand /= nrm
                cand_ray = float(cand @ (hess @ cand))
                if cand_ray < rayleigh:
                    v, rayleigh = cand, cand_ray
                break  # eigh sorts ascending; first usable column is deepest
    if rayleigh > target:
        raise SpectralFailureError(rayleigh, target)

    grad_dot = float(v @ grad)
    if grad_dot > 0.0:
        v = -v
        grad_dot = -grad_dot
    return DirectionResult(
        v=v, rayleigh=rayleigh, grad_dot=grad_dot, used_fallback=used_fallback, iterations=iters
    )


# ---------------------------------------------------------------------------
# trace containers
# ---------------------------------------------------------------------------


def _segment_third_derivative_max(
    d: Disorder, sigma: np.ndarray, v: np.ndarray, s_max: float
) -> float:
    """Max |d^3/ds^3 H(sigma + s v)| over s in [0, s_max].

    H restricted to a line is a polynomial of degree deg(nu), so fitting
    deg+1 samples recovers it exactly up to conditioning.
    """
    deg = d.mixture.degree
    if deg < 3:
        return 0.0
    nodes = np.linspace(0.0, s_max, deg + 1)
    vals = np.array([energy(d, sigma + s * v) for s in nodes])
    poly = np.polynomial.Polynomial.fit(nodes, vals, deg)
    third = poly.deriv(3)
    grid = np.linspace(0.0, s_max, 33)
    return float(np.abs(third(grid)).max())


def _write_trace_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass(eq=False)
class PathTrace:
    """Full record of one radial run: points, directions and diagnostics.

    Arrays hold steps 0..m where m = k for a complete run. rayleigh[j] and
    grad_dot[j] describe the direction v[j] chosen at sigma[j]; both are nan
    at step 0, where the tangent plane is undefined and v0 is free.
    """

    mixture: Mixture
    n: int
    k: int
    epsilon: float
    disorder_seed: int
    params_seed: int
    sigma: np.ndarray  # (m+1, n)
    v: np.ndarray  # (m, n)
    energy_per_spin: np.ndarray  # (m+1,)
    rayleigh: np.ndarray  # (m,)
    grad_dot: np.ndarray  # (m,)
    used_fallback: np.ndarray  # (m,) bool
    third_deriv: np.ndarray  # (m,) max |d^3 H/ds^3| per segment
    benchmark: np.ndarray = field(default=None)  # (m+1,)
    complete: bool = True
    failed_step: int | None = None
    variant: str = "radial"

    def __post_init__(self):
        if self.benchmark is None:
            qs = self.q_values()
            self.benchmark = np.array([energy_benchmark(self.mixture, q) for q in qs])

    def q_values(self) -> np.ndarray:
        if self.variant == "pure_sphere":
            return np.ones(self.sigma.shape[0])
        return np.arange(self.sigma.shape[0]) / self.k

    @property
    def gap(self) -> np.ndarray:
        return self.energy_per_spin + self.benchmark

    @property
    def sup_gap(self) -> float:
        return float(self.gap.max())

    @property
    def final_energy(self) -> float:
        return float(self.energy_per_spin[-1])

    @property
    def fallback_count(self) -> int:
        return int(self.used_fallback.sum())

    @property
    def third_deriv_coeff(self) -> float:
        """Empirical bound constant: max_j |d^3 H/ds^3| * sqrt(n)."""
        if self.third_deriv.size == 0:
            return 0.0
        return float(self.third_deriv.max() * math.sqrt(self.n))

    def rows(self) -> list[dict]:
        out = []
        qs = self.q_values()
        m = self.v.shape[0]
        for j in range(self.sigma.shape[0]):
            has_dir = j < m and math.isfinite(self.rayleigh[j])
            out.append(
                {
                    "step": j,
                    "q": _fmt(qs[j]),
                    "energy_per_spin": _fmt(self.energy_per_spin[j]),
                    "benchmark_eh": _fmt(self.benchmark[j]),
                    "gap": _fmt(self.gap[j]),
                    "rayleigh": _fmt(self.rayleigh[j]) if has_dir else "",
                    "grad_dot": _fmt(self.grad_dot[j]) if has_dir else "",
                    "used_fallback": int(self.used_fallback[j]) if j < m else "",
                }
            )
        return out

    def save(self, prefix) -> tuple[Path, Path]:
        """Write <prefix>.csv (summary columns) and <prefix>.npz (vectors)."""
        prefix = Path(prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        csv_path = prefix.with_suffix(".csv")
        npz_path = prefix.with_suffix(".npz")
        _write_trace_csv(csv_path, self.rows())
        np.savez(
            npz_path,
            mixture=np.array(self.mixture.text()),
            n=np.int64(self.n),
            k=np.int64(self.k),
            epsilon=np.float64(self.epsilon),
            disorder_seed=np.uint64(self.disorder_seed),
            params_seed=np.uint64(self.params_seed),
            variant=np.array(self.variant),
            complete=np.bool_(self.complete),
            failed_step=np.int64(-1 if self.failed_step is None else self.failed_step),
            sigma=self.sigma,
            v=self.v,
            energy_per_spin=self.energy_per_spin,
            rayleigh=self.rayleigh,
            grad_dot=self.grad_dot,
            used_fallback=self.used_fallback,
            third_deriv=self.third_deriv,
            benchmark=self.benchmark,
        )
        return csv_path, npz_path

    @classmethod
    def load(cls, prefix) -> "PathTrace":
        npz_path = Path(prefix).with_suffix(".npz")
        with np.load(npz_path, allow_pickle=False) as z:
            failed = int(z["failed_step"])
            return cls(
                mixture=Mixture.parse(str(z["mixture"])),
                n=int(z["n"]),
                k=int(z["k"]),
                epsilon=float(z["epsilon"]),
                disorder_seed=int(z["disorder_seed"]),
                params_seed=int(z["params_seed"]),
                sigma=z["sigma"],
                v=z["v"],
                energy_per_spin=z["energy_per_spin"],
                rayleigh=z["rayleigh"],
                grad_dot=z["grad_dot"],
                used_fallback=z["used_fallback"],
                third_deriv=z["third_deriv"],
                benchmark=z["benchmark"],
                complete=bool(z["complete"]),
                failed_step=None if failed < 0 else failed,
                variant=str(z["variant"]),
            )


class SphereTrace(PathTrace):
    """On-sphere run for pure models: every point has q = 1."""

    def __init__(self, *, tau: float, **kwargs):
        self.tau = tau
        super().__init__(variant="pure_sphere", **kwargs)

    def save(self, prefix) -> tuple[Path, Path]:
        csv_path, npz_path = super().save(prefix)
        with np.load(npz_path, allow_pickle=False) as z:
            payload = dict(z)
        payload["tau"] = np.float64(self.tau)
        np.savez(npz_path, **payload)
        return csv_path, npz_path

    @classmethod
    def load(cls, prefix) -> "SphereTrace":
        base = PathTrace.load(prefix)
        with np.load(Path(prefix).with_suffix(".npz"), allow_pickle=False) as z:
            tau = float(z["tau"])
        state = {k: v for k, v in base.__dict__.items() if k != "variant"}
        return cls(tau=tau, **state)


# ---------------------------------------------------------------------------
# path construction
# ---------------------------------------------------------------------------


def run_radial_path(d: Disorder, params: AlgorithmParams) -> PathTrace:
    """Walk from the origin to the sphere of radius sqrt(n) in k steps.

    Initializes v0 = e1 (or a random unit vector), sigma_{1/k} = sqrt(n/k) v0,
    then at each intermediate point takes the direction from find_direction
    applied to the projected gradient and Hessian. A spectral failure raises
    SpectralFailureError with the partial trace attached.
    """
    n, k = d.n, params.k
    rng = np.random.default_rng(params.rng_seed)
    step_len = math.sqrt(n / k)

    sigma = np.zeros((k + 1, n))
    v = np.zeros((k, n))
    e_per_spin = np.zeros(k + 1)
    rayleigh = np.full(k, np.nan)
    grad_dot = np.full(k, np.nan)
    used_fallback = np.zeros(k, dtype=bool)
    third = np.zeros(k)

    if params.randomize_v0:
        v0 = rng.standard_normal(n)
        v0 /= np.linalg.norm(v0)
    else:
        v0 = np.zeros(n)
        v0[0] = 1.0
    v[0] = v0
    sigma[1] = step_len * v0
    e_per_spin[1] = energy(d, sigma[1]) / n
    third[0] = _segment_third_derivative_max(d, sigma[0], v0, step_len)

    def partial(fail_step: int) -> PathTrace:
        hi = fail_step + 1
        return PathTrace(
            mixture=d.mixture, n=n, k=k, epsilon=params.epsilon,
            disorder_seed=d.seed, params_seed=params.rng_seed,
            sigma=sigma[:hi].copy(), v=v[:fail_step].copy(),
            energy_per_spin=e_per_spin[:hi].copy(), rayleigh=rayleigh[:fail_step].copy(),
            grad_dot=grad_dot[:fail_step].copy(), used_fallback=used_fallback[:fail_step].copy(),
            third_deriv=third[:fail_step].copy(), complete=False, failed_step=fail_step,
        )

    for j in range(1, k):
        point = sigma[j]
        q = overlap_q(point)
        grad = euclidean_gradient(d, point)
        hess = euclidean_hessian(d, point)
        u_rad = point / np.linalg.norm(point)
        p_grad = grad - u_rad * (u_rad @ grad)
        p_hess = project_out(hess, u_rad)
        try:
            res = find_direction(p_hess, p_grad, point, params, d.mixture.nu(q, 2), rng)
        except SpectralFailureError as err:
            err.step = j
            err.partial_trace = partial(j)
            raise
        v[j] = res.v
        rayleigh[j] = res.rayleigh
        grad_dot[j] = res.grad_dot
        used_fallback[j] = res.used_fallback
        third[j] = _segment_third_derivative_max(d, point, res.v, step_len)
        sigma[j + 1] = point + step_len * res.v
        e_per_spin[j + 1] = energy(d, sigma[j + 1]) / n

    return PathTrace(
        mixture=d.mixture, n=n, k=k, epsilon=params.epsilon,
        disorder_seed=d.seed, params_seed=params.rng_seed,
        sigma=sigma, v=v, energy_per_spin=e_per_spin, rayleigh=rayleigh,
        grad_dot=grad_dot, used_fallback=used_fallback, third_deriv=third,
    )


def interpolate_energy(trace: PathTrace, d: Disorder, q: float) -> float:
    """Energy per spin on the continuous path at radius fraction q.

    Between recorded steps the path is sigma_{j/k} + sqrt(n t) v_j with
    t = q - j/k, matching the construction used by run_radial_path.
    """
    if trace.variant != "radial":
        raise ValueError("interpolation is defined for radial traces only")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    k = trace.k
    scaled = q * k
    j = int(round(scaled))
    if abs(scaled - j) > 1e-9:
        j = int(math.floor(scaled))
    t = q - j / k
    if t <= 1e-15:
        if j >= trace.sigma.shape[0]:
            raise ValueError(f"q={q} beyond trace coverage (recorded through step {trace.sigma.shape[0] - 1})")
        point = trace.sigma[j]
    else:
        if j >= trace.v.shape[0]:
            raise ValueError(f"q={q} beyond trace coverage (no direction at step {j})")
        point = trace.sigma[j] + math.sqrt(trace.n * t) * trace.v[j]
    return energy(d, point) / trace.n


def run_pure_sphere(
    d: Disorder, p: int, tau: float, steps: int, params: AlgorithmParams
) -> SphereTrace:
    """On-sphere descent for a pure degree-p model.

    From a uniform random start on the sphere of radius sqrt(n), each
    iteration steps by sqrt(n tau) along a direction from find_direction and
    rescales back to the sphere (homogeneity makes the rescaling exact in
    law). Records the same diagnostics as the radial runs.
    """
    if not d.mixture.is_pure or d.mixture.degree != p:
        raise ValueError(f"disorder mixture {d.mixture} is not pure of degree {p}")
    if not 0.0 < tau <= 0.5:
        raise ValueError(f"tau must be in (0, 0.5], got {tau}")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    n = d.n
    rng = np.random.default_rng(params.rng_seed)
    radius = math.sqrt(n)
    step_len = math.sqrt(n * tau)
    nu2_1 = d.mixture.nu(1.0, 2)

    sigma = np.zeros((steps + 1, n))
    v = np.zeros((steps, n))
    e_per_spin = np.zeros(steps + 1)
    rayleigh = np.full(steps, np.nan)
    grad_dot = np.full(steps, np.nan)
    used_fallback = np.zeros(steps, dtype=bool)
    third = np.zeros(steps)

    start = rng.standard_normal(n)
    sigma[0] = start * (radius / np.linalg.norm(start))
    e_per_spin[0] = energy(d, sigma[0]) / n

    def build(hi_steps: int, complete: bool, failed: int | None) -> SphereTrace:
        hi = hi_steps + 1
        return SphereTrace(
            tau=tau, mixture=d.mixture, n=n, k=params.k, epsilon=params.epsilon,
            disorder_seed=d.seed, params_seed=params.rng_seed,
            sigma=sigma[:hi].copy(), v=v[:hi_steps].copy(),
            energy_per_spin=e_per_spin[:hi].copy(), rayleigh=rayleigh[:hi_steps].copy(),
            grad_dot=grad_dot[:hi_steps].copy(), used_fallback=used_fallback[:hi_steps].copy(),
            third_deriv=third[:hi_steps].copy(), complete=complete, failed_step=failed,
        )

    for i in range(steps):
        point = sigma[i]
        grad = euclidean_gradient(d, point)
        hess = euclidean_hessian(d, point)
        u_rad = point / np.linalg.norm(point)
        p_grad = grad - u_rad * (u_rad @ grad)
        p_hess = project_out(hess, u_rad)
        try:
            res = find_direction(p_hess, p_grad, point, params, nu2_1, rng)
        except SpectralFailureError as err:
            err.step = i
            err.partial_trace = build(i, False, i)
            raise
        v[i] = res.v
        rayleigh[i] = res.rayleigh
        grad_dot[i] = res.grad_dot
        used_fallback[i] = res.used_fallback
        third[i] = _segment_third_derivative_max(d, point, res.v, step_len)
        moved = point + step_len * res.v
        sigma[i + 1] = moved * (radius / np.linalg.norm(moved))
        e_per_spin[i + 1] = energy(d, sigma[i + 1]) / n

    return build(steps, True, None)
