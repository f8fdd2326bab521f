"""Interacting rigid bodies: Lie-group Euler-Maruyama simulation.

Each step freezes ``J = (rho/N) sum_j A_j`` and updates every particle by

    A_k <- exp(dt/2 (J A_k^T - A_k J^T) + sqrt(2 dt) [eta_k]_x) A_k.

Noise is counter based: the Gaussian vector of particle ``k`` at step ``s``
depends only on ``(seed, s, k)``, so runs are reproducible and independent of
evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import so3
from . import von_mises as vm
from .errors import DomainError, InvalidInputError

STABILITY_LIMIT = 0.5
DRIFT_TOL = 1e-7
_C_SCALE = math.sqrt(2.0 / 3.0)


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Aligned:
    """Every particle starts at ``a0``."""

    a0: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __str__(self) -> str:
        return "aligned"


@dataclass(frozen=True)
class Uniform:
    """Independent Haar-distributed particles."""

    def __str__(self) -> str:
        return "uniform"


@dataclass(frozen=True)
class VonMisesTargetC:
    """Independent draws from ``M_{alpha I}`` with ``c1(alpha) = c_target``."""

    c_target: float

    def __post_init__(self):
        if not -1.0 / 3.0 < self.c_target < 1.0:
            raise DomainError(f"target order parameter {self.c_target} outside (-1/3, 1)")

    def __str__(self) -> str:
        return f"vmc:{self.c_target:g}"


InitSpec = Aligned | Uniform | VonMisesTargetC


def parse_init(text: str) -> InitSpec:
    """Parse ``aligned``, ``uniform`` or ``vmc:<c>``."""
    text = text.strip().lower()
    if text == "aligned":
        return Aligned()
    if text == "uniform":
        return Uniform()
    if text.startswith("vmc:"):
        try:
            c = float(text[4:])
        except ValueError as exc:
            raise InvalidInputError(f"bad vmc target in {text!r}") from exc
        return VonMisesTargetC(c)
    raise InvalidInputError(f"unknown init mode {text!r}")


@dataclass(frozen=True)
class SimConfig:
    rho: float
    n_particles: int = 500
    dt: float = 0.04
    n_steps: int = 100
    seed: int = 0
    init: InitSpec = field(default_factory=Aligned)
    renorm_every: int = 100

    def __post_init__(self):
        if isinstance(self.init, str):
            object.__setattr__(self, "init", parse_init(self.init))
        if self.n_particles < 1 or self.n_steps < 0 or self.renorm_every < 1:
            raise InvalidInputError("n_particles and renorm_every must be positive, n_steps >= 0")
        if not (math.isfinite(self.rho) and self.rho >= 0):
            raise InvalidInputError("rho must be finite and non-negative")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise InvalidInputError("dt must be positive")
        if self.dt * self.rho > STABILITY_LIMIT:
            raise InvalidInputError(f"dt * rho = {self.dt * self.rho:g} exceeds {STABILITY_LIMIT}")


@dataclass
class Ensemble:
    rotations: np.ndarray
    time: float = 0.0
    step_index: int = 0
    seed: int = 0

    @property
    def n(self) -> int:
        return self.rotations.shape[0]


@dataclass(frozen=True)
class TimeSeries:
    times: np.ndarray
    c_values: np.ndarray
    flux_norms: np.ndarray

    @property
    def final_c(self) -> float:
        return float(self.c_values[-1])


# --------------------------------------------------------------------------
# Observables and noise
# --------------------------------------------------------------------------


def flux(rotations: np.ndarray, rho: float) -> np.ndarray:
    """``J = (rho/N) sum A_k``."""
    return rho * rotations.mean(axis=0)


def order_parameter(rotations: np.ndarray) -> float:
    """``c = sqrt(2/3) |mean A|``; equals ``sqrt(2)/(sqrt(3) rho) |J|`` for ``rho > 0``."""
    return float(min(_C_SCALE * so3.norm(rotations.mean(axis=0)), 1.0))


def step_noise(seed: int, step_index: int, n: int) -> np.ndarray:
    """Standard Gaussian ``(n, 3)`` array for one step.

    A Philox stream keyed by ``seed`` and positioned by ``step_index`` yields
    four uniforms per particle, turned into three normals by Box-Muller.
    Particle ``k`` always reads the same four counter slots.
    """
    key = int(seed) % (1 << 64)
    bitgen = np.random.Philox(key=key, counter=[0, int(step_index), 0, 0])
    u = np.random.Generator(bitgen).random((n, 4))
    r1 = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    r2 = np.sqrt(-2.0 * np.log1p(-u[:, 2]))
    a1, a2 = 2.0 * np.pi * u[:, 1], 2.0 * np.pi * u[:, 3]
    return np.stack([r1 * np.cos(a1), r1 * np.sin(a1), r2 * np.cos(a2)], axis=1)


# --------------------------------------------------------------------------
# Initialisation and stepping
# --------------------------------------------------------------------------


def init_ensemble(cfg: SimConfig) -> Ensemble:
    init = cfg.init
    rng = np.random.default_rng([int(cfg.seed) % (1 << 64), 0x1A17])
    n = cfg.n_particles
    if isinstance(init, Aligned):
        a0 = np.asarray(init.a0, dtype=float)
        if not so3.is_rotation(a0):
            raise InvalidInputError("aligned start needs a rotation")
        rots = np.broadcast_to(a0, (n, 3, 3)).copy()
    elif isinstance(init, Uniform):
        rots = so3.haar_samples(rng, n)
    else:
        from .equilibria import c1_inverse

        alpha = c1_inverse(init.c_target)
        rots = vm.sample(alpha * np.eye(3), rng, n)
    return Ensemble(rots, 0.0, 0, int(cfg.seed))


def lie_update(rotations: np.ndarray, j: np.ndarray, dt: float, eta: np.ndarray | None) -> np.ndarray:
    """One Lie-scheme update of every rotation for a frozen ``j``.

    ``eta`` is the ``(n, 3)`` noise; ``None`` gives the deterministic drift.
    """
    m = j @ np.swapaxes(rotations, 1, 2)
    omega = 0.5 * dt * so3.vee(m - np.swapaxes(m, 1, 2))
    if eta is not None:
        omega = omega + math.sqrt(2.0 * dt) * eta
    return so3.exp_so3(omega) @ rotations


def step(ens: Ensemble, cfg: SimConfig, noise: np.ndarray | None = None) -> Ensemble:
    """Synchronous Lie-scheme step; ``noise`` overrides the seeded stream."""
    if noise is None:
        noise = step_noise(ens.seed, ens.step_index, ens.n)
    j = flux(ens.rotations, cfg.rho)
    rots = lie_update(ens.rotations, j, cfg.dt, noise)
    k = ens.step_index + 1
    if k % cfg.renorm_every == 0:
        rots = so3.renormalize(rots)
    return Ensemble(rots, ens.time + cfg.dt, k, ens.seed)


def naive_step(ens: Ensemble, cfg: SimConfig, noise: np.ndarray | None = None) -> Ensemble:
    """Projected Euler-Maruyama step ``Pi(A + dt P_A J + 2 sqrt(dt) P_A N9)``.

    ``noise`` overrides the ``(n, 3, 3)`` Gaussian matrices.
    """
    a = ens.rotations
    if noise is None:
        rng = np.random.default_rng([int(ens.seed) % (1 << 64), ens.step_index, 0x9A1])
        noise = rng.standard_normal((ens.n, 3, 3))
    j = flux(a, cfg.rho)
    h = cfg.dt * j + 2.0 * math.sqrt(cfg.dt) * noise
    rots = so3.nearest_rotation(a + so3.tangent_project(a, h))
    return Ensemble(rots, ens.time + cfg.dt, ens.step_index + 1, ens.seed)


def run(cfg: SimConfig, ensemble: Ensemble | None = None, scheme: str = "lie") -> TimeSeries:
    """Iterate ``cfg.n_steps`` steps and record ``c(t)`` and ``|J(t)|``, including ``t = 0``."""
    if scheme not in ("lie", "naive"):
        raise InvalidInputError(f"unknown scheme {scheme!r}")
    advance = step if scheme == "lie" else naive_step
    ens = init_ensemble(cfg) if ensemble is None else ensemble
    times = np.empty(cfg.n_steps + 1)
    cs = np.empty(cfg.n_steps + 1)
    norms = np.empty(cfg.n_steps + 1)
    for i in range(cfg.n_steps + 1):
        if i:
            ens = advance(ens, cfg)
        mean = ens.rotations.mean(axis=0)
        times[i] = ens.time
        norms[i] = cfg.rho * so3.norm(mean)
        cs[i] = min(_C_SCALE * so3.norm(mean), 1.0)
    return TimeSeries(times, cs, norms)


def final_ensemble(cfg: SimConfig, ensemble: Ensemble | None = None, scheme: str = "lie") -> Ensemble:
    """State after ``cfg.n_steps`` steps, without recording observables."""
    advance = step if scheme == "lie" else naive_step
    ens = init_ensemble(cfg) if ensemble is None else ensemble
    for _ in range(cfg.n_steps):
        ens = advance(ens, cfg)
    return ens


def with_seed(cfg: SimConfig, seed: int) -> SimConfig:
    return replace(cfg, seed=int(seed))
