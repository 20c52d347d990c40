"""Path simulation for the CBI + OU-type system and its shared-noise coupling.

Scheme: full-truncation Euler for the square-root diffusion part (coefficients
evaluated at max(Y,0), state clamped to 0 after the step), homogeneous
compound-Poisson immigration jumps, and state-dependent branching jumps by
per-step thinning with the intensity frozen at the left endpoint.

Coupling: both copies share W0, W1, W2 and the immigration noise; the
difference process D = Y(x) - Y(y) is a continuous-state branching process
without immigration and receives its own independent increments scaled by D
(the strip structure of the shared time-space noises).  D is absorbed at 0
once it drops below coal_tol; after that the Z-difference decays
deterministically at rate b2.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ConfigError, TimeNotRecorded, ZeroMass
from .measures import LevyMeasure, LevySampler, levy_integral
from .model import ModelParams


@dataclass(frozen=True)
class SimConfig:
    dt: float
    T: float
    n_paths: int
    seed: int
    record_times: tuple[float, ...] = ()
    eps_trunc: float = 0.0
    small_jump_mode: str = "drop_compensate"  # or "gaussian_approx"
    coal_tol: float | None = None
    threads: int = 1
    chunk_size: int = rng.CHUNK_SIZE

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("dt must be > 0")
        if self.T < self.dt:
            raise ConfigError("T must be >= dt")
        if self.eps_trunc < 0:
            raise ConfigError("eps_trunc must be >= 0")
        if self.small_jump_mode not in ("drop_compensate", "gaussian_approx"):
            raise ConfigError(f"unknown small_jump_mode {self.small_jump_mode!r}")
        if self.coal_tol is not None and self.coal_tol <= 0:
            raise ConfigError("coal_tol must be > 0")
        if self.n_paths <= 0:
            raise ConfigError("n_paths must be > 0")

    def record_steps(self) -> dict[int, float]:
        """Map step index -> requested record time (snapped to the grid)."""
        out: dict[int, float] = {}
        times = self.record_times or (self.T,)
        for t in times:
            step = round(t / self.dt)
            if step < 1 or step > self.n_steps or abs(step * self.dt - t) > 1e-9 * max(1.0, t):
                raise ConfigError(f"record time {t} is not on the dt grid within (0, T]")
            out[step] = t
        return out

    @property
    def n_steps(self) -> int:
        return round(self.T / self.dt)


class _JumpSpec:
    """Frozen sampling table and moment set for one (truncated) measure."""

    def __init__(self, mu: LevyMeasure, eps: float, mode: str, label: str):
        finite, _ = mu.total_mass()
        self.active = not mu.is_empty()
        self.sampler: LevySampler | None = None
        self.rate = 0.0
        self.mean_z1 = self.mean_z2 = 0.0
        self.drop_mean_z1 = self.drop_mean_z2 = 0.0
        self.drop_var_z1 = self.drop_var_z2 = 0.0
        if not self.active:
            return
        if not finite and eps <= 0:
            raise ConfigError(f"measure {label} has infinite activity; eps_trunc > 0 required")
        trunc = mu.truncate_small(eps) if eps > 0 else mu
        if not trunc.is_empty():
            try:
                self.sampler = LevySampler(trunc)
                self.rate = self.sampler.rate
                self.mean_z1 = self.sampler.mean_z1
                self.mean_z2 = self.sampler.mean_z2
            except ZeroMass:
                self.sampler = None
        if eps > 0:
            drop = mu.restrict(((0.0, eps), (-eps, eps)))
            if not drop.is_empty():
                self.drop_mean_z1 = float(np.real(levy_integral(drop, lambda z1, z2: z1)))
                self.drop_mean_z2 = float(np.real(levy_integral(drop, lambda z1, z2: z2)))
                if mode == "gaussian_approx":
                    self.drop_var_z1 = float(np.real(levy_integral(drop, lambda z1, z2: z1**2)))
                    self.drop_var_z2 = float(np.real(levy_integral(drop, lambda z1, z2: z2**2)))


class _Compiled:
    """Model constants hoisted out of the step loop."""

    def __init__(self, params: ModelParams, cfg: SimConfig):
        p = params
        self.p = p
        self.h = cfg.dt
        self.sqh = math.sqrt(cfg.dt)
        self.use_w0 = p.sigma > 0
        self.use_w1 = p.a11 > 0 or p.a21 > 0
        self.use_w2 = p.a12 > 0 or p.a22 > 0
        self.njump = _JumpSpec(p.n, cfg.eps_trunc, cfg.small_jump_mode, "n")
        self.mjump = _JumpSpec(p.m, cfg.eps_trunc, cfg.small_jump_mode, "m")
        self.gauss = cfg.small_jump_mode == "gaussian_approx"


@dataclass
class Ensemble:
    record_times: tuple[float, ...]
    Y: np.ndarray  # (n_times, n_paths)
    Z: np.ndarray
    cfg: SimConfig
    sum_Y: np.ndarray = field(default=None)  # chunk-ordered accumulators
    sum_Z: np.ndarray = field(default=None)

    @property
    def n_paths(self) -> int:
        return self.Y.shape[1]

    def index_of(self, t: float) -> int:
        for i, rt in enumerate(self.record_times):
            if abs(rt - t) <= 1e-9 * max(1.0, abs(t)):
                return i
        raise TimeNotRecorded(f"time {t} not in record grid {self.record_times}")


@dataclass
class CoupledEnsemble:
    record_times: tuple[float, ...]
    Yx: np.ndarray
    Zx: np.ndarray
    Yy: np.ndarray
    Zy: np.ndarray
    varsigma: np.ndarray  # (n_paths,), inf if never coalesced
    threshold_absorbed: np.ndarray  # coalescence declared with D > 0 strictly
    swapped: bool
    cfg: SimConfig

    @property
    def n_paths(self) -> int:
        return self.Yx.shape[1]

    def index_of(self, t: float) -> int:
        for i, rt in enumerate(self.record_times):
            if abs(rt - t) <= 1e-9 * max(1.0, abs(t)):
                return i
        raise TimeNotRecorded(f"time {t} not in record grid {self.record_times}")

    def coalesced_by(self, t: float) -> np.ndarray:
        return self.varsigma <= t + 1e-12


def _segment_sums(counts: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    if values.size == 0:
        return np.zeros(n)
    idx = np.repeat(np.arange(n), counts)
    return np.bincount(idx, weights=values, minlength=n)


def _simulate_chunk(params: ModelParams, comp: _Compiled, cfg: SimConfig, chunk: int,
                    n: int, x: tuple[float, float]):
    p = params
    h, sqh = comp.h, comp.sqh
    g = {sid: rng.stream(cfg.seed, chunk, sid) for sid in range(11)}
    Y = np.full(n, float(x[0]))
    Z = np.full(n, float(x[1]))
    rec = cfg.record_steps()
    out_Y = {}
    out_Z = {}
    zero = np.zeros(n)
    for step in range(1, cfg.n_steps + 1):
        Yc = np.maximum(Y, 0.0)
        xi0 = g[rng.W0].standard_normal(n) if comp.use_w0 else zero
        xi1 = g[rng.W1].standard_normal(n) if comp.use_w1 else zero
        xi2 = g[rng.W2].standard_normal(n) if comp.use_w2 else zero
        jn1 = jn2 = zero
        if comp.njump.sampler is not None:
            cnt = g[rng.N_COUNT].poisson(comp.njump.rate * h, n)
            z1j, z2j = comp.njump.sampler.draw(g[rng.N_JUMP], int(cnt.sum()))
            jn1 = _segment_sums(cnt, z1j, n)
            jn2 = _segment_sums(cnt, z2j, n)
        jm1 = jm2 = zero
        if comp.mjump.sampler is not None:
            cnt = g[rng.M_COUNT].poisson(Yc * (comp.mjump.rate * h))
            z1j, z2j = comp.mjump.sampler.draw(g[rng.M_JUMP], int(cnt.sum()))
            jm1 = _segment_sums(cnt, z1j, n)
            jm2 = _segment_sums(cnt, z2j, n)
        gy = gz = zero
        if comp.gauss:
            vy = comp.njump.drop_var_z1 + Yc * comp.mjump.drop_var_z1
            vz = comp.njump.drop_var_z2 + Yc * comp.mjump.drop_var_z2
            gy = np.sqrt(vy * h) * g[rng.GAUSS_APPROX].standard_normal(n)
            gz = np.sqrt(vz * h) * g[rng.GAUSS_APPROX].standard_normal(n)
        root = np.sqrt(Yc * h)
        Ynew = (
            Y
            + (p.a2 - p.a1 * Yc) * h
            + math.sqrt(2 * p.a11) * root * xi1
            + math.sqrt(2 * p.a12) * root * xi2
            + jn1
            + comp.njump.drop_mean_z1 * h  # mean of dropped uncompensated small N-jumps
            + jm1
            - Yc * comp.mjump.mean_z1 * h
            + gy
        )
        Znew = (
            Z
            - (p.b0 + p.b1 * Yc + p.b2 * Z) * h
            + p.sigma * sqh * xi0
            + math.sqrt(2 * p.a21) * root * xi1
            + math.sqrt(2 * p.a22) * root * xi2
            + jn2
            - comp.njump.mean_z2 * h
            + jm2
            - Yc * comp.mjump.mean_z2 * h
            + gz
        )
        Y = np.maximum(Ynew, 0.0)
        Z = Znew
        if step in rec:
            out_Y[rec[step]] = Y.copy()
            out_Z[rec[step]] = Z.copy()
    return out_Y, out_Z


def _simulate_chunk_coupled(params: ModelParams, comp: _Compiled, cfg: SimConfig, chunk: int,
                            n: int, x: tuple[float, float], y: tuple[float, float],
                            coal_tol: float):
    p = params
    h, sqh = comp.h, comp.sqh
    g = {sid: rng.stream(cfg.seed, chunk, sid) for sid in range(11)}
    Yb = np.full(n, float(y[0]))  # base copy (smaller start)
    Zb = np.full(n, float(y[1]))
    D = np.full(n, float(x[0]) - float(y[0]))
    dZ = np.full(n, float(x[1]) - float(y[1]))
    varsigma = np.full(n, np.inf)
    thresh_abs = np.zeros(n, dtype=bool)
    if float(x[0]) - float(y[0]) <= coal_tol:
        varsigma[:] = 0.0
        thresh_abs[:] = float(x[0]) != float(y[0])
        D[:] = 0.0
    decay = math.exp(-p.b2 * h)
    rec = cfg.record_steps()
    out = {}
    zero = np.zeros(n)
    for step in range(1, cfg.n_steps + 1):
        t = step * h
        Yc = np.maximum(Yb, 0.0)
        Dc = np.maximum(D, 0.0)
        alive = D > 0.0
        xi0 = g[rng.W0].standard_normal(n) if comp.use_w0 else zero
        xi1 = g[rng.W1].standard_normal(n) if comp.use_w1 else zero
        xi2 = g[rng.W2].standard_normal(n) if comp.use_w2 else zero
        jn1 = jn2 = zero
        if comp.njump.sampler is not None:
            cnt = g[rng.N_COUNT].poisson(comp.njump.rate * h, n)
            z1j, z2j = comp.njump.sampler.draw(g[rng.N_JUMP], int(cnt.sum()))
            jn1 = _segment_sums(cnt, z1j, n)
            jn2 = _segment_sums(cnt, z2j, n)
        jm1 = jm2 = zero
        if comp.mjump.sampler is not None:
            cnt = g[rng.M_COUNT].poisson(Yc * (comp.mjump.rate * h))
            z1j, z2j = comp.mjump.sampler.draw(g[rng.M_JUMP], int(cnt.sum()))
            jm1 = _segment_sums(cnt, z1j, n)
            jm2 = _segment_sums(cnt, z2j, n)
        # difference-process noise: independent, scaled by D (branching property)
        xd1 = g[rng.D_W].standard_normal(n)
        xd2 = g[rng.D_W].standard_normal(n)
        jd1 = jd2 = zero
        if comp.mjump.sampler is not None:
            cntd = g[rng.DM_COUNT].poisson(Dc * (comp.mjump.rate * h))
            z1j, z2j = comp.mjump.sampler.draw(g[rng.DM_JUMP], int(cntd.sum()))
            jd1 = _segment_sums(cntd, z1j, n)
            jd2 = _segment_sums(cntd, z2j, n)
        root = np.sqrt(Yc * h)
        rootd = np.sqrt(Dc * h)
        Ybn = (
            Yb
            + (p.a2 - p.a1 * Yc) * h
            + math.sqrt(2 * p.a11) * root * xi1
            + math.sqrt(2 * p.a12) * root * xi2
            + jn1
            + comp.njump.drop_mean_z1 * h
            + jm1
            - Yc * comp.mjump.mean_z1 * h
        )
        Zbn = (
            Zb
            - (p.b0 + p.b1 * Yc + p.b2 * Zb) * h
            + p.sigma * sqh * xi0
            + math.sqrt(2 * p.a21) * root * xi1
            + math.sqrt(2 * p.a22) * root * xi2
            + jn2
            - comp.njump.mean_z2 * h
            + jm2
            - Yc * comp.mjump.mean_z2 * h
        )
        Dn = (
            D
            - p.a1 * Dc * h
            + math.sqrt(2 * p.a11) * rootd * xd1
            + math.sqrt(2 * p.a12) * rootd * xd2
            + jd1
            - Dc * comp.mjump.mean_z1 * h
        )
        Dn = np.maximum(Dn, 0.0)
        dZn = (
            dZ
            - (p.b1 * Dc + p.b2 * dZ) * h
            + math.sqrt(2 * p.a21) * rootd * xd1
            + math.sqrt(2 * p.a22) * rootd * xd2
            + jd2
            - Dc * comp.mjump.mean_z2 * h
        )
        # absorbed paths: deterministic decay of the accumulated Z-difference
        dZ = np.where(alive, dZn, dZ * decay)
        newly = alive & (Dn <= coal_tol)
        varsigma = np.where(newly, t, varsigma)
        thresh_abs |= newly & (Dn > 0.0)
        D = np.where(alive & ~newly, Dn, 0.0)
        Yb = np.maximum(Ybn, 0.0)
        Zb = Zbn
        if step in rec:
            out[rec[step]] = (Yb + D, Zb + dZ, Yb.copy(), Zb.copy())
    return out, varsigma, thresh_abs


def _chunks(cfg: SimConfig):
    sizes = []
    left = cfg.n_paths
    while left > 0:
        sizes.append(min(cfg.chunk_size, left))
        left -= sizes[-1]
    return sizes


def simulate_paths(params: ModelParams, x: tuple[float, float], cfg: SimConfig) -> Ensemble:
    """Ensemble of independent paths started from x = (x1, x2), x1 >= 0."""
    if x[0] < 0:
        raise ConfigError("x1 must be >= 0")
    comp = _Compiled(params, cfg)
    rec = cfg.record_steps()
    times = tuple(sorted(rec.values()))
    sizes = _chunks(cfg)

    def run(args):
        i, sz = args
        return _simulate_chunk(params, comp, cfg, i, sz, x)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(run, enumerate(sizes)))
    else:
        results = [run(a) for a in enumerate(sizes)]
    Y = np.empty((len(times), cfg.n_paths))
    Z = np.empty((len(times), cfg.n_paths))
    sum_Y = np.zeros(len(times))
    sum_Z = np.zeros(len(times))
    off = 0
    for (oy, oz), sz in zip(results, sizes):
        for k, t in enumerate(times):
            Y[k, off : off + sz] = oy[t]
            Z[k, off : off + sz] = oz[t]
            sum_Y[k] += float(np.sum(oy[t]))
            sum_Z[k] += float(np.sum(oz[t]))
        off += sz
    return Ensemble(record_times=times, Y=Y, Z=Z, cfg=cfg, sum_Y=sum_Y, sum_Z=sum_Z)


def simulate_coupled(
    params: ModelParams,
    x: tuple[float, float],
    y: tuple[float, float],
    cfg: SimConfig,
) -> CoupledEnsemble:
    """Shared-noise coupled pair started from x and y (x1 >= y1, else the
    pair is swapped internally and flagged)."""
    swapped = False
    if x[0] < y[0]:
        x, y = y, x
        swapped = True
    if y[0] < 0:
        raise ConfigError("starting Y-coordinates must be >= 0")
    coal_tol = cfg.coal_tol if cfg.coal_tol is not None else 1e-12 * max(1.0, x[0])
    comp = _Compiled(params, cfg)
    rec = cfg.record_steps()
    times = tuple(sorted(rec.values()))
    sizes = _chunks(cfg)

    def run(args):
        i, sz = args
        return _simulate_chunk_coupled(params, comp, cfg, i, sz, x, y, coal_tol)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(run, enumerate(sizes)))
    else:
        results = [run(a) for a in enumerate(sizes)]
    shape = (len(times), cfg.n_paths)
    Yx, Zx, Yy, Zy = (np.empty(shape) for _ in range(4))
    varsigma = np.empty(cfg.n_paths)
    thr = np.empty(cfg.n_paths, dtype=bool)
    off = 0
    for (out, vs, ta), sz in zip(results, sizes):
        for k, t in enumerate(times):
            yx, zx, yy, zy = out[t]
            Yx[k, off : off + sz] = yx
            Zx[k, off : off + sz] = zx
            Yy[k, off : off + sz] = yy
            Zy[k, off : off + sz] = zy
        varsigma[off : off + sz] = vs
        thr[off : off + sz] = ta
        off += sz
    return CoupledEnsemble(
        record_times=times,
        Yx=Yx,
        Zx=Zx,
        Yy=Yy,
        Zy=Zy,
        varsigma=varsigma,
        threshold_absorbed=thr,
        swapped=swapped,
        cfg=cfg,
    )


def empirical_at(ens: Ensemble, t: float):
    """Equal-weight empirical law of (Y, Z) at a recorded time."""
    from .analysis import EmpiricalDistribution

    k = ens.index_of(t)
    return EmpiricalDistribution.from_samples(ens.Y[k], ens.Z[k])
