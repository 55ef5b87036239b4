"""Monte Carlo harness for the small-time coupling experiments.

Pipeline: configure a driver (augmented spec) against its stable attractor,
simulate the coupled rescaled pair across a descending t-grid, record
replicate-level sup distances to CSV, then post-process into tail curves,
rate-slope regressions, and coupling-based Wasserstein upper estimates.

Randomness is counter-based: every replicate draws all of its marks from a
substream keyed by (seed, tag, replicate) — never by t — so one replicate
corresponds to one underlying driver path viewed at every scale, outputs are
byte-identical for any worker count, and curves are smooth in t.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from ._rng import substream
from .couplings import CoupledJumpStream
from .levy_model import AugmentedSpec, HtildeCache
from .sde_engine import (
    CoefficientField,
    IntegrationError,
    integrate_pair,
    sup_distance,
)

__all__ = [
    "SCHEMA",
    "ExperimentConfig",
    "TailCurve",
    "RateFit",
    "WassersteinUpper",
    "RunResult",
    "RescaledComoSampler",
    "RescaledThinningSampler",
    "RescaledIndependentSampler",
    "paper_t_grid",
    "desk_t_grid",
    "run_coupled_mc",
    "read_run",
    "tail_curves",
    "rate_fit",
    "wasserstein_upper",
    "write_tails_csv",
    "write_ratefit_csv",
]

SCHEMA = "lcl.v1"
SAMPLES_HEADER = "run_id,t,replicate,distance,aborted"
TAILS_HEADER = "run_id,t,r,prob,n,aborted"
RATEFIT_HEADER = "run_id,statistic,slope,stderr,intercept"
THETA_HEADER = "run_id,t,replicate,theta_stat"

_MARK_TAG = 0xE0
_LEG1_TAG = 0xE1
_LEG2_TAG = 0xE2
_BOOT_TAG = 0xB007


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def paper_t_grid() -> np.ndarray:
    """The 51-point grid exp(1 - e^{k/20}), k = 0..50 (descending from 1)."""
    k = np.arange(51)
    return np.exp(1.0 - np.exp(k / 20.0))


def desk_t_grid(n: int = 8) -> np.ndarray:
    """n log-spaced points descending through [1e-4, 1e-1]."""
    return np.logspace(-1.0, -4.0, n)


# ---------------------------------------------------------------------------
# configuration


def _field_to_dict(V: CoefficientField) -> dict:
    if V.kind == "constant":
        return {"kind": "constant", "matrix": np.asarray(V(np.zeros(V.m))).tolist()}
    if V.kind == "rotation-by-norm":
        return {"kind": "rotation-by-norm", "driver_dim": V.d}
    if V.kind == "linear":
        return {"kind": "linear", "d": V.d}
    raise ValueError(
        f"coefficient field kind {V.kind!r} holds an arbitrary callable and "
        "cannot be serialized; construct it in code"
    )


def _field_from_dict(obj: dict) -> CoefficientField:
    kind = obj.get("kind")
    if kind == "constant":
        return CoefficientField.constant(obj["matrix"])
    if kind == "rotation-by-norm":
        return CoefficientField.rotation_by_norm(obj["driver_dim"])
    if kind == "linear":
        return CoefficientField.linear(obj["d"])
    raise ValueError(f"unknown coefficient field kind {kind!r}")


@dataclass
class ExperimentConfig:
    """One coupled Monte Carlo campaign: a driver against its stable
    attractor, a coupling, an SDE, and a t-grid."""

    driver: AugmentedSpec
    coupling: str
    V: CoefficientField
    x0: np.ndarray
    T: float
    t_grid: Sequence[float]
    N: int
    eps_policy: dict = field(
        default_factory=lambda: {"kind": "budget", "events": 2000.0}
    )
    h: float = 0.02
    seed: int = 0
    out_dir: str = "."
    theta: float = 1.0

    def __post_init__(self):
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        if self.coupling not in ("thinning", "comonotonic", "independent"):
            raise ValueError(f"unknown coupling {self.coupling!r}")
        if self.T <= 0 or self.h <= 0:
            raise ValueError("T and h must be positive")
        if self.N < 100:
            raise ValueError("at least 100 replicates per t are required")
        if self.t_grid.size == 0:
            raise ValueError("t_grid must be non-empty")
        if np.any((self.t_grid <= 0.0) | (self.t_grid > 1.0)):
            raise ValueError("t_grid values must lie in (0, 1]")
        if np.any(np.diff(self.t_grid) >= 0.0):
            raise ValueError("t_grid must be strictly descending")
        kind = self.eps_policy.get("kind")
        if kind == "budget":
            if self.eps_policy.get("events", 0.0) <= 0:
                raise ValueError("event budget must be positive")
        elif kind == "fixed":
            if self.eps_policy.get("eps", 0.0) <= 0:
                raise ValueError("fixed eps must be positive")
        else:
            raise ValueError(f"unknown eps policy {kind!r}")
        if int(self.seed) < 0:
            raise ValueError("seed must be a nonnegative integer")
        self.seed = int(self.seed)
        d = self.driver.base.d
        need = d if self.V.is_additive else None
        if self.V.is_additive:
            if self.V.m != need:
                raise ValueError(
                    f"additive coefficient expects state dimension {d}"
                )
        elif self.V.d != d:
            raise ValueError(
                f"coefficient field consumes a {self.V.d}-dimensional driver, "
                f"the configured driver has d={d}"
            )
        if self.x0.size != self.V.m:
            raise ValueError(
                f"x0 has size {self.x0.size}, coefficient field expects {self.V.m}"
            )

    @property
    def attractor(self) -> AugmentedSpec:
        return AugmentedSpec.stable(self.driver.base)

    @property
    def level_cap(self) -> float:
        """Intensity cap in level space: events are kept while their radial
        tail level sits below this cap."""
        if self.eps_policy["kind"] == "budget":
            return float(self.eps_policy["events"]) / self.T
        eps = float(self.eps_policy["eps"])
        base = self.driver.base
        return (base.c_alpha / base.alpha) * eps**-base.alpha

    @property
    def run_id(self) -> str:
        """Deterministic id of the scientific content (out_dir excluded, so
        the same campaign re-run elsewhere keeps its identity)."""
        payload = {k: v for k, v in self.to_dict().items() if k != "out_dir"}
        digest = hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode()
        ).hexdigest()
        return f"lcl-{digest[:12]}"

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "driver": self.driver.to_dict(),
            "coupling": self.coupling,
            "V": _field_to_dict(self.V),
            "x0": self.x0.tolist(),
            "T": self.T,
            "t_grid": self.t_grid.tolist(),
            "N": self.N,
            "eps_policy": self.eps_policy,
            "h": self.h,
            "seed": self.seed,
            "out_dir": str(self.out_dir),
            "theta": self.theta,
        }

    @staticmethod
    def from_dict(obj: dict) -> "ExperimentConfig":
        if obj.get("schema") != SCHEMA:
            raise ValueError(
                f"unsupported config schema {obj.get('schema')!r}; expected {SCHEMA!r}"
            )
        return ExperimentConfig(
            driver=AugmentedSpec.from_dict(obj["driver"]),
            coupling=obj["coupling"],
            V=_field_from_dict(obj["V"]),
            x0=np.asarray(obj["x0"], dtype=float),
            T=float(obj["T"]),
            t_grid=np.asarray(obj["t_grid"], dtype=float),
            N=int(obj["N"]),
            eps_policy=dict(obj["eps_policy"]),
            h=float(obj["h"]),
            seed=int(obj["seed"]),
            out_dir=obj.get("out_dir", "."),
            theta=float(obj.get("theta", 1.0)),
        )


# ---------------------------------------------------------------------------
# rescaled coupled samplers


@dataclass
class _Marks:
    times: np.ndarray
    gammas: np.ndarray
    dirs: np.ndarray
    uniforms: np.ndarray
    r_z: np.ndarray
    atom_idx: Optional[np.ndarray]


class _MarkedStableBase:
    """Common mark machinery: a Poisson random measure on
    [0, T] x (0, cap) x S with intensity ds x dgamma x sigma(dv); a point at
    level gamma carries the stable jump radius rho_Z_inv(gamma), which is
    invariant under the small-time rescaling by self-similarity."""

    def __init__(self, driver: AugmentedSpec, cap: float, T: float):
        base = driver.base
        if not driver.is_dona:
            raise NotImplementedError(
                "slowly-varying drivers are supported by the diagnostics, "
                "not by the Monte Carlo samplers"
            )
        if base.alpha > 1.0 and not base.balanced:
            raise NotImplementedError(
                "alpha > 1 sampling requires a balanced angular measure "
                "(the truncation compensator vanishes only then)"
            )
        if cap <= 0:
            raise ValueError("level cap must be positive")
        if base.sigma.is_uniform and (
            callable(driver.lam) or callable(driver.trunc)
        ):
            raise NotImplementedError(
                "direction-dependent radial laws need an atomic angular measure"
            )
        self.driver = driver
        self.cap = float(cap)
        self.T = float(T)
        a, c = base.alpha, base.c_alpha
        self.alpha, self.c = a, c
        self.eps = (a * self.cap / c) ** (-1.0 / a)
        self._sigma = base.sigma

    def _draw(self, rng: np.random.Generator) -> _Marks:
        n = int(rng.poisson(self.cap * self.T))
        times = rng.uniform(0.0, self.T, n)
        gammas = rng.uniform(0.0, self.cap, n)
        if self._sigma.is_uniform:
            atom_idx = None
            dirs = self._sigma.sample(rng, n)
        else:
            atom_idx = self._sigma.sample_index(rng, n)
            dirs = self._sigma.directions[atom_idx]
        uniforms = rng.random(n)
        order = np.argsort(times, kind="stable")
        times = times[order]
        gammas = gammas[order]
        dirs = dirs[order]
        uniforms = uniforms[order]
        if atom_idx is not None:
            atom_idx = atom_idx[order]
        r_z = (self.alpha * gammas / self.c) ** (-1.0 / self.alpha)
        return _Marks(times, gammas, dirs, uniforms, r_z, atom_idx)

    def _stream(self, t, jump1, jump2, shared, marks, coupling) -> CoupledJumpStream:
        d = self.driver.base.d
        zeros = np.zeros(d)
        return CoupledJumpStream(
            T=self.T,
            d=d,
            times=marks.times,
            jump1=jump1,
            jump2=jump2,
            shared=shared,
            eps=self.eps,
            comp1=zeros.copy(),
            comp2=zeros.copy(),
            meta={"coupling": coupling, "t": float(t), "level_cap": self.cap},
        )


class RescaledComoSampler(_MarkedStableBase):
    """Comonotonic coupling of the rescaled driver with its attractor.

    Both legs share every (time, level, direction) mark; the attractor jump
    radius is the exact stable inverse and the driver radius is obtained
    through the deviation cache, so the coupled difference keeps full
    relative precision.  Marks do not depend on t: one replicate is one
    underlying path observed at every scale."""

    def __init__(self, driver, cap, T=1.0, u_hi=1e9):
        super().__init__(driver, cap, T)
        self._caches = None
        if driver.q_kind != "constant":
            hi = max(1e9, u_hi)
            sig = driver.base.sigma
            if sig.is_uniform or not any(
                callable(getattr(driver, name)) for name in ("lam", "trunc")
            ):
                self._caches = [HtildeCache(driver, u_range=(1e-9, hi))]
            else:
                self._caches = [
                    HtildeCache(driver, u_range=(1e-9, hi), v=v)
                    for v in sig.directions
                ]

    def sample(self, t: float, rng: np.random.Generator):
        marks = self._draw(rng)
        r2 = marks.r_z
        if self._caches is None:
            r1 = r2
        else:
            u = marks.gammas / t
            if len(self._caches) == 1 or marks.atom_idx is None:
                cache = self._caches[0]
                r1 = r2 * (1.0 - cache.deviation(u) / cache.C)
            else:
                r1 = np.empty_like(r2)
                for j, cache in enumerate(self._caches):
                    m = marks.atom_idx == j
                    r1[m] = r2[m] * (1.0 - cache.deviation(u[m]) / cache.C)
        jump1 = r1[:, None] * marks.dirs
        jump2 = r2[:, None] * marks.dirs
        # the marks are shared; the coupled jumps still differ, which the
        # stream contract records as shared=False
        shared = np.zeros(r2.size, dtype=bool)
        low = marks.gammas < 1.0
        theta_stat = float(np.sum(1.0 / marks.gammas[low]))
        return self._stream(t, jump1, jump2, shared, marks, "comonotonic"), theta_stat


class RescaledThinningSampler(_MarkedStableBase):
    """Thinning coupling: the stable attractor keeps every dominating mark,
    the rescaled driver keeps a mark with probability equal to its density
    ratio at the rescaled radius (at most one by normal attraction)."""

    def __init__(self, driver, cap, T=1.0):
        super().__init__(driver, cap, T)
        if driver.q_kind not in ("constant", "tempered", "truncated"):
            raise NotImplementedError(
                "thinning against the stable dominating measure needs a "
                "density ratio at most one"
            )

    def sample(self, t: float, rng: np.random.Generator):
        marks = self._draw(rng)
        g = t ** (1.0 / self.alpha)
        r2 = marks.r_z
        if self.driver.q_kind == "constant":
            accept = np.ones(r2.size, dtype=bool)
        else:
            prob = np.empty_like(r2)
            if marks.atom_idx is None:
                v0 = np.eye(self.driver.base.d)[0]
                prob[:] = self.driver.density_ratio(g * r2, v0)
            else:
                for j, v in enumerate(self._sigma.directions):
                    m = marks.atom_idx == j
                    prob[m] = self.driver.density_ratio(g * r2[m], v)
            accept = marks.uniforms < prob
        jump2 = r2[:, None] * marks.dirs
        jump1 = jump2 * accept[:, None]
        big = r2 >= 1.0
        theta_stat = float(np.sum(r2[big]))
        return self._stream(t, jump1, jump2, accept, marks, "thinning"), theta_stat


class RescaledIndependentSampler(_MarkedStableBase):
    """Independent legs: the rescaled driver and the attractor are built
    from disjoint mark streams and merged onto one event grid."""

    def __init__(self, driver, cap, T=1.0, u_hi=1e9):
        super().__init__(driver, cap, T)
        self._como = RescaledComoSampler(driver, cap, T, u_hi)

    def sample(self, t, rng1: np.random.Generator, rng2: np.random.Generator):
        m1 = self._draw(rng1)
        m2 = self._draw(rng2)
        if self._como._caches is None:
            r1 = m1.r_z
        else:
            u = m1.gammas / t
            if len(self._como._caches) == 1 or m1.atom_idx is None:
                cache = self._como._caches[0]
                r1 = m1.r_z * (1.0 - cache.deviation(u) / cache.C)
            else:
                r1 = np.empty_like(m1.r_z)
                for j, cache in enumerate(self._como._caches):
                    m = m1.atom_idx == j
                    r1[m] = m1.r_z[m] * (1.0 - cache.deviation(u[m]) / cache.C)
        n1, n2 = m1.times.size, m2.times.size
        times = np.concatenate([m1.times, m2.times])
        order = np.argsort(times, kind="stable")
        d = self.driver.base.d
        jump1 = np.zeros((n1 + n2, d))
        jump2 = np.zeros((n1 + n2, d))
        jump1[:n1] = r1[:, None] * m1.dirs
        jump2[n1:] = m2.r_z[:, None] * m2.dirs
        merged = _Marks(times[order], None, None, None, None, None)
        return (
            self._stream(
                t, jump1[order], jump2[order],
                np.zeros(n1 + n2, dtype=bool), merged, "independent",
            ),
            0.0,
        )


def _make_sampler(cfg: ExperimentConfig):
    cap = cfg.level_cap
    u_hi = 10.0 * cap / float(np.min(cfg.t_grid))
    if cfg.coupling == "comonotonic":
        return RescaledComoSampler(cfg.driver, cap, cfg.T, u_hi)
    if cfg.coupling == "thinning":
        return RescaledThinningSampler(cfg.driver, cap, cfg.T)
    return RescaledIndependentSampler(cfg.driver, cap, cfg.T, u_hi)


# ---------------------------------------------------------------------------
# the Monte Carlo run


@dataclass
class RunResult:
    run_id: str
    samples_path: Path
    theta_path: Path
    summary_path: Path
    summary: dict
    n_computed: int = 0
    n_skipped: int = 0


def _load_completed(out: Path, cfg: ExperimentConfig, run_id: str) -> dict:
    """Parse an interrupted run back into completed (t-index, replicate)
    cells.  Rows missing their theta companion (a write cut mid-cell) are
    treated as incomplete and recomputed."""
    samples = out / "samples.csv"
    if not samples.exists():
        return {}
    lines = samples.read_text().splitlines()
    if not lines or lines[0] != SAMPLES_HEADER:
        raise ValueError("existing samples.csv has an unexpected header")
    theta_map = {}
    theta_file = out / "theta.csv"
    if theta_file.exists():
        for line in theta_file.read_text().splitlines()[1:]:
            parts = line.split(",")
            if len(parts) == 4:
                theta_map[(parts[1], int(parts[2]))] = float(parts[3])
    t_index = {_fmt(t): i for i, t in enumerate(cfg.t_grid)}
    done = {}
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 5:
            continue
        rid, t_str, rep_str, dist, ab = parts
        if rid != run_id:
            raise ValueError(
                f"existing run {rid} does not match this configuration "
                f"({run_id}); refusing to resume"
            )
        if t_str not in t_index:
            raise ValueError(
                f"existing samples contain t={t_str} outside the configured grid"
            )
        rep = int(rep_str)
        key = (t_str, rep)
        if key not in theta_map:
            continue
        ti = t_index[t_str]
        done[(ti, rep)] = (
            ti, rep, float(t_str), float(dist), int(ab), theta_map[key]
        )
    return done


def _cell_stream(cfg: ExperimentConfig, sampler, t: float, rep: int):
    """The coupled stream of one (t, replicate) cell — the only place the
    replicate's substreams are keyed, shared by the runner and the dumpers."""
    if cfg.coupling == "independent":
        return sampler.sample(
            t, substream(cfg.seed, _LEG1_TAG, rep), substream(cfg.seed, _LEG2_TAG, rep)
        )
    return sampler.sample(t, substream(cfg.seed, _MARK_TAG, rep))


def _simulate_cell(cfg: ExperimentConfig, sampler, ti: int, rep: int):
    t = float(cfg.t_grid[ti])
    stream, theta_stat = _cell_stream(cfg, sampler, t, rep)
    try:
        p1, p2 = integrate_pair(stream, cfg.V, cfg.x0, cfg.h)
        return ti, rep, t, sup_distance(p1, p2), 0, theta_stat
    except IntegrationError:
        return ti, rep, t, math.nan, 1, theta_stat


def run_coupled_mc(
    cfg: ExperimentConfig, workers: int = 1, resume: bool = False
) -> RunResult:
    """Simulate the coupled pair at every (t, replicate) cell and write
    ``samples.csv``, ``theta.csv``, and ``summary.json`` under
    ``cfg.out_dir``.  Output bytes are independent of ``workers``.  With
    ``resume`` the completed cells of an interrupted run are kept verbatim
    and never recomputed."""
    t_start = time.monotonic()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run_id = cfg.run_id
    done = _load_completed(out, cfg, run_id) if resume else {}
    tasks = [
        (ti, rep)
        for ti in range(cfg.t_grid.size)
        for rep in range(cfg.N)
        if (ti, rep) not in done
    ]
    rows = list(done.values())
    if tasks:
        sampler = _make_sampler(cfg)
        if workers <= 1:
            rows += [_simulate_cell(cfg, sampler, ti, rep) for ti, rep in tasks]
        else:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                rows += list(
                    ex.map(lambda tk: _simulate_cell(cfg, sampler, *tk), tasks)
                )
    rows.sort(key=lambda r: (r[0], r[1]))

    sample_lines = [SAMPLES_HEADER]
    theta_lines = [THETA_HEADER]
    aborted: dict = {}
    for ti, rep, t, dist, ab, theta_stat in rows:
        sample_lines.append(f"{run_id},{_fmt(t)},{rep},{_fmt(dist)},{ab}")
        theta_lines.append(f"{run_id},{_fmt(t)},{rep},{_fmt(theta_stat)}")
        if ab:
            aborted[t] = aborted.get(t, 0) + 1
    samples_path = out / "samples.csv"
    theta_path = out / "theta.csv"
    samples_path.write_text("\n".join(sample_lines) + "\n")
    theta_path.write_text("\n".join(theta_lines) + "\n")

    flagged = sorted(
        (t for t, nab in aborted.items() if nab / cfg.N > 0.05), reverse=True
    )
    summary = {
        "schema": SCHEMA,
        "run_id": run_id,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "version": __version__,
        "wall_time_s": time.monotonic() - t_start,
        "aborted": {_fmt(t): n for t, n in sorted(aborted.items(), reverse=True)},
        "flagged": [_fmt(t) for t in flagged],
        "outputs": {"samples": samples_path.name, "theta": theta_path.name},
    }
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return RunResult(
        run_id, samples_path, theta_path, summary_path, summary,
        n_computed=len(tasks), n_skipped=len(done),
    )


def read_run(out_dir) -> dict:
    """Load a run directory back into aligned per-t arrays.

    Returns ``{"run_id", "t_values" (descending), "by_t": {t: distances of
    completed replicates}, "theta_by_t": {t: aligned theta statistics},
    "aborted": {t: count}}``."""
    out = Path(out_dir)
    samples = (out / "samples.csv").read_text().splitlines()
    if samples[0] != SAMPLES_HEADER:
        raise ValueError(f"unexpected samples header {samples[0]!r}")
    theta_map = {}
    theta_file = out / "theta.csv"
    if theta_file.exists():
        tl = theta_file.read_text().splitlines()
        if tl[0] != THETA_HEADER:
            raise ValueError(f"unexpected theta header {tl[0]!r}")
        for line in tl[1:]:
            _, t, rep, val = line.split(",")
            theta_map[(t, int(rep))] = float(val)
    run_id = None
    order: list = []
    by_t: dict = {}
    theta_by_t: dict = {}
    aborted: dict = {}
    for line in samples[1:]:
        rid, t_str, rep, dist, ab = line.split(",")
        run_id = rid
        t = float(t_str)
        if t not in by_t:
            order.append(t)
            by_t[t] = []
            theta_by_t[t] = []
            aborted[t] = 0
        if int(ab):
            aborted[t] += 1
        else:
            by_t[t].append(float(dist))
            theta_by_t[t].append(theta_map.get((t_str, int(rep)), 0.0))
    return {
        "run_id": run_id,
        "t_values": order,
        "by_t": {t: np.asarray(v) for t, v in by_t.items()},
        "theta_by_t": {t: np.asarray(v) for t, v in theta_by_t.items()},
        "aborted": aborted,
    }


# ---------------------------------------------------------------------------
# tail curves


@dataclass
class TailCurve:
    t: float
    r_grid: np.ndarray
    probs: np.ndarray
    n: int
    aborted: int

    def check_invariants(self) -> None:
        if np.any((self.probs < 0.0) | (self.probs > 1.0)):
            raise AssertionError("probabilities must lie in [0, 1]")
        if np.any(np.diff(self.probs) > 0.0):
            raise AssertionError("tail curve must be non-increasing in r")
        counts = self.probs * self.n
        if not np.allclose(counts, np.round(counts), atol=1e-9):
            raise AssertionError("probs * n must be integral counts")


def tail_curves(
    by_t: dict,
    f: Callable[[float], float],
    r_grid: Optional[np.ndarray] = None,
    aborted: Optional[dict] = None,
) -> list:
    """Empirical survival curves of ``f(t)^{-1} * distance`` per t.

    The default threshold grid is 64 log-spaced points spanning the pooled
    1%-99.9% quantiles of the positive rescaled distances.  Aborted counts
    (right-censored at +infinity) ride along in the ``aborted`` field."""
    if not by_t:
        raise ValueError("no samples provided")
    ts = sorted(by_t, reverse=True)
    rescaled = {}
    for t in ts:
        vals = np.asarray(by_t[t], dtype=float)
        if vals.size == 0:
            raise ValueError(f"no completed samples at t={t!r}")
        rescaled[t] = vals / f(t)
    if r_grid is None:
        pooled = np.concatenate([rescaled[t] for t in ts])
        pos = pooled[pooled > 0.0]
        if pos.size == 0:
            r_grid = np.logspace(-3.0, 0.0, 64)
        else:
            lo, hi = np.quantile(pos, [0.01, 0.999])
            if not hi > lo:
                lo, hi = 0.5 * hi, 2.0 * hi
            r_grid = np.logspace(math.log10(lo), math.log10(hi), 64)
    r_grid = np.asarray(r_grid, dtype=float)
    curves = []
    for t in ts:
        vals = rescaled[t]
        probs = (vals[None, :] > r_grid[:, None]).mean(axis=1)
        curve = TailCurve(
            t=float(t),
            r_grid=r_grid,
            probs=probs,
            n=int(vals.size),
            aborted=int(aborted.get(t, 0)) if aborted else 0,
        )
        curve.check_invariants()
        curves.append(curve)
    return curves


def write_tails_csv(path, curves, run_id: str) -> None:
    lines = [TAILS_HEADER]
    for c in curves:
        for r, p in zip(c.r_grid, c.probs):
            lines.append(
                f"{run_id},{_fmt(c.t)},{_fmt(r)},{_fmt(p)},{c.n},{c.aborted}"
            )
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# rate fits


@dataclass
class RateFit:
    statistic: str
    slope: float
    intercept: float
    stderr: float
    t_values: np.ndarray
    stat_values: np.ndarray
    excluded: list

    def refit(self) -> "RateFit":
        """Re-run the regression from the stored per-t statistics."""
        slope, intercept, stderr = _ols_loglog(self.t_values, self.stat_values)
        return RateFit(
            self.statistic, slope, intercept, stderr,
            self.t_values.copy(), self.stat_values.copy(), list(self.excluded),
        )


def _ols_loglog(ts: np.ndarray, vals: np.ndarray):
    x = np.log(ts)
    y = np.log(vals)
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    dof = x.size - 2
    stderr = math.sqrt(float(np.sum(resid**2)) / dof / sxx) if dof > 0 else math.nan
    return slope, float(intercept), stderr


def _statistic(values: np.ndarray, statistic: str, theta, theta_stats):
    if statistic == "median":
        return float(np.median(values))
    if statistic == "trimmed-mean":
        from scipy.stats import trim_mean

        return float(trim_mean(values, 0.1))
    if statistic.startswith("quantile:"):
        q = float(statistic.split(":", 1)[1])
        if not 0.0 < q < 1.0:
            raise ValueError("quantile level must lie in (0, 1)")
        return float(np.quantile(values, q))
    if statistic == "mean":
        return float(np.mean(values))
    if statistic == "theta-mean":
        if theta_stats is None:
            raise ValueError(
                "the theta-mean statistic needs the per-replicate theta "
                "statistics (pass theta_by_t)"
            )
        w = np.exp(-theta * np.asarray(theta_stats, dtype=float))
        return float(np.sum(w * values) / np.sum(w))
    raise ValueError(f"unknown statistic {statistic!r}")


def rate_fit(
    by_t: dict,
    statistic: str = "median",
    alpha: Optional[float] = None,
    force: bool = False,
    theta: float = 1.0,
    theta_by_t: Optional[dict] = None,
) -> RateFit:
    """OLS of log statistic(t) on log t.

    The plain mean is refused for alpha < 1 (or unknown alpha) unless
    ``force`` is set: the sup distance need not have a finite mean there,
    so quantile-type statistics are the faithful default.  t-points whose
    statistic is zero are excluded with a warning."""
    if statistic == "mean" and not force and (alpha is None or alpha < 1.0):
        raise ValueError(
            "the plain mean is not robust for alpha < 1 (the sup distance "
            "may have infinite mean); use median/quantile or pass force=True"
        )
    ts, vals, excluded = [], [], []
    for t in sorted(by_t, reverse=True):
        v = _statistic(
            np.asarray(by_t[t], dtype=float),
            statistic,
            theta,
            None if theta_by_t is None else theta_by_t[t],
        )
        if v == 0.0:
            warnings.warn(
                f"t={t!r} excluded from the rate fit: statistic is zero",
                stacklevel=2,
            )
            excluded.append(float(t))
            continue
        ts.append(float(t))
        vals.append(v)
    if len(ts) < 4:
        raise ValueError(
            f"rate fit needs at least 4 usable t-points, got {len(ts)}"
        )
    ts = np.asarray(ts)
    vals = np.asarray(vals)
    slope, intercept, stderr = _ols_loglog(ts, vals)
    return RateFit(statistic, slope, intercept, stderr, ts, vals, excluded)


def write_ratefit_csv(path, fits, run_id: str) -> None:
    lines = [RATEFIT_HEADER]
    for fit in fits:
        lines.append(
            f"{run_id},{fit.statistic},{_fmt(fit.slope)},"
            f"{_fmt(fit.stderr)},{_fmt(fit.intercept)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Wasserstein upper estimates


@dataclass
class WassersteinUpper:
    q: float
    estimate: float
    ci_low: float
    ci_high: float
    n: int
    truncated: bool


def wasserstein_upper(
    distances: np.ndarray,
    q: float,
    alpha: Optional[float] = None,
    seed: int = 0,
    truncated: bool = False,
    n_boot: int = 1000,
) -> WassersteinUpper:
    """Coupling-based upper estimate of the q-Wasserstein distance: the
    empirical mean of distance^q with a percentile bootstrap CI (fixed
    sub-seed).  Any coupling's moment dominates the infimum, so this is an
    upper estimate by construction."""
    if q <= 0.0:
        raise ValueError("q must be positive")
    if q > 1.0 and (alpha is None or alpha <= 1.0):
        raise ValueError(
            "q > 1 requires a finite q-th moment regime (alpha > 1)"
        )
    vals = np.asarray(distances, dtype=float)
    if vals.size == 0:
        raise ValueError("no samples")
    if truncated:
        vals = np.minimum(vals, 1.0)
    powered = vals**q
    est = float(powered.mean())
    rng = substream(seed, _BOOT_TAG)
    idx = rng.integers(0, vals.size, size=(n_boot, vals.size))
    boot = powered[idx].mean(axis=1)
    lo, hi = np.quantile(boot, [0.025, 0.975])
    return WassersteinUpper(q, est, float(lo), float(hi), int(vals.size), truncated)
