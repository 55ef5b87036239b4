"""Coupled jump-stream samplers.

Three couplings of a driver pair are provided:

* **thinning** — one dominating Poisson stream, each driver accepts an event
  with probability given by its density w.r.t. the dominating measure; an
  event accepted by both is *shared* (identical jump in both drivers).
* **comonotonic** — one stream of (time, epoch, direction) marks; each driver
  maps the epoch through its own radial-tail inverse, so jump magnitudes are
  aligned through their quantiles.
* **independent** — two disjoint streams merged, the no-coupling baseline.

All samplers are pure functions of (problem, horizon, seed): replicate- and
worker-independent determinism comes from the counter-based substreams of
:mod:`._rng`.  Small jumps below the truncation level are dropped (never
Gaussian-substituted); for infinite-variation drivers (alpha > 1) the dropped
compensated mass is folded back into the per-unit-time drift so the truncated
stream keeps the exact (zero) mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate as _integrate
from scipy import special as _special

from ._rng import mix_key, substream
from .levy_model import AugmentedSpec, RadialTail, upper_gamma

__all__ = [
    "CoupledJumpStream",
    "ThinningSampler",
    "ComonotonicSampler",
    "IndependentSampler",
    "sample_thinning",
    "sample_comonotonic",
    "sample_independent",
    "truncation_error",
    "first_moment_above",
    "default_eps",
    "lambda_for_eps",
]

_MAX_EXPECTED_EVENTS = 2.0e8


# ---------------------------------------------------------------------------
# the coupled stream


@dataclass
class CoupledJumpStream:
    """Time-sorted coupled jump events over a finite horizon.

    ``jump1[k]``/``jump2[k]`` are the two drivers' jumps at ``times[k]`` (a
    zero vector when that driver does not jump there); ``comp1``/``comp2``
    are per-unit-time drift vectors.  ``meta`` carries the coupling tag, the
    seed, and sampler-specific extras (the epoch array under the comonotonic
    coupling).  Equal times are kept in generation order (stable sort), and
    are a measure-zero floating-point collision.
    """

    T: float
    d: int
    times: np.ndarray
    jump1: np.ndarray
    jump2: np.ndarray
    shared: np.ndarray
    eps: float
    comp1: np.ndarray
    comp2: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_events(self) -> int:
        return self.times.size

    def jumps(self, which: int) -> np.ndarray:
        if which not in (1, 2):
            raise ValueError("driver index must be 1 or 2")
        return self.jump1 if which == 1 else self.jump2

    def comp(self, which: int) -> np.ndarray:
        return self.comp1 if which == 1 else self.comp2

    def marginal_at(self, which: int, ts) -> np.ndarray:
        """Driver path Y_i at query times: retained-jump sum plus drift."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        jumps = self.jumps(which)
        csum = np.vstack([np.zeros((1, self.d)), np.cumsum(jumps, axis=0)])
        idx = np.searchsorted(self.times, ts, side="right")
        return csum[idx] + ts[:, None] * self.comp(which)[None, :]

    def sup_difference(self) -> float:
        """sup over [0, T] of |Y_1(t) - Y_2(t)|.  The difference is piecewise
        linear between events, so the sup is attained at segment endpoints."""
        dcomp = self.comp1 - self.comp2
        if self.n_events == 0:
            return float(np.linalg.norm(self.T * dcomp))
        dj = np.cumsum(self.jump1 - self.jump2, axis=0)
        before = np.vstack([np.zeros((1, self.d)), dj[:-1]])
        at_events = np.linalg.norm(dj + self.times[:, None] * dcomp, axis=1)
        pre_events = np.linalg.norm(before + self.times[:, None] * dcomp, axis=1)
        terminal = float(np.linalg.norm(dj[-1] + self.T * dcomp))
        return float(max(at_events.max(), pre_events.max(), terminal))

    def check_invariants(self) -> None:
        if np.any(np.diff(self.times) < 0):
            raise AssertionError("event times are not sorted")
        if self.n_events and (self.times[0] <= 0 or self.times[-1] > self.T):
            raise AssertionError("event times outside (0, T]")
        mags1 = np.linalg.norm(self.jump1, axis=1)
        mags2 = np.linalg.norm(self.jump2, axis=1)
        if np.any((mags1 == 0) & (mags2 == 0)):
            raise AssertionError("degenerate event with no jump in either driver")
        if self.meta.get("coupling") == "comonotonic":
            if np.any(self.shared):
                raise AssertionError("comonotonic events must never be marked shared")
            cap = self.meta.get("lambda_cap")
            if cap is not None and "epochs" in self.meta:
                if np.any(np.asarray(self.meta["epochs"]) > cap):
                    raise AssertionError("epoch beyond the cap")
        else:
            on = self.shared
            if np.any(np.linalg.norm(self.jump1[on] - self.jump2[on], axis=1) > 0):
                raise AssertionError("shared event with differing jumps")
            if np.any(mags1[mags1 > 0] < self.eps) or np.any(mags2[mags2 > 0] < self.eps):
                raise AssertionError("retained jump below the truncation level")


def _sorted_stream(T, d, times, jump1, jump2, shared, eps, comp1, comp2, meta):
    order = np.argsort(times, kind="stable")
    meta = dict(meta)
    if "epochs" in meta:
        meta["epochs"] = np.asarray(meta["epochs"])[order]
    return CoupledJumpStream(
        T=float(T),
        d=int(d),
        times=times[order],
        jump1=jump1[order],
        jump2=jump2[order],
        shared=shared[order],
        eps=float(eps),
        comp1=np.asarray(comp1, dtype=float),
        comp2=np.asarray(comp2, dtype=float),
        meta=meta,
    )


# ---------------------------------------------------------------------------
# radial moments, truncation bias, level policies


def first_moment_above(spec: AugmentedSpec, eps: float, v) -> float:
    """``int_eps^inf x Q(x,v) x^{-alpha-1} dx`` — the retained radial first
    moment in direction v.  Closed forms for the catalog, quadrature for
    radial modulation; an infinity sentinel when the integral diverges."""
    a = spec.base.alpha
    c = spec.base.c_alpha
    if spec.q_kind == "constant":
        if a <= 1.0:
            return math.inf
        return c * eps ** (1.0 - a) / (a - 1.0)
    if spec.q_kind == "tempered":
        lam = spec._param_at("lam", v)
        if lam == 0.0:
            return math.inf if a <= 1.0 else c * eps ** (1.0 - a) / (a - 1.0)
        return c * lam ** (a - 1.0) * float(upper_gamma(1.0 - a, lam * eps))
    if spec.q_kind == "truncated":
        cut = spec._param_at("trunc", v)
        if eps >= cut:
            return 0.0
        return c * (eps ** (1.0 - a) - cut ** (1.0 - a)) / (a - 1.0)
    if a <= 1.0:
        return math.inf
    H = spec.donna.H
    top = max(1.0, eps)
    below_one = 0.0
    if eps < 1.0:
        below_one, _ = _integrate.quad(
            lambda y: H(y) * y**-a, eps, 1.0, epsrel=1e-9, limit=200
        )
    return c * (below_one + top ** (1.0 - a) / (a - 1.0))


def _vector_first_moment(spec: AugmentedSpec, eps_by_atom) -> np.ndarray:
    """``int_{|w| >= eps(v)} w nu(dw)`` with a per-direction cutoff."""
    sig = spec.base.sigma
    if sig.is_uniform:
        # direction-independent radial law, zero mean direction
        return np.zeros(spec.base.d)
    out = np.zeros(spec.base.d)
    for j, (v, w) in enumerate(zip(sig.directions, sig.weights)):
        e = float(eps_by_atom[j]) if np.ndim(eps_by_atom) else float(eps_by_atom)
        out += w * first_moment_above(spec, e, v) * v
    return out


def _compensator(spec: AugmentedSpec, eps_by_atom) -> np.ndarray:
    """Per-unit-time drift of the truncated stream: zero natural drift for
    alpha < 1; the mean correction ``-int_{|w| >= eps} w nu(dw)`` for the
    zero-mean alpha > 1 convention."""
    if spec.base.alpha < 1.0:
        return np.zeros(spec.base.d)
    return -_vector_first_moment(spec, eps_by_atom)


def truncation_error(spec: AugmentedSpec, eps: float) -> tuple:
    """``(l1, l2)`` with ``l_r = int_{|w| < eps} |w|^r nu(dw)``; l1 is an
    infinity sentinel (not an error) for infinite-variation drivers."""
    if not (0.0 < eps <= 1.0):
        raise ValueError("eps must lie in (0, 1]")
    a = spec.base.alpha
    c = spec.base.c_alpha
    sig = spec.base.sigma
    dirs = [None] if sig.is_uniform else list(sig.directions)
    weights = [1.0] if sig.is_uniform else list(sig.weights)
    zero_v = np.zeros(sig.d)

    def radial(r: int, v) -> float:
        if r - a <= 0:
            return math.inf
        if spec.q_kind == "constant":
            return c * eps ** (r - a) / (r - a)
        if spec.q_kind == "tempered":
            lam = spec._param_at("lam", v if v is not None else zero_v)
            if lam == 0.0:
                return c * eps ** (r - a) / (r - a)
            s = r - a
            return c * lam**-s * float(_special.gamma(s) * _special.gammainc(s, lam * eps))
        if spec.q_kind == "truncated":
            cut = spec._param_at("trunc", v if v is not None else zero_v)
            top = min(eps, cut)
            return c * top ** (r - a) / (r - a)
        H = spec.donna.H
        val, _ = _integrate.quad(
            lambda y: H(y) * y ** (r - a - 1.0), 0.0, eps, epsrel=1e-9, limit=200
        )
        return c * val

    out = []
    for r in (1, 2):
        vals = [radial(r, v) for v in dirs]
        if any(math.isinf(x) for x in vals):
            out.append(math.inf)
        else:
            out.append(float(sum(w * x for w, x in zip(weights, vals))))
    return tuple(out)


def default_eps(spec: AugmentedSpec, tol: float = 1e-6) -> float:
    """Truncation-level policy: the largest eps whose dropped-mass bias is at
    most tol — measured by l1 for finite-variation drivers and by l2 (the
    variance proxy) for infinite-variation ones."""
    which = 0 if spec.base.alpha < 1.0 else 1

    def err(e: float) -> float:
        return truncation_error(spec, e)[which]

    if err(1.0) <= tol:
        return 1.0
    lo, hi = 1e-300, 1.0
    for _ in range(400):
        mid = math.sqrt(lo * hi)
        if err(mid) <= tol:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-9 * hi:
            break
    return lo


def lambda_for_eps(tail: RadialTail, eps: float) -> float:
    """Epoch cap making every retained comonotonic jump at least eps: the
    largest per-direction tail mass at eps."""
    n = 1 if tail.sigma.is_uniform else tail.sigma.n_atoms
    return float(max(float(np.asarray(tail.tail(eps, v=j))) for j in range(n)))


# ---------------------------------------------------------------------------
# thinning


class ThinningSampler:
    """One dominating stream, per-driver acceptance by density ratio.

    ``dominating="sum"`` uses nu = nu_1 + nu_2, whose densities f_i are at
    most 1 by construction; ``dominating="stable-envelope"`` uses the
    attractor-anchored envelope ``(1 + K_h)(1 + H1(|w|)) nu_Z`` (both drivers
    must share the attractor), with ``envelope_h1`` optionally supplying the
    slowly varying H1 term (default 0, the normal-attraction envelope).

    ``spec2=None`` degenerates driver 2 to the zero measure (f2 = 0): the
    second stream is empty and the first is an exact marginal sampler.
    """

    def __init__(
        self,
        spec1: AugmentedSpec,
        spec2: Optional[AugmentedSpec],
        eps: float,
        dominating: str = "sum",
        envelope_h1: Optional[Callable] = None,
        max_expected_events: float = _MAX_EXPECTED_EVENTS,
    ):
        if eps <= 0:
            raise ValueError("eps must be positive")
        b1 = spec1.base
        if spec2 is not None:
            b2 = spec2.base
            if b1.alpha != b2.alpha:
                raise ValueError("thinning requires a common stability index")
            if b1.d != b2.d:
                raise ValueError("drivers must share the state dimension")
            if b1.sigma.is_uniform != b2.sigma.is_uniform:
                raise ValueError("drivers must share the angular measure type")
        self.spec1, self.spec2 = spec1, spec2
        self.eps = float(eps)
        self.sigma = b1.sigma
        self.d = b1.d
        self.dominating = dominating
        self.max_expected_events = float(max_expected_events)

        if dominating == "sum":
            self._envelope = None
        elif dominating == "stable-envelope":
            if spec2 is not None and abs(b1.c_alpha - spec2.base.c_alpha) > 1e-12:
                raise ValueError("envelope dominating measure needs a shared attractor")
            ks = [spec1.dona[0] if spec1.is_dona else 1.0]
            if spec2 is not None:
                ks.append(spec2.dona[0] if spec2.is_dona else 1.0)
            self._envelope = (1.0 + max(ks), envelope_h1)
        else:
            raise ValueError(f"unknown dominating measure {dominating!r}")

        self._build_dominating()

    # -- dominating measure pieces ------------------------------------------
    def _dom_density(self, x, v) -> np.ndarray:
        """Radial density factor of the dominating measure (the role Q plays
        for a single driver)."""
        if self._envelope is None:
            q = np.asarray(self.spec1.Q(x, v), dtype=float)
            if self.spec2 is not None:
                q = q + np.asarray(self.spec2.Q(x, v), dtype=float)
            return q
        scale, h1 = self._envelope
        c = self.spec1.base.c_alpha
        x_arr = np.asarray(x, dtype=float)
        if h1 is None:
            return np.full_like(x_arr, scale * c)
        return scale * c * (1.0 + np.vectorize(h1)(x_arr))

    def _dom_tail(self, x, v):
        if self._envelope is None:
            t = np.asarray(self.spec1.tail(x, v), dtype=float)
            if self.spec2 is not None:
                t = t + np.asarray(self.spec2.tail(x, v), dtype=float)
            return t if np.ndim(x) else float(t)
        scale, h1 = self._envelope
        a = self.spec1.base.alpha
        c = self.spec1.base.c_alpha
        if h1 is None:
            return scale * (c / a) * np.asarray(x, dtype=float) ** -a
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(xs)
        for i, xx in enumerate(xs):
            extra, _ = _integrate.quad(
                lambda y: h1(y) * c * y ** (-a - 1.0), xx, np.inf, epsrel=1e-9, limit=200
            )
            out[i] = scale * ((c / a) * xx**-a + extra)
        return out if np.ndim(x) else float(out[0])

    def _build_dominating(self):
        sig = self.sigma
        dirs = [np.eye(self.d)[0]] if sig.is_uniform else list(sig.directions)
        self._dirs = dirs
        n = len(dirs)
        self._atom_mass = np.array(
            [float(np.asarray(self._dom_tail(self.eps, v))) for v in dirs]
        )
        if not np.all(np.isfinite(self._atom_mass)):
            raise ValueError("dominating mass above eps is not finite")
        exact = None
        if self._envelope is not None and self._envelope[1] is None:
            scale = self._envelope[0]
            a = self.spec1.base.alpha
            c = self.spec1.base.c_alpha
            exact = [
                (lambda u, s=scale, a=a, c=c: (s * c / (a * np.asarray(u, float))) ** (1.0 / a))
            ] * n
        self._dom = RadialTail(
            sig,
            [lambda x, v=v: self._dom_tail(x, v) for v in dirs],
            exact_inverses=exact,
            cache_u_range=(1e-6, max(1e8, 10.0 * float(self._atom_mass.max()))),
        )
        if sig.is_uniform:
            self._atom_probs = np.array([1.0])
            self.mass = float(self._atom_mass[0])
        else:
            w = np.asarray(sig.weights, dtype=float)
            tot = float(np.sum(w * self._atom_mass))
            self._atom_probs = w * self._atom_mass / tot
            self.mass = tot

    def densities_at(self, x, v) -> tuple:
        """(f1, f2): per-driver acceptance probabilities at radius x,
        direction v, w.r.t. the dominating measure."""
        den = self._dom_density(x, v)
        q1 = np.asarray(self.spec1.Q(x, v), dtype=float)
        q2 = (
            np.zeros_like(q1)
            if self.spec2 is None
            else np.asarray(self.spec2.Q(x, v), dtype=float)
        )
        with np.errstate(invalid="ignore", divide="ignore"):
            f1 = np.where(den > 0, q1 / den, 0.0)
            f2 = np.where(den > 0, q2 / den, 0.0)
        return f1, f2

    def compensators(self) -> tuple:
        c1 = _compensator(self.spec1, self.eps)
        c2 = np.zeros(self.d) if self.spec2 is None else _compensator(self.spec2, self.eps)
        return c1, c2

    # -- sampling ------------------------------------------------------------
    def _draw_marks(self, rng, T: float):
        n = int(rng.poisson(T * self.mass))
        times = T * (1.0 - rng.random(n))
        if self.sigma.is_uniform:
            atom_idx = np.zeros(n, dtype=int)
            g = rng.standard_normal((n, self.d))
            dirs = g / np.linalg.norm(g, axis=1, keepdims=True)
        else:
            atom_idx = rng.choice(self._atom_probs.size, size=n, p=self._atom_probs)
            dirs = self.sigma.directions[atom_idx]
        levels = (1.0 - rng.random(n)) * self._atom_mass[atom_idx]
        marks = 1.0 - rng.random(n)  # in (0, 1]: f = 0 never accepts, f = 1 always
        return times, atom_idx, dirs, levels, marks

    def _radii_and_densities(self, atom_idx, levels):
        n = levels.size
        radii = np.empty(n)
        f1 = np.empty(n)
        f2 = np.empty(n)
        for j in range(len(self._dirs)):
            sel = atom_idx == j
            if not np.any(sel):
                continue
            r = np.maximum(self._dom.inverse_bulk(levels[sel], v=j), self.eps)
            radii[sel] = r
            a1, a2 = self.densities_at(r, self._dirs[j])
            f1[sel] = a1
            f2[sel] = a2
        bad = (f1 > 1.0 + 1e-12) | (f2 > 1.0 + 1e-12)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise ValueError(
                "density above 1 w.r.t. the dominating measure at radius "
                f"{radii[k]!r} (atom {int(atom_idx[k])}): f1={f1[k]!r}, f2={f2[k]!r}"
            )
        return radii, f1, f2

    def sample(self, T: float, seed: int) -> CoupledJumpStream:
        if T <= 0:
            raise ValueError("horizon T must be positive")
        expected = T * self.mass
        if expected > self.max_expected_events:
            raise ValueError(
                f"expected event count T*m(eps) = {expected:.3g} exceeds the "
                f"budget {self.max_expected_events:.3g}; raise eps or lower T"
            )
        rng = substream(seed)
        times, atom_idx, dirs, levels, marks = self._draw_marks(rng, T)
        radii, f1, f2 = self._radii_and_densities(atom_idx, levels)
        take1 = marks <= f1
        take2 = marks <= f2
        keep = take1 | take2
        w = radii[:, None] * dirs
        jump1 = np.where(take1[:, None], w, 0.0)[keep]
        jump2 = np.where(take2[:, None], w, 0.0)[keep]
        shared = (take1 & take2)[keep]
        comp1, comp2 = self.compensators()
        return _sorted_stream(
            T,
            self.d,
            times[keep],
            jump1,
            jump2,
            shared,
            self.eps,
            comp1,
            comp2,
            {"coupling": "thinning", "seed": seed, "dominating": self.dominating},
        )

    def count_hits(
        self,
        T: float,
        seed: int,
        thresholds,
        which: int = 1,
        chunk: int = 1 << 22,
    ) -> np.ndarray:
        """Number of driver jumps with magnitude >= each threshold, drawn in
        bounded-memory chunks.  Chunk k uses substream (seed, k), and a sum of
        independent Poisson chunks is again Poisson, so the law is exact and
        the result deterministic for a given seed."""
        thresholds = np.asarray(thresholds, dtype=float)
        expected = T * self.mass
        if not math.isfinite(expected):
            raise ValueError("expected event count is not finite")
        n_chunks = max(1, int(math.ceil(expected / chunk)))
        counts = np.zeros(thresholds.size, dtype=np.int64)
        for k in range(n_chunks):
            rng = substream(seed, k)
            n = int(rng.poisson(expected / n_chunks))
            if self.sigma.is_uniform:
                atom_idx = np.zeros(n, dtype=int)
            else:
                atom_idx = rng.choice(self._atom_probs.size, size=n, p=self._atom_probs)
            levels = (1.0 - rng.random(n)) * self._atom_mass[atom_idx]
            marks = 1.0 - rng.random(n)
            radii, f1, f2 = self._radii_and_densities(atom_idx, levels)
            f = f1 if which == 1 else f2
            taken = radii[marks <= f]
            counts += (taken[None, :] >= thresholds[:, None]).sum(axis=1)
        return counts


def sample_thinning(
    spec1: AugmentedSpec,
    spec2: Optional[AugmentedSpec],
    eps: float,
    T: float,
    seed: int,
    dominating: str = "sum",
    **kw,
) -> CoupledJumpStream:
    return ThinningSampler(spec1, spec2, eps, dominating=dominating, **kw).sample(T, seed)


# ---------------------------------------------------------------------------
# comonotonic


class ComonotonicSampler:
    """Shared (time, epoch, direction) marks; per-driver quantile-aligned
    jump radii through the radial-tail inverses.

    Compensators need the stability regime: pass the full driver specs (used
    for exact closed-form first moments) or bare ``alpha1``/``alpha2`` values
    (tail-level quadrature fallback); with neither, zero natural drift is
    assumed, which is only correct for finite-variation drivers.
    """

    def __init__(
        self,
        tail1: RadialTail,
        tail2: RadialTail,
        lambda_cap: float,
        alpha1: Optional[float] = None,
        alpha2: Optional[float] = None,
        spec1: Optional[AugmentedSpec] = None,
        spec2: Optional[AugmentedSpec] = None,
        max_expected_events: float = _MAX_EXPECTED_EVENTS,
    ):
        if lambda_cap <= 0:
            raise ValueError("epoch cap must be positive")
        s1, s2 = tail1.sigma, tail2.sigma
        same = (s1.is_uniform and s2.is_uniform and s1.d == s2.d) or (
            not s1.is_uniform
            and not s2.is_uniform
            and s1.directions.shape == s2.directions.shape
            and np.array_equal(s1.directions, s2.directions)
            and np.array_equal(s1.weights, s2.weights)
        )
        if not same:
            raise ValueError("comonotonic coupling requires a shared angular measure")
        self.tail1, self.tail2 = tail1, tail2
        self.sigma = s1
        self.d = s1.d
        self.lambda_cap = float(lambda_cap)
        self.spec1, self.spec2 = spec1, spec2
        self.alpha1 = alpha1 if alpha1 is not None else (spec1.base.alpha if spec1 else None)
        self.alpha2 = alpha2 if alpha2 is not None else (spec2.base.alpha if spec2 else None)
        self.max_expected_events = float(max_expected_events)
        self._cut1 = self.retained_cutoffs(1)
        self._cut2 = self.retained_cutoffs(2)
        self._comp1 = self._compensator(1)
        self._comp2 = self._compensator(2)

    def retained_cutoffs(self, which: int) -> np.ndarray:
        """Per-atom smallest retained radius: the inverse at the epoch cap."""
        tail = self.tail1 if which == 1 else self.tail2
        n = 1 if self.sigma.is_uniform else self.sigma.n_atoms
        return np.array([tail._inverse_scalar(j, self.lambda_cap) for j in range(n)])

    def _compensator(self, which: int) -> np.ndarray:
        alpha = self.alpha1 if which == 1 else self.alpha2
        if alpha is None or alpha < 1.0:
            return np.zeros(self.d)
        spec = self.spec1 if which == 1 else self.spec2
        cutoffs = self._cut1 if which == 1 else self._cut2
        if spec is not None:
            return _compensator(spec, cutoffs)
        if self.sigma.is_uniform:
            return np.zeros(self.d)
        # tail-level first moment by parts: int_e^inf x drho = e rho(e) + int_e^inf rho
        tail = self.tail1 if which == 1 else self.tail2
        out = np.zeros(self.d)
        for j, (v, w) in enumerate(zip(self.sigma.directions, self.sigma.weights)):
            e = float(cutoffs[j])
            mom = e * float(np.asarray(tail.tail(e, v=j)))
            mom += _integrate.quad(
                lambda x: float(np.asarray(tail.tail(x, v=j))), e, np.inf, epsrel=1e-9, limit=200
            )[0]
            out += w * mom * v
        return -out

    def sample(self, T: float, seed: int) -> CoupledJumpStream:
        if T <= 0:
            raise ValueError("horizon T must be positive")
        expected = T * self.lambda_cap
        if expected > self.max_expected_events:
            raise ValueError(
                f"expected event count T*Lambda = {expected:.3g} exceeds the "
                f"budget {self.max_expected_events:.3g}"
            )
        rng = substream(seed)
        n = int(rng.poisson(expected))
        times = T * (1.0 - rng.random(n))
        epochs = self.lambda_cap * (1.0 - rng.random(n))
        if self.sigma.is_uniform:
            atom_idx = np.zeros(n, dtype=int)
            g = rng.standard_normal((n, self.d))
            dirs = g / np.linalg.norm(g, axis=1, keepdims=True)
        else:
            atom_idx = self.sigma.sample_index(rng, n)
            dirs = self.sigma.directions[atom_idx]
        r1 = np.empty(n)
        r2 = np.empty(n)
        for j in range(1 if self.sigma.is_uniform else self.sigma.n_atoms):
            sel = atom_idx == j
            if not np.any(sel):
                continue
            r1[sel] = self.tail1.inverse_bulk(epochs[sel], v=j)
            r2[sel] = self.tail2.inverse_bulk(epochs[sel], v=j)
        keep = (r1 > 0) | (r2 > 0)
        min_eps = float(min(self._cut1.min(initial=math.inf), self._cut2.min(initial=math.inf)))
        return _sorted_stream(
            T,
            self.d,
            times[keep],
            (r1[:, None] * dirs)[keep],
            (r2[:, None] * dirs)[keep],
            np.zeros(int(keep.sum()), dtype=bool),
            min_eps if math.isfinite(min_eps) else 0.0,
            self._comp1,
            self._comp2,
            {
                "coupling": "comonotonic",
                "seed": seed,
                "lambda_cap": self.lambda_cap,
                "epochs": epochs[keep],
            },
        )


def sample_comonotonic(
    tail1: RadialTail, tail2: RadialTail, lambda_cap: float, T: float, seed: int, **kw
) -> CoupledJumpStream:
    return ComonotonicSampler(tail1, tail2, lambda_cap, **kw).sample(T, seed)


# ---------------------------------------------------------------------------
# independent baseline


class IndependentSampler:
    """Two disjoint marginal streams merged; shared is false everywhere.

    Each marginal uses the degenerate thinning sampler (f = 1 against its own
    measure), so marginal count and magnitude laws coincide with thinning's.
    """

    def __init__(self, spec1: AugmentedSpec, spec2: AugmentedSpec, eps: float, **kw):
        self._s1 = ThinningSampler(spec1, None, eps, **kw)
        self._s2 = ThinningSampler(spec2, None, eps, **kw)
        self.eps = float(eps)
        if spec1.base.d != spec2.base.d:
            raise ValueError("drivers must share the state dimension")
        self.d = spec1.base.d

    def sample(self, T: float, seed: int) -> CoupledJumpStream:
        a = self._s1.sample(T, mix_key(seed, 1))
        b = self._s2.sample(T, mix_key(seed, 2))
        n1, n2 = a.n_events, b.n_events
        times = np.concatenate([a.times, b.times])
        jump1 = np.vstack([a.jump1, np.zeros((n2, self.d))])
        jump2 = np.vstack([np.zeros((n1, self.d)), b.jump1])
        shared = np.zeros(n1 + n2, dtype=bool)
        return _sorted_stream(
            T,
            self.d,
            times,
            jump1,
            jump2,
            shared,
            self.eps,
            a.comp1,
            b.comp1,
            {"coupling": "independent", "seed": seed},
        )


def sample_independent(
    spec1: AugmentedSpec, spec2: AugmentedSpec, eps: float, T: float, seed: int, **kw
) -> CoupledJumpStream:
    return IndependentSampler(spec1, spec2, eps, **kw).sample(T, seed)
