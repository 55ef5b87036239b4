"""Closed-form moment bounds, convergence-rate functions, and quadrature
diagnostics for coupled pairs of heavy-tailed jump drivers.

Three layers live here:

* Gronwall-type bounds on ``E sup |X1 - X2|^order`` over ``[0, T]`` for the
  thinning and comonotonic couplings, evaluated from a :class:`DriverSummary`
  of drift/moment data with a labeled per-term breakdown.
* The rate function ``f(t)`` attached to a coupling/regime combination,
  including the slowly-varying (non-normal-attraction) families and the
  knee/log-factor cases.
* Tilted-measure discrepancy integrals comparing a driver's rescaled jump
  measure with its stable limit, reported against the envelope the rates are
  derived from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .levy_model import (
    AugmentedSpec,
    RadialTail,
    SlowVariationBundle,
    normalizing_g,
)

__all__ = [
    "DriverSummary",
    "BoundReport",
    "RateSpec",
    "DiscrepancyReport",
    "gronwall_bound_thinning",
    "gronwall_bound_como",
    "additive_wasserstein_factor",
    "rate_function",
    "discrepancy_integrals",
]


def _vec(x) -> np.ndarray:
    if x is None:
        return np.zeros(1)
    return np.atleast_1d(np.asarray(x, dtype=float))


def _norm(x) -> float:
    return 0.0 if x is None else float(np.linalg.norm(np.asarray(x, dtype=float)))


def _norm_diff(x, y) -> float:
    if x is None and y is None:
        return 0.0
    return float(np.linalg.norm(_vec(x) - _vec(y)))


# ---------------------------------------------------------------------------
# driver summaries and bound reports


@dataclass
class DriverSummary:
    """Numeric summary of a coupled driver pair feeding the moment bounds.

    The per-driver moment slots ``nu{i}_{k}`` hold the k-th absolute jump
    moment of driver i; under the comonotonic coupling they are filled with
    the epoch-domain moments of the radial inverses instead.  Cross terms
    are coupling-specific: ``nu_df_k`` integrates ``|w|^k`` against the
    density gap of the thinning split, ``mu_drho_k`` integrates the k-th
    power of the pointwise inverse gap over epochs and directions.
    ``v_at_x2`` is the (operator) norm of the coefficient field at the
    second initial state, entering the flow-growth constants.
    """

    x0_1: np.ndarray
    x0_2: np.ndarray
    K: float
    v_at_x2: float
    a1: Optional[np.ndarray] = None
    a2: Optional[np.ndarray] = None
    b1: Optional[np.ndarray] = None
    b2: Optional[np.ndarray] = None
    Sigma1: Optional[np.ndarray] = None
    Sigma2: Optional[np.ndarray] = None
    nu1_1: Optional[float] = None
    nu1_2: Optional[float] = None
    nu2_1: Optional[float] = None
    nu2_2: Optional[float] = None
    nu_df_1: Optional[float] = None
    nu_df_2: Optional[float] = None
    mu_drho_1: Optional[float] = None
    mu_drho_2: Optional[float] = None
    C0: float = 4.0

    def __post_init__(self):
        self.x0_1 = _vec(self.x0_1)
        self.x0_2 = _vec(self.x0_2)
        if self.K < 0:
            raise ValueError("Lipschitz constant must be nonnegative")
        if self.v_at_x2 < 0:
            raise ValueError("coefficient norm must be nonnegative")
        if self.C0 <= 0:
            raise ValueError("martingale maximal constant C0 must be positive")
        for name in ("nu1_1", "nu1_2", "nu2_1", "nu2_2",
                     "nu_df_1", "nu_df_2", "mu_drho_1", "mu_drho_2"):
            val = getattr(self, name)
            if val is not None and val < 0:
                raise ValueError(f"moment integral {name} must be nonnegative")


@dataclass
class BoundReport:
    coupling: str
    order: int
    T: float
    kappa: float
    eta: float
    bound: float
    breakdown: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)

    def check_invariants(self) -> None:
        if not (self.bound >= self.kappa >= 0.0):
            raise AssertionError("bound >= kappa >= 0 must hold")
        total = sum(self.breakdown.values())
        scale = max(abs(self.kappa), 1e-300)
        if abs(total - self.kappa) > 1e-12 * scale:
            raise AssertionError(
                f"breakdown sums to {total!r}, kappa is {self.kappa!r}"
            )


def _require_moments(s: DriverSummary, names) -> None:
    for attr, label in names:
        val = getattr(s, attr)
        if val is None or not math.isfinite(val):
            raise ValueError(
                f"moment integral {label} is required and must be finite "
                f"(field {attr!r} is {val!r})"
            )


def _flow_constant(s: DriverSummary, T: float, order: int) -> float:
    """Growth constant of the second driver's coefficient along its own flow.

    Order 2 composes the squared-coefficient growth with the exponential
    second-moment estimate of the second flow; order 1 uses the first-moment
    analogue.  The first exponent term of the order-2 constant carries no
    K^2 factor while the jump term does; that asymmetry is deliberate (it
    reproduces the published constant, see the decisions ledger)."""
    v2 = s.v_at_x2
    K = s.K
    if order == 2:
        m2 = s.nu2_2
        sig2 = _norm(s.Sigma2) ** 2
        a2sq = _norm(s.a2) ** 2
        c_y = (
            6.0 * T * v2**2 * (a2sq * T + 2.0 * s.C0 * (sig2 + m2))
            * math.exp(6.0 * a2sq * T**2
                       + 6.0 * s.C0 * K**2 * (2.0 * sig2 + m2) * T)
        )
        return 2.0 * (v2**2 + K * c_y)
    m1 = s.nu2_1
    b2 = _norm(s.b2)
    c_y = T * v2 * (b2 + m1) * math.exp(K * (b2 + m1) * T)
    return v2 + K * c_y


def _gronwall(
    s: DriverSummary,
    T: float,
    order: int,
    coupling: str,
    cross_1: Optional[float],
    cross_2: Optional[float],
    C_flow: Optional[float],
) -> BoundReport:
    if T <= 0:
        raise ValueError("horizon T must be positive")
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    cross_tag = "nu(|f1-f2|" if coupling == "thinning" else "mu(|rho inverse gap|"
    if order == 2:
        if cross_2 is None or not math.isfinite(cross_2):
            raise ValueError(
                f"moment integral {cross_tag};2) is required and must be finite"
            )
        _require_moments(s, [("nu1_2", "nu_1(1;2)"), ("nu2_2", "nu_2(1;2)")])
        Cf = _flow_constant(s, T, 2) if C_flow is None else float(C_flow)
        dx2 = _norm_diff(s.x0_1, s.x0_2) ** 2
        da2 = _norm_diff(s.a1, s.a2) ** 2
        dsig2 = _norm_diff(s.Sigma1, s.Sigma2) ** 2
        jump_scale = 2.0 * s.C0 if coupling == "thinning" else s.C0
        breakdown = {
            "initial": 6.0 * dx2,
            "mean-drift": 6.0 * T * Cf * da2 * T,
            "gaussian": 6.0 * T * Cf * 2.0 * s.C0 * dsig2,
            "jump": 6.0 * T * Cf * jump_scale * cross_2,
        }
        sig1 = _norm(s.Sigma1) ** 2
        eta = (
            6.0 * _norm(s.a1) ** 2 * s.K**2 * T**2
            + 6.0 * s.C0 * s.K**2 * (2.0 * sig1 + s.nu1_2) * T
        )
    else:
        if _norm(s.Sigma1) != 0.0 or _norm(s.Sigma2) != 0.0:
            raise ValueError("the first-order bound requires zero Gaussian parts")
        if cross_1 is None or not math.isfinite(cross_1):
            raise ValueError(
                f"moment integral {cross_tag};1) is required and must be finite"
            )
        _require_moments(s, [("nu1_1", "nu_1(1;1)"), ("nu2_1", "nu_2(1;1)")])
        Cf = _flow_constant(s, T, 1) if C_flow is None else float(C_flow)
        jump_scale = 1.0 if coupling == "thinning" else s.C0
        breakdown = {
            "initial": _norm_diff(s.x0_1, s.x0_2),
            "natural-drift": T * Cf * _norm_diff(s.b1, s.b2),
            "jump": T * Cf * jump_scale * cross_1,
        }
        eta = s.K * (_norm(s.b1) + s.nu1_1) * T
    kappa = float(sum(breakdown.values()))
    report = BoundReport(
        coupling=coupling,
        order=order,
        T=float(T),
        kappa=kappa,
        eta=float(eta),
        bound=kappa * math.exp(eta),
        breakdown=breakdown,
        constants={"C_flow": Cf, "C0": s.C0, "K": s.K},
    )
    report.check_invariants()
    return report


def gronwall_bound_thinning(
    s: DriverSummary, T: float, order: int = 2, C_flow: Optional[float] = None
) -> BoundReport:
    """Moment bound ``E sup|X1-X2|^order <= kappa e^eta`` under the thinning
    coupling; ``C_flow`` overrides the computed flow-growth constant."""
    return _gronwall(s, T, order, "thinning", s.nu_df_1, s.nu_df_2, C_flow)


def gronwall_bound_como(
    s: DriverSummary, T: float, order: int = 2, C_flow: Optional[float] = None
) -> BoundReport:
    """Moment bound under the comonotonic coupling: the jump cross term is
    the epoch-domain moment of the pointwise inverse gap."""
    return _gronwall(s, T, order, "comonotonic", s.mu_drho_1, s.mu_drho_2, C_flow)


# ---------------------------------------------------------------------------
# additive Wasserstein factor


def additive_wasserstein_factor(q: float, K: float, T: float) -> float:
    """Lipschitz transfer factor from driver distance to solution distance
    for additive-noise SDEs in the q-th moment: ``e^{KT}`` at q = 1, and the
    discrete subdivision constant ``N(N+1) 2^{N-1}`` with
    ``N = ceil(T K 2^{1/q})`` for q below one."""
    if q > 1.0:
        raise ValueError("only q <= 1 is supported by the additive transfer bound")
    if q <= 0.0:
        raise ValueError("q must lie in (0, 1]")
    if K <= 0.0 or T <= 0.0:
        raise ValueError("K and T must be positive")
    if q == 1.0:
        return math.exp(K * T)
    N = math.ceil(T * K * 2.0 ** (1.0 / q))
    return float(N * (N + 1) * 2 ** (N - 1))


# ---------------------------------------------------------------------------
# rate functions


@dataclass
class RateSpec:
    """Selects the convergence-rate function f(t) for a coupling/regime pair.

    ``regime`` is "DoNA" (normal attraction: power-law rates driven by the
    envelope exponent p) or "DoNNA" (slowly varying corrections read from
    ``bundle``).  ``balanced`` asserts the symmetry condition that removes
    the drift-compensation bottleneck for alpha above one.  ``delta`` is the
    drift-envelope exponent (carried for reporting; the power-law rates do
    not read it)."""

    regime: str
    coupling: str
    alpha: float
    p: Optional[float] = None
    delta: Optional[float] = None
    balanced: bool = False
    bundle: Optional[SlowVariationBundle] = None

    def __post_init__(self):
        if self.regime not in ("DoNA", "DoNNA"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.coupling not in ("thinning", "comonotonic"):
            raise ValueError(f"unknown coupling {self.coupling!r}")
        if self.alpha == 1.0 or not (0.0 < self.alpha < 2.0):
            raise ValueError(
                "unsupported stability index: alpha must lie in (0, 2) away from 1"
            )
        if self.regime == "DoNNA" and self.bundle is None:
            raise ValueError("the DoNNA regime requires a slow-variation bundle")
        if self.regime == "DoNA" and self.p is None:
            raise ValueError("the DoNA regime requires the envelope exponent p")

    @property
    def ceil_alpha(self) -> int:
        return 1 if self.alpha < 1.0 else 2


def rate_function(r: RateSpec, t, form: str = "theorem"):
    """Evaluate f(t) on (0, 1].

    ``form`` selects between the tightness-theorem exponent ("theorem") and
    the moment-rate table entry ("table") in the one regime where the two
    published forms differ (thinning, alpha above one, unbalanced); the two
    are exposed side by side rather than reconciled.  The log correction
    fires only when p equals alpha - 1 exactly."""
    if form not in ("theorem", "table"):
        raise ValueError(f"unknown form {form!r}")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any((t_arr <= 0.0) | (t_arr > 1.0)):
        raise ValueError("t must lie in (0, 1]")
    a = r.alpha
    scalar = np.asarray(t).ndim == 0

    if r.regime == "DoNA":
        p = r.p
        if r.coupling == "thinning":
            if a > 1.0 and not r.balanced:
                if form == "theorem":
                    out = t_arr ** min(p / (2.0 * a), 1.0 - 1.0 / a)
                else:
                    log_term = np.abs(np.log(t_arr)) if p == a - 1.0 else 0.0
                    out = (
                        t_arr ** (p / (2.0 * a))
                        + t_arr ** (1.0 - 1.0 / a) * (1.0 + log_term)
                    )
            else:
                out = t_arr ** (p / (r.ceil_alpha * a))
        else:
            if a > 1.0 and not r.balanced:
                log_term = np.abs(np.log(t_arr)) if p == a - 1.0 else 0.0
                out = t_arr ** min(p / a, 1.0 - 1.0 / a) * (1.0 + log_term)
            else:
                out = t_arr ** (p / a)
    else:
        H2 = r.bundle.H2
        if r.coupling == "thinning":
            out = np.array(
                [
                    H2(normalizing_g(r.bundle, a, float(tt)).g)
                    ** (1.0 / r.ceil_alpha)
                    for tt in t_arr
                ]
            )
        else:
            out = np.array([H2(float(tt)) for tt in t_arr])
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# discrepancy diagnostics


@dataclass
class DiscrepancyReport:
    lhs: float
    envelope: float
    drift_gap: float
    meta: dict = field(default_factory=dict)


def _quad(fn: Callable, lo: float, hi: float) -> float:
    out = quad(fn, lo, hi, limit=300, full_output=1)
    if len(out) == 4:
        raise ArithmeticError(f"quadrature did not converge: {out[-1]}")
    return float(out[0])


def _radial_tilted(fn: Callable, theta: float, kink: Optional[float]) -> float:
    """Integrate ``fn`` over (0, inf) under the giant-jump tilt: weight
    ``exp(-theta x)`` beyond radius one, 1 below.  ``kink`` adds one panel
    boundary for discontinuous integrands (truncation cuts)."""
    breaks = {1.0}
    if kink is not None and math.isfinite(kink) and kink > 0.0:
        breaks.add(kink)

    def weighted(x: float) -> float:
        return fn(x) * (math.exp(-theta * x) if x >= 1.0 else 1.0)

    total, lo = 0.0, 0.0
    for hi in sorted(breaks):
        if hi > lo:
            total += _quad(weighted, lo, hi)
            lo = hi
    return total + _quad(weighted, lo, np.inf)


def _epoch_tilted(fn: Callable, theta: float) -> float:
    """Integrate ``fn`` over (0, inf) under the small-epoch tilt: weight
    ``exp(-theta/x)`` below one, 1 above (small epochs carry the giant
    jumps, so both tilts damp the same events)."""
    return _quad(lambda x: fn(x) * math.exp(-theta / x), 0.0, 1.0) + _quad(
        fn, 1.0, np.inf
    )


def _atoms(spec: AugmentedSpec):
    """Atom list ``[(weight, direction)]`` the radial integrals sum over,
    plus a flag marking the uniform reduction.  A uniform angular part must
    carry direction-independent radial data and collapses to a single
    representative direction of total weight one; its first-moment (drift)
    integrals vanish exactly by symmetry."""
    sig = spec.base.sigma
    if not sig.is_uniform:
        return list(zip(sig.weights, sig.directions)), False
    v0 = np.eye(sig.d)[0]
    v1 = np.full(sig.d, 1.0 / math.sqrt(sig.d))
    probe = np.array([0.5, 2.0])
    if not np.allclose(spec.Q(probe, v0), spec.Q(probe, v1), rtol=1e-12, atol=0.0):
        raise NotImplementedError(
            "uniform angular part with direction-dependent radial data is not "
            "supported by the quadrature diagnostics"
        )
    return [(1.0, v0)], True


def discrepancy_integrals(
    spec: AugmentedSpec,
    t: float,
    theta: float,
    r: float,
    coupling: str = "thinning",
    delta: Optional[float] = None,
) -> DiscrepancyReport:
    """Tilted-measure distance between the rescaled driver and its stable
    limit, with the envelope it is expected to track.

    Thinning compares jump-measure densities against the common dominating
    measure under the giant-jump tilt; comonotonic compares time-changed
    small-jump radial inverses in the epoch domain under the small-epoch
    tilt (both tilts damp the same rare events, matching the change of
    measure the moment rates are proved under).  ``lhs`` integrates the
    r-th power of the absolute gap; ``drift_gap`` is the norm of the signed
    first-moment mismatch under the same tilt.  ``delta`` appends a
    drift-envelope term ``t^{r delta}`` when supplied."""
    a = spec.base.alpha
    c = spec.base.c_alpha
    if not (0.0 < t <= 1.0):
        raise ValueError("t must lie in (0, 1]")
    if theta <= 0.0:
        raise ValueError("the tilt parameter theta must be positive")
    if r <= a:
        raise ValueError(
            f"the discrepancy integral diverges for r <= alpha (r={r}, alpha={a})"
        )
    if coupling not in ("thinning", "comonotonic"):
        raise ValueError(f"unknown coupling {coupling!r}")

    if spec.is_dona:
        g = t ** (1.0 / a)
        ratio_scale = 1.0
        bundle = None
    else:
        g = normalizing_g(spec.donna, a, t).g
        ratio_scale = t * g ** (-a)
        bundle = spec.donna
    gz = t ** (1.0 / a)
    atoms, uniform = _atoms(spec)
    d = spec.base.d
    meta = {"t": t, "theta": theta, "r": r, "coupling": coupling, "g": g}

    if coupling == "thinning":
        # signed density gap of the rescaled driver against its stable
        # limit, both expressed w.r.t. the stable dominating measure; the
        # tempered kind goes through expm1 so tiny gaps keep full relative
        # precision
        def gap(x: float, v) -> float:
            if spec.q_kind == "tempered" and ratio_scale == 1.0:
                return -math.expm1(-spec._param_at("lam", v) * g * x)
            return 1.0 - ratio_scale * float(spec.density_ratio(g * x, v))

        lhs = 0.0
        drift_vec = np.zeros(d)
        for w, v in atoms:
            kink = (
                spec._param_at("trunc", v) / g
                if spec.q_kind == "truncated"
                else None
            )

            def absint(x: float, v=v) -> float:
                return x**r * abs(gap(x, v)) * c * x ** (-a - 1.0)

            lhs += w * _radial_tilted(absint, theta, kink)
            if not uniform:

                def signed(x: float, v=v) -> float:
                    return x * gap(x, v) * c * x ** (-a - 1.0)

                drift_vec = drift_vec + w * _radial_tilted(signed, theta, kink) * v
        p_env = spec.dona_constants()[1] if spec.is_dona else None
        envelope = (bundle.H2(g) if bundle is not None else 0.0) + (
            g**p_env if p_env is not None else 0.0
        )
        drift_gap = float(np.linalg.norm(drift_vec))
    else:
        if spec.q_kind == "constant":
            # the stable driver is the fixed point of the rescaling: both
            # small-jump inverses coincide identically, no quadrature runs
            return DiscrepancyReport(
                lhs=0.0,
                envelope=float(gz ** (r * spec.tail_dona_constants()[1])),
                drift_gap=0.0,
                meta=meta,
            )

        sig = spec.base.sigma
        tails = [
            (
                lambda u, v=v, rho1=float(spec.tail(1.0, v)): np.maximum(
                    np.asarray(spec.tail(u, v), dtype=float) - rho1, 0.0
                )
            )
            for _, v in atoms
        ]
        small = RadialTail(
            sig,
            tails,
            total_masses=[math.inf] * len(tails),
            support_upper=[1.0] * len(tails),
        )

        def inv_z(y: float) -> float:
            return ((a / c) * y + 1.0) ** (-1.0 / a)

        lhs = 0.0
        drift_vec = np.zeros(d)
        for i, (w, v) in enumerate(atoms):

            def gap_c(x: float, i=i) -> float:
                y = x / t
                return small._inverse_scalar(i, y) / g - inv_z(y) / gz

            lhs += w * _epoch_tilted(lambda x: abs(gap_c(x)) ** r, theta)
            if not uniform:
                drift_vec = drift_vec + w * _epoch_tilted(gap_c, theta) * v
        if bundle is not None:
            envelope = bundle.H2(t) ** r
        else:
            envelope = g ** (r * spec.tail_dona_constants()[1])
        if delta is not None:
            envelope += t ** (r * delta)
        drift_gap = float(np.linalg.norm(drift_vec))

    return DiscrepancyReport(
        lhs=float(lhs),
        envelope=float(envelope),
        drift_gap=drift_gap,
        meta=meta,
    )
