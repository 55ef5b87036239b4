"""Jump-adapted Euler integration of coupled SDE pairs.

A :class:`CoupledJumpStream` drives two states through the same event grid:
between events the drift ODE advances by explicit Euler substeps of size at
most ``h`` (event-aligned, so path values at event times depend only on the
events and the substep rule); at an event the state moves by ``V(X-) @ jump``
in multiplicative mode or by ``+jump`` in additive mode, with the left limit
stored.  Exact closed forms replace Euler where no error is incurred:
constant coefficient fields (the path is an affine image of the driver) and
zero-drift segments.

Heavy tails make rare state blowups expected; the engine aborts a replicate
with :class:`IntegrationError` at ``|X| > 1e12`` (or any non-finite state) so
callers can record the abort instead of silently dropping it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._rng import substream
from .couplings import CoupledJumpStream

__all__ = [
    "CoefficientField",
    "SamplePath",
    "IntegrationError",
    "integrate_pair",
    "sup_distance",
    "rescale_driver_stream",
]

_OVERFLOW = 1.0e12
_LIPSCHITZ_PAIRS = 10_000
_LIPSCHITZ_SLACK = 1e-9


class IntegrationError(RuntimeError):
    """State left the finite-magnitude window during integration."""

    def __init__(self, time: float, magnitude: float):
        self.time = float(time)
        self.magnitude = float(magnitude)
        super().__init__(
            f"state magnitude {magnitude:.6g} at time {time:.12g} exceeds the "
            f"{_OVERFLOW:.0e} overflow guard"
        )


# ---------------------------------------------------------------------------
# coefficient fields


class CoefficientField:
    """The coefficient V of the SDE, with its declared Lipschitz constant.

    Multiplicative kinds map the state to an (m, d) matrix applied to driver
    increments; the ``additive`` kind maps the state to an m-vector used as
    the dt-coefficient while jumps add directly.  The declared constant is
    spot-validated on random pairs at construction (operator norm for
    matrices, Euclidean for vectors).
    """

    _KINDS = ("constant", "additive", "rotation-by-norm", "linear", "user")

    def __init__(self, kind: str, fn: Callable, K: float, m: int, d: int, validate: bool = True):
        if kind not in self._KINDS:
            raise ValueError(f"unknown coefficient kind {kind!r}")
        if K < 0:
            raise ValueError("Lipschitz constant must be nonnegative")
        self.kind = kind
        self._fn = fn
        self.K = float(K)
        self.m = int(m)
        self.d = int(d)
        if validate and kind != "constant":
            self._validate_lipschitz()

    # -- constructors -------------------------------------------------------
    @staticmethod
    def constant(C) -> "CoefficientField":
        C = np.atleast_2d(np.asarray(C, dtype=float))
        return CoefficientField("constant", lambda x: C, 0.0, C.shape[0], C.shape[1])

    @staticmethod
    def additive(fn: Callable, K: float, d: int) -> "CoefficientField":
        return CoefficientField("additive", fn, K, d, d)

    @staticmethod
    def rotation_by_norm(driver_dim: int = 2) -> "CoefficientField":
        if driver_dim not in (1, 2):
            raise ValueError("rotation coefficient supports driver dimension 1 or 2")

        def rot(x):
            th = float(np.linalg.norm(x))
            c, s = math.cos(th), math.sin(th)
            if driver_dim == 1:
                return np.array([[c], [s]])
            return np.array([[c, -s], [s, c]])

        return CoefficientField("rotation-by-norm", rot, 1.0, 2, driver_dim)

    @staticmethod
    def linear(d: int) -> "CoefficientField":
        return CoefficientField("linear", lambda x: np.diag(np.asarray(x, float)), 1.0, d, d)

    @staticmethod
    def from_callable(fn: Callable, K: float, m: int, d: int) -> "CoefficientField":
        return CoefficientField("user", fn, K, m, d)

    # -- evaluation ---------------------------------------------------------
    def __call__(self, x) -> np.ndarray:
        """Matrix value at state x (multiplicative kinds)."""
        if self.kind == "additive":
            raise ValueError("additive coefficient has no matrix form; use drift()")
        return np.asarray(self._fn(np.asarray(x, dtype=float)), dtype=float)

    def drift(self, x) -> np.ndarray:
        """Vector value at state x (additive kind)."""
        if self.kind != "additive":
            raise ValueError("drift() is only defined for the additive kind")
        return np.asarray(self._fn(np.asarray(x, dtype=float)), dtype=float)

    @property
    def is_additive(self) -> bool:
        return self.kind == "additive"

    def _validate_lipschitz(self) -> None:
        rng = substream(0xC0EF, self._KINDS.index(self.kind))
        ys = rng.uniform(-10.0, 10.0, size=(_LIPSCHITZ_PAIRS, self.m))
        zs = rng.uniform(-10.0, 10.0, size=(_LIPSCHITZ_PAIRS, self.m))
        ev = self.drift if self.is_additive else self.__call__
        diffs = np.stack([np.asarray(ev(y)) - np.asarray(ev(z)) for y, z in zip(ys, zs)])
        if diffs.ndim == 2:
            lhs = np.linalg.norm(diffs, axis=1)
        else:
            lhs = np.linalg.svd(diffs, compute_uv=False)[:, 0]
        rhs = self.K * np.linalg.norm(ys - zs, axis=1) + _LIPSCHITZ_SLACK
        bad = lhs > rhs
        if np.any(bad):
            k = int(np.argmax(bad))
            raise ValueError(
                f"declared Lipschitz constant {self.K} violated: "
                f"|V(y)-V(z)| = {lhs[k]:.6g} > K|y-z| = {rhs[k]:.6g} "
                f"at y={ys[k]!r}, z={zs[k]!r}"
            )


# ---------------------------------------------------------------------------
# sample paths


@dataclass
class SamplePath:
    """A discretized path on the jump-adapted grid.

    ``times`` holds 0, every event time of the driving stream (exactly), the
    per-segment Euler substep boundaries, and the horizon.  ``left_values``
    stores the pre-jump states at ``event_rows`` so coefficient evaluations
    at left limits stay reproducible.
    """

    times: np.ndarray
    values: np.ndarray
    event_rows: np.ndarray
    left_values: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def x0(self) -> np.ndarray:
        return self.values[0]

    @property
    def final_value(self) -> np.ndarray:
        return self.values[-1]

    def check_invariants(self, stream: Optional[CoupledJumpStream] = None) -> None:
        if self.times[0] != 0.0:
            raise AssertionError("grid must start at 0")
        if np.any(np.diff(self.times) < 0):
            raise AssertionError("grid times must be sorted")
        if stream is not None:
            if self.event_rows.size != stream.n_events:
                raise AssertionError("one grid row per stream event is required")
            if not np.array_equal(self.times[self.event_rows], stream.times):
                raise AssertionError("grid must contain every event time exactly")


def _check_state(x: np.ndarray, t: float) -> None:
    mag = float(np.linalg.norm(x))
    if not math.isfinite(mag) or mag > _OVERFLOW:
        raise IntegrationError(t, mag)


def _build_grid(stream: CoupledJumpStream, h: float):
    """Event-aligned grid: each inter-event segment is split uniformly into
    ceil(segment / h) Euler substeps."""
    times = np.asarray(stream.times, dtype=float)
    if times.size:
        # dense-stream fast path: when no segment needs an interior substep
        # the grid is exactly [0] + event times (+ T), with the same floats
        # the general loop below would produce
        segs = np.diff(np.concatenate([[0.0], times]))
        pos = segs > 0
        ns = np.ones(times.size, dtype=np.int64)
        ns[pos] = np.maximum(
            1, np.ceil(segs[pos] / h - 1e-12).astype(np.int64)
        )
        has_tail = stream.T > times[-1]
        tail_n = (
            max(1, int(math.ceil((stream.T - times[-1]) / h - 1e-12)))
            if has_tail
            else 0
        )
        if tail_n <= 1 and np.all(ns == 1):
            pieces = [[0.0], times]
            if has_tail:
                pieces.append([float(stream.T)])
            return (
                np.concatenate(pieces),
                np.arange(1, times.size + 1, dtype=int),
            )
    rows = [0.0]
    event_rows = np.empty(stream.n_events, dtype=int)
    prev = 0.0
    for k, tau in enumerate(stream.times):
        tau = float(tau)
        seg = tau - prev
        if seg > 0:
            n = max(1, int(math.ceil(seg / h - 1e-12)))
            for j in range(1, n):
                rows.append(prev + seg * j / n)
        rows.append(tau)
        event_rows[k] = len(rows) - 1
        prev = tau
    if stream.T > prev:
        seg = stream.T - prev
        n = max(1, int(math.ceil(seg / h - 1e-12)))
        for j in range(1, n):
            rows.append(prev + seg * j / n)
        rows.append(float(stream.T))
    return np.asarray(rows), event_rows


def _integrate_constant(grid_t, event_rows, stream, which, C, x0):
    """Exact path for a constant coefficient: X = x0 + C Y."""
    jumps = stream.jumps(which)
    comp = stream.comp(which)
    counts = np.zeros(grid_t.size, dtype=int)
    np.add.at(counts, event_rows, 1)
    cum = np.cumsum(counts)
    pref = np.vstack([np.zeros((1, stream.d)), np.cumsum(jumps, axis=0)])
    y_rows = pref[cum] + grid_t[:, None] * comp[None, :]
    values = x0[None, :] + y_rows @ C.T
    y_left = pref[cum[event_rows] - 1] + grid_t[event_rows, None] * comp[None, :]
    left_values = x0[None, :] + y_left @ C.T
    mags = np.linalg.norm(values, axis=1)
    bad = ~np.isfinite(mags) | (mags > _OVERFLOW)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise IntegrationError(float(grid_t[k]), float(mags[k]))
    return values, left_values


def _integrate_rotation_nodrift(grid_t, event_rows, jumps, x0):
    """Scalar-arithmetic specialization of the drift-free event loop for the
    planar rotation coefficient: per-event numpy dispatch dominates dense
    streams otherwise.  Matches the generic loop's update order exactly."""
    n_rows = grid_t.size
    values = np.empty((n_rows, 2))
    left_values = np.empty((event_rows.size, 2))
    values[0, 0] = a = float(x0[0])
    values[0, 1] = b = float(x0[1])
    planar = jumps.shape[1] == 2
    jl = jumps.tolist()
    rows = event_rows.tolist()
    prev_row = 0
    for k, row in enumerate(rows):
        if prev_row < row:
            values[prev_row:row, 0] = a
            values[prev_row:row, 1] = b
        left_values[k, 0] = a
        left_values[k, 1] = b
        th = math.sqrt(a * a + b * b)
        c = math.cos(th)
        s = math.sin(th)
        w = jl[k]
        if planar:
            a += c * w[0] - s * w[1]
            b += s * w[0] + c * w[1]
        else:
            a += c * w[0]
            b += s * w[0]
        mag = math.sqrt(a * a + b * b)
        if not math.isfinite(mag) or mag > _OVERFLOW:
            raise IntegrationError(float(grid_t[row]), mag)
        values[row, 0] = a
        values[row, 1] = b
        prev_row = row + 1
    values[prev_row:, 0] = a
    values[prev_row:, 1] = b
    return values, left_values


def _integrate_loop(grid_t, event_rows, stream, which, V, x0):
    jumps = stream.jumps(which)
    comp = stream.comp(which)
    additive = V.is_additive
    drift_active = additive or bool(np.any(comp != 0.0))
    if not drift_active and V.kind == "rotation-by-norm":
        return _integrate_rotation_nodrift(grid_t, event_rows, jumps, x0)
    n_rows = grid_t.size
    values = np.empty((n_rows, x0.size))
    left_values = np.empty((event_rows.size, x0.size))
    values[0] = x0
    x = x0.copy()
    if not drift_active:
        # state is constant between events: apply jumps only and broadcast
        prev_row = 0
        for k, row in enumerate(event_rows):
            values[prev_row:row] = x
            left_values[k] = x
            x = x + V(x) @ jumps[k]
            _check_state(x, grid_t[row])
            values[row] = x
            prev_row = row + 1
        values[prev_row:] = x
        return values, left_values

    ev_ptr = 0
    n_events = event_rows.size
    for r in range(1, n_rows):
        dt = grid_t[r] - grid_t[r - 1]
        if dt > 0.0:
            if additive:
                x = x + dt * (V.drift(x) + comp)
            else:
                x = x + dt * (V(x) @ comp)
            _check_state(x, grid_t[r])
        if ev_ptr < n_events and event_rows[ev_ptr] == r:
            left_values[ev_ptr] = x
            if additive:
                x = x + jumps[ev_ptr]
            else:
                x = x + V(x) @ jumps[ev_ptr]
            _check_state(x, grid_t[r])
            ev_ptr += 1
        values[r] = x
    return values, left_values


def integrate_pair(
    stream: CoupledJumpStream, V: CoefficientField, x0, h: float
) -> tuple:
    """Integrate both coupled states through the shared event grid.

    Returns two :class:`SamplePath` objects on the identical jump-adapted
    grid; path i is driven by ``jump_i``/``comp_i``.
    """
    if h <= 0:
        raise ValueError("drift substep h must be positive")
    if h > stream.T / 10 * (1.0 + 1e-12):
        raise ValueError("drift substep h must be at most T/10")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size != V.m:
        raise ValueError(f"initial state dimension {x0.size} does not match V ({V.m})")
    if not V.is_additive and V.d != stream.d:
        raise ValueError(f"driver dimension {stream.d} does not match V ({V.d})")
    if V.is_additive and V.m != stream.d:
        raise ValueError("additive mode needs state and driver dimensions to agree")

    grid_t, event_rows = _build_grid(stream, h)
    paths = []
    for which in (1, 2):
        if V.kind == "constant":
            values, left = _integrate_constant(
                grid_t, event_rows, stream, which, V(x0), x0
            )
        else:
            values, left = _integrate_loop(grid_t, event_rows, stream, which, V, x0)
        paths.append(
            SamplePath(
                times=grid_t,
                values=values,
                event_rows=event_rows,
                left_values=left,
                meta={
                    "which": which,
                    "h": float(h),
                    "coefficient": V.kind,
                    "coupling": stream.meta.get("coupling"),
                },
            )
        )
    return paths[0], paths[1]


def sup_distance(p1: SamplePath, p2: SamplePath) -> float:
    """Supremum over the shared grid (right values and left limits) of the
    Euclidean distance between the two paths."""
    if not np.array_equal(p1.times, p2.times) or not np.array_equal(
        p1.event_rows, p2.event_rows
    ):
        raise ValueError("paths must share one jump-adapted grid")
    d_right = float(np.linalg.norm(p1.values - p2.values, axis=1).max())
    if p1.event_rows.size:
        d_left = float(np.linalg.norm(p1.left_values - p2.left_values, axis=1).max())
        return max(d_right, d_left)
    return d_right


def rescale_driver_stream(stream: CoupledJumpStream, t: float, g_t: float) -> CoupledJumpStream:
    """Small-time rescaling: a stream for X on [0, t*T'] becomes the stream
    for s -> X(st)/g(t) on [0, T']: times divide by t, jumps by g(t), and the
    per-unit-time compensators scale by t/g(t)."""
    if t <= 0:
        raise ValueError("time scale t must be positive")
    if g_t <= 0:
        raise ValueError("normalizing scale g must be positive")
    meta = dict(stream.meta)
    meta["rescaled"] = {"t": float(t), "g": float(g_t)}
    return CoupledJumpStream(
        T=stream.T / t,
        d=stream.d,
        times=stream.times / t,
        jump1=stream.jump1 / g_t,
        jump2=stream.jump2 / g_t,
        shared=stream.shared.copy(),
        eps=stream.eps / g_t,
        comp1=stream.comp1 * (t / g_t),
        comp2=stream.comp2 * (t / g_t),
        meta=meta,
    )
