"""Adaptive Dormand-Prince 5(4) integration with fixed-interval sampling.

The stepper advances a whole batch of independent initial-value problems at
once: every row of ``y`` carries its own time, step size and status. Samples
on the fixed output grid are filled from each accepted step's quartic
continuous extension, so the step sequence does not depend on the sampling
interval.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from scipy.integrate import solve_ivp

MIN_STEP = 1e-12

# Dormand & Prince (1980) coefficients
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
# 5th-order weights minus embedded 4th-order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

# quartic continuous extension (Shampine 1986), as tabulated for DOPRI5
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

# h * (local Lipschitz estimate) above this marks a step as stiffness-limited
# (DOPRI5 uses 3.25, but pinned extinct states here settle near 2.9);
# that many such steps, not broken by six calm ones, hand the row to an
# implicit method
_STIFF_RATIO = 2.0
_STIFF_RUN = 15
# rows only turn stiff once a component sits in the micro-scale extinction
# band; the implicit leg needs an absolute tolerance that resolves it
_IMPLICIT_ABS_TOL = 1e-10

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


class Termination(str, Enum):
    REACHED_T_END = "reached_t_end"
    EXTINCTION_BLUE = "extinction_blue"
    EXTINCTION_RED = "extinction_red"
    DIVERGED = "diverged"
    STEP_FAILURE = "step_failure"

    @property
    def is_extinction(self) -> bool:
        return self in (Termination.EXTINCTION_BLUE, Termination.EXTINCTION_RED)


_CODES = list(Termination)


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-6
    abs_tol: float = 1e-8
    t_end: float = 50.0
    max_step: float = 0.1
    sample_interval: float = 0.01
    max_steps: int = 5_000_000
    stiff_switch: bool = True

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "t_end", "max_step", "sample_interval"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    def sample_times(self) -> np.ndarray:
        n = int(np.floor(self.t_end / self.sample_interval + 1e-9))
        times = np.arange(n + 1) * self.sample_interval
        if self.t_end - times[-1] > 1e-9 * self.t_end:
            times = np.append(times, self.t_end)
        else:
            times[-1] = self.t_end
        return times

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Trajectory:
    """Sampled solution of one initial-value problem.

    ``states[i]`` is the state at ``times[i]``. If integration stopped early
    (extinction stop, divergence, step failure) the sample arrays end at the
    last grid point reached and ``final_time``/``final_state`` record where
    the stepper actually stopped.
    """

    times: np.ndarray
    states: np.ndarray
    termination: Termination = Termination.REACHED_T_END
    accepted_steps: int = 0
    rejected_steps: int = 0
    labels: tuple = ("B", "R", "g", "gamma", "Gamma")
    final_time: float | None = None
    final_state: np.ndarray | None = field(default=None, repr=False)
    stiff_switch_time: float = float("nan")

    def __post_init__(self):
        if self.final_time is None and len(self.times):
            self.final_time = float(self.times[-1])
        if self.final_state is None and len(self.states):
            self.final_state = self.states[-1]

    def __len__(self):
        return len(self.times)

    def component(self, name: str) -> np.ndarray:
        return self.states[:, self.labels.index(name)]

    def to_csv(self, path) -> None:
        """Write samples with 17 significant digits.

        Five-component population trajectories get the header
        ``t,B,R,g,gamma,Gamma,G_total``; other systems use their labels.
        """
        population = tuple(self.labels) == ("B", "R", "g", "gamma", "Gamma")
        header = ["t", *self.labels] + (["G_total"] if population else [])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for t, y in zip(self.times, self.states):
                row = [t, *y]
                if population:
                    row.append(y[2] + y[3] + y[4])
                w.writerow([f"{v:.17g}" for v in row])


@dataclass
class BatchResult:
    """Outcome of :func:`integrate_batch` for ``m`` rows."""

    times: np.ndarray            # (n_samples,) shared sample grid
    samples: np.ndarray | None   # (m, n_samples, n) or None; NaN past a stop
    n_reached: np.ndarray        # (m,) number of grid samples filled
    final_time: np.ndarray       # (m,)
    final_state: np.ndarray      # (m, n)
    termination: list            # m Termination members
    accepted_steps: np.ndarray
    rejected_steps: np.ndarray
    stiff_switch_time: np.ndarray | None = None  # (m,), NaN where no switch

    def trajectory(self, i: int, labels=None) -> Trajectory:
        n = int(self.n_reached[i])
        states = self.samples[i, :n].copy()
        kw = {} if labels is None else {"labels": tuple(labels)}
        return Trajectory(
            times=self.times[:n].copy(), states=states,
            termination=self.termination[i],
            accepted_steps=int(self.accepted_steps[i]),
            rejected_steps=int(self.rejected_steps[i]),
            final_time=float(self.final_time[i]),
            final_state=self.final_state[i].copy(),
            stiff_switch_time=(float("nan") if self.stiff_switch_time is None
                               else float(self.stiff_switch_time[i])), **kw)


def _wnorm(x, scale):
    return np.max(np.abs(x) / scale, axis=-1)


def _initial_step(rhs, t, y, f0, cfg):
    # Hairer, Norsett & Wanner, Solving ODEs I, sec. II.4
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(y)
    d0 = _wnorm(y, scale)
    d1 = _wnorm(f0, scale)
    with np.errstate(divide="ignore", invalid="ignore"):
        h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / d1)
    h0 = np.minimum(h0, cfg.max_step)
    f1 = rhs(t + h0, y + h0[:, None] * f0)
    d2 = _wnorm(f1 - f0, scale) / h0
    dmax = np.maximum(d1, d2)
    with np.errstate(divide="ignore"):
        h1 = np.where(dmax <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / dmax) ** 0.2)
    h = np.minimum(100 * h0, h1)
    h = np.where(np.isfinite(h), h, 1e-6)
    return np.clip(h, MIN_STEP * 10, cfg.max_step)


def integrate_batch(rhs, y0, cfg: IntegratorConfig = IntegratorConfig(), *,
                    guard=None, extinction_threshold=None,
                    extinction_sides=(("blue", 0), ("red", 1)),
                    record=True, row_rhs=None) -> BatchResult:
    """Integrate ``m`` independent problems ``y' = rhs(t, y)`` from t = 0.

    Parameters
    ----------
    rhs : callable
        ``rhs(t, y)`` with ``t`` of shape (m,) and ``y`` of shape (m, n),
        returning an (m, n) array. It must act row by row.
    y0 : array_like, shape (m, n)
    cfg : IntegratorConfig
    guard : callable, optional
        ``guard(t, y) -> bool (m,)``; rows flagged True after an accepted
        step stop with ``Termination.DIVERGED``.
    extinction_threshold : float, optional
        Stop a row once a watched component drops below this value.
    extinction_sides : sequence of (side, index)
        Components watched for the extinction stop.
    record : bool
        Keep the full sample array; otherwise only final states are kept.
    row_rhs : callable, optional
        ``row_rhs(i)`` returns ``f(t, y)`` for row ``i`` alone, used when a
        stiff row is finished by the implicit solver. By default the batch
        ``rhs`` is evaluated with that row's state broadcast to every row.
    """
    y = np.array(y0, dtype=float, ndmin=2)
    if not np.all(np.isfinite(y)):
        raise ValueError("initial state must be finite")
    m, n = y.shape
    times = cfg.sample_times()
    n_samples = len(times)
    t_end = times[-1]

    samples = None
    if record:
        samples = np.full((m, n_samples, n), np.nan)
        samples[:, 0] = y
    t = np.zeros(m)
    nxt = np.ones(m, dtype=np.intp)          # index of the next unfilled sample
    active = np.ones(m, dtype=bool)
    status = np.zeros(m, dtype=np.intp)      # index into _CODES
    accepted = np.zeros(m, dtype=np.int64)
    rejected = np.zeros(m, dtype=np.int64)
    just_rejected = np.zeros(m, dtype=bool)
    last_bad = np.zeros(m, dtype=bool)
    stiff_run = np.zeros(m, dtype=np.intp)
    calm = np.zeros(m, dtype=np.intp)
    handoff = np.zeros(m, dtype=bool)
    if n_samples == 1:
        return BatchResult(times, samples, nxt, t, y, [Termination.REACHED_T_END] * m,
                           accepted, rejected)

    K = np.empty((7, m, n))
    K[0] = rhs(t, y)
    if not np.all(np.isfinite(K[0])):
        raise ValueError("right-hand side is not finite at the initial state")
    h = _initial_step(rhs, t, y, K[0], cfg)
    Kf = K.reshape(7, m * n)
    C = _C[:, None]
    code_diverged = _CODES.index(Termination.DIVERGED)
    code_fail = _CODES.index(Termination.STEP_FAILURE)
    # widest run of samples one step can cover
    span = int(np.ceil(cfg.max_step / cfg.sample_interval)) + 2

    while True:
        last = h >= t_end - t
        hs = np.where(last, t_end - t, h)
        hs *= active
        hc = hs[:, None]
        ts = t + C * hs

        for i, a in enumerate(_A, start=1):
            yi = (a @ Kf[:i]).reshape(m, n)
            yi *= hc
            yi += y
            if i == 5:
                y6 = yi
            K[i] = rhs(ts[i], yi)
        y_new = yi  # the last stage is evaluated at the 5th-order solution
        err = (_E @ Kf).reshape(m, n)
        err *= hc

        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            scale = np.maximum(np.abs(y), np.abs(y_new))
            scale *= cfg.rel_tol
            scale += cfg.abs_tol
            err /= scale
            np.abs(err, out=err)
            err += 0.0 * K[6]  # NaN/inf in the last stage poisons the norm
            en = err.max(axis=-1)
            factor = np.clip(_SAFETY * en ** -0.2, _MIN_FACTOR, _MAX_FACTOR)
        ok = en <= 1.0
        ok &= active
        bad = active & ~ok
        finite = np.isfinite(en)
        if not finite.all():
            factor[~finite] = _MIN_FACTOR
        shrink = just_rejected | bad
        if shrink.any():
            np.minimum(factor, 1.0, out=factor, where=shrink)
        h_new = hs * factor
        # a step shortened to hit t_end says nothing against the old proposal
        np.maximum(h_new, h, out=h_new, where=ok & last)
        h = np.where(active, np.minimum(h_new, cfg.max_step), h)

        if ok.any():
            t_new = np.where(last, t_end, t + hs)
            if record:
                _fill_samples(samples, times, nxt, ok, t, hs, y, y_new, t_new, K)
            else:
                nxt[ok] = np.searchsorted(times, t_new[ok], side="right")
            if cfg.stiff_switch:
                # Hairer's test: h * |f(y7) - f(y6)| / |y7 - y6|
                with np.errstate(invalid="ignore", divide="ignore"):
                    num = np.sum((K[6] - K[5]) ** 2, axis=-1)
                    den = np.sum((y_new - y6) ** 2, axis=-1)
                    stiff = hs * hs * num > _STIFF_RATIO ** 2 * den
                # as in DOPRI5: six non-stiff steps reset the stiff count
                calm = np.where(ok & ~stiff, calm + 1, calm)
                stiff_run = np.where(ok & stiff, stiff_run + 1, stiff_run)
                reset = calm >= 6
                stiff_run[reset] = 0
                calm[reset | (ok & stiff)] = 0
            t = np.where(ok, t_new, t)
            y[ok] = y_new[ok]
            K[0][ok] = K[6][ok]
            accepted += ok
            active &= ~(ok & last)
        if bad.any():
            rejected += bad
        just_rejected = bad
        last_bad = active & ~finite

        if guard is not None:
            g = ok & active & np.asarray(guard(t, y), dtype=bool)
            status[g] = code_diverged
            active &= ~g
        if extinction_threshold is not None:
            for side, j in extinction_sides:
                hit = ok & active & (y[:, j] < extinction_threshold)
                status[hit] = _CODES.index(Termination(f"extinction_{side}"))
                active &= ~hit

        if cfg.stiff_switch:
            switch = active & (stiff_run >= _STIFF_RUN)
            if switch.any():
                handoff |= switch
                active &= ~switch

        fail = active & (h < MIN_STEP)
        if fail.any() or accepted.max() + rejected.max() >= cfg.max_steps:
            fail |= active & (accepted + rejected >= cfg.max_steps)
            status[fail] = np.where(last_bad[fail], code_diverged, code_fail)
            active &= ~fail
        if not active.any():
            break

    switch_time = np.where(handoff, t, np.nan)
    for i in np.flatnonzero(handoff):
        if row_rhs is not None:
            fi = row_rhs(i)
        else:
            def fi(tt, yy, i=i):
                return rhs(np.full(m, tt), np.broadcast_to(yy, (m, n)))[i]
        status[i] = _finish_implicit(
            fi, i, t, y, cfg, times, samples, nxt, accepted, guard,
            extinction_threshold, extinction_sides)

    return BatchResult(
        times=times, samples=samples, n_reached=nxt, final_time=t,
        final_state=y, termination=[_CODES[c] for c in status],
        accepted_steps=accepted, rejected_steps=rejected,
        stiff_switch_time=switch_time)


def _finish_implicit(f, i, t, y, cfg, times, samples, nxt, accepted, guard,
                     extinction_threshold, extinction_sides):
    """Carry row ``i`` from ``t[i]`` to the end with LSODA, writing samples,
    final time/state and step count in place. Returns the status code."""
    events = []
    if extinction_threshold is not None:
        for side, j in extinction_sides:
            ev = (lambda tt, yy, j=j: yy[j] - extinction_threshold)
            ev.terminal, ev.direction = True, -1
            events.append((side, ev))
    t_end = times[-1]
    with np.errstate(over="ignore", invalid="ignore"):
        sol = solve_ivp(f, (t[i], t_end), y[i].copy(), method="LSODA",
                        rtol=cfg.rel_tol, atol=min(cfg.abs_tol, _IMPLICIT_ABS_TOL),
                        max_step=cfg.max_step,
                        dense_output=True, events=[e for _, e in events] or None)
    accepted[i] += len(sol.t) - 1
    t_stop, y_stop = sol.t[-1], sol.y[:, -1]
    code = _CODES.index(Termination.REACHED_T_END)
    if sol.status == -1:
        bad = not np.all(np.isfinite(y_stop))
        code = _CODES.index(Termination.DIVERGED if bad else Termination.STEP_FAILURE)
    elif sol.status == 1:
        for (side, _), hits in zip(events, sol.t_events):
            if len(hits) and hits[0] == t_stop:
                code = _CODES.index(Termination(f"extinction_{side}"))
                break
    end = int(np.searchsorted(times, t_stop, side="right"))
    if samples is not None and end > nxt[i]:
        samples[i, nxt[i]:end] = sol.sol(times[nxt[i]:end]).T
        if times[end - 1] == t_stop:
            samples[i, end - 1] = y_stop
        if guard is not None:
            flagged = np.asarray(guard(times[nxt[i]:end], samples[i, nxt[i]:end]), dtype=bool)
            if flagged.any():
                k = nxt[i] + int(np.argmax(flagged))
                samples[i, k + 1:end] = np.nan
                t_stop, y_stop, end = times[k], samples[i, k].copy(), k + 1
                code = _CODES.index(Termination.DIVERGED)
    nxt[i] = max(nxt[i], end)
    t[i], y[i] = t_stop, y_stop
    return code


def _fill_samples(samples, times, nxt, ok, t, hs, y, y_new, t_new, K):
    """Evaluate each accepted step's quartic continuous extension at the
    sample times it covers; a sample on the step end takes ``y_new`` itself."""
    end = np.searchsorted(times, t_new, side="right")
    count = np.where(ok, end - nxt, 0)
    if count.max() <= 0:
        return
    rows = np.flatnonzero(count > 0)
    width = count[rows].max()
    j = nxt[rows, None] + np.arange(width)
    valid = j < end[rows, None]
    j = np.minimum(j, len(times) - 1)
    h = hs[rows]
    theta = (times[j] - t[rows, None]) / h[:, None]
    powers = theta[..., None] ** np.arange(1, 5)                 # (r, w, 4)
    Q = np.einsum("srn,sk->rnk", K[:, rows], _P)                 # (r, n, 4)
    vals = y[rows, None, :] + h[:, None, None] * np.einsum("rnk,rwk->rwn", Q, powers)
    at_end = times[j] == t_new[rows, None]
    vals = np.where(at_end[..., None], y_new[rows, None, :], vals)
    r_idx = np.broadcast_to(rows[:, None], j.shape)
    samples[r_idx[valid], j[valid]] = vals[valid]
    nxt[rows] = end[rows]


def integrate(rhs, y0, cfg: IntegratorConfig = IntegratorConfig(), *,
              labels=None, guard=None, stop_on_extinction=False,
              extinction_threshold=1e-3) -> Trajectory:
    """Integrate a single problem and return its sampled trajectory.

    ``rhs(t, y)`` receives ``t`` of shape (1,) and ``y`` of shape (1, n);
    every field factory in :mod:`advdyn.models` satisfies this.
    """
    y0 = np.asarray(y0, dtype=float)
    if labels is None:
        labels = ("B", "R", "g", "gamma", "Gamma") if y0.shape == (5,) else \
            tuple(f"y{i}" for i in range(y0.size))
    res = integrate_batch(
        rhs, y0[None, :], cfg, guard=guard,
        extinction_threshold=extinction_threshold if stop_on_extinction else None)
    return res.trajectory(0, labels=labels)


def detect_extinction(traj: Trajectory, threshold: float = 1e-3,
                      sides=(("blue", "B"), ("red", "R"))):
    """First sampled time at which a side falls below ``threshold``.

    The crossing time is linearly interpolated between the bracketing
    samples. Returns ``(time, side)`` or ``None``.
    """
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    best = None
    for side, name in sides:
        if name not in traj.labels:
            continue
        x = traj.component(name)
        below = np.flatnonzero(x < threshold)
        if below.size == 0:
            continue
        i = below[0]
        if i == 0:
            tc = float(traj.times[0])
        else:
            x0, x1 = x[i - 1], x[i]
            t0, t1 = traj.times[i - 1], traj.times[i]
            tc = float(t0 + (x0 - threshold) / (x0 - x1) * (t1 - t0))
        if best is None or tc < best[0]:
            best = (tc, side)
    return best
