"""Method-of-lines time integration for linear and quasilinear wave equations.

The integrated equation, in the solver's time-positive convention, is

    d_t^2 phi - Lap phi + F(d phi, d^2 phi) = G(d phi, d phi) + S,

with index raising by m = diag(-1,+1,+1,+1).  All second-time-derivative
contributions of F are collected onto the principal coefficient
(1 + F^{a00} d_a phi), which must stay away from zero (small-data regime).

Time stepping is classical RK4 on the first-order system (phi, pi), with
optional 5th-order Kreiss-Oliger dissipation applied to both components.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .grid import (
    GHOST,
    FieldSlice,
    GridError,
    NonFiniteFieldError,
    SpacetimeGrid,
    WaveState,
    fd_derivative_array,
    laplacian,
    mixed_second_derivative,
    pad_with_ghosts,
)
from .nullforms import BilinearForm, TrilinearForm, rotation_generator_commutes

KO_SIGMA_DEFAULT = 0.02

_KO_W = np.array([1.0, -6.0, 15.0, -20.0, 15.0, -6.0, 1.0])


class QuasilinearDegeneracyError(RuntimeError):
    """The F-contribution to the d_t^2 coefficient left the small-data regime."""


def ko_dissipation(values: np.ndarray, grid: SpacetimeGrid, sigma: float) -> np.ndarray:
    """(sigma/64) h^-1 (D+D-)^3 summed over axes; the 6th-difference symbol
    is -(2 sin(kh/2))^6, so this damps unresolved modes."""
    if sigma == 0.0:
        return np.zeros_like(values)
    padded = pad_with_ghosts(values, grid)
    out = np.zeros_like(values)
    shape = values.shape
    for axis in range(values.ndim):
        for k, w in enumerate(_KO_W):
            off = k - 3
            sl = [slice(GHOST, GHOST + n) for n in shape]
            sl[axis] = slice(GHOST + off, GHOST + off + shape[axis])
            out += w * padded[tuple(sl)]
    return (sigma / (64.0 * grid.h)) * out


# ---------------------------------------------------------------------------
# Derivative bundles (4-gradient and Hessian components on the grid)
# ---------------------------------------------------------------------------


class DerivativeBundle:
    """Lazy 4-gradient/Hessian components of one field on one slice.

    Axisym slices live on the meridian half-plane (y = rho, z = 0); the
    axisymmetric completion supplies d_z phi = 0, d_zz phi = (1/rho) d_rho phi,
    and zero mixed z-components.  d_t^2 comes from ``acc`` (the evolution
    equation) when provided.
    """

    def __init__(self, phi: np.ndarray, pi: np.ndarray, grid: SpacetimeGrid,
                 acc: np.ndarray | None = None):
        self.phi = phi
        self.pi = pi
        self.grid = grid
        self.acc = acc
        self._grad: dict[int, np.ndarray] = {}
        self._hess: dict[tuple[int, int], np.ndarray] = {}
        self._zeros = None

    def _zero(self) -> np.ndarray:
        if self._zeros is None:
            self._zeros = np.zeros(self.grid.shape)
        return self._zeros

    def grad(self, a: int) -> np.ndarray:
        if a in self._grad:
            return self._grad[a]
        g = self.grid
        if a == 0:
            out = self.pi
        elif g.mode == "axisym2d":
            out = fd_derivative_array(self.phi, g, a - 1, 1) if a in (1, 2) else self._zero()
        else:
            out = fd_derivative_array(self.phi, g, a - 1, 1)
        self._grad[a] = out
        return out

    def gradient_stack(self) -> np.ndarray:
        return np.stack([self.grad(a) for a in range(4)])

    def hess(self, a: int, b: int) -> np.ndarray:
        if a > b:
            a, b = b, a
        key = (a, b)
        if key in self._hess:
            return self._hess[key]
        g = self.grid
        if a == 0 and b == 0:
            if self.acc is None:
                raise GridError("d_t^2 requested but no acceleration supplied")
            out = self.acc
        elif a == 0:
            if g.mode == "axisym2d":
                out = fd_derivative_array(self.pi, g, b - 1, 1) if b in (1, 2) else self._zero()
            else:
                out = fd_derivative_array(self.pi, g, b - 1, 1)
        elif g.mode == "axisym2d":
            if b == 3:
                if a == 3:
                    rho = g.axis_coords(1)[None, :]
                    out = fd_derivative_array(self.phi, g, 1, 1) / rho
                else:
                    out = self._zero()
            elif a == b:
                out = fd_derivative_array(self.phi, g, a - 1, 2)
            else:
                out = mixed_second_derivative(self.phi, g, a - 1, b - 1)
        else:
            if a == b:
                out = fd_derivative_array(self.phi, g, a - 1, 2)
            else:
                out = mixed_second_derivative(self.phi, g, a - 1, b - 1)
        self._hess[key] = out
        return out

    def hessian_stack(self) -> np.ndarray:
        return np.stack([np.stack([self.hess(a, b) for b in range(4)]) for a in range(4)])


# ---------------------------------------------------------------------------
# Quasilinear acceleration
# ---------------------------------------------------------------------------


def _nonzero_entries(arr: np.ndarray) -> list[tuple]:
    return [tuple(idx) + (float(arr[tuple(idx)]),) for idx in np.argwhere(arr != 0.0)]


class QuasilinearOperator:
    """Right-hand-side assembler for one quasilinear wave equation.

    Precomputes the sparse index lists of the raised form coefficients; the
    per-call work touches only nonzero entries.
    """

    def __init__(self, f_form: TrilinearForm | None, g_form: BilinearForm | None,
                 grid: SpacetimeGrid, degeneracy_limit: float = 0.5):
        self.grid = grid
        self.f_form = f_form
        self.g_form = g_form
        self.degeneracy_limit = degeneracy_limit
        if grid.mode == "axisym2d":
            for form in (f_form, g_form):
                if form is not None and form.scale() > 0 and not rotation_generator_commutes(form):
                    raise GridError(
                        "axisym2d requires forms invariant under x-axis rotations"
                    )
        self._principal = []
        self._mixed = []
        self._spatial = []
        if f_form is not None:
            fu = f_form.raised
            for a in range(4):
                if fu[a, 0, 0] != 0.0:
                    self._principal.append((a, float(fu[a, 0, 0])))
                for j in range(1, 4):
                    if fu[a, 0, j] != 0.0:
                        self._mixed.append((a, j, 2.0 * float(fu[a, 0, j])))
                for i in range(1, 4):
                    for j in range(i, 4):
                        w = fu[a, i, j] if i == j else 2.0 * fu[a, i, j]
                        if w != 0.0:
                            self._spatial.append((a, i, j, float(w)))
        self._g_entries = _nonzero_entries(g_form.raised) if g_form is not None else []

    def principal_coefficient(self, first: DerivativeBundle) -> np.ndarray | float:
        c = 0.0
        for a, w in self._principal:
            c = c + w * first.grad(a)
        return c

    def acceleration(self, phi: np.ndarray, pi: np.ndarray,
                     source: np.ndarray | float = 0.0,
                     first_slot: DerivativeBundle | None = None) -> np.ndarray:
        """d_t^2 phi for the state (phi, pi).

        ``first_slot`` substitutes a different gradient bundle into the first
        slot of F (used by the residual equation, where the principal part is
        driven by the recomposed field).
        """
        me = DerivativeBundle(phi, pi, self.grid)
        first = first_slot if first_slot is not None else me
        rhs = laplacian(phi, self.grid)
        for a, j, w in self._mixed:
            rhs = rhs - w * first.grad(a) * me.hess(0, j)
        for a, i, j, w in self._spatial:
            rhs = rhs - w * first.grad(a) * me.hess(i, j)
        for a, b, w in self._g_entries:
            rhs = rhs + w * me.grad(a) * me.grad(b)
        rhs = rhs + source
        c = self.principal_coefficient(first)
        if self._principal:
            worst = float(np.max(np.abs(c)))
            if worst >= self.degeneracy_limit:
                loc = np.unravel_index(int(np.argmax(np.abs(c))), self.grid.shape)
                raise QuasilinearDegeneracyError(
                    f"quasilinear degeneracy: |F^(a00) d_a phi| = {worst:.3g} "
                    f">= {self.degeneracy_limit} at index {loc}"
                )
            return rhs / (1.0 + c)
        return rhs


def quasilinear_acceleration(state: WaveState, f_form: TrilinearForm | None,
                             g_form: BilinearForm | None,
                             source: FieldSlice | None = None) -> FieldSlice:
    """One-shot d_t^2 phi for a state (see QuasilinearOperator for the hot path)."""
    op = QuasilinearOperator(f_form, g_form, state.grid)
    src = source.values if source is not None else 0.0
    if source is not None and source.values.shape != state.grid.shape:
        raise GridError("source grid mismatch")
    acc = op.acceleration(state.phi.values, state.pi.values, src)
    return FieldSlice(acc, state.grid, state.time)


# ---------------------------------------------------------------------------
# Time stepping
# ---------------------------------------------------------------------------

AccelFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


def step_rk4(state: WaveState, rhs: AccelFn, dt: float,
             sigma: float = 0.0) -> WaveState:
    """Classical 4-stage update of (phi, pi); ``rhs(t, phi, pi)`` returns
    d_t^2 phi.  Kreiss-Oliger dissipation of strength sigma is added to both
    component derivatives."""
    g = state.grid
    t = state.time
    phi0, pi0 = state.phi.values, state.pi.values

    def f(tt, ph, pp):
        dphi = pp + ko_dissipation(ph, g, sigma)
        dpi = rhs(tt, ph, pp) + ko_dissipation(pp, g, sigma)
        return dphi, dpi

    k1 = f(t, phi0, pi0)
    k2 = f(t + dt / 2, phi0 + dt / 2 * k1[0], pi0 + dt / 2 * k1[1])
    k3 = f(t + dt / 2, phi0 + dt / 2 * k2[0], pi0 + dt / 2 * k2[1])
    k4 = f(t + dt, phi0 + dt * k3[0], pi0 + dt * k3[1])
    phi1 = phi0 + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    pi1 = pi0 + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    if not (np.all(np.isfinite(phi1)) and np.all(np.isfinite(pi1))):
        raise NonFiniteFieldError(f"NaN/Inf produced stepping from t={t:.6g}")
    return WaveState(FieldSlice(phi1, g, t + dt), FieldSlice(pi1, g, t + dt))


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


@dataclass
class Slab:
    """Consecutive stored levels around one time, for commuted estimators."""

    times: np.ndarray
    phis: list[np.ndarray]
    pis: list[np.ndarray]
    grid: SpacetimeGrid

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def center_index(self) -> int:
        return len(self.times) // 2

    @property
    def center_time(self) -> float:
        return float(self.times[self.center_index])


@dataclass
class Trajectory:
    """Sparse snapshots, burst slabs, and per-step monitor series of one field."""

    grid: SpacetimeGrid
    times: list[float] = field(default_factory=list)
    phis: list[np.ndarray] = field(default_factory=list)
    pis: list[np.ndarray] = field(default_factory=list)
    accs: list[np.ndarray] = field(default_factory=list)
    slabs: list[Slab] = field(default_factory=list)
    monitor_times: list[float] = field(default_factory=list)
    monitors: dict[str, list[float]] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def state(self, i: int) -> WaveState:
        t = self.times[i]
        return WaveState(FieldSlice(self.phis[i], self.grid, t),
                         FieldSlice(self.pis[i], self.grid, t))

    def acc(self, i: int) -> np.ndarray:
        return self.accs[i]

    @property
    def t0(self) -> float:
        return self.times[0]

    @property
    def t1(self) -> float:
        return self.times[-1]

    def bracket(self, t: float) -> tuple[int, int]:
        ts = np.asarray(self.times)
        if not (ts[0] - 1e-9 <= t <= ts[-1] + 1e-9):
            raise ValueError(f"time {t} outside stored window [{ts[0]}, {ts[-1]}]")
        j = int(np.searchsorted(ts, t)) if t > ts[0] else 1
        j = min(max(j, 1), len(ts) - 1)
        return j - 1, j

    def sample(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """(phi, pi) at time t by Hermite interpolation of the stored levels:
        quintic in phi using (phi, pi, acc) at both ends, cubic in pi."""
        i0, i1 = self.bracket(t)
        dt = self.times[i1] - self.times[i0]
        if dt == 0.0:
            return self.phis[i0], self.pis[i0]
        s = (t - self.times[i0]) / dt
        s2, s3 = s * s, s ** 3
        s4, s5 = s ** 4, s ** 5
        h00 = 1 - 10 * s3 + 15 * s4 - 6 * s5
        h10 = s - 6 * s3 + 8 * s4 - 3 * s5
        h20 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5
        h01 = 10 * s3 - 15 * s4 + 6 * s5
        h11 = -4 * s3 + 7 * s4 - 3 * s5
        h21 = 0.5 * s3 - s4 + 0.5 * s5
        phi = (h00 * self.phis[i0] + h10 * dt * self.pis[i0] + h20 * dt * dt * self.accs[i0]
               + h01 * self.phis[i1] + h11 * dt * self.pis[i1] + h21 * dt * dt * self.accs[i1])
        c00 = 2 * s3 - 3 * s2 + 1
        c10 = s3 - 2 * s2 + s
        c01 = -2 * s3 + 3 * s2
        c11 = s3 - s2
        pi = (c00 * self.pis[i0] + c10 * dt * self.accs[i0]
              + c01 * self.pis[i1] + c11 * dt * self.accs[i1])
        return phi, pi

    def monitor(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.monitor_times), np.asarray(self.monitors[name])

    def slab_near(self, t: float) -> Slab:
        if not self.slabs:
            raise ValueError("trajectory recorded no slabs")
        return min(self.slabs, key=lambda s: abs(s.center_time - t))


# ---------------------------------------------------------------------------
# System co-evolution driver
# ---------------------------------------------------------------------------

SystemAccelFn = Callable[[float, Mapping[str, np.ndarray], Mapping[str, np.ndarray], str], np.ndarray]


@dataclass
class SystemRun:
    """Result of one co-evolution: trajectories plus shared monitor series."""

    trajectories: dict[str, Trajectory]
    monitor_times: np.ndarray
    monitors: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> Trajectory:
        return self.trajectories[name]

    def monitor(self, key: str) -> tuple[np.ndarray, np.ndarray]:
        return self.monitor_times, self.monitors[key]


def evolve_system(
    states: dict[str, WaveState],
    accel: SystemAccelFn,
    n_steps: int,
    *,
    sigma: float = KO_SIGMA_DEFAULT,
    save_every: int | None = None,
    slab_steps: dict[int, int] | None = None,
    monitors: Mapping[str, Callable[[float, Mapping[str, np.ndarray], Mapping[str, np.ndarray]], float]] | None = None,
    monitor_every: int = 1,
    direction: float = 1.0,
) -> SystemRun:
    """Advance several coupled fields through one shared RK4 loop.

    ``accel(t, phis, pis, name)`` returns d_t^2 of field ``name`` given the
    current stage values of every field, so couplings see exact stage states.
    ``slab_steps`` maps a step index to a level count: that many consecutive
    levels are recorded around that step for every field.  Monitors are
    scalar reductions over the whole system, evaluated on full steps.
    The first and last states are always snapshotted.
    """
    names = list(states)
    g = next(iter(states.values())).grid
    dt = direction * g.dt
    t = next(iter(states.values())).time
    phis = {nm: states[nm].phi.values.copy() for nm in names}
    pis = {nm: states[nm].pi.values.copy() for nm in names}

    trajs = {nm: Trajectory(grid=g) for nm in names}
    monitor_times: list[float] = []
    monitor_series: dict[str, list[float]] = {key: [] for key in (monitors or {})}

    slab_plan: dict[int, set[int]] = {}
    if slab_steps:
        for center, n_levels in slab_steps.items():
            lo = max(0, center - n_levels // 2)
            for s in range(lo, lo + n_levels):
                slab_plan.setdefault(s, set()).add(center)
    slab_store: dict[int, dict] = {}

    def record_save(step_t):
        for nm in names:
            acc = accel(step_t, phis, pis, nm)
            tr = trajs[nm]
            tr.times.append(step_t)
            tr.phis.append(phis[nm].copy())
            tr.pis.append(pis[nm].copy())
            tr.accs.append(acc)

    def record_monitors(step_t):
        if monitors:
            monitor_times.append(step_t)
            for key, fn in monitors.items():
                monitor_series[key].append(fn(step_t, phis, pis))

    def record_slab(step_index, step_t):
        for center in slab_plan.get(step_index, ()):
            store = slab_store.setdefault(center, {"times": [], **{nm: [] for nm in names}})
            store["times"].append(step_t)
            for nm in names:
                store[nm].append((phis[nm].copy(), pis[nm].copy()))

    record_save(t)
    record_monitors(t)
    record_slab(0, t)

    for step in range(1, n_steps + 1):
        ks = []
        for stage, (ct, cy) in enumerate(((0.0, 0.0), (0.5, 0.5), (0.5, 0.5), (1.0, 1.0))):
            if stage == 0:
                stage_phis, stage_pis = phis, pis
            else:
                prev_phi, prev_pi = ks[-1]
                stage_phis = {nm: phis[nm] + cy * dt * prev_phi[nm] for nm in names}
                stage_pis = {nm: pis[nm] + cy * dt * prev_pi[nm] for nm in names}
            ts = t + ct * dt
            d_phi = {}
            d_pi = {}
            for nm in names:
                d_phi[nm] = stage_pis[nm] + ko_dissipation(stage_phis[nm], g, sigma)
                d_pi[nm] = accel(ts, stage_phis, stage_pis, nm) + ko_dissipation(stage_pis[nm], g, sigma)
            ks.append((d_phi, d_pi))
        for nm in names:
            phis[nm] = phis[nm] + dt / 6 * (ks[0][0][nm] + 2 * ks[1][0][nm] + 2 * ks[2][0][nm] + ks[3][0][nm])
            pis[nm] = pis[nm] + dt / 6 * (ks[0][1][nm] + 2 * ks[1][1][nm] + 2 * ks[2][1][nm] + ks[3][1][nm])
        t = t + dt
        for nm in names:
            if not np.all(np.isfinite(phis[nm])):
                raise NonFiniteFieldError(f"field {nm!r} went non-finite at step {step}, t={t:.6g}")
        if step % monitor_every == 0:
            record_monitors(t)
        if (save_every and step % save_every == 0) or step == n_steps:
            record_save(t)
        record_slab(step, t)

    for center in sorted(slab_store):
        store = slab_store[center]
        times = np.asarray(store["times"])
        for nm in names:
            trajs[nm].slabs.append(Slab(
                times=times,
                phis=[p for p, _ in store[nm]],
                pis=[q for _, q in store[nm]],
                grid=g,
            ))
    return SystemRun(
        trajectories=trajs,
        monitor_times=np.asarray(monitor_times),
        monitors={k: np.asarray(v) for k, v in monitor_series.items()},
    )


def evolve(
    state: WaveState,
    rhs: AccelFn,
    n_steps: int,
    *,
    sigma: float = KO_SIGMA_DEFAULT,
    save_every: int | None = None,
    slab_steps: dict[int, int] | None = None,
    monitors: Mapping[str, Callable[[float, np.ndarray, np.ndarray], float]] | None = None,
    monitor_every: int = 1,
    direction: float = 1.0,
) -> Trajectory:
    """Single-field wrapper over :func:`evolve_system`; monitor series are
    attached to the returned trajectory."""
    wrapped = None
    if monitors:
        wrapped = {
            key: (lambda f: (lambda t, ps, qs: f(t, ps["u"], qs["u"])))(fn)
            for key, fn in monitors.items()
        }
    run = evolve_system(
        {"u": state},
        lambda t, ps, qs, nm: rhs(t, ps["u"], qs["u"]),
        n_steps,
        sigma=sigma,
        save_every=save_every,
        slab_steps=slab_steps,
        monitors=wrapped,
        monitor_every=monitor_every,
        direction=direction,
    )
    traj = run["u"]
    traj.monitor_times = list(run.monitor_times)
    traj.monitors = {k: list(v) for k, v in run.monitors.items()}
    return traj
