"""The evolution system: nonlinearity, damping, forcing, and integration.

Spectral form of the plate system with fading memory, per mode k:

    du_k = v_k
    (1 + lam_k) dv_k = -a(t) v_k - lam_k^2 u_k - mem_k - lam_k v_k
                       - f(u)_k + g_k(t)

where mem_k is the kernel-weighted bilaplacian of the history and f(u) is
projected pseudo-spectrally on the de-aliased grid.  The mass operator
(identity minus Laplacian) is diagonal, so its inverse is a per-mode
division; it also tames the fourth-order stiffness, the per-mode rate
being lam^2/(1+lam).

Time stepping is the classical explicit fourth-order Runge-Kutta applied
to (u, v) with the history held frozen within the step, followed by the
exact-shift history advance.  The splitting in the memory coupling is
first order with a small constant; the stiff-free part is fourth order.
A conservative step bound dt <= 2.5/lam_max with lam_max = dim*N^2 is
enforced as a precondition.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DivergenceError
from .memory import HistoryField, MemoryKernel, history_advance, memory_integral, validate_kernel
from .spectral import (
    DomainSpec,
    SpectralField,
    _scale,
    grid_quadrature,
    to_physical,
    to_spectral,
)

STEP_SAFETY = 2.5


# ---------------------------------------------------------------------------
# nonlinearity
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NonlinearitySpec:
    """Pointwise nonlinearity f with antiderivative F.

    kind: zero | cubic | odd_power | tabulated.  odd_power means
    f(s) = |s|^p s with p = growth_exponent.  derivative_bound scales the
    admissible growth of f', potential_drop bounds the negative part of F.
    """

    kind: str = "cubic"
    growth_exponent: float = 2.0
    derivative_bound: float = 3.0
    potential_drop: float = 0.0
    table_s: np.ndarray | None = None
    table_f: np.ndarray | None = None

    @classmethod
    def zero(cls):
        return cls(kind="zero", growth_exponent=1.0, derivative_bound=0.0)

    @classmethod
    def cubic(cls):
        return cls(kind="cubic", growth_exponent=2.0, derivative_bound=3.0)

    @classmethod
    def odd_power(cls, p):
        return cls(kind="odd_power", growth_exponent=float(p),
                   derivative_bound=float(p) + 1.0)

    @classmethod
    def tabulated(cls, table_s, table_f, growth_exponent, derivative_bound,
                  potential_drop=0.0):
        s = np.asarray(table_s, dtype=float)
        f = np.asarray(table_f, dtype=float)
        if s.ndim != 1 or s.shape != f.shape or s.size < 2:
            raise ValueError("tabulated nonlinearity needs matching 1-d tables")
        if not (np.diff(s) > 0).all():
            raise ValueError("table abscissae must be strictly increasing")
        return cls(kind="tabulated", growth_exponent=float(growth_exponent),
                   derivative_bound=float(derivative_bound),
                   potential_drop=float(potential_drop), table_s=s, table_f=f)


def eval_nonlinearity(spec, u_grid):
    """Pointwise f(u) and F(u) on grid samples."""
    u = np.asarray(u_grid, dtype=float)
    if spec.kind == "zero":
        return np.zeros_like(u), np.zeros_like(u)
    if spec.kind == "cubic":
        return u * u * u, 0.25 * u**4
    if spec.kind == "odd_power":
        p = spec.growth_exponent
        a = np.abs(u)
        return a**p * u, a ** (p + 2.0) / (p + 2.0)
    if spec.kind == "tabulated":
        s, f = spec.table_s, spec.table_f
        if (u < s[0]).any() or (u > s[-1]).any():
            raise ValueError("tabulated nonlinearity evaluated outside its table range")
        fv = np.interp(u, s, f)
        # antiderivative by cumulative trapezoid, anchored at the node nearest zero
        ftab = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(s))])
        i0 = int(np.argmin(np.abs(s)))
        ftab = ftab - np.interp(0.0, s, ftab) if s[0] <= 0.0 <= s[-1] else ftab - ftab[i0]
        return fv, np.interp(u, s, ftab)
    raise ValueError(f"unknown nonlinearity kind {spec.kind!r}")


def validate_nonlinearity(spec, dim):
    """Spot-check the growth and sign assumptions on a sample grid."""
    errors = []
    p = spec.growth_exponent
    if p <= 0:
        errors.append("nonlinearity growth_exponent must be positive")
    # any finite growth exponent is admissible in dimensions one and two
    if spec.kind not in ("zero", "cubic", "odd_power", "tabulated"):
        errors.append(f"unknown nonlinearity kind {spec.kind!r}")
        return errors
    if spec.kind == "tabulated" and (spec.table_s is None or spec.table_f is None):
        errors.append("tabulated nonlinearity requires tables")
        return errors
    span = spec.table_s[[0, -1]] if spec.kind == "tabulated" else (-3.0, 3.0)
    s = np.linspace(span[0], span[1], 401)
    h = (s[1] - s[0]) / 4.0
    try:
        f_hi, _ = eval_nonlinearity(spec, np.clip(s + h, span[0], span[1]))
        f_lo, _ = eval_nonlinearity(spec, np.clip(s - h, span[0], span[1]))
        fv, Fv = eval_nonlinearity(spec, s)
    except ValueError as exc:
        errors.append(str(exc))
        return errors
    if spec.kind != "zero":
        fprime = (f_hi - f_lo) / (2 * h)
        bound = spec.derivative_bound * (1.0 + np.abs(s) ** p)
        if (np.abs(fprime) > bound * (1 + 1e-6) + 1e-9).any():
            errors.append("nonlinearity derivative exceeds its declared growth bound")
    if (Fv < -spec.potential_drop - 1e-9).any():
        errors.append("antiderivative drops below its declared floor")
    if (Fv > fv * s + 1e-9 * (1 + np.abs(fv * s))).any():
        errors.append("antiderivative exceeds f(s)*s, breaking the sign assumption")
    return errors


# ---------------------------------------------------------------------------
# damping
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DampingSpec:
    """Time-dependent damping coefficient with uniform bounds.

    kind: constant | ramp | tabulated.  The ramp family is
    a(t) = (1-epsilon) t^2/(1+t^2) + floor, which rises from the floor at
    t = 0 towards 1 - epsilon + floor; epsilon in [0, 1] parametrizes the
    perturbation studied by the sweep experiments.
    """

    kind: str = "constant"
    value: float = 1.0
    epsilon: float = 0.0
    floor: float = 0.5
    table_t: np.ndarray | None = None
    table_a: np.ndarray | None = None

    @classmethod
    def constant(cls, a):
        return cls(kind="constant", value=float(a))

    @classmethod
    def ramp(cls, epsilon, floor):
        return cls(kind="ramp", epsilon=float(epsilon), floor=float(floor))

    @classmethod
    def tabulated(cls, table_t, table_a):
        t = np.asarray(table_t, dtype=float)
        a = np.asarray(table_a, dtype=float)
        if t.ndim != 1 or t.shape != a.shape or t.size < 2:
            raise ValueError("tabulated damping needs matching 1-d tables")
        if not (np.diff(t) > 0).all():
            raise ValueError("damping table times must be strictly increasing")
        return cls(kind="tabulated", table_t=t, table_a=a)

    def lower_bound(self):
        if self.kind == "constant":
            return self.value
        if self.kind == "ramp":
            return self.floor
        return float(self.table_a.min())

    def upper_bound(self):
        if self.kind == "constant":
            return self.value
        if self.kind == "ramp":
            return 1.0 - self.epsilon + self.floor
        return float(self.table_a.max())


def eval_damping(spec, t):
    if spec.kind == "constant":
        return spec.value
    if spec.kind == "ramp":
        t = np.asarray(t, dtype=float)
        out = (1.0 - spec.epsilon) * t * t / (1.0 + t * t) + spec.floor
        return float(out) if out.ndim == 0 else out
    if spec.kind == "tabulated":
        # constant extension outside the table
        return float(np.interp(t, spec.table_t, spec.table_a))
    raise ValueError(f"unknown damping kind {spec.kind!r}")


def validate_damping(spec):
    errors = []
    if spec.kind not in ("constant", "ramp", "tabulated"):
        return [f"unknown damping kind {spec.kind!r}"]
    if spec.kind == "ramp" and not 0.0 <= spec.epsilon <= 1.0:
        errors.append("ramp damping requires epsilon in [0, 1]")
    if spec.kind == "ramp" and spec.floor <= 0:
        errors.append("ramp damping requires a positive floor")
    if spec.kind == "tabulated" and spec.table_t is None:
        return ["tabulated damping requires tables"]
    a0, a1 = spec.lower_bound(), spec.upper_bound()
    if not (0 < a0 <= a1):
        errors.append("damping must satisfy 0 < lower bound <= upper bound")
        return errors
    probe = np.linspace(0.0, 50.0, 501)
    vals = np.array([eval_damping(spec, t) for t in probe])
    if (vals < a0 - 1e-12).any() or (vals > a1 + 1e-12).any():
        errors.append("sampled damping leaves its declared bounds")
    return errors


def damping_sup_difference(a, b):
    """Supremum over time of |a(t) - b(t)|, closed form where available."""
    if a.kind == "ramp" and b.kind == "ramp":
        # difference is monotone in r = t^2/(1+t^2) in [0, 1)
        d0 = a.floor - b.floor
        d1 = d0 + (b.epsilon - a.epsilon)
        return max(abs(d0), abs(d1))
    if a.kind == "constant" and b.kind == "constant":
        return abs(a.value - b.value)
    probe = np.concatenate([np.linspace(0.0, 200.0, 20001), [1e6]])
    va = np.array([eval_damping(a, t) for t in probe])
    vb = np.array([eval_damping(b, t) for t in probe])
    return float(np.abs(va - vb).max())


# ---------------------------------------------------------------------------
# forcing
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ForcingSpec:
    """External force g(x, t), translation bounded by construction.

    kind: zero | stationary | periodic | quasi_periodic.  periodic means
    profile * sin(omega t); quasi_periodic adds a second incommensurate
    component.  shift composes a time translation, g(t) = base(t + shift),
    which is how the symbol family is sampled.
    """

    kind: str = "zero"
    profile: SpectralField | None = None
    omega: float = 1.0
    profile2: SpectralField | None = None
    omega2: float = np.sqrt(2.0)
    shift: float = 0.0

    @classmethod
    def zero(cls):
        return cls(kind="zero")

    @classmethod
    def stationary(cls, profile):
        return cls(kind="stationary", profile=profile)

    @classmethod
    def periodic(cls, profile, omega):
        return cls(kind="periodic", profile=profile, omega=float(omega))

    @classmethod
    def quasi_periodic(cls, profile, omega, profile2, omega2):
        return cls(kind="quasi_periodic", profile=profile, omega=float(omega),
                   profile2=profile2, omega2=float(omega2))

    def shifted(self, tau):
        """Time-translated copy; samples the symbol family."""
        return replace(self, shift=self.shift + float(tau))


def forcing_coeffs(spec, t, domain):
    """Coefficient array of g(t); None for identically zero forcing."""
    if spec.kind == "zero":
        return None
    s = t + spec.shift
    if spec.kind == "stationary":
        return spec.profile.coeffs
    if spec.kind == "periodic":
        return spec.profile.coeffs * np.sin(spec.omega * s)
    if spec.kind == "quasi_periodic":
        return (spec.profile.coeffs * np.sin(spec.omega * s)
                + spec.profile2.coeffs * np.sin(spec.omega2 * s))
    raise ValueError(f"unknown forcing kind {spec.kind!r}")


def forcing_norm_sq(spec, t, domain):
    """Squared L2 norm of g(t)."""
    c = forcing_coeffs(spec, t, domain)
    if c is None:
        return 0.0
    return _scale(domain) * float((c * c).sum())


def _periodic_window_sup(norm_sq, omega):
    # sup over t of the unit-window integral of norm_sq * sin(omega s)^2
    if omega == 0.0:
        return 0.0
    return norm_sq * (0.5 + abs(np.sin(omega)) / (2.0 * omega))


def lb_norm_sq(spec, domain):
    """Translation-bounded squared norm: sup_t of the unit-window mass.

    Closed form for zero, stationary and periodic forcing; for the
    quasi-periodic kind a rigorous Cauchy-Schwarz upper bound is returned
    so that every envelope built from it remains valid.  Time shifts do
    not change the value.
    """
    if spec.kind == "zero":
        return 0.0
    s = _scale(domain)
    if spec.kind == "stationary":
        return s * float((spec.profile.coeffs**2).sum())
    if spec.kind == "periodic":
        return _periodic_window_sup(s * float((spec.profile.coeffs**2).sum()), spec.omega)
    if spec.kind == "quasi_periodic":
        s1 = _periodic_window_sup(s * float((spec.profile.coeffs**2).sum()), spec.omega)
        s2 = _periodic_window_sup(s * float((spec.profile2.coeffs**2).sum()), spec.omega2)
        return (np.sqrt(s1) + np.sqrt(s2)) ** 2
    raise ValueError(f"unknown forcing kind {spec.kind!r}")


def translation_bounded_norm(spec, domain, probe_window, resolution=1e-3):
    """Numerically maximized unit-window mass of the force over a probe range.

    The sample spacing is adjusted so an integer number of cells spans one
    time unit, keeping every probed window exactly one unit wide.
    """
    ta, tb = probe_window
    if tb - ta < 1.0:
        raise ValueError("probe window must span at least one time unit")
    span = max(1, int(round(1.0 / resolution)))
    r = 1.0 / span
    m = int(np.floor((tb - ta) / r)) + 1
    ts = ta + r * np.arange(m)
    q = np.array([forcing_norm_sq(spec, t, domain) for t in ts])
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (q[1:] + q[:-1]) * r)])
    if span >= m:
        return float(cum[-1])
    windows = cum[span:] - cum[:-span]
    return float(windows.max())


def validate_forcing(spec, domain):
    errors = []
    if spec.kind not in ("zero", "stationary", "periodic", "quasi_periodic"):
        return [f"unknown forcing kind {spec.kind!r}"]
    if spec.kind != "zero" and spec.profile is None:
        errors.append("forcing requires a profile field")
    if spec.kind == "quasi_periodic" and spec.profile2 is None:
        errors.append("quasi-periodic forcing requires a second profile")
    for p in (spec.profile, spec.profile2):
        if p is not None and p.domain != domain:
            errors.append("forcing profile lives on a different domain")
    if not errors and not np.isfinite(lb_norm_sq(spec, domain)):
        errors.append("forcing is not translation bounded")
    return errors


# ---------------------------------------------------------------------------
# model and state
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Model:
    """Validated bundle of domain, kernel, damping, nonlinearity, forcing."""

    domain: DomainSpec
    kernel: MemoryKernel | None
    damping: DampingSpec
    nonlinearity: NonlinearitySpec
    forcing: ForcingSpec

    @property
    def has_memory(self):
        return self.kernel is not None

    def validate(self, kernel_tail_tolerance=None):
        """Collect every assumption violation; empty list means valid."""
        errors = []
        if self.kernel is not None:
            tol = kernel_tail_tolerance
            if tol is None:
                tol = 1e-8 * max(self.kernel.mass(), 1e-300)
            report = validate_kernel(self.kernel, tol)
            errors.extend(report.failures)
        errors.extend(validate_damping(self.damping))
        errors.extend(validate_nonlinearity(self.nonlinearity, self.domain.dim))
        errors.extend(validate_forcing(self.forcing, self.domain))
        return errors

    def validated(self, kernel_tail_tolerance=None):
        errors = self.validate(kernel_tail_tolerance)
        if errors:
            raise ConfigError(errors)
        return self

    def max_step(self):
        lam_max = self.domain.dim * self.domain.modes_per_axis**2
        return STEP_SAFETY / lam_max


@dataclass(frozen=True, eq=False)
class PlateState:
    """Phase-space point: displacement, velocity, history, and the clock."""

    t: float
    u: SpectralField
    v: SpectralField
    history: HistoryField | None = None

    def __post_init__(self):
        if self.u.domain != self.v.domain:
            raise ValueError("displacement and velocity live on different domains")
        if self.history is not None and self.history.domain != self.u.domain:
            raise ValueError("history lives on a different domain")


def initial_state(model, u=None, v=None, history=None, dt=None):
    """Assemble a state, creating the zero history on the dt lag grid."""
    dom = model.domain
    u = u if u is not None else SpectralField.zero(dom)
    v = v if v is not None else SpectralField.zero(dom)
    if model.has_memory:
        if history is None:
            if dt is None:
                raise ValueError("dt is needed to build the history lag grid")
            history = HistoryField.zeros(dom, model.kernel, dt)
    else:
        history = None
    return PlateState(0.0, u, v, history)


def nonlinearity_projection(model, u_coeffs):
    """Galerkin coefficients of f(u), de-aliased on the evaluation grid."""
    if model.nonlinearity.kind == "zero":
        return None
    grid = to_physical(SpectralField(model.domain, u_coeffs))
    f_vals, _ = eval_nonlinearity(model.nonlinearity, grid)
    return to_spectral(f_vals, model.domain).coeffs


def potential_integral(model, u):
    """Integral of F(u) over the box by de-aliased grid quadrature."""
    if model.nonlinearity.kind == "zero":
        return 0.0
    grid = to_physical(u)
    _, F_vals = eval_nonlinearity(model.nonlinearity, grid)
    return grid_quadrature(F_vals, model.domain)


def _acceleration(model, t, u_c, v_c, mem_c, lam, one_plus_lam):
    acc = -(eval_damping(model.damping, t)) * v_c - lam**2 * u_c - lam * v_c
    if mem_c is not None:
        acc = acc - mem_c
    fproj = nonlinearity_projection(model, u_c)
    if fproj is not None:
        acc = acc - fproj
    g = forcing_coeffs(model.forcing, t, model.domain)
    if g is not None:
        acc = acc + g
    return acc / one_plus_lam


def rhs(state, model):
    """Right-hand side (du, dv) of the first-order system at the state."""
    lam = model.domain.eigenvalues
    mem_c = memory_integral(state.history).coeffs if model.has_memory else None
    dv = _acceleration(model, state.t, state.u.coeffs, state.v.coeffs, mem_c,
                       lam, 1.0 + lam)
    return SpectralField(model.domain, state.v.coeffs.copy()), SpectralField(model.domain, dv)


def step(state, model, dt):
    """One Runge-Kutta step with the history frozen, then the history shift."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if dt > model.max_step() * (1 + 1e-12):
        raise ConfigError(
            f"dt={dt} exceeds the stability bound {model.max_step():.6g} "
            f"for {model.domain.dim}*N^2 stiffness"
        )
    if model.has_memory and abs(dt - state.history.ds) > 1e-12 * state.history.ds:
        raise ConfigError("dt must equal the history lag spacing")

    lam = model.domain.eigenvalues
    opl = 1.0 + lam
    mem_c = memory_integral(state.history).coeffs if model.has_memory else None

    t, u0, v0 = state.t, state.u.coeffs, state.v.coeffs

    # blowup surfaces as non-finite values below; silence the intermediate
    # overflow warnings
    with np.errstate(over="ignore", invalid="ignore"):
        k1u = v0
        k1v = _acceleration(model, t, u0, v0, mem_c, lam, opl)
        u_s = u0 + 0.5 * dt * k1u
        v_s = v0 + 0.5 * dt * k1v
        k2u = v_s
        k2v = _acceleration(model, t + 0.5 * dt, u_s, v_s, mem_c, lam, opl)
        u_s = u0 + 0.5 * dt * k2u
        v_s = v0 + 0.5 * dt * k2v
        k3u = v_s
        k3v = _acceleration(model, t + 0.5 * dt, u_s, v_s, mem_c, lam, opl)
        u_s = u0 + dt * k3u
        v_s = v0 + dt * k3v
        k4u = v_s
        k4v = _acceleration(model, t + dt, u_s, v_s, mem_c, lam, opl)

        u1 = u0 + dt / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        v1 = v0 + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)

    if not (np.isfinite(u1).all() and np.isfinite(v1).all()):
        raise DivergenceError(f"non-finite state after the step at t={t:.6g}", time=t)

    u_new = SpectralField(model.domain, u1)
    v_new = SpectralField(model.domain, v1)
    hist = None
    if model.has_memory:
        hist = history_advance(state.history, state.u, u_new, dt)
    return PlateState(t + dt, u_new, v_new, hist)


@dataclass(eq=False)
class Trajectory:
    """Recorded run: times and (u, v) coefficients at the record stride."""

    times: np.ndarray
    u_coeffs: np.ndarray
    v_coeffs: np.ndarray
    final_state: PlateState
    model: Model

    def __len__(self):
        return len(self.times)


def simulate(initial, model, t_end, dt, observers=(), record_every=1):
    """Run the integrator to t_end, notifying observers after every step.

    Observers are callables invoked as observer(step_index, state), with
    step_index 0 for the initial state.  Deterministic for a fixed
    configuration.  On divergence the partial trajectory is attached to
    the raised error.
    """
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    n_steps = int(round(t_end / dt)) if t_end > 0 else 0

    times = [initial.t]
    u_rec = [initial.u.coeffs]
    v_rec = [initial.v.coeffs]
    state = initial
    for obs in observers:
        obs(0, state)

    for i in range(1, n_steps + 1):
        try:
            state = step(state, model, dt)
        except DivergenceError as exc:
            partial = Trajectory(np.asarray(times), np.asarray(u_rec),
                                 np.asarray(v_rec), state, model)
            raise DivergenceError(
                f"divergence at step {i} (t={state.t:.6g}): {exc}",
                step=i, time=state.t, partial=partial,
            ) from None
        for obs in observers:
            obs(i, state)
        if i % record_every == 0 or i == n_steps:
            times.append(state.t)
            u_rec.append(state.u.coeffs)
            v_rec.append(state.v.coeffs)

    return Trajectory(np.asarray(times), np.asarray(u_rec), np.asarray(v_rec),
                      state, model)
