"""Fading-memory subsystem: kernel, history variable, and weighted norms.

The history variable at lag s is the relative displacement
``eta(s) = u(t) - u(t - s)``.  It satisfies the transport equation
``eta_t = -eta_s + u_t`` exactly, so on a uniform lag grid with spacing
equal to the time step the update is an index shift plus the new
displacement jump; no interpolation error enters the transport.

All lag integrals use the trapezoid rule on the nodes {0, s_1, .., s_J}
with the anchor value eta(0) = 0, which holds identically for physical
histories.  The kernel family is restricted to single exponentials
``mu(s) = c exp(-delta s)``: they satisfy the decay condition
mu' + delta mu <= 0 with equality, and mass and tails are closed form.
Prony sums are a possible extension point, not implemented.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .errors import ConfigError
from .spectral import DomainSpec, SpectralField, _scale


@dataclass(frozen=True)
class MemoryKernel:
    """Exponential memory kernel c*exp(-delta*s), truncated at smax."""

    amplitude: float          # value at lag zero
    decay_rate: float
    truncation_smax: float

    def value(self, s):
        return self.amplitude * np.exp(-self.decay_rate * np.asarray(s, dtype=float))

    def derivative(self, s):
        return -self.decay_rate * self.value(s)

    def mass(self):
        """Total mass of the untruncated kernel."""
        return self.amplitude / self.decay_rate

    def tail_mass(self):
        """Mass discarded beyond the truncation lag."""
        return (
            self.amplitude
            * np.exp(-self.decay_rate * self.truncation_smax)
            / self.decay_rate
        )

    @classmethod
    def for_tail_fraction(cls, amplitude, decay_rate, tail_fraction=1e-8):
        """Choose smax so the discarded tail is tail_fraction of the mass."""
        if decay_rate <= 0 or tail_fraction <= 0:
            raise ValueError("decay_rate and tail_fraction must be positive")
        smax = np.log(1.0 / tail_fraction) / decay_rate
        return cls(amplitude, decay_rate, smax)


def kernel_mass(kernel):
    """Total kernel mass; the leading stiffness absorbs 1 + mass."""
    return kernel.amplitude / kernel.decay_rate


def stiffness_normalization(kernel):
    """The factor 1 + mass absorbed into the leading fourth-order term."""
    return 1.0 + kernel_mass(kernel)


@dataclass(frozen=True)
class KernelValidation:
    passed: bool
    checks: dict
    failures: list
    mass: float
    tail_mass: float


def validate_kernel(kernel, tail_tolerance):
    """Check every kernel assumption; never raises, reports all failures.

    tail_tolerance is an absolute bound on the discarded tail mass.
    """
    checks = {}
    failures = []
    c, d, smax = kernel.amplitude, kernel.decay_rate, kernel.truncation_smax

    checks["positive_at_zero"] = c > 0 and np.isfinite(c)
    if not checks["positive_at_zero"]:
        failures.append("kernel value at lag zero must be positive and finite")

    checks["finite_mass"] = d > 0 and np.isfinite(c / d) if d > 0 else False
    if not checks["finite_mass"]:
        failures.append("kernel mass must be finite: decay_rate must be positive")

    # nonnegative and nonincreasing on the lag grid
    s_probe = np.linspace(0.0, max(smax, 1.0), 257)
    vals = kernel.value(s_probe)
    derivs = kernel.derivative(s_probe)
    checks["nonnegative"] = bool((vals >= 0).all())
    if not checks["nonnegative"]:
        failures.append("kernel must be nonnegative")
    checks["nonincreasing"] = bool((derivs <= 1e-12 * max(abs(c), 1.0)).all())
    if not checks["nonincreasing"]:
        failures.append("kernel must be nonincreasing")

    # exponential decay condition mu' + delta*mu <= 0 (equality here)
    resid = derivs + d * vals
    checks["exponential_decay"] = d > 0 and bool(
        (resid <= 1e-12 * max(abs(c), 1.0)).all()
    )
    if not checks["exponential_decay"]:
        failures.append(
            "kernel decay condition violated: derivative + decay_rate*value must be <= 0"
        )

    mass = c / d if d > 0 else np.inf
    tail = kernel.tail_mass() if d > 0 else np.inf
    checks["tail_within_tolerance"] = bool(tail <= tail_tolerance)
    if not checks["tail_within_tolerance"]:
        failures.append(
            f"truncated tail mass {tail:.3g} exceeds tolerance {tail_tolerance:.3g}"
        )

    return KernelValidation(
        passed=not failures,
        checks=checks,
        failures=failures,
        mass=float(mass),
        tail_mass=float(tail),
    )


@lru_cache(maxsize=64)
def _lag_cache(kernel, ds, n_lags):
    """Precomputed lag grid, trapezoid weights, and kernel-weighted rows."""
    sgrid = ds * np.arange(1, n_lags + 1)
    weights = np.full(n_lags, ds)
    weights[-1] = ds / 2.0  # trapezoid end; node 0 carries the zero anchor
    wmu = weights * kernel.value(sgrid)
    wmup = weights * kernel.derivative(sgrid)
    for arr in (sgrid, weights, wmu, wmup):
        arr.flags.writeable = False
    return sgrid, weights, wmu, wmup


@dataclass(frozen=True, eq=False)
class HistoryField:
    """History variable sampled on the uniform lag grid s_j = j*ds, j=1..J.

    values has shape (J,) + mode_shape.  The implicit node at s = 0 holds
    the zero field and anchors every quadrature.
    """

    domain: DomainSpec
    kernel: MemoryKernel
    ds: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != self.domain.dim + 1 or v.shape[1:] != self.domain.mode_shape:
            raise ValueError(
                f"history values shape {v.shape} does not match domain {self.domain.mode_shape}"
            )
        if self.ds <= 0:
            raise ValueError("lag spacing must be positive")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_cache", _lag_cache(self.kernel, self.ds, v.shape[0]))

    @property
    def lags(self):
        return self._cache[0]

    @property
    def quad_weights(self):
        return self._cache[1]

    @property
    def kernel_weights(self):
        """Trapezoid weights times kernel values on the lag grid."""
        return self._cache[2]

    @property
    def kernel_derivative_weights(self):
        return self._cache[3]

    @property
    def n_lags(self):
        return self.values.shape[0]

    @classmethod
    def zeros(cls, domain, kernel, ds):
        """Zero history: flat prehistory, the default initial condition."""
        j = int(np.ceil(kernel.truncation_smax / ds - 1e-12))
        j = max(j, 1)
        return cls(domain, kernel, ds, np.zeros((j,) + domain.mode_shape))

    def field_at(self, j):
        """The stored field at lag index j (0-based over s_1..s_J)."""
        return SpectralField(self.domain, self.values[j])

    def scaled(self, a):
        return replace(self, values=self.values * float(a))

    def diff(self, other):
        _check_compatible(self, other)
        return replace(self, values=self.values - other.values)


def _check_compatible(a, b):
    if a.domain != b.domain or a.kernel != b.kernel:
        raise ConfigError("histories use different domains or kernels")
    if a.values.shape != b.values.shape or abs(a.ds - b.ds) > 1e-14 * a.ds:
        raise ConfigError("histories use different lag grids")


def history_advance(history, u_old, u_new, dt):
    """Advance the history one step by the exact characteristic shift.

    Realizes eta_new(s_j) = eta_old(s_{j-1}) + (u_new - u_old) with the
    zero anchor at lag 0, which reproduces u(t+dt) - u(t+dt-s) exactly at
    the grid lags.  Requires dt equal to the lag spacing.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if abs(dt - history.ds) > 1e-12 * history.ds:
        raise ConfigError(
            f"time step {dt} does not match history lag spacing {history.ds}"
        )
    jump = u_new.coeffs - u_old.coeffs
    new_values = np.empty_like(history.values)
    np.add(history.values[:-1], jump, out=new_values[1:])
    new_values[0] = jump
    return replace(history, values=new_values)


def memory_integral(history):
    """Quadrature of the kernel-weighted bilaplacian of the history.

    Returns the field with coefficients lam_k^2 * sum_j w_j mu(s_j) eta_k(s_j);
    linear in the history.
    """
    flat = history.values.reshape(history.n_lags, -1)
    summed = history.kernel_weights @ flat
    lam2 = history.domain.eigenvalues**2
    return SpectralField(history.domain, summed.reshape(history.domain.mode_shape) * lam2)


def _per_lag_v2_sq(history):
    lam2 = (history.domain.eigenvalues**2).reshape(-1)
    flat = history.values.reshape(history.n_lags, -1)
    return _scale(history.domain) * ((flat * flat) @ lam2)


def memory_norm_sq(history):
    """The kernel-weighted squared norm, quadrature of mu(s)*||lap eta(s)||^2."""
    return float(history.kernel_weights @ _per_lag_v2_sq(history))


def memory_inner(a, b):
    """Kernel-weighted inner product of two histories in the second energy norm."""
    _check_compatible(a, b)
    lam2 = (a.domain.eigenvalues**2).reshape(-1)
    fa = a.values.reshape(a.n_lags, -1)
    fb = b.values.reshape(b.n_lags, -1)
    return _scale(a.domain) * float(a.kernel_weights @ ((fa * fb) @ lam2))


def memory_terms(history):
    """One-pass (norm_sq, transport_rate, decay_bound) for the monitors.

    transport_rate is half the quadrature of mu'(s)*||lap eta(s)||^2 and
    decay_bound is -(decay_rate/2) times norm_sq.
    """
    per = _per_lag_v2_sq(history)
    norm_sq = float(history.kernel_weights @ per)
    lhs = 0.5 * float(history.kernel_derivative_weights @ per)
    rhs = -0.5 * history.kernel.decay_rate * norm_sq
    return norm_sq, lhs, rhs


def memory_dissipation_bound(history):
    """Both sides of the memory dissipation estimate.

    lhs is half the quadrature of mu'(s)*||lap eta(s)||^2, the exact value
    of the transport term in the energy identity after integration by
    parts; rhs is -(decay_rate/2) times the weighted squared norm.  For
    the exponential family the two agree to roundoff.
    """
    _, lhs, rhs = memory_terms(history)
    return lhs, rhs


def save_history(history, path):
    """Write the history as a text table: lag, then one column per mode."""
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# ds={history.ds!r} n_lags={history.n_lags}\n")
        fh.write(
            f"# dim={history.domain.dim} modes_per_axis={history.domain.modes_per_axis}\n"
        )
        flat = history.values.reshape(history.n_lags, -1)
        for s, row in zip(history.lags, flat):
            cols = " ".join(format(x, ".17g") for x in row)
            fh.write(f"{s:.17g} {cols}\n")


def load_history(path, domain, kernel):
    """Read a history table written by save_history."""
    rows = []
    ds = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "ds=" in line:
                    ds = float(line.split("ds=")[1].split()[0])
                continue
            rows.append([float(x) for x in line.split()])
    table = np.asarray(rows)
    if ds is None:
        ds = table[0, 0]
    values = table[:, 1:].reshape((table.shape[0],) + domain.mode_shape)
    return HistoryField(domain, kernel, ds, values)
