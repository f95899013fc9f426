"""Attractor diagnostics: snapshot clouds, semidistances, damping sweeps.

The attractor section is approximated by sampling trajectories after a
transient long enough to enter the absorbing ball, per the equivalence of
the attractor with the omega-limit set of the absorbing ball.  Distances
between clouds use the exact phase metric, evaluated by packing every
snapshot into a weighted coefficient vector so Euclidean distance equals
the phase distance; the history block shares the quadrature of the
weighted memory norm, so clouds must share lag grids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist

from .dynamics import DampingSpec, damping_sup_difference, simulate, step
from .energy import absorbing_radius, phase_norm_sq
from .errors import ConfigError
from .memory import memory_norm_sq
from .spectral import DomainSpec, _scale


# ---------------------------------------------------------------------------
# pointwise diagnostics
# ---------------------------------------------------------------------------

def _history_diff_norm_sq(a, b):
    if (a is None) != (b is None):
        raise ConfigError("cannot compare states with and without memory")
    if a is None:
        return 0.0
    return memory_norm_sq(a.diff(b))


def phase_distance_sq(sa, sb):
    """Squared phase distance between two states on one discretization."""
    if sa.u.domain != sb.u.domain:
        raise ConfigError("states live on different domains")
    dom = sa.u.domain
    lam = dom.eigenvalues
    s = _scale(dom)
    du = sa.u.coeffs - sb.u.coeffs
    dv = sa.v.coeffs - sb.v.coeffs
    val = s * float((lam**2 * du**2).sum()) + s * float((lam * dv**2).sum())
    return val + _history_diff_norm_sq(sa.history, sb.history)


def difference_energy(sa, sb):
    """Difference energy: the phase distance squared plus the plain
    velocity-difference mass.  Symmetric, zero only for equal states."""
    if sa.u.domain != sb.u.domain:
        raise ConfigError("states live on different domains")
    s = _scale(sa.u.domain)
    dv = sa.v.coeffs - sb.v.coeffs
    return phase_distance_sq(sa, sb) + s * float((dv**2).sum())


# ---------------------------------------------------------------------------
# snapshot clouds
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class SnapshotCloud:
    """Finite sampling of a trajectory tail; a stand-in for the attractor
    section.  All points share one domain and, when memory is on, one lag
    grid."""

    states: list
    metadata: dict

    def __post_init__(self):
        if not self.states:
            raise ValueError("a snapshot cloud needs at least one point")
        dom = self.states[0].u.domain
        for st in self.states:
            if st.u.domain != dom:
                raise ConfigError("cloud points live on different domains")
            if (st.history is None) != (self.states[0].history is None):
                raise ConfigError("cloud mixes points with and without memory")
            if st.history is not None:
                h0 = self.states[0].history
                if st.history.values.shape != h0.values.shape or st.history.kernel != h0.kernel:
                    raise ConfigError("cloud points use different lag grids")

    def __len__(self):
        return len(self.states)

    def packed(self):
        """(n, D) array whose Euclidean metric is the phase metric."""
        dom = self.states[0].u.domain
        lam = dom.eigenvalues.reshape(-1)
        root_s = np.sqrt(_scale(dom))
        wu = root_s * lam
        wv = root_s * np.sqrt(lam)
        blocks = []
        h0 = self.states[0].history
        wh = None
        if h0 is not None:
            wmu = h0.kernel_weights
            wh = np.sqrt(wmu)[:, None] * (root_s * lam)[None, :]
        for st in self.states:
            parts = [wu * st.u.coeffs.reshape(-1), wv * st.v.coeffs.reshape(-1)]
            if wh is not None:
                parts.append((wh * st.history.values.reshape(len(wmu), -1)).reshape(-1))
            blocks.append(np.concatenate(parts))
        return np.asarray(blocks)


def hausdorff_semidistance(cloud_a, cloud_b):
    """Directed Hausdorff semidistance: sup over A of the distance to B.

    Exact brute force over the finite clouds; asymmetric in general.
    """
    if isinstance(cloud_a, SnapshotCloud):
        pa, pb = cloud_a.packed(), cloud_b.packed()
    else:
        pa, pb = np.asarray(cloud_a), np.asarray(cloud_b)
    if pa.size == 0 or pb.size == 0:
        raise ValueError("clouds must be nonempty")
    if pa.shape[1] != pb.shape[1]:
        raise ConfigError("clouds are packed with different layouts")
    d = cdist(pa, pb)
    return float(d.min(axis=1).max())


class _SnapshotGrabber:
    def __init__(self, wanted_steps):
        self.wanted = set(int(i) for i in wanted_steps)
        self.got = {}

    def __call__(self, i, state):
        if i in self.wanted:
            self.got[i] = state


def omega_limit_approx(model, initial_states, dt, t_transient, t_sample,
                       n_snapshots, shifts=(0.0,), collapse_tol=1e-4):
    """Sample the trajectory tails into a finite attractor approximation.

    Runs one trajectory per (initial state, forcing shift), discards
    [0, t_transient], and collects equally spaced snapshots across the
    window of length t_sample.  Before collection starts the phase norm
    must sit inside the absorbing ball for one full window; if not, the
    cloud is still returned with metadata["transient_warning"] set.
    """
    if n_snapshots < 1:
        raise ValueError("n_snapshots must be positive")
    combos = [(init, tau) for init in initial_states for tau in shifts]
    per_traj = int(np.ceil(n_snapshots / len(combos)))
    spacing = t_sample / per_traj
    radius = max(absorbing_radius(model), collapse_tol)

    states = []
    warning = False
    times_collected = []
    for init, tau in combos:
        m = model if tau == 0.0 else replace(model, forcing=model.forcing.shifted(tau))
        snap_steps = [int(round((t_transient + (i + 1) * spacing) / dt))
                      for i in range(per_traj)]
        check_lo = max(t_transient - t_sample, 0.0)
        check_steps = [int(round((check_lo + i * spacing) / dt))
                       for i in range(per_traj + 1)]
        grab = _SnapshotGrabber(snap_steps + check_steps)
        t_end = snap_steps[-1] * dt
        simulate(init, m, t_end, dt, observers=(grab,), record_every=max(1, snap_steps[-1]))
        for i in check_steps:
            if np.sqrt(phase_norm_sq(grab.got[i])) > radius:
                warning = True
        for i in snap_steps:
            if len(states) < n_snapshots:
                states.append(grab.got[i])
                times_collected.append(grab.got[i].t)

    meta = {
        "shifts": list(shifts),
        "t_transient": t_transient,
        "t_sample": t_sample,
        "snapshot_times": times_collected,
        "transient_warning": warning,
    }
    if model.damping.kind == "ramp":
        meta["epsilon"] = model.damping.epsilon
    return SnapshotCloud(states, meta)


# ---------------------------------------------------------------------------
# continuous dependence on the damping coefficient
# ---------------------------------------------------------------------------

@dataclass
class ContinuousDependenceReport:
    times: np.ndarray
    phase_diff_sq: np.ndarray
    diff_energy: np.ndarray
    sup_phase_diff_sq: float
    sup_diff_energy: float
    damping_gap: float
    fitted_K2: float
    fitted_KB: float
    bound_KB: float
    bound_K1: float
    envelope_ok: bool


def _same_content(a, b):
    """Field-by-field equality that tolerates numpy members and None."""
    if a is b:
        return True
    if a is None or b is None or type(a) is not type(b):
        return False
    import dataclasses
    if not dataclasses.is_dataclass(a):
        return a == b
    for f in dataclasses.fields(a):
        xa, xb = getattr(a, f.name), getattr(b, f.name)
        if isinstance(xa, np.ndarray) or isinstance(xb, np.ndarray):
            if xa is None or xb is None or not np.array_equal(xa, xb):
                return False
        elif not _same_content(xa, xb):
            return False
    return True


def _l1_amplitude(coeffs):
    # rigorous pointwise bound: |u(x)| <= sum |c_k|
    return float(np.abs(coeffs).sum())


def continuous_dependence_experiment(model_a, model_b, initial, t_end, dt,
                                     record_every=1):
    """Co-integrate two models differing only in damping; bound the gap.

    Records the phase-distance and difference-energy series, their
    suprema, the damping gap in the sup norm, a least-squares exponential
    fit of the difference energy, and the a priori growth-rate bound
    computed from the run (the local slope of the nonlinearity on the
    visited amplitudes plus the damping gap).
    """
    for name in ("domain", "kernel", "nonlinearity", "forcing"):
        if not _same_content(getattr(model_a, name), getattr(model_b, name)):
            raise ConfigError(f"models must share the same {name}")
    gap = damping_sup_difference(model_a.damping, model_b.damping)

    n = int(round(t_end / dt))
    sa, sb = initial, initial
    times, dsq, ew = [0.0], [0.0], [0.0]
    max_amp = max(_l1_amplitude(initial.u.coeffs), 1e-300)
    sup_ut_sq = _scale(model_a.domain) * float((initial.v.coeffs**2).sum())
    for i in range(1, n + 1):
        sa = step(sa, model_a, dt)
        sb = step(sb, model_b, dt)
        if i % record_every == 0 or i == n:
            times.append(sa.t)
            dsq.append(phase_distance_sq(sa, sb))
            ew.append(difference_energy(sa, sb))
            max_amp = max(max_amp, _l1_amplitude(sa.u.coeffs), _l1_amplitude(sb.u.coeffs))
            sup_ut_sq = max(sup_ut_sq, _scale(model_a.domain) * float((sa.v.coeffs**2).sum()))

    times = np.asarray(times)
    dsq = np.asarray(dsq)
    ew = np.asarray(ew)

    lam1 = float((model_a.domain.eigenvalues**2).min())
    nl = model_a.nonlinearity
    if nl.kind == "zero":
        lip = 0.0
    else:
        lip = nl.derivative_bound * (1.0 + max_amp**nl.growth_exponent)
    bound_kb = lip * max(1.0 / lam1, 1.0) + gap

    # fit after the algebraic launch (the difference rises from exactly
    # zero like t^2, which is not the exponential regime the bound covers;
    # horizons shorter than the damping ramp keep the fit in the launch)
    mask = (ew > 1e-300) & (times >= 0.25 * t_end)
    if gap > 0.0 and mask.sum() >= 2:
        slope, intercept = np.polyfit(times[mask], np.log(ew[mask]), 1)
        fitted_kb = float(slope)
        fitted_k2 = float(np.exp(intercept) / gap)
    else:
        fitted_kb = 0.0
        fitted_k2 = 0.0

    # a posteriori envelope with the computed constants, checked pointwise
    if gap > 0.0 and bound_kb > 0.0:
        envelope = sup_ut_sq / bound_kb * np.expm1(bound_kb * times) * gap
        envelope_ok = bool((ew <= envelope * (1 + 1e-9) + 1e-300).all())
    else:
        envelope_ok = bool((ew == 0.0).all())

    return ContinuousDependenceReport(
        times=times,
        phase_diff_sq=dsq,
        diff_energy=ew,
        sup_phase_diff_sq=float(dsq.max()),
        sup_diff_energy=float(ew.max()),
        damping_gap=gap,
        fitted_K2=fitted_k2,
        fitted_KB=fitted_kb,
        bound_KB=bound_kb,
        bound_K1=sup_ut_sq,
        envelope_ok=envelope_ok,
    )


# ---------------------------------------------------------------------------
# the vanishing-perturbation sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepReport:
    """Per-perturbation semidistances to the reference attractor cloud.

    ratios holds sup_t(phase-distance squared)/damping-gap per entry, the
    normalization of the continuous-dependence bound; fitted_K2 and
    fitted_KB are the largest per-run fits, a conservative envelope.
    """

    epsilons: list
    semidistances: list
    ratios: list
    fitted_K2: float
    fitted_KB: float
    passed: bool
    semidistance_tol: float
    monotonicity_slack: float
    noise_floor: float
    transient_warning: bool

    def to_json_dict(self):
        return {
            "epsilons": self.epsilons,
            "semidistances": self.semidistances,
            "ratios": self.ratios,
            "fitted_K2": self.fitted_K2,
            "fitted_KB": self.fitted_KB,
            "passed": self.passed,
            "semidistance_tol": self.semidistance_tol,
            "monotonicity_slack": self.monotonicity_slack,
            "noise_floor": self.noise_floor,
            "transient_warning": self.transient_warning,
        }


def damping_with_offset(base, eps):
    """The swept damping: ramp kind varies its perturbation parameter,
    constant kind is offset by eps."""
    if base.kind == "ramp":
        return DampingSpec.ramp(eps, base.floor)
    if base.kind == "constant":
        return DampingSpec.constant(base.value + eps)
    raise ConfigError("sweeps support ramp or constant damping")


def _sweep_one(args):
    (model, initials, dt, transient, window, n_snapshots, shifts, collapse_tol) = args
    return omega_limit_approx(model, initials, dt, transient, window,
                              n_snapshots, shifts=shifts, collapse_tol=collapse_tol)


def epsilon_sweep(base_model, eps_list, *, dt, initial_states, t_transient,
                  t_sample, n_snapshots, shifts=(0.0,), cont_dep_t_end=5.0,
                  cont_dep_initial=None, semidistance_tol=1e-2,
                  monotonicity_slack=1.25, noise_floor=1e-4, jobs=1):
    """Attractor clouds along a damping perturbation vanishing to zero.

    eps_list must contain 0 (the reference) and at least three positive
    values; it is processed in decreasing order.  Passing requires the
    semidistance at the smallest positive perturbation to sit below the
    tolerance and the sequence to be nonincreasing up to the slack factor
    plus an additive noise floor (collapsed clouds sit at noise level).
    """
    eps_sorted = sorted(set(float(e) for e in eps_list), reverse=True)
    if 0.0 not in eps_sorted:
        raise ConfigError("the sweep needs the reference entry 0 in its list")
    if len([e for e in eps_sorted if e > 0]) < 3:
        raise ConfigError("the sweep needs at least three positive perturbations")

    models = {e: replace(base_model, damping=damping_with_offset(base_model.damping, e))
              for e in eps_sorted}
    tasks = {e: (models[e], initial_states, dt, t_transient, t_sample,
                 n_snapshots, shifts, noise_floor) for e in eps_sorted}

    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            clouds = dict(zip(eps_sorted, pool.map(_sweep_one, [tasks[e] for e in eps_sorted])))
    else:
        clouds = {e: _sweep_one(tasks[e]) for e in eps_sorted}

    reference = clouds[0.0]
    semidistances = [hausdorff_semidistance(clouds[e], reference) for e in eps_sorted]

    ratios = []
    fitted_k2 = 0.0
    fitted_kb = 0.0
    if cont_dep_initial is None:
        cont_dep_initial = initial_states[0]
    for e in eps_sorted:
        if e == 0.0:
            ratios.append(0.0)
            continue
        rep = continuous_dependence_experiment(models[e], models[0.0],
                                               cont_dep_initial, cont_dep_t_end, dt)
        ratios.append(rep.sup_phase_diff_sq / rep.damping_gap)
        fitted_k2 = max(fitted_k2, rep.fitted_K2)
        fitted_kb = max(fitted_kb, rep.fitted_KB)

    positive = [(e, s) for e, s in zip(eps_sorted, semidistances) if e > 0]
    smallest_ok = positive[-1][1] <= semidistance_tol
    monotone = all(
        s_next <= monotonicity_slack * s_prev + noise_floor
        for (_, s_prev), (_, s_next) in zip(positive, positive[1:])
    )
    warning = any(clouds[e].metadata.get("transient_warning", False) for e in eps_sorted)

    report = SweepReport(
        epsilons=eps_sorted,
        semidistances=semidistances,
        ratios=ratios,
        fitted_K2=fitted_k2,
        fitted_KB=fitted_kb,
        passed=bool(smallest_ok and monotone),
        semidistance_tol=semidistance_tol,
        monotonicity_slack=monotonicity_slack,
        noise_floor=noise_floor,
        transient_warning=warning,
    )
    return report, clouds


# ---------------------------------------------------------------------------
# cloud files: (u, v) coefficients plus a scalar history digest
# ---------------------------------------------------------------------------

def save_cloud(cloud, path):
    """Write one row per snapshot: time, u and v coefficients, history digest.

    The digest is the weighted squared memory norm of the point's history;
    the file-level metric treats it through its square root, which matches
    the exact metric whenever histories coincide or have collapsed.
    """
    dom = cloud.states[0].u.domain
    n = int(np.prod(dom.mode_shape))
    meta = dict(cloud.metadata)
    meta.update({
        "dim": dom.dim,
        "modes_per_axis": dom.modes_per_axis,
        "grid_points_per_axis": dom.grid_points_per_axis,
    })
    header = ["t"]
    header += [f"u_{i}" for i in range(n)]
    header += [f"v_{i}" for i in range(n)]
    header += ["hist_musq"]
    with open(path, "w", newline="\n") as fh:
        fh.write("# cloud-format=1\n")
        fh.write("# meta=" + json.dumps(meta, sort_keys=True) + "\n")
        fh.write(",".join(header) + "\n")
        for st in cloud.states:
            mus = memory_norm_sq(st.history) if st.history is not None else 0.0
            row = [st.t, *st.u.coeffs.reshape(-1), *st.v.coeffs.reshape(-1), mus]
            fh.write(",".join(format(float(x), ".17g") for x in row) + "\n")


@dataclass(eq=False)
class FileCloud:
    """A cloud loaded from disk: packed reduced representation."""

    packed: np.ndarray
    metadata: dict


def load_cloud(path):
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith("# meta="):
                    meta = json.loads(line[len("# meta="):])
                continue
            if line.startswith("t,"):
                continue
            rows.append([float(x) for x in line.split(",")])
    if not rows:
        raise ValueError(f"cloud file {path} holds no snapshots")
    table = np.asarray(rows)
    dom = DomainSpec(meta["dim"], meta["modes_per_axis"], meta["grid_points_per_axis"])
    n = int(np.prod(dom.mode_shape))
    lam = dom.eigenvalues.reshape(-1)
    root_s = np.sqrt(_scale(dom))
    u = table[:, 1:1 + n]
    v = table[:, 1 + n:1 + 2 * n]
    musq = np.clip(table[:, 1 + 2 * n], 0.0, None)
    packed = np.concatenate(
        [u * (root_s * lam)[None, :], v * (root_s * np.sqrt(lam))[None, :],
         np.sqrt(musq)[:, None]], axis=1)
    return FileCloud(packed=packed, metadata=meta)


def file_cloud_semidistance(path_a, path_b):
    a, b = load_cloud(path_a), load_cloud(path_b)
    return hausdorff_semidistance(a.packed, b.packed)
