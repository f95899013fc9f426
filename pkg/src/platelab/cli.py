"""Batch front end: experiment orchestration and CSV/JSON emission.

Subcommands: simulate, energy-audit, decay, cont-dep, sweep, dist.  All
experiment parameters live in the configuration file; flags only override
paths, parallelism and individual keys (--set section.key=value).

Exit codes: 0 on pass, 2 on an inequality or acceptance violation (or
divergence), 1 on configuration errors.  Every run writes a MANIFEST
listing the emitted files with content hashes; reruns with identical
configuration are byte identical (fixed seeds, 17-significant-digit float
formatting, LF line endings).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import attractor as att
from .config import build_initial_state, parse_config, random_band_fields
from .dynamics import simulate
from .energy import EnergyRecorder, constants_for, decay_envelope_check, sandwich_check
from .errors import ConfigError, DivergenceError


def _fmt(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


class OutputSet:
    """Collects emitted files and writes the MANIFEST with content hashes."""

    def __init__(self, outdir):
        self.outdir = outdir
        os.makedirs(outdir, exist_ok=True)
        self.names = []

    def path(self, name):
        self.names.append(name)
        return os.path.join(self.outdir, name)

    def write_text(self, name, text):
        with open(self.path(name), "w", newline="\n") as fh:
            fh.write(text)

    def finish(self, status="complete"):
        lines = [f"# status={status}"]
        for name in sorted(set(self.names)):
            with open(os.path.join(self.outdir, name), "rb") as fh:
                digest = hashlib.sha256(fh.read()).hexdigest()
            size = os.path.getsize(os.path.join(self.outdir, name))
            lines.append(f"sha256 {digest} {size} {name}")
        with open(os.path.join(self.outdir, "MANIFEST"), "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# writers
# ---------------------------------------------------------------------------

def _energy_csv(reports, constants, eps_energy, dissipation_tol):
    e0 = reports[0].E if reports else 0.0
    floor = (3.0 * constants.potential_floor
             + 3.0 * constants.forcing_gain / eps_energy * constants.forcing_lb_sq)
    head = [
        "# schema=energy-v1",
        f"# eps_energy={_fmt(eps_energy)}",
        f"# envelope_init={_fmt(3.0 * e0)}",
        f"# envelope_rate={_fmt(2.0 * eps_energy / 3.0)}",
        f"# envelope_floor={_fmt(floor)}",
        f"# a0={_fmt(constants.a0)}",
        f"# delta={_fmt(constants.delta)}",
        f"# dissipation_tol={_fmt(dissipation_tol)}",
        "t,E,Psi,E_eps,phase_norm_sq,dissipation_residual,decay_envelope",
    ]
    rows = []
    for r in reports:
        resid = r.dEdt_fd - r.dissipation_bound_rhs if np.isfinite(r.dEdt_fd) else float("nan")
        env = 3.0 * e0 * math.exp(-(2.0 * eps_energy / 3.0) * r.t) + floor
        rows.append(",".join(_fmt(x) for x in (
            r.t, r.E, r.Psi, r.E_eps, r.phase_norm_sq, resid, env)))
    return "\n".join(head + rows) + "\n"


def _trajectory_csv(traj):
    n = traj.u_coeffs.shape[1:]
    flat = int(np.prod(n))
    head = ["# schema=trajectory-v1",
            "t," + ",".join([f"u_{i}" for i in range(flat)]
                            + [f"v_{i}" for i in range(flat)])]
    rows = []
    for t, u, v in zip(traj.times, traj.u_coeffs, traj.v_coeffs):
        rows.append(",".join(
            [_fmt(t)] + [_fmt(x) for x in u.reshape(-1)] + [_fmt(x) for x in v.reshape(-1)]))
    return "\n".join(head + rows) + "\n"


def _contdep_csv(report):
    head = ["# schema=contdep-v1",
            f"# damping_gap={_fmt(report.damping_gap)}",
            f"# fitted_K2={_fmt(report.fitted_K2)}",
            f"# fitted_KB={_fmt(report.fitted_KB)}",
            f"# bound_KB={_fmt(report.bound_KB)}",
            f"# bound_K1={_fmt(report.bound_K1)}",
            "t,phase_diff_sq,diff_energy"]
    rows = [",".join(_fmt(x) for x in row)
            for row in zip(report.times, report.phase_diff_sq, report.diff_energy)]
    return "\n".join(head + rows) + "\n"


def _json_text(payload):
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# shared run helper
# ---------------------------------------------------------------------------

def _run_recorded(cfg):
    constants = constants_for(cfg.model)
    eps = cfg.eps_energy if cfg.eps_energy is not None else constants.eps_max
    if not 0 < eps <= constants.eps_max * (1 + 1e-12):
        raise ConfigError(
            [f"experiment: eps_energy={eps} outside the admissible range "
             f"(0, {constants.eps_max:.6g}]"])
    rec = EnergyRecorder(cfg.model, eps_energy=eps, stride=cfg.record_every,
                            constants=constants)
    init = build_initial_state(cfg)
    traj = simulate(init, cfg.model, cfg.t_end, cfg.dt, observers=(rec,),
                    record_every=cfg.record_every)
    rec.finalize()
    return traj, rec, constants, eps


def _audit_checks(rec, constants, eps, identity_tol, dissipation_tol):
    reports = rec.reports
    interior = [r for r in reports if np.isfinite(r.dEdt_fd)]
    ident = max((abs(r.dEdt_fd - r.dEdt_identity_rhs) / (1.0 + abs(r.E))
                 for r in interior), default=0.0)
    diss = max(((r.dEdt_fd - r.dissipation_bound_rhs) / (1.0 + abs(r.E))
                for r in interior), default=0.0)
    sandwich = sandwich_check(reports, constants)
    times = np.array([r.t for r in reports])
    energies = np.array([r.E for r in reports])
    env = decay_envelope_check(times, energies, None, constants=constants,
                                  eps_energy=eps)
    checks = {
        "energy_identity": {
            "passed": bool(ident <= identity_tol),
            "value": ident, "tolerance": identity_tol,
        },
        "dissipation_bound": {
            "passed": bool(diss <= dissipation_tol),
            "value": diss, "tolerance": dissipation_tol,
        },
        "two_sided_bound": {
            "passed": bool(sandwich <= 1e-10 * (1.0 + abs(energies[0]))),
            "value": sandwich, "tolerance": 1e-10 * (1.0 + abs(energies[0])),
        },
        "decay_envelope": {
            "passed": bool(env.ok),
            "value": env.first_violation_t,
            "tolerance": None,
        },
    }
    return checks, env


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg, out):
    try:
        traj, rec, constants, eps = _run_recorded(cfg)
    except DivergenceError as exc:
        if exc.partial is not None:
            out.write_text("trajectory.csv", _trajectory_csv(exc.partial))
        out.write_text("error.txt", str(exc) + "\n")
        out.finish(status="partial")
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out.write_text("trajectory.csv", _trajectory_csv(traj))
    out.write_text("energy.csv", _energy_csv(rec.reports, constants, eps,
                                             cfg.experiment["dissipation_tol"]))
    out.finish()
    return 0


def cmd_energy_audit(cfg, out):
    try:
        traj, rec, constants, eps = _run_recorded(cfg)
    except DivergenceError as exc:
        out.write_text("error.txt", str(exc) + "\n")
        out.finish(status="partial")
        print(f"error: {exc}", file=sys.stderr)
        return 2
    checks, env = _audit_checks(rec, constants, eps,
                                cfg.experiment["identity_tol"],
                                cfg.experiment["dissipation_tol"])
    out.write_text("energy.csv", _energy_csv(rec.reports, constants, eps,
                                             cfg.experiment["dissipation_tol"]))
    payload = {"checks": checks, "eps_energy": eps,
               "fitted_slope": env.fitted_slope}
    out.write_text("audit.json", _json_text(payload))
    out.finish()
    ok = all(c["passed"] for c in checks.values())
    for name, c in checks.items():
        print(f"{'PASS' if c['passed'] else 'FAIL'} {name} value={c['value']}")
    return 0 if ok else 2


def cmd_decay(cfg, out):
    try:
        traj, rec, constants, eps = _run_recorded(cfg)
    except DivergenceError as exc:
        out.write_text("error.txt", str(exc) + "\n")
        out.finish(status="partial")
        print(f"error: {exc}", file=sys.stderr)
        return 2
    reports = rec.reports
    times = np.array([r.t for r in reports])
    energies = np.array([r.E for r in reports])
    env = decay_envelope_check(times, energies, None, constants=constants,
                                  eps_energy=eps)
    slope_required = -2.0 * eps / 3.0 + 1e-3
    slope_ok = True
    if env.envelope_floor == 0.0 and env.fitted_slope is not None:
        slope_ok = env.fitted_slope <= slope_required
    payload = {
        "envelope_ok": env.ok,
        "first_violation_t": env.first_violation_t,
        "fitted_slope": env.fitted_slope,
        "slope_required": slope_required,
        "slope_ok": slope_ok,
        "envelope_init": env.envelope_init,
        "envelope_rate": env.envelope_rate,
        "envelope_floor": env.envelope_floor,
        "eps_energy": eps,
    }
    out.write_text("energy.csv", _energy_csv(reports, constants, eps,
                                             cfg.experiment["dissipation_tol"]))
    out.write_text("decay.json", _json_text(payload))
    out.finish()
    print(f"{'PASS' if env.ok else 'FAIL'} decay_envelope")
    print(f"{'PASS' if slope_ok else 'FAIL'} decay_slope fitted={env.fitted_slope}")
    return 0 if env.ok and slope_ok else 2


def cmd_cont_dep(cfg, out):
    eps_list = [e for e in cfg.experiment["cont_dep_epsilons"] if e > 0]
    if not eps_list:
        raise ConfigError(["experiment: cont_dep_epsilons needs positive entries"])
    eps_list = sorted(eps_list, reverse=True)
    base = cfg.model.damping
    model0 = cfg.model.__class__(cfg.model.domain, cfg.model.kernel,
                                 att.damping_with_offset(base, 0.0),
                                 cfg.model.nonlinearity, cfg.model.forcing)
    init = build_initial_state(cfg)
    t_end = cfg.experiment["cont_dep_t_end"]

    results = []
    for e in eps_list:
        model_e = cfg.model.__class__(cfg.model.domain, cfg.model.kernel,
                                      att.damping_with_offset(base, e),
                                      cfg.model.nonlinearity, cfg.model.forcing)
        rep = att.continuous_dependence_experiment(model_e, model0, init, t_end, cfg.dt)
        results.append((e, rep))
        out.write_text(f"contdep_eps{e:g}.csv", _contdep_csv(rep))

    first_power = [math.sqrt(rep.sup_phase_diff_sq) / rep.damping_gap
                   for _, rep in results]
    ratio_spread = max(first_power) / min(first_power) if min(first_power) > 0 else math.inf
    contractions = []
    for (e1, r1), (e2, r2) in zip(results, results[1:]):
        if abs(e2 - 0.5 * e1) <= 1e-12 * e1:
            contractions.append(
                math.sqrt(r2.sup_phase_diff_sq / r1.sup_phase_diff_sq))
    spread_ok = ratio_spread <= 2.0
    contraction_ok = all(0.4 <= c <= 0.6 for c in contractions)
    fit_ok = all(rep.fitted_KB <= rep.bound_KB for _, rep in results)
    env_ok = all(rep.envelope_ok for _, rep in results)

    payload = {
        "epsilons": [e for e, _ in results],
        "damping_gaps": [rep.damping_gap for _, rep in results],
        "sup_phase_diff_sq": [rep.sup_phase_diff_sq for _, rep in results],
        "ratios_sq": [rep.sup_phase_diff_sq / rep.damping_gap for _, rep in results],
        "ratios_first_power": first_power,
        "contractions": contractions,
        "fitted_K2": [rep.fitted_K2 for _, rep in results],
        "fitted_KB": [rep.fitted_KB for _, rep in results],
        "bound_KB": [rep.bound_KB for _, rep in results],
        "checks": {
            "ratio_spread_within_2": spread_ok,
            "contraction_in_band": contraction_ok,
            "fitted_growth_below_bound": fit_ok,
            "difference_envelope": env_ok,
        },
    }
    out.write_text("contdep.json", _json_text(payload))
    out.finish()
    for name, ok in payload["checks"].items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if spread_ok and contraction_ok and fit_ok and env_ok else 2


def _cloud_initials(cfg):
    init = build_initial_state(cfg)
    dom = cfg.model.domain
    u2, v2 = random_band_fields(dom, cfg.experiment["cloud_seed"],
                                dom.modes_per_axis, 1.0)
    from .dynamics import initial_state as mk
    second = mk(cfg.model, u=u2, v=v2, dt=cfg.dt)
    return [init, second]


def _symbol_shifts(cfg):
    n = max(1, cfg.experiment["n_shifts"])
    f = cfg.model.forcing
    if n == 1 or f.kind in ("zero", "stationary"):
        return (0.0,)
    period = 2.0 * math.pi / f.omega if f.omega else 1.0
    return tuple(period * i / n for i in range(n))


def cmd_sweep(cfg, out, jobs=1):
    ex = cfg.experiment
    report, clouds = att.epsilon_sweep(
        cfg.model, ex["sweep_epsilons"], dt=cfg.dt,
        initial_states=_cloud_initials(cfg),
        t_transient=ex["t_transient"], t_sample=ex["t_sample"],
        n_snapshots=ex["cloud_size"], shifts=_symbol_shifts(cfg),
        cont_dep_t_end=ex["cont_dep_t_end"],
        semidistance_tol=ex["semidistance_tol"],
        monotonicity_slack=ex["monotonicity_slack"],
        noise_floor=ex["collapse_tol"], jobs=jobs)
    out.write_text("sweep.json", _json_text(report.to_json_dict()))
    if ex["save_clouds"]:
        for e in report.epsilons:
            name = f"cloud_eps{e:g}.csv"
            att.save_cloud(clouds[e], out.path(name))
    out.finish()
    print(f"{'PASS' if report.passed else 'FAIL'} sweep "
          f"semidistances={['%.3g' % s for s in report.semidistances]}")
    return 0 if report.passed else 2


def cmd_dist(path_a, path_b):
    value = att.file_cloud_semidistance(path_a, path_b)
    print(_fmt(value))
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _parse_overrides(items):
    pairs = []
    for item in items:
        if "=" not in item:
            raise ConfigError([f"--set expects section.key=value, got {item!r}"])
        dotted, _, raw = item.partition("=")
        pairs.append((dotted.strip(), raw.strip()))
    return pairs


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="platelab",
        description="Viscoelastic plate laboratory: simulation and diagnostics")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "energy-audit", "decay", "cont-dep", "sweep"):
        sp = sub.add_parser(name)
        sp.add_argument("config")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--set", action="append", default=[], dest="overrides",
                        metavar="SECTION.KEY=VALUE")
        sp.add_argument("--jobs", type=int, default=1)
    dp = sub.add_parser("dist")
    dp.add_argument("cloud_a")
    dp.add_argument("cloud_b")

    args = parser.parse_args(argv)

    try:
        if args.command == "dist":
            return cmd_dist(args.cloud_a, args.cloud_b)
        cfg = parse_config(args.config, _parse_overrides(args.overrides))
        outdir = args.out if args.out else cfg.experiment["output_dir"]
        out = OutputSet(outdir)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "energy-audit":
            return cmd_energy_audit(cfg, out)
        if args.command == "decay":
            return cmd_decay(cfg, out)
        if args.command == "cont-dep":
            return cmd_cont_dep(cfg, out)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, jobs=args.jobs)
        raise AssertionError(args.command)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return 1
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
