"""Renderers for the four figure kinds.

decay     energy.csv        measured E(t) under its analytic envelope
residual  energy.csv        dissipation residual trace with its gate
contdep   contdep_eps*.csv  squared phase difference under the growth bound
sweep     sweep.json        semidistance against the perturbation, log-log

The decay renderer compares the energy series against the envelope
reconstructed from the header constants before drawing anything and
refuses to produce a figure for a violating run.  Inputs are never
mutated; rendering twice from the same inputs yields identical bytes
(fixed figure geometry, stripped image metadata).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

FIGURE_KINDS = ("decay", "residual", "contdep", "sweep")


class SchemaError(ValueError):
    """Input file does not match the expected artifact schema."""


class EnvelopeViolation(RuntimeError):
    """The measured energy exceeds its declared envelope."""


@dataclass
class FigureSpec:
    kind: str
    inputs: list
    output: str
    dpi: int = 120
    logy: bool | None = None  # per-kind default when None

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}")
        if isinstance(self.inputs, (str, os.PathLike)):
            self.inputs = [self.inputs]
        if not self.inputs:
            raise SchemaError("figure needs at least one input file")


def read_table(path):
    """Parse a platelab CSV: header comments, column names, numeric rows."""
    meta = {}
    names = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    meta[key.strip()] = value.strip()
                continue
            if names is None:
                names = line.split(",")
                continue
            rows.append([float(x) for x in line.split(",")])
    if names is None or not rows:
        raise SchemaError(f"{path}: no data rows")
    table = np.asarray(rows)
    if table.shape[1] != len(names):
        raise SchemaError(f"{path}: row width does not match the header")
    return meta, {name: table[:, i] for i, name in enumerate(names)}


def _require(columns, name, path):
    if name not in columns:
        raise SchemaError(f"{path}: missing column {name!r}")
    return columns[name]


def _require_meta(meta, name, path):
    if name not in meta:
        raise SchemaError(f"{path}: missing header constant {name!r}")
    return float(meta[name])


def decay_series(path):
    """Measured energy and its envelope from the header constants."""
    meta, cols = read_table(path)
    t = _require(cols, "t", path)
    e = _require(cols, "E", path)
    init = _require_meta(meta, "envelope_init", path)
    rate = _require_meta(meta, "envelope_rate", path)
    floor = _require_meta(meta, "envelope_floor", path)
    envelope = init * np.exp(-rate * t) + floor
    return t, e, envelope


def check_under_envelope(t, e, envelope):
    slack = 1e-12 * (1.0 + abs(e[0]))
    bad = e > envelope + slack
    if bad.any():
        raise EnvelopeViolation(
            f"energy exceeds its envelope first at t={t[bad][0]:.6g}")


def _savefig(fig, spec):
    suffix = os.path.splitext(spec.output)[1].lower()
    if suffix == ".svg":
        metadata = {"Date": None}
    else:
        metadata = {"Software": None}
    fig.savefig(spec.output, dpi=spec.dpi, metadata=metadata)
    plt.close(fig)
    return spec.output


def _new_axes(title, xlabel, ylabel):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    return fig, ax


def _render_decay(spec):
    path = spec.inputs[0]
    t, e, envelope = decay_series(path)
    check_under_envelope(t, e, envelope)
    fig, ax = _new_axes("energy decay", "t", "E")
    logy = True if spec.logy is None else spec.logy
    plot = ax.semilogy if logy and (e > 0).any() else ax.plot
    pos = e > 0 if logy else np.ones_like(e, dtype=bool)
    plot(t[pos], e[pos], label="measured", color="tab:blue")
    plot(t, np.maximum(envelope, np.finfo(float).tiny), label="envelope",
         color="tab:red", linestyle="--")
    ax.legend()
    return _savefig(fig, spec)


def _render_residual(spec):
    path = spec.inputs[0]
    meta, cols = read_table(path)
    t = _require(cols, "t", path)
    resid = _require(cols, "dissipation_residual", path)
    e = _require(cols, "E", path)
    mask = np.isfinite(resid)
    if not mask.any():
        raise SchemaError(f"{path}: residual column holds no finite samples")
    fig, ax = _new_axes("dissipation residual", "t", "residual")
    ax.plot(t[mask], resid[mask], color="tab:blue", label="residual")
    if "dissipation_tol" in meta:
        tol = float(meta["dissipation_tol"])
        ax.plot(t[mask], tol * (1.0 + np.abs(e[mask])), color="tab:red",
                linestyle="--", label="gate")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.legend()
    return _savefig(fig, spec)


def _render_contdep(spec):
    fig, ax = _new_axes("damping-gap response", "t", "squared phase difference")
    drew_bound = False
    for path in spec.inputs:
        meta, cols = read_table(path)
        t = _require(cols, "t", path)
        diff = _require(cols, "phase_diff_sq", path)
        gap = _require_meta(meta, "damping_gap", path)
        pos = diff > 0
        if pos.any():
            ax.semilogy(t[pos], diff[pos], label=f"gap={gap:g}")
        if not drew_bound and gap > 0 and "bound_KB" in meta and "bound_K1" in meta:
            kb = float(meta["bound_KB"])
            k1 = float(meta["bound_K1"])
            if kb > 0:
                bound = k1 / kb * np.expm1(kb * t) * gap
                ax.semilogy(t[1:], bound[1:], color="black", linestyle=":",
                            label="growth bound")
                drew_bound = True
    ax.legend()
    return _savefig(fig, spec)


def _render_sweep(spec):
    path = spec.inputs[0]
    with open(path) as fh:
        payload = json.load(fh)
    for key in ("epsilons", "semidistances"):
        if key not in payload:
            raise SchemaError(f"{path}: missing field {key!r}")
    eps = np.asarray(payload["epsilons"], dtype=float)
    dist = np.asarray(payload["semidistances"], dtype=float)
    if eps.shape != dist.shape or eps.size == 0:
        raise SchemaError(f"{path}: epsilons and semidistances do not align")
    fig, ax = _new_axes("attractor semidistance", "perturbation", "semidistance")
    pos = (eps > 0) & (dist > 0)
    if pos.any():
        ax.loglog(eps[pos], dist[pos], marker="o", color="tab:blue")
    else:
        ax.plot(eps, dist, marker="o", color="tab:blue")
    if "semidistance_tol" in payload:
        ax.axhline(float(payload["semidistance_tol"]), color="tab:red",
                   linestyle="--", label="tolerance")
        ax.legend()
    return _savefig(fig, spec)


_RENDERERS = {
    "decay": _render_decay,
    "residual": _render_residual,
    "contdep": _render_contdep,
    "sweep": _render_sweep,
}


def render(spec):
    """Render one figure; returns the output path.

    Raises SchemaError on malformed inputs and EnvelopeViolation when the
    decay comparison fails; no file is written in either case.
    """
    return _RENDERERS[spec.kind](spec)
