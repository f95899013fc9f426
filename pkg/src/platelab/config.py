"""Configuration file parsing and model assembly.

Grammar (documented in docs/config.md): `[section]` headers, `key = value`
lines, `#` comments, blank lines.  Lists are comma separated.  Unknown
sections or keys are rejected, and validation collects every problem in
one pass instead of stopping at the first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    DampingSpec,
    ForcingSpec,
    Model,
    NonlinearitySpec,
    initial_state,
)
from .errors import ConfigError
from .memory import MemoryKernel, load_history
from .spectral import DomainSpec, SpectralField, _scale


# schema: section -> key -> (type tag, default)
_SCHEMA = {
    "domain": {
        "dim": ("int", 1),
        "modes_per_axis": ("int", 8),
        "grid_points_per_axis": ("int", None),  # default 2 * modes_per_axis
    },
    "kernel": {
        "kind": ("str", "exponential"),
        "amplitude": ("float", 1.0),
        "decay_rate": ("float", 1.0),
        "tail_fraction": ("float", 1e-8),
        "smax": ("float", None),
    },
    "damping": {
        "kind": ("str", "constant"),
        "value": ("float", 1.0),
        "epsilon": ("float", 0.0),
        "floor": ("float", 0.5),
        "times": ("floatlist", None),
        "values": ("floatlist", None),
    },
    "nonlinearity": {
        "kind": ("str", "cubic"),
        "exponent": ("float", 2.0),
        "derivative_bound": ("float", None),
        "potential_drop": ("float", 0.0),
    },
    "forcing": {
        "kind": ("str", "zero"),
        "mode": ("intlist", None),
        "amplitude": ("float", 1.0),
        "omega": ("float", 1.0),
        "mode2": ("intlist", None),
        "amplitude2": ("float", 0.0),
        "omega2": ("float", math.sqrt(2.0)),
        "shift": ("float", 0.0),
    },
    "integrator": {
        "dt": ("float", 1e-3),
        "t_end": ("float", 1.0),
        "record_every": ("int", 1),
    },
    "initial": {
        "kind": ("str", "single_mode"),
        "mode": ("intlist", None),
        "amplitude": ("float", 1.0),
        "velocity_amplitude": ("float", 0.0),
        "band": ("int", 0),
        "target_norm": ("float", 1.0),
        "seed": ("int", 1234),
        "path": ("str", None),
        "history_path": ("str", None),
    },
    "experiment": {
        "output_dir": ("str", "out"),
        "eps_energy": ("str", "auto"),
        "identity_tol": ("float", 5e-3),
        "dissipation_tol": ("float", 1e-4),
        "collapse_tol": ("float", 1e-4),
        "sweep_epsilons": ("floatlist", [0.4, 0.2, 0.1, 0.05, 0.0]),
        "cloud_size": ("int", 64),
        "t_transient": ("float", 30.0),
        "t_sample": ("float", 6.4),
        "n_shifts": ("int", 1),
        "cont_dep_t_end": ("float", 5.0),
        "cont_dep_epsilons": ("floatlist", [0.4, 0.2, 0.1, 0.05]),
        "semidistance_tol": ("float", 1e-2),
        "monotonicity_slack": ("float", 1.25),
        "cloud_seed": ("int", 7),
        "save_clouds": ("int", 1),
    },
}


def _parse_lines(text):
    """Split raw text into {section: {key: (value, lineno)}} plus errors."""
    sections = {}
    errors = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                errors.append(f"line {lineno}: malformed section header {line!r}")
                current = None
                continue
            current = line[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        if current is None:
            errors.append(f"line {lineno}: key outside any [section]")
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.split("#", 1)[0].strip()
        if key in sections[current]:
            errors.append(f"line {lineno}: duplicate key {current}.{key}")
            continue
        sections[current][key] = (value, lineno)
    return sections, errors


def _convert(tag, raw):
    if tag == "int":
        return int(raw)
    if tag == "float":
        return float(raw)
    if tag == "str":
        return raw
    if tag == "floatlist":
        return [float(x) for x in raw.split(",") if x.strip() != ""]
    if tag == "intlist":
        return [int(x) for x in raw.split(",") if x.strip() != ""]
    raise AssertionError(tag)


@dataclass
class ExperimentConfig:
    """Fully validated configuration: the model plus run and experiment
    parameters."""

    model: Model
    dt: float
    t_end: float
    record_every: int
    eps_energy: float | None  # None means the admissible maximum
    initial: dict
    experiment: dict
    raw: dict = field(default_factory=dict)


def _mode_tuple(dom, modes, errors, what):
    if modes is None:
        modes = [1] * dom.dim
    if len(modes) != dom.dim:
        errors.append(f"{what}: mode index needs {dom.dim} entries, got {modes}")
        return None
    if not all(1 <= k <= dom.modes_per_axis for k in modes):
        errors.append(f"{what}: mode index {modes} out of range 1..{dom.modes_per_axis}")
        return None
    return tuple(modes)


def _profile_field(dom, modes, amplitude):
    """A single-mode profile normalized so its plain L2 norm is amplitude."""
    c = amplitude / math.sqrt(_scale(dom))
    return SpectralField.single_mode(dom, modes, c)


def build_config(values, overrides=None):
    """Assemble and validate an ExperimentConfig from raw (value, line) maps."""
    errors = []

    # unknown sections / keys
    for sec in values:
        if sec not in _SCHEMA:
            errors.append(f"unknown section [{sec}]")
    for sec, keys in values.items():
        if sec not in _SCHEMA:
            continue
        for key, (_, lineno) in keys.items():
            if key not in _SCHEMA[sec]:
                errors.append(f"line {lineno}: unknown key {sec}.{key}")

    # typed view with defaults
    cfg = {}
    for sec, schema in _SCHEMA.items():
        cfg[sec] = {}
        for key, (tag, default) in schema.items():
            if sec in values and key in values[sec]:
                raw, lineno = values[sec][key]
                try:
                    cfg[sec][key] = _convert(tag, raw)
                except ValueError:
                    errors.append(
                        f"line {lineno}: {sec}.{key} expects {tag}, got {raw!r}"
                    )
                    cfg[sec][key] = default
            else:
                cfg[sec][key] = default

    if overrides:
        for dotted, raw in overrides:
            if "." not in dotted:
                errors.append(f"override {dotted!r} must look like section.key")
                continue
            sec, key = dotted.split(".", 1)
            if sec not in _SCHEMA or key not in _SCHEMA[sec]:
                errors.append(f"override names unknown key {dotted}")
                continue
            try:
                cfg[sec][key] = _convert(_SCHEMA[sec][key][0], raw)
            except ValueError:
                errors.append(f"override {dotted}: expects {_SCHEMA[sec][key][0]}, got {raw!r}")

    # domain
    d = cfg["domain"]
    if d["grid_points_per_axis"] is None:
        d["grid_points_per_axis"] = 2 * d["modes_per_axis"]
    try:
        dom = DomainSpec(d["dim"], d["modes_per_axis"], d["grid_points_per_axis"])
    except ValueError as exc:
        errors.append(f"domain: {exc}")
        dom = DomainSpec(1, 4, 8)

    # kernel
    k = cfg["kernel"]
    kernel = None
    if k["kind"] == "exponential":
        if k["decay_rate"] <= 0 or k["amplitude"] <= 0:
            errors.append(
                "kernel: decay condition requires positive amplitude and decay_rate"
            )
        else:
            smax = k["smax"]
            if smax is None:
                kernel = MemoryKernel.for_tail_fraction(
                    k["amplitude"], k["decay_rate"], k["tail_fraction"])
            else:
                kernel = MemoryKernel(k["amplitude"], k["decay_rate"], smax)
    elif k["kind"] != "none":
        errors.append(f"kernel: unknown kind {k['kind']!r}")

    # damping
    a = cfg["damping"]
    damping = DampingSpec.constant(1.0)
    try:
        if a["kind"] == "constant":
            damping = DampingSpec.constant(a["value"])
        elif a["kind"] == "ramp":
            damping = DampingSpec.ramp(a["epsilon"], a["floor"])
        elif a["kind"] == "tabulated":
            if a["times"] is None or a["values"] is None:
                errors.append("damping: tabulated kind needs times and values")
            else:
                damping = DampingSpec.tabulated(a["times"], a["values"])
        else:
            errors.append(f"damping: unknown kind {a['kind']!r}")
    except ValueError as exc:
        errors.append(f"damping: {exc}")

    # nonlinearity
    n = cfg["nonlinearity"]
    nonlin = NonlinearitySpec.cubic()
    if n["kind"] == "zero":
        nonlin = NonlinearitySpec.zero()
    elif n["kind"] == "cubic":
        nonlin = NonlinearitySpec.cubic()
    elif n["kind"] == "odd_power":
        if n["exponent"] <= 0:
            errors.append("nonlinearity: growth exponent must be positive")
        else:
            nonlin = NonlinearitySpec.odd_power(n["exponent"])
    else:
        errors.append(f"nonlinearity: unknown kind {n['kind']!r}")
    if n["derivative_bound"] is not None:
        nonlin = NonlinearitySpec(
            kind=nonlin.kind, growth_exponent=nonlin.growth_exponent,
            derivative_bound=n["derivative_bound"],
            potential_drop=n["potential_drop"])
    elif n["potential_drop"]:
        nonlin = NonlinearitySpec(
            kind=nonlin.kind, growth_exponent=nonlin.growth_exponent,
            derivative_bound=nonlin.derivative_bound,
            potential_drop=n["potential_drop"])

    # forcing
    f = cfg["forcing"]
    forcing = ForcingSpec.zero()
    if f["kind"] != "zero":
        modes = _mode_tuple(dom, f["mode"], errors, "forcing")
        if modes is not None:
            h = _profile_field(dom, modes, f["amplitude"])
            if f["kind"] == "stationary":
                forcing = ForcingSpec.stationary(h)
            elif f["kind"] == "periodic":
                forcing = ForcingSpec.periodic(h, f["omega"])
            elif f["kind"] == "quasi_periodic":
                modes2 = _mode_tuple(dom, f["mode2"], errors, "forcing")
                if modes2 is not None:
                    h2 = _profile_field(dom, modes2, f["amplitude2"])
                    forcing = ForcingSpec.quasi_periodic(h, f["omega"], h2, f["omega2"])
            else:
                errors.append(f"forcing: unknown kind {f['kind']!r}")
        if f["shift"]:
            forcing = forcing.shifted(f["shift"])

    model = Model(dom, kernel, damping, nonlin, forcing)
    errors.extend(model.validate())

    # integrator
    it = cfg["integrator"]
    if it["dt"] <= 0:
        errors.append("integrator: dt must be positive")
    elif it["dt"] > model.max_step():
        errors.append(
            f"integrator: dt={it['dt']} exceeds the stability bound "
            f"{model.max_step():.6g} for this domain"
        )
    if it["t_end"] < 0:
        errors.append("integrator: t_end must be nonnegative")
    if it["record_every"] < 1:
        errors.append("integrator: record_every must be >= 1")

    # initial data
    ini = dict(cfg["initial"])
    if ini["kind"] not in ("zero", "single_mode", "random_band", "file"):
        errors.append(f"initial: unknown kind {ini['kind']!r}")
    if ini["kind"] == "single_mode":
        ini["mode"] = _mode_tuple(dom, ini["mode"], errors, "initial")
    if ini["kind"] == "file" and not ini["path"]:
        errors.append("initial: file kind needs a path")

    # experiment
    ex = dict(cfg["experiment"])
    eps_energy = None
    if ex["eps_energy"] != "auto":
        try:
            eps_energy = float(ex["eps_energy"])
        except ValueError:
            errors.append("experiment: eps_energy must be 'auto' or a number")
    sweep_eps = ex["sweep_epsilons"]
    if 0.0 not in sweep_eps:
        errors.append("experiment: sweep_epsilons must contain the reference 0")

    if errors:
        raise ConfigError(errors)

    return ExperimentConfig(
        model=model,
        dt=it["dt"],
        t_end=it["t_end"],
        record_every=it["record_every"],
        eps_energy=eps_energy,
        initial=ini,
        experiment=ex,
        raw=cfg,
    )


def parse_config(path, overrides=None):
    """Parse and validate a configuration file; raises ConfigError with the
    full list of problems found."""
    with open(path) as fh:
        text = fh.read()
    values, syntax_errors = _parse_lines(text)
    if syntax_errors:
        raise ConfigError(syntax_errors)
    return build_config(values, overrides)


def parse_config_text(text, overrides=None):
    values, syntax_errors = _parse_lines(text)
    if syntax_errors:
        raise ConfigError(syntax_errors)
    return build_config(values, overrides)


# ---------------------------------------------------------------------------
# initial data builders
# ---------------------------------------------------------------------------

def save_state(state, path):
    """Write (u, v) coefficients, one flat-index row per mode."""
    with open(path, "w", newline="\n") as fh:
        fh.write("# columns: u v\n")
        for cu, cv in zip(state.u.coeffs.reshape(-1), state.v.coeffs.reshape(-1)):
            fh.write(f"{cu:.17g} {cv:.17g}\n")


def load_state_coeffs(path, domain):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([float(x) for x in line.split()])
    table = np.asarray(rows)
    shape = domain.mode_shape
    if table.shape[0] != int(np.prod(shape)):
        raise ConfigError(
            f"state file {path} holds {table.shape[0]} modes, domain needs {int(np.prod(shape))}"
        )
    u = SpectralField(domain, table[:, 0].reshape(shape))
    v = SpectralField(domain, table[:, 1].reshape(shape))
    return u, v


def build_initial_state(cfg):
    """Construct the configured initial state on the dt lag grid."""
    model, dom = cfg.model, cfg.model.domain
    ini = cfg.initial
    kind = ini["kind"]
    if kind == "zero":
        u = SpectralField.zero(dom)
        v = SpectralField.zero(dom)
    elif kind == "single_mode":
        u = SpectralField.single_mode(dom, ini["mode"], ini["amplitude"])
        v = SpectralField.single_mode(dom, ini["mode"], ini["velocity_amplitude"])
    elif kind == "random_band":
        u, v = random_band_fields(dom, ini["seed"], ini["band"] or dom.modes_per_axis,
                                  ini["target_norm"])
    elif kind == "file":
        u, v = load_state_coeffs(ini["path"], dom)
    else:
        raise ConfigError(f"initial: unknown kind {kind!r}")

    history = None
    if model.has_memory and ini.get("history_path"):
        history = load_history(ini["history_path"], dom, model.kernel)
    return initial_state(model, u=u, v=v, history=history, dt=cfg.dt)


def random_band_fields(domain, seed, band, target_norm):
    """Random band-limited (u, v) scaled to the requested phase norm
    (memory term excluded: fresh histories start at zero)."""
    band = min(band, domain.modes_per_axis)
    rng = np.random.default_rng(seed)
    cu = np.zeros(domain.mode_shape)
    cv = np.zeros(domain.mode_shape)
    sl = tuple(slice(0, band) for _ in range(domain.dim))
    cu[sl] = rng.standard_normal((band,) * domain.dim)
    cv[sl] = rng.standard_normal((band,) * domain.dim)
    lam = domain.eigenvalues
    s = _scale(domain)
    norm_sq = s * float((lam**2 * cu**2).sum() + (lam * cv**2).sum())
    if norm_sq > 0 and target_norm > 0:
        factor = target_norm / math.sqrt(norm_sq)
        cu *= factor
        cv *= factor
    return SpectralField(domain, cu), SpectralField(domain, cv)
