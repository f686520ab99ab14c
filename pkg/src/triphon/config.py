"""Run configuration: a flat key-value format with explicit units.

The file format is deliberately plain: ``[section]`` headers and
``key = value`` lines, comments with ``#`` or ``;``.  Every dimensionful key
carries its unit in the key name (``omega_m_MHz``, ``C1_fF``), unknown keys
are rejected with line numbers, and an empty file resolves to the built-in
defaults (the simulation parameter set of the reference device: 10 MHz beam,
7 GHz transmons, 200 GHz coupler, 10 mT in-plane field at 0.495 flux bias).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from . import constants as const
from .circuit import (CircuitParams, ParameterError, cancellation_capacitance,
                      derive_static, ej_from_frequency, mass_from_xzpf)
from .hamiltonian import TermFlags

__all__ = ["ConfigError", "RunConfig", "parse_config", "default_config",
           "resolve_params", "config_to_dict"]


class ConfigError(ValueError):
    """Configuration file problem, with line/key diagnostics when available."""


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "yes", "on", "1"):
        return True
    if v in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _float_list(s: str):
    s = s.strip()
    return tuple(float(x) for x in s.split(",")) if s else ()


def _str_list(s: str):
    s = s.strip()
    return tuple(x.strip() for x in s.split(",") if x.strip()) if s else ()


# key registry: section -> key -> (parser, default, description)
_SCHEMA = {
    "circuit": {
        "omega_m_MHz": (float, 10.0, "mechanical frequency omega_m/2pi"),
        "X_zpf_fm": (float, 33.0, "zero-point motion (sets the beam mass)"),
        "m_pg": (float, None, "beam mass in pg; overrides X_zpf_fm when set"),
        "l_um": (float, 14.7, "suspended beam length"),
        "beta0": (float, 1.0, "mode-shape factor"),
        "B_mT": (float, 10.0, "in-plane magnetic field"),
        "phi_b": (float, 0.495, "flux bias in units of Phi0"),
        "EJsum_c_GHz": (float, 200.0, "coupler SQUID total Josephson energy"),
        "aJ": (float, 0.01, "SQUID junction asymmetry"),
        "C1_fF": (float, 52.34836438728848, "transmon 1 capacitance"),
        "C2_fF": (float, 52.34836438728848, "transmon 2 capacitance"),
        "Cc_fF": (float, 9.7, "coupling capacitance"),
        "cc_auto_cancel": (_bool, True, "solve Cc so the exchange coupling cancels"),
        "omega1_GHz": (float, 7.0, "qubit 1 target frequency (EJ1 inferred)"),
        "omega2_GHz": (float, 7.0, "qubit 2 target frequency (EJ2 inferred)"),
        "EJ1_GHz": (float, None, "explicit EJ1; overrides the omega1 target"),
        "EJ2_GHz": (float, None, "explicit EJ2; overrides the omega2 target"),
        "T_mK": (float, 10.0, "bath temperature"),
        "T1_us": (float, 30.0, "qubit relaxation time"),
        "T2_us": (float, 30.0, "qubit dephasing time"),
        "Qm": (float, 1e6, "mechanical quality factor"),
    },
    "solver": {
        "rtol": (float, 1e-8, "integrator relative tolerance"),
        "atol": (float, 1e-10, "integrator absolute tolerance"),
        "phonon_dim": (int, 15, "phonon levels"),
        "qubit_levels": (int, 3, "transmon levels"),
        "flags": (_str_list,
                  ("tripartite", "radiation_pressure", "exchange", "cross_kerr",
                   "correlated_hopping", "higher_order_phi4x"),
                  "enabled interaction terms"),
        "omega_ref_GHz": (float, None, "rotating-frame reference (default omega1)"),
        "excitation": (str, "ideal", "qubit excitation: ideal or gaussian"),
    },
    "protocol": {
        "cycles": (int, 100, "cooling cycles"),
        "t_cool_ns": (float, 200.0, "cooling segment duration"),
        "t_reset_ns": (float, 200.0, "reset segment duration"),
        "t_excite_ns": (float, 200.0, "gaussian excitation pulse duration"),
        "cool_phase2_cycles": (int, 0, "cycles switched to t_cool2 at the end"),
        "t_cool2_ns": (float, 500.0, "second-phase cooling segment duration"),
        "n_init": (float, None, "initial phonon occupation (default: thermal from T)"),
        "phonon_init": (str, "thermal", "phonon start: thermal or vacuum"),
        "phonon_n": (float, 0.05, "thermal occupation of the phonon start"),
        "stop_fraction": (float, None, "stop time in units of pi/g"),
        "times_ns": (_float_list, (), "segment durations for superpose"),
        "pattern": (str, "", "sideband pattern for superpose, e.g. +-+-"),
        "alpha": (float, 1.0, "initial |0_1 1_2> amplitude for superpose"),
        "target": (str, "", "plan target, e.g. 0:0.25,2:0.5,4:0.25"),
        "plan_mode": (str, "distribution", "plan mode: distribution or amplitudes"),
        "J_gate_MHz": (float, 20.0, "exchange-gate rate for amplitude plans"),
        "sweep_kind": (str, "stray_J", "robustness sweep: stray_J, detuning, coherence"),
        "sweep_values_MHz": (_float_list, (0.1, 1.0, 5.0), "stray_J sweep values"),
        "sweep_values_kHz": (_float_list, (0.0, 100.0, 500.0), "detuning sweep values"),
        "sweep_values_us": (_float_list, (1.0, 10.0, 30.0), "coherence sweep values"),
        "include_cooling": (_bool, False, "add scaled cooling runs to stray_J sweeps"),
    },
    "output": {
        "out_dir": (str, "runs", "output directory"),
        "snapshot_times_ns": (_float_list, (), "density-matrix snapshot times"),
        "wigner_points": (int, 81, "wigner grid points per axis"),
        "wigner_span": (float, None, "wigner grid half-width (default sqrt(2 dim)+3)"),
        "plot": (_bool, False, "render figures next to the CSV outputs"),
    },
}


@dataclass
class RunConfig:
    circuit: dict
    solver: dict
    protocol: dict
    output: dict
    source: str = "<defaults>"

    def flags(self) -> TermFlags:
        return TermFlags.from_names(self.solver["flags"])


def default_config() -> RunConfig:
    return RunConfig(**{sec: {k: spec[1] for k, spec in keys.items()}
                        for sec, keys in _SCHEMA.items()})


def parse_config(path: str | None) -> RunConfig:
    """Parse a config file; None or an empty file yields all defaults."""
    cfg = default_config()
    if path is None:
        return cfg
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    section = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        if section is None:
            raise ConfigError(f"{path}:{lineno}: key outside any [section]")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA[section]:
            hint = _suffix_hint(section, key)
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r} in [{section}]{hint}")
        parser = _SCHEMA[section][key][0]
        try:
            parsed = parser(value) if value != "" else None
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
        getattr(cfg, section)[key] = parsed
    cfg.source = path
    _validate(cfg)
    return cfg


def _suffix_hint(section: str, key: str) -> str:
    """Suggest the unit-suffixed key when a bare name was used."""
    for known in _SCHEMA[section]:
        if known == key:
            continue
        stem = known.rsplit("_", 1)[0]
        if stem == key:
            return (f" (units are explicit in key names; did you mean {known!r}?)")
    return ""


def _validate(cfg: RunConfig) -> None:
    c = cfg.circuit
    checks = [
        ("omega_m_MHz", c["omega_m_MHz"], lambda v: v > 0),
        ("phi_b", c["phi_b"], lambda v: 0.0 <= v < 1.0),
        ("aJ", c["aJ"], lambda v: 0.0 <= v < 1.0),
        ("T1_us", c["T1_us"], lambda v: v > 0),
        ("T2_us", c["T2_us"], lambda v: v > 0),
        ("Qm", c["Qm"], lambda v: v > 0),
        ("B_mT", c["B_mT"], lambda v: v >= 0),
    ]
    for name, value, ok in checks:
        if value is None or not ok(value):
            raise ConfigError(f"config value out of range: {name} = {value!r}")
    if cfg.solver["phonon_dim"] < 2 or cfg.solver["qubit_levels"] < 2:
        raise ConfigError("phonon_dim and qubit_levels must be >= 2")
    if cfg.solver["excitation"] not in ("ideal", "gaussian"):
        raise ConfigError(f"unknown excitation mode {cfg.solver['excitation']!r}")
    cfg.flags()  # validates flag names


def resolve_params(cfg: RunConfig):
    """Turn a RunConfig into CircuitParams, applying inference rules.

    Order of operations: (1) beam mass from X_zpf unless given directly,
    (2) bare EJ from the qubit frequency targets unless explicit, (3) if
    cc_auto_cancel, solve the exchange-cancelling Cc with the frequency
    targets held, then re-infer EJ at the solved capacitance.  Returns
    (CircuitParams, resolution-notes dict).
    """
    c = cfg.circuit
    notes = {}
    omega_m = 2.0 * math.pi * c["omega_m_MHz"] * 1e6
    if c["m_pg"] is not None:
        mass = c["m_pg"] * 1e-15
        notes["mass_source"] = "m_pg"
    else:
        mass = mass_from_xzpf(c["X_zpf_fm"] * 1e-15, omega_m)
        notes["mass_source"] = f"inverted from X_zpf = {c['X_zpf_fm']} fm"
    notes["m_kg"] = mass

    base = dict(
        EJsum_c=c["EJsum_c_GHz"] * 1e9, aJ=c["aJ"],
        C1=c["C1_fF"] * 1e-15, C2=c["C2_fF"] * 1e-15, Cc=c["Cc_fF"] * 1e-15,
        m=mass, omega_m=omega_m, l=c["l_um"] * 1e-6, beta0=c["beta0"],
        B=c["B_mT"] * 1e-3, phi_b=c["phi_b"], T=c["T_mK"] * 1e-3,
        T1=c["T1_us"] * 1e-6, T2=c["T2_us"] * 1e-6, Qm=c["Qm"],
    )

    f_targets = None
    if c["EJ1_GHz"] is not None and c["EJ2_GHz"] is not None:
        ej1 = c["EJ1_GHz"] * 1e9
        ej2 = c["EJ2_GHz"] * 1e9
        notes["EJ_source"] = "explicit"
    else:
        f_targets = (c["omega1_GHz"] * 1e9, c["omega2_GHz"] * 1e9)
        ej1, ej2 = _infer_ej(base, f_targets)
        notes["EJ_source"] = f"inferred from qubit frequency targets {f_targets}"
    params = CircuitParams(EJ1=ej1, EJ2=ej2, **base)

    if c["cc_auto_cancel"]:
        cc = cancellation_capacitance(params, f_targets=f_targets)
        params = replace(params, Cc=cc)
        if f_targets is not None:
            ej1, ej2 = _infer_ej({**base, "Cc": cc}, f_targets)
            params = replace(params, EJ1=ej1, EJ2=ej2)
        notes["Cc_solved_fF"] = cc * 1e15
        notes["Cc_input_fF"] = c["Cc_fF"]
    notes["EJ1_GHz"] = params.EJ1 / 1e9
    notes["EJ2_GHz"] = params.EJ2 / 1e9
    return params, notes


def _infer_ej(base: dict, f_targets):
    probe = CircuitParams(EJ1=1e9, EJ2=1e9, **base)
    from .circuit import _loaded_capacitances  # internal reuse

    ct1, ct2 = _loaded_capacitances(probe)
    ec1 = const.e**2 / (2.0 * ct1) / const.h
    ec2 = const.e**2 / (2.0 * ct2) / const.h
    ej1 = ej_from_frequency(f_targets[0], ec1, base["EJsum_c"], base["aJ"], base["phi_b"])
    ej2 = ej_from_frequency(f_targets[1], ec2, base["EJsum_c"], base["aJ"], base["phi_b"])
    if ej1 <= 0 or ej2 <= 0:
        raise ConfigError("frequency targets are unreachable: inferred EJ <= 0")
    return ej1, ej2


def config_to_dict(cfg: RunConfig) -> dict:
    """JSON-ready copy of the resolved configuration."""
    out = {}
    for sec in ("circuit", "solver", "protocol", "output"):
        d = {}
        for k, v in getattr(cfg, sec).items():
            d[k] = list(v) if isinstance(v, tuple) else v
        out[sec] = d
    out["source"] = cfg.source
    return out
