"""Run manifests: a JSON document capturing everything that defines a run.

A manifest holds the resolved configuration, the derived quantities and
coupling strengths, the per-protocol results and the integrator statistics.
Serialisation is deterministic (sorted keys, shortest-roundtrip floats), so
identical configurations produce byte-identical manifests, and a manifest
survives a parse/serialise round trip unchanged.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

__all__ = ["build_manifest", "write_manifest", "read_manifest",
           "compare_runs", "ComparisonReport", "TOOL_VERSION"]

TOOL_VERSION = "triphon 0.1.0"


def _jsonable(value):
    import numpy as np

    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    if isinstance(value, float) and not math.isfinite(value):
        return {"float": repr(value)}
    return value


def build_manifest(subcommand: str, config_dict: dict, derived=None,
                   couplings=None, result: dict | None = None,
                   stats: dict | None = None) -> dict:
    man = {
        "tool_version": TOOL_VERSION,
        "subcommand": subcommand,
        "config": _jsonable(config_dict),
        "result": _jsonable(result or {}),
        "integrator": _jsonable(stats or {}),
    }
    if derived is not None:
        man["derived"] = _jsonable({
            "EC1_Hz": derived.EC1, "EC2_Hz": derived.EC2,
            "EJt1_Hz": derived.EJt1, "EJt2_Hz": derived.EJt2,
            "omega1_Hz_cyc": derived.omega1 / (2 * math.pi),
            "omega2_Hz_cyc": derived.omega2 / (2 * math.pi),
            "Z1_ohm": derived.Z1, "Z2_ohm": derived.Z2,
            "X_zpf_m": derived.X_zpf, "alpha_per_m": derived.alpha,
            "n_th": derived.n_th, "gamma_m_rad_s": derived.gamma_m,
            "cJ": None if math.isinf(derived.cJ) else derived.cJ,
            "sJ": derived.sJ, "X0_m": derived.X0,
        })
    if couplings is not None:
        tp = 2 * math.pi
        man["couplings"] = _jsonable({
            "phi_b": couplings.phi_b,
            "g_Hz": couplings.g / tp, "g_lead_Hz": couplings.g_lead / tp,
            "g1_Hz": couplings.g1 / tp, "g2_Hz": couplings.g2 / tp,
            "JL_Hz": couplings.JL / tp, "JC_Hz": couplings.JC / tp,
            "Jeff_Hz": couplings.J_eff / tp, "V_Hz": couplings.V / tp,
            "Jn1_Hz": couplings.Jn1 / tp, "Jn2_Hz": couplings.Jn2 / tp,
            "g22x_Hz": couplings.g22x / tp, "g31x_Hz": couplings.g31x / tp,
            "g13x_Hz": couplings.g13x / tp,
        })
    return man


def write_manifest(man: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(man, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


@dataclass
class ComparisonReport:
    rows: list          # (path, a, b, delta, tol, ok)
    skipped: list       # non-numeric or missing paths

    @property
    def ok(self) -> bool:
        return all(r[5] for r in self.rows)

    def format(self) -> str:
        lines = []
        for path, a, b, delta, tol, ok in self.rows:
            mark = "ok " if ok else "FAIL"
            lines.append(f"{mark} {path}: {a!r} vs {b!r} (|delta| = {delta:.3g}, tol = {tol:.3g})")
        for path, why in self.skipped:
            lines.append(f"--  {path}: {why}")
        return "\n".join(lines)


def compare_runs(man_a: dict, man_b: dict, tolerances: dict | None = None,
                 default_tol: float = 0.0) -> ComparisonReport:
    """Per-metric comparison of two manifests.

    ``tolerances`` maps dotted paths (e.g. "result.fidelity") to absolute
    tolerances; other numeric leaves use ``default_tol``.  Manifests of
    different subcommands do not compare.
    """
    if man_a.get("subcommand") != man_b.get("subcommand"):
        raise ValueError("manifests come from different subcommands")
    tolerances = tolerances or {}
    rows, skipped = [], []

    def walk(path, a, b):
        if isinstance(a, dict) and isinstance(b, dict):
            for k in sorted(set(a) | set(b)):
                if k not in a or k not in b:
                    skipped.append((f"{path}.{k}" if path else k, "missing on one side"))
                    continue
                walk(f"{path}.{k}" if path else k, a[k], b[k])
        elif isinstance(a, list) and isinstance(b, list):
            if len(a) != len(b):
                skipped.append((path, f"length {len(a)} vs {len(b)}"))
                return
            for i, (x, y) in enumerate(zip(a, b)):
                walk(f"{path}[{i}]", x, y)
        elif isinstance(a, (int, float)) and isinstance(b, (int, float)) \
                and not isinstance(a, bool) and not isinstance(b, bool):
            tol = tolerances.get(path, default_tol)
            delta = abs(float(a) - float(b))
            rows.append((path, a, b, delta, tol, delta <= tol))
        else:
            if a != b:
                skipped.append((path, f"non-numeric mismatch: {a!r} vs {b!r}"))

    walk("", man_a, man_b)
    return ComparisonReport(rows=rows, skipped=skipped)
