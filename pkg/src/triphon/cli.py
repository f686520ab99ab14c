"""Command-line interface: experiment orchestration and file outputs.

Every subcommand reads one config file (defaults = the reference parameter
set), runs deterministically, and writes delimited text outputs plus a JSON
manifest into the output directory; ``--plot`` additionally renders figures
next to the data files.

Exit codes: 0 success, 2 configuration error, 3 solver/runtime error,
4 comparison mismatch, 5 planning or post-selection failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import analysis, circuit, manifest as mf, protocols
from .config import ConfigError, config_to_dict, parse_config, resolve_params
from .fock import DensityState, SpaceDescriptor
from .hamiltonian import TermFlags
from .lindblad import IntegrationError, MeasurementError
from .protocols import PlanningError

FMT = "%.17g"


def _fmt(x) -> str:
    return FMT % float(x)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(x if isinstance(x, str) else _fmt(x) for x in row) + "\n")
    return path


def _traj_rows(traj):
    return [(t * 1e9, nm, n1, n2, pur) for t, nm, n1, n2, pur in
            zip(traj.t, traj.n_m, traj.n_q1, traj.n_q2, traj.purity)]


def _write_trajectory(traj, outdir):
    return write_csv(os.path.join(outdir, "trajectory.csv"),
                     ["t_ns", "n_m", "n_q1", "n_q2", "purity"], _traj_rows(traj))


def _save_state(state: DensityState, path):
    np.savez(path, rho=state.rho, dims=np.array(state.space.dims),
             labels=np.array(state.space.labels))
    return path


def _load_state(path) -> DensityState:
    data = np.load(path, allow_pickle=False)
    space = SpaceDescriptor(tuple(int(d) for d in data["dims"]),
                            tuple(str(s) for s in data["labels"]))
    return DensityState(space, np.asarray(data["rho"], dtype=complex))


def _stats_dict(traj):
    return {
        "steps_accepted": traj.stats.accepted,
        "steps_rejected": traj.stats.rejected,
        "rhs_evaluations": traj.stats.rhs_evals,
        "max_trace_drift": traj.max_trace_drift(),
        "min_eigenvalue_checks": traj.stats.min_eigenvalues,
    }


def _wigner_csv(grid, outdir, name="wigner.csv"):
    rows = [(x, p, grid.W[j, i]) for j, p in enumerate(grid.ps)
            for i, x in enumerate(grid.xs)]
    return write_csv(os.path.join(outdir, name), ["x", "p", "W"], rows)


def _phonon_wigner(cfg, state: DensityState, outdir, plot: bool):
    red = analysis.partial_trace(state, "m") if len(state.space.dims) > 1 else state
    dim = red.space.dims[0]
    span = cfg.output["wigner_span"] or (math.sqrt(2.0 * dim) + 3.0)
    xs = np.linspace(-span, span, cfg.output["wigner_points"])
    grid = analysis.wigner(red, xs, xs)
    path = _wigner_csv(grid, outdir)
    if plot:
        from . import plotting

        plotting.plot_wigner(grid, os.path.join(outdir, "wigner.png"))
    return grid, path


def _context(cfg, params, dissipation=True, phonon_dim=None, J_offset=0.0):
    return protocols.make_context(
        params, phonon_dim=phonon_dim or cfg.solver["phonon_dim"],
        n_q=cfg.solver["qubit_levels"], flags=cfg.flags(),
        dissipation=dissipation, rtol=cfg.solver["rtol"],
        atol=cfg.solver["atol"], J_offset=J_offset)


# ---------------------------------------------------------------------------
# subcommands


def cmd_couplings(cfg, args, outdir):
    params, notes = resolve_params(cfg)
    lo, hi, n = args.phi_range
    phis = np.linspace(lo, hi, int(n))
    rows = circuit.coupling_sweep(params, phis)
    tp = 2.0 * math.pi
    csv_rows = [(phi, c.g / tp, c.g1 / tp, c.g2 / tp, c.JL / tp, c.JC / tp,
                 c.J_eff / tp, c.V / tp) for phi, c in rows]
    write_csv(os.path.join(outdir, "couplings.csv"),
              ["phi_b", "g_Hz", "g1_Hz", "g2_Hz", "JL_Hz", "JC_Hz",
               "Jeff_Hz", "V_Hz"], csv_rows)
    derived = circuit.derive_static(params)
    cpl = circuit.couplings(params)
    man = mf.build_manifest("couplings", config_to_dict(cfg), derived, cpl,
                            result={"phi_points": len(rows),
                                    "resolution": notes})
    if args.plot:
        from . import plotting

        plotting.plot_coupling_sweep(rows, os.path.join(outdir, "couplings.png"))
    return man, f"couplings: g/2pi = {cpl.g / tp / 1e3:.1f} kHz at phi_b = {params.phi_b}"


def cmd_cool(cfg, args, outdir):
    params, notes = resolve_params(cfg)
    pr = cfg.protocol
    n_init = pr["n_init"]
    cycles = pr["cycles"]
    phase2 = min(pr["cool_phase2_cycles"], cycles)
    ctx = _context(cfg, params)
    if phase2 > 0:
        s1 = protocols.cooling_schedule(ctx, protocols.CoolingConfig(
            cycles=cycles - phase2, t_cool=pr["t_cool_ns"] * 1e-9,
            t_reset=pr["t_reset_ns"] * 1e-9, t_excite=pr["t_excite_ns"] * 1e-9,
            excitation=cfg.solver["excitation"], n_init=n_init))
        s2 = protocols.cooling_schedule(ctx, protocols.CoolingConfig(
            cycles=phase2, t_cool=pr["t_cool2_ns"] * 1e-9,
            t_reset=pr["t_reset_ns"] * 1e-9, t_excite=pr["t_excite_ns"] * 1e-9,
            excitation=cfg.solver["excitation"], n_init=n_init))
        from .hamiltonian import PulseSchedule
        from .lindblad import evolve
        from .fock import thermal_state

        sched = PulseSchedule(s1.segments + s2.segments)
        n0 = ctx.derived.n_th if n_init is None else n_init
        dim_m = ctx.space.dims[ctx.space.axis("m")]
        rho0 = protocols.product_state(ctx.space, 0, 0, thermal_state(dim_m, n0))
        traj = evolve(rho0, ctx.handle(sched), ctx.dissipation, rtol=ctx.rtol,
                      atol=ctx.atol, record_points=min(1200, 4 * cycles),
                      snapshot_times=tuple(t * 1e-9 for t in cfg.output["snapshot_times_ns"]))
        final = protocols.unrotate_frame(traj.final_state, traj.frame_phases)
        red = analysis.partial_trace(final, "m")
        vac = np.zeros(dim_m)
        vac[0] = 1.0
        ov = analysis.fidelity(red, vac)
        res = protocols.ProtocolResult(
            trajectory=traj, final_state=final, fidelity=math.sqrt(ov),
            overlap=ov, success_probability=None, schedule=sched,
            target_label="phonon vacuum", g_eff=ctx.swap_rate(),
            extras={"final_n_m": float(traj.n_m[-1]), "n_init": n0})
    else:
        res = protocols.run_cooling(ctx, protocols.CoolingConfig(
            cycles=cycles, t_cool=pr["t_cool_ns"] * 1e-9,
            t_reset=pr["t_reset_ns"] * 1e-9, t_excite=pr["t_excite_ns"] * 1e-9,
            excitation=cfg.solver["excitation"], n_init=n_init))
    _write_trajectory(res.trajectory, outdir)
    man = mf.build_manifest("cool", config_to_dict(cfg), ctx.derived, ctx.couplings,
                            result={"final_n_m": res.extras["final_n_m"],
                                    "vacuum_fidelity": res.fidelity,
                                    "n_init": res.extras["n_init"],
                                    "g_eff_Hz": res.g_eff / (2 * math.pi),
                                    "resolution": notes},
                            stats=_stats_dict(res.trajectory))
    if args.plot:
        from . import plotting

        plotting.plot_trajectory(res.trajectory, os.path.join(outdir, "trajectory.png"),
                                 title="stroboscopic cooling")
    return man, f"cool: final <n_m> = {res.extras['final_n_m']:.4f} after {cycles} cycles"


def _swap_prep(cfg, args, outdir, variant):
    params, notes = resolve_params(cfg)
    pr = cfg.protocol
    ctx = _context(cfg, params)
    res = protocols.run_fock(
        ctx, variant=variant, stop_fraction=pr["stop_fraction"],
        phonon_init=pr["phonon_init"], phonon_n=pr["phonon_n"],
        excitation=cfg.solver["excitation"])
    _write_trajectory(res.trajectory, outdir)
    rows = analysis.density_matrix_export(res.final_state, floor=0.005)
    write_csv(os.path.join(outdir, "density_matrix.csv"),
              ["bra", "ket", "re", "im", "abs"], rows)
    red = analysis.partial_trace(res.final_state, "m")
    _save_state(red, os.path.join(outdir, "phonon_state.npz"))
    if variant == "fock" or args.wigner:
        _phonon_wigner(cfg, res.final_state, outdir, args.plot)
    man = mf.build_manifest(variant, config_to_dict(cfg), ctx.derived, ctx.couplings,
                            result={"fidelity": res.fidelity,
                                    "overlap": res.overlap,
                                    "target": res.target_label,
                                    "t_stop_ns": res.extras["t_stop"] * 1e9,
                                    "final_n_m": res.extras["final_n_m"],
                                    "g_eff_Hz": res.g_eff / (2 * math.pi),
                                    "resolution": notes},
                            stats=_stats_dict(res.trajectory))
    if args.plot:
        from . import plotting

        plotting.plot_trajectory(res.trajectory, os.path.join(outdir, "trajectory.png"),
                                 title=res.target_label)
    return man, f"{variant}: fidelity = {res.fidelity:.4f} ({res.target_label})"


def cmd_fock(cfg, args, outdir):
    return _swap_prep(cfg, args, outdir, "fock")


def cmd_ghz(cfg, args, outdir):
    return _swap_prep(cfg, args, outdir, "ghz")


def cmd_bell(cfg, args, outdir):
    return _swap_prep(cfg, args, outdir, "bell")


def _parse_target(spec: str):
    """'0:0.25,2:0.5,4:0.25' -> dense vector up to the highest index."""
    if not spec:
        raise ConfigError("plan requires a target, e.g. --target 0:0.5,4:0.5")
    entries = {}
    for part in spec.split(","):
        idx, _, val = part.partition(":")
        entries[int(idx)] = complex(val) if "j" in val else float(val)
    n = max(entries)
    vec = np.zeros(n + 1, dtype=complex)
    for k, v in entries.items():
        vec[k] = v
    return vec


def cmd_plan(cfg, args, outdir):
    params, notes = resolve_params(cfg)
    pr = cfg.protocol
    target = _parse_target(args.target or pr["target"])
    ctx = _context(cfg, params, dissipation=False, phonon_dim=max(len(target) + 3, 8))
    mode = args.mode or pr["plan_mode"]
    if mode == "distribution":
        probs = np.real(target)
        probs = probs / probs.sum()
        plan = protocols.plan_distribution_state(probs, ctx.swap_rate(+1),
                                                 omega_m=params.omega_m)
        result = {
            "mode": mode,
            "alpha": plan.alpha,
            "times_ns": [t * 1e9 for t in plan.times],
            "pattern": "".join("+-"[k % 2] for k in range(len(plan.times))),
            "residual": plan.residual,
            "predicted_success_probability": plan.success_probability,
            "predicted_amplitudes": [{"re": a.real, "im": a.imag} for a in plan.amplitudes],
        }
        summary = (f"plan: {len(plan.times)} segments, total "
                   f"{sum(plan.times) * 1e6:.2f} us, predicted success "
                   f"p = {plan.success_probability:.3f}")
    elif mode == "amplitudes":
        amps = np.asarray(target, dtype=complex)
        amps = amps / np.linalg.norm(amps)
        plan = protocols.plan_arbitrary_state(amps, ctx.swap_rate(-1),
                                              2 * math.pi * pr["J_gate_MHz"] * 1e6)
        result = {
            "mode": mode,
            "steps": [{"theta_j": s.theta_j, "t_j_ns": s.t_j * 1e9,
                       "theta_a": s.theta_a, "t_a_ns": s.t_a * 1e9}
                      for s in plan.steps],
            "ideal_replay_fidelity": plan.ideal_fidelity,
            "J_gate_Hz": plan.J / (2 * math.pi),
        }
        summary = (f"plan: {len(plan.steps)} gate steps, ideal replay fidelity "
                   f"{plan.ideal_fidelity:.12f}")
    else:
        raise ConfigError(f"unknown plan mode {mode!r}")
    man = mf.build_manifest("plan", config_to_dict(cfg), ctx.derived, ctx.couplings,
                            result={**result, "resolution": notes})
    return man, summary


def cmd_superpose(cfg, args, outdir):
    params, notes = resolve_params(cfg)
    pr = cfg.protocol
    if args.plan:
        plan_man = mf.read_manifest(args.plan)
        pres = plan_man["result"]
        times = tuple(t * 1e-9 for t in pres["times_ns"])
        alpha = pres["alpha"]
        target = np.array([complex(a["re"], a["im"])
                           for a in pres["predicted_amplitudes"]])
        pattern = pres.get("pattern") or None
    else:
        times = tuple(t * 1e-9 for t in (args.times or pr["times_ns"]))
        alpha = pr["alpha"]
        target = None
        pattern = pr["pattern"] or None
    if not times:
        raise ConfigError("superpose requires segment times (--times, --plan or config)")
    ctx = _context(cfg, params)
    res = protocols.run_superposition(ctx, times, pattern=pattern, alpha=alpha,
                                      target_amplitudes=target,
                                      phonon_init=pr["phonon_init"],
                                      phonon_n=pr["phonon_n"])
    _write_trajectory(res.trajectory, outdir)
    red = analysis.partial_trace(res.final_state, "m")
    _save_state(red, os.path.join(outdir, "phonon_state.npz"))
    _phonon_wigner(cfg, res.final_state, outdir, args.plot)
    man = mf.build_manifest("superpose", config_to_dict(cfg), ctx.derived,
                            ctx.couplings,
                            result={"fidelity": res.fidelity,
                                    "overlap": res.overlap,
                                    "success_probability": res.success_probability,
                                    "times_ns": [t * 1e9 for t in times],
                                    "resolution": notes},
                            stats=_stats_dict(res.trajectory))
    if args.plot:
        from . import plotting

        plotting.plot_trajectory(res.trajectory, os.path.join(outdir, "trajectory.png"),
                                 title="multi-phonon synthesis")
    return man, (f"superpose: fidelity = {res.fidelity:.4f}, post-selection "
                 f"p = {res.success_probability:.4f}")


def cmd_sweep(cfg, args, outdir):
    params, notes = resolve_params(cfg)
    pr = cfg.protocol
    kind = args.kind or pr["sweep_kind"]
    if kind == "stray_J":
        values = [2 * math.pi * v * 1e6 for v in pr["sweep_values_MHz"]]
        unit = "J_offset_MHz"
        disp = [v for v in pr["sweep_values_MHz"]]
    elif kind == "detuning":
        values = [2 * math.pi * v * 1e3 for v in pr["sweep_values_kHz"]]
        unit = "detuning_kHz"
        disp = [v for v in pr["sweep_values_kHz"]]
    elif kind == "coherence":
        values = [v * 1e-6 for v in pr["sweep_values_us"]]
        unit = "T1_T2_us"
        disp = [v for v in pr["sweep_values_us"]]
    else:
        raise ConfigError(f"unknown sweep kind {kind!r}")
    rows = protocols.robustness_sweep(
        params, kind, values, phonon_dim=cfg.solver["phonon_dim"],
        flags=cfg.flags(), rtol=cfg.solver["rtol"], atol=cfg.solver["atol"],
        include_cooling=pr["include_cooling"])
    header = [unit, "prep_fidelity", "peak_fidelity", "fock_fidelity"]
    extra = "cooling_final_n_m" in rows[0] if rows else False
    if extra:
        header += ["cooling_final_n_m", "cooling_vacuum_fidelity"]
    csv_rows = []
    for d, r in zip(disp, rows):
        row = [d, r["prep_fidelity"], r["peak_fidelity"], r["fock_fidelity"]]
        if extra:
            row += [r["cooling_final_n_m"], r["cooling_vacuum_fidelity"]]
        csv_rows.append(tuple(row))
    write_csv(os.path.join(outdir, "robustness.csv"), header, csv_rows)
    man = mf.build_manifest("sweep", config_to_dict(cfg), result={
        "kind": kind, "rows": rows, "resolution": notes})
    if args.plot:
        from . import plotting

        disp_rows = [dict(r, value=d) for d, r in zip(disp, rows)]
        plotting.plot_robustness(disp_rows, os.path.join(outdir, "robustness.png"), unit)
    return man, f"sweep {kind}: " + ", ".join(
        f"{d}->{r['prep_fidelity']:.3f}" for d, r in zip(disp, rows))


def cmd_wigner(cfg, args, outdir):
    state = _load_state(args.state)
    grid, path = _phonon_wigner(cfg, state, outdir, args.plot)
    man = mf.build_manifest("wigner", config_to_dict(cfg), result={
        "points": int(grid.W.size), "integral": grid.integral(),
        "convention": grid.convention, "source_state": args.state})
    return man, f"wigner: integral = {grid.integral():.4f} over {grid.W.size} points"


def cmd_compare(cfg, args, outdir):
    man_a = mf.read_manifest(args.manifests[0])
    man_b = mf.read_manifest(args.manifests[1])
    tols = {}
    for item in (args.tol or "").split(","):
        if item:
            path, _, v = item.partition("=")
            tols[path] = float(v)
    report = mf.compare_runs(man_a, man_b, tols, default_tol=args.default_tol)
    print(report.format())
    if not report.ok:
        raise ComparisonMismatch("manifest comparison failed")
    return None, f"compare: {len(report.rows)} metrics ok"


class ComparisonMismatch(RuntimeError):
    pass


# ---------------------------------------------------------------------------


_GLOBAL_DEFAULTS = {
    "config": None, "out": None, "phonon_dim": None, "flags": None,
    "snapshot_times": None, "seedless": False, "plot": False,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    sup = argparse.SUPPRESS
    common.add_argument("--config", default=sup, help="configuration file")
    common.add_argument("--out", default=sup, help="output directory")
    common.add_argument("--phonon-dim", type=int, default=sup,
                        help="override solver phonon dimension")
    common.add_argument("--flags", default=sup,
                        help="override interaction term flags (comma separated)")
    common.add_argument("--snapshot-times", default=sup,
                        help="state snapshot times in ns (comma separated)")
    common.add_argument("--seedless", action="store_true", default=sup,
                        help="document determinism: all runs are seed-free")
    common.add_argument("--plot", action="store_true", default=sup,
                        help="render figures next to the CSV outputs")

    ap = argparse.ArgumentParser(
        prog="triphon", parents=[common],
        description="Tripartite transmon-beam circuit simulator: couplings, "
                    "cooling, state preparation and synthesis planning.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("couplings", parents=[common],
                       help="flux sweep of all coupling strengths")
    p.add_argument("--phi-range", default="0.4:0.5:101", type=_phi_range,
                   help="lo:hi:npoints in units of Phi0")
    for name, hlp in [("cool", "stroboscopic ground-state cooling"),
                      ("fock", "single-phonon preparation"),
                      ("ghz", "three-party entangled state at half transfer"),
                      ("bell", "qubit-phonon Bell pair")]:
        q = sub.add_parser(name, parents=[common], help=hlp)
        if name != "cool":
            q.add_argument("--wigner", action="store_true",
                           help="emit the phonon Wigner map")
    q = sub.add_parser("superpose", parents=[common],
                       help="alternating-sideband phonon synthesis")
    q.add_argument("--times", type=lambda s: tuple(float(x) for x in s.split(",")),
                   default=None, help="segment durations in ns")
    q.add_argument("--plan", default=None, help="plan manifest to replay")
    q = sub.add_parser("plan", parents=[common],
                       help="solve segment times for a target phonon state")
    q.add_argument("--target", default=None,
                   help="index:value list, e.g. 0:0.25,2:0.5,4:0.25")
    q.add_argument("--mode", choices=("distribution", "amplitudes"), default=None)
    q = sub.add_parser("sweep", parents=[common],
                       help="robustness sweeps (stray_J, detuning, coherence)")
    q.add_argument("--kind", choices=("stray_J", "detuning", "coherence"), default=None)
    q = sub.add_parser("wigner", parents=[common],
                       help="Wigner map of a saved phonon state")
    q.add_argument("--state", required=True, help="phonon_state.npz from a run")
    q = sub.add_parser("compare", parents=[common], help="compare two run manifests")
    q.add_argument("manifests", nargs=2)
    q.add_argument("--tol", default="", help="path=tol overrides, comma separated")
    q.add_argument("--default-tol", type=float, default=0.0)
    return ap


def _phi_range(s: str):
    lo, hi, n = s.split(":")
    return (float(lo), float(hi), int(n))


_COMMANDS = {
    "couplings": cmd_couplings, "cool": cmd_cool, "fock": cmd_fock,
    "ghz": cmd_ghz, "bell": cmd_bell, "superpose": cmd_superpose,
    "plan": cmd_plan, "sweep": cmd_sweep, "wigner": cmd_wigner,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for name, default in _GLOBAL_DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, default)
    try:
        cfg = parse_config(args.config)
        if args.phonon_dim is not None:
            cfg.solver["phonon_dim"] = args.phonon_dim
        if args.flags is not None:
            cfg.solver["flags"] = tuple(f.strip() for f in args.flags.split(","))
            cfg.flags()
        if args.snapshot_times is not None:
            cfg.output["snapshot_times_ns"] = tuple(
                float(x) for x in args.snapshot_times.split(","))
        if args.plot:
            cfg.output["plot"] = True
        if not args.plot and cfg.output["plot"]:
            args.plot = True
        outdir = args.out or os.path.join(cfg.output["out_dir"], args.command)
        os.makedirs(outdir, exist_ok=True)
        man, summary = _COMMANDS[args.command](cfg, args, outdir)
        if man is not None:
            mf.write_manifest(man, os.path.join(outdir, "manifest.json"))
        print(summary)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (PlanningError, MeasurementError) as exc:
        print(f"planning/post-selection error: {exc}", file=sys.stderr)
        return 5
    except ComparisonMismatch as exc:
        print(f"{exc}", file=sys.stderr)
        return 4
    except (IntegrationError, circuit.ParameterError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
