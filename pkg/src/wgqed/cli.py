"""Command-line runner: ``wgqed {simulate,analyze,reference,compare}``.

Exit codes: 0 success, 2 invalid configuration, 3 engine abort,
4 statistics failure, 5 stale or mismatched data.

Numbers in CSV files are printed with ``%.10e``; header lines start with
``#`` and carry the resolved parameters.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__, master, stats
from .config import MANIFEST_NAME, ExperimentConfig, read_manifest, resolve, write_manifest
from .errors import (ConfigurationError, DarkChannelError, EngineAbort,
                     NonUniqueSteadyStateError, StatisticsError)
from .events import format_header, format_lines, read_events, sha256_file
from .rng import ALGORITHM
from .trajectory import iter_event_blocks

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_STATS, EXIT_STALE = 0, 2, 3, 4, 5
NUMBER = "%.10e"
EVENTS_NAME = "events.csv"


class StaleDataError(Exception):
    """Event files do not match their manifest."""


# CSV output.

def _header(kind: str, cfg: ExperimentConfig, extra: dict[str, Any] | None = None) -> str:
    lines = [f"# wgqed {kind}"]
    for key, value in sorted(cfg.to_dict().items()):
        if key in ("out", "workers", "plot"):
            continue
        lines.append(f"# {key}={value}")
    for key, value in (extra or {}).items():
        lines.append(f"# {key}={value}")
    return "\n".join(lines) + "\n"


def write_csv(path: Path, kind: str, cfg: ExperimentConfig, columns: Sequence[str],
              rows: Sequence[Sequence[Any]], extra: dict[str, Any] | None = None,
              block: int | None = None) -> None:
    """Write rows; ``block`` inserts a blank line every ``block`` rows (gnuplot surfaces)."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(_header(kind, cfg, extra))
        f.write(",".join(columns) + "\n")
        for i, row in enumerate(rows):
            if block and i and i % block == 0:
                f.write("\n")
            f.write(",".join(v if isinstance(v, str) else NUMBER % v for v in row) + "\n")


def read_curve_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """``(tau, value, stderr)`` from the first, second and (if present) third column."""
    rows = []
    with open(path, encoding="utf-8") as f:
        lines = [ln for ln in f if ln.strip() and not ln.startswith("#")]
    header = lines[0].strip().split(",")
    for ln in lines[1:]:
        rows.append(ln.strip().split(","))
    tau = np.array([float(r[0]) for r in rows])
    value = np.array([float(r[1]) for r in rows])
    stderr = None
    if len(header) > 2 and header[2] == "stderr":
        stderr = np.array([float(r[2]) for r in rows])
    return tau, value, stderr


# Subcommands.

def cmd_simulate(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / MANIFEST_NAME
    if manifest_path.exists():
        manifest_path.unlink()
    m = cfg.operators()
    tcfg = cfg.trajectory_config()
    tcfg.validate(m)
    events_path = out / EVENTS_NAME
    counts = {"R": 0, "L": 0}
    start = time.perf_counter()
    manifest: dict[str, Any] = {
        "tool": "wgqed",
        "version": __version__,
        "rng": ALGORITHM,
        "config": cfg.to_dict(),
    }
    status = EXIT_OK
    try:
        with open(events_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(format_header(cfg.dt, tcfg.n_steps, cfg.trajectories))
            for block in iter_event_blocks(m, tcfg, cfg.trajectories, workers=cfg.workers):
                f.write(format_lines(block.trajectory, block.steps, block.channel, cfg.dt))
                counts["R"] += int(np.sum(block.channel == 0))
                counts["L"] += int(np.sum(block.channel == 1))
    except EngineAbort as exc:
        manifest["status"] = "aborted"
        manifest["abort"] = {"trajectory_id": exc.trajectory_id, "reason": exc.reason}
        status = EXIT_ABORT
        print(f"engine abort: {exc}", file=sys.stderr)
    else:
        manifest["status"] = "ok"
    manifest["events"] = counts
    manifest["outputs"] = {EVENTS_NAME: sha256_file(events_path)}
    manifest["wall_clock_s"] = round(time.perf_counter() - start, 3)
    write_manifest(manifest_path, manifest)
    print(f"{events_path}: R={counts['R']} L={counts['L']} events "
          f"({cfg.trajectories} trajectories x {cfg.t_end:g})")
    return status


def _load_run(run_dir: Path) -> tuple[dict[str, Any], Path]:
    manifest_path = run_dir / MANIFEST_NAME
    if not manifest_path.exists():
        raise StaleDataError(f"{run_dir}: no manifest (simulation missing or incomplete)")
    manifest = read_manifest(manifest_path)
    if manifest.get("status") != "ok":
        raise StaleDataError(f"{run_dir}: simulation did not complete")
    events_path = run_dir / EVENTS_NAME
    if not events_path.exists():
        raise StaleDataError(f"{events_path} is missing")
    if sha256_file(events_path) != manifest.get("outputs", {}).get(EVENTS_NAME):
        raise StaleDataError(f"{events_path} does not match its manifest checksum")
    return manifest, events_path


def _physics_keys(cfg: ExperimentConfig) -> dict[str, Any]:
    d = cfg.to_dict()
    keep = ("model", "gamma", "gamma2", "alpha_re", "alpha_im", "delta", "delta2", "phase_k",
            "phase_eg", "hamiltonian", "dt", "t_end", "trajectories", "seed", "scheme")
    return {k: d[k] for k in keep}


def cmd_analyze(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    manifest, events_path = _load_run(out)
    sim_cfg = ExperimentConfig.from_dict(manifest["config"])
    if _physics_keys(sim_cfg) != _physics_keys(cfg):
        diff = sorted(k for k, v in _physics_keys(cfg).items() if _physics_keys(sim_cfg)[k] != v)
        raise StaleDataError(f"events were simulated with different parameters: {diff}")
    events = read_events(events_path)
    m = cfg.operators()
    written: dict[str, str] = {}
    summary = []
    for ch in cfg.channels:
        series = stats.waiting_times(events, ch, cfg.burn_in)
        j = m.jump(ch)
        if "wtd" in cfg.outputs:
            h = stats.wtd(series, cfg.bins, cfg.tau_max)
            x, w, e = h.values()
            ref = stats.reference_wtd(m.generator, j, cfg.dt, h.width_steps, h.n_bins, ch)
            tb = h.mean
            name = f"wtd_{ch}.csv"
            write_csv(out / name, "waiting-time distribution", cfg,
                      ("tau_scaled", "density", "stderr", "master"),
                      list(zip(x, w, e, ref.values * tb)),
                      {"channel": ch, "tau_bar": NUMBER % tb, "bin_width": NUMBER % h.width,
                       "samples": h.total_samples, "overflow": h.overflow})
            written[name] = ""
            summary.append(f"{ch}: {h.total_samples} waits, tau_bar={tb:.4f}")
            if cfg.plot:
                from .plotting import plot_wtd
                plot_wtd(x, w, e, out / f"wtd_{ch}.png", ch, (x, ref.values * tb))
        if "awtd" in cfg.outputs:
            a = stats.awtd(series, cfg.awtd_bins, cfg.awtd_tau_max)
            x, d, _ = a.values()
            rows = [(x[i], x[k], d[i, k]) for i in range(a.n_bins) for k in range(a.n_bins)]
            name = f"awtd_{ch}.csv"
            write_csv(out / name, "adjacent waiting-time distribution", cfg,
                      ("tau1", "tau2", "density"), rows,
                      {"channel": ch, "tau_bar": NUMBER % a.mean, "pairs": a.total_samples},
                      block=a.n_bins)
            written[name] = ""
            if cfg.plot:
                from .plotting import plot_awtd
                plot_awtd(x, d, out / f"awtd_{ch}.png", ch)
        if "g2" in cfg.outputs:
            counts = stats.g2_counts(events, ch, cfg.g2_bins, cfg.g2_tau_max, cfg.burn_in)
            traj = counts.curve()
            ref = stats.reference_g2(m.generator, j, cfg.dt, counts.width_steps, counts.n_bins, ch)
            cmp_ = stats.compare(traj, ref)
            for curve, suffix in ((traj, "trajectory"), (ref, "master")):
                err = curve.stderr if curve.stderr is not None else np.zeros_like(curve.values)
                name = f"g2_{ch}_{suffix}.csv"
                write_csv(out / name, "g2", cfg, ("tau", "value", "stderr", "source"),
                          [(t, v, s, curve.source) for t, v, s in zip(curve.taus, curve.values, err)],
                          {"channel": ch, "anchors": counts.anchors, "bin_width": NUMBER % counts.width})
                written[name] = ""
            summary.append(f"{ch}: g2 within 3 sigma on {100 * cmp_.fraction_within:.1f}% of bins "
                           f"(max {cmp_.max_abs:.2f} sigma)")
            if cfg.plot:
                from .plotting import plot_g2
                plot_g2([traj, ref], out / f"g2_{ch}.png")
    analysis = {
        "tool": "wgqed",
        "version": __version__,
        "config": cfg.to_dict(),
        "events_sha256": manifest["outputs"][EVENTS_NAME],
        "outputs": {name: sha256_file(out / name) for name in written},
    }
    write_manifest(out / "analysis.json", analysis)
    for line in summary:
        print(line)
    return EXIT_OK


def cmd_reference(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    m = cfg.operators()
    rho = master.steady_state(m.generator)
    fluxes = {ch: master.channel_flux(rho, m.jump(ch)) for ch in ("R", "L")}
    residual = fluxes["R"] + fluxes["L"] - m.flux
    rows = [(f"population_{i}", float(rho.matrix[i, i].real)) for i in range(m.dim)]
    rows += [("flux_R", fluxes["R"]), ("flux_L", fluxes["L"]), ("flux_in", m.flux),
             ("flux_residual", residual)]
    write_csv(out / "steady_state.csv", "steady state", cfg, ("quantity", "value"),
              [(k, NUMBER % v) for k, v in rows])
    print(f"flux R={fluxes['R']:.9f} L={fluxes['L']:.9f} in={m.flux:.9f} residual={residual:.3e}")
    taus = np.linspace(0.0, cfg.g2_tau_max, cfg.g2_bins + 1)
    curves = []
    for ch in cfg.channels:
        if fluxes[ch] <= 1e-15:
            print(f"channel {ch}: no flux, g2 undefined")
            continue
        curve = master.g2_master(m.generator, m.jump(ch), taus, ch)
        curves.append(curve)
        columns = ["tau", "g2", "source"]
        rows_g2: list[tuple] = [(t, v, curve.source) for t, v in zip(curve.taus, curve.values)]
        extra = []
        if cfg.model == "one-qubit" and ch == "R":
            rate = 0.5 * cfg.gamma + m.flux
            expo = curve.values[0] * np.exp(-taus * rate)
            columns = ["tau", "g2", "source", "exponential"]
            rows_g2 = [(t, v, s, e) for (t, v, s), e in zip(rows_g2, expo)]
            extra.append((taus, expo, r"$g^{(2)}(0)\,e^{-\tau(\Gamma/2+\bar n)}$"))
        write_csv(out / f"g2_master_{ch}.csv", "g2", cfg, columns, rows_g2, {"channel": ch})
        if cfg.plot:
            from .plotting import plot_g2
            plot_g2([curve], out / f"g2_master_{ch}.png", extra)
    return EXIT_OK


def cmd_compare(a: Path, b: Path, threshold: float) -> int:
    ta, va, ea = read_curve_csv(a)
    tb, vb, eb = read_curve_csv(b)
    ca = master.CorrelationCurve("?", ta, va, "a", ea)
    cb = master.CorrelationCurve("?", tb, vb, "b", eb)
    result = stats.compare(ca, cb, threshold)
    print(f"bins={result.z.size} max_deviation_sigma={result.max_abs:.4f} "
          f"within_{threshold:g}_sigma={100 * result.fraction_within:.2f}%")
    return EXIT_OK


# Argument parsing.

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI config file")
    p.add_argument("--preset", choices=("fig2", "fig3", "fig4", "fig5"))
    p.add_argument("--model", choices=("one-qubit", "two-qubit"))
    p.add_argument("--gamma", type=float, help="decay rate of qubit 1 (sets the time unit)")
    p.add_argument("--gamma2", type=float, help="decay rate of qubit 2 (default: --gamma)")
    p.add_argument("--alpha-re", type=float, help="real part of the coherent amplitude")
    p.add_argument("--alpha-im", type=float, help="imaginary part of the coherent amplitude")
    p.add_argument("--delta", type=float, help="detuning of qubit 1")
    p.add_argument("--delta2", type=float, help="detuning of qubit 2")
    p.add_argument("--phase-k", type=float, help="propagation phase k*dt between the qubits")
    p.add_argument("--phase-eg", type=float, help="phase w_eg*dt (default: --phase-k)")
    p.add_argument("--dt", type=float, help="trajectory time step")
    p.add_argument("--t-end", type=float, help="trajectory length")
    p.add_argument("--trajectories", type=int, help="number of trajectories")
    p.add_argument("--seed", type=int, help="64-bit master seed")
    p.add_argument("--burn-in", type=float, help="discard events before this time")
    p.add_argument("--scheme", choices=("exp", "euler"), help="no-jump propagation scheme")
    p.add_argument("--channel", choices=("R", "L", "both"))
    p.add_argument("--bins", type=int, help="WTD bins")
    p.add_argument("--tau-max", type=float, help="WTD range in units of the mean waiting time")
    p.add_argument("--out", type=str, help="output directory")
    p.add_argument("--workers", type=int, help="worker threads")
    p.add_argument("--plot", action="store_true", default=None, help="also render PNG figures")


_FLAG_KEYS = ("model", "gamma", "gamma2", "alpha_re", "alpha_im", "delta", "delta2", "phase_k",
              "phase_eg", "dt", "t_end", "trajectories", "seed", "burn_in", "scheme", "channel",
              "bins", "tau_max", "out", "workers", "plot")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wgqed", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"wgqed {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "run quantum-jump trajectories and write events"),
                        ("analyze", "histogram statistics from a simulated run"),
                        ("reference", "master-equation steady state and g2 curves")):
        _add_config_flags(sub.add_parser(name, help=help_))
    cmp_ = sub.add_parser("compare", help="deviation between two curve CSVs in sigma units")
    cmp_.add_argument("a", type=Path)
    cmp_.add_argument("b", type=Path)
    cmp_.add_argument("--threshold", type=float, default=3.0)
    return parser


def resolve_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {k: getattr(args, k) for k in _FLAG_KEYS}
    if args.command == "analyze" and args.preset is None and args.config is None:
        # Without a preset or config file, analyze the run as it was simulated.
        manifest_path = Path(args.out or "run") / MANIFEST_NAME
        if not manifest_path.exists():
            raise StaleDataError(f"{manifest_path} not found")
        base = read_manifest(manifest_path)["config"]
        base.update({k: v for k, v in overrides.items() if v is not None})
        return ExperimentConfig.from_dict(base)
    return resolve(args.preset, args.config, overrides)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "compare":
            return cmd_compare(args.a, args.b, args.threshold)
        cfg = resolve_args(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "analyze":
            return cmd_analyze(cfg)
        return cmd_reference(cfg)
    except StaleDataError as exc:
        print(f"stale data: {exc}", file=sys.stderr)
        return EXIT_STALE
    except EngineAbort as exc:
        print(f"engine abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (StatisticsError, DarkChannelError, NonUniqueSteadyStateError) as exc:
        print(f"statistics failure: {exc}", file=sys.stderr)
        return EXIT_STATS
    except ConfigurationError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
