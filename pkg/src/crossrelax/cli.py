"""Command-line entry point: ``crossrelax <subcommand> [options]``.

Every subcommand reads defaults from :class:`~crossrelax.config.RunConfig`,
then an optional ``--config`` file, then ``--set key=value`` pairs and the
dedicated flags (flags win).  Numeric output is CSV with the full parameter
set echoed as ``#`` comment lines.  Exit status is 0 on success, 1 when any
operation reported a diagnostic failure, 2 for bad usage or configuration.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, config_keys, load_config
from .dynamics import (DipoleGeometry, DriveParams, PAIR_LABELS, evolve, initial_state, matched_field,
                       rotating_frame, thermal_polarization, total_hamiltonian)
from .eigen import ConvergenceError, level_sweep, transition_table
from .io import CsvFormatError, read_csv, read_spectrum, write_csv
from .odmr import FitError, OdmrSpectrum, fit_peak_profile, fit_triple_lorentzian, synthesize_spectrum
from .resonance import ResonanceConfig, cluster_peaks, nv_nv_resonances, resonance_table
from .spin import ON_AXIS, orientation

DYNAMICS_VARIANTS = ("matched-off", "matched-on", "unmatched-off", "unmatched-on")


class Diagnostics:
    """Collects per-row failures; any entry turns the exit status to 1."""

    def __init__(self):
        self.items: list[str] = []

    def add(self, msg: str):
        self.items.append(msg)
        print(f"diagnostic: {msg}", file=sys.stderr)

    @property
    def status(self) -> int:
        return 1 if self.items else 0


def _fmt_label(label) -> str:
    if isinstance(label, (int, np.integer)):
        return f"level{int(label)}"
    return ";".join(f"{x:+g}" if x else "0" for x in label)


def _overrides(args, mapping) -> dict:
    out = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    for attr, key in mapping.items():
        v = getattr(args, attr, None)
        if v is not None:
            out[key] = v if isinstance(v, str) else repr(v) if isinstance(v, float) else str(v)
    return out


def _config(args, mapping=None):
    return load_config(args.config, _overrides(args, mapping or {}))


def _output(args, cfg):
    return args.output if args.output is not None else cfg.output


# ---------------------------------------------------------------- levels

def cmd_levels(args) -> int:
    cfg = _config(args, {"bmin": "B_min", "bmax": "B_max", "step": "B_step"})
    systems = ["nv", "p1"] if args.system == "both" else [args.system]
    kinds = args.orientation or ["on"]
    blocks = []
    for system in systems:
        for kind in kinds:
            sw = level_sweep(system, (cfg.B_min, cfg.B_max), step=cfg.B_step, orientation=orientation(kind),
                             params=cfg.nv if system == "nv" else cfg.p1, electron_only=args.electron_only)
            prefix = f"{system}-{kind}:" if len(systems) * len(kinds) > 1 else ""
            names = [f"{prefix}E[{_fmt_label(t)}]" for t in sw.labels]
            blocks.append((sw, names))
    header = ["B_mT"] + [n for _, names in blocks for n in names]
    fields_ = blocks[0][0].fields
    data = np.column_stack([fields_] + [sw.energies for sw, _ in blocks])
    meta = {"command": "levels", "systems": ",".join(systems), "sweep_orientations": ",".join(kinds),
            "electron_only": args.electron_only, **cfg.echo()}
    write_csv(_output(args, cfg), header, data.tolist(), meta)
    return 0


# ------------------------------------------------------------ resonances

def _resonance_rows(matches, clusters):
    peak_of = {}
    for c in clusters:
        for m in c.members:
            peak_of[id(m)] = c.peak_id
    rows = []
    for m in matches:
        mi = m.nv_line.from_label[1] if len(m.nv_line.from_label) > 1 else None
        lines = transition_table("nv", m.B_star, ON_AXIS)
        if mi is None:
            lines = transition_table("nv", m.B_star, ON_AXIS, electron_only=True)
        up = [ln.frequency for ln in lines if ln.to_label[0] == 1.0 and (mi is None or ln.to_label[1] == mi)]
        down = [ln.frequency for ln in lines if ln.to_label[0] == -1.0 and (mi is None or ln.to_label[1] == mi)]
        rows.append([m.B_star, peak_of.get(id(m), ""), m.orientation, _fmt_label(m.nv_line.from_label),
                     _fmt_label(m.nv_line.to_label), _fmt_label(m.p1_line.from_label),
                     _fmt_label(m.p1_line.to_label), "" if m.delta_m is None else m.delta_m,
                     "" if m.flagged is None else m.flagged, m.weight, m.residual,
                     down[0] if down else float("nan"), up[0] if up else float("nan")])
    return rows


RESONANCE_HEADER = ["B_star_mT", "peak_id", "orientation", "nv_from", "nv_to", "p1_from", "p1_to",
                    "delta_m", "flagged", "weight", "residual_MHz", "f_0to-1_MHz", "f_0to+1_MHz"]


def _peak_boxes(clusters, out):
    """One box per peak: each (orientation, partner line) entry with the mean of its NV triplet."""
    for c in clusters:
        print(f"[{c.peak_id}]  mean {c.mean_B:.3f} mT  multiplicity {c.multiplicity:g}", file=out)
        groups: dict = {}
        for m in c.members:
            groups.setdefault((m.orientation, m.p1_line.from_label, m.p1_line.to_label), []).append(m)
        for (kind, a, b), ms in groups.items():
            fields_ = "  ".join(f"{m.B_star:.3f}{'*' if m.flagged else ' '}" for m in ms)
            mean = np.mean([m.B_star for m in ms])
            print(f"   {kind:<3} {_fmt_label(a):>8} -> {_fmt_label(b):<8}  {fields_}   mean {mean:.3f}", file=out)


def cmd_resonances(args) -> int:
    cfg = _config(args, {"step": "scan_step", "tol": "cluster_tol"})
    window = tuple(args.window) if args.window else (cfg.window_min, cfg.window_max)
    diag = Diagnostics()
    out = _output(args, cfg)
    summary = sys.stderr if out in (None, "-") else sys.stdout
    try:
        if args.nv_vs_nv:
            w = tuple(args.window) if args.window else (55.0, 65.0)
            matches = nv_nv_resonances(w, step=args.step or 0.01, params=cfg.nv)
            clusters = []
        else:
            rc = ResonanceConfig(window=window, scan_step=cfg.scan_step, orientations=cfg.orientations,
                                 electron_only=args.electron_only, nv_params=cfg.nv, p1_params=cfg.p1)
            diag_list: list = []
            matches = resonance_table(rc, diag_list)
            for d in diag_list:
                diag.add(d)
            with warnings.catch_warnings():
                # fewer than nine peaks is expected for reduced runs; ids fall back to X1, X2, ...
                warnings.simplefilter("ignore")
                clusters = cluster_peaks(matches, cfg.cluster_tol) if matches else []
    except (ConvergenceError, ValueError) as exc:
        diag.add(str(exc))
        return diag.status
    meta = {"command": "resonances", "window_mT": f"{window[0]}..{window[1]}",
            "electron_only": args.electron_only, "nv_vs_nv": args.nv_vs_nv, **cfg.echo()}
    write_csv(out, RESONANCE_HEADER, _resonance_rows(matches, clusters), meta)
    if clusters and args.table:
        _peak_boxes(clusters, summary)
    elif clusters:
        print("peak  mean_B_mT  members  multiplicity  orientations  flagged", file=summary)
        for c in clusters:
            print(f"{c.peak_id:<5} {c.mean_B:9.4f}  {c.size:7d}  {c.multiplicity:12g}  "
                  f"{','.join(sorted(c.orientations)):<12}  {c.flagged_count:7d}", file=summary)
    else:
        for m in matches:
            print(f"match at {m.B_star:.4f} mT ({m.orientation}-axis partner)", file=summary)
    return diag.status


# -------------------------------------------------------------- dynamics

def _run_variant(variant: str, cfg, times):
    matched, drive = variant.split("-")
    Bz = matched_field(cfg.nv, cfg.p1) + (0.0 if matched == "matched" else cfg.detuning_field)
    g = DipoleGeometry(coupling=cfg.coupling)
    omega = abs(cfg.nv.D - cfg.nv.gamma_e * Bz)
    rabi = cfg.rabi if drive == "on" else 0.0
    d = DriveParams(omega, rabi, rabi)
    rf = rotating_frame(total_hamiltonian(Bz, g, cfg.nv, cfg.p1), d, cfg.cutoff)
    return Bz, d, rf, evolve(initial_state(), rf.H, times)


def cmd_dynamics(args) -> int:
    cfg = _config(args, {"coupling": "coupling", "rabi": "rabi", "cutoff": "cutoff", "t_max": "t_max",
                         "n_times": "n_times"})
    variants = args.variant or ["matched-off", "matched-on"]
    out = _output(args, cfg)
    if out in (None, "-") and (len(variants) > 1 or args.matrix_dump):
        raise ConfigError("several outputs requested; give a directory with -o")
    times = np.linspace(0.0, cfg.t_max, cfg.n_times)
    for v in variants:
        Bz, d, rf, res = _run_variant(v, cfg, times)
        meta = {"command": "dynamics", "variant": v, "Bz_mT": Bz, "omega_MHz": d.omega,
                "Omega1_MHz": d.Omega1, "Omega2_MHz": d.Omega2, **cfg.echo()}
        target = out if out in (None, "-") else Path(out) / f"dynamics_{v}.csv"
        write_csv(target, ["time_us", "p1_polarization"], np.column_stack([res.times, res.p1_polarization]).tolist(),
                  meta)
        if args.matrix_dump:
            names = [_fmt_label(lab) for lab in PAIR_LABELS]
            rows = [[names[i]] + list(np.abs(rf.H[i])) for i in range(len(names))]
            write_csv(Path(out) / f"matrix_{v}.csv", ["state"] + names, rows, meta)
    return 0


# ------------------------------------------------------- spectrum / fit

def cmd_spectrum(args) -> int:
    cfg = _config(args, {"branch": "branch"})
    field = args.field
    lines = [ln for ln in transition_table("nv", field, ON_AXIS, params=cfg.nv) if ln.to_label[0] == cfg.branch]
    lines.sort(key=lambda ln: ln.frequency)
    center = args.center if args.center is not None else lines[1].frequency
    spacing = (lines[-1].frequency - lines[0].frequency) / 2
    half = 2 * spacing + 10 * args.width
    grid = np.linspace(center - half, center + half, args.points)
    s = synthesize_spectrum(center, spacing, args.width, args.amplitudes, args.baseline, grid)
    y = s.signal
    if args.noise:
        rng = np.random.default_rng(args.seed)
        y = y + rng.uniform(-args.noise, args.noise, y.size)
    meta = {"command": "spectrum", "field_mT": field, "center_MHz": center, "spacing_MHz": spacing,
            "width_MHz": args.width, "amplitudes": ",".join("%.17g" % a for a in args.amplitudes),
            "baseline": args.baseline, "noise": args.noise, "seed": args.seed, **cfg.echo()}
    write_csv(_output(args, cfg), ["frequency_MHz", "signal"], np.column_stack([grid, y]).tolist(), meta)
    return 0


def _spectrum_files(paths):
    out = []
    for p in map(Path, paths):
        out += sorted(p.glob("*.csv")) if p.is_dir() else [p]
    return out


def cmd_fit(args) -> int:
    cfg = _config(args, {"spacing_mode": "spacing_mode", "branch": "branch"})
    diag = Diagnostics()
    rows = []
    for path in _spectrum_files(args.inputs):
        try:
            meta, f, y = read_spectrum(path)
        except (CsvFormatError, OSError) as exc:
            diag.add(str(exc))
            continue
        field = args.field if args.field is not None else meta.get("field_mT")
        field = None if field is None else float(field)
        if cfg.spacing_mode == "fixed" and field is None:
            diag.add(f"{path}: fixed spacing needs a field (field_mT header or --field)")
            continue
        try:
            fit = fit_triple_lorentzian(OdmrSpectrum(f, y), field=field if cfg.spacing_mode == "fixed" else None,
                                        branch=cfg.branch)
        except (FitError, ValueError) as exc:
            diag.add(f"{path}: {exc}")
            continue
        rows.append([np.nan if field is None else field, fit.contrast, fit.width, fit.center, fit.residual_norm])
    rows.sort(key=lambda r: (np.isnan(r[0]), r[0]))
    meta = {"command": "fit", "inputs": len(rows), **cfg.echo()}
    write_csv(_output(args, cfg), ["B_mT", "contrast", "width_MHz", "center_MHz", "residual"], rows, meta)
    return diag.status


def cmd_sweep_fit(args) -> int:
    cfg = _config(args, {"tol": "cluster_tol"})
    diag = Diagnostics()
    try:
        _, header, data = read_csv(args.input)
    except (CsvFormatError, OSError) as exc:
        diag.add(str(exc))
        return diag.status
    col = header.index(args.column) if args.column else 1
    if args.centers:
        centers = list(args.centers)
    else:
        rc = ResonanceConfig(window=(cfg.window_min, cfg.window_max), scan_step=cfg.scan_step,
                             orientations=cfg.orientations, nv_params=cfg.nv, p1_params=cfg.p1)
        centers = [c.mean_B for c in cluster_peaks(resonance_table(rc), cfg.cluster_tol)]
    lo, hi = data[:, 0].min(), data[:, 0].max()
    centers = [c for c in centers if lo <= c <= hi]
    if not centers:
        diag.add("no peak centers inside the data range")
        return diag.status
    try:
        fit = fit_peak_profile(np.column_stack([data[:, 0], data[:, col]]), len(centers), centers,
                               freeze_centers=args.freeze)
    except (FitError, ValueError) as exc:
        diag.add(str(exc))
        return diag.status
    rows = [[i, c, w, a] for i, (c, w, a) in enumerate(zip(fit.centers, fit.fwhm, fit.amplitudes))]
    meta = {"command": "sweep-fit", "column": header[col], "freeze_centers": args.freeze,
            "baseline": fit.baseline, "residual": fit.residual_norm, **cfg.echo()}
    write_csv(_output(args, cfg), ["peak", "center_mT", "fwhm_mT", "amplitude"], rows, meta)
    return diag.status


def cmd_thermal(args) -> int:
    cfg = _config(args, {"temperature": "temperature"})
    value = thermal_polarization(args.field, cfg.temperature, cfg.p1.gamma_e)
    print(f"thermal_polarization({args.field:g} mT, {cfg.temperature:g} K) = {value:.6e}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable); keys: " + ", ".join(config_keys()))
    common.add_argument("-o", "--output", help="output file, directory (dynamics) or '-' for stdout")

    p = argparse.ArgumentParser(prog="crossrelax", description="NV-P1 cross-relaxation toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("levels", parents=[common], help="energy levels versus field")
    s.add_argument("--system", choices=("nv", "p1", "both"), default="nv")
    s.add_argument("--orientation", choices=("on", "off"), action="append")
    s.add_argument("--bmin", type=float)
    s.add_argument("--bmax", type=float)
    s.add_argument("--step", type=float)
    s.add_argument("--electron-only", action="store_true")
    s.set_defaults(func=cmd_levels)

    s = sub.add_parser("resonances", parents=[common], help="NV-P1 (or NV-NV) resonance table and peaks")
    s.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"))
    s.add_argument("--step", type=float, help="grid-scan step in mT")
    s.add_argument("--tol", type=float, help="peak clustering tolerance in mT")
    s.add_argument("--electron-only", action="store_true")
    s.add_argument("--nv-vs-nv", action="store_true", help="match on-axis against off-axis NV centers")
    s.add_argument("--table", action="store_true",
                   help="print per-peak boxes (fields of each NV hyperfine triplet, * marks |delta m| <= 2)")
    s.set_defaults(func=cmd_resonances)

    s = sub.add_parser("dynamics", parents=[common], help="P1 polarization transfer trajectories")
    s.add_argument("--variant", choices=DYNAMICS_VARIANTS, action="append")
    s.add_argument("--coupling", type=float)
    s.add_argument("--rabi", type=float)
    s.add_argument("--cutoff", type=float)
    s.add_argument("--t-max", type=float)
    s.add_argument("--n-times", type=int)
    s.add_argument("--matrix-dump", action="store_true", help="also write |H_eff| grids")
    s.set_defaults(func=cmd_dynamics)

    s = sub.add_parser("spectrum", parents=[common], help="synthesize an ODMR hyperfine triplet")
    s.add_argument("--field", type=float, default=51.2)
    s.add_argument("--branch", type=int, choices=(-1, 1))
    s.add_argument("--center", type=float)
    s.add_argument("--width", type=float, default=1.0)
    s.add_argument("--amplitudes", type=float, nargs=3, default=[0.03, 0.04, 0.03])
    s.add_argument("--baseline", type=float, default=1.0)
    s.add_argument("--points", type=int, default=801)
    s.add_argument("--noise", type=float, default=0.0, help="uniform noise half-range")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("fit", parents=[common], help="triple-Lorentzian fit of spectrum files or directories")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--field", type=float, help="field for the hyperfine spacing (overrides file headers)")
    s.add_argument("--spacing-mode", choices=("fixed", "free"))
    s.add_argument("--branch", type=int, choices=(-1, 1))
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("sweep-fit", parents=[common], help="Lorentzian peak fit of a value-versus-field table")
    s.add_argument("input")
    s.add_argument("--column", help="value column name (default: second column)")
    s.add_argument("--centers", type=float, nargs="+", help="starting centers (default: resonance peaks)")
    s.add_argument("--freeze", action="store_true", help="hold centers at their starting values")
    s.add_argument("--tol", type=float)
    s.set_defaults(func=cmd_sweep_fit)

    s = sub.add_parser("thermal", parents=[common], help="Boltzmann P1 polarization")
    s.add_argument("--field", type=float, default=51.2)
    s.add_argument("--temperature", type=float)
    s.set_defaults(func=cmd_thermal)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"crossrelax: configuration error: {exc}", file=sys.stderr)
        return 2
    except (CsvFormatError, FitError, ConvergenceError) as exc:
        print(f"crossrelax: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
