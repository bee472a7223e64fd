"""Batch command-line front-end.

Subcommands map one-to-one onto the analysis pipelines: decay curves under
the six sequence variants, spectral-density sweeps, process tomography,
closed-form rate sweeps, and the UDD schedule printer.  All computation runs
first; files are then written single-threaded, with a manifest (config hash,
seed, per-file checksums, timings) last as the completion marker.

Exit codes: 0 success, 1 usage, 2 invalid config, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from ._fit import FitError
from .backends import set_jobs
from .config import (
    DECAY_SEQUENCES,
    QPT_SPECS,
    ConfigError,
    ExperimentConfig,
    config_hash,
    load_config,
    validate_config,
)
from .kicks import t2_of_kick_rate
from .qpt import (
    ProcessSpec,
    SingularSystemError,
    batch_sigma,
    process_tomography,
    s_context,
    validate_channel,
)
from .rng import derive_seed
from .sequences import DDParams, udd_times
from .spectroscopy import (
    AllPointsFailed,
    SpectralPoint,
    SpectralProfile,
    fit_gaussians,
    simulate_decay,
    subtract_baseline,
    sweep_spectrum,
)

#: environment variable naming the default output root
OUT_ENV_VAR = "SPINKICK_OUT"

#: below this the combined log table leaves the cell empty (log undefined)
LOG_FLOOR = 1e-12


class UsageError(Exception):
    """Bad invocation (flags, missing grids, empty selections)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ----------------------------------------------------------------------
# deterministic serialization helpers

def _g17(x) -> str:
    return format(float(x), ".17g")


def _csv_bytes(header, rows) -> bytes:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if v is None:
                cells.append("")
            elif isinstance(v, str):
                cells.append(v)
            else:
                cells.append(_g17(v))
        lines.append(",".join(cells))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


class OutputSet:
    """Collects output files in memory; writes them, then the manifest."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.files: dict[str, bytes] = {}

    def add(self, name: str, data: bytes):
        self.files[name] = data

    def write(self, cfg: ExperimentConfig, compute_seconds: float) -> list[str]:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        for name in sorted(self.files):
            (self.out_dir / name).write_bytes(self.files[name])
        write_seconds = time.perf_counter() - t0
        manifest = {
            "config_sha256": config_hash(cfg),
            "seed": cfg.seed,
            "version": __version__,
            "outputs": {
                name: hashlib.sha256(data).hexdigest()
                for name, data in self.files.items()
            },
            "timings_s": {
                "compute": round(compute_seconds, 6),
                "write": round(write_seconds, 6),
            },
        }
        (self.out_dir / "manifest.json").write_bytes(_json_bytes(manifest))
        return sorted(self.files) + ["manifest.json"]


def _curve_files(out: OutputSet, stem: str, curve, fmt: str, meta: dict):
    if fmt == "csv":
        rows = zip(curve.times, curve.m_x, curve.stderr)
        out.add(f"{stem}.csv", _csv_bytes(("time_s", "m_x", "stderr"), rows))
    else:
        out.add(
            f"{stem}.json",
            _json_bytes(
                {
                    "kind": "decay_curve",
                    **meta,
                    "time_s": list(curve.times),
                    "m_x": list(curve.m_x),
                    "stderr": list(curve.stderr),
                }
            ),
        )


def _profile_files(out: OutputSet, stem: str, prof: SpectralProfile, fmt: str):
    if fmt == "csv":
        rows = ((p.omega, p.s_value, p.stderr) for p in prof.points)
        out.add(f"{stem}.csv", _csv_bytes(("omega_rad_s", "S_per_s", "stderr"), rows))
    else:
        out.add(
            f"{stem}.json",
            _json_bytes(
                {
                    "kind": "spectral_profile",
                    "provenance": prof.provenance,
                    "omega_rad_s": list(prof.omegas),
                    "S_per_s": list(prof.s_values),
                    "stderr": list(prof.stderrs),
                    "tau_s": [p.tau for p in prof.points],
                    "gaps": prof.gaps,
                }
            ),
        )


# ----------------------------------------------------------------------
# commands

def cmd_decay(args, cfg: ExperimentConfig) -> int:
    requested = [s for s in DECAY_SEQUENCES if s in cfg.sequences]
    if not requested:
        raise UsageError("empty sequence list; set [run] sequences")
    t_c = cfg.resolved_cycle_time()
    if t_c is None:
        raise ConfigError("decay needs [dd] tau_ms or cycle_time_ms to set the cycle")
    spin = cfg.spin_system()
    relax = cfg.relaxation()

    curves = {}
    for name in requested:
        rank = DECAY_SEQUENCES.index(name)
        kind = name.split("+")[0] if name not in ("baseline", "kicks") else ""
        kp = None
        if name in ("kicks", "cpmg+kicks", "udd+kicks"):
            kp = cfg.kick_params(seed=derive_seed(cfg.seed, 0, rank))
            if kp is None:
                raise ConfigError(f"sequence {name!r} requires [kicks] enabled = true")
        curves[name] = simulate_decay(
            spin,
            cfg.dd_params(kind) if kind else None,
            kp,
            relax,
            n_cycles=cfg.n_cycles,
            n_traj=cfg.n_traj,
            t_c=t_c,
            backend=cfg.backend,
        )

    out = OutputSet(_out_dir(args, cfg))
    for name, curve in curves.items():
        stem = "decay_" + name.replace("+", "_")
        _curve_files(out, stem, curve, args.format, {"sequence": name})

    times = curves[requested[0]].times
    log_cols = {
        name: [float(np.log(m)) if m > LOG_FLOOR else None for m in c.m_x]
        for name, c in curves.items()
    }
    if args.format == "csv":
        header = ["time_s"] + [f"ln_mx_{n.replace('+', '_')}" for n in requested]
        rows = [
            [t] + [log_cols[n][i] for n in requested] for i, t in enumerate(times)
        ]
        out.add("decay_log.csv", _csv_bytes(header, rows))
    else:
        out.add(
            "decay_log.json",
            _json_bytes(
                {"kind": "log_table", "time_s": list(times), "ln_mx": log_cols}
            ),
        )
    written = out.write(cfg, args._compute_timer())
    print(f"decay: wrote {len(written)} files to {out.out_dir}")
    return 0


def _zero_baseline(tau_grid) -> SpectralProfile:
    """Exact baseline when nothing decays without kicks: S = 0 everywhere."""
    pts = [
        SpectralPoint(float(np.pi / t), 0.0, "baseline", 0.0, float(t))
        for t in sorted(tau_grid, reverse=True)
    ]
    return SpectralProfile(pts, "baseline")


def cmd_spectrum(args, cfg: ExperimentConfig) -> int:
    if not cfg.tau_grid_ms:
        raise UsageError("empty tau grid; set [sweep] tau_grid_ms")
    if not cfg.kicks_enabled:
        raise ConfigError("spectrum needs [kicks] enabled = true")
    if cfg.fit_components and len(cfg.tau_grid_ms) < 3 * cfg.fit_components + 2:
        raise UsageError(
            f"{cfg.fit_components}-component Gaussian fit needs at least "
            f"{3 * cfg.fit_components + 2} tau points"
        )
    tau_grid = cfg.tau_grid()
    kind = cfg.dd_kind or "cpmg"
    spin = cfg.spin_system()
    relax = cfg.relaxation()
    thetas = cfg.theta_grid_deg or (cfg.theta_deg,)
    rates = cfg.rate_grid_kicks_per_ms or (cfg.rate_kicks_per_ms,)

    if relax is not None:
        baseline = sweep_spectrum(
            spin,
            None,
            tau_grid,
            n_pulses=cfg.n_pulses,
            dd_kind=kind,
            n_cycles=cfg.n_cycles,
            n_traj=1,
            relax=relax,
            provenance="baseline",
            backend=cfg.backend,
        )
    else:
        baseline = _zero_baseline(tau_grid)

    out = OutputSet(_out_dir(args, cfg))
    _profile_files(out, "spectrum_baseline", baseline, args.format)
    index = 0
    for rate in rates:
        for theta in thetas:
            kp = cfg.kick_params(
                seed=cfg.seed, theta_deg=theta, rate_kicks_per_ms=rate
            )
            total = sweep_spectrum(
                spin,
                kp,
                tau_grid,
                n_pulses=cfg.n_pulses,
                dd_kind=kind,
                n_cycles=cfg.n_cycles,
                n_traj=cfg.n_traj,
                relax=relax,
                provenance="total",
                profile_index=index,
                backend=cfg.backend,
            )
            kicks_only = subtract_baseline(total, baseline)
            tag = f"th{theta:g}_r{rate:g}"
            _profile_files(out, f"spectrum_total_{tag}", total, args.format)
            _profile_files(out, f"spectrum_kicks_only_{tag}", kicks_only, args.format)
            if cfg.fit_components:
                gf = fit_gaussians(kicks_only, cfg.fit_components)
                out.add(
                    f"gaussian_fit_{tag}.json",
                    _json_bytes(
                        {
                            "kind": "gaussian_fit",
                            "components": [list(c) for c in gf.components],
                            "residual_norm": gf.residual_norm,
                            "converged": gf.converged,
                        }
                    ),
                )
            index += 1
    written = out.write(cfg, args._compute_timer())
    print(f"spectrum: wrote {len(written)} files to {out.out_dir}")
    return 0


def _qpt_spec(cfg: ExperimentConfig, label: str, t_c: float) -> ProcessSpec:
    rank = QPT_SPECS.index(label)
    spin = cfg.spin_system()
    relax = cfg.relaxation()
    kp = None
    if label in ("k", "c+k", "u+k"):
        kp = cfg.kick_params(seed=derive_seed(cfg.seed, 2, rank))
        if kp is None:
            raise ConfigError(f"qpt spec {label!r} requires [kicks] enabled = true")
    if label == "noop":
        # the reference: a bare echo over the same duration, nothing applied
        dd = DDParams(
            kind="cpmg", n_pulses=1, cycle_time=t_c, angle_error=cfg.angle_error
        )
    elif label == "k":
        dd = None
    else:
        dd = cfg.dd_params({"c": "cpmg", "u": "udd"}[label.split("+")[0]])
    n_traj = cfg.n_traj if kp is not None else 1
    return ProcessSpec(
        label=label,
        sys=spin,
        dd=dd,
        kicks=kp,
        relax=relax,
        t_c=t_c if dd is None else None,
        n_traj=n_traj,
        backend=cfg.backend,
    )


def cmd_qpt(args, cfg: ExperimentConfig) -> int:
    requested = [s for s in QPT_SPECS if s in cfg.qpt_specs]
    if not requested:
        raise UsageError("empty qpt spec list; set [run] qpt_specs")
    t_c = cfg.resolved_cycle_time()
    if t_c is None:
        raise ConfigError("qpt needs [dd] tau_ms or cycle_time_ms to set the duration")

    out = OutputSet(_out_dir(args, cfg))
    table = []
    for label in requested:
        spec = _qpt_spec(cfg, label, t_c)
        chi, batches = process_tomography(spec)
        sigma = batch_sigma(batches, "Z", "Z")
        s_ctx = s_context(spec)
        diag = validate_channel(chi)
        stem = "chi_" + label.replace("+", "_")
        out.add(
            f"{stem}.json",
            _json_bytes(
                {
                    "kind": "chi_matrix",
                    "label": label,
                    "chi": chi.to_jsonable(),
                    "chi_zz_abs": abs(chi.element("Z", "Z")),
                    "sigma_zz": sigma,
                    "S_per_s": s_ctx,
                    "diagnostics": {
                        "hermiticity_defect": diag.hermiticity_defect,
                        "min_eigenvalue": diag.min_eigenvalue,
                        "trace_preservation_defect": diag.trace_preservation_defect,
                        "physical": diag.physical,
                    },
                }
            ),
        )
        table.append((label, abs(chi.element("Z", "Z")), sigma, s_ctx))

    if args.format == "csv":
        out.add(
            "chi_zz_table.csv",
            _csv_bytes(("spec", "chi_zz_abs", "sigma", "S_per_s"), table),
        )
    else:
        out.add(
            "chi_zz_table.json",
            _json_bytes(
                {
                    "kind": "chi_zz_table",
                    "rows": [
                        {
                            "spec": s,
                            "chi_zz_abs": v,
                            "sigma": sg,
                            "S_per_s": sc,
                        }
                        for s, v, sg, sc in table
                    ],
                }
            ),
        )
    written = out.write(cfg, args._compute_timer())
    print(f"qpt: wrote {len(written)} files to {out.out_dir}")
    return 0


def cmd_rate_sweep(args, cfg: ExperimentConfig) -> int:
    if len(cfg.rate_grid_kicks_per_ms) < 5:
        raise UsageError(
            "rate sweep needs >= 5 grid points in [sweep] rate_grid_kicks_per_ms"
        )
    spin = cfg.spin_system()
    theta = float(np.deg2rad(cfg.theta_deg))
    points = t2_of_kick_rate(spin, theta, cfg.rate_grid())
    if not any(p.status == "ok" for p in points):
        raise AllPointsFailed(
            "no kick rate produced a decay fit",
            [{"gamma_rate": p.gamma_rate, "reason": p.status} for p in points],
        )
    rows = [
        (
            p.gamma_rate / 1e3,
            p.rate if p.status == "ok" else None,
            p.status,
        )
        for p in points
    ]
    out = OutputSet(_out_dir(args, cfg))
    if args.format == "csv":
        out.add(
            "rate_sweep.csv",
            _csv_bytes(("gamma_kicks_per_ms", "inv_t2_per_s", "status"), rows),
        )
    else:
        out.add(
            "rate_sweep.json",
            _json_bytes(
                {
                    "kind": "rate_sweep",
                    "rows": [
                        {"gamma_kicks_per_ms": g, "inv_t2_per_s": r, "status": s}
                        for g, r, s in rows
                    ],
                }
            ),
        )
    written = out.write(cfg, args._compute_timer())
    print(f"rate-sweep: wrote {len(written)} files to {out.out_dir}")
    return 0


def cmd_udd_times(args, cfg: ExperimentConfig) -> int:
    if args.n < 1:
        raise UsageError(f"N must be >= 1, got {args.n}")
    if not args.t_c_ms > 0:
        raise UsageError(f"t_c must be positive, got {args.t_c_ms}")
    # N pulse instants plus the cycle end t_c, which is the j = N+1 value of
    # the same sine-squared schedule
    row = list(udd_times(args.n, args.t_c_ms)) + [args.t_c_ms]
    print(" ".join(_g17(v) for v in row))
    return 0


# ----------------------------------------------------------------------
# wiring

def _out_dir(args, cfg: ExperimentConfig) -> str:
    if args.out:
        return args.out
    if cfg.out_dir:
        return cfg.out_dir
    return os.path.join(os.environ.get(OUT_ENV_VAR, "."), "spinkick-out")


def _load_config(args) -> ExperimentConfig:
    if args.config:
        try:
            cfg = load_config(args.config)
        except OSError as err:
            raise ConfigError(f"cannot read config {args.config!r}: {err}") from err
    else:
        cfg = ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    validate_config(cfg)
    return cfg


def build_parser() -> _Parser:
    parser = _Parser(
        prog="spinkick",
        description="Kick-engineered decoherence: decay curves, noise "
        "spectroscopy, and process tomography for a two-qubit register.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="experiment config file")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument(
        "--jobs", type=int, help="worker threads for trajectory ensembles"
    )
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument(
        "--format", choices=("csv", "json"), default="csv", help="table format"
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, fn, text in (
        ("decay", cmd_decay, "magnetization decay curves per sequence"),
        ("spectrum", cmd_spectrum, "noise spectral density profiles"),
        ("qpt", cmd_qpt, "process tomography chi matrices"),
        ("rate-sweep", cmd_rate_sweep, "closed-form 1/T2 versus kick rate"),
        ("udd-times", cmd_udd_times, "print a UDD pulse schedule"),
    ):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.set_defaults(func=fn)
    sp_udd = sub.choices["udd-times"]
    sp_udd.add_argument("n", type=int, help="pulse count N")
    sp_udd.add_argument("t_c_ms", type=float, help="cycle time in ms")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    if args.jobs is not None:
        if args.jobs < 1:
            print("usage error: --jobs must be >= 1", file=sys.stderr)
            return 1
        set_jobs(args.jobs)
    try:
        cfg = _load_config(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    args._compute_timer = lambda: time.perf_counter() - t0
    try:
        return args.func(args, cfg)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (AllPointsFailed, FitError, SingularSystemError, np.linalg.LinAlgError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
