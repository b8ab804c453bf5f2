"""Command-line front end: run simulations and emit CSV/JSON data files.

Output is data only (no plotting): occupation curves, sample trajectories,
waiting-time curves and a run manifest that reproduces the run bit for bit.
All times are in units of the inverse Lorentzian width and all rates in
units of the width itself.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .ensemble import ensemble_average, estimate_wtd, run_stepwise, \
    run_wtd_based
from .jump_process import DivergenceError
from .master_equation import analytic_history, integrate_tcl
from .systems import PRESET_NAMES, load_model_file, preset
from .wtd import sample_waiting_time, wtd_solve, write_curve_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DIVERGENCE = 2


@dataclass
class RunConfig:
    preset: str | None = None
    model_file: str | None = None
    mode: str = "stepwise"  # stepwise | wtd | master-eq | compare
    t0: float = 0.0
    tend: float = 5.0
    dt: float = 1e-3
    samples: int | None = None
    seed: int = 0
    ensemble_mode: str = "analytic-p"  # analytic-p | self-consistent
    threads: int = 1
    out: str = "out"

    def validate(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.tend <= self.t0:
            raise ValueError("tend must exceed t0")
        if self.samples is not None and self.samples < 1:
            raise ValueError("samples must be >= 1")
        if not self.preset and not self.model_file:
            raise ValueError("either --preset or --model-file is required")
        if self.mode not in ("stepwise", "wtd", "master-eq", "compare"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def content_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _resolve_model(config: RunConfig):
    if config.preset:
        p = preset(config.preset)
        n_samples = config.samples if config.samples else p.n_samples
        return p.model, n_samples
    model = load_model_file(config.model_file)
    return model, config.samples or 1000


def _write_occupations(path, matrix):
    counts = matrix.label_counts
    cols = ",".join(f"N_{a}" for a in range(matrix.n_labels))
    with open(path, "w") as fh:
        fh.write(f"t,{cols}\n")
        for t, row in zip(matrix.times, counts):
            vals = ",".join(str(int(v)) for v in row)
            fh.write(f"{t:.17g},{vals}\n")


def _write_master_eq(path, sol):
    d = sol.rhos.shape[1]
    names = []
    for i in range(d):
        for j in range(d):
            names += [f"re_rho_{i}{j}", f"im_rho_{i}{j}"]
    with open(path, "w") as fh:
        fh.write("t," + ",".join(names) + ",trace_err,min_eig\n")
        for n, t in enumerate(sol.times):
            parts = [f"{t:.17g}"]
            for i in range(d):
                for j in range(d):
                    parts.append(f"{sol.rhos[n, i, j].real:.17g}")
                    parts.append(f"{sol.rhos[n, i, j].imag:.17g}")
            parts.append(f"{sol.trace_error[n]:.17g}")
            parts.append(f"{sol.min_eigenvalue[n]:.17g}")
            fh.write(",".join(parts) + "\n")


def _write_manifest(outdir: Path, config: RunConfig, outputs: list[str]):
    manifest = {
        "config": asdict(config),
        "config_hash": config.content_hash(),
        "outputs": sorted(outputs),
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_simulate(config: RunConfig) -> int:
    config.validate()
    model, n_samples = _resolve_model(config)
    outdir = Path(config.out)
    outdir.mkdir(parents=True, exist_ok=True)
    window = (config.t0, config.tend)
    outputs = []

    if config.mode == "master-eq":
        rho0 = np.outer(model.initial_state().amplitudes,
                        model.initial_state().amplitudes.conj())
        sol = integrate_tcl(model, rho0, window=window, step=config.dt)
        _write_master_eq(outdir / "master_equation.csv", sol)
        outputs.append("master_equation.csv")
        _write_manifest(outdir, config, outputs)
        return EXIT_OK

    if config.mode == "wtd":
        result = run_wtd_based(model, n_samples, window=window, dt=config.dt,
                               seed=config.seed, threads=config.threads)
    else:
        result = run_stepwise(model, n_samples, window=window, dt=config.dt,
                              seed=config.seed, mode=config.ensemble_mode,
                              threads=config.threads)
    matrix = result.matrix

    _write_occupations(outdir / "occupations.csv", matrix)
    outputs.append("occupations.csv")
    n_show = min(3, matrix.n_samples)
    matrix.export_csv(outdir / "trajectories.csv",
                      trajectories=range(n_show),
                      header={"dt": config.dt, "mode": config.mode})
    outputs.append("trajectories.csv")

    if config.mode == "compare":
        rho_hat = ensemble_average(matrix, result.history)
        rho0 = rho_hat[0]
        sol = integrate_tcl(model, rho0, window=window, step=config.dt)
        diff = np.max(np.abs(rho_hat - sol.rhos), axis=(1, 2))
        with open(outdir / "comparison.csv", "w") as fh:
            fh.write("t,max_abs_diff\n")
            for t, v in zip(matrix.times, diff):
                fh.write(f"{t:.17g},{v:.17g}\n")
        outputs.append("comparison.csv")

    _write_manifest(outdir, config, outputs)
    return EXIT_OK


def cmd_wtd(config: RunConfig, trajectory: dict, etas=None) -> int:
    """Waiting-time curves (analytic and empirical) for a trajectory spec.

    The spec lists the jump times and post-jump labels of one realization:
    {"jumps": [[time, label], ...]}. For each deterministic segment the
    analytic curve and the matching cohort estimate are written.
    """
    config.validate()
    model, n_samples = _resolve_model(config)
    outdir = Path(config.out)
    outdir.mkdir(parents=True, exist_ok=True)
    window = (config.t0, config.tend)
    outputs = []

    history = analytic_history(model, window=window, step=config.dt)
    run = run_stepwise(model, n_samples, window=window, dt=config.dt,
                       seed=config.seed, mode=config.ensemble_mode,
                       history=history, threads=config.threads)
    matrix = run.matrix

    jumps = [(float(t), int(lab)) for t, lab in trajectory.get("jumps", [])]
    segments = []
    t_prev, lab_prev = config.t0, int(trajectory.get("initial_label", 0))
    for t_jump, lab in jumps:
        if not config.t0 <= t_jump <= config.tend:
            raise ValueError(f"jump time {t_jump} outside window")
        segments.append((t_prev, t_jump, lab_prev))
        # consistency with the declared channel adjacency
        targets = {tg for ch in model.channels
                   for s, tg in ch.positive_map.items() if s == lab_prev}
        sources = {s for ch in model.channels
                   for s, tg in ch.positive_map.items() if tg == lab_prev}
        if lab not in targets | sources:
            raise ValueError(
                f"jump {lab_prev} -> {lab} not allowed by the channel "
                "topology"
            )
        t_prev, lab_prev = t_jump, lab
    segments.append((t_prev, config.tend, lab_prev))

    eta_rows = []
    for n_seg, (t_a, t_b, lab) in enumerate(segments):
        t_a_g = history.times[history.index_of(t_a)]
        t_b_g = history.times[history.index_of(t_b)]
        if t_b_g <= t_a_g:
            continue
        curve = wtd_solve(model, history, lab, t_a_g, t_b_g - t_a_g)
        name = f"wtd_segment{n_seg}_label{lab}.csv"
        write_curve_csv(curve, outdir / name,
                        params={"T": t_a_g, "mode": "analytic"})
        outputs.append(name)

        i_a = history.index_of(t_a_g)
        i_b = history.index_of(t_b_g)
        est = estimate_wtd(matrix, lab, i_a, i_b)
        name_e = f"wtd_segment{n_seg}_label{lab}_empirical.csv"
        with open(outdir / name_e, "w") as fh:
            fh.write(f"# source_label={lab} T={float(t_a_g):.17g} "
                     f"cohort={est.cohort_size}\n")
            fh.write("tau,W\n")
            for t, w in zip(est.times - est.times[0], est.wtd):
                fh.write(f"{t:.17g},{w:.17g}\n")
        outputs.append(name_e)

        if etas:
            for eta in etas:
                tau_star = sample_waiting_time(curve, float(eta))
                eta_rows.append((n_seg, lab, float(eta),
                                 "" if tau_star is None else tau_star))

    if eta_rows:
        with open(outdir / "sampled_waiting_times.csv", "w") as fh:
            fh.write("segment,label,eta,tau_star\n")
            for seg, lab, eta, tau in eta_rows:
                tau_s = f"{tau:.17g}" if tau != "" else "no-jump"
                fh.write(f"{seg},{lab},{eta:.17g},{tau_s}\n")
        outputs.append("sampled_waiting_times.csv")

    _write_manifest(outdir, config, outputs)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # exit code 1 (not argparse's default 2) on usage errors; 2 is
    # reserved for physical-divergence diagnostics
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="nmqj", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--preset", choices=PRESET_NAMES)
        p.add_argument("--model-file")
        p.add_argument("--mode", default="stepwise",
                       choices=["stepwise", "wtd", "master-eq", "compare"])
        p.add_argument("--t0", type=float, default=0.0)
        p.add_argument("--tend", type=float, default=5.0)
        p.add_argument("--dt", type=float, default=1e-3)
        p.add_argument("--samples", type=int)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--ensemble-mode", default="analytic-p",
                       choices=["analytic-p", "self-consistent"])
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", default="out")
        p.add_argument("--config", help="JSON config or manifest file; "
                       "overrides the flags above")

    p_sim = sub.add_parser("simulate", help="run a simulation")
    add_common(p_sim)

    p_wtd = sub.add_parser("wtd", help="waiting-time curves for a trajectory")
    add_common(p_wtd)
    p_wtd.add_argument("--trajectory", required=True,
                       help="inline JSON or @file: "
                       '{"jumps": [[time, label], ...]}')
    p_wtd.add_argument("--eta", type=float, action="append",
                       help="uniform variates to invert (repeatable)")
    return parser


def _config_from_args(args) -> RunConfig:
    config = RunConfig(
        preset=args.preset, model_file=args.model_file, mode=args.mode,
        t0=args.t0, tend=args.tend, dt=args.dt, samples=args.samples,
        seed=args.seed, ensemble_mode=args.ensemble_mode,
        threads=args.threads, out=args.out,
    )
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
        if "config" in data:  # manifest round-trip
            data = data["config"]
        for key, value in data.items():
            if not hasattr(config, key):
                raise ValueError(f"unknown config key {key!r}")
            setattr(config, key, value)
    return config


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
        if args.command == "simulate":
            return cmd_simulate(config)
        spec = args.trajectory
        if spec.startswith("@"):
            with open(spec[1:]) as fh:
                trajectory = json.load(fh)
        else:
            trajectory = json.loads(spec)
        return cmd_wtd(config, trajectory, etas=args.eta)
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
