"""Experiment runner: every analysis as a reproducible command.

Each command writes one CSV table (with a '#' metadata preamble echoing the
full configuration and seed) and a PNG figure next to it.  Identical
(config, seed) pairs produce byte-identical outputs.

Exit codes: 0 success, 2 config error, 3 data/ingest error, 4 numerical
failure (e.g. an empty postselected ensemble).
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, figures
from .config import ConfigError, RunConfig, SweepGrid, TimeGrid, config_from_dict, load_config
from .dynamics import (
    build_effective_hamiltonian,
    build_three_level_model,
    conditional_ef_state,
    derive_seed,
    embed_ef_state,
    embed_ef_density,
    evolve_lindblad,
    evolve_lindblad_series,
    initial_ket,
    projector,
    propagate_nonhermitian,
    sample_jump_ensemble,
)
from .linearity import (
    MEASURED_IBU_ITERATIONS,
    linearity_scan,
    mixture_test_2level,
    mixture_test_3level,
    purify,
    renorm_ratio_series,
)
from .measurement import (
    BLOCH_SIGN_CONVENTION,
    ConfusionMatrix,
    IngestError,
    bloch_vector,
    default_confusion_matrix,
    ibu_correct,
    read_counts_csv,
    reconstruct_density,
    renormalize_subensemble,
    simulate_tomography,
)
from .qcore import PostselectionError, SystemParams
from .report import Section, SweepTable, write_csv
from .spectral import classify_regime, ep_coupling, fpt_sweep

COMMANDS = ("spectrum", "sweep", "fpt", "linearity", "mixture", "trajectories", "ingest")

_DEVICE = dict(gamma_e=0.91, gamma_f=0.057, Delta=0.0)


def default_config(command: str) -> RunConfig:
    """Built-in per-command defaults; a config file overrides field by field."""
    if command == "spectrum":
        return RunConfig(params=SystemParams(J=0.24, **_DEVICE), time=TimeGrid(),
                         sweep=SweepGrid(0.05, 0.5, 46))
    if command == "sweep":
        return RunConfig(params=SystemParams(J=0.24, **_DEVICE), time=TimeGrid(),
                         sweep=SweepGrid(0.05, 0.5, 10))
    if command == "fpt":
        return RunConfig(params=SystemParams(J=0.24, **_DEVICE),
                         time=TimeGrid(horizon=20.0), sweep=SweepGrid(0.05, 1.0, 20))
    if command == "linearity":
        return RunConfig(params=SystemParams(J=0.24, **_DEVICE), time=TimeGrid(),
                         sweep=SweepGrid(0.1, 1.0, 7))
    if command == "mixture":
        return RunConfig(params=SystemParams(J=0.5, **_DEVICE), time=TimeGrid(), sweep=None)
    if command == "trajectories":
        return RunConfig(params=SystemParams(J=0.24, **_DEVICE),
                         time=TimeGrid(record_dt=0.1), sweep=None)
    if command == "ingest":
        return RunConfig(params=SystemParams(J=0.24, **_DEVICE), time=TimeGrid(), sweep=None)
    raise ConfigError(f"unknown command {command!r}")


def _base_metadata(command: str, config: RunConfig) -> dict:
    return {
        "generator": f"nojump {__version__}",
        "command": command,
        "seed": config.seed,
        "mode": config.mode,
        "config": config.to_dict(),
    }


def _require_sweep(config: RunConfig) -> np.ndarray:
    if config.sweep is None:
        raise ConfigError("this command requires a 'sweep' J grid in the config")
    return config.sweep.values()


def _with_j(params: SystemParams, j: float) -> SystemParams:
    return SystemParams(gamma_e=params.gamma_e, gamma_f=params.gamma_f, J=float(j),
                        Delta=params.Delta)


def _clip_probability(x: float, tol: float = 1e-9) -> float:
    if x < -tol or x > 1.0 + tol:
        raise PostselectionError(f"probability {x} outside [0, 1] beyond tolerance")
    return min(max(x, 0.0), 1.0)


def run_spectrum(config: RunConfig) -> tuple[SweepTable, dict]:
    j_values = _require_sweep(config)
    rows, evals = [], []
    for j in j_values:
        report = classify_regime(_with_j(config.params, j))
        lam = sorted(report.eigenvalues, key=lambda z: (z.real, z.imag))
        rows.append((float(j), lam[0].real, lam[0].imag, lam[1].real, lam[1].imag,
                     report.eigenvector_overlap, report.regime.value))
        evals.append(lam)
    table = SweepTable(
        command="spectrum",
        columns=("J", "re_lambda1", "im_lambda1", "re_lambda2", "im_lambda2",
                 "eigenvector_overlap", "regime"),
        rows=rows,
        metadata=_base_metadata("spectrum", config),
    )
    payload = {"J": j_values, "eigenvalues": np.array(evals),
               "j_ep": ep_coupling(config.params)}
    return table, payload


def run_sweep(config: RunConfig) -> tuple[SweepTable, dict]:
    """Population transfer P(+z) before and after postselection, versus J and t."""
    j_values = _require_sweep(config)
    times = config.time.record_times()
    beta = default_confusion_matrix() if config.mode == "measured" else None
    rho0 = embed_ef_density(projector(initial_ket("e")))

    rows = []
    p_grid = np.empty((j_values.size, times.size))
    pn_grid = np.empty((j_values.size, times.size))
    stream = 0
    for a, j in enumerate(j_values):
        model = build_three_level_model(_with_j(config.params, j))
        rho3s = evolve_lindblad_series(rho0, model, times, dt=config.time.dt)
        for b, (t, rho3) in enumerate(zip(times, rho3s)):
            if beta is None:
                p = np.clip(np.diag(rho3).real, 0.0, None)
            else:
                rec = simulate_tomography(rho3, "z", beta, config.shots,
                                          seed=derive_seed(config.seed, stream))
                stream += 1
                p = ibu_correct(rec.frequencies(), beta, n_iter=MEASURED_IBU_ITERATIONS)
            plus, _minus, _success = renormalize_subensemble(p)
            p_z = _clip_probability(float(p[1]))
            pn_z = _clip_probability(float(plus))
            rows.append((float(j), float(t), p_z, pn_z))
            p_grid[a, b] = p_z
            pn_grid[a, b] = pn_z
    table = SweepTable(
        command="sweep",
        columns=("J", "t", "p_plus_z", "pn_plus_z"),
        rows=rows,
        metadata=_base_metadata("sweep", config),
    )
    payload = {"J": j_values, "times": times, "p_plus_z": p_grid, "pn_plus_z": pn_grid}
    return table, payload


def run_fpt(config: RunConfig) -> tuple[SweepTable, dict]:
    j_values = _require_sweep(config)
    if np.any(j_values <= 0):
        raise ConfigError("fpt sweep requires strictly positive J values")
    results = fpt_sweep(config.params, j_values, horizon=config.time.horizon,
                        dt=config.time.dt)
    rows = [(j, res.fpt, res.hermitian_reference) for j, res in results]
    table = SweepTable(
        command="fpt",
        columns=("J", "fpt", "hermitian_ref"),
        rows=rows,
        metadata=_base_metadata("fpt", config),
    )
    payload = {
        "J": j_values,
        "fpt": np.array([res.fpt if res.fpt is not None else np.nan for _, res in results]),
        "hermitian_ref": np.array([res.hermitian_reference for _, res in results]),
        "j_ep": ep_coupling(config.params),
    }
    return table, payload


def run_linearity(config: RunConfig) -> tuple[SweepTable, dict]:
    j_values = _require_sweep(config)
    times = config.time.record_times()
    beta = default_confusion_matrix() if config.mode == "measured" else None

    rows = []
    payload = {"times": times, "ofs": {"+x": [], "+y": []}, "ratio": []}
    for n, j in enumerate(j_values):
        params = _with_j(config.params, j)
        ratio, ratio_avg = renorm_ratio_series(params, times)
        payload["ratio"].append((float(j), ratio))
        for initial in ("+x", "+y"):
            scan = linearity_scan(params, initial, times, mode=config.mode, beta=beta,
                                  shots=config.shots, seed=derive_seed(config.seed, n))
            payload["ofs"][initial].append((float(j), scan.ofs))
            for k, t in enumerate(times):
                rows.append((float(j), initial, float(t), float(scan.ofs[k]),
                             float(ratio[k]), ratio_avg))
    table = SweepTable(
        command="linearity",
        columns=("J", "initial_state", "t", "ofs", "ratio_f_over_e", "ratio_time_avg"),
        rows=rows,
        metadata=_base_metadata("linearity", config),
    )
    return table, payload


def run_mixture(config: RunConfig) -> tuple[SweepTable, dict]:
    times = config.time.record_times()
    two = mixture_test_2level(config.params, times, dt=config.time.dt)
    three = mixture_test_3level(config.params, times, dt=config.time.dt)
    rows = []
    for res, label in ((two, "2lvl"), (three, "3lvl")):
        for k, t in enumerate(times):
            rows.append((label, float(t), _clip_probability(float(res.p_mixture[k])),
                         _clip_probability(float(res.p_superposed[k])),
                         float(res.deviation[k])))
    table = SweepTable(
        command="mixture",
        columns=("system", "t", "p_mixture", "p_superposed", "deviation"),
        rows=rows,
        metadata=_base_metadata("mixture", config),
    )
    payload = {"two_level_postselected": two, "three_level_full": three}
    return table, payload


def run_trajectories(config: RunConfig) -> tuple[SweepTable, dict]:
    if config.shots <= 0:
        raise ConfigError("trajectories requires shots > 0 (the trajectory count)")
    times = config.time.record_times()
    model = build_three_level_model(config.params)
    psi0 = embed_ef_state(initial_ket("e"))
    stats = sample_jump_ensemble(psi0, model, config.time.horizon, dt=config.time.dt,
                                 seed=config.seed, n_traj=config.shots,
                                 record_times=times)

    h_eff = build_effective_hamiltonian(config.params)
    pred = np.empty((times.size, 3))
    for k, t in enumerate(times):
        psi, _ = propagate_nonhermitian(initial_ket("e"), h_eff, float(t))
        pred[k] = bloch_vector(projector(psi))

    rho_final = evolve_lindblad(projector(psi0), model, config.time.horizon,
                                dt=config.time.dt)
    predicted_rate = 1.0 - rho_final[0, 0].real

    rows = [(int(i), bool(stats.postselected[i]), int(stats.jump_counts[i]))
            for i in range(stats.n_traj)]
    ensemble_rows = [
        (float(t), int(stats.kept_counts[k]),
         *(float(v) for v in stats.bloch_mean[k]),
         *(float(v) for v in stats.bloch_sem[k]),
         *(float(v) for v in pred[k]))
        for k, t in enumerate(times)
    ]
    metadata = _base_metadata("trajectories", config)
    metadata["success_rate"] = format(stats.success_rate, ".12g")
    metadata["success_rate_predicted"] = format(predicted_rate, ".12g")
    table = SweepTable(
        command="trajectories",
        columns=("trajectory_id", "postselected", "jump_count"),
        rows=rows,
        metadata=metadata,
        sections=[Section(
            title="conditioned ensemble vs no-jump prediction",
            columns=("t", "kept", "x_mc", "y_mc", "z_mc",
                     "x_se", "y_se", "z_se", "x_pred", "y_pred", "z_pred"),
            rows=ensemble_rows,
        )],
    )
    payload = {
        "times": times,
        "bloch_mean": stats.bloch_mean,
        "bloch_sem": stats.bloch_sem,
        "bloch_pred": pred,
        "success_rate": stats.success_rate,
    }
    return table, payload


def _load_beta(source: str) -> ConfusionMatrix:
    if source == "default":
        return default_confusion_matrix()
    if source == "identity":
        return ConfusionMatrix.identity()
    try:
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return ConfusionMatrix.from_raw(np.asarray(doc, dtype=float))
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise IngestError(f"cannot load confusion matrix from {source!r}: {exc}") from None


def run_ingest(config: RunConfig, counts_path: str, beta_source: str) -> tuple[SweepTable, dict]:
    """Run the correction pipeline on externally measured tomography counts.

    The counts file has no time column; the i-th occurrence of each axis is
    taken as the i-th measurement group, so a group holds one x, one y and
    one z row.
    """
    beta = _load_beta(beta_source)
    records = read_counts_csv(counts_path)
    by_axis = {"x": [], "y": [], "z": []}
    for rec in records:
        by_axis[rec.axis].append(rec)
    counts = {axis: len(v) for axis, v in by_axis.items()}
    if len(set(counts.values())) != 1:
        raise IngestError(f"axes appear unequally often: {counts}; "
                          "each group needs one x, one y and one z row")

    rows, blochs = [], []
    for i in range(counts["x"]):
        row: list = [i]
        pairs = {}
        for axis in ("x", "y", "z"):
            rec = by_axis[axis][i]
            corrected = ibu_correct(rec.frequencies(), beta)
            plus, minus, _success = renormalize_subensemble(corrected)
            pairs[axis] = (plus, minus)
            row.extend([_clip_probability(float(corrected[0])),
                        _clip_probability(float(corrected[1])),
                        _clip_probability(float(corrected[2])),
                        _clip_probability(float(plus))])
        rho_ef = reconstruct_density(pairs["x"], pairs["y"], pairs["z"])
        ket, degenerate = purify(rho_ef)
        bloch = bloch_vector(rho_ef)
        row.extend([float(b) for b in bloch])
        row.extend([ket[0].real, ket[0].imag, ket[1].real, ket[1].imag, degenerate])
        rows.append(tuple(row))
        blochs.append(bloch)

    columns = ["group"]
    for axis in ("x", "y", "z"):
        columns += [f"p_g_{axis}", f"p_plus_{axis}", f"p_minus_{axis}", f"pn_plus_{axis}"]
    columns += ["bloch_x", "bloch_y", "bloch_z",
                "ket_e_re", "ket_e_im", "ket_f_re", "ket_f_im", "degenerate"]
    metadata = _base_metadata("ingest", config)
    metadata["counts_file"] = counts_path
    metadata["beta_source"] = beta_source
    metadata["bloch_convention"] = BLOCH_SIGN_CONVENTION
    table = SweepTable(command="ingest", columns=tuple(columns), rows=rows,
                       metadata=metadata)
    payload = {"group": np.arange(len(rows)), "bloch": np.array(blochs)}
    return table, payload


_RUNNERS = {
    "spectrum": run_spectrum,
    "sweep": run_sweep,
    "fpt": run_fpt,
    "linearity": run_linearity,
    "mixture": run_mixture,
    "trajectories": run_trajectories,
}

_FIGURES = {
    "spectrum": figures.render_spectrum,
    "sweep": figures.render_sweep,
    "fpt": figures.render_fpt,
    "linearity": figures.render_linearity,
    "mixture": figures.render_mixture,
    "trajectories": figures.render_trajectories,
    "ingest": figures.render_ingest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nojump",
        description="Dissipative qutrit simulator: no-jump postselection, "
                    "non-Hermitian dynamics, tomography and linearity tests.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        p = sub.add_parser(command, help=f"run the {command} analysis")
        p.add_argument("--config", metavar="PATH", help="JSON run configuration")
        p.add_argument("--seed", type=int, metavar="U64", help="override the run seed")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--exact", action="store_true", help="force shots = 0 (exact mode)")
        p.add_argument("--name", metavar="BASENAME",
                       help="output basename (default <command>-<timestamp>-<seed>)")
        p.add_argument("--no-plot", action="store_true", help="skip figure rendering")
        if command == "ingest":
            p.add_argument("counts_csv", help="tomography counts file "
                                              "(header axis,shots,n_g,n_plus,n_minus)")
            p.add_argument("--beta", default="default", metavar="SOURCE",
                           help="confusion matrix: 'default', 'identity', "
                                "or a path to a JSON 3x3 array")
    return parser


def _effective_config(args) -> RunConfig:
    config = default_config(args.command)
    if args.config:
        config = load_config(args.config, config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.exact:
        overrides["shots"] = 0
    if overrides:
        config = config_from_dict(overrides, config)
    return config


def _run(args) -> int:
    config = _effective_config(args)
    if args.command == "ingest":
        table, payload = run_ingest(config, args.counts_csv, args.beta)
    else:
        table, payload = _RUNNERS[args.command](config)

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.name:
        basename = args.name
    else:
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
        basename = f"{args.command}-{stamp}-{config.seed}"
    csv_path = out_dir / f"{basename}.csv"
    write_csv(table, csv_path)
    print(csv_path)
    if not args.no_plot:
        png_path = out_dir / f"{basename}.png"
        _FIGURES[args.command](payload, png_path)
        print(png_path)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except IngestError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except PostselectionError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
