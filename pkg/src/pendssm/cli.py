"""Command-line pipeline: simulate, train, portrait, scan, chaos, validate.

Every command reads a key-value config file (see the config module) and
writes CSV/JSON artifacts into the output directory.  All outputs embed the
config hash and seed, and identical configs reproduce identical payloads.
Exit codes: 0 success, 2 validation/configuration error, 3 a result was
flagged unreliable (suppressed by ``--allow-unreliable``).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import diagnostics
from .config import PipelineConfig
from .dynamics import NormalFormModel, advect
from .embedding import embed, Dataset
from .furuta import SimState, Trajectory
from .parametric import (
    ParametricModel,
    analyze_portrait,
    find_closed_orbit,
    find_fixed_points,
    scan_bifurcations,
)
from .pipeline import (
    TrainingOptions,
    base_initial_conditions,
    build_parametric_model,
    find_basin_boundary,
    generate_node_trajectories,
    predict_observable,
    simulate_capped,
    train_microchaos_model,
    train_node,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNRELIABLE = 3


def _write_json(path: Path, payload: dict, cfg: PipelineConfig) -> None:
    payload = {"config_hash": cfg.hash, "seed": cfg.seed, **payload}
    path.write_text(json.dumps(payload, indent=1, sort_keys=True))


def _stamp(traj: Trajectory, cfg: PipelineConfig, **extra) -> Trajectory:
    traj.metadata.update({"config_hash": cfg.hash, "seed": str(cfg.seed)})
    traj.metadata.update({k: str(v) for k, v in extra.items()})
    return traj


def cmd_simulate(cfg: PipelineConfig, out: Path, args) -> int:
    """Write training-bundle trajectories (or one single run) as CSV files."""
    if cfg.dt_single and cfg.t_end:
        ctrl = cfg.controller(cfg.dt_single, quantized=bool(cfg.h_quant))
        tr, escaped = simulate_capped(
            cfg.params, ctrl, SimState(theta=0.01), cfg.t_end,
            cfg.substeps, cfg.records_per_interval,
        )
        if tr is None:
            print("simulate: run diverged immediately", file=sys.stderr)
            return EXIT_CONFIG
        path = out / "trajectory.csv"
        _stamp(tr, cfg, dt_sample=ctrl.dt_sample, escaped=escaped).to_csv(path)
        print(f"wrote {path}")
        return EXIT_OK
    n_files = 0
    for dt_sample in cfg.nodes:
        ctrl = cfg.controller(dt_sample)
        bundle = generate_node_trajectories(cfg.params, ctrl, cfg.training)
        tag = f"{dt_sample*1e3:.4g}ms"
        for group in ("core", "boundary"):
            for k, tr in enumerate(bundle[group]):
                path = out / f"traj_{tag}_{group}{k}.csv"
                _stamp(
                    tr, cfg, dt_sample=dt_sample, group=group,
                    boundary_theta=bundle["boundary_theta"],
                ).to_csv(path)
                n_files += 1
    print(f"wrote {n_files} trajectory files to {out}")
    return EXIT_OK


def _load_bundles(cfg: PipelineConfig, out: Path):
    bundles = []
    for dt_sample in cfg.nodes:
        tag = f"{dt_sample*1e3:.4g}ms"
        core = sorted(out.glob(f"traj_{tag}_core*.csv"))
        boundary = sorted(out.glob(f"traj_{tag}_boundary*.csv"))
        if not core:
            raise FileNotFoundError(
                f"missing upstream artifact: no traj_{tag}_core*.csv in {out} "
                "(run the simulate command first)"
            )
        bundles.append(
            {
                "core": [Trajectory.from_csv(p) for p in core],
                "boundary": [Trajectory.from_csv(p) for p in boundary],
            }
        )
    return bundles


def cmd_train(cfg: PipelineConfig, out: Path, args) -> int:
    """Fit per-node models from simulated CSVs and save the parametric model."""
    bundles = _load_bundles(cfg, out)
    pmodel = build_parametric_model(
        cfg.params, cfg.nodes, cfg.training, gains=cfg.gains, bundles=bundles
    )
    path = out / "model_parametric.json"
    payload = pmodel.to_dict()
    payload["config_hash"] = cfg.hash
    payload["seed"] = cfg.seed
    path.write_text(json.dumps(payload, sort_keys=True))
    for dt_sample, nf in zip(pmodel.nodes, pmodel.normal_forms):
        node_path = out / f"model_node_{dt_sample*1e3:.4g}ms.json"
        _write_json(node_path, nf.to_dict(), cfg)
    print(f"wrote {path}")
    return EXIT_OK


def _load_pmodel(out: Path) -> ParametricModel:
    path = out / "model_parametric.json"
    if not path.exists():
        raise FileNotFoundError(
            f"missing upstream artifact: {path} (run the train command first)"
        )
    return ParametricModel.from_dict(json.loads(path.read_text()))


def cmd_portrait(cfg: PipelineConfig, out: Path, args) -> int:
    """Fixed points, streamlines and any closed orbit at one parameter."""
    pmodel = _load_pmodel(out)
    nf = pmodel.interpolate(cfg.analysis_mu)
    portrait = analyze_portrait(nf, with_heteroclinic=True, with_orbit=cfg.with_orbit)
    tag = f"{cfg.analysis_mu*1e3:.4g}ms"
    _write_json(out / f"portrait_{tag}.json", portrait.to_dict(), cfg)
    # streamline bundle for plotting
    rho_max = 1.5 * np.quantile(nf.train_amp_cloud, 0.995, axis=0) if nf.train_amp_cloud.size else 1.5 * nf.train_amp_max
    lines = []
    for i, r1 in enumerate(np.linspace(rho_max[0] / 6, rho_max[0], 6)):
        for j, r2 in enumerate(np.linspace(rho_max[1] / 6, rho_max[1], 6)):
            x = np.array([r1, r2])
            pts = [x.copy()]
            h = 0.05
            for _ in range(2000):
                k1 = nf.amplitude_rhs(x)
                k2 = nf.amplitude_rhs(x + 0.5 * h * k1)
                k3 = nf.amplitude_rhs(x + 0.5 * h * k2)
                k4 = nf.amplitude_rhs(x + h * k3)
                x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
                if not np.all(np.isfinite(x)) or np.any(x < 0) or np.any(x > 2 * rho_max):
                    break
                pts.append(x.copy())
            lines.append((i * 6 + j, np.asarray(pts)))
    with open(out / f"streamlines_{tag}.csv", "w") as fh:
        fh.write(f"# config_hash={cfg.hash}\n# seed={cfg.seed}\n")
        fh.write("stream_id,rho1,rho2\n")
        for sid, pts in lines:
            for row in pts:
                fh.write(f"{sid},{row[0]!r},{row[1]!r}\n")
    if portrait.closed_orbit is not None:
        with open(out / f"orbit_{tag}.csv", "w") as fh:
            fh.write(f"# config_hash={cfg.hash}\n# seed={cfg.seed}\n")
            fh.write("rho1,rho2\n")
            for row in portrait.closed_orbit:
                fh.write(f"{row[0]!r},{row[1]!r}\n")
    print(f"wrote portrait artifacts for mu={tag}")
    return EXIT_OK


def cmd_scan(cfg: PipelineConfig, out: Path, args) -> int:
    """Sweep the parameter range and write the bifurcation event list."""
    pmodel = _load_pmodel(out)
    events = scan_bifurcations(
        pmodel,
        (cfg.scan_lo, cfg.scan_hi),
        steps=cfg.scan_steps,
        mu_tol=cfg.mu_tol,
        with_orbit=cfg.with_orbit,
    )
    _write_json(out / "events.json", {"events": events}, cfg)
    for ev in events:
        print(f"event: {ev['type']} at mu = {ev['mu']*1e3:.4f} ms")
    print(f"wrote {out/'events.json'}")
    return EXIT_OK


def cmd_chaos(cfg: PipelineConfig, out: Path, args) -> int:
    """Quantized-run statistics and the reduced RBF surrogate's statistics."""
    ch = cfg.chaos
    ctrl = cfg.controller(ch["dt"], quantized=True)
    if ctrl.h_quant is None:
        print("chaos: config must set chaos.h_quant > 0", file=sys.stderr)
        return EXIT_CONFIG
    geo, rbf, etas = train_microchaos_model(
        cfg.params, ctrl, d=ch["d"], stride=ch["stride"],
        t_train=ch["t_train"], t_settle=ch["t_settle"], substeps=cfg.substeps,
        max_pairs_per_trajectory=ch["max_pairs"],
    )
    # long validation run for data-side statistics
    tr, escaped = simulate_capped(
        cfg.params, ctrl, SimState(theta=0.013, omega_theta=-0.2),
        ch["t_stats"] + ch["t_settle"], cfg.substeps, records_per_interval=1,
    )
    theta = tr.channel("theta")[int(ch["t_settle"] / tr.dt_out):]
    m = 5 * ch["d"]
    es = embed(theta, m, ch["stride"], dt=ctrl.dt_sample)
    eta_data = geo.project(es.vectors)
    lam_data = diagnostics.lyapunov_data(eta_data.T, dt=ctrl.dt_sample, theiler=40)
    gp = diagnostics.correlation_dimension(eta_data.T, theiler=40)
    lam_model = diagnostics.lyapunov_model(rbf, eta_data[:, 0], n_steps=20000, dt=ctrl.dt_sample)
    res = advect(rbf, eta_data[:, 0], t_end=20000 * ctrl.dt_sample)
    ks = [
        diagnostics.ks_statistic(eta_data[i], res.states[i, 200:])
        for i in range(ch["d"])
    ]
    unreliable = bool(
        (not gp.reliable) or (not lam_data.reliable) or res.truncated or escaped
    )
    payload = {
        "h_quant": ctrl.h_quant,
        "dt_sample": ctrl.dt_sample,
        "lyapunov_data_per_s": lam_data.per_time,
        "lyapunov_data_per_sample": lam_data.per_sample,
        "lyapunov_model_per_s": lam_model.per_time,
        "lyapunov_model_per_sample": lam_model.per_sample,
        "gp_dimension": gp.dimension,
        "gp_stderr": gp.stderr,
        "gp_r_squared": gp.r_squared,
        "ks_per_coordinate": ks,
        "model_truncated": res.truncated,
        "unreliable": unreliable,
    }
    _write_json(out / "chaos_stats.json", payload, cfg)
    rbf.save(out / "model_rbf.json")
    geo.save(out / "model_geometry6d.json")
    print(f"wrote {out/'chaos_stats.json'}")
    if unreliable and not args.allow_unreliable:
        print("chaos: results flagged unreliable", file=sys.stderr)
        return EXIT_UNRELIABLE
    return EXIT_OK


def cmd_validate(cfg: PipelineConfig, out: Path, args) -> int:
    """Compare model-predicted observable series against a test trajectory."""
    pmodel = _load_pmodel(out)
    if not cfg.validate_trajectory:
        # generate the held-out test run here
        ctrl = cfg.controller(cfg.validate_mu)
        tr, _ = simulate_capped(
            cfg.params, ctrl, SimState(theta=0.02, omega_theta=0.3),
            cfg.validate_horizon or 60.0, cfg.substeps, cfg.records_per_interval,
        )
        if tr is None:
            print("validate: test run diverged", file=sys.stderr)
            return EXIT_CONFIG
        test_path = out / "trajectory_validate.csv"
        _stamp(tr, cfg, dt_sample=ctrl.dt_sample).to_csv(test_path)
    else:
        tr = Trajectory.from_csv(cfg.validate_trajectory)
    theta = tr.channel("theta")
    cap = np.flatnonzero(np.abs(theta) > 0.8)
    if cap.size:
        theta = theta[: cap[0]]
    t, pred, ref = predict_observable(
        pmodel, cfg.validate_mu, theta, tr.dt_out, cfg.training,
        t_end=cfg.validate_horizon or None,
    )
    raw, aligned = diagnostics.dtw_nmte(ref, pred)
    payload = {
        "mu": cfg.validate_mu,
        "n_samples": int(len(ref)),
        "nmte_raw": raw,
        "nmte_dtw": aligned,
    }
    _write_json(out / "validation.json", payload, cfg)
    with open(out / "prediction.csv", "w") as fh:
        fh.write(f"# config_hash={cfg.hash}\n# seed={cfg.seed}\n")
        fh.write("t,reference,prediction\n")
        for k in range(len(ref)):
            fh.write(f"{t[k]!r},{ref[k]!r},{pred[k]!r}\n")
    print(f"wrote {out/'validation.json'} (NMTE raw {raw:.4f}, dtw {aligned:.4f})")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "portrait": cmd_portrait,
    "scan": cmd_scan,
    "chaos": cmd_chaos,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pendssm",
        description="Delayed/quantized pendulum simulation and reduced-order model pipeline",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("config", help="key-value config file")
    parser.add_argument("--out", default="out", help="artifact directory (default: ./out)")
    parser.add_argument(
        "--allow-unreliable", action="store_true",
        help="exit 0 even when results are flagged unreliable",
    )
    args = parser.parse_args(argv)
    try:
        cfg = PipelineConfig.from_file(args.config)
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, out, args)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
