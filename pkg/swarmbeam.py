from __future__ import annotations

import functools
import logging
import math
import sys
from typing import Any, Callable, Dict, List, Optional

import click
import numpy as np
import pandas as pd
from pythonjsonlogger.json import JsonFormatter

# =========================
# ANALYSIS modules
# =========================
from analysis.beampattern import angle_grid, pattern_sweep, steering_weights, summarize_pattern
from analysis.errors import (
    ConfigError,
    DegenerateGeometryError,
    OutOfRegimeError,
    ResourceGuardError,
    SwarmBeamError,
)
from analysis.geometry import MultiLinearTopology, layout_to_frame
from analysis.gratinglobe import (
    PeriodPair,
    c3_check,
    c3_y21_threshold,
    candidate_period_pairs,
    dual_parameters,
    period_solutions,
    rational_spacing_precheck,
    scan_row,
)
from analysis.perturbation import (
    fluctuation_variance,
    fluctuation_vs_size,
    monte_carlo_stats,
    sample_perturbation,
    stats_to_frame,
)
from analysis.randmatrix import PARTS, LimitingLaw, compare_esd, law_curve, law_for, regime, spectra

# =========================
# DATA layer
# =========================
from data.config import (
    APP_NAME,
    APP_VERSION,
    EquilateralTopologyConfig,
    ExperimentConfig,
    load_config,
    resolved,
)
from data.export import write_csv, write_json
from data.preprocessing import build_ensemble, build_perturbation_model, build_topology

logger = logging.getLogger(APP_NAME)


# ==================================================
# CONFIG
# ==================================================
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3
EXIT_RESOURCE = 4

MEMORY_GUARD_N = 4000
UNCONSTRAINED = "unconstrained (d < λ/2)"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"
LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]


# ==================================================
# LOGGING
# ==================================================
def configure_logging(level: str = "INFO", json_logs: bool = True) -> logging.Handler:
    """One stderr handler on the root logger, JSON records by default."""
    handler = logging.StreamHandler(sys.stderr)
    if json_logs:
        handler.setFormatter(JsonFormatter(LOG_FORMAT))
    else:
        handler.setFormatter(logging.Formatter(LOG_FORMAT))

    root = logging.getLogger()
    for old in [h for h in root.handlers if getattr(h, "_swarmbeam", False)]:
        root.removeHandler(old)
    handler._swarmbeam = True
    root.addHandler(handler)
    root.setLevel(level)
    return handler


# ==================================================
# CLI HELPERS
# ==================================================
def handle_errors(fn: Callable) -> Callable:
    """Map the error taxonomy to exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DegenerateGeometryError as exc:
            click.echo(f"error: degenerate geometry: {exc}", err=True)
            sys.exit(EXIT_DEGENERATE)
        except ResourceGuardError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_RESOURCE)
        except SwarmBeamError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)

    return wrapper


def run_options(fn: Callable) -> Callable:
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="TOML experiment file."),
        click.option("--preset", default=None, help="Named preset merged under the config file."),
        click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".", show_default=True),
        click.option("--seed", type=click.IntRange(min=0), default=None, help="Overrides every seed in the config."),
        click.option("--threads", type=click.IntRange(min=1), default=None),
        click.option("--force", is_flag=True, help="Run past the memory guard."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _load(ctx: click.Context, config_path, preset, seed, threads) -> ExperimentConfig:
    cfg = load_config(config_path, preset, seed=seed, threads=threads)
    if ctx.obj.get("log_level") is None:
        logging.getLogger().setLevel(cfg.log_level)
    return cfg


def _pair_rows(pairs: List[PeriodPair], fov) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "theta_deg": [math.degrees(p.theta) for p in pairs],
            "theta_image_deg": [math.degrees(p.theta_image) for p in pairs],
            "p": [p.p for p in pairs],
            "q": [p.q for p in pairs],
            "in_fov": [p.in_fov(fov) for p in pairs],
        },
        columns=["theta_deg", "theta_image_deg", "p", "q", "in_fov"],
    )


def _fov_radians(fov_deg) -> tuple:
    return math.radians(fov_deg[0]), math.radians(fov_deg[1])


def _period_pairs(t: MultiLinearTopology, obs: np.ndarray) -> Dict[str, Any]:
    """Periodicity facts for a structured topology."""
    info: Dict[str, Any] = {"rational_spacing_precheck": rational_spacing_precheck(t.spacings)}
    params = dual_parameters(t)
    if params is not None:
        d, x21, y21 = params
        report = c3_check(d, x21, y21)
        threshold = c3_y21_threshold(d, x21)
        info["c3"] = report.to_dict()
        info["y21_threshold"] = UNCONSTRAINED if math.isinf(threshold) else threshold
        info["pairs"] = period_solutions(d, x21, y21)
        return info

    info["c3"] = None
    pairs: List[PeriodPair] = []
    if info["rational_spacing_precheck"]:
        for theta in obs:
            pairs.extend(candidate_period_pairs(t, float(theta)))
    info["pairs"] = pairs
    return info


# ==================================================
# COMMANDS
# ==================================================
@click.group()
@click.version_option(APP_VERSION, prog_name=APP_NAME)
@click.option("--log-level", type=click.Choice(LOG_LEVELS, case_sensitive=False), default=None)
@click.option("--plain-logs", is_flag=True, help="Human-readable log lines instead of JSON.")
@click.pass_context
def cli(ctx: click.Context, log_level: Optional[str], plain_logs: bool) -> None:
    """Swarm antenna array beamforming experiments."""
    ctx.ensure_object(dict)
    ctx.obj["log_level"] = log_level.upper() if log_level else None
    handler = configure_logging(ctx.obj["log_level"] or "INFO", json_logs=not plain_logs)
    ctx.call_on_close(lambda: logging.getLogger().removeHandler(handler))


@cli.command("pattern")
@run_options
@click.option("--perturbed", is_flag=True, help="Also sweep one perturbed draw of the layout.")
@click.pass_context
@handle_errors
def cmd_pattern(ctx, config_path, preset, out_dir, seed, threads, force, perturbed):
    """Steered beam patterns, grating-lobe scan per steer angle."""
    cfg = _load(ctx, config_path, preset, seed, threads)
    t, layout = build_topology(cfg)
    sweep = cfg.sweep
    steer = angle_grid(sweep.steer_count, sweep.fov_deg)
    obs = angle_grid(sweep.obs_count, sweep.fov_deg)

    grid = pattern_sweep(layout, steer, obs, n_jobs=cfg.threads)
    scans = [scan_row(obs, grid.magnitude[i], float(ts), sweep.epsilon) for i, ts in enumerate(steer)]
    summary = summarize_pattern(grid, scans)

    params = dual_parameters(t) if t is not None else None
    if params is not None and params[2] != 0:
        d, x21, y21 = params
        fov = _fov_radians(sweep.fov_deg)
        summary["period_angles"] = _pair_rows(period_solutions(d, x21, y21), fov).to_dict(orient="records")

    write_csv(layout_to_frame(layout), out_dir, "layout.csv")
    write_csv(grid.to_frame(), out_dir, "pattern.csv")
    write_csv(
        pd.DataFrame(
            [
                {"theta_s_deg": math.degrees(ts), "grating_angle_deg": math.degrees(a)}
                for ts, row in zip(steer, scans)
                for a in row
            ],
            columns=["theta_s_deg", "grating_angle_deg"],
        ),
        out_dir,
        "grating_scan.csv",
    )

    if perturbed:
        if cfg.perturbation is None:
            raise ConfigError("--perturbed needs a [perturbation] section")
        model = build_perturbation_model(cfg.perturbation, len(layout))
        sample = sample_perturbation(model, len(layout), cfg.perturbation.seed)
        noisy = pattern_sweep(layout, steer, obs, n_jobs=cfg.threads, evaluate_on=layout.shifted(sample.deltas))
        write_csv(noisy.to_frame(), out_dir, "pattern_perturbed.csv")
        summary["perturbed_max_sidelobe"] = summarize_pattern(noisy)["max_sidelobe"]

    write_json({"summary": summary, "n_elements": len(layout)}, out_dir, "pattern_summary.json", resolved(cfg))
    logger.info("pattern done", extra={"out_dir": out_dir, "steer_with_grating_lobes": summary["steer_with_grating_lobes"]})
    click.echo(
        f"{len(layout)} elements, {steer.size}x{obs.size} grid, "
        f"max side lobe {summary['max_sidelobe']:.4f}, "
        f"steer angles with grating lobes: {summary['steer_with_grating_lobes']}"
    )


@cli.command("grating")
@run_options
@click.pass_context
@handle_errors
def cmd_grating(ctx, config_path, preset, out_dir, seed, threads, force):
    """(C1)/(C2)/(C3) analysis and period angles."""
    cfg = _load(ctx, config_path, preset, seed, threads)
    t, _ = build_topology(cfg)
    if t is None:
        raise ConfigError("grating needs a structured topology (multilinear, dual or equilateral)")

    fov = _fov_radians(cfg.sweep.fov_deg)
    obs = angle_grid(cfg.sweep.obs_count, cfg.sweep.fov_deg)
    info = _period_pairs(t, obs)
    pairs: List[PeriodPair] = info.pop("pairs")
    frame = _pair_rows(pairs, fov)

    c3 = info.get("c3") or {}
    payload = {
        "verdict": c3.get("verdict"),
        "witnesses": c3.get("witnesses", []),
        "search_bounds": c3.get("search_bounds"),
        "y21_threshold": info.get("y21_threshold"),
        "rational_spacing_precheck": info["rational_spacing_precheck"],
        "n_period_pairs": int(len(frame)),
        "n_period_pairs_in_fov": int(frame["in_fov"].sum()) if len(frame) else 0,
    }
    write_json(payload, out_dir, "c3_report.json", resolved(cfg))
    write_csv(frame, out_dir, "period_angles.csv")
    logger.info("grating done", extra={"out_dir": out_dir, "verdict": payload["verdict"]})
    click.echo(f"verdict: {payload['verdict']}, period pairs: {payload['n_period_pairs']} ({payload['n_period_pairs_in_fov']} in FOV)")


@cli.command("perturb")
@run_options
@click.pass_context
@handle_errors
def cmd_perturb(ctx, config_path, preset, out_dir, seed, threads, force):
    """Monte Carlo vs analytic fluctuation statistics."""
    cfg = _load(ctx, config_path, preset, seed, threads)
    p = cfg.perturbation
    if p is None:
        raise ConfigError("perturb needs a [perturbation] section")
    _, layout = build_topology(cfg)
    model = build_perturbation_model(p, len(layout))

    theta_s = math.radians(p.theta_s_deg)
    thetas = angle_grid(p.obs_count, p.fov_deg)
    if not np.any(np.abs(thetas - theta_s) <= 1e-12):
        thetas = np.sort(np.append(thetas, theta_s))

    w = steering_weights(layout, theta_s)
    tail_grid = None
    if p.sigma:
        spread = math.sqrt(fluctuation_variance(model, w.magnitudes, theta_s))
        tail_grid = np.linspace(spread / p.tail_points, 4.0 * spread, p.tail_points)
    stats = monte_carlo_stats(
        layout, w, model, thetas, p.trials, p.seed, theta_s=theta_s, n_jobs=cfg.threads, tail_grid=tail_grid
    )
    write_csv(stats_to_frame(stats), out_dir, "perturb_stats.csv")

    manifest: Dict[str, Any] = {
        "seed": p.seed,
        "trials": p.trials,
        "sigma": p.sigma,
        "N": len(layout),
        "theta_s_deg": p.theta_s_deg,
        "model": model.describe(),
        "tail_bound": stats[0].tail_bound_at,
    }
    steer_row = next((s for s in stats if s.law == "exact"), None)
    if steer_row is not None:
        manifest["steer"] = {
            "analytic_mean": steer_row.analytic_mean.real,
            "mc_mean_abs": abs(steer_row.mc_mean),
            "analytic_var": steer_row.analytic_variance,
            "mc_var": steer_row.mc_variance,
        }

    if p.sizes:
        if not isinstance(cfg.topology, EquilateralTopologyConfig):
            raise ConfigError("perturbation.sizes needs an equilateral topology")
        sizes_frame = fluctuation_vs_size(
            p.sizes, p.sigma, thetas, p.trials, p.seed, theta_s, d=cfg.topology.d, n_jobs=cfg.threads
        )
        write_csv(sizes_frame, out_dir, "size_fluctuation.csv")
        manifest["sizes"] = list(p.sizes)

    write_json(manifest, out_dir, "manifest.json", resolved(cfg))
    logger.info("perturb done", extra={"out_dir": out_dir, "trials": p.trials})
    click.echo(f"{len(stats)} angles, {p.trials} trials, N = {len(layout)}")


@cli.command("spectrum")
@run_options
@click.pass_context
@handle_errors
def cmd_spectrum(ctx, config_path, preset, out_dir, seed, threads, force):
    """Euclidean random matrix spectra vs limiting laws."""
    cfg = _load(ctx, config_path, preset, seed, threads)
    ensemble = build_ensemble(cfg)
    if ensemble.n > MEMORY_GUARD_N:
        if not force:
            raise ResourceGuardError(
                f"N = {ensemble.n} builds two dense {ensemble.n}x{ensemble.n} matrices; "
                f"rerun with --force to go above {MEMORY_GUARD_N}"
            )
        logger.warning("memory guard overridden", extra={"n": ensemble.n, "guard": MEMORY_GUARD_N})

    s = cfg.spectrum
    parts = PARTS if s.part == "both" else (s.part,)
    shift = None if s.shift == "auto" else float(s.shift)

    # laws resolved before anything is computed or written
    reg = regime(ensemble)
    laws: Dict[str, Optional[LimitingLaw]] = {}
    skipped: Dict[str, str] = {}
    for part in parts:
        try:
            laws[part] = law_for(part, reg)
        except OutOfRegimeError as exc:
            if len(parts) == 1:
                raise
            laws[part] = None
            skipped[part] = str(exc)
            logger.warning("comparison skipped", extra={"part": part, "beta": reg.beta, "reason": str(exc)})

    results = spectra(ensemble, parts, shift)
    per_part: Dict[str, Any] = {}
    for part, res in results.items():
        write_csv(pd.DataFrame({"eigenvalue": res.eigenvalues}), out_dir, f"eigs_{part}.csv")
        law = laws[part]
        if law is None:
            per_part[part] = {
                "law": None,
                "out_of_regime": skipped[part],
                "shift_applied": res.shift_applied,
                "ks": None,
                "l1": None,
            }
            continue
        ks, l1 = compare_esd(res.eigenvalues, law)
        write_csv(law_curve(law), out_dir, "law.csv" if len(parts) == 1 else f"law_{part}.csv")
        per_part[part] = {"law": law.describe(), "shift_applied": res.shift_applied, "ks": ks, "l1": l1}

    payload: Dict[str, Any] = {
        "N": ensemble.n,
        "L_m": ensemble.side_m,
        "lambda_m": ensemble.lambda_m,
        "beta": reg.beta,
        "rho_lambda3": reg.rho_lambda3,
        "part": s.part,
        "results": per_part,
    }
    if len(parts) == 1:
        payload.update({k: per_part[parts[0]][k] for k in ("shift_applied", "ks", "l1")})
    write_json(payload, out_dir, "spectrum_summary.json", resolved(cfg))
    logger.info("spectrum done", extra={"out_dir": out_dir, "beta": reg.beta})
    for part, row in per_part.items():
        if row["law"] is None:
            click.echo(f"{part}: beta = {reg.beta:.4f}, no limiting law ({row['out_of_regime']})")
        else:
            click.echo(f"{part}: beta = {reg.beta:.4f}, KS = {row['ks']:.4f}, L1 = {row['l1']:.4f}")


if __name__ == "__main__":
    cli()
