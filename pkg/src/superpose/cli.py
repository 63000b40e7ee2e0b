"""Command-line front end for the experiment engine.

Four subcommands: `bounds` evaluates the analytical reliability
machinery at a configuration, `simulate` runs Monte Carlo trials,
`envelope` searches maximum rate against section size, and `demo`
decodes a single transmission with its step trace. Flags mirror the
ExperimentConfig field names; a JSON config file passed with --config
overrides flags. Exit codes: 0 success, 2 invalid configuration,
3 infeasible schedule, 4 I/O failure.
"""

import functools
import json
import sys
from pathlib import Path

import click

from .analysis import InfeasibleScheduleError
from .harness import (ALLOCATION_CHOICES, ENVELOPE_MODES, ConfigError,
                      ExperimentConfig, envelope_search, evaluate_bounds,
                      run_monte_carlo, single_trial_outcome, write_trials_csv,
                      _point_dict)


def _guarded(fn):
    """Map the failure taxonomy onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(2)
        except InfeasibleScheduleError as exc:
            click.echo(f"infeasible schedule: {exc}", err=True)
            for name, val in exc.margins.items():
                shown = f"{val:.6g}" if isinstance(val, float) else val
                click.echo(f"  {name} = {shown}", err=True)
            sys.exit(3)
        except OSError as exc:
            click.echo(f"i/o failure: {exc}", err=True)
            sys.exit(4)

    return wrapper


def _parse_grid(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(int(g) for g in text)
    try:
        parts = tuple(int(p) for p in str(text).split(","))
    except ValueError:
        raise ConfigError(f"grid must be three comma-separated counts, "
                          f"got {text!r}")
    if len(parts) != 3:
        raise ConfigError(f"grid must be three comma-separated counts, "
                          f"got {text!r}")
    return parts


def _config_options(fn):
    """Shared flags, one per ExperimentConfig field."""
    opts = [
        click.option("--snr", type=float, default=7.0, show_default=True,
                     help="signal-to-noise ratio P/sigma^2"),
        click.option("--m", "M", type=int, default=512, show_default=True,
                     help="columns per section (power of two)"),
        click.option("--l", "L", type=int, default=100, show_default=True,
                     help="number of sections"),
        click.option("--rate-nats", type=float, default=None,
                     help="rate in nats per channel use"),
        click.option("--rate-bits", type=float, default=None,
                     help="rate in bits per channel use"),
        click.option("--rate-fraction", type=float, default=None,
                     help="rate as a fraction of capacity"),
        click.option("--allocation",
                     type=click.Choice(ALLOCATION_CHOICES), default="auto",
                     show_default=True, help="power allocation family"),
        click.option("--u", type=float, default=None,
                     help="leveling floor for the leveled allocation"),
        click.option("--gamma", type=float, default=None,
                     help="exponential slope for the leveled allocation"),
        click.option("--a", default="auto", show_default=True,
                     help="threshold offset, or 'auto' to search"),
        click.option("--eta", type=float, default=None,
                     help="detection-target slack override"),
        click.option("--rho", type=float, default=None,
                     help="false-alarm inflation override (>= 1)"),
        click.option("--h", type=float, default=None,
                     help="power-fluctuation slack override"),
        click.option("--trials", type=int, default=100, show_default=True,
                     help="Monte Carlo trial count"),
        click.option("--seed", type=int, default=0, show_default=True,
                     help="master seed"),
        click.option("--threshold", type=float, default=0.1,
                     show_default=True,
                     help="mistake fraction counted as a failing trial"),
        click.option("--pe-target", type=float, default=1e-3,
                     show_default=True,
                     help="error-probability budget for derived slacks"),
        click.option("--expected/--no-expected", "expected", default=None,
                     help="idealized targets vs full finite-L accounting"),
        click.option("--noiseless", is_flag=True, default=False,
                     help="transmit without channel noise"),
        click.option("--outer-delta", type=float, default=None,
                     help="mistake rate the outer code must absorb; "
                          "enables the composite code"),
        click.option("--grid", default="20,20,20", show_default=True,
                     help="(a, gamma, u) search grid counts"),
        click.option("--dtype", type=click.Choice(["float32", "float64"]),
                     default="float64", show_default=True,
                     help="dictionary dtype"),
        click.option("--out-dir", default=None,
                     help="directory for CSV/JSON outputs"),
        click.option("--config", "config_path", default=None,
                     help="JSON config file; its keys override flags"),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _build_config(kwargs) -> ExperimentConfig:
    config_path = kwargs.pop("config_path", None)
    kwargs["grid"] = _parse_grid(kwargs["grid"])
    if config_path is not None:
        with open(config_path) as fh:
            try:
                overrides = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}")
        if not isinstance(overrides, dict):
            raise ConfigError("config file must hold a JSON object")
        kwargs.update(overrides)
        if "grid" in overrides:
            kwargs["grid"] = _parse_grid(overrides["grid"])
    return ExperimentConfig.from_dict(kwargs)


@click.group()
def main():
    """Sparse superposition codes: bounds, simulation, envelopes."""


@main.command()
@_config_options
@_guarded
def bounds(**kwargs):
    """Evaluate the reliability bounds at one configuration."""
    cfg = _build_config(kwargs)
    report, _sched = evaluate_bounds(cfg)
    pt = report.point
    click.echo(f"capacity {report.capacity_nats:.6f} nats "
               f"({report.capacity_bits:.6f} bits)")
    click.echo(f"rate     {report.rate_nats:.6f} nats "
               f"({report.rate_bits:.6f} bits), "
               f"{report.ratio_to_capacity:.4f} of capacity")
    click.echo(f"point    a={pt['a']:.4f} gamma={pt['gamma']:.4f} "
               f"u={pt['u']:.4f}  m={report.schedule_m} steps  "
               f"tau={report.tau:.4f}")
    click.echo(f"targets  weighted detection {pt['detection_weighted']:.4f}"
               f"  failed {pt['failed_weighted']:.4f}"
               f"  false alarms {pt['false_alarms']:.4f}")
    click.echo(f"bounds   delta_wght {report.delta_wght:.6f}  "
               f"delta_mis {report.delta_mis:.6f}  "
               f"pe_total {report.pe_total:.6g}")
    click.echo("q1 progression: "
               + " ".join(f"{q:.4f}" for q in report.q1))
    if cfg.out_dir:
        click.echo(f"wrote schedule.csv and bounds.json to {cfg.out_dir}")


@main.command()
@_config_options
@_guarded
def simulate(**kwargs):
    """Monte Carlo transmissions at one configuration."""
    cfg = _build_config(kwargs)
    s = run_monte_carlo(cfg)
    click.echo(f"{s.trials} trials at {s.rate_nats:.6f} nats "
               f"(n={s.n}, {s.schedule_m} scheduled steps)")
    click.echo(f"failures over threshold {s.threshold:g}: {s.failures}  "
               f"p_hat={s.p_hat:.4g}  "
               f"95% CI [{s.ci95[0]:.4g}, {s.ci95[1]:.4g}]")
    click.echo(f"mistake rate mean {s.mean_delta_mis:.4f} "
               f"max {s.max_delta_mis:.4f}  "
               f"(errors {s.mean_delta_err:.4f}, "
               f"erasures {s.mean_delta_erase:.4f})  "
               f"mean steps {s.mean_steps:.2f}")
    if s.outer_k is not None:
        click.echo(f"outer code k={s.outer_k}: exact "
                   f"{s.composite_exact}/{s.composite_trials}, "
                   f"{s.composite_violations} violations of the "
                   f"correction radius")
    if s.aborted:
        click.echo("run aborted early at the failure cap")
    click.echo(f"runtime {s.runtime_s:.1f}s")
    if cfg.out_dir:
        click.echo(f"wrote trials.csv, steps.csv, summary.json "
                   f"to {cfg.out_dir}")


@main.command()
@click.option("--snr", type=float, default=7.0, show_default=True,
              help="signal-to-noise ratio")
@click.option("--m-values", default="512,1024,2048,4096",
              show_default=True, help="comma-separated section sizes")
@click.option("--threshold", type=float, default=0.1, show_default=True,
              help="section mistake-rate target")
@click.option("--mode", type=click.Choice(ENVELOPE_MODES),
              default="large-L", show_default=True)
@click.option("--l", "L", type=int, default=None,
              help="sections (default: M in bounds mode, 100 in "
                   "simulation mode)")
@click.option("--trials", type=int, default=1000, show_default=True,
              help="trials per confirmed rate (simulation mode)")
@click.option("--max-failures", type=int, default=10, show_default=True,
              help="failing-trial budget at the confirmed rate")
@click.option("--probe-trials", type=int, default=None,
              help="trials per bisection probe (default trials/4)")
@click.option("--seed", type=int, default=1, show_default=True,
              help="master seed")
@click.option("--pe-target", type=float, default=1e-3, show_default=True)
@click.option("--grid", default="20,20,20", show_default=True,
              help="(a, gamma, u) search grid counts")
@click.option("--dtype", type=click.Choice(["float32", "float64"]),
              default="float32", show_default=True)
@click.option("--resolution", type=float, default=1e-3, show_default=True,
              help="bisection resolution in nats")
@click.option("--out-dir", default=None,
              help="directory for envelope.csv and per-M artifacts")
@click.option("--verbose", is_flag=True, default=False,
              help="log each probe and confirmation")
@click.option("--config", "config_path", default=None,
              help="JSON file; its keys override these flags")
@_guarded
def envelope(**kwargs):
    """Maximum rate against section size at a mistake-rate target."""
    config_path = kwargs.pop("config_path", None)
    if config_path is not None:
        with open(config_path) as fh:
            try:
                overrides = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}")
        if not isinstance(overrides, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(overrides) - set(kwargs)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs.update(overrides)

    try:
        m_values = [int(p) for p in str(kwargs["m_values"]).split(",")]
    except ValueError:
        raise ConfigError(f"m-values must be comma-separated integers, "
                          f"got {kwargs['m_values']!r}")
    grid = _parse_grid(kwargs["grid"])
    out_dir = kwargs["out_dir"]
    out_csv = None
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        out_csv = Path(out_dir) / "envelope.csv"
    log = click.echo if kwargs["verbose"] else None

    rows = envelope_search(
        kwargs["snr"], m_values, kwargs["threshold"], kwargs["mode"],
        grid=grid, pe_target=kwargs["pe_target"], L=kwargs["L"],
        trials=kwargs["trials"], max_failures=kwargs["max_failures"],
        master_seed=kwargs["seed"], probe_trials=kwargs["probe_trials"],
        dtype=kwargs["dtype"], resolution=kwargs["resolution"],
        out_csv=out_csv, log=log)

    for row in rows:
        line = (f"M={row.M}: {row.rate_nats:.6f} nats "
                f"({row.rate_bits:.6f} bits), "
                f"{row.ratio_to_capacity:.4f} of capacity")
        if kwargs["mode"] == "simulation":
            line += (f"  [anchor {row.anchor_nats:.6f} nats, "
                     f"failures {row.failures}/{row.trials}]")
        click.echo(line)

    if out_dir and kwargs["mode"] == "simulation":
        params = {
            "snr": kwargs["snr"], "threshold": kwargs["threshold"],
            "L": kwargs["L"] if kwargs["L"] else 100,
            "trials": kwargs["trials"],
            "max_failures": kwargs["max_failures"],
            "probe_trials": kwargs["probe_trials"],
            "seed": kwargs["seed"], "grid": list(grid),
            "dtype": kwargs["dtype"], "resolution": kwargs["resolution"],
            "pe_target": kwargs["pe_target"],
        }
        for row in rows:
            stem = Path(out_dir) / f"sim_M{row.M}"
            sidecar = {
                "params": params, "M": row.M,
                "anchor_nats": row.anchor_nats,
                "rate_nats": row.rate_nats,
                "ratio_to_capacity": row.ratio_to_capacity,
                "failures": row.failures, "trials": row.trials,
                "point": _point_dict(row.point) if row.point else None,
            }
            if row.records is not None:
                write_trials_csv(stem.with_suffix(".csv"), row.records)
                sidecar["trials_csv"] = stem.with_suffix(".csv").name
            with open(stem.with_suffix(".json"), "w") as fh:
                json.dump(sidecar, fh, indent=2)
        click.echo(f"wrote envelope.csv and per-M artifacts to {out_dir}")
    elif out_dir:
        click.echo(f"wrote envelope.csv to {out_dir}")


@main.command()
@_config_options
@_guarded
def demo(**kwargs):
    """Decode one transmission and print the step trace."""
    cfg = _build_config(kwargs)
    out, sched, code, point = single_trial_outcome(cfg)
    click.echo(f"n={code.n}  N={code.L * code.M}  "
               f"R={code.R:.6f} nats  tau={sched.tau:.4f}  "
               f"{sched.m} scheduled steps")
    click.echo(f"point a={point.a:.4f} gamma={point.gamma:.4f} "
               f"u={point.u:.4f}")
    click.echo("  k   target   size  cands  qhat     fhat")
    for k in range(out.steps_used):
        picked = len(out.selected_per_step[k])
        click.echo(f"{k + 1:3d}   {sched.q1[k]:.4f}  "
                   f"{out.size_per_step[k]:.4f}  {picked:5d}  "
                   f"{out.qhat[k]:.4f}  {out.fhat[k]:.4f}")
    click.echo(f"stopped after {out.steps_used} steps: {out.stop_reason}")
    click.echo(f"mistake rate {out.delta_mis:.4f} "
               f"(errors {out.delta_err:.4f}, "
               f"erasures {out.delta_erase:.4f})")


if __name__ == "__main__":
    main()
