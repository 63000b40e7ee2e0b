"""Experiment engine: Monte Carlo trials, bound evaluation, envelope search.

Everything here is batch-oriented. Results land in CSV and JSON files so
figures can be drawn externally; nothing in the package plots.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict
from functools import partial
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .model import ChannelParams, CodeParams, derive_channel
from .codebook import (CoefficientVector, Dictionary, random_message,
                       transmit)
from .decoder import adaptive_decode
from .analysis import (InfeasibleScheduleError, DecoderSchedule,
                       OperatingPoint, operating_point, best_operating_point,
                       operating_schedule, certified_rate, false_alarm_base,
                       _binned_profile)
from .outer_rs import RsCode, composite_rate
from .rng import derive_key, raw_words


class ConfigError(ValueError):
    """Invalid experiment configuration; maps to exit code 2."""


ALLOCATION_CHOICES = ("auto", "constant", "exponential", "leveled")
ENVELOPE_MODES = ("bounds", "simulation", "large-L")

# Section count standing in for the infinite-L idealization. The step
# recursion sees L only through the binned weight profile, which has
# converged to its limit well before this.
_LARGE_L = 1_000_000

# CSV headers are part of the external interface; tests pin them.
TRIALS_HEADER = ["trial", "seed", "delta_mis", "delta_err", "delta_erase",
                 "steps", "composite_ok"]
SCHEDULE_HEADER = ["k", "q1k", "qk", "lambda_kk", "wk", "sk"]
ENVELOPE_HEADER = ["M", "rate_nats", "rate_bits", "ratio_to_capacity",
                   "mode"]


@dataclass
class ExperimentConfig:
    """One experiment: channel, code geometry, schedule knobs, outputs.

    Exactly one of rate_nats / rate_bits / rate_fraction picks the rate.
    The slack fields eta, rho, h are expert overrides; left as None they
    are derived from pe_target by the schedule machinery. `expected`
    chooses between the large-system idealization (slacks dropped) and
    the finite-L accounting; None defers to the operation: simulation
    runs default to the idealized targets, bound evaluation to the full
    accounting.
    """

    snr: float = 7.0
    M: int = 512
    L: int = 100
    rate_nats: float | None = None
    rate_bits: float | None = None
    rate_fraction: float | None = None
    allocation: str = "auto"
    u: float | None = None
    gamma: float | None = None
    a: float | str = "auto"
    eta: float | None = None
    rho: float | None = None
    h: float | None = None
    trials: int = 100
    seed: int = 0
    threshold: float = 0.1
    pe_target: float = 1e-3
    expected: bool | None = None
    noiseless: bool = False
    outer_delta: float | None = None
    grid: tuple = (20, 20, 20)
    dtype: str = "float64"
    out_dir: str | None = None

    def validate(self) -> None:
        problems = []
        if self.snr <= 0:
            problems.append(f"snr must be positive, got {self.snr}")
        if self.M < 2 or (self.M & (self.M - 1)) != 0:
            problems.append(f"M must be a power of two >= 2, got {self.M}")
        if self.L < 1:
            problems.append(f"L must be at least 1, got {self.L}")
        given = [name for name in ("rate_nats", "rate_bits", "rate_fraction")
                 if getattr(self, name) is not None]
        if len(given) != 1:
            problems.append("exactly one of rate_nats/rate_bits/"
                            f"rate_fraction is required, got {given or 'none'}")
        else:
            val = getattr(self, given[0])
            if not val > 0:
                problems.append(f"{given[0]} must be positive, got {val}")
            if given[0] == "rate_fraction" and val >= 1.0:
                problems.append(f"rate_fraction must be below 1, got {val}")
        if self.allocation not in ALLOCATION_CHOICES:
            problems.append(f"allocation must be one of {ALLOCATION_CHOICES},"
                            f" got {self.allocation!r}")
        if self.allocation == "leveled":
            if self.gamma is None or self.u is None:
                problems.append("leveled allocation needs gamma and u")
        if self.gamma is not None and self.gamma < 0:
            problems.append(f"gamma must be nonnegative, got {self.gamma}")
        if self.u is not None and not 0.0 <= self.u <= 1.0:
            problems.append(f"u must lie in [0, 1], got {self.u}")
        if self.a != "auto":
            try:
                a = float(self.a)
            except (TypeError, ValueError):
                problems.append(f"a must be a number or 'auto', got {self.a!r}")
            else:
                if a < 0:
                    problems.append(f"a must be nonnegative, got {a}")
        for name in ("eta", "h"):
            val = getattr(self, name)
            if val is not None and val < 0:
                problems.append(f"{name} must be nonnegative, got {val}")
        if self.rho is not None and self.rho < 1.0:
            problems.append(f"rho must be at least 1, got {self.rho}")
        if self.trials < 1:
            problems.append(f"trial count must be at least 1, got {self.trials}")
        if not 0.0 < self.threshold <= 1.0:
            problems.append(f"threshold must lie in (0, 1], got {self.threshold}")
        if not 0.0 < self.pe_target < 1.0:
            problems.append(f"pe_target must lie in (0, 1), got {self.pe_target}")
        if self.outer_delta is not None:
            if not 0.0 <= self.outer_delta < 1.0:
                problems.append("outer_delta must lie in [0, 1), got "
                                f"{self.outer_delta}")
            b = int(math.log2(self.M))
            if self.L > (1 << b) - 1:
                problems.append(f"outer code needs L <= 2^log2(M)-1 = "
                                f"{(1 << b) - 1}, got L={self.L}")
        if len(self.grid) != 3 or any(g < 1 for g in self.grid):
            problems.append(f"grid must be three positive counts, got {self.grid}")
        if self.dtype not in ("float32", "float64"):
            problems.append(f"dtype must be float32 or float64, got {self.dtype!r}")
        if problems:
            raise ConfigError("; ".join(problems))

    def channel(self) -> ChannelParams:
        return derive_channel(self.snr)

    def resolved_rate(self, channel: ChannelParams) -> float:
        if self.rate_nats is not None:
            return self.rate_nats
        if self.rate_bits is not None:
            return self.rate_bits * math.log(2.0)
        return self.rate_fraction * channel.capacity_nats

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        if isinstance(cfg.grid, list):
            cfg.grid = tuple(cfg.grid)
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class TrialRecord:
    """Outcome of one simulated transmission."""

    trial: int
    seed: int
    delta_mis: float
    delta_err: float
    delta_erase: float
    steps: int
    composite_ok: bool | None
    qhat: np.ndarray | None = None
    fhat: np.ndarray | None = None

    def row(self) -> list:
        ok = "" if self.composite_ok is None else int(self.composite_ok)
        return [self.trial, self.seed,
                f"{self.delta_mis:.10g}", f"{self.delta_err:.10g}",
                f"{self.delta_erase:.10g}", self.steps, ok]


@dataclass
class TrialContext:
    """Read-only bundle shipped to trial workers."""

    channel: ChannelParams
    code: CodeParams
    schedule: DecoderSchedule
    master: int
    noiseless: bool
    dtype: str
    rs: RsCode | None = None
    k_rs: int = 0


def _one_trial(ctx: TrialContext, t: int,
               want_outcome: bool = False) -> TrialRecord:
    """Fresh dictionary, message, and noise; decode; tally.

    want_outcome attaches the full DecodeOutcome as `rec.outcome` for
    callers that need the step trace; pool workers never set it.
    """
    seed = derive_key(ctx.master, "trial", t)
    dic = Dictionary(ctx.code, seed,
                     dtype=np.float32 if ctx.dtype == "float32"
                     else np.float64)
    values = np.sqrt(ctx.schedule.allocation.P_ell)
    if ctx.rs is None:
        indices = random_message(ctx.code, derive_key(seed, "msg"))
        sent_symbols = None
    else:
        b = ctx.code.bits_per_section
        nblocks = (ctx.k_rs + 3) // 4
        words = raw_words(derive_key(seed, "rsmsg"), 0, nblocks)
        sent_symbols = tuple(int(w) & ((1 << b) - 1)
                             for w in words[:ctx.k_rs])
        indices = np.array(ctx.rs.encode(list(sent_symbols)),
                           dtype=np.int64)
    coef = CoefficientVector(indices=indices, values=values)
    if ctx.noiseless:
        y = dic.combine(coef)
    else:
        y = transmit(dic, coef, ctx.channel, noise_seed=seed)
    out = adaptive_decode(dic, y, ctx.schedule, sent=coef)

    composite_ok = None
    if ctx.rs is not None:
        dec = out.decoded_indices
        erasures = [int(p) for p in np.flatnonzero(dec < 0)]
        received = [int(v) if v >= 0 else 0 for v in dec]
        res = ctx.rs.decode(received, erasures=erasures)
        composite_ok = bool(res.ok and res.symbols == sent_symbols)
    rec = TrialRecord(trial=t, seed=seed,
                      delta_mis=out.delta_mis, delta_err=out.delta_err,
                      delta_erase=out.delta_erase, steps=out.steps_used,
                      composite_ok=composite_ok,
                      qhat=out.qhat, fhat=out.fhat)
    if want_outcome:
        rec.outcome = out
    return rec


def _worker_count() -> int:
    env = os.environ.get("SUPERPOSE_THREADS", "")
    if env.strip():
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"SUPERPOSE_THREADS must be an integer, "
                              f"got {env!r}")
        if n < 1:
            raise ConfigError(f"SUPERPOSE_THREADS must be positive, got {n}")
        return n
    return os.cpu_count() or 1


def _run_trials(ctx: TrialContext, trials: int,
                fail_threshold: float | None = None,
                fail_cap: int | None = None) -> tuple[list[TrialRecord], bool]:
    """Run trials in index order; optionally abort once failures exceed cap.

    Returns the records produced and whether the run was aborted early.
    Each record is keyed to (master, trial) only, so completed runs are
    identical for any worker count. An aborted run may stop at a
    different trial under a pool (abort lands on chunk boundaries), but
    the over-cap verdict itself is worker-independent: the failure
    count is nondecreasing in the trial index.
    """
    workers = _worker_count()
    records: list[TrialRecord] = []
    failures = 0

    def over() -> bool:
        return (fail_cap is not None and failures > fail_cap)

    if workers == 1:
        for t in range(trials):
            rec = _one_trial(ctx, t)
            records.append(rec)
            if fail_threshold is not None and rec.delta_mis > fail_threshold:
                failures += 1
                if over():
                    return records, True
        return records, False

    chunk = max(workers * 4, 16)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for lo in range(0, trials, chunk):
            hi = min(lo + chunk, trials)
            for rec in pool.map(partial(_one_trial, ctx), range(lo, hi)):
                records.append(rec)
                if (fail_threshold is not None
                        and rec.delta_mis > fail_threshold):
                    failures += 1
            if over():
                return records, True
    return records, False


def wilson_interval(successes: int, total: int,
                    z: float = 1.96) -> tuple[float, float]:
    """Score confidence interval for a binomial proportion."""
    if total < 1:
        raise ValueError("need at least one observation")
    p = successes / total
    denom = 1.0 + z * z / total
    center = (p + z * z / (2 * total)) / denom
    half = z * math.sqrt(p * (1 - p) / total
                         + z * z / (4 * total * total)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _alloc_params(config: ExperimentConfig,
                  channel: ChannelParams) -> tuple[float, float] | None:
    """Map the allocation choice to (gamma, u); None means grid search."""
    if config.allocation == "auto":
        return None
    if config.allocation == "constant":
        return 0.0, 1.0
    if config.allocation == "exponential":
        return channel.capacity_nats, 0.0
    return float(config.gamma), float(config.u)


def _rate_gate(channel: ChannelParams, M: int, L: int, R: float) -> None:
    """Reject rates at or above capacity with the margin that failed."""
    C = channel.capacity_nats
    if R < C:
        return
    ln_m = math.log(M)
    c_tilde = (L / 2.0) * (1.0 - math.exp(-2.0 * C / L))
    r = (c_tilde / R - 1.0) * ln_m
    r1 = 0.25 + math.sqrt(ln_m) / math.sqrt(math.pi)
    gap = (r - r1) / (channel.snr * ln_m)
    raise InfeasibleScheduleError(
        f"rate {R:.6f} nats is not below capacity {C:.6f} nats",
        rate=R, capacity=C, r=r, r1=r1, gap=gap)


def _fixed_slack_point(channel: ChannelParams, M: int, L: int, R: float,
                       a: float, gamma: float, u: float, eta: float,
                       rho: float, h: float,
                       expected: bool) -> OperatingPoint | None:
    """Step recursion with caller-pinned slacks instead of derived ones.

    Mirrors the self-consistent search but runs one pass: the slacks no
    longer depend on the step count. No failure-probability claim is
    attached (pe reported as nan).
    """
    C = channel.capacity_nats
    nu = channel.nu
    ln_m = math.log(M)
    tau = math.sqrt(2.0 * ln_m) + a
    fstar, _ = false_alarm_base(tau, M)
    f = rho * fstar
    wsum, pimean, cnt, pimin = _binned_profile(L, gamma, u, 512)
    l_pi = 1.0 / pimin
    n = L * ln_m / R
    pace = 0.0 if expected else 1.0 / l_pi
    shifts = n * pimean * nu * (1.0 - h)

    x = x_prev = q1_prev = 0.0
    steps = 0
    for _k in range(3000):
        mu = np.sqrt(shifts / (1.0 - x * nu)) - tau
        q1 = float(wsum @ ndtr(mu)) - eta
        qk = q1 - q1_prev - pace - f
        if qk <= 0.0:
            break
        x_prev = x
        x += qk / (1.0 + f / qk)
        q1_prev = q1
        steps += 1
    if steps == 0:
        return None
    mu_final = np.sqrt(n * pimean * nu * (1.0 - h)
                       / (1.0 - x_prev * nu)) - tau
    det_unw = float((cnt / L) @ ndtr(mu_final))
    failed_w = 1.0 - q1_prev
    dwght = failed_w + 2.0 * steps * f + (0.0 if expected else steps / l_pi)
    return OperatingPoint(
        a=a, gamma=gamma, u=u, m=steps, expected=expected,
        detection_weighted=q1_prev, detection_unweighted=det_unw,
        failed_weighted=failed_w, failed_unweighted=1.0 - det_unw,
        false_alarms=steps * f, delta_wght=dwght,
        delta_mis=channel.snr / (2.0 * C) * dwght,
        eta=eta, rho=rho, h=h, f=f, x_final=x_prev,
        pe_total=float("nan"))


def resolve_point(config: ExperimentConfig, channel: ChannelParams,
                  expected: bool) -> OperatingPoint:
    """Select the operating point the config describes.

    a="auto" with allocation "auto" grid-searches all three knobs;
    "auto" with a pinned allocation sweeps a alone. Slack overrides
    switch to the fixed-slack recursion. Raises when nothing fits.
    """
    R = config.resolved_rate(channel)
    _rate_gate(channel, config.M, config.L, R)
    alloc = _alloc_params(config, channel)
    overrides = any(v is not None for v in (config.eta, config.rho, config.h))

    if overrides:
        if config.a == "auto" or alloc is None:
            raise ConfigError("slack overrides need explicit a and allocation")
        pt = _fixed_slack_point(
            channel, config.M, config.L, R, float(config.a),
            alloc[0], alloc[1],
            config.eta if config.eta is not None else 0.0,
            config.rho if config.rho is not None else 1.0,
            config.h if config.h is not None else 0.0, expected)
        if pt is None:
            raise InfeasibleScheduleError(
                "no step fits under the pinned slacks",
                a=float(config.a), eta=config.eta, rho=config.rho,
                h=config.h)
        return pt

    na, ng, nu_ = config.grid
    if config.a == "auto" and alloc is None:
        pt = best_operating_point(channel, config.M, config.L, R,
                                  config.pe_target, metric="mistake_sum",
                                  grid=config.grid, expected=expected)
    elif config.a == "auto":
        pt = None
        for a in np.linspace(0.5, 2.5, na):
            cand = operating_point(channel, config.M, config.L, R, float(a),
                                   alloc[0], alloc[1], config.pe_target,
                                   expected=expected)
            if cand is not None and (pt is None
                                     or cand.mistake_sum < pt.mistake_sum):
                pt = cand
    elif alloc is None:
        pt = None
        for gamma in np.linspace(0.0, channel.capacity_nats, ng):
            for u in np.linspace(0.0, 1.0, nu_):
                cand = operating_point(channel, config.M, config.L, R,
                                       float(config.a), float(gamma),
                                       float(u), config.pe_target,
                                       expected=expected)
                if cand is not None and (pt is None
                                         or cand.mistake_sum < pt.mistake_sum):
                    pt = cand
    else:
        pt = operating_point(channel, config.M, config.L, R,
                             float(config.a), alloc[0], alloc[1],
                             config.pe_target, expected=expected)
    if pt is None:
        raise InfeasibleScheduleError(
            "no operating point found: the first step target never clears "
            "the pace and false-alarm floor at this rate",
            rate=R, M=config.M, L=config.L, expected=expected)
    return pt


def _out_path(config: ExperimentConfig, name: str) -> Path | None:
    if config.out_dir is None:
        return None
    d = Path(config.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d / name


def write_trials_csv(path, records: list[TrialRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRIALS_HEADER)
        for rec in records:
            w.writerow(rec.row())


def write_steps_csv(path, records: list[TrialRecord]) -> None:
    """Per-step weighted tallies, one row per (trial, step)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "k", "qhat", "fhat"])
        for rec in records:
            if rec.qhat is None:
                continue
            for k, (q, f) in enumerate(zip(rec.qhat, rec.fhat), start=1):
                w.writerow([rec.trial, k, f"{q:.10g}", f"{f:.10g}"])


def write_schedule_csv(path, sched: DecoderSchedule) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCHEDULE_HEADER)
        for k in range(sched.m):
            w.writerow([k + 1, f"{sched.q1[k]:.10g}", f"{sched.qk[k]:.10g}",
                        f"{sched.lam_kk[k]:.10g}", f"{sched.w[k]:.10g}",
                        f"{sched.s[k]:.10g}"])


def write_envelope_csv(path, rows: list["EnvelopeRow"]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ENVELOPE_HEADER)
        for row in rows:
            w.writerow([row.M, f"{row.rate_nats:.10g}",
                        f"{row.rate_bits:.10g}",
                        f"{row.ratio_to_capacity:.10g}", row.mode])


@dataclass
class MonteCarloSummary:
    """Aggregates of one simulation run; every number re-derives from
    the per-trial CSV plus the echoed config."""

    config: dict
    rate_nats: float
    rate_bits: float
    n: int
    trials: int
    threshold: float
    failures: int
    p_hat: float
    se: float
    ci95: tuple[float, float]
    mean_delta_mis: float
    max_delta_mis: float
    mean_delta_err: float
    mean_delta_erase: float
    mean_steps: float
    point: dict
    schedule_m: int
    tau: float
    composite_trials: int
    composite_exact: int
    composite_violations: int
    outer_k: int | None
    runtime_s: float
    aborted: bool

    def to_json(self) -> dict:
        d = asdict(self)
        d["ci95"] = list(self.ci95)
        return d


def run_monte_carlo(config: ExperimentConfig,
                    records_out: list | None = None) -> MonteCarloSummary:
    """Simulate config.trials independent transmissions.

    Per-trial seeds are derived from (master seed, trial index), so a
    repeated run reproduces the CSV byte for byte. A failing trial is
    one with mistake fraction above config.threshold. When out_dir is
    set, writes trials.csv, steps.csv, and summary.json there. Pass a
    list as records_out to also receive the TrialRecord objects.
    """
    config.validate()
    channel = config.channel()
    R = config.resolved_rate(channel)
    expected = True if config.expected is None else config.expected
    point = resolve_point(config, channel, expected)
    code = CodeParams(config.L, config.M, R)
    sched = operating_schedule(channel, code, point, config.pe_target)

    rs = None
    k_rs = 0
    if config.outer_delta is not None:
        comp = composite_rate(config.L, R, config.outer_delta,
                              b=code.bits_per_section)
        k_rs = comp.k_rs
        rs = RsCode(code.bits_per_section, config.L, k_rs)

    ctx = TrialContext(channel=channel, code=code, schedule=sched,
                       master=config.seed, noiseless=config.noiseless,
                       dtype=config.dtype, rs=rs, k_rs=k_rs)
    t0 = time.monotonic()
    records, aborted = _run_trials(ctx, config.trials)
    runtime = time.monotonic() - t0
    if records_out is not None:
        records_out.extend(records)

    failures = sum(1 for r in records if r.delta_mis > config.threshold)
    total = len(records)
    p_hat = failures / total
    se = math.sqrt(p_hat * (1.0 - p_hat) / total)
    comp_recs = [r for r in records if r.composite_ok is not None]
    violations = sum(1 for r in comp_recs
                     if r.delta_mis <= config.outer_delta
                     and not r.composite_ok)

    summary = MonteCarloSummary(
        config=config.to_dict(),
        rate_nats=R, rate_bits=R / math.log(2.0), n=code.n,
        trials=total, threshold=config.threshold,
        failures=failures, p_hat=p_hat, se=se,
        ci95=wilson_interval(failures, total),
        mean_delta_mis=float(np.mean([r.delta_mis for r in records])),
        max_delta_mis=float(np.max([r.delta_mis for r in records])),
        mean_delta_err=float(np.mean([r.delta_err for r in records])),
        mean_delta_erase=float(np.mean([r.delta_erase for r in records])),
        mean_steps=float(np.mean([r.steps for r in records])),
        point=_point_dict(point), schedule_m=sched.m, tau=sched.tau,
        composite_trials=len(comp_recs),
        composite_exact=sum(1 for r in comp_recs if r.composite_ok),
        composite_violations=violations,
        outer_k=k_rs if rs is not None else None,
        runtime_s=runtime, aborted=aborted)

    trials_path = _out_path(config, "trials.csv")
    if trials_path is not None:
        write_trials_csv(trials_path, records)
        write_steps_csv(_out_path(config, "steps.csv"), records)
        with open(_out_path(config, "summary.json"), "w") as fh:
            json.dump(summary.to_json(), fh, indent=2)
    return summary


def _point_dict(point: OperatingPoint) -> dict:
    d = asdict(point)
    d["mistake_sum"] = point.mistake_sum
    return d


def single_trial_outcome(config: ExperimentConfig, trial: int = 0):
    """One transmission with its full decoder trace.

    Returns (outcome, schedule, code, point); the outcome carries the
    per-step sizes, candidate counts, and tallies for display.
    """
    config.validate()
    channel = config.channel()
    R = config.resolved_rate(channel)
    expected = True if config.expected is None else config.expected
    point = resolve_point(config, channel, expected)
    code = CodeParams(config.L, config.M, R)
    sched = operating_schedule(channel, code, point, config.pe_target)
    rs = None
    k_rs = 0
    if config.outer_delta is not None:
        comp = composite_rate(config.L, R, config.outer_delta,
                              b=code.bits_per_section)
        k_rs = comp.k_rs
        rs = RsCode(code.bits_per_section, config.L, k_rs)
    ctx = TrialContext(channel=channel, code=code, schedule=sched,
                       master=config.seed, noiseless=config.noiseless,
                       dtype=config.dtype, rs=rs, k_rs=k_rs)
    rec = _one_trial(ctx, trial, want_outcome=True)
    return rec.outcome, sched, code, point


@dataclass
class BoundEvaluation:
    """Reliability-bound evaluation of one configuration."""

    config: dict
    capacity_nats: float
    capacity_bits: float
    rate_nats: float
    rate_bits: float
    ratio_to_capacity: float
    point: dict
    q1: list
    delta_wght: float
    delta_mis: float
    pe_total: float
    schedule_m: int
    tau: float

    def to_json(self) -> dict:
        return asdict(self)


def evaluate_bounds(config: ExperimentConfig) -> tuple[BoundEvaluation,
                                                       DecoderSchedule]:
    """Evaluate the analytical reliability machinery at one config.

    Returns the report plus the materialized schedule whose q1 column
    is the per-step detection-target progression. Writes schedule.csv
    and bounds.json when out_dir is set. Raises InfeasibleScheduleError
    (with margins) when the rate is unreachable.
    """
    config.validate()
    channel = config.channel()
    R = config.resolved_rate(channel)
    expected = False if config.expected is None else config.expected
    point = resolve_point(config, channel, expected)
    code = CodeParams(config.L, config.M, R)
    sched = operating_schedule(channel, code, point, config.pe_target)

    report = BoundEvaluation(
        config=config.to_dict(),
        capacity_nats=channel.capacity_nats,
        capacity_bits=channel.capacity_bits,
        rate_nats=R, rate_bits=R / math.log(2.0),
        ratio_to_capacity=R / channel.capacity_nats,
        point=_point_dict(point),
        q1=[float(q) for q in sched.q1],
        delta_wght=point.delta_wght, delta_mis=point.delta_mis,
        pe_total=point.pe_total, schedule_m=sched.m, tau=sched.tau)

    path = _out_path(config, "schedule.csv")
    if path is not None:
        write_schedule_csv(path, sched)
        with open(_out_path(config, "bounds.json"), "w") as fh:
            json.dump(report.to_json(), fh, indent=2)
    return report, sched


@dataclass
class EnvelopeRow:
    """One point of a rate-versus-section-size envelope."""

    M: int
    rate_nats: float
    rate_bits: float
    ratio_to_capacity: float
    mode: str
    anchor_nats: float = float("nan")
    failures: int = -1
    trials: int = 0
    records: list | None = None
    point: OperatingPoint | None = None


def _envelope_feasible(channel: ChannelParams, M: int, L: int, R: float,
                       target: float, grid: tuple, expected: bool,
                       pe_target: float) -> OperatingPoint | None:
    pt = best_operating_point(channel, M, L, R, pe_target,
                              metric="delta_mis", grid=grid,
                              expected=expected, stop_below=target)
    if pt is not None and pt.delta_mis <= target:
        return pt
    return None


def _bisect_envelope(channel: ChannelParams, M: int, L: int, target: float,
                     grid: tuple, expected: bool, pe_target: float,
                     resolution: float = 1e-3) -> float:
    """Largest rate whose best recursion stays under the mistake target."""
    C = channel.capacity_nats
    lo, hi = 0.02 * C, 0.99 * C
    if _envelope_feasible(channel, M, L, lo, target, grid, expected,
                          pe_target) is None:
        return 0.0
    if _envelope_feasible(channel, M, L, hi, target, grid, expected,
                          pe_target) is not None:
        return hi
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if _envelope_feasible(channel, M, L, mid, target, grid, expected,
                              pe_target) is not None:
            lo = mid
        else:
            hi = mid
    return lo


def large_l_envelope(channel: ChannelParams, M: int, target: float,
                     grid: tuple = (20, 20, 20)) -> float:
    """Envelope rate in the large-system idealization.

    Prefers the closed-form certified point; where the certified set is
    empty (low snr pushes its mistake floor above the target) falls
    back to the idealized step recursion, which is the regime where the
    recursion's own accounting is the sharper of the two.
    """
    cert = certified_rate(channel, M, target)
    if cert is not None:
        return cert[0]
    return _bisect_envelope(channel, M, _LARGE_L, target, grid,
                            expected=True, pe_target=1e-3)


def _simulate_candidate(channel: ChannelParams, M: int, L: int, R: float,
                        target: float, grid: tuple, trials: int,
                        fail_cap: int, master: int,
                        dtype: str) -> tuple[int, list[TrialRecord],
                                             OperatingPoint] | None:
    """Monte Carlo at one candidate rate; None if no schedule fits.

    Aborts as soon as the failure cap is exceeded; the returned count
    is then the running total at the abort point, which is > fail_cap.

    Point selection is the robust grid search, not the attribute
    minimizer: at desk-scale L the recursion-optimal points sit on
    margins thinner than one section's worth of fluctuation, and a
    single lagging step then starves every later one. Schedules with
    few, fat steps lose nothing in the mean and survive the noise.
    """
    point = best_operating_point(channel, M, L, R, 1e-3,
                                 metric="robust", grid=grid,
                                 expected=True, stop_below=target)
    if point is None:
        return None
    code = CodeParams(L, M, R)
    sched = operating_schedule(channel, code, point, 1e-3)
    ctx = TrialContext(channel=channel, code=code, schedule=sched,
                       master=master, noiseless=False, dtype=dtype)
    records, _ = _run_trials(ctx, trials, fail_threshold=target,
                             fail_cap=fail_cap)
    failures = sum(1 for r in records if r.delta_mis > target)
    return failures, records, point


def _simulate_max_rate(channel: ChannelParams, M: int, L: int,
                       anchor: float, target: float, grid: tuple,
                       trials: int, max_failures: int, master_seed: int,
                       dtype: str, resolution: float,
                       probe_trials: int, log=None) -> EnvelopeRow:
    """Largest simulated rate meeting the failure budget, by bisection.

    Probes steer with a scaled-down trial count; the rate the bisection
    lands on is then confirmed at the full count against max_failures,
    descending if the confirmation contradicts the probes. Only a
    confirmed rate is reported, with its full-count records attached.
    The per-rate seed depends on (master_seed, M, rate) alone, so a
    probe replays the leading slice of the confirmation run.
    """
    C = channel.capacity_nats
    ln2 = math.log(2.0)
    probe_cap = max(1, math.ceil(max_failures * probe_trials / trials))
    verdicts: dict[int, bool] = {}

    def probe(ratio: float) -> bool:
        key = round(ratio * 1000)
        if key in verdicts:
            return verdicts[key]
        res = _simulate_candidate(channel, M, L, ratio * C, target, grid,
                                  probe_trials, probe_cap,
                                  derive_key(master_seed, "env", M, key),
                                  dtype)
        ok = res is not None and res[0] <= probe_cap
        if log is not None:
            fstr = "no schedule" if res is None else f"{res[0]} failures"
            log(f"M={M} probe ratio={ratio:.4f} ({probe_trials} trials): "
                f"{fstr}")
        verdicts[key] = ok
        return ok

    def confirm(ratio: float):
        key = round(ratio * 1000)
        res = _simulate_candidate(channel, M, L, ratio * C, target, grid,
                                  trials, max_failures,
                                  derive_key(master_seed, "env", M, key),
                                  dtype)
        if log is not None:
            fstr = "no schedule" if res is None else f"{res[0]} failures"
            log(f"M={M} confirm ratio={ratio:.4f} ({trials} trials): {fstr}")
        return res

    floor = 0.02
    start = min(max(anchor / C, floor), 0.97)
    if probe(start):
        lo = start
        hi = None
        up = start
        while hi is None:
            up = min(up * 1.1, 0.99)
            if probe(up) and up < 0.99:
                lo = up
            else:
                hi = up
    else:
        hi = start
        lo = None
        down = start
        while lo is None:
            down *= 0.85
            if down < floor:
                break
            if probe(down):
                lo = down
            else:
                hi = down
        if lo is None:
            return EnvelopeRow(M=M, rate_nats=0.0, rate_bits=0.0,
                               ratio_to_capacity=0.0, mode="simulation",
                               anchor_nats=anchor)

    while (hi - lo) * C > resolution:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            lo = mid
        else:
            hi = mid

    while lo >= floor:
        res = confirm(lo)
        if res is not None and res[0] <= max_failures:
            R = lo * C
            return EnvelopeRow(M=M, rate_nats=R, rate_bits=R / ln2,
                               ratio_to_capacity=lo, mode="simulation",
                               anchor_nats=anchor, failures=res[0],
                               trials=len(res[1]), records=res[1],
                               point=res[2])
        lo -= max(resolution / C, 0.005)
    return EnvelopeRow(M=M, rate_nats=0.0, rate_bits=0.0,
                       ratio_to_capacity=0.0, mode="simulation",
                       anchor_nats=anchor)


def envelope_search(snr: float, m_values, target: float,
                    mode: str = "large-L", *, grid: tuple = (20, 20, 20),
                    pe_target: float = 1e-3, L: int | None = None,
                    trials: int = 1000, max_failures: int = 10,
                    master_seed: int = 1, probe_trials: int | None = None,
                    dtype: str = "float32", resolution: float = 1e-3,
                    out_csv=None, log=None) -> list[EnvelopeRow]:
    """Maximum rate against section size at a mistake-rate target.

    mode "large-L" evaluates the idealized analytical envelope;
    "bounds" bisects the finite-L accounting (L defaults to M) at
    pe_target; "simulation" bisects by Monte Carlo at desk scale
    (L defaults to 100), reporting the highest rate confirmed with at
    most max_failures trials above the target out of `trials`
    (bisection probes use probe_trials, default trials/4, with the
    failure budget scaled to match). An empty feasible set records
    rate 0.
    """
    if not 0.0 < target < 1.0:
        raise ConfigError(f"target must lie in (0, 1), got {target}")
    if mode not in ENVELOPE_MODES:
        raise ConfigError(f"mode must be one of {ENVELOPE_MODES}, "
                          f"got {mode!r}")
    channel = derive_channel(snr)
    C = channel.capacity_nats
    ln2 = math.log(2.0)
    rows: list[EnvelopeRow] = []

    for M in m_values:
        if M < 2 or (M & (M - 1)) != 0:
            raise ConfigError(f"section sizes must be powers of two, got {M}")
        if mode == "large-L":
            rate = large_l_envelope(channel, M, target, grid)
            rows.append(EnvelopeRow(M=M, rate_nats=rate,
                                    rate_bits=rate / ln2,
                                    ratio_to_capacity=rate / C, mode=mode))
            continue
        if mode == "bounds":
            rate = _bisect_envelope(channel, M, L if L else M, target,
                                    grid, expected=False,
                                    pe_target=pe_target,
                                    resolution=resolution)
            rows.append(EnvelopeRow(M=M, rate_nats=rate,
                                    rate_bits=rate / ln2,
                                    ratio_to_capacity=rate / C, mode=mode))
            continue

        L_eff = L if L else 100
        anchor = large_l_envelope(channel, M, target, grid)
        n_probe = probe_trials if probe_trials else max(100, trials // 4)
        n_probe = min(n_probe, trials)
        rows.append(_simulate_max_rate(channel, M, L_eff, anchor, target,
                                       grid, trials, max_failures,
                                       master_seed, dtype, resolution,
                                       n_probe, log=log))

    if out_csv is not None:
        write_envelope_csv(out_csv, rows)
    return rows


def theorem_point(channel: ChannelParams, M: int, L: int, R: float,
                  grid: tuple = (20, 20, 20),
                  pe_grid=(1e-3, 1e-2, 0.05, 0.1, 0.2,
                           0.5)) -> OperatingPoint | None:
    """Tightest feasible finite-L reliability claim at this geometry.

    Sweeps failure-probability targets from small to large and returns
    the first operating point the full slack accounting supports. None
    means the machinery is vacuous at this scale: no claim, however
    weak, can be certified.
    """
    for pe in pe_grid:
        pt = best_operating_point(channel, M, L, R, pe,
                                  metric="delta_mis", grid=grid,
                                  expected=False)
        if pt is not None:
            return pt
    return None


def dominance_check(records: list[TrialRecord],
                    point: OperatingPoint | None) -> dict:
    """Compare empirical exceedance of the certified mistake rate with
    the certified failure probability plus three binomial standard
    errors. A missing point makes the claim vacuous and the check
    passes by construction."""
    total = len(records)
    if point is None:
        return {"vacuous": True, "ok": True, "trials": total,
                "exceedances": 0, "empirical": 0.0,
                "pe": 1.0, "limit": 1.0}
    exceed = sum(1 for r in records if r.delta_mis > point.delta_mis)
    pe = point.pe_total
    se = math.sqrt(pe * (1.0 - pe) / total)
    limit = pe + 3.0 * se
    return {"vacuous": False, "ok": exceed / total <= limit,
            "trials": total, "exceedances": exceed,
            "empirical": exceed / total, "pe": pe, "limit": limit,
            "delta_mis_bound": point.delta_mis}
