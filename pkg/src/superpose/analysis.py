"""Analytical engine: detection curves, schedules, and reliability bounds.

Everything here is a deterministic function of the channel, the section
geometry, and the rate. The central object is the detection curve g(x):
starting from an already-explained signal fraction x, it gives the
weighted fraction of terms whose test statistic clears the threshold.
Schedules iterate that curve; the reliability bounds control how far a
random decode can fall below it.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import log_ndtr, ndtr

from .codebook import PowerAllocation, make_power_allocation
from .model import ChannelParams, CodeParams, c_tilde

_LOG_TINY = math.log(1e-300)


class InfeasibleScheduleError(ValueError):
    """Raised when the false-alarm budget cannot fit the progression gap."""

    def __init__(self, msg, **margins):
        super().__init__(msg)
        self.margins = margins


def phi_bar(x):
    """Upper tail of the standard normal."""
    return ndtr(-np.asarray(x, dtype=np.float64))


def log_phi_bar(x):
    return log_ndtr(-np.asarray(x, dtype=np.float64))


def gauss_pdf(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# per-section shifts and the detection curve


def section_shifts(channel: ChannelParams, alloc: PowerAllocation,
                   R: float, h: float, M: int):
    """Per-section noncentrality of the test statistics.

    Uses the analysis blocklength L*lnM/R (not rounded up), so the values
    are exact functions of the rate. Returns the raw shifts and the
    h-deflated ones actually used in the curve.
    """
    if R <= 0:
        raise ValueError("rate must be positive")
    n_real = alloc.L * math.log(M) / R
    base = n_real * alloc.pi_ell * channel.nu
    return base, (1.0 - h) * base


@dataclass(frozen=True)
class ThresholdParams:
    a: float
    M: int

    @property
    def tau(self) -> float:
        return math.sqrt(2.0 * math.log(self.M)) + self.a

    @property
    def delta_a(self) -> float:
        return self.a / math.sqrt(2.0 * math.log(self.M))


class GFunctions:
    """Detection curve of one configuration, in three precision grades.

    exact(x) sums over sections. integral(x) is the continuum version
    (exponentially decaying allocations only), always below exact.
    lower(x) is a closed form below integral, convenient because it
    depends on x through a single normal quantile.
    """

    def __init__(self, channel: ChannelParams, M: int, L: int, R: float,
                 a: float, h: float = 0.0,
                 allocation: PowerAllocation | None = None):
        if allocation is None:
            allocation = make_power_allocation("exponential", channel, L)
        if allocation.L != L:
            raise ValueError("allocation section count mismatch")
        self.channel = channel
        self.M = M
        self.L = L
        self.R = R
        self.a = a
        self.h = h
        self.allocation = allocation
        self.ln_m = math.log(M)
        self.tau = math.sqrt(2.0 * self.ln_m) + a
        self.delta_a = a / math.sqrt(2.0 * self.ln_m)
        self.nu = channel.nu
        self.c_tilde = c_tilde(channel, L)
        self.c_prime = self.c_tilde * (1.0 - h)
        _, self._shifts_h = section_shifts(channel, allocation, R, h, M)
        self._pi = allocation.pi_ell
        # rate written as c_prime / ((1+delta_a)^2 (1 + r/lnM))
        self.r = (self.c_prime / (R * (1.0 + self.delta_a) ** 2)
                  - 1.0) * self.ln_m
        self.r0 = 0.5 / (1.0 + self.delta_a) ** 2
        self.delta_r = (self.r - self.r0) / (self.ln_m + self.r)

    def _check_x(self, x: float) -> float:
        if x < 0.0 or x * self.nu >= 1.0:
            raise ValueError(f"x={x} outside the curve's domain")
        return 1.0 - x * self.nu

    def exact(self, x: float) -> float:
        ux = self._check_x(x)
        mu = np.sqrt(self._shifts_h / ux) - self.tau
        return float(self._pi @ ndtr(mu))

    def exact_unweighted(self, x: float) -> float:
        """Plain section-count average of the detection probabilities."""
        ux = self._check_x(x)
        mu = np.sqrt(self._shifts_h / ux) - self.tau
        return float(np.mean(ndtr(mu)))

    def _require_exponential(self):
        if self.allocation.kind != "exponential":
            raise ValueError(
                "continuum forms are defined for exponential allocations")

    def z_low(self, x: float) -> float:
        ux = self._check_x(x)
        s = math.sqrt((1.0 - self.nu) * self.c_prime / self.R)
        return (s / math.sqrt(ux) - (1.0 + self.delta_a)) \
            * math.sqrt(2.0 * self.ln_m)

    def z_max(self, x: float) -> float:
        ux = self._check_x(x)
        s = math.sqrt(self.c_prime / self.R)
        return (s / math.sqrt(ux) - (1.0 + self.delta_a)) \
            * math.sqrt(2.0 * self.ln_m)

    def integral(self, x: float) -> float:
        """Continuum detection curve by adaptive quadrature."""
        self._require_exponential()
        ux = self._check_x(x)
        zl, zm = self.z_low(x), self.z_max(x)
        ratio = self.R / self.c_prime
        root = math.sqrt(2.0 * self.ln_m)

        def integrand(z):
            lift = (1.0 + self.delta_a + z / root) ** 2
            return (1.0 - ux * ratio * lift) * gauss_pdf(z)

        val, _ = quad(integrand, zl, zm, epsabs=1e-10, limit=200)
        return float(ndtr(zl)) + val / self.nu

    def lower(self, x: float) -> tuple[float, float]:
        """Closed-form floor of the curve; returns (value, z_x)."""
        self._require_exponential()
        ux = self._check_x(x)
        zx = self.z_low(x)
        ratio = self.R / self.c_prime
        root = math.sqrt(2.0 * self.ln_m)
        tail = float(phi_bar(zx))
        pdf = float(gauss_pdf(zx))
        val = (float(ndtr(zx))
               + (x + self.delta_r * ux / self.nu) * tail
               - 2.0 * (1.0 + self.delta_a) * ratio * (ux / self.nu)
               * pdf / root
               - ratio * (ux / self.nu) * zx * pdf / (2.0 * self.ln_m))
        return val, zx

    def lower_prime(self, x: float) -> float:
        """Derivative of the floor, from its tail-moment closed form."""
        self._require_exponential()
        zx = self.z_low(x)
        ratio = self.R / self.c_prime
        root = math.sqrt(2.0 * self.ln_m)
        tail = float(phi_bar(zx))
        pdf = float(gauss_pdf(zx))
        da = self.delta_a
        return ratio * ((1.0 + da) ** 2 * tail
                        + 2.0 * (1.0 + da) * pdf / root
                        + (tail + zx * pdf) / (2.0 * self.ln_m))


def progress_margin(channel: ChannelParams, M: int, r: float,
                    a: float) -> tuple[float, float, float, float]:
    """Certified progression gap and its endpoint.

    Returns (gap, x_r, r0, r1). Requires r above the r1 floor; below it
    the closed-form bound cannot certify progress at this rate.
    """
    ln_m = math.log(M)
    delta_a = a / math.sqrt(2.0 * ln_m)
    r0 = 0.5 / (1.0 + delta_a) ** 2
    r1 = r0 / 2.0 + math.sqrt(ln_m) / (math.sqrt(math.pi) * (1.0 + delta_a))
    if r <= r1:
        raise InfeasibleScheduleError(
            f"r={r:.4f} does not exceed the certification floor r1={r1:.4f}",
            r=r, r1=r1)
    snr = channel.snr
    gap = (r - r1) / (snr * ln_m)
    x_r = 1.0 - r / (snr * ln_m)
    return gap, x_r, r0, r1


def check_progress(curve, x_r: float, gap: float,
                   points: int = 201) -> tuple[bool, float]:
    """Sampled verification that curve(x) - x stays above gap on [0, x_r]."""
    xs = np.linspace(0.0, x_r, max(points, 2))
    margin = min(curve(float(x)) - float(x) for x in xs)
    return margin >= gap, float(margin - gap)


def false_alarm_base(tau: float, M: int) -> tuple[float, float]:
    """Expected false-alarm weight per step and its analytic ceiling."""
    if tau <= 0:
        raise ValueError("threshold must be positive")
    log_exact = math.log(M - 1) + float(log_phi_bar(tau))
    exact = math.exp(log_exact) if log_exact > _LOG_TINY else 0.0
    a = tau - math.sqrt(2.0 * math.log(M))
    log_bound = (-a * math.sqrt(2.0 * math.log(M)) - 0.5 * a * a
                 - math.log(tau * math.sqrt(2.0 * math.pi)))
    bound = math.exp(log_bound) if log_bound > _LOG_TINY else 0.0
    return exact, bound


def relative_entropy_factor(rho: float) -> float:
    """rho*ln(rho) - (rho - 1), the exponent-shaping function."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    return rho * math.log(rho) - (rho - 1.0)


def solve_inflation(target: float) -> float:
    """Invert the exponent-shaping function on [1, inf)."""
    if target <= 0:
        return 1.0
    lo, hi = 1.0, 1e9
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if relative_entropy_factor(mid) < target:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


# ---------------------------------------------------------------------------
# schedules


@dataclass
class DecoderSchedule:
    """Step targets and combining weights handed to the decoder."""

    tau: float
    m: int
    q1: np.ndarray
    qk: np.ndarray
    x: np.ndarray               # running adjusted totals, x[k] after step k+1
    s: np.ndarray
    w: np.ndarray
    lam_kk: np.ndarray
    f: float
    eta: float
    rho: float
    h: float
    allocation: PowerAllocation
    mode: str
    gap: float = float("nan")
    x_r: float = float("nan")

    def lam(self, k_prime: int, k: int) -> float:
        """Full weight of step k_prime's statistic inside step k's."""
        return math.sqrt(self.w[k_prime] / self.s[k])

    def to_json(self) -> dict:
        return {
            "tau": self.tau, "m": self.m, "f": self.f, "eta": self.eta,
            "rho": self.rho, "h": self.h, "mode": self.mode,
            "gap": self.gap, "x_r": self.x_r,
            "allocation": {
                "kind": self.allocation.kind,
                "gamma": self.allocation.gamma,
                "u": self.allocation.u,
                "L": self.allocation.L,
            },
            "q1": self.q1.tolist(), "qk": self.qk.tolist(),
            "x": self.x.tolist(), "s": self.s.tolist(),
            "w": self.w.tolist(), "lam_kk": self.lam_kk.tolist(),
        }


def _series_from_x(x_totals: np.ndarray, nu: float):
    """Combining series: s_k from the explained fraction before step k."""
    m = x_totals.shape[0]
    s = np.empty(m)
    w = np.empty(m)
    lam = np.empty(m)
    prev_x = 0.0
    prev_s = 0.0
    for k in range(m):
        sk = 1.0 / (1.0 - prev_x * nu)
        w[k] = sk - prev_s if k else 1.0
        s[k] = sk
        lam[k] = math.sqrt(w[k] / sk)
        prev_s = sk
        prev_x = x_totals[k]
    return s, w, lam


def certified_schedule(curve: GFunctions, eta: float, rho: float,
                       h: float) -> DecoderSchedule:
    """Schedule under the certified-progress preconditions.

    The false-alarm budget must leave room under the squared progression
    gap after the eta haircut; otherwise the recursion cannot be shown
    to terminate and this raises with the margins in the exception.
    """
    if abs(h - curve.h) > 1e-15:
        raise ValueError("h must match the curve configuration")
    gap, x_r, _, _ = progress_margin(curve.channel, curve.M, curve.r, curve.a)
    if eta >= gap:
        raise InfeasibleScheduleError(
            f"slack eta={eta:.5f} consumes the whole gap={gap:.5f}",
            eta=eta, gap=gap)
    l_pi = curve.allocation.L_pi
    fstar, _ = false_alarm_base(curve.tau, curve.M)
    f = rho * fstar
    budget = (gap - eta) ** 2 / 8.0 - 0.5 / l_pi
    if f > budget:
        raise InfeasibleScheduleError(
            f"false-alarm allowance f={f:.3e} exceeds budget={budget:.3e}",
            f=f, budget=budget, gap=gap, eta=eta, l_pi=l_pi)

    cap = 10 * math.ceil(2.0 / (gap - eta)) + 10
    q1_list, qk_list, x_list = [], [], []
    x = 0.0
    q1_prev = 0.0
    for _ in range(cap):
        q1 = curve.exact(x) - eta
        qk = q1 - q1_prev - 1.0 / l_pi - f
        if qk <= 0.0:
            raise InfeasibleScheduleError(
                "progression stalled before reaching its endpoint",
                q1=q1, q1_prev=q1_prev, x=x)
        x += qk / (1.0 + f / qk)
        q1_list.append(q1)
        qk_list.append(qk)
        x_list.append(x)
        q1_prev = q1
        if q1 >= x_r + gap - eta:
            break
    else:
        raise InfeasibleScheduleError("progression failed to terminate")

    x_tot = np.array(x_list)
    s, w, lam = _series_from_x(x_tot, curve.nu)
    return DecoderSchedule(
        tau=curve.tau, m=len(q1_list), q1=np.array(q1_list),
        qk=np.array(qk_list), x=x_tot, s=s, w=w, lam_kk=lam,
        f=f, eta=eta, rho=rho, h=h, allocation=curve.allocation,
        mode="certified", gap=gap, x_r=x_r)


# ---------------------------------------------------------------------------
# reliability bounds


@dataclass(frozen=True)
class FailureBound:
    term_slack: float
    term_false: float
    term_energy: float

    @property
    def total(self) -> float:
        return self.term_slack + self.term_false + self.term_energy


def failure_probability(l_pi: float, eta: float, rho: float, f: float,
                        m: int, n: float, h: float,
                        c0: float) -> FailureBound:
    """Three-event union bound on a decode straying from its schedule.

    Each term may exceed 1 (a vacuous bound) and is returned as-is;
    exponents are formed in log space so extreme parameters do not
    overflow.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    log_m = math.log(m)
    e1 = log_m - 2.0 * l_pi * eta * eta + m * c0
    e2 = log_m - l_pi * f * relative_entropy_factor(rho) / rho if rho > 1.0 \
        else log_m
    e3 = log_m - (n - m + 1.0) * h * h / 2.0
    def ex(v):
        return math.exp(v) if v > _LOG_TINY else 0.0
    return FailureBound(ex(e1), ex(e2), ex(e3))


def mistake_rate_bound(x_r: float, gap: float, eta: float,
                       channel: ChannelParams) -> tuple[float, float]:
    """Weighted shortfall bound and its section-mistake conversion."""
    delta_wght = (1.0 - x_r) - (gap - eta) / 2.0
    factor = channel.snr / (2.0 * channel.capacity_nats)
    return delta_wght, factor * delta_wght


# ---------------------------------------------------------------------------
# reference parameter selection and the rate-drop report


@dataclass(frozen=True)
class ReferenceParameters:
    a: float
    r_star: float
    c_star: float
    drop_star: float
    r0: float
    r1: float
    gap: float
    fstar_target: float
    iterations: int


def reference_parameters(channel: ChannelParams,
                         M: int) -> ReferenceParameters:
    """Large-system reference choice of threshold offset and rate margin.

    Fixed point of: the margin floor r1 depends on the offset a, the
    false-alarm target is an eighth of the squared gap, and a is set so
    the analytic false-alarm ceiling meets that target.
    """
    if M < 4:
        raise ValueError("section size too small for the reference recipe")
    ln_m = math.log(M)
    root = math.sqrt(2.0 * ln_m)
    C = channel.capacity_nats
    snr = channel.snr
    lead = 2.0 / (1.0 + 1.0 / C)

    a = 1.0
    for it in range(1000):
        delta_a = a / root
        r0 = 0.5 / (1.0 + delta_a) ** 2
        r1 = r0 / 2.0 + math.sqrt(ln_m) / (math.sqrt(math.pi)
                                           * (1.0 + delta_a))
        gap = lead / (snr * ln_m)
        fstar = gap * gap / 8.0
        a_next = math.log(1.0 / (fstar * math.sqrt(2.0 * math.pi) * root)) \
            / root
        if abs(a_next - a) <= 1e-10:
            a = a_next
            break
        a = a_next
    else:
        raise ArithmeticError("reference parameter fixed point did not settle")

    delta_a = a / root
    r0 = 0.5 / (1.0 + delta_a) ** 2
    r1 = r0 / 2.0 + math.sqrt(ln_m) / (math.sqrt(math.pi) * (1.0 + delta_a))
    r_star = r1 + lead
    c_star = C / ((1.0 + delta_a) ** 2 * (1.0 + r_star / ln_m))
    omega1 = 1.0 + 1.0 / C
    drop_star = ((3.0 * math.log(ln_m) + 4.0 * math.log(omega1 * snr)
                  + 4.0 / omega1 - 2.0) / (2.0 * ln_m)
                 + 1.0 / math.sqrt(math.pi * ln_m))
    return ReferenceParameters(a=a, r_star=r_star, c_star=c_star,
                               drop_star=drop_star, r0=r0, r1=r1,
                               gap=gap, fstar_target=fstar, iterations=it + 1)


def closed_form_offset(channel: ChannelParams, M: int) -> float:
    """Printed approximation of the reference threshold offset."""
    ln_m = math.log(M)
    root = math.sqrt(2.0 * ln_m)
    snr = channel.snr
    C = channel.capacity_nats
    a_tilde = 2.0 * math.log(snr * (1.0 + 1.0 / C)
                             / math.pi ** 0.25) / root
    return 1.5 * math.log(ln_m) / root + a_tilde


@dataclass
class RateBoundReport:
    snr: float
    M: int
    L: int
    kappa: float
    R: float
    c_star: float
    drop_star: float
    delta_star: float
    a: float
    r: float
    r0: float
    r1: float
    gap: float
    x_r: float
    eta: float
    rho: float
    h: float
    f: float
    m: int
    l_pi: float
    delta_wght: float
    delta_mis: float
    delta_mis_chain: float
    delta_m: float
    pe_direct: float
    pe_direct_terms: tuple
    pe_explicit: float
    kappa1: float
    kappa2: float
    kappa3: float
    kappa4: float
    feasible: bool
    note: str = ""

    def to_json(self) -> str:
        d = asdict(self)
        d["pe_direct_terms"] = list(self.pe_direct_terms)
        return json.dumps(d, indent=2, sort_keys=True)


def rate_drop_report(channel: ChannelParams, M: int, L: int,
                     kappa: float) -> RateBoundReport:
    """Reliability statement at a rate below the reference rate.

    kappa measures the rate back-off. Two error-probability routes are
    reported: the direct three-term bound at the concrete parameters,
    and the explicit-constant envelope that upper bounds it.
    """
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    ref = reference_parameters(channel, M)
    ln_m = math.log(M)
    snr = channel.snr
    C = channel.capacity_nats
    nu = channel.nu
    alloc = make_power_allocation("exponential", channel, L)
    l_pi = alloc.L_pi

    R = ref.c_star / (1.0 + kappa / ln_m)
    r = ref.r_star + kappa
    delta_a = ref.a / math.sqrt(2.0 * ln_m)
    gap = (r - ref.r1) / (snr * ln_m)
    x_r = 1.0 - r / (snr * ln_m)
    omega = (1.0 + 1.0 / C) / 2.0
    eta = 0.5 * kappa / (snr * ln_m)
    h = kappa / (2.0 * ln_m) ** 1.5
    fstar = 0.125 * (ref.r_star - ref.r1) ** 2 / (snr * ln_m) ** 2
    eps_l = (2.0 * omega * snr * ln_m) ** 2 / l_pi
    rho = (1.0 + kappa * omega / 2.0) ** 2 - eps_l
    feasible = rho >= 1.0 and eta < gap
    note = "" if feasible else \
        "slack terms exceed the budget at this section count"

    m = math.ceil(2.0 / (gap - eta)) if eta < gap else 0
    delta_m = 1.0 / math.sqrt(math.pi * ln_m)
    delta_mis = (3.0 * kappa + 5.0) / (8.0 * C * ln_m) + delta_m / (2.0 * C)
    delta_wght, delta_mis_chain = mistake_rate_bound(x_r, gap, eta, channel)

    delta_star = (ref.c_star - R) / ref.c_star
    kappa1 = 3.0 * m * math.exp(m * max(channel.c0, 0.5)) if m else math.inf
    kappa2 = nu / (2.0 * C)
    kappa3 = min(1.0 / (32.0 * snr * snr), 1.0 / (16.0 * ref.c_star))
    kappa4 = 1.0 / (8.0 * (1.0 + 1.0 / C) * snr * snr * ln_m)
    if m:
        log_pe_exp = (math.log(kappa1)
                      - kappa2 * L * min(kappa3 * delta_star ** 2,
                                         kappa4 * delta_star))
        pe_explicit = math.exp(log_pe_exp) if log_pe_exp < 700 else math.inf
    else:
        pe_explicit = math.inf

    if feasible and m:
        n_real = L * ln_m / R
        f = rho * fstar
        bound = failure_probability(l_pi, eta, rho, f, m, n_real, h,
                                    channel.c0)
        pe_direct = bound.total
        terms = (bound.term_slack, bound.term_false, bound.term_energy)
    else:
        f = fstar
        pe_direct = math.inf
        terms = (math.inf, math.inf, math.inf)

    return RateBoundReport(
        snr=snr, M=M, L=L, kappa=kappa, R=R, c_star=ref.c_star,
        drop_star=ref.drop_star, delta_star=delta_star, a=ref.a, r=r,
        r0=ref.r0, r1=ref.r1, gap=gap, x_r=x_r, eta=eta, rho=rho, h=h,
        f=f, m=m, l_pi=l_pi, delta_wght=delta_wght, delta_mis=delta_mis,
        delta_mis_chain=delta_mis_chain, delta_m=delta_m,
        pe_direct=pe_direct, pe_direct_terms=terms,
        pe_explicit=pe_explicit, kappa1=kappa1, kappa2=kappa2,
        kappa3=kappa3, kappa4=kappa4, feasible=feasible, note=note)


# ---------------------------------------------------------------------------
# tail inequalities


def weighted_bernoulli_tail(alpha, probs, threshold: float) -> dict:
    """Large-deviation bounds for a weighted average of coin flips.

    The effective sample count is the reciprocal of the largest weight.
    The lower bound applies when the threshold sits below the mean, the
    upper when above; both are returned.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if np.any(alpha < 0) or abs(alpha.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be nonnegative and sum to 1")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    n_alpha = 1.0 / float(alpha.max())
    r_star = float(alpha @ probs)

    def kl(p, q):
        t = 0.0
        if p > 0:
            t += p * math.log(p / q)
        if p < 1:
            t += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
        return t

    d = kl(threshold, r_star)
    bound = math.exp(-n_alpha * d)
    return {
        "n_alpha": n_alpha,
        "mean": r_star,
        "lower": bound if threshold <= r_star else 1.0,
        "upper": bound if threshold >= r_star else 1.0,
    }


def divergence_chain(p: float, p_star: float) -> tuple[float, float,
                                                       float, float]:
    """Successively weaker divergence lower bounds, largest first."""
    if not 0.0 < p_star <= p < 1.0:
        raise ValueError("need 0 < p_star <= p < 1")
    d_ber = (p * math.log(p / p_star)
             + (1.0 - p) * math.log((1.0 - p) / (1.0 - p_star)))
    d_poi = p * math.log(p / p_star) - (p - p_star)
    d_hel = 2.0 * (math.sqrt(p) - math.sqrt(p_star)) ** 2
    d_sq = (p - p_star) ** 2 / (2.0 * p)
    return d_ber, d_poi, d_hel, d_sq


# ---------------------------------------------------------------------------
# operating points: the practical recursion used for reports and search


_profile_cache: dict = {}


def _binned_profile(L: int, gamma: float, u: float, nbins: int):
    """Contiguous-bin compression of a leveled allocation's weights.

    Bin weights are exact sums; the shift within a bin uses the bin's
    mean weight. Exact when nbins >= L.
    """
    key = (L, round(gamma, 12), round(u, 12), nbins)
    hit = _profile_cache.get(key)
    if hit is not None:
        return hit
    ell = np.arange(L)
    raw = np.maximum(np.exp(-2.0 * gamma * ell / L), u)
    total = raw.sum()
    edges = np.unique(np.linspace(0, L, min(nbins, L) + 1).astype(int))
    wsum = np.add.reduceat(raw / total, edges[:-1])
    cnt = np.diff(edges)
    out = (wsum, wsum / cnt, cnt, float(raw.min() / total))
    if len(_profile_cache) > 4096:
        _profile_cache.clear()
    _profile_cache[key] = out
    return out


@dataclass(frozen=True)
class OperatingPoint:
    """One evaluated configuration of the practical recursion."""

    a: float
    gamma: float
    u: float
    m: int
    expected: bool
    detection_weighted: float
    detection_unweighted: float
    failed_weighted: float
    failed_unweighted: float
    false_alarms: float
    delta_wght: float
    delta_mis: float
    eta: float
    rho: float
    h: float
    f: float
    x_final: float
    pe_total: float

    @property
    def mistake_sum(self) -> float:
        return self.failed_unweighted + self.false_alarms


def operating_point(channel: ChannelParams, M: int, L: int, R: float,
                    a: float, gamma: float, u: float, pe_target: float,
                    expected: bool = False, nbins: int = 512,
                    max_rounds: int = 12) -> OperatingPoint | None:
    """Run the practical step recursion at one parameter choice.

    The slack terms scale with the step count, so the recursion is
    re-run with the achieved count until it reproduces itself. With
    expected=True the slacks are dropped entirely (the large-system
    idealization); pe_target is then unused. Returns None when not even
    one step fits.
    """
    C = channel.capacity_nats
    nu = channel.nu
    ln_m = math.log(M)
    tau = math.sqrt(2.0 * ln_m) + a
    fstar, _ = false_alarm_base(tau, M)
    wsum, pimean, cnt, pimin = _binned_profile(L, gamma, u, nbins)
    l_pi = 1.0 / pimin
    n = L * ln_m / R
    c0 = channel.c0

    m = 10
    eta = h = 0.0
    rho = 1.0
    f = fstar
    for _ in range(max_rounds):
        if not expected:
            lt = math.log(3.0 * m / pe_target)
            eta = math.sqrt((m * c0 + lt) / (2.0 * l_pi))
            h = math.sqrt(2.0 * lt / max(n - m + 1.0, 1.0))
            rho = solve_inflation(lt / (l_pi * fstar))
            f = rho * fstar
        pace = 0.0 if expected else 1.0 / l_pi
        shifts = n * pimean * nu * (1.0 - h)

        x = 0.0
        x_prev = 0.0
        q1_prev = 0.0
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
        if expected or steps == m:
            m = steps
            break
        m = steps

    mu_final = np.sqrt(n * pimean * nu * (1.0 - h)
                       / (1.0 - x_prev * nu)) - tau
    det_unw = float((cnt / L) @ ndtr(mu_final))
    failed_w = 1.0 - q1_prev
    false = m * f
    dwght = failed_w + 2.0 * m * f + (0.0 if expected else m / l_pi)
    pe = pe_target if not expected else 0.0
    return OperatingPoint(
        a=a, gamma=gamma, u=u, m=m, expected=expected,
        detection_weighted=q1_prev, detection_unweighted=det_unw,
        failed_weighted=failed_w, failed_unweighted=1.0 - det_unw,
        false_alarms=false, delta_wght=dwght,
        delta_mis=channel.snr / (2.0 * C) * dwght,
        eta=eta, rho=rho, h=h, f=f, x_final=x_prev, pe_total=pe)


def best_operating_point(channel: ChannelParams, M: int, L: int, R: float,
                         pe_target: float, metric: str = "mistake_sum",
                         grid: tuple = (20, 20, 20), expected: bool = False,
                         nbins: int = 512,
                         stop_below: float | None = None):
    """Search the (a, gamma, u) grid for the best operating point.

    metric names an OperatingPoint attribute to minimize. stop_below
    short-circuits the scan once any point beats that value, which is
    what a feasibility probe wants.

    metric="robust" instead treats stop_below as a mistake-rate ceiling
    and picks, among points under it, the one with the fewest steps and
    then the smallest threshold offset. Schedules chosen this way keep
    per-step detection increments large relative to their finite-L
    fluctuation, where the attribute-minimizing points tend to sit on
    razor-thin margins that a single unlucky step cannot recover from.
    """
    na, ng, nu_ = grid
    if metric == "robust" and stop_below is None:
        raise ValueError("metric='robust' needs stop_below as the "
                         "mistake-rate ceiling")
    best = None
    best_key = None
    for a in np.linspace(0.5, 2.5, na):
        for gamma in np.linspace(0.0, channel.capacity_nats, ng):
            for u in np.linspace(0.0, 1.0, nu_):
                pt = operating_point(channel, M, L, R, float(a),
                                     float(gamma), float(u), pe_target,
                                     expected=expected, nbins=nbins)
                if pt is None:
                    continue
                if metric == "robust":
                    if pt.delta_mis > stop_below:
                        continue
                    key = (pt.m, pt.a, pt.delta_mis)
                    if best_key is None or key < best_key:
                        best, best_key = pt, key
                    continue
                v = getattr(pt, metric)
                if best is None or v < getattr(best, metric):
                    best = pt
                    if stop_below is not None and v <= stop_below:
                        return best
    return best


def operating_schedule(channel: ChannelParams, code: CodeParams,
                       point: OperatingPoint,
                       pe_target: float) -> DecoderSchedule:
    """Materialize a full decoder schedule at an operating point.

    Exact per-section weights (no binning); the step targets come from
    the same recursion the operating point summarized.
    """
    if point.u >= 1.0 or point.gamma == 0.0:
        alloc = make_power_allocation("constant", channel, code.L)
    else:
        alloc = make_power_allocation("leveled", channel, code.L,
                                      u=point.u, gamma=point.gamma)
    ln_m = math.log(code.M)
    tau = math.sqrt(2.0 * ln_m) + point.a
    nu = channel.nu
    n = code.L * ln_m / code.R
    shifts = n * alloc.pi_ell * nu * (1.0 - point.h)
    l_pi = alloc.L_pi

    pace = 0.0 if point.expected else 1.0 / l_pi
    q1_list, qk_list, x_list = [], [], []
    x = 0.0
    q1_prev = 0.0
    for _k in range(3000):
        mu = np.sqrt(shifts / (1.0 - x * nu)) - tau
        q1 = float(alloc.pi_ell @ ndtr(mu)) - point.eta
        qk = q1 - q1_prev - pace - point.f
        if qk <= 0.0:
            break
        x += qk / (1.0 + point.f / qk)
        q1_list.append(q1)
        qk_list.append(qk)
        x_list.append(x)
        q1_prev = q1
    if not q1_list:
        raise InfeasibleScheduleError(
            "no step fits at this configuration", a=point.a)

    x_tot = np.array(x_list)
    s, w, lam = _series_from_x(x_tot, nu)
    return DecoderSchedule(
        tau=tau, m=len(q1_list), q1=np.array(q1_list),
        qk=np.array(qk_list), x=x_tot, s=s, w=w, lam_kk=lam,
        f=point.f, eta=point.eta, rho=point.rho, h=point.h,
        allocation=alloc, mode="expected" if point.expected else "practical")


def certified_rate(channel: ChannelParams, M: int, target: float,
                   a_grid: int = 3001) -> tuple[float, float] | None:
    """Largest closed-form-certified rate at mistake target, or None.

    Exponential allocation, large-section-count limit. The back-off r
    is pinned by the mistake budget; each offset a is admissible only
    when the per-step false-alarm weight fits under the squared-gap
    criterion. Returns (rate, a). None means the budget sits below the
    certifiable floor for every offset.
    """
    if not 0.0 < target < 1.0:
        raise ValueError("target must be in (0, 1)")
    ln_m = math.log(M)
    root = math.sqrt(2.0 * ln_m)
    C = channel.capacity_nats
    snr = channel.snr
    best = None
    for a in np.linspace(0.0, 3.0, a_grid):
        da = a / root
        r0 = 0.5 / (1.0 + da) ** 2
        r1 = r0 / 2.0 + math.sqrt(ln_m) / (math.sqrt(math.pi) * (1.0 + da))
        # delta_mis = (r + r1)/(4 C lnM) == target, solved for r
        r = 4.0 * target * C * ln_m - r1
        if r <= r1:
            continue
        gap = (r - r1) / (snr * ln_m)
        fstar, _ = false_alarm_base(root + a, M)
        if fstar > gap * gap / 8.0:
            continue
        R = C / ((1.0 + da) ** 2 * (1.0 + r / ln_m))
        if best is None or R > best[0]:
            best = (R, float(a))
    return best
