"""Successive decoder: step statistics, pacing, tallies."""

import math

import numpy as np
import pytest

from superpose.codebook import (CoefficientVector, Dictionary,
                                make_power_allocation, random_message,
                                transmit)
from superpose.decoder import (CORRECT, ERASE_MULTIPLE, ERASE_NONE, ERROR,
                               DecodeOutcome, adaptive_decode,
                               basis_orthogonality, combined_statistic,
                               first_step_statistics, orthogonal_component,
                               pace_select, residual_decode, tally_mistakes,
                               write_trace)
from superpose.analysis import best_operating_point, operating_schedule
from superpose.model import ChannelParams, CodeParams, derive_channel
from superpose.rng import derive_key


def _noiseless_setup():
    """Tiny config where the first step decodes everything exactly."""
    ch = derive_channel(7.0)
    code = CodeParams(L=8, M=16, R=0.015 * ch.capacity_nats)
    pt = best_operating_point(ch, code.M, code.L, code.R, pe_target=1e-3,
                              metric="mistake_sum", grid=(4, 3, 3),
                              expected=True)
    sched = operating_schedule(ch, code, pt, 1e-3)
    return ch, code, sched


def test_first_step_statistics_matches_manual(ch7):
    code = CodeParams(L=4, M=8, R=0.8)
    dic = Dictionary(code, seed=3)
    y = dic.column(5) * 2.0 + 0.1
    z = first_step_statistics(dic, y)
    manual = dic.matrix.T @ y / np.linalg.norm(y)
    assert np.abs(z - manual).max() < 1e-10


def test_first_step_statistics_rejects_zero():
    code = CodeParams(L=2, M=4, R=0.5)
    dic = Dictionary(code, seed=3)
    with pytest.raises(ValueError):
        first_step_statistics(dic, np.zeros(code.n))


def test_orthogonal_component_in_span_degenerates(rng):
    n = 40
    b1 = rng.normal(size=n)
    assert orthogonal_component([b1], [float(b1 @ b1)], 3.0 * b1) is None


def test_orthogonal_component_perpendicular_passes_through(rng):
    n = 40
    b1 = rng.normal(size=n)
    fit = rng.normal(size=n)
    fit -= (fit @ b1) / (b1 @ b1) * b1
    g = orthogonal_component([b1], [float(b1 @ b1)], fit)
    assert np.abs(g + fit).max() < 1e-10


def test_orthogonal_component_random_basis(rng):
    n, k = 50, 5
    basis, sqnorms = [], []
    for _ in range(k):
        v = rng.normal(size=n)
        g = orthogonal_component(basis, sqnorms, -v)
        basis.append(g)
        sqnorms.append(float(g @ g))
    for i in range(k):
        for j in range(i + 1, k):
            dot = abs(basis[i] @ basis[j]) / math.sqrt(sqnorms[i] * sqnorms[j])
            assert dot < 1e-10
    assert basis_orthogonality(basis) < 1e-10


def test_combined_statistic_identity():
    z = np.arange(5.0)
    assert np.array_equal(combined_statistic(z * 0.0, z, 1.0), z)
    with pytest.raises(ValueError):
        combined_statistic(z, z, 0.0)
    with pytest.raises(ValueError):
        combined_statistic(z, z, 1.5)


def test_combined_statistic_incremental_equals_direct(rng):
    # fold k streams with the schedule weights; compare to the direct
    # weighted sum sum_j sqrt(w_j/s_k) z_j
    k = 6
    zs = [rng.normal(size=32) for _ in range(k)]
    w = rng.uniform(0.2, 2.0, size=k)
    s = np.cumsum(w)
    comb = zs[0].copy()
    for j in range(1, k):
        lam = math.sqrt(w[j] / s[j])
        comb = combined_statistic(comb, zs[j], lam)
    direct = sum(math.sqrt(w[j] / s[k - 1]) * zs[j] for j in range(k))
    assert np.abs(comb - direct).max() < 1e-12


def test_pace_select_takes_largest_within_budget():
    z = np.array([0.1, 5.0, 3.0, 4.0, 2.0, 1.0])
    cand = np.arange(6)
    pi_col = np.full(6, 1.0 / 4.0)   # four sections' worth of weight
    picked = pace_select(cand, z, pi_col, q1k=0.75, size_prev=0.0)
    assert list(picked) == [1, 3, 2]


def test_pace_select_tie_prefers_lower_index():
    z = np.array([2.0, 2.0, 2.0])
    pi_col = np.full(3, 0.5)
    picked = pace_select(np.arange(3), z, pi_col, q1k=0.5, size_prev=0.0)
    assert list(picked) == [0]


def test_pace_select_empty_candidates():
    picked = pace_select(np.array([], dtype=np.int64), np.array([]),
                         np.array([]), q1k=0.5, size_prev=0.0)
    assert picked.size == 0


def test_pace_select_respects_prior_size():
    z = np.array([3.0, 2.0])
    pi_col = np.full(2, 0.4)
    picked = pace_select(np.arange(2), z, pi_col, q1k=0.5, size_prev=0.45)
    assert picked.size == 0


def test_adaptive_decode_noiseless_exact():
    ch, code, sched = _noiseless_setup()
    alloc = sched.allocation
    values = np.sqrt(alloc.P_ell)
    for t in range(10):
        seed = derive_key(55, "nl", t)
        dic = Dictionary(code, seed)
        idx = random_message(code, derive_key(seed, "msg"))
        coef = CoefficientVector(indices=idx, values=values)
        y = dic.combine(coef)
        out = adaptive_decode(dic, y, sched, sent=coef)
        out = tally_mistakes(out, coef, alloc, code.M)
        assert out.delta_mis == 0.0
        assert out.delta_err == 0.0 and out.delta_erase == 0.0
        assert np.array_equal(out.decoded_indices, idx)
        assert out.stop_reason in ("L terms decoded", "step limit")


def test_adaptive_decode_deterministic(ch7):
    code = CodeParams(L=16, M=16, R=0.4 * ch7.capacity_nats)
    pt = best_operating_point(ch7, code.M, code.L, code.R, pe_target=1e-3,
                              metric="mistake_sum", grid=(5, 4, 4),
                              expected=True)
    sched = operating_schedule(ch7, code, pt, 1e-3)
    values = np.sqrt(sched.allocation.P_ell)
    seed = derive_key(56, "det")
    dic = Dictionary(code, seed)
    coef = CoefficientVector(indices=random_message(code, derive_key(seed, "m")),
                             values=values)
    y = transmit(dic, coef, ch7, noise_seed=seed)
    a = adaptive_decode(dic, y, sched, sent=coef)
    b = adaptive_decode(dic, y, sched, sent=coef)
    assert a.selected_per_step == b.selected_per_step
    assert a.stop_reason == b.stop_reason


def test_adaptive_decode_paces_each_step(ch7):
    code = CodeParams(L=32, M=16, R=0.45 * ch7.capacity_nats)
    pt = best_operating_point(ch7, code.M, code.L, code.R, pe_target=1e-3,
                              metric="mistake_sum", grid=(5, 4, 4),
                              expected=True)
    sched = operating_schedule(ch7, code, pt, 1e-3)
    values = np.sqrt(sched.allocation.P_ell)
    seed = derive_key(57, "pace")
    dic = Dictionary(code, seed)
    coef = CoefficientVector(indices=random_message(code, derive_key(seed, "m")),
                             values=values)
    y = transmit(dic, coef, ch7, noise_seed=seed)
    out = adaptive_decode(dic, y, sched, sent=coef)
    for k, size in enumerate(out.size_per_step):
        assert size <= sched.q1[k] + 1e-9
    # selections never repeat across steps
    seen = set()
    for sel in out.selected_per_step:
        for j in sel:
            assert j not in seen
            seen.add(j)
    assert out.steps_used <= sched.m


def test_adaptive_decode_shape_guards(ch7):
    code = CodeParams(L=4, M=8, R=0.5)
    _, _, sched = _noiseless_setup()     # L=8 schedule, wrong for this dic
    dic = Dictionary(code, seed=1)
    with pytest.raises(ValueError):
        adaptive_decode(dic, np.zeros(code.n + 1), sched)


def test_residual_decode_noiseless_matches(ch7):
    ch, code, sched = _noiseless_setup()
    values = np.sqrt(sched.allocation.P_ell)
    seed = derive_key(58, "res")
    dic = Dictionary(code, seed)
    coef = CoefficientVector(indices=random_message(code, derive_key(seed, "m")),
                             values=values)
    y = dic.combine(coef)
    out = residual_decode(dic, y, sched.tau, sched.m, sched.allocation,
                          sent=coef)
    out = tally_mistakes(out, coef, sched.allocation, code.M)
    assert out.delta_mis == 0.0
    with pytest.raises(ValueError):
        residual_decode(dic, y, sched.tau, 0, sched.allocation)


def test_residual_and_adaptive_comparable(ch7):
    # same channel draws through both decoders: mean mistake rates stay
    # within a factor of two of each other
    code = CodeParams(L=64, M=64, R=0.3 * ch7.capacity_nats)
    pt = best_operating_point(ch7, code.M, code.L, code.R, pe_target=1e-3,
                              metric="mistake_sum", grid=(8, 6, 6),
                              expected=True)
    sched = operating_schedule(ch7, code, pt, 1e-3)
    alloc = sched.allocation
    values = np.sqrt(alloc.P_ell)
    mis_a, mis_r = [], []
    for t in range(40):
        seed = derive_key(777, "cmp", t)
        dic = Dictionary(code, seed, dtype=np.float32)
        idx = random_message(code, derive_key(seed, "msg"))
        coef = CoefficientVector(indices=idx, values=values)
        y = transmit(dic, coef, ch7, noise_seed=seed)
        oa = tally_mistakes(adaptive_decode(dic, y, sched, sent=coef),
                            coef, alloc, code.M)
        orr = tally_mistakes(
            residual_decode(dic, y, sched.tau, sched.m, alloc, sent=coef),
            coef, alloc, code.M)
        mis_a.append(oa.delta_mis)
        mis_r.append(orr.delta_mis)
    mean_a, mean_r = float(np.mean(mis_a)), float(np.mean(mis_r))
    assert mean_a > 0 and mean_r > 0
    assert mean_r <= 2.0 * mean_a
    assert mean_a <= 2.0 * mean_r


# ------------------------------------------------------------------- tallies

def _outcome_with(selections, L, M):
    return DecodeOutcome(selected_per_step=[np.asarray(s, dtype=np.int64)
                                            for s in selections],
                         size_per_step=[0.0] * len(selections),
                         candidates_per_step=[L * M] * len(selections),
                         steps_used=len(selections), stop_reason="test")


def test_tally_one_wrong_one_correct(ch7):
    L, M = 2, 4
    alloc = make_power_allocation("constant", ch7, L)
    sent = CoefficientVector(indices=np.array([1, 2]),
                             values=np.sqrt(alloc.P_ell))
    # section 0 decodes column 3 (wrong), section 1 decodes 4+2 (right)
    out = _outcome_with([[3, 6]], L, M)
    out = tally_mistakes(out, sent, alloc, M)
    assert out.delta_err == pytest.approx(0.5)
    assert out.delta_erase == 0.0
    assert out.delta_mis == pytest.approx(1.0)
    assert list(out.section_status) == [ERROR, CORRECT]
    assert list(out.decoded_indices) == [3, 2]


def test_tally_erasures(ch7):
    L, M = 4, 4
    alloc = make_power_allocation("constant", ch7, L)
    sent = CoefficientVector(indices=np.array([0, 1, 2, 3]),
                             values=np.sqrt(alloc.P_ell))
    # section 0 untouched; section 1 double-picked; sections 2, 3 correct
    out = _outcome_with([[5, 6], [10, 15]], L, M)
    out = tally_mistakes(out, sent, alloc, M)
    assert list(out.section_status) == [ERASE_NONE, ERASE_MULTIPLE,
                                        CORRECT, CORRECT]
    assert out.delta_err == 0.0
    assert out.delta_erase == pytest.approx(0.5)
    assert out.delta_mis == pytest.approx(0.5)
    assert list(out.decoded_indices) == [-1, -1, 2, 3]


def test_tally_weighted_identity(ch7):
    # delta_wght = (1 - sum qhat) + sum fhat, exactly
    L, M = 4, 4
    alloc = make_power_allocation("exponential", ch7, L)
    sent = CoefficientVector(indices=np.array([0, 1, 2, 3]),
                             values=np.sqrt(alloc.P_ell))
    out = _outcome_with([[0, 5], [9, 14]], L, M)
    out = tally_mistakes(out, sent, alloc, M)
    assert out.delta_wght == pytest.approx(
        (1.0 - sum(out.qhat)) + sum(out.fhat), abs=1e-12)
    pi = alloc.pi_ell
    # step 1 catches sections 0, 1; step 2 adds a false pick in section 2
    assert out.qhat[0] == pytest.approx(pi[0] + pi[1])
    assert out.fhat[1] == pytest.approx(pi[2])


def test_tally_mis_vs_wght_constant_allocation(ch7):
    # with flat weights the unweighted mistake sum never exceeds the
    # weighted failed-plus-false total
    L, M = 6, 4
    alloc = make_power_allocation("constant", ch7, L)
    rng = np.random.default_rng(8)
    values = np.sqrt(alloc.P_ell)
    for _ in range(1000):
        sent = CoefficientVector(
            indices=rng.integers(0, M, size=L), values=values)
        ncols = rng.integers(0, L + 2)
        cols = rng.choice(L * M, size=ncols, replace=False)
        out = _outcome_with([cols], L, M)
        out = tally_mistakes(out, sent, alloc, M)
        assert out.delta_mis <= out.delta_wght + 1e-12


def test_write_trace(tmp_path, ch7):
    ch, code, sched = _noiseless_setup()
    values = np.sqrt(sched.allocation.P_ell)
    seed = derive_key(59, "tr")
    dic = Dictionary(code, seed)
    coef = CoefficientVector(indices=random_message(code, derive_key(seed, "m")),
                             values=values)
    out = adaptive_decode(dic, dic.combine(coef), sched, sent=coef)
    out = tally_mistakes(out, coef, sched.allocation, code.M)
    path = tmp_path / "trace.csv"
    write_trace(path, out)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "step,size_1k,qhat_k,fhat_k,candidates"
    assert len(lines) == out.steps_used + 1
