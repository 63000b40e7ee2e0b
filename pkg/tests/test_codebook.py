"""Power allocation, message mapping, and dictionary behavior."""

import math

import numpy as np
import pytest

from superpose.codebook import (ALLOCATION_KINDS, CoefficientVector,
                                Dictionary, decode_indices, encode,
                                make_power_allocation, random_message,
                                read_dictionary_export, transmit)
from superpose.model import ChannelParams, CodeParams, derive_channel
from superpose.rng import derive_key


# ---------------------------------------------------------------- allocation

def test_allocation_kinds_exported():
    assert ALLOCATION_KINDS == ("constant", "exponential", "leveled")


@pytest.mark.parametrize("kind,kwargs", [
    ("constant", {}),
    ("exponential", {}),
    ("leveled", dict(gamma=0.5, u=0.2)),
])
def test_allocation_normalization(ch7, kind, kwargs):
    alloc = make_power_allocation(kind, ch7, 64, **kwargs)
    assert abs(float(alloc.pi_ell.sum()) - 1.0) < 1e-12
    assert abs(float(alloc.P_ell.sum()) - ch7.power) < 1e-12
    assert (alloc.P_ell > 0).all()


def test_constant_allocation_flat(ch7):
    alloc = make_power_allocation("constant", ch7, 10)
    assert np.allclose(alloc.P_ell, ch7.power / 10.0, rtol=1e-15)
    assert alloc.L_pi == pytest.approx(10.0, abs=1e-9)


def test_exponential_two_sections_snr_one(ch1):
    alloc = make_power_allocation("exponential", ch1, 2)
    assert alloc.pi_ell[0] == pytest.approx(0.5857864376, abs=1e-9)
    assert alloc.pi_ell[1] == pytest.approx(0.4142135624, abs=1e-9)


def test_exponential_ratio_invariant(ch7):
    L = 37
    alloc = make_power_allocation("exponential", ch7, L)
    target = math.exp(-2.0 * ch7.capacity_nats / L)
    ratios = alloc.pi_ell[1:] / alloc.pi_ell[:-1]
    assert np.abs(ratios - target).max() < 1e-12


def test_l_pi_at_least_l(ch7):
    for kind, kwargs in (("constant", {}), ("exponential", {}),
                         ("leveled", dict(gamma=0.8, u=0.3))):
        alloc = make_power_allocation(kind, ch7, 50, **kwargs)
        assert alloc.L_pi >= 50 - 1e-9
        if kind == "constant":
            assert alloc.L_pi == pytest.approx(50.0, abs=1e-9)
        else:
            assert alloc.L_pi > 50.0


def test_leveled_floor_dominates(ch7):
    # u >= 1 lifts every section to the floor: back to constant
    alloc = make_power_allocation("leveled", ch7, 16, gamma=0.9, u=1.0)
    assert np.allclose(alloc.P_ell, ch7.power / 16.0, rtol=1e-12)


def test_leveled_parameter_validation(ch7):
    with pytest.raises(ValueError):
        make_power_allocation("leveled", ch7, 8,
                              gamma=ch7.capacity_nats + 0.1, u=0.2)
    with pytest.raises(ValueError):
        make_power_allocation("leveled", ch7, 8, gamma=-0.1, u=0.2)
    with pytest.raises(ValueError):
        make_power_allocation("leveled", ch7, 8, gamma=0.5, u=-0.2)
    with pytest.raises(ValueError):
        make_power_allocation("mystery", ch7, 8)


def test_section_weight(ch7):
    alloc = make_power_allocation("exponential", ch7, 8)
    assert alloc.section_weight(3) == pytest.approx(float(alloc.pi_ell[3]))
    assert alloc.L == 8


# ------------------------------------------------------------------- message

def test_encode_example(ch7):
    code = CodeParams(L=2, M=4, R=0.5)
    alloc = make_power_allocation("constant", ch7, 2)
    coef = encode("0110", code, alloc)
    assert tuple(coef.indices) == (1, 2)
    assert np.allclose(coef.values, np.sqrt(alloc.P_ell))


def test_encode_all_zero_bits(ch7):
    code = CodeParams(L=3, M=8, R=0.5)
    alloc = make_power_allocation("exponential", ch7, 3)
    assert tuple(encode("000000000", code, alloc).indices) == (0, 0, 0)


def test_encode_round_trip(ch7):
    code = CodeParams(L=5, M=16, R=0.5)
    alloc = make_power_allocation("constant", ch7, 5)
    rng = np.random.default_rng(3)
    for _ in range(200):
        bits = "".join(rng.choice(["0", "1"], size=code.K))
        assert decode_indices(encode(bits, code, alloc).indices, code) == bits


def test_encode_validation(ch7):
    code = CodeParams(L=2, M=4, R=0.5)
    alloc = make_power_allocation("constant", ch7, 2)
    with pytest.raises(ValueError):
        encode("011", code, alloc)
    with pytest.raises(ValueError):
        encode("01x0", code, alloc)


def test_random_message_range_and_determinism():
    code = CodeParams(L=200, M=32, R=0.5)
    key = derive_key(5, "msg")
    idx = random_message(code, key)
    assert idx.shape == (200,)
    assert idx.min() >= 0 and idx.max() < 32
    assert np.array_equal(idx, random_message(code, key))
    # masked power-of-two draw is unbiased; crude uniformity check
    counts = np.bincount(random_message(
        CodeParams(L=32000, M=32, R=0.5), key), minlength=32)
    assert counts.min() > 800 and counts.max() < 1200


# ---------------------------------------------------------------- dictionary

def test_dictionary_deterministic(ch7):
    code = CodeParams(L=4, M=8, R=0.5)
    d1 = Dictionary(code, seed=9)
    d2 = Dictionary(code, seed=9)
    assert np.array_equal(d1.matrix, d2.matrix)
    assert not np.array_equal(d1.matrix, Dictionary(code, seed=10).matrix)
    assert d1.matrix.shape == (code.n, code.N)


def test_regenerate_column_matches(ch7):
    code = CodeParams(L=4, M=8, R=0.5)
    dic = Dictionary(code, seed=21)
    for j in (0, 7, 31):
        assert np.array_equal(dic.regenerate_column(j), dic.column(j))


def test_section_of():
    code = CodeParams(L=4, M=8, R=0.5)
    dic = Dictionary(code, seed=1)
    assert dic.section_of(0) == 0
    assert dic.section_of(7) == 0
    assert dic.section_of(8) == 1
    assert dic.section_of(31) == 3


def test_column_variance_band():
    # n = 10^4 draws per column: sample variance within [0.94, 1.06]
    code = CodeParams(L=2, M=4, R=math.log(4) * 2 / 10_000)
    assert code.n == 10_000
    dic = Dictionary(code, seed=33)
    for j in range(code.N):
        v = float(dic.column(j).var())
        assert 0.94 < v < 1.06, (j, v)


def test_dictionary_dtype_guard():
    code = CodeParams(L=2, M=4, R=0.5)
    with pytest.raises(TypeError):
        Dictionary(code, seed=1, dtype=np.int32)
    d32 = Dictionary(code, seed=1, dtype=np.float32)
    assert d32.matrix.dtype == np.float32


def test_combine_and_inner(ch7):
    code = CodeParams(L=4, M=8, R=0.5)
    alloc = make_power_allocation("exponential", ch7, code.L)
    dic = Dictionary(code, seed=2)
    coef = CoefficientVector(indices=np.array([1, 0, 5, 7]),
                             values=np.sqrt(alloc.P_ell))
    y = dic.combine(coef)
    manual = sum(math.sqrt(alloc.P_ell[l]) * dic.column(l * 8 + coef.indices[l])
                 for l in range(4))
    assert np.abs(y - manual).max() < 1e-12
    z = dic.inner(y)
    assert z.shape == (code.N,)
    assert z[9] == pytest.approx(float(dic.column(9) @ y), rel=1e-12)


def test_coefficient_vector_dense(ch7):
    code = CodeParams(L=3, M=4, R=0.5)
    alloc = make_power_allocation("constant", ch7, 3)
    coef = CoefficientVector(indices=np.array([0, 3, 2]),
                             values=np.sqrt(alloc.P_ell))
    beta = coef.dense(code.M)
    assert beta.shape == (12,)
    assert float(beta @ beta) == pytest.approx(ch7.power, rel=1e-12)
    assert list(np.flatnonzero(beta)) == [0, 7, 10]
    assert tuple(coef.flat_positions(code.M)) == (0, 7, 10)


def test_received_power(ch7):
    # E ||X beta||^2 / n = P, checked over fresh dictionary draws
    code = CodeParams(L=4, M=8, R=1.2)
    alloc = make_power_allocation("exponential", ch7, code.L)
    values = np.sqrt(alloc.P_ell)
    samples = np.empty(1000)
    for t in range(samples.size):
        dic = Dictionary(code, seed=derive_key(100, "pw", t), dtype=np.float32)
        idx = random_message(code, derive_key(100, "pwmsg", t))
        y = dic.combine(CoefficientVector(indices=idx, values=values))
        samples[t] = float(y @ y) / code.n
    se = samples.std(ddof=1) / math.sqrt(samples.size)
    assert abs(samples.mean() - ch7.power) < 3.0 * se


def test_transmit_noiseless_limit():
    ch = ChannelParams(power=7.0, noise_variance=0.0)
    code = CodeParams(L=2, M=4, R=0.5)
    alloc = make_power_allocation("constant", ch, 2)
    dic = Dictionary(code, seed=5)
    coef = CoefficientVector(indices=np.array([1, 2]),
                             values=np.sqrt(alloc.P_ell))
    y = transmit(dic, coef, ch, noise_seed=77)
    assert np.array_equal(y, dic.combine(coef))


def test_transmit_noise_statistics(ch7):
    code = CodeParams(L=2, M=4, R=math.log(4) * 2 / 40_000)
    alloc = make_power_allocation("constant", ch7, 2)
    dic = Dictionary(code, seed=6, dtype=np.float32)
    coef = CoefficientVector(indices=np.array([0, 0]),
                             values=np.sqrt(alloc.P_ell))
    y = transmit(dic, coef, ch7, noise_seed=123)
    assert np.array_equal(y, transmit(dic, coef, ch7, noise_seed=123))
    noise = y - dic.combine(coef)
    n = noise.size
    assert abs(float(noise.var()) - 1.0) < 4.0 * math.sqrt(2.0 / n)


def test_export_round_trip(tmp_path, ch7):
    code = CodeParams(L=2, M=4, R=0.8)
    dic = Dictionary(code, seed=14)
    path = tmp_path / "dict.bin"
    dic.export_binary(path)
    mat = read_dictionary_export(path)
    assert mat.shape == (code.n, code.N)
    assert mat.dtype == np.float64
    assert np.array_equal(mat, dic.matrix.astype(np.float64))
    # little-endian u4 header
    raw = path.read_bytes()
    assert int.from_bytes(raw[:4], "little") == code.n
    assert int.from_bytes(raw[4:8], "little") == code.N
    assert len(raw) == 8 + 8 * code.n * code.N
