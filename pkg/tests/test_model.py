"""Channel and code parameter arithmetic."""

import math

import pytest

from superpose.model import ChannelParams, CodeParams, c_tilde, derive_channel


def test_capacity_bits_round_numbers():
    # 0.5*log2(1+snr) lands on exact halves for snr in {7, 15, 1}
    assert abs(derive_channel(7.0).capacity_bits - 1.5) < 1e-14
    assert abs(derive_channel(15.0).capacity_bits - 2.0) < 1e-14
    assert abs(derive_channel(1.0).capacity_bits - 0.5) < 1e-14


def test_capacity_nats_definition():
    ch = derive_channel(3.7)
    assert ch.capacity_nats == pytest.approx(0.5 * math.log(4.7), rel=1e-15)
    assert ch.capacity_bits == pytest.approx(ch.capacity_nats / math.log(2))


def test_channel_derived_quantities():
    ch = derive_channel(1.0)
    assert ch.power == 1.0
    assert ch.noise_variance == 1.0
    assert ch.snr == 1.0
    assert ch.nu == pytest.approx(0.5, abs=1e-15)
    assert ch.r0_threshold_rate == pytest.approx(0.25, abs=1e-15)
    assert ch.c0 == ch.capacity_nats


def test_nu_formula():
    ch = derive_channel(7.0)
    assert ch.nu == pytest.approx(7.0 / 8.0, abs=1e-15)
    assert ch.r0_threshold_rate == pytest.approx(ch.nu / 2.0, abs=1e-15)


def test_derive_channel_rejects_bad_snr():
    with pytest.raises(ValueError):
        derive_channel(0.0)
    with pytest.raises(ValueError):
        derive_channel(-2.0)


def test_c_tilde_two_sections_snr_one():
    ch = derive_channel(1.0)
    # (L/2)(1 - e^{-2C/L}) at L=2 is 1 - e^{-C}
    expected = 1.0 - math.exp(-ch.capacity_nats)
    assert c_tilde(ch, 2) == pytest.approx(expected, rel=1e-15)
    assert c_tilde(ch, 2) == pytest.approx(0.2928932, abs=5e-8)


def test_c_tilde_single_section_is_r0():
    for snr in (1.0, 7.0, 15.0):
        ch = derive_channel(snr)
        assert c_tilde(ch, 1) == pytest.approx(ch.r0_threshold_rate, rel=1e-14)


def test_c_tilde_monotone_in_l_and_limits():
    ch = derive_channel(7.0)
    vals = [c_tilde(ch, L) for L in (1, 2, 4, 16, 256, 10**6)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    assert vals[0] == pytest.approx(ch.r0_threshold_rate)
    assert vals[-1] == pytest.approx(ch.capacity_nats, abs=1e-5)
    assert vals[-1] < ch.capacity_nats


def test_c_tilde_rejects_bad_l():
    with pytest.raises(ValueError):
        c_tilde(derive_channel(7.0), 0)


def test_code_params_counts():
    code = CodeParams(L=100, M=512, R=0.5)
    assert code.N == 100 * 512
    assert code.bits_per_section == 9
    assert code.K == 900
    assert code.n == math.ceil(100 * math.log(512) / 0.5)
    # realized rate re-divides by the rounded-up n, so it cannot exceed R
    assert code.realized_rate <= 0.5
    assert code.realized_rate == pytest.approx(100 * math.log(512) / code.n)


def test_code_params_exact_block_length():
    # R = ln(M)/4 makes L*ln(M)/R an exact binary multiple: no ceiling slack
    R = math.log(8) / 4.0
    code = CodeParams(L=4, M=8, R=2.0 * R)
    assert code.n == 8
    assert code.realized_rate == pytest.approx(2.0 * R, rel=1e-15)


@pytest.mark.parametrize("bad", [
    dict(L=0, M=8, R=0.5),
    dict(L=4, M=7, R=0.5),
    dict(L=4, M=1, R=0.5),
    dict(L=4, M=8, R=0.0),
    dict(L=4, M=8, R=-1.0),
])
def test_code_params_validation(bad):
    with pytest.raises(ValueError):
        CodeParams(**bad)


def test_channel_params_frozen():
    ch = ChannelParams(power=7.0, noise_variance=1.0)
    with pytest.raises(AttributeError):
        ch.power = 3.0
