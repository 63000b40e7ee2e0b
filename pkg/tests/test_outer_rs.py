"""Reed-Solomon outer code over GF(2^b)."""

import itertools
import random

import pytest

from superpose.outer_rs import (CompositeRate, GaloisField, RsCode,
                                bits_to_symbols, composite_rate,
                                symbols_to_bits)


def test_field_arithmetic_gf16():
    gf = GaloisField(4)
    nz = list(range(1, 16))
    for x in nz:
        assert gf.mul(x, gf.inv(x)) == 1
        assert gf.mul(x, 1) == x
        assert gf.mul(x, 0) == 0
    for x in nz:
        for y in nz:
            assert gf.div(gf.mul(x, y), y) == x
    with pytest.raises(ZeroDivisionError):
        gf.div(3, 0)


def test_field_generator_order():
    for b in (2, 3, 4, 8):
        gf = GaloisField(b)
        seen = set()
        x = 1
        for _ in range(2**b - 1):
            seen.add(x)
            x = gf.mul(x, gf.alpha_pow(1))
        assert len(seen) == 2**b - 1


def test_field_unsupported_width():
    with pytest.raises((KeyError, ValueError)):
        GaloisField(17)


def test_rs_parameter_validation():
    with pytest.raises(ValueError):
        RsCode(4, 16, 4)      # n > 2^b - 1
    with pytest.raises(ValueError):
        RsCode(4, 10, 0)
    with pytest.raises(ValueError):
        RsCode(4, 10, 11)


def test_rs_identity_code():
    rs = RsCode(4, 12, 12)
    msg = [3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5, 8]
    assert rs.encode(msg) == msg
    out = rs.decode(msg)
    assert out.ok and out.symbols == tuple(msg)


def test_rs_systematic_prefix():
    rs = RsCode(4, 15, 11)
    msg = list(range(11))
    cw = rs.encode(msg)
    assert cw[:11] == msg
    assert len(cw) == 15
    assert rs.distance == 5


def test_rs_encode_validation():
    rs = RsCode(4, 15, 11)
    with pytest.raises(ValueError):
        rs.encode(list(range(10)))
    with pytest.raises(ValueError):
        rs.encode([16] + [0] * 10)


def _corrupt(cw, gf_size, err_pos, erase_pos, rng):
    received = list(cw)
    for p in err_pos:
        wrong = rng.randrange(1, gf_size)
        received[p] = (received[p] + wrong) % gf_size \
            if gf_size != 16 else received[p] ^ wrong
    for p in erase_pos:
        received[p] = 0
    return received


@pytest.mark.parametrize("n_rs,k_rs", [(15, 11), (15, 9), (15, 7), (12, 8)])
def test_rs_exhaustive_within_capability(n_rs, k_rs):
    # every (e, s) with 2e + s <= d - 1, 200 random patterns each
    rs = RsCode(4, n_rs, k_rs)
    d = rs.distance
    rng = random.Random(1000 + n_rs * 100 + k_rs)
    msg = [rng.randrange(16) for _ in range(k_rs)]
    cw = rs.encode(msg)
    for e in range(d // 2 + 1):
        for s in range(d - 2 * e):
            for _ in range(200):
                pos = rng.sample(range(n_rs), e + s)
                err_pos, erase_pos = pos[:e], pos[e:]
                received = list(cw)
                for p in err_pos:
                    received[p] ^= rng.randrange(1, 16)
                for p in erase_pos:
                    received[p] = rng.randrange(16)
                out = rs.decode(received, erasures=erase_pos)
                assert out.ok, (e, s, out.reason)
                assert out.symbols == tuple(msg), (e, s)
                assert out.errors_corrected == sum(
                    1 for p in err_pos if received[p] != cw[p])


def test_rs_beyond_capability_is_flagged():
    rs = RsCode(4, 15, 11)
    d = rs.distance
    rng = random.Random(9)
    msg = [rng.randrange(16) for _ in range(11)]
    cw = rs.encode(msg)
    miscorrections = 0
    for _ in range(300):
        e = d // 2 + 1    # one error past half-distance
        pos = rng.sample(range(15), e)
        received = list(cw)
        for p in pos:
            received[p] ^= rng.randrange(1, 16)
        out = rs.decode(received)
        # decoding may fail or land on a different codeword; it must
        # never silently return the original message as if untouched
        if out.ok:
            assert out.symbols != tuple(msg)
            miscorrections += 1
    assert miscorrections < 300


def test_rs_all_erasures_at_distance_fails():
    rs = RsCode(4, 15, 11)
    cw = rs.encode(list(range(11)))
    received = list(cw)
    erase = list(range(rs.distance))
    for p in erase:
        received[p] = 0
    out = rs.decode(received, erasures=erase)
    assert not out.ok


def test_rs_erasure_only_full_budget():
    rs = RsCode(4, 15, 9)
    cw = rs.encode(list(range(9)))
    rng = random.Random(4)
    erase = rng.sample(range(15), rs.distance - 1)
    received = [0 if p in erase else v for p, v in enumerate(cw)]
    out = rs.decode(received, erasures=erase)
    assert out.ok and out.symbols == tuple(range(9))
    # every declared position counts as filled, changed or not
    assert out.erasures_filled == len(erase)


def test_rs_decode_deterministic():
    rs = RsCode(4, 15, 11)
    cw = rs.encode(list(range(11)))
    received = list(cw)
    received[3] ^= 5
    received[9] ^= 1
    a = rs.decode(received)
    b = rs.decode(received)
    assert a == b and a.ok


# ------------------------------------------------------------ composite rate

def test_composite_rate_zero_delta():
    comp = composite_rate(100, 0.5, 0.0)
    assert isinstance(comp, CompositeRate)
    assert comp.k_rs == 100
    assert comp.n_rs == 100
    assert comp.rate == pytest.approx(0.5)
    assert comp.realized_delta == 0.0


def test_composite_rate_ten_percent():
    comp = composite_rate(100, 1.0, 0.10)
    assert comp.k_rs == 90
    assert comp.realized_delta == pytest.approx(0.10)
    assert comp.rate == pytest.approx(0.90)


def test_composite_rate_rounds_to_cover():
    # (L - k)/L must be >= delta: k is the largest integer below the line
    comp = composite_rate(15, 1.0, 0.17)
    assert comp.k_rs == 12
    assert comp.realized_delta == pytest.approx(3.0 / 15.0)
    assert comp.realized_delta >= 0.17


def test_composite_rate_validation():
    with pytest.raises(ValueError):
        composite_rate(100, 0.5, 1.0)
    with pytest.raises(ValueError):
        composite_rate(100, 0.5, -0.1)
    with pytest.raises(ValueError):
        composite_rate(10, 0.5, 0.999)   # k would be zero


def test_bits_symbols_round_trip():
    bits = "1011001110101111"
    syms = bits_to_symbols(bits, 4)
    assert syms == [0b1011, 0b0011, 0b1010, 0b1111]
    assert symbols_to_bits(syms, 4) == bits
    with pytest.raises(ValueError):
        bits_to_symbols("101", 2)
    with pytest.raises(ValueError):
        symbols_to_bits([4], 2)
