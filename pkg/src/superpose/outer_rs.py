"""Algebraic outer code over GF(2^b), one symbol per section.

The inner decoder hands back one index per section, some marked
unreliable. This layer wraps those indices in a distance-d block code
so that e wrong indices and s unmarked... rather, s marked-unknown ones
are repaired whenever 2e + s < d. Symbol size matches the section index
width, so the mistake arithmetic of the composite code lines up with
the section mistake rate one-for-one.
"""

from dataclasses import dataclass

# One primitive polynomial per field width (bitmask includes the x^b term).
_PRIMITIVE = {
    2: 0b111, 3: 0b1011, 4: 0b10011, 5: 0b100101,
    6: 0b1000011, 7: 0b10001001, 8: 0b100011101,
    9: 0b1000010001, 10: 0b10000001001, 11: 0b100000000101,
    12: 0b1000001010011, 13: 0b10000000011011, 14: 0b100010001000011,
    15: 0b1000000000000011, 16: 0b10001000000001011,
}


class GaloisField:
    """GF(2^b) arithmetic through log/antilog tables."""

    def __init__(self, b: int):
        if b not in _PRIMITIVE:
            raise ValueError(f"no generator polynomial tabled for b={b}")
        self.b = b
        self.order = 1 << b
        poly = _PRIMITIVE[b]
        exp = [0] * (2 * self.order)
        log = [0] * self.order
        x = 1
        for i in range(self.order - 1):
            exp[i] = x
            log[x] = i
            x <<= 1
            if x & self.order:
                x ^= poly
        if x != 1:
            raise AssertionError("generator element does not have full order")
        # doubled table so mul can skip the mod on exponent sums
        for i in range(self.order - 1, 2 * self.order):
            exp[i] = exp[i - (self.order - 1)]
        self._exp = exp
        self._log = log

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return self._exp[self._log[a] + self._log[b]]

    def div(self, a: int, b: int) -> int:
        if b == 0:
            raise ZeroDivisionError("division by the zero element")
        if a == 0:
            return 0
        return self._exp[self._log[a] - self._log[b] + self.order - 1]

    def inv(self, a: int) -> int:
        return self.div(1, a)

    def alpha_pow(self, n: int) -> int:
        return self._exp[n % (self.order - 1)]


def _poly_mul(field, p, q):
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a:
            for j, b in enumerate(q):
                if b:
                    out[i + j] ^= field.mul(a, b)
    return out


def _poly_eval(field, p, x):
    # Horner from the highest coefficient; p[i] multiplies x^i
    acc = 0
    for c in reversed(p):
        acc = field.mul(acc, x) ^ c
    return acc


def _trim(p):
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    return p


@dataclass(frozen=True)
class RsOutcome:
    ok: bool
    symbols: tuple | None
    errors_corrected: int
    erasures_filled: int
    reason: str = ""


class RsCode:
    """Systematic block code of length n and dimension k over GF(2^b).

    Corrects e symbol errors plus s marked erasures whenever
    2e + s <= n - k; decode reports failure explicitly beyond that.
    Lengths below the natural 2^b - 1 are handled by treating the
    missing high positions as virtual zeros.
    """

    def __init__(self, b: int, n: int, k: int):
        if not 1 <= k <= n:
            raise ValueError("need 1 <= k <= n")
        if n > (1 << b) - 1:
            raise ValueError(f"length {n} exceeds field capacity {(1 << b) - 1}")
        self.field = GaloisField(b)
        self.n = n
        self.k = k
        self.parity = n - k
        # generator polynomial with roots alpha^1 .. alpha^parity
        g = [1]
        for i in range(1, self.parity + 1):
            g = _poly_mul(self.field, g, [self.field.alpha_pow(i), 1])
        self._gen = g

    @property
    def distance(self) -> int:
        return self.parity + 1

    def encode(self, message) -> list:
        """Message symbols first, parity appended."""
        msg = list(message)
        if len(msg) != self.k:
            raise ValueError(f"expected {self.k} symbols, got {len(msg)}")
        if any(not 0 <= v < self.field.order for v in msg):
            raise ValueError("symbol out of field range")
        if self.parity == 0:
            return msg
        # long division of msg(x) * x^parity by the generator; position 0
        # holds the highest degree, so the stream runs in list order
        rem = [0] * self.parity
        f = self.field
        for v in msg:
            lead = v ^ rem[-1]
            rem = [0] + rem[:-1]
            if lead:
                for i, gc in enumerate(self._gen[:-1]):
                    rem[i] ^= f.mul(lead, gc)
        return msg + rem[::-1]

    # Position j carries the coefficient of x^(n-1-j); its locator is
    # alpha^(n-1-j). Message-first layout follows from that convention.

    def _locator(self, pos: int) -> int:
        return self.field.alpha_pow(self.n - 1 - pos)

    def _syndromes(self, word):
        f = self.field
        out = []
        for m in range(1, self.parity + 1):
            am = f.alpha_pow(m)
            acc = 0
            xp = 1
            for j in range(self.n - 1, -1, -1):
                if word[j]:
                    acc ^= f.mul(word[j], xp)
                xp = f.mul(xp, am)
            out.append(acc)
        return out

    def decode(self, received, erasures=()) -> RsOutcome:
        """Repair a received word; erasures lists positions to distrust.

        Values at erased positions are ignored (treated as zero).
        """
        word = list(received)
        if len(word) != self.n:
            raise ValueError(f"expected {self.n} symbols, got {len(word)}")
        era = sorted(set(int(p) for p in erasures))
        if any(not 0 <= p < self.n for p in era):
            raise ValueError("erasure position out of range")
        s = len(era)
        t2 = self.parity
        if s > t2:
            return RsOutcome(False, None, 0, s,
                             "erasure count exceeds parity budget")
        f = self.field
        for p in era:
            word[p] = 0
        synd = self._syndromes(word)
        if all(v == 0 for v in synd):
            return RsOutcome(True, tuple(word[:self.k]), 0, s,
                             "" if s == 0 else "erased values were zero")

        # erasure locator and modified syndromes
        gamma = [1]
        for p in era:
            gamma = _poly_mul(f, gamma, [1, self._locator(p)])
        tmod = _poly_mul(f, gamma, synd)[:t2]
        u = tmod[s:]                      # pure error-syndrome tail

        lam, upd = [1], [1]
        lcur, mshift, bdisc = 0, 1, 1
        for r in range(1, len(u) + 1):
            delta = u[r - 1]
            for i in range(1, lcur + 1):
                if i < len(lam) and lam[i]:
                    delta ^= f.mul(lam[i], u[r - 1 - i])
            if delta == 0:
                mshift += 1
            elif 2 * lcur <= r - 1:
                prev = lam[:]
                scale = f.div(delta, bdisc)
                shifted = [0] * mshift + [f.mul(scale, c) for c in upd]
                lam = [a ^ b for a, b in
                       zip(lam + [0] * len(shifted), shifted + [0] * len(lam))]
                _trim(lam)
                upd, bdisc, lcur, mshift = prev, delta, r - lcur, 1
            else:
                scale = f.div(delta, bdisc)
                shifted = [0] * mshift + [f.mul(scale, c) for c in upd]
                lam = [a ^ b for a, b in
                       zip(lam + [0] * len(shifted), shifted + [0] * len(lam))]
                _trim(lam)
                mshift += 1

        e = lcur
        if 2 * e + s > t2 or len(lam) - 1 != e:
            return RsOutcome(False, None, e, s,
                             "error count exceeds what parity can pin down")

        # locate errors among non-erased positions
        err_pos = []
        if e:
            for j in range(self.n):
                if _poly_eval(f, lam, f.inv(self._locator(j))) == 0:
                    err_pos.append(j)
            if len(err_pos) != e:
                return RsOutcome(False, None, e, s,
                                 "error locator does not split over the word")
            if set(err_pos) & set(era):
                return RsOutcome(False, None, e, s,
                                 "locator collides with an erasure")

        psi = _poly_mul(f, lam, gamma)
        omega = _poly_mul(f, psi, synd)[:t2]
        # formal derivative over characteristic 2: even terms vanish
        dpsi = [0] * max(1, len(psi) - 1)
        for i in range(1, len(psi), 2):
            dpsi[i - 1] = psi[i]

        fixed = 0
        for j in era + err_pos:
            xinv = f.inv(self._locator(j))
            den = _poly_eval(f, dpsi, xinv)
            if den == 0:
                return RsOutcome(False, None, e, s,
                                 "repeated locator in the key equation")
            val = f.div(_poly_eval(f, omega, xinv), den)
            if val == 0 and j not in era:
                return RsOutcome(False, None, e, s,
                                 "zero magnitude at a located error")
            word[j] ^= val
            fixed += 1

        if any(v != 0 for v in self._syndromes(word)):
            return RsOutcome(False, None, e, s,
                             "correction does not land on a codeword")
        return RsOutcome(True, tuple(word[:self.k]), e, s)


@dataclass(frozen=True)
class CompositeRate:
    k_rs: int
    n_rs: int
    realized_delta: float
    rate: float


def composite_rate(L: int, inner_rate: float, delta_mis: float,
                   b: int | None = None) -> CompositeRate:
    """Outer-code sizing for a target mistake fraction.

    Picks the largest dimension whose redundancy fraction still covers
    delta_mis, so the realized (n-k)/n is the smallest achievable value
    at or above it.
    """
    if not 0.0 <= delta_mis < 1.0:
        raise ValueError("mistake fraction must be in [0, 1)")
    k = min(L, int((1.0 - delta_mis) * L + 1e-12))
    while k > 0 and (L - k) / L < delta_mis:
        k -= 1
    if k == 0:
        raise ValueError("mistake fraction leaves no room for data")
    realized = (L - k) / L
    return CompositeRate(k_rs=k, n_rs=L, realized_delta=realized,
                         rate=(1.0 - realized) * inner_rate)


def bits_to_symbols(bits: str, b: int) -> list:
    """Big-endian b-bit groups, matching the section index convention."""
    if len(bits) % b:
        raise ValueError("bit string length must be a multiple of b")
    return [int(bits[i:i + b], 2) for i in range(0, len(bits), b)]


def symbols_to_bits(symbols, b: int) -> str:
    out = []
    for v in symbols:
        if not 0 <= v < (1 << b):
            raise ValueError("symbol out of range")
        out.append(format(v, f"0{b}b"))
    return "".join(out)
