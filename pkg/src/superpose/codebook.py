"""Partitioned Gaussian dictionary, power allocations, and the encoder.

The dictionary has N = L*M columns split into L sections of M columns.
A message picks one column per section; the codeword is the weighted sum
of the picked columns, with section weights sqrt(P_(l)) set by a power
allocation. Columns are i.i.d. N(0,1), materialized from a keyed counter
stream so any column can be regenerated without storing the matrix.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ChannelParams, CodeParams
from .rng import derive_key, normal_fill, normals, raw_words

ALLOCATION_KINDS = ("constant", "exponential", "leveled")


@dataclass(frozen=True)
class PowerAllocation:
    """Per-section powers P_(l) and their normalized weights pi_(l)."""

    kind: str
    power: float
    P_ell: np.ndarray = field(repr=False)
    gamma: float = 0.0
    u: float = 0.0

    @property
    def L(self) -> int:
        return self.P_ell.shape[0]

    @property
    def pi_ell(self) -> np.ndarray:
        return self.P_ell / self.power

    @property
    def L_pi(self) -> float:
        """Reciprocal of the smallest section weight."""
        return 1.0 / float(np.min(self.pi_ell))

    def section_weight(self, ell: int) -> float:
        return float(self.P_ell[ell]) / self.power


def make_power_allocation(kind: str, channel: ChannelParams, L: int,
                          u: float = 0.0,
                          gamma: float | None = None) -> PowerAllocation:
    """Build a power allocation over L sections.

    kind "constant" splits power evenly. "exponential" decays section
    powers by the fixed ratio exp(-2C/L). "leveled" decays at a chosen
    rate gamma in [0, C] but flattens once the raw weight drops to u,
    so u >= 1 degenerates to the constant allocation.
    """
    if kind not in ALLOCATION_KINDS:
        raise ValueError(f"unknown allocation kind {kind!r}")
    if L < 1:
        raise ValueError("L must be at least 1")

    if kind == "constant":
        raw = np.ones(L)
    elif kind == "exponential":
        raw = np.exp(-2.0 * channel.capacity_nats * np.arange(L) / L)
    else:
        if gamma is None:
            raise ValueError("leveled allocation requires gamma")
        if not 0.0 <= gamma <= channel.capacity_nats:
            raise ValueError(f"gamma {gamma} outside [0, C]")
        if u < 0.0:
            raise ValueError("u must be nonnegative")
        raw = np.maximum(np.exp(-2.0 * gamma * np.arange(L) / L), u)

    P_ell = channel.power * raw / raw.sum()
    return PowerAllocation(kind=kind, power=channel.power, P_ell=P_ell,
                           gamma=(channel.capacity_nats if kind == "exponential"
                                  else (gamma or 0.0)),
                           u=u)


@dataclass(frozen=True)
class CoefficientVector:
    """Sparse message representation: one picked column per section.

    indices[l] is the within-section column (0-based, < M); values[l]
    is the coefficient sqrt(P_(l)) placed there. The squared norm of
    the dense vector equals the total power by construction.
    """

    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.indices.shape != self.values.shape:
            raise ValueError("indices and values must align")

    @property
    def L(self) -> int:
        return self.indices.shape[0]

    def flat_positions(self, M: int) -> np.ndarray:
        return np.arange(self.L) * M + self.indices

    def dense(self, M: int) -> np.ndarray:
        beta = np.zeros(self.L * M)
        beta[self.flat_positions(M)] = self.values
        return beta


def encode(bits: str, code: CodeParams,
           allocation: PowerAllocation) -> CoefficientVector:
    """Map a K-bit message string to its coefficient vector.

    Each consecutive log2(M) bits select the column within one section,
    read big-endian, so the map is a direct radix conversion and trivially
    bijective.
    """
    b = code.bits_per_section
    if len(bits) != code.K:
        raise ValueError(f"need {code.K} bits, got {len(bits)}")
    if set(bits) - {"0", "1"}:
        raise ValueError("bits must be a 0/1 string")
    idx = np.array([int(bits[l * b:(l + 1) * b], 2) for l in range(code.L)],
                   dtype=np.int64)
    return CoefficientVector(indices=idx, values=np.sqrt(allocation.P_ell))


def decode_indices(indices: np.ndarray, code: CodeParams) -> str:
    """Inverse of encode on the index level: sections back to the bit string."""
    b = code.bits_per_section
    return "".join(format(int(i), f"0{b}b") for i in indices)


def random_message(code: CodeParams, key: int) -> np.ndarray:
    """Uniform section indices from a keyed stream.

    M is a power of two, so masking a 32-bit generator word is unbiased.
    """
    nwords = 4 * ((code.L + 3) // 4)
    words = raw_words(key, 0, nwords // 4)
    return (words[:code.L] & np.uint32(code.M - 1)).astype(np.int64)


class Dictionary:
    """The n x N design matrix, stored column-contiguous.

    Internally kept as the transpose (one row per column of the design)
    so the decoder's inner-product sweep is a contiguous matrix-vector
    product. Column j occupies stream positions [j*n, (j+1)*n), which is
    what makes single-column regeneration possible.
    """

    def __init__(self, code: CodeParams, seed: int, dtype=np.float64):
        self.code = code
        self.seed = int(seed)
        self.key = derive_key(self.seed, "dict")
        if np.dtype(dtype) not in (np.dtype(np.float32), np.dtype(np.float64)):
            raise TypeError("dictionary dtype must be float32 or float64")
        n, N = code.n, code.N
        try:
            self._cols = np.empty((N, n), dtype=dtype)
        except MemoryError as exc:
            raise MemoryError(
                f"dictionary of {N}x{n} {np.dtype(dtype).name} does not fit"
            ) from exc
        normal_fill(self.key, 0, self._cols)

    @property
    def n(self) -> int:
        return self.code.n

    @property
    def N(self) -> int:
        return self.code.N

    @property
    def dtype(self):
        return self._cols.dtype

    @property
    def matrix(self) -> np.ndarray:
        """The design matrix in conventional (n, N) orientation (a view)."""
        return self._cols.T

    def column(self, j: int) -> np.ndarray:
        return self._cols[j]

    def regenerate_column(self, j: int) -> np.ndarray:
        """Rebuild column j from the stream; bit-identical to column(j)."""
        out = np.empty(self.n, dtype=self._cols.dtype)
        return normal_fill(self.key, j * self.n, out)

    def section_of(self, j: int) -> int:
        """Section (0-based) containing flat column j."""
        return j // self.code.M

    def combine(self, coef: CoefficientVector) -> np.ndarray:
        """Codeword X beta, accumulated in float64."""
        pos = coef.flat_positions(self.code.M)
        picked = self._cols[pos].astype(np.float64, copy=False)
        return coef.values @ picked

    def inner(self, v: np.ndarray) -> np.ndarray:
        """All column inner products X^T v, returned as float64."""
        if self._cols.dtype == np.float32:
            return (self._cols @ v.astype(np.float32)).astype(np.float64)
        return self._cols @ v

    def export_binary(self, path) -> None:
        """Write the matrix for cross-checking: 8-byte header with n and N
        as little-endian uint32, then row-major little-endian float64."""
        with open(path, "wb") as fh:
            np.array([self.n, self.N], dtype="<u4").tofile(fh)
            np.ascontiguousarray(self.matrix, dtype="<f8").tofile(fh)


def read_dictionary_export(path) -> np.ndarray:
    with open(path, "rb") as fh:
        n, N = np.fromfile(fh, dtype="<u4", count=2)
        data = np.fromfile(fh, dtype="<f8", count=int(n) * int(N))
    return data.reshape(int(n), int(N))


def transmit(dic: Dictionary, coef: CoefficientVector,
             channel: ChannelParams, noise_seed: int) -> np.ndarray:
    """Send the codeword through the channel: Y = X beta + noise."""
    y = dic.combine(coef)
    sigma = math.sqrt(channel.noise_variance)
    if sigma > 0.0:
        y = y + sigma * normals(derive_key(int(noise_seed), "noise"), 0, dic.n)
    return y
