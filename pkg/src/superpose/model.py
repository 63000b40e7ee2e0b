"""Channel and code-size parameters with every derived scalar.

All rate arithmetic is in nats internally; bits appear only through the
explicit accessors. The channel is normalized to noise variance 1, so the
signal power equals the snr.
"""

from dataclasses import dataclass
from math import ceil, exp, log, log2


@dataclass(frozen=True)
class ChannelParams:
    power: float
    noise_variance: float

    @property
    def snr(self) -> float:
        return self.power / self.noise_variance

    @property
    def capacity_nats(self) -> float:
        return 0.5 * log(1.0 + self.snr)

    @property
    def capacity_bits(self) -> float:
        return self.capacity_nats / log(2.0)

    @property
    def nu(self) -> float:
        # P/(P + sigma^2), strictly inside (0, 1)
        return self.power / (self.power + self.noise_variance)

    @property
    def r0_threshold_rate(self) -> float:
        return 0.5 * self.snr / (1.0 + self.snr)

    @property
    def c0(self) -> float:
        # nearby-measure constant; equals the capacity in nats
        return self.capacity_nats


@dataclass(frozen=True)
class CodeParams:
    L: int
    M: int
    R: float  # nats per channel use

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"need at least one section, got L={self.L}")
        if self.M < 2 or (self.M & (self.M - 1)) != 0:
            raise ValueError(f"section size must be a power of two, got M={self.M}")
        if self.R <= 0:
            raise ValueError(f"rate must be positive, got {self.R}")

    @property
    def N(self) -> int:
        return self.L * self.M

    @property
    def n(self) -> int:
        return ceil(self.L * log(self.M) / self.R)

    @property
    def realized_rate(self) -> float:
        """Rate actually delivered after rounding the codelength up."""
        return self.L * log(self.M) / self.n

    @property
    def bits_per_section(self) -> int:
        return int(log2(self.M))

    @property
    def K(self) -> int:
        return self.L * self.bits_per_section


def derive_channel(snr: float) -> ChannelParams:
    """Build ChannelParams for a given snr under the P=snr, sigma^2=1 normalization."""
    if not snr > 0:
        raise ValueError(f"snr must be positive, got {snr}")
    return ChannelParams(power=float(snr), noise_variance=1.0)


def c_tilde(channel: ChannelParams, L: int) -> float:
    """Finite-section capacity proxy (L/2)(1 - e^(-2C/L)).

    Strictly below the capacity, increasing in L, and converging to the
    capacity as L grows.
    """
    if L < 1:
        raise ValueError(f"need at least one section, got L={L}")
    C = channel.capacity_nats
    return 0.5 * L * (1.0 - exp(-2.0 * C / L))
