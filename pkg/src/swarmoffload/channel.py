"""Line-of-sight link budget: free-space loss, SNR, BPSK BER, Shannon capacity.

All hot-path math is linear-domain; dB and dBm inputs are converted exactly
once when the parameter set is constructed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

SPEED_OF_LIGHT = 299_792_458.0  # m/s

_SQRT_PI = math.sqrt(math.pi)
_ERFC_SWITCH = 2.6  # series below, continued fraction above


class ChannelDomainError(ValueError):
    """Queried distance is outside the free-space model's domain."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class ChannelParams:
    """Link-budget constants shared by every UAV pair.

    ``los_attenuation`` is a linear power factor >= 1; ``eirp_dbm``,
    ``rx_gain_db`` and ``noise_power_dbm`` keep their customary log-domain
    units and are mirrored into the linear fields on construction.
    """

    carrier_frequency: float  # Hz
    los_attenuation: float    # linear, >= 1
    eirp_dbm: float
    rx_gain_db: float
    noise_power_dbm: float
    bandwidth: float          # Hz
    ber_threshold: float      # demodulation limit on the BPSK bit error rate
    eirp_mw: float = field(init=False, repr=False, compare=False)
    rx_gain_linear: float = field(init=False, repr=False, compare=False)
    noise_mw: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.carrier_frequency <= 0:
            raise ValueError(f"carrier_frequency must be > 0, got {self.carrier_frequency}")
        if self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be > 0, got {self.bandwidth}")
        if not 0.0 < self.ber_threshold < 0.5:
            raise ValueError(f"ber_threshold must lie in (0, 0.5), got {self.ber_threshold}")
        if self.los_attenuation < 1.0:
            raise ValueError(f"los_attenuation is a loss, must be >= 1 linear, got {self.los_attenuation}")
        object.__setattr__(self, "eirp_mw", db_to_linear(self.eirp_dbm))
        object.__setattr__(self, "rx_gain_linear", db_to_linear(self.rx_gain_db))
        object.__setattr__(self, "noise_mw", db_to_linear(self.noise_power_dbm))

    @classmethod
    def from_config(cls, cfg: dict, context: str = "channel") -> "ChannelParams":
        """Build from a config mapping; dB/dBm values use explicit suffixed keys."""
        required = ["carrier_frequency_hz", "eirp_dbm", "rx_gain_db", "noise_power_dbm", "bandwidth_hz", "ber_threshold"]
        missing = [k for k in required if k not in cfg]
        if "los_attenuation_db" not in cfg and "los_attenuation" not in cfg:
            missing.append("los_attenuation_db")
        if missing:
            raise ValueError(f"{context}: missing required key(s): " + ", ".join(f"{context}.{k}" for k in missing))
        if "los_attenuation_db" in cfg:
            xi = db_to_linear(float(cfg["los_attenuation_db"]))
        else:
            xi = float(cfg["los_attenuation"])
        return cls(
            carrier_frequency=float(cfg["carrier_frequency_hz"]),
            los_attenuation=xi,
            eirp_dbm=float(cfg["eirp_dbm"]),
            rx_gain_db=float(cfg["rx_gain_db"]),
            noise_power_dbm=float(cfg["noise_power_dbm"]),
            bandwidth=float(cfg["bandwidth_hz"]),
            ber_threshold=float(cfg["ber_threshold"]),
        )


@dataclass(frozen=True)
class LinkMetrics:
    """Everything the link budget says about one UAV pair at one instant."""

    path_loss: float      # linear
    snr: float            # linear
    ber: float
    connected: bool
    capacity: float       # bits/s, exactly 0 when disconnected
    unit_bit_delay: float  # s/bit, inf when disconnected


def erfc(x: float) -> float:
    """Complementary error function.

    Implemented in-repo (power series for small arguments, Lentz-evaluated
    continued fraction for the tail) so results are bit-identical across
    platforms. Relative error is well below 1e-10 on [0, 12].
    """
    if math.isnan(x):
        return math.nan
    if x < 0.0:
        return 2.0 - erfc(-x)
    if x < _ERFC_SWITCH:
        return 1.0 - _erf_series(x)
    return _erfc_tail(x)


def _erf_series(x: float) -> float:
    # erf(x) = 2x exp(-x^2)/sqrt(pi) * sum_k (2x^2)^k / (1*3*...*(2k+1)),
    # all terms positive so there is no cancellation.
    if x == 0.0:
        return 0.0
    x2 = x * x
    term = 1.0
    total = 1.0
    k = 0
    while True:
        k += 1
        term *= 2.0 * x2 / (2.0 * k + 1.0)
        total += term
        if term < total * 1e-17:
            break
    return 2.0 * x * math.exp(-x2) / _SQRT_PI * total


def _erfc_tail(x: float) -> float:
    # erfc(x) = exp(-x^2)/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    # evaluated with the modified Lentz algorithm.
    ex = math.exp(-x * x)
    if ex == 0.0:
        return 0.0
    tiny = 1e-300
    f = x
    c = f
    d = 0.0
    for n in range(1, 400):
        a = 0.5 * n
        d = x + a * d
        if d == 0.0:
            d = tiny
        c = x + a / c
        if c == 0.0:
            c = tiny
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return ex / (_SQRT_PI * f)


def path_loss(d: float, params: ChannelParams) -> float:
    """Free-space LoS power loss (linear) over d meters.

    The model has no near-field regime: co-located pairs are not channel
    links (same-node transfers are cache edges), so d <= 0 is a domain error.
    """
    if not d > 0.0:
        raise ChannelDomainError(
            f"free-space loss undefined for distance {d} m; same-node transfers are cache edges"
        )
    ratio = 4.0 * math.pi * d * params.carrier_frequency / SPEED_OF_LIGHT
    return ratio * ratio * params.los_attenuation


def link_metrics(d: float, params: ChannelParams) -> LinkMetrics:
    """Full budget for one pair at distance d: loss, SNR, BER, link state, capacity."""
    loss = path_loss(d, params)
    snr = params.eirp_mw * params.rx_gain_linear / (loss * params.noise_mw)
    ber = 0.5 * erfc(math.sqrt(snr))
    connected = ber <= params.ber_threshold
    if connected:
        capacity = params.bandwidth * math.log2(1.0 + snr)
        unit = 1.0 / capacity
    else:
        capacity = 0.0
        unit = math.inf
    return LinkMetrics(loss, snr, ber, connected, capacity, unit)
