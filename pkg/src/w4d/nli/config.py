"""Fiber link and WDM grid parameters (user units in, SI out)."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from scipy import constants

C = constants.c
H = constants.h


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LinkConfig:
    """Identical spans of fiber, each followed by an EDFA compensating the span loss.

    Units: alpha_db dB/km, dispersion ps/nm/km (ignored when beta2_ps2_km is
    given), gamma 1/W/km, span_length km, nf_db dB, wavelength nm.
    """

    alpha_db: float = 0.2
    dispersion: float = 17.0
    gamma: float = 1.3
    span_length: float = 80.0
    n_spans: int = 4
    nf_db: float = 5.0
    wavelength: float = 1550.0
    beta2_ps2_km: float | None = None

    def __post_init__(self):
        if self.span_length <= 0:
            raise ConfigError("span length must be positive")
        if self.n_spans < 1:
            raise ConfigError("need at least one span")
        if self.gamma < 0:
            raise ConfigError("nonlinear coefficient must be nonnegative")
        if self.alpha_db < 0:
            raise ConfigError("attenuation must be nonnegative")

    @property
    def alpha(self) -> float:
        """Power attenuation coefficient in 1/m."""
        return self.alpha_db / (10 * math.log10(math.e)) / 1e3

    @property
    def beta2(self) -> float:
        """Group-velocity dispersion in s^2/m."""
        if self.beta2_ps2_km is not None:
            return self.beta2_ps2_km * 1e-27
        lam = self.wavelength * 1e-9
        return -(self.dispersion * 1e-6) * lam ** 2 / (2 * math.pi * C)

    @property
    def gamma_si(self) -> float:
        return self.gamma * 1e-3

    @property
    def span_m(self) -> float:
        return self.span_length * 1e3

    @property
    def total_length(self) -> float:
        return self.span_m * self.n_spans

    @property
    def gain(self) -> float:
        """Linear EDFA power gain, exactly the span loss."""
        return math.exp(self.alpha * self.span_m)

    @property
    def effective_length(self) -> float:
        if self.alpha == 0:
            return self.span_m
        return -math.expm1(-self.alpha * self.span_m) / self.alpha

    @property
    def nf(self) -> float:
        return 10 ** (self.nf_db / 10)

    @property
    def frequency(self) -> float:
        return C / (self.wavelength * 1e-9)

    def replace(self, **kw) -> "LinkConfig":
        return LinkConfig(**{**asdict(self), **kw})


@dataclass(frozen=True)
class WdmConfig:
    """Odd number of channels on a uniform grid; the center channel is under test.

    symbol_rate and spacing in GBaud / GHz.
    """

    n_channels: int = 9
    symbol_rate: float = 45.0
    spacing: float = 50.0
    rolloff: float = 0.01

    def __post_init__(self):
        if self.n_channels < 1 or self.n_channels % 2 == 0:
            raise ConfigError("channel count must be odd and positive")
        if self.rolloff < 0 or self.rolloff > 1:
            raise ConfigError("roll-off must be in [0, 1]")
        if self.n_channels > 1 and self.spacing * 1e9 < self.b_ch * (1 - 1e-12):
            raise ConfigError("channel spacing smaller than channel bandwidth")

    @property
    def rs(self) -> float:
        return self.symbol_rate * 1e9

    @property
    def df(self) -> float:
        return self.spacing * 1e9

    @property
    def b_ch(self) -> float:
        return self.rs * (1 + self.rolloff)

    @property
    def channels(self) -> list[int]:
        h = self.n_channels // 2
        return list(range(-h, h + 1))

    def replace(self, **kw) -> "WdmConfig":
        return WdmConfig(**{**asdict(self), **kw})
