"""Domain types, configuration handling, and the lumped channel model.

The protocol simulated by this package has N >= 3 users, each sending
phase-randomized weak coherent pulses through a fiber of identical length
to an untrusted relay. The relay is a ring of N detection ports; each
user's pulse is split once and interferes with both neighbours. Every
quantity downstream (click statistics, pairing, sifting, key rates) is a
function of the five configuration blocks defined here, so they are all
immutable value types that can be shared freely across threads.

Intensities are per-pulse mean photon numbers at the source. Channel and
detector losses are lumped into a single transmittance eta; the 1/2 from
the local beam splitter is applied inside the optics module, never here.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace


class ConfigError(ValueError):
    """Raised for any invalid or inconsistent configuration value."""


# Per-pulse intensity labels. Symbolic so that nu == mu/2 style collisions
# in float space can never merge two logically distinct settings.
INTENSITY_SYMBOLS = ("mu", "nu", "o")


@dataclass(frozen=True)
class SourceConfig:
    """Intensity settings and emission probabilities of one user's source.

    mu is the signal intensity, nu the decoy, and the vacuum setting "o" is
    fixed at photon number zero with probability 1 - p_mu - p_nu. m_slices
    is the number of discrete global-phase slices; both the X-basis sifting
    factor 2/M and the residual phase misalignment pi/M depend on it.

    The defaults sit near the short-distance three-user optimum, so an
    unoptimized run is a sensible operating point rather than a strawman.
    """

    mu: float = 0.33
    nu: float = 0.08
    p_mu: float = 0.5
    p_nu: float = 0.25
    m_slices: int = 16

    @property
    def p_o(self) -> float:
        return 1.0 - self.p_mu - self.p_nu

    def intensity(self, symbol: str) -> float:
        if symbol == "mu":
            return self.mu
        if symbol == "nu":
            return self.nu
        if symbol == "o":
            return 0.0
        raise ConfigError(f"unknown intensity symbol {symbol!r}")

    def emission_prob(self, symbol: str) -> float:
        if symbol == "mu":
            return self.p_mu
        if symbol == "nu":
            return self.p_nu
        if symbol == "o":
            return self.p_o
        raise ConfigError(f"unknown intensity symbol {symbol!r}")

    def validate(self) -> None:
        if not (self.mu > self.nu > 0.0):
            raise ConfigError("intensities must satisfy mu > nu > 0")
        if self.mu > 1.5:
            raise ConfigError("signal intensity above 1.5 photons is out of the modeled range")
        if self.p_mu < 0 or self.p_nu < 0:
            raise ConfigError("emission probabilities must be nonnegative")
        if self.p_mu + self.p_nu > 1.0 + 1e-12:
            raise ConfigError("p_mu + p_nu must not exceed 1")
        if self.m_slices < 2:
            raise ConfigError("need at least 2 phase slices")


@dataclass(frozen=True)
class ChannelModel:
    """Symmetric user-to-relay channel plus detector imperfections."""

    distance_km: float = 100.0
    alpha_db_per_km: float = 0.16
    eta_det: float = 0.85
    p_d: float = 1e-10
    e_d: float = 0.012

    def validate(self) -> None:
        if self.distance_km < 0 or math.isnan(self.distance_km):
            raise ConfigError("fiber distance must be nonnegative")
        if self.alpha_db_per_km < 0:
            raise ConfigError("loss coefficient must be nonnegative")
        if not 0.0 <= self.eta_det <= 1.0:
            raise ConfigError("detector efficiency must lie in [0, 1]")
        if not 0.0 <= self.p_d <= 1.0:
            raise ConfigError("dark count probability must lie in [0, 1]")
        if not 0.0 <= self.e_d <= 1.0:
            raise ConfigError("misalignment rate must lie in [0, 1]")


def transmittance(channel: ChannelModel) -> float:
    """Lumped transmittance eta = eta_det * 10^(-alpha*d/10).

    Detector efficiency is folded in because every detection formula in
    this package uses a single eta per arm.

    >>> round(transmittance(ChannelModel(distance_km=0.0)), 6)
    0.85
    """
    if channel.distance_km < 0 or math.isnan(channel.distance_km):
        raise ConfigError("fiber distance must be nonnegative")
    return channel.eta_det * 10.0 ** (-channel.alpha_db_per_km * channel.distance_km / 10.0)


@dataclass(frozen=True)
class TimingConfig:
    """Clocking and pairing-window parameters.

    t_c_s is the maximum pairing time in seconds. When phase_locked is set
    the window is treated as unbounded and the drift contribution to the
    phase misalignment vanishes, leaving only the pi/M slicing term.
    """

    clock_hz: float = 4e9
    delta_f_hz: float = 10.0
    omega_fiber_rad_s: float = 3000.0
    t_c_s: float | None = 3e-4
    phase_locked: bool = False

    @property
    def n_tc(self) -> int | None:
        """Pairing window in time bins; None means unbounded."""
        if self.phase_locked or self.t_c_s is None:
            return None
        return int(self.t_c_s * self.clock_hz)

    def validate(self) -> None:
        if self.clock_hz <= 0:
            raise ConfigError("clock rate must be positive")
        if self.delta_f_hz < 0 or self.omega_fiber_rad_s < 0:
            raise ConfigError("drift rates must be nonnegative")
        if not self.phase_locked:
            if self.t_c_s is None or self.t_c_s <= 0:
                raise ConfigError("a positive pairing time is required without phase locking")
            if int(self.t_c_s * self.clock_hz) < 1:
                raise ConfigError("pairing window shorter than one time bin")


@dataclass(frozen=True)
class SecurityParams:
    """Composable security epsilons plus session-level accounting inputs."""

    eps_cor: float = 1e-7
    eps_prime: float = 1e-7
    eps_hat: float = 1e-7
    eps_e: float = 1e-7
    eps_pa: float = 1e-7
    eps_chernoff: float = 1e-7
    total_pulses: float = 1e12
    error_correction_f: float = 1.02

    def validate(self) -> None:
        for name in ("eps_cor", "eps_prime", "eps_hat", "eps_e", "eps_pa", "eps_chernoff"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{name} must lie strictly inside (0, 1)")
        if self.total_pulses < 1:
            raise ConfigError("need at least one pulse per user")
        if self.error_correction_f < 1.0:
            raise ConfigError("error correction efficiency f must be >= 1")


@dataclass(frozen=True)
class ProtocolConfig:
    """Complete protocol description shared by all computations."""

    n_users: int = 3
    source: SourceConfig = field(default_factory=SourceConfig)
    channel: ChannelModel = field(default_factory=ChannelModel)
    timing: TimingConfig = field(default_factory=TimingConfig)
    security: SecurityParams = field(default_factory=SecurityParams)
    click_filtering: bool = False
    extended_z_sets: bool = False
    quad_points: int = 64

    def validate(self) -> None:
        if self.n_users < 3:
            raise ConfigError("the protocol needs at least three users")
        if self.click_filtering and self.extended_z_sets:
            # Filtering leaves only the all-signal set in the Z basis, so
            # the two features are mutually exclusive by construction.
            raise ConfigError("extended Z sets require click filtering to be off")
        if self.quad_points < 8:
            raise ConfigError("phase-integral grid too coarse")
        self.source.validate()
        self.channel.validate()
        self.timing.validate()
        self.security.validate()

    def at_distance(self, distance_km: float) -> "ProtocolConfig":
        return replace(self, channel=replace(self.channel, distance_km=distance_km))

    @property
    def eta(self) -> float:
        return transmittance(self.channel)

    def misalignment_delta(self) -> float:
        """Residual phase misalignment of the reference frame.

        With free-running lasers the mean pairing separation T_c/2 picks up
        frequency-difference and fiber drift; phase locking removes both.
        """
        delta = math.pi / self.source.m_slices
        if not self.timing.phase_locked:
            t_mean = self.timing.t_c_s / 2.0
            delta += t_mean * (2.0 * math.pi * self.timing.delta_f_hz + self.timing.omega_fiber_rad_s)
        return delta


_SECTION_FIELDS = {
    "protocol": ("n_users", "click_filtering", "extended_z_sets", "quad_points"),
    "source": ("mu", "nu", "p_mu", "p_nu", "m_slices"),
    "channel": ("distance_km", "alpha_db_per_km", "eta_det", "p_d", "e_d"),
    "timing": ("clock_hz", "delta_f_hz", "omega_fiber_rad_s", "t_c_s", "phase_locked"),
    "security": (
        "eps_cor",
        "eps_prime",
        "eps_hat",
        "eps_e",
        "eps_pa",
        "eps_chernoff",
        "total_pulses",
        "error_correction_f",
    ),
}


def _coerce(raw: str, like) -> object:
    if isinstance(like, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if isinstance(like, int):
        return int(raw)
    if like is None or isinstance(like, float):
        if raw.strip().lower() in ("none", "inf", "unbounded"):
            return None
        return float(raw)
    raise ConfigError(f"unsupported config value {raw!r}")


def load_config(path: str) -> ProtocolConfig:
    """Read a ProtocolConfig from an INI file with one section per block.

    Unknown sections or keys are rejected rather than ignored, so a typo
    cannot silently fall back to a default.
    """
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file {path!r} not found or unreadable")

    defaults = ProtocolConfig()
    blocks = {
        "protocol": {},
        "source": {},
        "channel": {},
        "timing": {},
        "security": {},
    }
    for section in parser.sections():
        if section not in _SECTION_FIELDS:
            raise ConfigError(f"unknown config section [{section}]")
        holder = {
            "protocol": defaults,
            "source": defaults.source,
            "channel": defaults.channel,
            "timing": defaults.timing,
            "security": defaults.security,
        }[section]
        for key, raw in parser.items(section):
            if key not in _SECTION_FIELDS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            blocks[section][key] = _coerce(raw, getattr(holder, key))

    config = ProtocolConfig(
        source=SourceConfig(**blocks["source"]),
        channel=ChannelModel(**blocks["channel"]),
        timing=TimingConfig(**blocks["timing"]),
        security=SecurityParams(**blocks["security"]),
        **blocks["protocol"],
    )
    config.validate()
    return config


def dump_config(config: ProtocolConfig) -> str:
    """Serialize a config to canonical INI text (stable key order)."""
    lines = []
    holders = {
        "protocol": config,
        "source": config.source,
        "channel": config.channel,
        "timing": config.timing,
        "security": config.security,
    }
    for section, keys in _SECTION_FIELDS.items():
        lines.append(f"[{section}]")
        for key in keys:
            lines.append(f"{key} = {getattr(holders[section], key)!r}".replace("'", ""))
        lines.append("")
    return "\n".join(lines)
