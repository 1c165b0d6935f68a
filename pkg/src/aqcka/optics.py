r"""Click probabilities of the ring-shaped interference relay.

Port :math:`P_i` of the relay holds a 50/50 beam splitter feeding two
threshold detectors :math:`L_i` and :math:`R_i`. In a given time bin it
receives the late half of user i's pulse and the early half of user i+1's
pulse (indices cyclic), with intensities :math:`k_i, k_{i+1}` and phase
difference :math:`\hat\theta_i`. For phase-randomized coherent inputs all
click statistics reduce to the two parameters

.. math::

    \alpha_i = \eta (k_i + k_{i+1}) / 4, \qquad
    \beta_i  = \eta \sqrt{k_i k_{i+1}} / 2 .

All functions below are exact for the lumped-loss model; the ``marginal_*``
family additionally averages over every other user's intensity choice and
all global phases in closed form, which is what the sifting and decoy
modules consume. Expressions of the shape ``exp(a) - (1-p_d) exp(b)``
are evaluated through ``expm1`` so they stay accurate when eta shrinks
below 1e-6.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ChannelModel, ProtocolConfig, transmittance

IntensityVector = tuple[float, ...]


def bessel_i0(x: float) -> float:
    r"""Modified Bessel function of the first kind, order zero.

    Power series :math:`\sum_k (x^2/4)^k / (k!)^2` for small arguments and
    the large-argument asymptotic expansion beyond x = 30, giving relative
    error below 1e-12 over the full range. Even in x; overflows to inf
    above x ~ 713 like exp does.
    """
    x = abs(float(x))
    if math.isnan(x):
        raise ValueError("bessel_i0 needs a real argument")
    if x < 30.0:
        quarter_sq = 0.25 * x * x
        total = 1.0
        term = 1.0
        for k in range(1, 200):
            term *= quarter_sq / (k * k)
            total += term
            if term < total * 1e-18:
                break
        return total
    # Asymptotic: I0(x) ~ e^x/sqrt(2 pi x) * sum_k a_k / x^k with
    # a_k = ((2k-1)!!)^2 / (8^k k!). Semi-convergent; terms keep shrinking
    # well past the 1e-16 level for x >= 30.
    inv_x = 1.0 / x
    total = 1.0
    term = 1.0
    for k in range(1, 16):
        term *= (2 * k - 1) ** 2 * inv_x / (8 * k)
        total += term
        if term < total * 1e-18:
            break
    if x > 700.0:
        return math.inf
    return math.exp(x) / math.sqrt(2.0 * math.pi * x) * total


def _bessel_i0_minus_1(x: float) -> float:
    """I0(x) - 1 without cancellation for small x."""
    x = abs(float(x))
    if x >= 1.0:
        return bessel_i0(x) - 1.0
    quarter_sq = 0.25 * x * x
    total = 0.0
    term = 1.0
    for k in range(1, 60):
        term *= quarter_sq / (k * k)
        total += term
        if term < 1e-20:
            break
    return total


def _check_kvec(kvec) -> np.ndarray:
    k = np.asarray(kvec, dtype=float)
    if k.ndim != 1 or k.size < 3:
        raise ValueError("need one intensity per user for at least three users")
    if np.any(k < 0):
        raise ValueError("intensities must be nonnegative")
    return k


def detector_click_probs(kvec, theta_hat, channel: ChannelModel):
    """Per-detector click probabilities (E_L, E_R) for fixed phases.

    theta_hat holds the N port phase differences. Both returned arrays have
    one entry per port; entries are exact threshold-detector probabilities
    including dark counts.
    """
    k = _check_kvec(kvec)
    theta = np.asarray(theta_hat, dtype=float)
    if theta.shape != k.shape:
        raise ValueError("need one phase difference per port")
    eta = transmittance(channel)
    k_next = np.roll(k, -1)
    alpha = eta * (k + k_next) / 4.0
    beta = eta * np.sqrt(k * k_next) / 2.0
    cos_t = np.cos(theta)
    e_left = -np.expm1(-(alpha + beta * cos_t)) + channel.p_d * np.exp(-(alpha + beta * cos_t))
    e_right = -np.expm1(-(alpha - beta * cos_t)) + channel.p_d * np.exp(-(alpha - beta * cos_t))
    return e_left, e_right


def single_click_prob_phase(kvec, i: int, theta_hat_i: float, channel: ChannelModel):
    """Probability that port i alone clicks, on its L and on its R detector.

    "Alone" means every other detector of the relay stays silent in that
    time bin, which is what makes the event usable for pairing.
    """
    k = _check_kvec(kvec)
    n = k.size
    if not 0 <= i < n:
        raise ValueError(f"port index {i} out of range for {n} users")
    eta = transmittance(channel)
    a, b = k[i], k[(i + 1) % n]
    alpha_i = eta * (a + b) / 4.0
    beta_i = eta * math.sqrt(a * b) / 2.0
    total_exponent = eta * float(np.sum(k))
    survive = (1.0 - channel.p_d) ** (2 * n - 1)
    base = survive * math.exp(-total_exponent)
    cos_t = math.cos(theta_hat_i)
    q_left = base * (math.expm1(alpha_i + beta_i * cos_t) + channel.p_d)
    q_right = base * (math.expm1(alpha_i - beta_i * cos_t) + channel.p_d)
    return q_left, q_right


def port_click_prob(kvec, i: int, channel: ChannelModel) -> float:
    """Phase-averaged probability of a lone single click at port i.

    Averaging the two detectors of single_click_prob_phase over a uniform
    phase difference turns exp(beta cos) into the Bessel factor I0(beta).
    """
    k = _check_kvec(kvec)
    n = k.size
    if not 0 <= i < n:
        raise ValueError(f"port index {i} out of range for {n} users")
    eta = transmittance(channel)
    a, b = k[i], k[(i + 1) % n]
    alpha_i = eta * (a + b) / 4.0
    beta_i = eta * math.sqrt(a * b) / 2.0
    total_exponent = eta * float(np.sum(k))
    survive = (1.0 - channel.p_d) ** (2 * n - 1)
    base = 2.0 * survive * math.exp(-total_exponent)
    bracket = math.expm1(alpha_i) * bessel_i0(beta_i) + _bessel_i0_minus_1(beta_i) + channel.p_d
    return base * bracket


def total_click_prob(kvec, channel: ChannelModel) -> float:
    """Probability that some port registers a lone single click."""
    k = _check_kvec(kvec)
    return float(sum(port_click_prob(k, i, channel) for i in range(k.size)))


def _vacuum_survival(config: ProtocolConfig) -> float:
    """Mean no-light factor g of one non-participating user's pulse."""
    src = config.source
    eta = config.eta
    return src.p_mu * math.exp(-eta * src.mu) + src.p_nu * math.exp(-eta * src.nu) + src.p_o


def marginal_pair_click_prob(config: ProtocolConfig, a: float, b: float) -> float:
    """Lone-single-click probability at one port given its two feed intensities.

    Every other user's intensity is already averaged out (factor g per
    user), as are all phases. Exact, not a small-eta expansion.
    """
    if a < 0 or b < 0:
        raise ValueError("intensities must be nonnegative")
    n = config.n_users
    eta = config.eta
    p_d = config.channel.p_d
    g = _vacuum_survival(config)
    s = eta * (a + b)
    beta = eta * math.sqrt(a * b) / 2.0
    base = 2.0 * g ** (n - 2) * (1.0 - p_d) ** (2 * n - 1) * math.exp(-s)
    bracket = math.expm1(s / 4.0) * bessel_i0(beta) + _bessel_i0_minus_1(beta) + p_d
    return base * bracket


def marginal_pair_phase_probs(config: ProtocolConfig, a: float, b: float, theta_hat):
    """Phase-resolved lone-click probabilities (y_L, y_R) at one port.

    Same marginalization as marginal_pair_click_prob but keeping the phase
    difference theta_hat of the two designated pulses explicit. Vectorized
    over theta_hat; this is the integrand building block for every X-basis
    phase integral.
    """
    if a < 0 or b < 0:
        raise ValueError("intensities must be nonnegative")
    n = config.n_users
    eta = config.eta
    p_d = config.channel.p_d
    g = _vacuum_survival(config)
    s = eta * (a + b)
    beta = eta * math.sqrt(a * b) / 2.0
    theta = np.asarray(theta_hat, dtype=float)
    base = g ** (n - 2) * (1.0 - p_d) ** (2 * n - 1) * math.exp(-s)
    cos_t = np.cos(theta)
    y_left = base * (np.expm1(s / 4.0 + beta * cos_t) + p_d)
    y_right = base * (np.expm1(s / 4.0 - beta * cos_t) + p_d)
    return y_left, y_right


def marginal_port_click_prob(config: ProtocolConfig) -> float:
    """Intensity- and phase-averaged lone-click probability of one port."""
    src = config.source
    total = 0.0
    for sym_a in ("mu", "nu", "o"):
        for sym_b in ("mu", "nu", "o"):
            weight = src.emission_prob(sym_a) * src.emission_prob(sym_b)
            total += weight * marginal_pair_click_prob(config, src.intensity(sym_a), src.intensity(sym_b))
    return total


def marginal_total_click_prob(config: ProtocolConfig) -> float:
    """Average probability per time bin of a lone click anywhere.

    The ring is symmetric under marginalization, so this is just N times
    the per-port value.
    """
    return config.n_users * marginal_port_click_prob(config)


@dataclass(frozen=True)
class YieldTable:
    """Detection yields of few-photon inputs.

    y_ab is the probability of a lone single click at a port fed with a
    photons in its late input and b in its early input (a, b <= 1), with
    all other relay inputs empty apart from dark counts. pattern_yields
    maps an N-tuple of detector sides to the probability of that N-fold
    coincidence when every user contributed exactly one photon in the
    X basis with aligned phases.
    """

    y00: float
    y01: float
    y10: float
    y11: float
    pattern_yields: dict = field(default_factory=dict)


def single_photon_yields(channel: ChannelModel) -> YieldTable:
    """Port yields for zero- or one-photon feeds on each input.

    The local splitter sends each photon to the designated port with
    probability eta' = eta/2; the two photons of the (1,1) case reach
    the same detector half the time. A crossed photon that survives
    spoils an event in which this port also detected something, while
    dark counts may substitute whenever nothing was detected here.
    Dark exclusivity at the other ports is accounted upstream.
    """
    eta = transmittance(channel)
    p_d = channel.p_d
    eta_p = eta / 2.0
    y00 = 2.0 * p_d * (1.0 - p_d)
    y10 = (2.0 * p_d * (1.0 - eta_p) + eta_p) * (1.0 - p_d)
    y11 = (2.0 * p_d * (1.0 - eta_p) ** 2 + 2.0 * eta_p * (1.0 - eta) + eta_p * eta_p / 2.0) * (1.0 - p_d)
    return YieldTable(y00=y00, y01=y10, y10=y10, y11=y11)


def pattern_yields(n_users: int, channel: ChannelModel) -> dict[tuple[str, ...], float]:
    """N-fold coincidence yields of the all-single-photon X-basis input.

    Keyed by the tuple of clicked sides, e.g. ("L", "R", "L"). At zero
    phase offset the surviving-photon interference only populates patterns
    with an even number of R outcomes; odd patterns need dark counts.
    Closed forms exist for three and four users.
    """
    eta = transmittance(channel)
    p_d = channel.p_d
    if n_users == 3:
        rest = (
            eta ** 3 * p_d / 16.0
            + (eta ** 2 * (1.0 - eta) / 4.0) * (p_d / 4.0 + p_d ** 2 / 2.0)
            + (eta * (1.0 - eta) ** 2 / 2.0) * p_d ** 2
            + (1.0 - eta) ** 3 * p_d ** 3
        )
        y_odd = (1.0 - p_d) ** 3 * rest
        y_even = (1.0 - p_d) ** 3 * (eta ** 3 / 16.0 + rest)
    elif n_users == 4:
        p4 = eta ** 4 / 16.0
        p3 = eta ** 3 * (1.0 - eta) / 8.0
        p2_adjacent = eta ** 2 * (1.0 - eta) ** 2 / 4.0
        p2_opposite = eta ** 2 * (1.0 - eta) ** 2 / 8.0
        p1 = eta * (1.0 - eta) ** 3 / 2.0
        p0 = (1.0 - eta) ** 4
        rest = (
            p3 * (p_d / 2.0 + p_d ** 2)
            + p2_adjacent * (3.0 * p_d ** 2 / 4.0 + p_d ** 3 / 2.0)
            + p2_opposite * p_d ** 2
            + p1 * p_d ** 3 / 2.0
            + p0 * p_d ** 4
        )
        y_odd = (1.0 - p_d) ** 4 * (p4 * (3.0 * p_d / 2.0 + p_d ** 2 / 2.0) + rest)
        y_even = (1.0 - p_d) ** 4 * (p4 * (0.25 + 3.0 * p_d / 2.0 + p_d ** 2 / 2.0) + rest)
    else:
        raise NotImplementedError("coincidence-pattern closed forms cover 3 or 4 users only")

    table: dict[tuple[str, ...], float] = {}
    for index in range(2 ** n_users):
        pattern = tuple("R" if index >> bit & 1 else "L" for bit in range(n_users))
        r_count = pattern.count("R")
        table[pattern] = y_odd if r_count % 2 else y_even
    return table
