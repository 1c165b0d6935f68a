r"""Decoy-state estimation of the single-photon contributions.

Two provenances are supported. The asymptotic route evaluates the
expected single-photon counts directly from the photon-number expansion
of the coherent sources, using the per-port single-photon yield tables
of :mod:`aqcka.optics`. The finite route knows nothing about yields: it
starts from the comparison-set counts (expected values from simulation,
or observed values wrapped in Chernoff intervals), combines them through
the three-decoy linear programs, and converts the resulting expected
bounds to observed ones, paying one epsilon per estimator term.

The finite estimators are written out for three users; the asymptotic
ones work for any N.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .model import ConfigError, ProtocolConfig
from .optics import pattern_yields, single_photon_yields
from .stats import BoundPair, EpsilonLedger, chernoff_expected, chernoff_observed, sampling_gamma_upper
from . import sift


@dataclass(frozen=True)
class DecoyEstimates:
    """Single-photon count estimates feeding the key-length formulas.

    In asymptotic provenance the fields are expected values and s0_z is
    unused (zero). In finite provenance they are one-sided bounds at the
    confidence level recorded in the ledger: lower for the s fields,
    upper for t1_x.
    """

    s0_z: float
    s1_z: float
    s1_x: float
    t1_x: float
    phi_z: float
    provenance: str
    ledger: EpsilonLedger | None = None
    flags: tuple = ()

    def __post_init__(self):
        if self.s0_z < 0 or self.s1_z < 0 or self.s1_x < 0:
            raise ValueError("count estimates must be nonnegative")
        if self.t1_x > self.s1_x * (1 + 1e-12) + 1e-12:
            raise ValueError("t1_x cannot exceed s1_x")
        if not 0.0 <= self.phi_z <= 0.5:
            raise ValueError("phase error rate must lie in [0, 1/2]")


def split_yield_sum(n_users: int, yields) -> float:
    """Sum over the 2^N early/late placements of one photon per user.

    Port i pairs the late bin of user i with the early bin of user i+1;
    with every user holding exactly one photon the port sees one of the
    four occupation pairs, whose yields the table provides.
    """
    lut = {
        (0, 0): yields.y00,
        (0, 1): yields.y01,
        (1, 0): yields.y10,
        (1, 1): yields.y11,
    }
    total = 0.0
    for late in itertools.product((0, 1), repeat=n_users):
        prod = 1.0
        for i in range(n_users):
            prod *= lut[(late[i], 1 - late[(i + 1) % n_users])]
        total += prod
    return total


def _no_click_factor(config: ProtocolConfig) -> float:
    """Chance the bins not holding the tagged photon stay silent."""
    src = config.source
    mu_bar = src.p_mu * src.mu + src.p_nu * src.nu
    p_d = config.channel.p_d
    return (math.exp(-mu_bar * config.eta) * (1.0 - p_d) ** 2) ** (config.n_users - 1)


def asymptotic_s1_z(config: ProtocolConfig, n_tot: float) -> float:
    """Expected Z-basis events with every user emitting a single photon."""
    src = config.source
    n = config.n_users
    yields = single_photon_yields(config.channel)
    q_tilde = sift.effective_port_click_prob(config)
    per_user = src.p_mu * src.p_o * src.mu * math.exp(-src.mu) * _no_click_factor(config)
    return n_tot * per_user ** n * split_yield_sum(n, yields) / q_tilde ** n


def asymptotic_s1_x(config: ProtocolConfig, s1_z: float) -> float:
    """Rescale the Z-basis single-photon count to the X basis.

    Single-photon events are basis-blind once emitted, so the counts
    differ only by the emission probabilities of one photon in each
    basis and by the bases' sifting factors.
    """
    src = config.source
    n = config.n_users
    p_kz = 2.0 ** n * (src.p_mu * src.p_o) ** n
    p_kx = (2.0 / src.m_slices) * src.p_nu ** (2 * n)
    num = (2.0 * src.nu) ** n * math.exp(-2.0 * n * src.nu) * p_kx
    den = src.mu ** n * math.exp(-n * src.mu) * p_kz
    return s1_z * num / den


def asymptotic_t1_x(config: ProtocolConfig, n_tot: float) -> float:
    """Expected X-basis single-photon phase errors.

    The single-photon coincidence patterns split into two yield classes
    by click parity; misalignment swaps a fraction e_d of them.
    """
    src = config.source
    n = config.n_users
    e_d = config.channel.e_d
    q_tilde = sift.effective_port_click_prob(config)
    table = pattern_yields(n, config.channel)
    y_even = table[("L",) * n]
    y_odd = table[("R",) + ("L",) * (n - 1)]
    y_err = 2.0 ** (n - 1) * ((1.0 - e_d) * y_odd + e_d * y_even)
    per_user = 2.0 * src.nu * math.exp(-2.0 * src.nu) * src.p_nu ** 2
    return n_tot * (2.0 / src.m_slices) * per_user ** n * y_err / q_tilde ** n


def asymptotic_estimates(config: ProtocolConfig, n_tot: float) -> DecoyEstimates:
    """Package the asymptotic single-photon expectations."""
    flags = []
    s1_z = asymptotic_s1_z(config, n_tot)
    s1_x = asymptotic_s1_x(config, s1_z)
    t1_x = asymptotic_t1_x(config, n_tot)
    if s1_x <= 0.0:
        phi = 0.5
        flags.append("s1x_nonpositive")
    else:
        phi = t1_x / s1_x
        if phi > 0.5:
            phi = 0.5
            flags.append("phi_capped")
    if t1_x > s1_x:
        t1_x = s1_x
        flags.append("t1x_clamped")
    return DecoyEstimates(
        s0_z=0.0,
        s1_z=s1_z,
        s1_x=s1_x,
        t1_x=t1_x,
        phi_z=phi,
        provenance="asymptotic",
        flags=tuple(flags),
    )


class _BoundBank:
    """Per-term input intervals for the estimator chain, with billing.

    Each distinct observable gets one interval. Every endpoint used by a
    printed estimator term costs one epsilon, except that an estimator
    asking for the opposite endpoint of an interval it has already used
    rides free once; asking for the same endpoint again is a new term
    and pays again.

    Observed counts get variant-Chernoff intervals around their expected
    value. Expected counts are already the starred inputs the printed
    formulas take, so their interval is degenerate; the epsilon billing
    is unchanged because the protocol's estimation procedure spends it
    either way.
    """

    def __init__(self, tallies: sift.SiftedTallies, ledger: EpsilonLedger, counts_are: str):
        self.tallies = tallies
        self.eps = tallies.config.security.eps_chernoff
        self.ledger = ledger
        self.counts_are = counts_are
        self._pairs: dict = {}
        self._used: dict = {}

    def _count(self, family: str, totals) -> float:
        if family == "z":
            return self.tallies.z_counts[totals]
        if family == "x":
            return self.tallies.x_counts[totals]
        if family == "m":
            return self.tallies.m_x
        raise KeyError(family)

    def _pair(self, family: str, totals) -> BoundPair:
        key = (family, totals)
        if key not in self._pairs:
            value = self._count(family, totals)
            if self.counts_are == "observed":
                self._pairs[key] = chernoff_expected(value, self.eps)
            else:
                self._pairs[key] = BoundPair(lower=value, upper=value)
        return self._pairs[key]

    def _take(self, label: str, family: str, totals, direction: str) -> float:
        used = self._used.setdefault((label, family, totals), set())
        if not used or direction in used:
            self.ledger.spend(label, self.eps)
        used.add(direction)
        pair = self._pair(family, totals)
        return pair.upper if direction == "upper" else pair.lower

    def upper(self, label: str, family: str, totals) -> float:
        return self._take(label, family, totals, "upper")

    def lower(self, label: str, family: str, totals) -> float:
        return self._take(label, family, totals, "lower")


def _perms(*totals):
    return sorted(set(itertools.permutations(totals)))


def _s111_z_star(tallies: sift.SiftedTallies, bank: _BoundBank, num: float) -> float:
    """Expected-value lower bound on the triple single-photon Z count."""
    config = tallies.config
    src = config.source
    mu, nu = src.mu, src.nu

    def zp(totals):
        return sift.z_set_prob(config, totals)

    a = math.exp(3 * nu) * bank.lower("s111", "z", ("nu", "nu", "nu")) / zp(("nu", "nu", "nu"))
    for t in _perms("nu", "nu", "o"):
        a -= math.exp(2 * nu) * bank.upper("s111", "z", t) / zp(t)
    for t in _perms("nu", "o", "o"):
        a += math.exp(nu) * bank.lower("s111", "z", t) / zp(t)
    a -= bank.upper("s111", "z", ("o", "o", "o")) / zp(("o", "o", "o"))

    b = math.exp(3 * mu) * bank.upper("s111", "z", ("mu", "mu", "mu")) / zp(("mu", "mu", "mu"))
    for t in _perms("mu", "mu", "o"):
        b -= math.exp(2 * mu) * bank.lower("s111", "z", t) / zp(t)
    for t in _perms("mu", "o", "o"):
        b += math.exp(mu) * bank.upper("s111", "z", t) / zp(t)
    b -= bank.lower("s111", "z", ("o", "o", "o")) / zp(("o", "o", "o"))

    pre = num / (mu ** 3 * nu ** 3 * (mu - nu))
    return pre * (mu ** 4 * a - nu ** 4 * b)


def _s0_z_star(tallies: sift.SiftedTallies, bank: _BoundBank) -> float:
    """Expected-value lower bound on the vacuum Z contribution."""
    config = tallies.config
    src = config.source
    mu, nu = src.mu, src.nu

    def zp(totals):
        return sift.z_set_prob(config, totals)

    out = math.exp(-mu) * zp(("mu",) * 3) * bank.lower("s0", "z", ("o", "mu", "mu")) / zp(("o", "mu", "mu"))
    if config.extended_z_sets:
        out += 3 * math.exp(-mu) * zp(("mu", "mu", "nu")) * bank.lower("s0", "z", ("o", "mu", "nu")) / zp(("o", "mu", "nu"))
        out += 3 * math.exp(-mu) * zp(("mu", "nu", "nu")) * bank.lower("s0", "z", ("o", "nu", "nu")) / zp(("o", "nu", "nu"))
        out += math.exp(-nu) * zp(("nu",) * 3) * bank.lower("s0", "z", ("o", "nu", "nu")) / zp(("o", "nu", "nu"))
    return out


def _t111_x_star(tallies: sift.SiftedTallies, bank: _BoundBank) -> float:
    """Expected-value upper bound on the single-photon X error count."""
    config = tallies.config
    nu = config.source.nu
    key = ("2nu", "2nu", "2nu")

    def xp(totals):
        return sift.x_set_prob(config, totals)

    bracket = math.exp(6 * nu) * bank.upper("t111", "m", key) / xp(key)
    for t in _perms("2nu", "2nu", "o"):
        bracket -= math.exp(4 * nu) * bank.lower("t111", "x", t) / (2 * xp(t))
    for t in _perms("2nu", "o", "o"):
        bracket += math.exp(2 * nu) * bank.upper("t111", "x", t) / (2 * xp(t))
    bracket -= bank.lower("t111", "x", ("o", "o", "o")) / (2 * xp(("o", "o", "o")))
    return math.exp(-6 * nu) * xp(key) * bracket


def finite_bounds_3user(tallies: sift.SiftedTallies, counts_are: str = "expected") -> DecoyEstimates:
    """Three-decoy finite-size bounds from the comparison counts.

    counts_are says what kind of numbers the tallies hold. "observed"
    (real or sampled data) wraps each count in a variant-Chernoff
    interval before it enters the printed linear combinations, which
    take expected-value inputs. "expected" (analytic simulation) feeds
    the counts in directly, since they already are those inputs. Either
    way the combinations produce expected-value bounds, which are then
    converted to observed-value bounds, and the attached ledger records
    every epsilon the estimation procedure spends, one entry per term.
    """
    if counts_are not in ("expected", "observed"):
        raise ValueError(f"unknown counts_are {counts_are!r}")
    config = tallies.config
    if config.n_users != 3:
        raise ConfigError("finite decoy bounds are written out for 3 users only")
    if config.extended_z_sets and config.click_filtering:
        raise ConfigError("extended Z sets conflict with click filtering")
    src = config.source
    sec = config.security
    mu, nu = src.mu, src.nu
    eps = sec.eps_chernoff
    ledger = EpsilonLedger()
    bank = _BoundBank(tallies, ledger, counts_are)
    flags = []

    num = mu ** 3 * math.exp(-3 * mu) * sift.z_set_prob(config, ("mu",) * 3)
    if config.extended_z_sets:
        num += 3 * mu ** 2 * nu * math.exp(-2 * mu - nu) * sift.z_set_prob(config, ("mu", "mu", "nu"))
        num += 3 * mu * nu ** 2 * math.exp(-mu - 2 * nu) * sift.z_set_prob(config, ("mu", "nu", "nu"))
        num += nu ** 3 * math.exp(-3 * nu) * sift.z_set_prob(config, ("nu",) * 3)

    s111_z_star = _s111_z_star(tallies, bank, num)
    if s111_z_star < 0.0:
        s111_z_star = 0.0
        flags.append("s1z_star_clamped")
    s0_star = _s0_z_star(tallies, bank)
    x_key = ("2nu", "2nu", "2nu")
    s111_x_star = s111_z_star * (2 * nu) ** 3 * math.exp(-6 * nu) * sift.x_set_prob(config, x_key) / num
    t111_x_star = _t111_x_star(tallies, bank)
    if t111_x_star < 0.0:
        t111_x_star = 0.0
        flags.append("t1x_star_clamped")

    s0_z = chernoff_observed(s0_star, eps).lower
    ledger.spend("conversion", eps)
    s1_z = chernoff_observed(s111_z_star, eps).lower
    ledger.spend("conversion", eps)
    s1_x = chernoff_observed(s111_x_star, eps).lower
    ledger.spend("conversion", eps)
    t1_x = chernoff_observed(t111_x_star, eps).upper
    ledger.spend("conversion", eps)

    if s1_x <= 0.0 or s1_z <= 0.0:
        phi = 0.5
        flags.append("s1x_nonpositive" if s1_x <= 0.0 else "s1z_nonpositive")
    else:
        e_bar = t1_x / s1_x
        if e_bar <= 0.0:
            phi = 0.0
        elif e_bar >= 0.5:
            phi = 0.5
            flags.append("phi_capped")
        else:
            phi = e_bar + sampling_gamma_upper(s1_z, s1_x, e_bar, sec.eps_e)
            ledger.spend("gamma", sec.eps_e)
            if phi > 0.5:
                phi = 0.5
                flags.append("phi_capped")
    if t1_x > s1_x:
        t1_x = s1_x
        flags.append("t1x_clamped")

    return DecoyEstimates(
        s0_z=s0_z,
        s1_z=s1_z,
        s1_x=s1_x,
        t1_x=t1_x,
        phi_z=phi,
        provenance="finite",
        ledger=ledger,
        flags=tuple(flags),
    )
