r"""Basis assignment, key mapping, and expected sifted counts.

After pairing, each user announces which intensity its two matched bins
carried. The per-user total decides the basis: every user at the signal
total (one signal pulse, one vacuum) gives a Z event; every user at twice
the decoy intensity gives an X candidate, kept when the announced global
phase difference is a multiple of pi (fraction 2/M of candidates).

Counts are computed as expectations, never sampled. A Z-type count is a
finite sum over the possible early/late splits of each user's total; an
X-type count is a phase integral carried out on a uniform periodic grid,
where the trapezoid rule converges spectrally. The building blocks are
the closed-form marginal click probabilities from :mod:`aqcka.optics`.

Set notation: a set is the N-tuple of per-user totals, each one of
"mu", "nu", "o" (Z-like: one pulse carries everything), or "2mu", "2nu",
"o" (X-like: both pulses equal). The same vacuum symbol appears in both
families; the interpretation follows the family of the count requested.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .model import ProtocolConfig
from .optics import marginal_pair_click_prob, marginal_pair_phase_probs, marginal_port_click_prob


class InvalidEventError(ValueError):
    """Raised when an announced event cannot occur in the protocol."""


# Possible (early, late) splits of each per-user total.
SPLITS = {
    "mu": (("mu", "o"), ("o", "mu")),
    "nu": (("nu", "o"), ("o", "nu")),
    "o": (("o", "o"),),
    "mu+nu": (("mu", "nu"), ("nu", "mu")),
    "2mu": (("mu", "mu"),),
    "2nu": (("nu", "nu"),),
}

# Per-bin intensity of the X-like totals.
X_PER_BIN = {"2mu": "mu", "2nu": "nu", "o": "o"}


def z_emission_weight(config: ProtocolConfig, total: str) -> float:
    """Probability that one user's two key bins carry the given total."""
    src = config.source
    return sum(src.emission_prob(e) * src.emission_prob(l) for e, l in SPLITS[total])


def x_emission_weight(config: ProtocolConfig, total: str) -> float:
    src = config.source
    sym = X_PER_BIN[total]
    return src.emission_prob(sym) ** 2


def z_set_prob(config: ProtocolConfig, totals) -> float:
    """Emission probability of a Z-like set (no sifting factor)."""
    p = 1.0
    for total in totals:
        p *= z_emission_weight(config, total)
    return p


def x_set_prob(config: ProtocolConfig, totals) -> float:
    """Emission probability of an X-like set.

    Only the all-decoy test set carries the 2/M phase-sift factor; every
    comparison set (vacuum-containing or signal-intensity) is tallied
    without phase post-selection, so only the emission probabilities
    enter.
    """
    totals = tuple(totals)
    sifted = all(t == "2nu" for t in totals)
    p = 2.0 / config.source.m_slices if sifted else 1.0
    for total in totals:
        p *= x_emission_weight(config, total)
    return p


def z_bit_assign(k_e: str, k_l: str) -> int:
    """Raw key bit of one user's Z event: 0 when the early bin was bright."""
    if k_e == "o" and k_l in ("mu", "nu"):
        return 1
    if k_l == "o" and k_e in ("mu", "nu"):
        return 0
    raise InvalidEventError(f"({k_e}, {k_l}) is not a valid single-sided split")


def assign_basis(config: ProtocolConfig, totals, theta_g_d: float):
    """Classify an announced event as "Z", "X", or None (discarded).

    totals is the N-tuple of per-user intensity totals; theta_g_d the
    announced global phase difference. X events survive only when
    theta_g_d is a multiple of pi (within 1e-9), the discrete-phase
    version of the 2/M sift.
    """
    totals = tuple(totals)
    if len(totals) != config.n_users:
        raise InvalidEventError("one total per user required")
    if all(t == "2nu" for t in totals):
        multiple = theta_g_d / math.pi
        if abs(multiple - round(multiple)) < 1e-9:
            return "X"
        return None
    if tuple(totals) in key_z_sets(config):
        return "Z"
    return None


def key_z_sets(config: ProtocolConfig):
    """The Z-like sets contributing raw key under the active options."""
    if config.extended_z_sets:
        return tuple(itertools.product(("mu", "nu"), repeat=config.n_users))
    return (("mu",) * config.n_users,)


def key_map(theta_g_mod: int, r) -> tuple | None:
    """X-basis key bits from the click sides, or None for unusable phases.

    r holds one bit per user: 0 for an L click at the user's port, 1 for
    R. Only the first user keys a nontrivial bit; everyone else keys 0.
    """
    if theta_g_mod not in (0, 1):
        return None
    parity = 0
    for bit in r:
        parity ^= int(bit)
    first = parity ^ theta_g_mod
    return (first,) + (0,) * (len(tuple(r)) - 1)


@dataclass(frozen=True)
class DetailedKeyMap:
    """Frame decomposition theta_i = vartheta_i + kappa_i * pi of X phases."""

    vartheta: tuple
    kappa: tuple
    frames: tuple
    group_mod: int | None

    def bits(self, r) -> tuple | None:
        if self.group_mod is None:
            return None
        parity = self.kappa[0] ^ self.group_mod
        for bit in r:
            parity ^= int(bit)
        return (parity,) + self.kappa[1:]


def key_map_detailed(theta_d) -> DetailedKeyMap:
    """Split each user's phase difference into frame and key parts.

    vartheta in [0, pi) tags the shared measurement frame (0: X, pi/2: Y);
    kappa is the user's key bit. The first user additionally folds in the
    click parity and the group frame phase, see DetailedKeyMap.bits.
    """
    vartheta = []
    kappa = []
    frames = []
    for theta in theta_d:
        reduced = math.fmod(math.fmod(theta, 2.0 * math.pi) + 2.0 * math.pi, 2.0 * math.pi)
        k, v = divmod(reduced, math.pi)
        vartheta.append(v)
        kappa.append(int(k))
        if abs(v) < 1e-9 or abs(v - math.pi) < 1e-9:
            frames.append("X")
        elif abs(v - math.pi / 2.0) < 1e-9:
            frames.append("Y")
        else:
            frames.append(None)
    group = sum(vartheta)
    multiple = group / math.pi
    group_mod = int(round(multiple)) % 2 if abs(multiple - round(multiple)) < 1e-6 else None
    return DetailedKeyMap(
        vartheta=tuple(vartheta), kappa=tuple(kappa), frames=tuple(frames), group_mod=group_mod
    )


def click_filter_survival(config: ProtocolConfig) -> float:
    """Fraction of lone clicks kept by the neighbour-intensity filter.

    The filter drops clicks whose two designated pulses announced the
    (mu, nu) or (nu, mu) combination; everything else survives. Weighted
    by how often each combination actually produces a click.
    """
    if not config.click_filtering:
        return 1.0
    src = config.source
    q_port = marginal_port_click_prob(config)
    mixed = src.p_mu * src.p_nu * (
        marginal_pair_click_prob(config, src.mu, src.nu)
        + marginal_pair_click_prob(config, src.nu, src.mu)
    )
    return 1.0 - mixed / q_port


def effective_port_click_prob(config: ProtocolConfig) -> float:
    """Per-port lone-click probability after filtering (q-tilde)."""
    return click_filter_survival(config) * marginal_port_click_prob(config)


class _MarginalTable:
    """Per-config cache of the 3x3 marginal pair click probabilities."""

    def __init__(self, config: ProtocolConfig):
        self.config = config
        src = config.source
        self.q_pair = {}
        for a in ("mu", "nu", "o"):
            for b in ("mu", "nu", "o"):
                self.q_pair[(a, b)] = marginal_pair_click_prob(
                    config, src.intensity(a), src.intensity(b)
                )
        self.q_port = marginal_port_click_prob(config)
        self.survival = click_filter_survival(config)
        self.q_tilde = self.survival * self.q_port


def _splits_allowed(config: ProtocolConfig, combo) -> bool:
    """False when filtering discards one of the event's port pairs."""
    if not config.click_filtering:
        return True
    n = len(combo)
    for i in range(n):
        pair = (combo[i][1], combo[(i + 1) % n][0])
        if pair in (("mu", "nu"), ("nu", "mu")):
            return False
    return True


def z_type_count(config: ProtocolConfig, totals, n_tot: float, table: _MarginalTable | None = None):
    """Expected count of paired events announcing a Z-like set.

    Returns (count, error_counts) where error_counts[i] (1-based partner
    index, i >= 2) is the expected number of events whose first and i-th
    user key bits disagree. Error counts are only meaningful for sets
    whose totals all split one-sidedly.
    """
    table = table or _MarginalTable(config)
    src = config.source
    n = config.n_users
    count = 0.0
    errors = {i: 0.0 for i in range(2, n + 1)}
    keyable = all(total in ("mu", "nu", "o") for total in totals)
    for combo in itertools.product(*[SPLITS[t] for t in totals]):
        if not _splits_allowed(config, combo):
            continue
        weight = 1.0
        for e, l in combo:
            weight *= src.emission_prob(e) * src.emission_prob(l)
        for i in range(n):
            weight *= table.q_pair[(combo[i][1], combo[(i + 1) % n][0])]
        count += weight
        if keyable:
            # bits defined only when each user's total sits in one bin
            bits = [0 if e != "o" else 1 if l != "o" else None for e, l in combo]
            if all(b is not None for b in bits):
                for i in range(2, n + 1):
                    if bits[0] != bits[i - 1]:
                        errors[i] += weight
    scale = n_tot / table.q_tilde ** n
    return count * scale, {i: v * scale for i, v in errors.items()}


_GRID_CACHE: dict = {}


def _phase_axes(n_users: int, points: int):
    """Flattened free-axis meshes for the (N-1)-dimensional phase grid."""
    key = (n_users, points)
    if key not in _GRID_CACHE:
        axis = np.linspace(0.0, 2.0 * math.pi, points, endpoint=False)
        meshes = np.meshgrid(*([axis] * (n_users - 1)), indexing="ij", sparse=False)
        _GRID_CACHE[key] = tuple(m.reshape(-1) for m in meshes)
    return _GRID_CACHE[key]


def x_type_count(
    config: ProtocolConfig,
    totals,
    n_tot: float,
    mode: str = "sum",
    table: _MarginalTable | None = None,
    points: int | None = None,
) -> float:
    """Expected count of paired events announcing an X-like set.

    mode "sum" integrates the plain coincidence probability over the
    sifted phase manifold (the count n of the set). Modes "cor" and "err"
    integrate the two click-parity classes separately, with the frame
    misalignment delta applied, so the error count of a set is
    (1-e_d) * err + e_d * cor.
    """
    table = table or _MarginalTable(config)
    src = config.source
    n = config.n_users
    points = points or config.quad_points
    totals = tuple(totals)
    if mode not in ("sum", "cor", "err"):
        raise ValueError(f"unknown mode {mode!r}")

    if any(t != "2nu" for t in totals):
        # Comparison sets are not phase-sifted. Their ports click at
        # independent time bins, so the expectation reduces to a product
        # of phase-averaged marginals, one factor per port, exactly like
        # the Z-like sets.
        if mode != "sum":
            raise InvalidEventError("parity classes exist only for the sifted set")
        per_bin_sym = [X_PER_BIN[t] for t in totals]
        prob = 1.0
        for i in range(n):
            prob *= table.q_pair[(per_bin_sym[i], per_bin_sym[(i + 1) % n])]
        weight = 1.0
        for t in totals:
            weight *= x_emission_weight(config, t)
        return n_tot * weight * prob / table.q_tilde ** n

    offset = 0.0 if mode == "sum" else config.misalignment_delta()
    axes = _phase_axes(n, points)
    theta_first = offset - sum(axes)

    per_bin = [src.intensity(X_PER_BIN[t]) for t in totals]
    plus = np.ones_like(theta_first)
    minus = np.ones_like(theta_first)
    for i in range(n):
        a = per_bin[i]
        b = per_bin[(i + 1) % n]
        theta = theta_first if i == 0 else axes[i - 1]
        y_left, y_right = marginal_pair_phase_probs(config, a, b, theta)
        plus *= y_left + y_right
        if mode != "sum":
            minus *= y_left - y_right
    if mode == "sum":
        mean = float(plus.mean())
    elif mode == "cor":
        mean = float(0.5 * (plus + minus).mean())
    else:
        mean = float(0.5 * (plus - minus).mean())

    return n_tot * x_set_prob(config, totals) * mean / table.q_tilde ** n


def key_tallies(config: ProtocolConfig, n_tot: float, table: _MarginalTable | None = None):
    """Raw-key count and pairwise error counts of the key sets alone.

    Cheaper than expected_counts when the X-basis comparison sets are
    not needed, e.g. inside optimisation loops over source parameters.
    """
    table = table or _MarginalTable(config)
    n_z = 0.0
    m_z = {i: 0.0 for i in range(2, config.n_users + 1)}
    for totals in key_z_sets(config):
        count, errors = z_type_count(config, totals, n_tot, table)
        n_z += count
        for i, v in errors.items():
            m_z[i] += v
    return n_z, m_z


@dataclass(frozen=True)
class SiftedTallies:
    """Expected sifted counts of one run configuration."""

    config: ProtocolConfig
    n_tot: float
    n_z: float
    m_z: dict
    n_x: float
    m_x: float
    z_counts: dict
    x_counts: dict
    quad_warning: bool

    @property
    def qber_x(self) -> float:
        return self.m_x / self.n_x if self.n_x > 0 else 0.5

    @property
    def e_z(self) -> dict:
        if self.n_z <= 0:
            return {i: 0.5 for i in self.m_z}
        return {i: m / self.n_z for i, m in self.m_z.items()}


def expected_counts(config: ProtocolConfig, n_tot: float) -> SiftedTallies:
    """All sifted counts needed downstream, as expectations.

    Always includes the key sets of both bases; with three users it also
    fills every Z-like comparison set over {mu, nu, o} and the X-like
    comparison sets used by the finite-size estimators.
    """
    table = _MarginalTable(config)
    n = config.n_users

    z_counts: dict = {}
    m_z = {i: 0.0 for i in range(2, n + 1)}
    n_z = 0.0
    for totals in key_z_sets(config):
        count, errors = z_type_count(config, totals, n_tot, table)
        z_counts[totals] = count
        n_z += count
        for i, v in errors.items():
            m_z[i] += v
    if n == 3:
        for totals in itertools.product(("mu", "nu", "o"), repeat=3):
            if totals not in z_counts:
                z_counts[totals], _ = z_type_count(config, totals, n_tot, table)

    x_key = ("2nu",) * n
    n_x = x_type_count(config, x_key, n_tot, "sum", table)
    coarse = x_type_count(config, x_key, n_tot, "sum", table, points=max(8, config.quad_points // 2))
    quad_warning = abs(coarse - n_x) > 1e-6 * max(abs(n_x), 1e-300)
    m_x = (1.0 - config.channel.e_d) * x_type_count(config, x_key, n_tot, "err", table) + (
        config.channel.e_d
    ) * x_type_count(config, x_key, n_tot, "cor", table)

    x_counts: dict = {x_key: n_x}
    if n == 3:
        for totals in set(itertools.permutations(("2nu", "2nu", "o"))) | set(
            itertools.permutations(("2nu", "o", "o"))
        ) | {("o", "o", "o")}:
            x_counts[totals] = x_type_count(config, totals, n_tot, "sum", table)

    return SiftedTallies(
        config=config,
        n_tot=n_tot,
        n_z=n_z,
        m_z=m_z,
        n_x=n_x,
        m_x=m_x,
        z_counts=z_counts,
        x_counts=x_counts,
        quad_warning=quad_warning,
    )
