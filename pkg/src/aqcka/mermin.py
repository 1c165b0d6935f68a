r"""Device-independent witness from the X-basis coincidence statistics.

For three users the witness combines four correlators,

.. math:: M = <XXX> - <XYY> - <YXY> - <YYX>,

bounded by 2 classically and by 4 for a GHZ state. The protocol never
measures the correlators directly; it accumulates signed coincidence
counts per announced intensity set and extracts the single-photon
contribution to M with the same three-intensity comparison technique
the decoy estimators use, on both the signal and decoy sets.

Sign convention: outcome +1 for an L click, -1 for R. A signed count
n^(s) of a set is the expected number of its sifted events whose clicks
realised the sign vector s.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from . import pairing, sift
from .model import ProtocolConfig, SecurityParams, SourceConfig
from .stats import DomainError, EpsilonLedger, chernoff_expected

CLASSICAL_BOUND = 2.0
QUANTUM_BOUND = 4.0

# The witness extraction is only tight for weak pulses: the subtraction
# blocks scale their slack with the intensities, and at the key-rate
# optimum (mu around 0.3-0.6) the lower bound collapses to zero. Witness
# scans default to this source instead of the key-generation one.
WITNESS_SOURCE = SourceConfig(mu=0.05, nu=0.02, p_mu=0.1, p_nu=0.6)


def mermin_inequality(c_xxx: float, c_xyy: float, c_yxy: float, c_yyx: float) -> float:
    """Witness value from four three-party correlators.

    >>> mermin_inequality(1.0, -1.0, -1.0, -1.0)
    4.0
    """
    for c in (c_xxx, c_xyy, c_yxy, c_yyx):
        if abs(c) > 1.0:
            raise DomainError(f"correlators lie in [-1, 1], got {c}")
    return c_xxx - c_xyy - c_yxy - c_yyx


def _perms(*totals):
    return sorted(set(itertools.permutations(totals)))


MERMIN_SETS = (
    [("2nu",) * 3]
    + _perms("2nu", "2nu", "o")
    + _perms("2nu", "o", "o")
    + [("o",) * 3]
    + [("2mu",) * 3]
    + _perms("2mu", "2mu", "o")
    + _perms("2mu", "o", "o")
)


@dataclass(frozen=True)
class MerminCounts:
    """Expected signed coincidence counts of every comparison set."""

    config: ProtocolConfig
    n_tot: float
    counts: dict

    def signed(self, totals, signs) -> float:
        return self.counts[(tuple(totals), tuple(signs))]


def expected_signed_counts(config: ProtocolConfig) -> MerminCounts:
    """Expected signed counts of the witness comparison sets.

    The sifted test set resolves the click parity: a sign vector of
    product +1 draws from the correct-parity yield class and -1 from the
    error class, each class split evenly over its four sign vectors and
    the two frame signs, with the misalignment mixing the classes. Every
    other set is unsifted and shares its plain count uniformly over the
    sixteen (frame, sign-vector) cells.
    """
    config.validate()
    e_d = config.channel.e_d
    q_tilde = sift.effective_port_click_prob(config)
    n_tot = pairing.analytic_pair_count(
        [q_tilde] * config.n_users,
        config.security.total_pulses,
        config.timing.n_tc,
        phase_locked=config.timing.phase_locked,
    )
    counts: dict = {}
    table = sift._MarginalTable(config)
    for totals in MERMIN_SETS:
        if totals == ("2nu",) * 3:
            cor = sift.x_type_count(config, totals, n_tot, "cor", table)
            err = sift.x_type_count(config, totals, n_tot, "err", table)
            cor_mixed = (1.0 - e_d) * cor + e_d * err
            err_mixed = (1.0 - e_d) * err + e_d * cor
            for signs in itertools.product((1, -1), repeat=3):
                is_cor = signs[0] * signs[1] * signs[2] == 1
                counts[(totals, signs)] = (cor_mixed if is_cor else err_mixed) / 8.0
        else:
            total = sift.x_type_count(config, totals, n_tot, "sum", table)
            for signs in itertools.product((1, -1), repeat=3):
                counts[(totals, signs)] = total / 16.0
    return MerminCounts(config=config, n_tot=n_tot, counts=counts)


@dataclass(frozen=True)
class MerminEstimate:
    """One-sided bounds on the witness and its signed-count inputs."""

    s_ppp_lower: float
    s_ppp_upper: float
    s_mmm_upper: float
    m_lower: float
    flags: tuple
    epsilon_total: float


class _SignedBank:
    """Fluctuation endpoints of the signed counts, epsilon-metered."""

    def __init__(self, counts: MerminCounts, security: SecurityParams, mode: str):
        self.counts = counts
        self.eps = security.eps_chernoff
        self.mode = mode
        self.ledger = EpsilonLedger()

    def _endpoint(self, totals, signs, direction: str) -> float:
        value = self.counts.signed(totals, signs)
        if self.mode == "asymptotic":
            return value
        self.ledger.spend("mermin", self.eps)
        pair = chernoff_expected(value, self.eps)
        return pair.upper if direction == "upper" else pair.lower

    def lower(self, totals, signs):
        return self._endpoint(totals, signs, "lower")

    def upper(self, totals, signs):
        return self._endpoint(totals, signs, "upper")


def _intensity_block(config, bank, signs, sym: str, sense: str) -> float:
    """One alternating comparison block of the witness extraction.

    sym is "2nu" or "2mu"; sense "lower" takes the endpoint pattern of a
    lower bound (+ terms from below, - terms from above), "upper" the
    reverse. Terms are normalised by their set emission probabilities.
    """
    twice = 2.0 * (config.source.nu if sym == "2nu" else config.source.mu)
    take = (bank.lower, bank.upper) if sense == "lower" else (bank.upper, bank.lower)
    plus, minus = take

    def norm(totals):
        return sift.x_set_prob(config, totals)

    key = (sym,) * 3
    out = math.exp(3.0 * twice) * plus(key, signs) / norm(key)
    for t in _perms(sym, sym, "o"):
        out -= math.exp(2.0 * twice) * minus(t, signs) / norm(t)
    for t in _perms(sym, "o", "o"):
        out += math.exp(twice) * plus(t, signs) / norm(t)
    out -= minus(("o",) * 3, signs) / norm(("o",) * 3)
    return out


def mermin_lower_bound(
    counts: MerminCounts, security: SecurityParams | None = None, mode: str = "asymptotic"
) -> MerminEstimate:
    """Lower-bound the witness from the signed comparison counts.

    The +++ signed single-photon count is bounded from below with the
    full two-intensity subtraction and from above (along with ---) by
    the decoy-set block alone. In finite mode every count endpoint is a
    Chernoff bound and the epsilons spent are totalled, not asserted:
    the witness is a diagnostic, not part of the key-length budget.
    """
    if mode not in ("asymptotic", "finite"):
        raise ValueError(f"unknown mode {mode!r}")
    config = counts.config
    security = security or config.security
    src = config.source
    mu, nu = src.mu, src.nu
    bank = _SignedBank(counts, security, mode)
    flags = []

    ppp = (1, 1, 1)
    mmm = (-1, -1, -1)
    x_key = ("2nu",) * 3
    scale = math.exp(-6.0 * nu) * sift.x_set_prob(config, x_key)

    a_low = _intensity_block(config, bank, ppp, "2nu", "lower")
    b_flip = _intensity_block(config, bank, ppp, "2mu", "upper")
    s_ppp_lower = scale / (mu ** 3 * (mu - nu)) * (mu ** 4 * a_low - nu ** 4 * b_flip)
    if s_ppp_lower < 0.0:
        s_ppp_lower = 0.0
        flags.append("s_ppp_lower_clamped")

    s_ppp_upper = scale * _intensity_block(config, bank, ppp, "2nu", "upper")
    s_mmm_upper = scale * _intensity_block(config, bank, mmm, "2nu", "upper")

    denom = s_ppp_upper + s_mmm_upper
    if denom <= 0.0:
        flags.append("denominator_nonpositive")
        m_lower = -QUANTUM_BOUND
    else:
        m_lower = 4.0 * (s_ppp_lower - s_mmm_upper) / denom
    if m_lower > QUANTUM_BOUND:
        # The uniform 1/16 share of the comparison sets understates their
        # correlated fraction, so the subtraction block can overshoot near
        # nu ~ mu. The quantum maximum caps whatever the estimator claims.
        m_lower = QUANTUM_BOUND
        flags.append("m_lower_clamped")
    return MerminEstimate(
        s_ppp_lower=s_ppp_lower,
        s_ppp_upper=s_ppp_upper,
        s_mmm_upper=s_mmm_upper,
        m_lower=m_lower,
        flags=tuple(flags),
        epsilon_total=bank.ledger.total(),
    )


MERMIN_CSV_COLUMNS = ("distance_km", "m_lower", "s_ppp_lower", "s_mmm_upper", "classical_bound")


def scan_mermin(config: ProtocolConfig, distances, mode: str = "finite"):
    """Witness bound along a distance scan, one dict per distance."""
    rows = []
    for d in distances:
        cfg = config.at_distance(float(d))
        est = mermin_lower_bound(expected_signed_counts(cfg), cfg.security, mode)
        rows.append(
            {
                "distance_km": float(d),
                "m_lower": est.m_lower,
                "s_ppp_lower": est.s_ppp_lower,
                "s_mmm_upper": est.s_mmm_upper,
                "classical_bound": CLASSICAL_BOUND,
            }
        )
    return rows


def write_mermin_csv(rows, fh) -> None:
    fh.write(",".join(MERMIN_CSV_COLUMNS) + "\n")
    for row in rows:
        fh.write(",".join(repr(float(row[c])) for c in MERMIN_CSV_COLUMNS) + "\n")
