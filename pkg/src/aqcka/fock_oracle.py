r"""Brute-force photon-number reference model of the relay.

This module rebuilds the detection statistics from first principles:
states live in the Fock space of the 2N source modes (early and late bin
of every user), loss acts as a beam splitter into an environment that is
traced out, the relay wiring maps each surviving photon onto the two
detectors of its port, and threshold detectors with dark counts turn the
result into click-pattern probabilities. Nothing here is expanded in eta
or p_d, so the closed forms in :mod:`aqcka.optics` can be validated
against it term by term.

It is deliberately slow and simple. Photon numbers are capped (default 4)
because the state dictionaries grow combinatorially.

Mode order: (early_1, late_1, early_2, late_2, ...). Port i receives the
late mode of user i and the early mode of user i+1, cyclically. On the
port beam splitter a late photon enters as (L - R)/sqrt(2) and an early
photon as (L + R)/sqrt(2); detector order in click patterns is
(L_1, R_1, L_2, R_2, ...).
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass, field

from .model import ChannelModel, transmittance


class CapacityError(ValueError):
    """Raised when a state would exceed the configured photon cap."""


@dataclass(frozen=True)
class FockState:
    """Pure state as a map from occupation tuples to complex amplitudes."""

    amplitudes: dict
    n_modes: int

    def __post_init__(self) -> None:
        norm = 0.0
        for ket, amp in self.amplitudes.items():
            if len(ket) != self.n_modes:
                raise ValueError(f"ket {ket} does not have {self.n_modes} modes")
            if any(n < 0 for n in ket):
                raise ValueError("negative occupation number")
            norm += abs(amp) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state norm {norm} is not 1")

    def total_photons(self) -> int:
        return max((sum(ket) for ket in self.amplitudes), default=0)


def x_input_state(n_users: int, theta_diffs) -> FockState:
    """One photon per user, split over its early and late bin.

    theta_diffs[i] is user i's late-minus-early phase, so each user
    contributes (e_i + exp(i theta) l_i)/sqrt(2) acting on vacuum.
    """
    if len(theta_diffs) != n_users:
        raise ValueError("need one phase per user")
    amps: dict[tuple[int, ...], complex] = {}
    scale = 2.0 ** (-n_users / 2.0)
    for choice in itertools.product((0, 1), repeat=n_users):
        ket = [0] * (2 * n_users)
        phase = 0.0
        for user, late in enumerate(choice):
            ket[2 * user + late] = 1
            if late:
                phase += theta_diffs[user]
        amps[tuple(ket)] = scale * cmath.exp(1j * phase)
    return FockState(amplitudes=amps, n_modes=2 * n_users)


def _loss_sectors(state: FockState, eta: float) -> dict:
    """Split the state by its pattern of lost photons.

    Each mode passes a transmittance-eta beam splitter; the reflected part
    is the (orthogonal, traced-out) environment, so amplitudes only
    interfere within a fixed lost-photon pattern.
    """
    sectors: dict[tuple[int, ...], dict[tuple[int, ...], complex]] = {}
    sqrt_eta = math.sqrt(eta)
    sqrt_loss = math.sqrt(1.0 - eta)
    for ket, amp in state.amplitudes.items():
        per_mode = []
        for n in ket:
            options = []
            for kept in range(n + 1):
                factor = math.sqrt(math.comb(n, kept)) * sqrt_eta ** kept * sqrt_loss ** (n - kept)
                if factor != 0.0:
                    options.append((kept, factor))
            per_mode.append(options)
        for combo in itertools.product(*per_mode):
            kept_ket = tuple(kept for kept, _ in combo)
            lost_ket = tuple(n - kept for n, (kept, _) in zip(ket, combo))
            factor = 1.0
            for _, f in combo:
                factor *= f
            sector = sectors.setdefault(lost_ket, {})
            sector[kept_ket] = sector.get(kept_ket, 0.0 + 0.0j) + amp * factor
    return sectors


def _through_network(kets: dict, n_users: int) -> dict:
    """Map source-mode amplitudes to detector-mode amplitudes.

    Expands the creation-operator polynomial of every ket. The 1/sqrt(n!)
    of each source mode and the sqrt(p!) of each detector mode are the
    usual normal-ordering factors.
    """
    n_det = 2 * n_users
    out: dict[tuple[int, ...], complex] = {}
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    for ket, amp in kets.items():
        # monomials: detector occupation tuple -> coefficient
        monomials: dict[tuple[int, ...], complex] = {tuple([0] * n_det): amp}
        for mode, n in enumerate(ket):
            if n == 0:
                continue
            user, late = divmod(mode, 2)
            if late:
                port = user
                sign = -1.0
            else:
                port = (user - 1) % n_users
                sign = 1.0
            left, right = 2 * port, 2 * port + 1
            norm = 1.0 / math.sqrt(math.factorial(n))
            for _ in range(n):
                grown: dict[tuple[int, ...], complex] = {}
                for occ, coeff in monomials.items():
                    for det, factor in ((left, inv_sqrt2), (right, sign * inv_sqrt2)):
                        new_occ = list(occ)
                        new_occ[det] += 1
                        key = tuple(new_occ)
                        grown[key] = grown.get(key, 0.0 + 0.0j) + coeff * factor
                monomials = grown
            monomials = {occ: coeff * norm for occ, coeff in monomials.items()}
        for occ, coeff in monomials.items():
            weight = coeff
            for p in occ:
                weight *= math.sqrt(math.factorial(p))
            out[occ] = out.get(occ, 0.0 + 0.0j) + weight
    return out


def propagate(state: FockState, n_users: int, channel: ChannelModel, photon_cap: int = 4) -> dict:
    """Full click-pattern distribution of the relay for an input state.

    Returns a map from 2N-tuples of 0/1 click flags (detector order
    L_1, R_1, L_2, ...) to probabilities; the values sum to one. Raises
    CapacityError if any ket holds more than photon_cap photons.
    """
    if state.n_modes != 2 * n_users:
        raise ValueError("state has the wrong number of modes for this relay")
    if state.total_photons() > photon_cap:
        raise CapacityError(f"state exceeds the photon cap of {photon_cap}")
    eta = transmittance(channel)
    p_d = channel.p_d
    n_det = 2 * n_users

    pattern_probs: dict[tuple[int, ...], float] = {}
    for _, kets in _loss_sectors(state, eta).items():
        det_amps = _through_network(kets, n_users)
        occ_probs: dict[tuple[int, ...], float] = {}
        for occ, amp in det_amps.items():
            p = abs(amp) ** 2
            if p > 0.0:
                occ_probs[occ] = occ_probs.get(occ, 0.0) + p
        for occ, p_occ in occ_probs.items():
            # Threshold detection: occupied detectors click; empty ones
            # click only through a dark count.
            per_det = [(1.0, None) if n > 0 else (p_d, 1.0 - p_d) for n in occ]
            for clicks in itertools.product((1, 0), repeat=n_det):
                weight = p_occ
                for (p_click, p_silent), c in zip(per_det, clicks):
                    if c:
                        weight *= p_click
                    else:
                        if p_silent is None:
                            weight = 0.0
                            break
                        weight *= p_silent
                if weight > 0.0:
                    pattern_probs[clicks] = pattern_probs.get(clicks, 0.0) + weight
    return pattern_probs


def coincidence_patterns(pattern_probs: dict, n_users: int) -> dict:
    """Reduce a click-pattern distribution to lone N-fold coincidences.

    Keeps only patterns with exactly one click per port and keys them by
    the tuple of sides, e.g. ("L", "R", "L").
    """
    out: dict[tuple[str, ...], float] = {}
    for clicks, prob in pattern_probs.items():
        sides = []
        for port in range(n_users):
            l_click, r_click = clicks[2 * port], clicks[2 * port + 1]
            if l_click and r_click:
                sides = None
                break
            if not l_click and not r_click:
                sides = None
                break
            sides.append("L" if l_click else "R")
        if sides is not None:
            key = tuple(sides)
            out[key] = out.get(key, 0.0) + prob
    return out


def x_pattern_distribution(n_users: int, channel: ChannelModel, theta_diffs=None) -> dict:
    """Coincidence-pattern yields of the all-single-photon X input."""
    if theta_diffs is None:
        theta_diffs = [0.0] * n_users
    state = x_input_state(n_users, theta_diffs)
    return coincidence_patterns(propagate(state, n_users, channel, photon_cap=max(4, n_users)), n_users)


@dataclass(frozen=True)
class ParityCheck:
    """Outcome of a relay parity measurement on an aligned X input."""

    parity: int | None
    consistent: bool
    coincidence_prob: float
    expected_parity: int


def parity_rule_check(n_users: int, theta_g_d: float) -> ParityCheck:
    """Verify which click parity a global phase difference produces.

    Sends one photon per user through a lossless relay with theta_g_d
    concentrated on the first user, and checks that every surviving
    N-fold coincidence has the single parity (theta_g_d/pi) mod 2 of R
    outcomes. Requires theta_g_d to be a multiple of pi, since only those
    values survive the X-basis sifting.
    """
    multiple = theta_g_d / math.pi
    if abs(multiple - round(multiple)) > 1e-9:
        raise ValueError("the global phase must be a multiple of pi")
    expected = int(round(multiple)) % 2
    ideal = ChannelModel(distance_km=0.0, alpha_db_per_km=0.0, eta_det=1.0, p_d=0.0, e_d=0.0)
    theta = [0.0] * n_users
    theta[0] = theta_g_d
    patterns = x_pattern_distribution(n_users, ideal, theta)
    total = sum(patterns.values())
    parities = {
        sum(1 for side in key if side == "R") % 2
        for key, prob in patterns.items()
        if prob > 1e-12
    }
    if len(parities) == 1:
        parity = parities.pop()
        return ParityCheck(parity=parity, consistent=parity == expected, coincidence_prob=total, expected_parity=expected)
    return ParityCheck(parity=None, consistent=False, coincidence_prob=total, expected_parity=expected)


def port_click_distribution(late_photons: int, early_photons: int, channel: ChannelModel) -> dict:
    """Reference outcome distribution of a single port fed with Fock inputs.

    Photons are treated as mutually distinguishable: each one independently
    reaches its designated port (probability eta/2, then either detector
    with probability 1/2), is lost (1 - eta), or crosses to the neighbour
    port (eta/2). A surviving crossed photon clicks elsewhere and voids
    the event only when this port also detected a photon; when nothing
    was detected here the event stays a plain dark-count opportunity.
    Outcomes: "L", "R" (lone single clicks), "none", "both", "void".
    """
    eta = transmittance(channel)
    p_d = channel.p_d
    fates = (("L", eta / 4.0), ("R", eta / 4.0), ("lost", 1.0 - eta), ("cross", eta / 2.0))
    out = {"L": 0.0, "R": 0.0, "none": 0.0, "both": 0.0, "void": 0.0}
    n = late_photons + early_photons
    for combo in itertools.product(fates, repeat=n):
        weight = 1.0
        occupied = {"L": False, "R": False}
        crossed = False
        for fate, p in combo:
            weight *= p
            if fate == "cross":
                crossed = True
            elif fate in occupied:
                occupied[fate] = True
        if crossed and (occupied["L"] or occupied["R"]):
            out["void"] += weight
            continue
        p_l = 1.0 if occupied["L"] else p_d
        p_r = 1.0 if occupied["R"] else p_d
        out["L"] += weight * p_l * (1.0 - p_r)
        out["R"] += weight * (1.0 - p_l) * p_r
        out["both"] += weight * p_l * p_r
        out["none"] += weight * (1.0 - p_l) * (1.0 - p_r)
    return out
