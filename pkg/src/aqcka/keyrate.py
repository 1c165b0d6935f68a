r"""Key lengths, rates, and the repeaterless comparison bound.

The secret fraction follows the usual entropic structure: the vacuum
and single-photon contributions survive privacy amplification against
the phase error rate, error correction leaks f * H2(E) per reconciled
bit against the worst pairwise Z error, and (in the finite regime) the
composition terms of the security parameters are paid explicitly.

Everything here consumes expectations or bounds produced elsewhere;
there is no sampling and no optimisation in this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import decoy, pairing, sift
from .model import ProtocolConfig, SecurityParams
from .stats import DomainError, EpsilonLedger, binary_entropy

CSV_COLUMNS = (
    "distance_km",
    "eta",
    "rate",
    "key_length",
    "plob",
    "qber_x",
    "phase_error",
    "n_tot",
    "mu",
    "nu",
    "p_mu",
    "p_nu",
    "t_c_s",
    "feasible",
)


@dataclass(frozen=True)
class SecurityBudget:
    """Composed failure probabilities of one finite-size evaluation."""

    eps_sec: float
    eps_tot: float


def security_budget(security: SecurityParams, ledger: EpsilonLedger | None = None) -> SecurityBudget:
    """Total secrecy and correctness failure probability.

    When a ledger from the finite estimators is supplied, the number of
    epsilons actually spent per estimator is checked against the counts
    the composition assumes; a mismatch means the estimators and the
    budget have drifted apart and is an internal error.
    """
    if ledger is not None:
        expected = {"s111": 15, "t111": 8, "conversion": 4}
        for label, want in expected.items():
            got = ledger.count(label)
            if got != want:
                raise ValueError(f"{label} spent {got} epsilons, composition assumes {want}")
        if ledger.count("s0") not in (1, 4):
            raise ValueError(f"s0 spent {ledger.count('s0')} epsilons, composition assumes 1 or 4")
    eps = security.eps_chernoff
    eps_sec = (
        2.0 * (security.eps_prime + 2.0 * security.eps_e + security.eps_hat)
        + 4.0 * eps
        + 15.0 * eps
        + eps
        + security.eps_pa
    )
    return SecurityBudget(eps_sec=eps_sec, eps_tot=eps_sec + security.eps_cor)


def plob_star_bound(eta: float) -> float:
    """Repeaterless secret-key capacity -log2(1 - eta^2) of the lumped channel.

    eta is the end-to-end transmittance of one user's link including
    detection efficiency; the square accounts for the two links any
    pairwise key must bridge.

    >>> round(plob_star_bound(0.1), 6)
    0.0145
    """
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"transmittance must lie in [0, 1], got {eta}")
    if eta == 1.0:
        return math.inf
    return -math.log1p(-eta * eta) / math.log(2.0)


@dataclass(frozen=True)
class KeyRateResult:
    """Outcome of one (configuration, distance, mode) evaluation."""

    key_length_bits: float
    rate_per_pulse: float
    plob_bound: float
    components: dict
    feasible: bool


def _error_correction_leak(config: ProtocolConfig, n_z: float, e_z: dict) -> tuple:
    f = config.security.error_correction_f
    e_max = max(min(e, 0.5) for e in e_z.values())
    return f * n_z * binary_entropy(e_max), e_max


def asymptotic_key_length(
    config: ProtocolConfig, estimates: decoy.DecoyEstimates, tallies: sift.SiftedTallies
) -> tuple:
    """Raw asymptotic key length and its named components."""
    leak, e_max = _error_correction_leak(config, tallies.n_z, tallies.e_z)
    phi = min(estimates.phi_z, 0.5)
    length = estimates.s1_z * (1.0 - binary_entropy(phi)) - leak
    return length, {"leak_ec": leak, "e_z_max": e_max}


def finite_key_length_3user(
    config: ProtocolConfig, estimates: decoy.DecoyEstimates, tallies: sift.SiftedTallies
) -> tuple:
    """Raw finite key length, its components, and the epsilon budget."""
    sec = config.security
    leak, e_max = _error_correction_leak(config, tallies.n_z, tallies.e_z)
    phi = min(estimates.phi_z, 0.5)
    budget = security_budget(sec, estimates.ledger)
    length = (
        estimates.s0_z
        + estimates.s1_z * (1.0 - binary_entropy(phi))
        - leak
        - math.log2(2.0 * (config.n_users - 1) / sec.eps_cor)
        - 2.0 * math.log2(2.0 / (sec.eps_prime * sec.eps_hat))
        - 2.0 * math.log2(1.0 / (2.0 * sec.eps_pa))
    )
    return length, {"leak_ec": leak, "e_z_max": e_max}, budget


def raw_key_length(config: ProtocolConfig, mode: str = "asymptotic") -> float:
    """Unclamped key length, skipping whatever the mode lets us skip.

    In asymptotic mode neither the length nor its subtractions touch the
    X-basis comparison sets, so the phase integrals are avoided
    entirely. The finite mode needs all of them and costs the same as
    evaluate_point. Meant as an optimisation objective.
    """
    if mode == "finite":
        return evaluate_point(config, "finite").components["l_raw"]
    config.validate()
    q_tilde = sift.effective_port_click_prob(config)
    n_tot = pairing.analytic_pair_count(
        [q_tilde] * config.n_users,
        config.security.total_pulses,
        config.timing.n_tc,
        phase_locked=config.timing.phase_locked,
    )
    estimates = decoy.asymptotic_estimates(config, n_tot)
    n_z, m_z = sift.key_tallies(config, n_tot)
    e_z = {i: (m / n_z if n_z > 0 else 0.5) for i, m in m_z.items()}
    leak, _ = _error_correction_leak(config, n_z, e_z)
    return estimates.s1_z * (1.0 - binary_entropy(min(estimates.phi_z, 0.5))) - leak


def evaluate_point(config: ProtocolConfig, mode: str = "asymptotic") -> KeyRateResult:
    """Evaluate the key rate of one configuration.

    mode "asymptotic" uses the expected single-photon counts directly;
    mode "finite" (three users) runs the decoy bounds and subtracts the
    composition terms. Both divide by the configured pulse count.
    """
    if mode not in ("asymptotic", "finite"):
        raise ValueError(f"unknown mode {mode!r}")
    config.validate()
    pulses = config.security.total_pulses
    q_tilde = sift.effective_port_click_prob(config)
    n_tot = pairing.analytic_pair_count(
        [q_tilde] * config.n_users,
        pulses,
        config.timing.n_tc,
        phase_locked=config.timing.phase_locked,
    )
    tallies = sift.expected_counts(config, n_tot)

    if mode == "asymptotic":
        estimates = decoy.asymptotic_estimates(config, n_tot)
        length_raw, parts = asymptotic_key_length(config, estimates, tallies)
        budget = None
    else:
        estimates = decoy.finite_bounds_3user(tallies)
        length_raw, parts, budget = finite_key_length_3user(config, estimates, tallies)

    feasible = length_raw > 0.0
    length = max(length_raw, 0.0)
    components = {
        "l_raw": length_raw,
        "n_tot": n_tot,
        "n_z": tallies.n_z,
        "qber_x": tallies.qber_x,
        "phi_z": estimates.phi_z,
        "s0_z": estimates.s0_z,
        "s1_z": estimates.s1_z,
        "s1_x": estimates.s1_x,
        "t1_x": estimates.t1_x,
        "quad_warning": tallies.quad_warning,
        "flags": estimates.flags,
        **parts,
    }
    if budget is not None:
        components["eps_sec"] = budget.eps_sec
        components["eps_tot"] = budget.eps_tot
    return KeyRateResult(
        key_length_bits=length,
        rate_per_pulse=length / pulses,
        plob_bound=plob_star_bound(config.eta),
        components=components,
        feasible=feasible,
    )


def _scan_row(cfg: ProtocolConfig, distance_km: float, result: KeyRateResult) -> dict:
    return {
        "distance_km": float(distance_km),
        "eta": cfg.eta,
        "rate": result.rate_per_pulse,
        "key_length": result.key_length_bits,
        "plob": result.plob_bound,
        "qber_x": result.components["qber_x"],
        "phase_error": result.components["phi_z"],
        "n_tot": result.components["n_tot"],
        "mu": cfg.source.mu,
        "nu": cfg.source.nu,
        "p_mu": cfg.source.p_mu,
        "p_nu": cfg.source.p_nu,
        "t_c_s": cfg.timing.t_c_s,
        "feasible": result.feasible,
    }


def scan_distance(
    config: ProtocolConfig,
    distances,
    mode: str = "asymptotic",
    optimize_params: bool = False,
    seed: int = 0,
    workers: int = 1,
):
    """Evaluate (optionally optimising the source) along a distance scan.

    Returns one dict per distance with exactly the CSV columns. With
    optimisation on, the best parameters of each distance warm-start the
    next, so the scan runs serially from short to long range and the
    workers argument has no effect; without it, distances are
    independent and split over a thread pool. Row order always follows
    the input order, so the CSV bytes do not depend on workers.
    """
    if optimize_params:
        from .optimize import apply_params, optimize_point

        rows = []
        warm = None
        for d in distances:
            params, result = optimize_point(config, float(d), mode, seed=seed, warm=warm)
            warm = params
            rows.append(_scan_row(apply_params(config.at_distance(float(d)), params), d, result))
        return rows

    configs = [config.at_distance(float(d)) for d in distances]
    if workers > 1 and len(configs) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: evaluate_point(c, mode), configs))
    else:
        results = [evaluate_point(c, mode) for c in configs]
    return [_scan_row(c, d, r) for c, d, r in zip(configs, distances, results)]


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(float(value))


def write_scan_csv(rows, fh) -> None:
    """Write scan rows with stable, locale-free float formatting."""
    fh.write(",".join(CSV_COLUMNS) + "\n")
    for row in rows:
        fh.write(",".join(_format_cell(row[c]) for c in CSV_COLUMNS) + "\n")
