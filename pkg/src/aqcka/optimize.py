r"""Source-parameter optimisation of the key length.

The search space is reparametrised so every point the simplex visits is
a valid configuration: intensities through scaled sigmoids keeping
0 < nu < mu < 1.5, probabilities through a stick-breaking pair keeping
p_mu + p_nu < 1, and the pairing window through its logarithm. With the
relay phase-locked the window does not enter the rate and is dropped
from the search.

Nelder-Mead is restarted from several perturbed points because the
landscape flattens badly once the rate approaches zero; restart offsets
come from a seeded scrambled Sobol block so results are reproducible.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .keyrate import evaluate_point, raw_key_length
from .model import ConfigError, ProtocolConfig

MU_CEILING = 1.5


@dataclasses.dataclass(frozen=True)
class ParamVector:
    """One candidate source setting; t_c_s is None when not searched."""

    mu: float
    nu: float
    p_mu: float
    p_nu: float
    t_c_s: float | None = None

    def __post_init__(self):
        if not 0.0 < self.nu < self.mu <= MU_CEILING:
            raise ConfigError(f"need 0 < nu < mu <= {MU_CEILING}, got nu={self.nu}, mu={self.mu}")
        if self.p_mu < 0.0 or self.p_nu < 0.0 or self.p_mu + self.p_nu > 1.0:
            raise ConfigError(f"invalid decoy probabilities ({self.p_mu}, {self.p_nu})")
        if self.t_c_s is not None and self.t_c_s <= 0.0:
            raise ConfigError(f"pairing window must be positive, got {self.t_c_s}")


def _sigmoid(x: float) -> float:
    x = min(max(x, -40.0), 40.0)
    # bounded away from {0, 1} so chained products stay strictly ordered
    return min(max(1.0 / (1.0 + math.exp(-x)), 1e-9), 1.0 - 1e-9)


def _logit(p: float) -> float:
    p = min(max(p, 1e-15), 1.0 - 1e-15)
    return math.log(p / (1.0 - p))


def _decode(x, with_window: bool) -> ParamVector:
    mu = MU_CEILING * _sigmoid(x[0])
    nu = mu * _sigmoid(x[1])
    p_mu = _sigmoid(x[2])
    p_nu = (1.0 - p_mu) * _sigmoid(x[3])
    t_c = math.exp(min(max(x[4], -40.0), 40.0)) if with_window else None
    return ParamVector(mu=mu, nu=nu, p_mu=p_mu, p_nu=p_nu, t_c_s=t_c)


def _encode(params: ParamVector, with_window: bool) -> np.ndarray:
    x = [
        _logit(params.mu / MU_CEILING),
        _logit(params.nu / params.mu),
        _logit(params.p_mu),
        _logit(params.p_nu / (1.0 - params.p_mu)),
    ]
    if with_window:
        x.append(math.log(params.t_c_s))
    return np.asarray(x, dtype=float)


def apply_params(config: ProtocolConfig, params: ParamVector) -> ProtocolConfig:
    """Copy of config with the candidate source setting installed."""
    source = dataclasses.replace(
        config.source, mu=params.mu, nu=params.nu, p_mu=params.p_mu, p_nu=params.p_nu
    )
    timing = config.timing
    if params.t_c_s is not None:
        timing = dataclasses.replace(timing, t_c_s=params.t_c_s)
    return dataclasses.replace(config, source=source, timing=timing)


def _current_params(config: ProtocolConfig, with_window: bool) -> ParamVector:
    src = config.source
    return ParamVector(
        mu=src.mu,
        nu=src.nu,
        p_mu=src.p_mu,
        p_nu=src.p_nu,
        t_c_s=config.timing.t_c_s if with_window else None,
    )


def optimize_point(
    config: ProtocolConfig,
    distance_km: float,
    mode: str = "asymptotic",
    seed: int = 0,
    n_starts: int = 8,
    warm: ParamVector | None = None,
):
    """Best source setting at one distance, as (params, full evaluation).

    The first start is the warm parameter vector when given (otherwise
    the configured source); the others offset it by a seeded Sobol block
    in the unconstrained coordinates. Each simplex stops once its
    diameter falls under 1e-4 there, or after 400 evaluations. Starts
    run on a thread pool and ties keep the earliest start, so a fixed
    seed gives a fixed answer regardless of scheduling.
    """
    base = config.at_distance(distance_km)
    with_window = not base.timing.phase_locked and base.timing.t_c_s is not None
    pulses = base.security.total_pulses

    # invalid or non-finite points rank strictly behind any real rate
    # (which is always <= 0 here) without feeding inf to the simplex
    penalty = 1.0

    def objective(x) -> float:
        try:
            candidate = apply_params(base, _decode(x, with_window))
            length = raw_key_length(candidate, mode)
        except (ConfigError, ValueError, OverflowError):
            return penalty
        if not math.isfinite(length):
            return penalty
        return -length / pulses

    anchor = warm if warm is not None else _current_params(base, with_window)
    if with_window and anchor.t_c_s is None:
        anchor = dataclasses.replace(anchor, t_c_s=base.timing.t_c_s)
    x_anchor = _encode(anchor, with_window)
    starts = [x_anchor]
    extra = max(n_starts - 1, 0)
    if extra:
        sobol = qmc.Sobol(d=x_anchor.size, scramble=True, seed=seed)
        block = sobol.random_base2(max(1, math.ceil(math.log2(extra))))
        offsets = 2.5 * (2.0 * block[:extra] - 1.0)
        starts.extend(x_anchor + row for row in offsets)

    def run(x0):
        # fatol is inert so the stop rule is simplex diameter or budget
        return minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={"xatol": 1e-4, "fatol": math.inf, "maxfev": 400},
        )

    with ThreadPoolExecutor(max_workers=len(starts)) as pool:
        results = list(pool.map(run, starts))

    best_x = x_anchor
    best_fun = math.inf
    for res in results:
        if res.fun < best_fun:
            best_fun = res.fun
            best_x = res.x

    best_params = _decode(best_x, with_window)
    result = evaluate_point(apply_params(base, best_params), mode)
    return best_params, result


def optimize_scan(
    config: ProtocolConfig,
    distances,
    mode: str = "asymptotic",
    seed: int = 0,
    n_starts: int = 8,
):
    """Optimised evaluations along a scan, warm-starting each distance.

    Yields (distance_km, ParamVector, KeyRateResult) tuples in scan
    order. Each distance seeds its own restarts but anchors the first
    simplex at the previous optimum, which keeps the rate curve from
    jumping between local branches.
    """
    warm = None
    out = []
    for d in distances:
        params, result = optimize_point(
            config, float(d), mode, seed=seed, n_starts=n_starts, warm=warm
        )
        warm = params
        out.append((float(d), params, result))
    return out
