"""Command-line front end.

Subcommands: scan (key rate over distance), montecarlo (pairing sweep
against the analytic count), mermin (witness bound over distance), and
validate (check a config file). Results go to --out as CSV; a run
manifest with a content hash of those bytes goes to stderr, so the CSV
itself stays reproducible byte for byte.

Exit codes: 0 on success, 1 when a requested validation fails (bad
config file, Monte Carlo deviation over threshold), 2 for usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime
import hashlib
import io
import math
import sys

from . import keyrate, mermin, pairing
from .model import ConfigError, ProtocolConfig, dump_config, load_config

_GNUPLOT = """\
# gnuplot script, expects the CSV next to it
set datafile separator ","
set key autotitle columnhead
set logscale y
set xlabel "distance (km)"
set ylabel "{ylabel}"
plot "{csv}" using 1:{col} with lines
"""

FIG_DISTANCES = {
    "3a": (0.0, 400.0, 25.0),
    "3b": (0.0, 400.0, 25.0),
    "4": (0.0, 400.0, 25.0),
    "6": (0.0, 350.0, 25.0),
    "7": (0.0, 150.0, 10.0),
}


@dataclasses.dataclass(frozen=True)
class RunManifest:
    """Reproducibility record emitted on stderr, never into the CSV."""

    config_text: str
    seed: int
    mode: str
    content_sha1: str
    timestamp: str

    def to_text(self) -> str:
        lines = [
            "# run manifest",
            f"# mode: {self.mode}",
            f"# seed: {self.seed}",
            f"# sha1: {self.content_sha1}",
            f"# timestamp: {self.timestamp}",
        ]
        lines += ["# " + line for line in self.config_text.rstrip("\n").split("\n")]
        return "\n".join(lines) + "\n"


def content_hash(data: bytes) -> str:
    """Hash of the output bytes, in git blob convention."""
    return hashlib.sha1(b"blob %d\x00" % len(data) + data).hexdigest()


def _emit(data: str, out: str, manifest: RunManifest) -> None:
    if out == "-":
        sys.stdout.write(data)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(data)
    sys.stderr.write(manifest.to_text())


def _emit_gnuplot(args, ylabel: str, col: int) -> None:
    if not getattr(args, "gnuplot", None):
        return
    if args.out == "-":
        raise ConfigError("--gnuplot needs --out to point at a CSV file")
    with open(args.gnuplot, "w") as fh:
        fh.write(_GNUPLOT.format(csv=args.out, ylabel=ylabel, col=col))


def _manifest(config: ProtocolConfig, seed: int, mode: str, data: str) -> RunManifest:
    return RunManifest(
        config_text=dump_config(config),
        seed=seed,
        mode=mode,
        content_sha1=content_hash(data.encode()),
        timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat(),
    )


def parse_distances(text: str):
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"distance ranges are START:STOP:STEP, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ConfigError("distance step must be positive")
        out = []
        d = start
        while d <= stop + 1e-9:
            out.append(round(d, 9))
            d += step
        return out
    return [float(text)]


def _apply_overrides(config: ProtocolConfig, args) -> ProtocolConfig:
    if args.users is not None:
        if args.users > 4:
            raise ConfigError("more than four users is not supported end to end")
        config = dataclasses.replace(config, n_users=args.users)
    if args.phase_locked:
        config = dataclasses.replace(
            config, timing=dataclasses.replace(config.timing, phase_locked=True)
        )
    if args.filtering:
        config = dataclasses.replace(config, click_filtering=True)
    if args.pulses is not None:
        config = dataclasses.replace(
            config, security=dataclasses.replace(config.security, total_pulses=args.pulses)
        )
    return config


def _preset(config: ProtocolConfig, fig: str):
    """Figure preset: adjusted config, distance grid, mode, optimisation."""
    start, stop, step = FIG_DISTANCES[fig]
    distances = parse_distances(f"{start}:{stop}:{step}")
    timing = config.timing
    if fig in ("3a", "3b"):
        config = dataclasses.replace(
            config,
            n_users=3 if fig == "3a" else 4,
            timing=dataclasses.replace(timing, phase_locked=True),
        )
        return config, distances, "asymptotic", True
    if fig == "4":
        config = dataclasses.replace(
            config, n_users=3, timing=dataclasses.replace(timing, phase_locked=False)
        )
        return config, distances, "asymptotic", True
    if fig == "6":
        config = dataclasses.replace(
            config,
            n_users=3,
            click_filtering=True,
            security=dataclasses.replace(config.security, total_pulses=1e16),
        )
        return config, distances, "finite", True
    config = dataclasses.replace(
        config,
        n_users=3,
        security=dataclasses.replace(config.security, total_pulses=1e16),
    )
    return config, distances, "finite", False


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="INI config file; defaults are used without one")
    parser.add_argument("--users", type=int, help="number of users (3 or 4)")
    parser.add_argument("--distance-km", dest="distance_km", help="distance or START:STOP:STEP")
    parser.add_argument("--phase-locked", action="store_true", help="lock the relay phases")
    parser.add_argument("--filtering", action="store_true", help="enable click filtering")
    parser.add_argument("--pulses", type=float, help="override the total pulse count")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="-", help="output CSV path, - for stdout")
    parser.add_argument("--gnuplot", help="also write a gnuplot script for the CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aqcka", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    scan = sub.add_parser("scan", help="key rate over a distance scan")
    _add_common(scan)
    scan.add_argument("--mode", choices=("asymptotic", "finite"), default=None)
    scan.add_argument("--optimize", action="store_true", help="optimise source per distance")
    scan.add_argument("--workers", type=int, default=1, help="evaluation threads")
    scan.add_argument("--fig", choices=("3a", "3b", "4", "6"), help="preset scan")

    mc = sub.add_parser("montecarlo", help="sampled pairing sweep vs analytic count")
    _add_common(mc)
    mc.add_argument("--bins", type=float, default=float(1 << 22), help="time bins to simulate")
    mc.add_argument("--workers", type=int, default=1, help="generator threads")
    mc.add_argument(
        "--threshold",
        type=float,
        default=0.05,
        help="fail (exit 1) beyond this relative deviation",
    )

    mm = sub.add_parser("mermin", help="witness lower bound over distance")
    _add_common(mm)
    mm.add_argument("--mode", choices=("asymptotic", "finite"), default=None)
    mm.add_argument("--fig", choices=("7",), help="preset scan")

    val = sub.add_parser("validate", help="run the oracle and invariant checks")
    val.add_argument("--config", help="also validate this config file")
    val.add_argument("--quick", action="store_true", help="smaller grids and fewer draws")
    return parser


def _cmd_scan(args) -> int:
    config = load_config(args.config) if args.config else ProtocolConfig()
    distances = None
    mode = args.mode
    optimize = args.optimize
    if args.fig:
        config, distances, preset_mode, preset_opt = _preset(config, args.fig)
        mode = mode or preset_mode
        optimize = optimize or preset_opt
    config = _apply_overrides(config, args)
    if args.distance_km:
        distances = parse_distances(args.distance_km)
    if distances is None:
        distances = [config.channel.distance_km]
    mode = mode or "asymptotic"
    config.validate()

    rows = keyrate.scan_distance(
        config, distances, mode, optimize_params=optimize, seed=args.seed, workers=args.workers
    )
    buf = io.StringIO()
    keyrate.write_scan_csv(rows, buf)
    data = buf.getvalue()
    _emit(data, args.out, _manifest(config, args.seed, f"scan:{mode}", data))
    _emit_gnuplot(args, "key rate per pulse", 1 + keyrate.CSV_COLUMNS.index("rate"))
    return 0


def _cmd_montecarlo(args) -> int:
    config = load_config(args.config) if args.config else ProtocolConfig()
    config = _apply_overrides(config, args)
    if args.distance_km:
        config = config.at_distance(parse_distances(args.distance_km)[0])
    config.validate()
    n_bins = int(round(args.bins))
    if n_bins < 1:
        raise ConfigError("at least one time bin is required")
    if args.workers < 1:
        raise ConfigError("worker count must be positive")

    result = pairing.monte_carlo_pair_count(config, seed=args.seed, n_bins=n_bins, workers=args.workers)
    analytic = pairing.analytic_pair_count(
        result.q_ports, float(result.n_bins), config.timing.n_tc, config.timing.phase_locked
    )
    rel_dev = (result.n_events - analytic) / analytic if analytic > 0 else 0.0
    header = "n_bins,n_events,mean_span,leftover,analytic,rel_dev,sigma"
    cells = [
        repr(float(result.n_bins)),
        repr(float(result.n_events)),
        repr(float(result.mean_span)),
        repr(float(result.leftover)),
        repr(float(analytic)),
        repr(float(rel_dev)),
        repr(float(result.sigma)),
    ]
    data = header + "\n" + ",".join(cells) + "\n"
    _emit(data, args.out, _manifest(config, args.seed, "montecarlo", data))
    if args.threshold is not None and abs(rel_dev) > args.threshold:
        sys.stderr.write(f"deviation {rel_dev:+.3e} exceeds threshold {args.threshold:.3e}\n")
        return 1
    return 0


def _cmd_mermin(args) -> int:
    if args.config:
        config = load_config(args.config)
    else:
        # witness scans need the weak-pulse regime, not the key-rate source
        config = dataclasses.replace(ProtocolConfig(), source=mermin.WITNESS_SOURCE)
    distances = None
    mode = args.mode
    if args.fig:
        config, distances, preset_mode, _ = _preset(config, args.fig)
        mode = mode or preset_mode
    config = _apply_overrides(config, args)
    if args.distance_km:
        distances = parse_distances(args.distance_km)
    if distances is None:
        distances = [config.channel.distance_km]
    mode = mode or "finite"
    config.validate()

    rows = mermin.scan_mermin(config, distances, mode)
    buf = io.StringIO()
    mermin.write_mermin_csv(rows, buf)
    data = buf.getvalue()
    _emit(data, args.out, _manifest(config, args.seed, f"mermin:{mode}", data))
    _emit_gnuplot(args, "witness lower bound", 1 + mermin.MERMIN_CSV_COLUMNS.index("m_lower"))
    return 0


def _validation_checks(quick: bool):
    """Yield (name, passed, detail) for the oracle and invariant suite."""
    import numpy as np

    from . import fock_oracle, optics, stats
    from .model import ChannelModel

    # closed-form single-photon yields against the Fock-state reference
    grid = [(0.9, 1e-10), (0.5, 1e-6)] if quick else [
        (eta, p_d) for eta in (0.95, 0.7, 0.4, 0.1) for p_d in (0.0, 1e-8, 1e-4)
    ]
    worst = 0.0
    for eta, p_d in grid:
        ch = ChannelModel(distance_km=0.0, alpha_db_per_km=0.0, eta_det=eta, p_d=p_d)
        table = optics.single_photon_yields(ch)
        for (late, early), closed in (
            ((0, 0), table.y00), ((0, 1), table.y01), ((1, 0), table.y10), ((1, 1), table.y11)
        ):
            ref = fock_oracle.port_click_distribution(late, early, ch)
            worst = max(worst, abs(ref["L"] + ref["R"] - closed))
    yield "single-photon yields vs reference", worst < 1e-10, f"max |diff| {worst:.2e}"

    worst = 0.0
    for n_users in (3, 4):
        ch = ChannelModel(distance_km=0.0, alpha_db_per_km=0.0, eta_det=0.8, p_d=0.0)
        closed = optics.pattern_yields(n_users, ch)
        ref = fock_oracle.x_pattern_distribution(n_users, ch)
        for key, value in closed.items():
            worst = max(worst, abs(ref.get(key, 0.0) - value))
    yield "coincidence patterns vs reference", worst < 1e-10, f"max |diff| {worst:.2e}"

    parity_ok = True
    for n_users in (3, 4):
        for theta in (0.0, math.pi):
            if not fock_oracle.parity_rule_check(n_users, theta).consistent:
                parity_ok = False
    yield "click parity rule", parity_ok, "N in {3,4}, theta_g in {0, pi}"

    # two-sided concentration coverage on binomial draws
    eps = 1e-2
    draws = 10_000 if quick else 100_000
    rng = np.random.default_rng(7)
    n, p = 10_000, 0.02
    bound = stats.chernoff_observed(n * p, eps)
    sample = rng.binomial(n, p, size=draws)
    hi = float(np.mean(sample > bound.upper))
    lo = float(np.mean(sample < bound.lower))
    cov_ok = hi <= 2 * eps and lo <= 2 * eps
    yield "concentration coverage", cov_ok, f"viol/side {hi:.4f}/{lo:.4f} vs {2 * eps}"

    gammas = [stats.sampling_gamma_upper(1e6, 1e6, lam, 1e-7) for lam in (0.01, 0.05, 0.1, 0.2)]
    mono = all(g > 0 for g in gammas) and all(a < b for a, b in zip(gammas, gammas[1:]))
    yield "sampling correction positive and monotone", mono, "lambda grid 0.01..0.2"


def _cmd_validate(args) -> int:
    failures = 0
    if args.config:
        try:
            load_config(args.config).validate()
            sys.stdout.write("ok: config file\n")
        except (ConfigError, OSError, ValueError) as exc:
            sys.stdout.write(f"FAIL: config file ({exc})\n")
            failures += 1
    for name, passed, detail in _validation_checks(args.quick):
        if passed:
            sys.stdout.write(f"ok: {name}\n")
        else:
            sys.stdout.write(f"FAIL: {name} ({detail})\n")
            failures += 1
    return 1 if failures else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return _cmd_validate(args)
    try:
        if args.command == "scan":
            return _cmd_scan(args)
        if args.command == "montecarlo":
            return _cmd_montecarlo(args)
        return _cmd_mermin(args)
    except (ConfigError, OSError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
