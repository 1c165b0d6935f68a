"""Greedy temporal pairing of relay clicks into N-port events.

A usable event needs one lone click at every port, all within the pairing
window. The pairing rule is deliberately simple and online: take the
earliest unpaired click as the anchor, sweep forward collecting the first
unused click of every missing port, and close the event once all N ports
are present. Clicks on an already-covered port are skipped but remembered;
the first of them is where scanning resumes after a completed event. An
anchor whose window expires is abandoned for good.

The sweep is a single pass over the time-sorted stream, so it is O(n) and
compiles well. The hot kernel is JIT-compiled when numba is importable
and not disabled through the AQCKA_DISABLE_NUMBA environment variable;
the pure-Python fallback is semantically identical (bit-for-bit equal
outputs, much slower). Streams are encoded as int64 keys
``time_bin * n_ports + port`` so one sorted array carries both fields.

Intensity labels never enter this module: pairing is basis blind.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap


def numba_enabled() -> bool:
    """True when the compiled kernel is active for this process call."""
    return HAS_NUMBA and not os.environ.get("AQCKA_DISABLE_NUMBA")


@dataclass
class ClickEvent:
    """One lone single click: when, where, and which detector."""

    time_bin: int
    port: int
    side: str = "L"
    used: bool = False


@dataclass(frozen=True)
class PairingEvent:
    """N clicks on N distinct ports grouped into one detection event."""

    clicks: tuple

    @property
    def span(self) -> int:
        times = [c.time_bin for c in self.clicks]
        return max(times) - min(times)


def _pair_sweep_python(keys, n_ports, window):
    """Reference implementation of the pairing sweep.

    window < 0 means unbounded. Returns (member_indices, span_sum) where
    member_indices holds the paired click indices in groups of n_ports.
    """
    n = keys.shape[0]
    used = np.zeros(n, dtype=np.bool_)
    out = np.empty(n, dtype=np.int64)
    n_out = 0
    span_sum = 0
    members = np.empty(n_ports, dtype=np.int64)
    port_seen = np.zeros(n_ports, dtype=np.bool_)
    anchor = 0
    while True:
        while anchor < n and used[anchor]:
            anchor += 1
        if anchor >= n:
            break
        t0 = keys[anchor] // n_ports
        port_seen[:] = False
        port_seen[keys[anchor] % n_ports] = True
        members[0] = anchor
        count = 1
        repeat_entry = -1
        j = anchor + 1
        success = False
        last_t = t0
        while j < n:
            if used[j]:
                j += 1
                continue
            t = keys[j] // n_ports
            if window >= 0 and t - t0 > window:
                break
            p = keys[j] % n_ports
            if port_seen[p]:
                if repeat_entry < 0:
                    repeat_entry = j
                j += 1
                continue
            port_seen[p] = True
            members[count] = j
            count += 1
            if count == n_ports:
                last_t = t
                success = True
                break
            j += 1
        if success:
            for m in range(n_ports):
                used[members[m]] = True
                out[n_out] = members[m]
                n_out += 1
            span_sum += last_t - t0
            anchor = repeat_entry if repeat_entry >= 0 else j + 1
        else:
            used[anchor] = True
            anchor += 1
    return out[:n_out], span_sum


if HAS_NUMBA:
    _pair_sweep_numba = njit(cache=True, nogil=True)(_pair_sweep_python)


def _pair_sweep(keys, n_ports, window):
    if numba_enabled():
        return _pair_sweep_numba(keys, np.int64(n_ports), np.int64(window))
    return _pair_sweep_python(keys, n_ports, window)


def pair_stream(events, t_c_bins, n_ports=None):
    """Pair a stream of ClickEvents; returns (pairing_events, leftovers).

    t_c_bins is the inclusive window measured from the anchor click; pass
    None for an unbounded window. n_ports defaults to the number of
    distinct ports present in the stream. Paired clicks get their `used`
    flag set; leftovers are returned in time order.
    """
    events = list(events)
    if n_ports is None:
        n_ports = len({e.port for e in events})
    if n_ports < 1:
        return [], []
    for e in events:
        if not 0 <= e.port < n_ports:
            raise ValueError(f"port {e.port} outside 0..{n_ports - 1}")
        if e.time_bin < 0:
            raise ValueError("time bins must be nonnegative")
    order = sorted(range(len(events)), key=lambda i: (events[i].time_bin, events[i].port))
    keys = np.array(
        [events[i].time_bin * n_ports + events[i].port for i in order], dtype=np.int64
    )
    window = -1 if t_c_bins is None else int(t_c_bins)
    member_idx, _ = _pair_sweep(keys, n_ports, window)
    paired = []
    for g in range(0, member_idx.size, n_ports):
        group = tuple(events[order[k]] for k in member_idx[g : g + n_ports])
        for click in group:
            click.used = True
        paired.append(PairingEvent(clicks=group))
    leftovers = [events[i] for i in order if not events[i].used]
    return paired, leftovers


def analytic_pair_count(q_ports, pulses, n_tc, phase_locked=False) -> float:
    """Expected number of paired events for given per-port click rates.

    q_ports are the per-bin lone-click probabilities of the N ports after
    any filtering. n_tc is the pairing window in bins (None: unbounded).
    With phase locking every click is usable regardless of separation, so
    the count saturates at the rate of the scarcest port.
    """
    q = [float(v) for v in q_ports]
    if any(v < 0 or v > 1 for v in q):
        raise ValueError("click probabilities must lie in [0, 1]")
    n = len(q)
    if n < 2:
        raise ValueError("need at least two ports")
    if pulses < 0:
        raise ValueError("pulse count must be nonnegative")
    if phase_locked:
        return pulses * min(q)
    if any(v == 0.0 for v in q):
        return 0.0
    if n_tc is not None and n_tc <= 0:
        return 0.0
    total = 0.0
    for i in range(n):
        prod = 1.0
        for j in range(n):
            if j == i:
                continue
            if n_tc is None:
                window_hit = 1.0
            else:
                window_hit = -math.expm1(n_tc * math.log1p(-q[j]))
            prod *= window_hit
        if prod == 0.0:
            continue
        total += pulses * q[i] / (1.0 + (n - 1) / prod)
    return total


@dataclass(frozen=True)
class MonteCarloResult:
    """Outcome of a sampled pairing run."""

    n_events: int
    mean_span: float
    leftover: int
    total_clicks: int
    n_bins: int
    q_ports: tuple
    sigma: float
    block_counts: tuple = field(repr=False, default=())


def _generate_shard(seed_seq, q_ports, start_bin, bins, n_ports):
    """Click keys of one shard, ports drawn in fixed order from one stream."""
    rng = np.random.default_rng(seed_seq)
    chunks = []
    for port, q in enumerate(q_ports):
        hits = np.nonzero(rng.random(bins) < q)[0]
        if hits.size:
            chunks.append((np.int64(start_bin) + hits.astype(np.int64)) * n_ports + port)
    if not chunks:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(chunks)


def monte_carlo_pair_count(
    config_or_q,
    seed: int,
    n_bins: int,
    workers: int = 1,
    shard_bins: int = 1 << 22,
    n_blocks: int = 64,
) -> MonteCarloResult:
    """Sample a click stream and pair it, for comparison with the formula.

    The first argument is either a ProtocolConfig (per-port rates and the
    window are derived from it) or a plain sequence of per-port rates, in
    which case the window is unbounded. Generation is sharded and may run
    on several worker threads; shard RNG streams are spawned from the seed
    by shard index, so results are identical for any worker count. The
    pairing sweep itself runs once over the stitched stream, which keeps
    it free of shard-boundary artifacts.

    sigma estimates the sampling standard deviation of n_events from the
    variance of per-block event counts (events attributed to the block of
    their anchor bin).
    """
    from .model import ProtocolConfig  # local import to avoid cycle at module load

    if isinstance(config_or_q, ProtocolConfig):
        from . import sift

        q_eff = sift.effective_port_click_prob(config_or_q)
        q_ports = (q_eff,) * config_or_q.n_users
        window = -1 if config_or_q.timing.n_tc is None else config_or_q.timing.n_tc
    else:
        q_ports = tuple(float(v) for v in config_or_q)
        window = -1
    n_ports = len(q_ports)
    if n_bins <= 0:
        raise ValueError("need a positive number of bins")
    if workers < 1:
        raise ValueError("need at least one worker")

    n_shards = (n_bins + shard_bins - 1) // shard_bins
    seeds = np.random.SeedSequence(seed).spawn(n_shards)
    jobs = []
    for s in range(n_shards):
        start = s * shard_bins
        bins = min(shard_bins, n_bins - start)
        jobs.append((seeds[s], q_ports, start, bins, n_ports))
    if workers == 1 or n_shards == 1:
        shards = [_generate_shard(*job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            shards = list(pool.map(lambda job: _generate_shard(*job), jobs))
    keys = np.concatenate(shards) if shards else np.empty(0, dtype=np.int64)
    keys = np.sort(keys)
    total_clicks = int(keys.size)

    member_idx, span_sum = _pair_sweep(keys, n_ports, window)
    n_events = member_idx.size // n_ports
    mean_span = float(span_sum) / n_events if n_events else 0.0

    # Anchor bins are nondecreasing, so block counts come from one searchsorted.
    if n_events:
        anchor_bins = keys[member_idx[::n_ports]] // n_ports
        edges = np.linspace(0, n_bins, n_blocks + 1)
        counts = np.diff(np.searchsorted(anchor_bins, edges))
    else:
        counts = np.zeros(n_blocks, dtype=np.int64)
    sigma = float(np.std(counts, ddof=1) * math.sqrt(n_blocks)) if n_blocks > 1 else 0.0

    return MonteCarloResult(
        n_events=int(n_events),
        mean_span=mean_span,
        leftover=total_clicks - int(member_idx.size),
        total_clicks=total_clicks,
        n_bins=n_bins,
        q_ports=q_ports,
        sigma=sigma,
        block_counts=tuple(int(c) for c in counts),
    )


def dump_click_stream(events, path: str) -> None:
    """Write clicks as time_bin,port,side lines (stable order)."""
    with open(path, "w", encoding="ascii") as fh:
        for e in sorted(events, key=lambda c: (c.time_bin, c.port)):
            fh.write(f"{e.time_bin},{e.port},{e.side}\n")


def load_click_stream(path: str):
    """Inverse of dump_click_stream."""
    out = []
    with open(path, encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            t, p, side = line.split(",")
            out.append(ClickEvent(time_bin=int(t), port=int(p), side=side))
    return out
