"""Deterministic per-packet model of a client->server path through OpenFlow switches.

Topology convention: node 0 is the client, forward link i connects node i to
node i+1, and switch j sits at node j+1 (so its egress is forward link j+1).
The first `configured_count` switches perform real table lookups and require
rule installation on a miss; any remaining switches already hold matching
rules and forward without measurable processing.

Timing model per forward link: a data packet may not begin transmission
before the previous packet on that link finished transmitting (FIFO), cross
traffic inserts a sampled delay into the service, and propagation adds
base_latency after transmission:

    finish = max(ready, link_busy) + cross_delay [+ surcharge] + S/B
    arrival_at_next_node = finish + base_latency

A table miss charges `lookup + max over configured switches of their install
delay` once.  The charge is applied as a service surcharge at the detecting
switch's egress to every same-flow packet that arrives while the install is
still in progress; the trigger itself pays it, and a packet queued right
behind the trigger therefore leaves one surcharge later, which is what makes
the pair gap grow by the penalty.

Replies are small, never queue, and take independent per-hop delays, so a
reply overtaken by its predecessor's reverse-path jitter yields a negative
measured dispersion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import CrossTrafficModel, DelayModel, NO_DELAY
from .units import NS_PER_MS, div_round_half_up

DEFAULT_REPLY_BYTES = 64
DEFAULT_CLEAR_DELAY_NS = 10 * NS_PER_MS
DEFAULT_TABLE_CAPACITY = 1024

CLEAR = "CLEAR"
PROBE = "PROBE"
REPLY = "REPLY"

HARDWARE = "hardware"
SOFTWARE = "software"


@dataclass(frozen=True)
class FlowKey:
    """Exact-match header tuple; two packets belong to the same flow iff equal."""

    src: str
    dst: str
    proto: str = "udp"
    src_port: int = 40000
    dst_port: int = 9

    def reversed(self) -> "FlowKey":
        return FlowKey(self.dst, self.src, self.proto, self.dst_port, self.src_port)

    def compact(self) -> str:
        return f"{self.src}:{self.src_port}>{self.dst}:{self.dst_port}/{self.proto}"


class FlowTable:
    """Exact-match rule container with a hard capacity."""

    def __init__(self, capacity: int = DEFAULT_TABLE_CAPACITY):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity
        self.entries: set[FlowKey] = set()

    def __contains__(self, key: FlowKey) -> bool:
        return key in self.entries

    def install(self, key: FlowKey) -> bool:
        """Install one rule; returns False when the table is full."""
        if key in self.entries:
            return True
        if len(self.entries) >= self.capacity:
            return False
        self.entries.add(key)
        return True

    def clear(self) -> None:
        self.entries.clear()

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class LinkSpec:
    capacity_bps: int
    base_latency_ns: int = 0
    cross_traffic: CrossTrafficModel | None = None

    def __post_init__(self):
        if self.capacity_bps <= 0:
            raise ValueError("link capacity must be positive")
        if self.base_latency_ns < 0:
            raise ValueError("base latency must be >= 0")


@dataclass(frozen=True)
class SwitchSpec:
    id: str
    kind: str  # hardware | software, immutable after construction
    install_delay: DelayModel
    table: FlowTable = field(default_factory=FlowTable)

    def __post_init__(self):
        if self.kind not in (HARDWARE, SOFTWARE):
            raise ValueError(f"switch kind must be hardware or software, got {self.kind!r}")
        if self.install_delay.kind == "none" or (
            self.install_delay.kind == "constant" and self.install_delay.value_ns <= 0
        ):
            raise ValueError("install_delay samples must be positive")


@dataclass(frozen=True)
class ControllerSpec:
    """Reactive controller: table lookup plus bidirectional rule install."""

    lookup_delay: DelayModel = NO_DELAY
    clear_delay_ns: int = DEFAULT_CLEAR_DELAY_NS
    install_policy: str = "bidirectional"


@dataclass(frozen=True)
class Packet:
    id: int
    key: FlowKey
    size_bytes: int
    kind: str = PROBE
    sent_at_ns: int = 0

    def __post_init__(self):
        if self.size_bytes <= 0:
            raise ValueError("packet size must be positive")


@dataclass(frozen=True)
class PathSpec:
    forward_links: tuple[LinkSpec, ...]
    reverse_links: tuple[LinkSpec, ...]
    switches: tuple[SwitchSpec, ...] = ()
    configured_count: int = 0
    delay_element: object | None = None  # DelayElementConfig, attached by defense

    def __post_init__(self):
        object.__setattr__(self, "forward_links", tuple(self.forward_links))
        object.__setattr__(self, "reverse_links", tuple(self.reverse_links))
        object.__setattr__(self, "switches", tuple(self.switches))
        if len(self.forward_links) < 1 or len(self.reverse_links) < 1:
            raise ValueError("paths need at least one link per direction")
        if self.switches and len(self.switches) > len(self.forward_links) - 1:
            raise ValueError("switch j needs egress link j+1; too many switches for path")
        if not 0 <= self.configured_count <= len(self.switches):
            raise ValueError("configured_count must be within the switch list")

    @property
    def bottleneck_index(self) -> int:
        """Earliest minimum-capacity forward link (deterministic tie-break)."""
        caps = [l.capacity_bps for l in self.forward_links]
        return caps.index(min(caps))

    def bottleneck_capacity_bps(self) -> int:
        return self.forward_links[self.bottleneck_index].capacity_bps


def transmission_delay_ns(size_bytes: int, link: LinkSpec) -> int:
    """S/B in integer ns, half-up: 1500 B at 100 Mbps -> 120000 ns."""
    if size_bytes <= 0:
        raise ValueError("size must be positive")
    return div_round_half_up(size_bytes * 8 * 1_000_000_000, link.capacity_bps)


@dataclass
class MissOutcome:
    penalty_ns: int
    full_switch_ids: tuple[str, ...]


@dataclass
class ExchangeResult:
    rtt_ns: int
    server_recv_ns: int
    server_reply_send_ns: int
    client_recv_ns: int
    miss_flag: bool
    table_full: bool
    forward_arrivals_ns: tuple[int, ...]


@dataclass
class PairResult:
    reply_dispersion_ns: int
    server_dispersion_ns: int
    rtts_ns: tuple[int, int]
    miss_flags: tuple[bool, bool]
    table_full: bool


@dataclass(frozen=True)
class DriftModel:
    """Slow wander of the path latency, for the time-span stability studies.

    A Wiener walk around a positive baseline, evaluated lazily at packet send
    times; sigma is in ns per sqrt(second).
    """

    sigma_ns_per_sqrt_s: float
    base_ns: int = 10 * NS_PER_MS


class RngStreams:
    """Named substreams so that unrelated noise sources never share draws."""

    _NAMES = ("cross", "control", "defense", "drift")

    def __init__(self, seed: int, trial: int = 0, group: int = 0):
        self._gens = {
            name: np.random.default_rng(
                np.random.SeedSequence(entropy=seed, spawn_key=(group, trial, i))
            )
            for i, name in enumerate(self._NAMES)
        }

    def __getattr__(self, name: str) -> np.random.Generator:
        if name.startswith("_"):
            raise AttributeError(name)
        try:
            return self._gens[name]
        except KeyError:
            raise AttributeError(name)

    @classmethod
    def shared(cls, rng: np.random.Generator) -> "RngStreams":
        obj = cls.__new__(cls)
        obj._gens = {name: rng for name in cls._NAMES}
        return obj


def _coerce_streams(rng) -> RngStreams:
    if isinstance(rng, RngStreams):
        return rng
    if isinstance(rng, np.random.Generator):
        return RngStreams.shared(rng)
    return RngStreams(int(rng))


def handle_table_miss(
    key: FlowKey, path: PathSpec, controller: ControllerSpec, rng
) -> MissOutcome:
    """Install `key` bidirectionally at all configured switches, return the charge.

    The charge is lookup_delay plus the maximum of the per-switch install
    delay samples; the controller reconfigures every switch at once, so only
    the slowest install is visible. A full table skips the install (the
    packet is still forwarded) and is reported, not raised.
    """
    streams = _coerce_streams(rng)
    gen = streams.control
    if path.configured_count < 1:
        raise ValueError("table miss needs at least one configured switch")
    penalty = controller.lookup_delay.sample_ns(gen)
    max_install = 0
    full: list[str] = []
    for sw in path.switches[: path.configured_count]:
        max_install = max(max_install, sw.install_delay.sample_ns(gen))
        ok_fwd = sw.table.install(key)
        ok_rev = sw.table.install(key.reversed())
        if not (ok_fwd and ok_rev):
            full.append(sw.id)
    return MissOutcome(penalty_ns=penalty + max_install, full_switch_ids=tuple(full))


def clear_flow_tables(path: PathSpec) -> None:
    for sw in path.switches:
        sw.table.clear()


class _InstallWindow:
    __slots__ = ("start_ns", "end_ns", "penalty_ns")

    def __init__(self, start_ns: int, penalty_ns: int):
        self.start_ns = start_ns
        self.end_ns = start_ns + penalty_ns
        self.penalty_ns = penalty_ns


class Simulation:
    """One deterministic trial over a path: owns FIFO, table and flow state.

    The constructor resets the path's flow tables so that trials are
    independent; pass warm_keys to start with rules pre-installed.
    """

    def __init__(
        self,
        path: PathSpec,
        controller: ControllerSpec,
        rng,
        *,
        warm_keys: tuple[FlowKey, ...] = (),
        warm_activity: tuple[FlowKey, ...] = (),
        drift: DriftModel | None = None,
        reply_bytes: int = DEFAULT_REPLY_BYTES,
        turnaround_ns: int = 0,
    ):
        self.path = path
        self.controller = controller
        self.streams = _coerce_streams(rng)
        self.drift = drift
        self.reply_bytes = reply_bytes
        self.turnaround_ns = turnaround_ns

        clear_flow_tables(path)
        for key in warm_keys:
            for sw in path.switches[: path.configured_count]:
                sw.table.install(key)
                sw.table.install(key.reversed())

        self.fwd_busy_ns = [0] * len(path.forward_links)
        self.pending_clear_ns: int | None = None
        self.install_windows: dict[tuple[int, FlowKey], _InstallWindow] = {}
        self.last_release_ns: dict[FlowKey, int] = {}
        self.install_events = 0
        self.table_full_events = 0
        self._wander_t_ns = 0
        self._wander_walk_ns = 0.0
        # Activity tracking exists only when a delay element is attached.
        if path.delay_element is not None:
            from .defense import ActivityRecord, FlowActivity

            self.activity = FlowActivity()
            for key in warm_activity:
                self.activity.records[key] = ActivityRecord(0, 0)
        else:
            self.activity = None

    # -- drift ------------------------------------------------------------

    def _wander_at(self, t_ns: int) -> int:
        if self.drift is None:
            return 0
        dt_ns = t_ns - self._wander_t_ns
        if dt_ns > 0:
            step = self.streams.drift.standard_normal()
            self._wander_walk_ns += (
                step * self.drift.sigma_ns_per_sqrt_s * (dt_ns / 1e9) ** 0.5
            )
            self._wander_t_ns = t_ns
        return max(0, int(self.drift.base_ns + self._wander_walk_ns))

    # -- control plane ----------------------------------------------------

    def _apply_pending_clear(self, now_ns: int) -> None:
        if self.pending_clear_ns is not None and now_ns >= self.pending_clear_ns:
            clear_flow_tables(self.path)
            self.install_windows.clear()
            if self.activity is not None:
                self.activity.clear()
            self.pending_clear_ns = None

    def _switch_process(self, s_idx: int, packet: Packet, arrival_ns: int):
        """Returns (ready_ns, surcharge_ns, miss_flag, table_full)."""
        self._apply_pending_clear(arrival_ns)
        if packet.kind == CLEAR:
            # Control packet: outermost switch hands it to the controller,
            # which deletes all rules after its processing delay.
            if s_idx == 0:
                self.pending_clear_ns = arrival_ns + self.controller.clear_delay_ns
            return arrival_ns, 0, False, False
        if s_idx >= self.path.configured_count:
            return arrival_ns, 0, False, False

        element = self.path.delay_element if s_idx == 0 else None
        decision = None
        if element is not None:
            from .defense import select_bucket

            decision = select_bucket(packet.key, arrival_ns, self.activity, element)

        sw = self.path.switches[s_idx]
        key = packet.key
        if key not in sw.table:
            outcome = handle_table_miss(key, self.path, self.controller, self.streams)
            self.install_events += 1
            if outcome.full_switch_ids:
                self.table_full_events += 1
            self.install_windows[(s_idx, key)] = _InstallWindow(
                arrival_ns, outcome.penalty_ns
            )
            self.last_release_ns[key] = arrival_ns + outcome.penalty_ns
            return arrival_ns, outcome.penalty_ns, True, bool(outcome.full_switch_ids)

        window = self.install_windows.get((s_idx, key))
        in_install = window is not None and window.start_ns <= arrival_ns < window.end_ns

        if element is not None and (in_install or decision.bucket == "delayed"):
            from .defense import delay_for

            position = decision.position if decision.bucket == "delayed" else "followup"
            sample = delay_for(
                position, element, self.streams.defense, k=self.path.configured_count
            )
            release = max(arrival_ns + sample, self.last_release_ns.get(key, 0))
            self.last_release_ns[key] = release
            return release, 0, False, False

        if in_install:
            # Rule activation still in progress: the packet takes the slow
            # path and pays the same charge as the trigger.
            self.last_release_ns[key] = arrival_ns + window.penalty_ns
            return arrival_ns, window.penalty_ns, False, False

        release = max(arrival_ns, self.last_release_ns.get(key, 0))
        self.last_release_ns[key] = release
        return release, 0, False, False

    # -- data plane -------------------------------------------------------

    def forward(self, packet: Packet, send_ns: int):
        """Traverse the forward path; returns per-hop arrivals and flags."""
        wander = self._wander_at(send_ns)
        ready = send_ns
        miss_flag = False
        table_full = False
        arrivals: list[int] = []
        surcharge = 0
        for i, link in enumerate(self.path.forward_links):
            if i >= 1 and i - 1 < len(self.path.switches):
                ready, surcharge, miss, full = self._switch_process(i - 1, packet, ready)
                miss_flag = miss_flag or miss
                table_full = table_full or full
            else:
                surcharge = 0
            d = link.cross_traffic.delay_model().sample_ns(self.streams.cross) if link.cross_traffic else 0
            start = max(ready, self.fwd_busy_ns[i])
            finish = start + surcharge + d + transmission_delay_ns(packet.size_bytes, link)
            self.fwd_busy_ns[i] = finish
            ready = finish + link.base_latency_ns
            surcharge = 0
            arrivals.append(ready)
        arrivals[-1] += wander
        return arrivals, miss_flag, table_full

    def reply_traversal(self, server_send_ns: int) -> int:
        """Small replies do not queue: independent per-hop delays only."""
        t = server_send_ns
        for link in self.path.reverse_links:
            d = link.cross_traffic.delay_model().sample_ns(self.streams.cross) if link.cross_traffic else 0
            t += d + transmission_delay_ns(self.reply_bytes, link) + link.base_latency_ns
        return t

    def exchange(self, packet: Packet, send_ns: int | None = None) -> ExchangeResult:
        """Round trip of one packet: forward, server turnaround, small reply."""
        t0 = packet.sent_at_ns if send_ns is None else send_ns
        arrivals, miss_flag, table_full = self.forward(packet, t0)
        server_recv = arrivals[-1]
        reply_send = server_recv + self.turnaround_ns
        client_recv = self.reply_traversal(reply_send)
        return ExchangeResult(
            rtt_ns=client_recv - t0,
            server_recv_ns=server_recv,
            server_reply_send_ns=reply_send,
            client_recv_ns=client_recv,
            miss_flag=miss_flag,
            table_full=table_full,
            forward_arrivals_ns=tuple(arrivals),
        )


# -- module-level operation wrappers (one-shot state) ----------------------


class LinkState:
    """Holds a Simulation so consecutive forward_packet calls share FIFO state."""

    def __init__(self, path: PathSpec, controller: ControllerSpec | None = None, rng=0):
        self.sim = Simulation(path, controller or ControllerSpec(), rng)


def forward_packet(
    packet: Packet, path: PathSpec, direction: str = "forward", rng=0, state: LinkState | None = None
) -> list[int]:
    """Per-hop arrival timestamps of one packet.

    Reverse-direction traversal reuses the same service model on the reverse
    links (switch interactions are a forward-path phenomenon).
    """
    if direction == "forward":
        sim = state.sim if state is not None else Simulation(path, ControllerSpec(), rng)
        arrivals, _, _ = sim.forward(packet, packet.sent_at_ns)
        return arrivals
    if direction != "reverse":
        raise ValueError("direction must be forward or reverse")
    streams = _coerce_streams(rng)
    t = packet.sent_at_ns
    arrivals = []
    for link in path.reverse_links:
        d = link.cross_traffic.delay_model().sample_ns(streams.cross) if link.cross_traffic else 0
        t += d + transmission_delay_ns(packet.size_bytes, link) + link.base_latency_ns
        arrivals.append(t)
    return arrivals


def simulate_exchange(
    packet: Packet,
    path: PathSpec,
    controller: ControllerSpec,
    rng=0,
    *,
    sim: Simulation | None = None,
    warm_keys: tuple[FlowKey, ...] = (),
    turnaround_ns: int = 0,
) -> ExchangeResult:
    if packet.kind not in (PROBE, CLEAR):
        raise ValueError("exchange expects a PROBE or CLEAR packet")
    if sim is None:
        sim = Simulation(
            path, controller, rng, warm_keys=warm_keys, turnaround_ns=turnaround_ns
        )
    return sim.exchange(packet)


def simulate_pair(
    pair: tuple[Packet, Packet],
    path: PathSpec,
    controller: ControllerSpec,
    rng=0,
    *,
    sim: Simulation | None = None,
    warm_keys: tuple[FlowKey, ...] = (),
) -> PairResult:
    """Back-to-back pair exchange; dispersion measured between the replies."""
    first, second = pair
    if first.key != second.key:
        raise ValueError("pair members must share one FlowKey")
    if sim is None:
        sim = Simulation(path, controller, rng, warm_keys=warm_keys)
    r1 = sim.exchange(first)
    r2 = sim.exchange(second)
    return PairResult(
        reply_dispersion_ns=r2.client_recv_ns - r1.client_recv_ns,
        server_dispersion_ns=r2.server_recv_ns - r1.server_recv_ns,
        rtts_ns=(r1.rtt_ns, r2.rtt_ns),
        miss_flags=(r1.miss_flag, r2.miss_flag),
        table_full=r1.table_full or r2.table_full,
    )


def uniform_path(
    n_forward: int,
    n_reverse: int,
    capacity_bps: int,
    switches: tuple[SwitchSpec, ...] = (),
    configured_count: int | None = None,
    cross_traffic: CrossTrafficModel | None = None,
    base_latency_ns: int = 0,
) -> PathSpec:
    """Convenience constructor for equal-capacity paths."""
    link = LinkSpec(capacity_bps, base_latency_ns, cross_traffic)
    return PathSpec(
        forward_links=(link,) * n_forward,
        reverse_links=(link,) * n_reverse,
        switches=switches,
        configured_count=len(switches) if configured_count is None else configured_count,
    )
