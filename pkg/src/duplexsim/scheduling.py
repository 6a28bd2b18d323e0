"""Pseudo-instruction schedules, memory access traces and data lifetimes.

The forward pass of a duplex network is executed as one round per block,

    round l:  CONV_G_l | CONV_F1_l | CONV_F2_l

where CONV_F1 fuses the residual add and the pooled backbone injection and
CONV_F2 fuses the second add.  Dead buffers are recycled at the earliest
legal point via each instruction's ``overwrites`` field.  The backward pass
runs one round per block in reverse order,

    round l:  RECOMPUTE_F2 | WGRAD_U2W | INVGRAD_U2A |
              RECOMPUTE_F1 | WGRAD_U1W | INVGRAD_U1A

recomputing the two input streams and producing weight gradients (drained
straight to static storage) plus the two gradient streams for round l-1.

Traces are exact: instruction i occupies [t, t + N_i / R) with rational
timestamps.  Operands are streamed for an instruction's entire duration, so
read events are stamped at instruction completion (a buffer must stay live
until its consumer finishes); writes are stamped at completion as well.
The closed-form lifetime expressions below are derived from these round
layouts and agree with trace measurement exactly, for any layer dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

__all__ = [
    "ConvDims",
    "LayerDims",
    "Instruction",
    "Schedule",
    "BufferInfo",
    "AccessTrace",
    "LatencyModel",
    "LifetimeReport",
    "ScheduleError",
    "op_workload",
    "emit_forward_schedule",
    "emit_backward_schedule",
    "emit_training_step_schedule",
    "simulate_trace",
    "measured_lifetimes",
    "closed_form_lifetimes",
    "peak_memory",
    "check_schedule",
    "schedule_to_text",
]

TRANSIENT = "transient"
STATIC = "static"

# BFP storage density: 58 bits per group of nine values
BYTES_PER_ELEMENT = Fraction(58, 9 * 8)


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class ConvDims:
    """One convolution's workload shape."""

    batch: int
    cin: int
    cout: int
    width: int
    height: int
    kernel: int

    def __post_init__(self):
        for v in (self.batch, self.cin, self.cout, self.width, self.height, self.kernel):
            if v < 1:
                raise ScheduleError("convolution dims must be positive")

    @property
    def input_elements(self) -> int:
        return self.batch * self.cin * self.width * self.height

    @property
    def output_elements(self) -> int:
        return self.batch * self.cout * self.width * self.height


@dataclass(frozen=True)
class LayerDims:
    """Per-block convolution shapes; ``g`` is None when the block has no
    backbone stage (the final round, and every round of ca/bo variants)."""

    f1: ConvDims
    f2: ConvDims
    g: ConvDims | None = None


def op_workload(dims: ConvDims, mode: str = "paper") -> int:
    """MAC count N for one convolution.

    ``paper`` counts B * C_in * W * H * k^2; ``full`` multiplies by C_out
    (the physical MAC count).  Lifetime reproduction uses ``paper``; energy
    accounting uses ``full``.
    """
    n = dims.batch * dims.cin * dims.width * dims.height * dims.kernel ** 2
    if mode == "full":
        n *= dims.cout
    elif mode != "paper":
        raise ScheduleError(f"unknown workload mode {mode!r}")
    return n


@dataclass(frozen=True)
class Instruction:
    opcode: str
    inputs: tuple
    output: str | None
    overwrites: str | None = None
    layer: int = 0
    dims: ConvDims | None = None    # None = negligible latency (pool/add/head)

    def text(self) -> str:
        src = ",".join(self.inputs) if self.inputs else "-"
        out = self.output or "-"
        ow = f" overwrite={self.overwrites}" if self.overwrites else ""
        return f"{self.opcode} {out}<-{src} layer={self.layer}{ow}"


@dataclass(frozen=True)
class BufferInfo:
    elements: int
    storage: str = TRANSIENT


@dataclass
class Schedule:
    instructions: list = field(default_factory=list)
    buffers: dict = field(default_factory=dict)     # name -> BufferInfo
    meta: dict = field(default_factory=dict)

    def transient_names(self):
        return [n for n, b in self.buffers.items() if b.storage == TRANSIENT]


def schedule_to_text(schedule: Schedule) -> str:
    return "\n".join(ins.text() for ins in schedule.instructions) + "\n"


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

def _stream_elems(d: LayerDims) -> int:
    return d.f1.batch * d.f1.cin * d.f1.width * d.f1.height


def emit_forward_schedule(dims: list, variant: str = "dudnn") -> Schedule:
    """Forward-pass pseudo instructions for one mini-batch."""
    if variant in ("dudnn", "fi"):
        return _emit_forward_duplex(dims, store_all=(variant == "fi"))
    if variant in ("ca", "bo"):
        return _emit_forward_chain(dims, with_backbone=(variant == "ca"))
    raise ScheduleError(f"unknown variant {variant!r}")


def _buf(sched, name, elements, storage=TRANSIENT):
    sched.buffers[name] = BufferInfo(int(elements), storage)
    return name


def _emit_forward_duplex(dims: list, store_all: bool) -> Schedule:
    L = len(dims)
    s = Schedule(meta={"variant": "fi" if store_all else "dudnn", "pass": "forward"})
    ins = s.instructions

    in_elems = dims[0].g.input_elements if dims[0].g is not None else _stream_elems(dims[0])
    _buf(s, "input", in_elems)
    ins.append(Instruction("LOAD", (), "input"))
    # branch streams start as the pooled, channel-projected input
    for stream in ("s1.0", "s2.0") if not store_all else ("s.0",):
        _buf(s, stream, _stream_elems(dims[0]))
        ins.append(Instruction("POOL", ("input",), stream))

    for l in range(1, L + 1):
        d = dims[l - 1]
        bb_prev = "input" if l == 1 else f"bb.{l - 1}"
        if d.g is not None:
            _buf(s, f"bb.{l}", d.g.output_elements)
            ins.append(Instruction(
                "CONV_G", (bb_prev,), f"bb.{l}",
                overwrites=f"bb.{l - 2}" if l >= 3 else None, layer=l, dims=d.g,
            ))
        elems = _stream_elems(d)
        if store_all:
            _buf(s, f"a.{l}", elems)
            ins.append(Instruction("CONV_F1", (f"s.{l - 1}", bb_prev), f"a.{l}",
                                   layer=l, dims=d.f1))
        else:
            _buf(s, f"s2.{l}", elems)
            ins.append(Instruction(
                "CONV_F1", (f"s1.{l - 1}", f"s2.{l - 1}", bb_prev), f"s2.{l}",
                overwrites=f"s2.{l - 1}", layer=l, dims=d.f1,
            ))
        # static copy of the pooled injection for the backward pass; emitted
        # at the CONV_F1 boundary where the injection stream is already live
        _buf(s, f"u.{l}", elems, STATIC)
        ins.append(Instruction("POOL", (bb_prev,), f"u.{l}", layer=l))
        if store_all:
            _buf(s, f"s.{l}", elems)
            ins.append(Instruction("CONV_F2", (f"a.{l}",), f"s.{l}", layer=l, dims=d.f2))
        else:
            _buf(s, f"s1.{l}", elems)
            ins.append(Instruction(
                "CONV_F2", (f"s2.{l}", f"s1.{l - 1}"), f"s1.{l}",
                overwrites=f"s1.{l - 1}", layer=l, dims=d.f2,
            ))

    top = (f"a.{L}", f"s.{L}") if store_all else (f"s1.{L}", f"s2.{L}")
    _buf(s, "logits", dims[-1].f1.batch * 16)
    ins.append(Instruction("HEAD", top, "logits", layer=L))
    return s


def _emit_forward_chain(dims: list, with_backbone: bool) -> Schedule:
    L = len(dims)
    s = Schedule(meta={"variant": "ca" if with_backbone else "bo", "pass": "forward"})
    ins = s.instructions

    src = "input"
    if with_backbone:
        _buf(s, "input", dims[0].g.input_elements if dims[0].g else _stream_elems(dims[0]))
        ins.append(Instruction("LOAD", (), "input"))
        for i, d in enumerate(d for d in dims if d.g is not None):
            l = i + 1
            _buf(s, f"bb.{l}", d.g.output_elements)
            ins.append(Instruction("CONV_G", (src,), f"bb.{l}",
                                   overwrites=src if l >= 2 else None, layer=l, dims=d.g))
            src = f"bb.{l}"
    else:
        _buf(s, "input", _stream_elems(dims[0]))
        ins.append(Instruction("LOAD", (), "input"))

    for stream in ("s1.0", "s2.0"):
        _buf(s, stream, _stream_elems(dims[0]))
        ins.append(Instruction("POOL", (src,), stream))

    for l in range(1, L + 1):
        d = dims[l - 1]
        elems = _stream_elems(d)
        _buf(s, f"s2.{l}", elems)
        ins.append(Instruction("CONV_F1", (f"s1.{l - 1}", f"s2.{l - 1}"), f"s2.{l}",
                               overwrites=f"s2.{l - 1}", layer=l, dims=d.f1))
        _buf(s, f"s1.{l}", elems)
        ins.append(Instruction("CONV_F2", (f"s2.{l}", f"s1.{l - 1}"), f"s1.{l}",
                               overwrites=f"s1.{l - 1}", layer=l, dims=d.f2))
    _buf(s, "logits", dims[-1].f1.batch * 16)
    ins.append(Instruction("HEAD", (f"s1.{L}", f"s2.{L}"), "logits", layer=L))
    return s


def emit_backward_schedule(dims: list, variant: str = "dudnn",
                           preloaded: bool = True) -> Schedule:
    """Backward-pass pseudo instructions.

    With ``preloaded`` the retained forward outputs, loss gradients and
    stored injections are written at t = 0 by a LOAD instruction (the pass
    analyzed standalone); training-step schedules concatenate instead.
    """
    if variant == "fi":
        return _emit_backward_fi(dims, preloaded)
    if variant in ("dudnn", "ca", "bo"):
        return _emit_backward_reversible(dims, variant, preloaded)
    raise ScheduleError(f"unknown variant {variant!r}")


def _emit_backward_reversible(dims: list, variant: str, preloaded: bool) -> Schedule:
    L = len(dims)
    s = Schedule(meta={"variant": variant, "pass": "backward"})
    ins = s.instructions
    inject = variant == "dudnn"

    elems_top = _stream_elems(dims[-1])
    for name in (f"s1.{L}", f"s2.{L}", f"g1.{L}", f"g2.{L}"):
        _buf(s, name, elems_top)
    if inject:
        for l in range(1, L + 1):
            _buf(s, f"u.{l}", _stream_elems(dims[l - 1]), STATIC)
    if preloaded:
        loads = [f"s1.{L}", f"s2.{L}", f"g1.{L}", f"g2.{L}"]
        if inject:
            loads += [f"u.{l}" for l in range(1, L + 1)]
        for name in loads:
            ins.append(Instruction("LOAD", (), name, layer=L))

    w_elems = lambda d: d.cout * d.cin * d.kernel ** 2
    for l in range(L, 0, -1):
        d = dims[l - 1]
        elems = _stream_elems(d)
        for name in (f"s1.{l - 1}", f"s2.{l - 1}", f"g1.{l - 1}", f"g2.{l - 1}"):
            _buf(s, name, elems)
        _buf(s, f"q1.{l}", w_elems(d.f1), STATIC)
        _buf(s, f"q2.{l}", w_elems(d.f2), STATIC)

        ins.append(Instruction("RECOMPUTE_F2", (f"s2.{l}", f"s1.{l}"), f"s1.{l - 1}",
                               overwrites=f"s1.{l}", layer=l, dims=d.f2))
        ins.append(Instruction("WGRAD_U2W", (f"g1.{l}", f"s2.{l}"), f"q2.{l}",
                               layer=l, dims=d.f2))
        ins.append(Instruction("INVGRAD_U2A", (f"g1.{l}", f"g2.{l}"), f"g2.{l - 1}",
                               overwrites=f"g2.{l}", layer=l, dims=d.f2))
        rec_in = (f"s1.{l - 1}", f"s2.{l}", f"u.{l}") if inject else (f"s1.{l - 1}", f"s2.{l}")
        ins.append(Instruction("RECOMPUTE_F1", rec_in, f"s2.{l - 1}",
                               overwrites=f"s2.{l}", layer=l, dims=d.f1))
        ins.append(Instruction("WGRAD_U1W", (f"g2.{l - 1}", f"s1.{l - 1}"), f"q1.{l}",
                               layer=l, dims=d.f1))
        ins.append(Instruction("INVGRAD_U1A", (f"g2.{l - 1}", f"g1.{l}"), f"g1.{l - 1}",
                               overwrites=f"g1.{l}", layer=l, dims=d.f1))
    return s


def _emit_backward_fi(dims: list, preloaded: bool) -> Schedule:
    L = len(dims)
    s = Schedule(meta={"variant": "fi", "pass": "backward"})
    ins = s.instructions

    for l in range(1, L + 1):
        elems = _stream_elems(dims[l - 1])
        _buf(s, f"a.{l}", elems)
        _buf(s, f"s.{l}", elems)
    _buf(s, "s.0", _stream_elems(dims[0]))
    _buf(s, f"gs.{L}", _stream_elems(dims[-1]))
    if preloaded:
        names = ["s.0"] + [x for l in range(1, L + 1) for x in (f"a.{l}", f"s.{l}")]
        for name in names + [f"gs.{L}"]:
            ins.append(Instruction("LOAD", (), name, layer=L))

    w_elems = lambda d: d.cout * d.cin * d.kernel ** 2
    for l in range(L, 0, -1):
        d = dims[l - 1]
        elems = _stream_elems(d)
        _buf(s, f"ga.{l}", elems)
        _buf(s, f"gs.{l - 1}", elems)
        _buf(s, f"q1.{l}", w_elems(d.f1), STATIC)
        _buf(s, f"q2.{l}", w_elems(d.f2), STATIC)
        ins.append(Instruction("WGRAD_U2W", (f"gs.{l}", f"a.{l}"), f"q2.{l}",
                               layer=l, dims=d.f2))
        ins.append(Instruction("INVGRAD_U2A", (f"gs.{l}",), f"ga.{l}",
                               overwrites=f"gs.{l}", layer=l, dims=d.f2))
        ins.append(Instruction("WGRAD_U1W", (f"ga.{l}", f"s.{l - 1}"), f"q1.{l}",
                               layer=l, dims=d.f1))
        ins.append(Instruction("INVGRAD_U1A", (f"ga.{l}",), f"gs.{l - 1}",
                               overwrites=f"ga.{l}", layer=l, dims=d.f1))
    return s


def emit_training_step_schedule(dims: list, variant: str = "dudnn") -> Schedule:
    """Forward followed by backward in one buffer namespace; the backward
    consumes the forward's retained outputs directly (no reload), so stored
    activations keep their true write-to-read lifetimes."""
    fwd = emit_forward_schedule(dims, variant)
    bwd = emit_backward_schedule(dims, variant, preloaded=False)
    L = len(dims)
    step = Schedule(meta={"variant": variant, "pass": "step"})
    step.buffers.update(fwd.buffers)
    for name, info in bwd.buffers.items():
        step.buffers.setdefault(name, info)
    step.instructions = list(fwd.instructions)
    # loss gradients appear at the head boundary
    top = f"gs.{L}" if variant == "fi" else None
    if variant == "fi":
        step.instructions.append(Instruction("ADD", ("logits",), top, layer=L))
    else:
        for name in (f"g1.{L}", f"g2.{L}"):
            step.instructions.append(Instruction("ADD", ("logits",), name, layer=L))
    step.instructions += bwd.instructions
    return step


# ---------------------------------------------------------------------------
# validity checking
# ---------------------------------------------------------------------------

def check_schedule(schedule: Schedule):
    """Topological validity plus overwrite legality.

    Raises ScheduleError if an instruction reads an unwritten buffer or if
    any instruction reads a buffer after its storage was recycled.
    """
    written = set()
    dead = {}
    for i, ins in enumerate(schedule.instructions):
        for name in ins.inputs:
            if name not in written:
                raise ScheduleError(f"#{i} {ins.opcode} reads unwritten buffer {name!r}")
            if name in dead:
                raise ScheduleError(
                    f"#{i} {ins.opcode} reads {name!r} overwritten at #{dead[name]}"
                )
        if ins.overwrites is not None:
            if ins.overwrites not in written:
                raise ScheduleError(f"#{i} overwrites unwritten buffer {ins.overwrites!r}")
            dead[ins.overwrites] = i
        if ins.output is not None:
            if ins.output not in schedule.buffers:
                raise ScheduleError(f"#{i} writes undeclared buffer {ins.output!r}")
            written.add(ins.output)
            dead.pop(ins.output, None)  # recomputing a value revives its name
    return True


# ---------------------------------------------------------------------------
# latency and traces
# ---------------------------------------------------------------------------

@dataclass
class LatencyModel:
    """Maps instructions to durations (exact rational seconds).

    Analytical mode: T = N / R.  Detailed mode consults ``cycle_fn`` (the
    systolic-array model) and converts cycles to seconds with the clock.
    Pool/add/head instructions take negligible time in both modes.
    """

    macs_per_second: int
    mode: str = "analytical"
    cycle_fn: object = None
    clock_hz: int = 500_000_000
    workload_mode: str = "paper"

    def __post_init__(self):
        if self.macs_per_second <= 0:
            raise ScheduleError("throughput must be positive")
        if self.mode not in ("analytical", "detailed"):
            raise ScheduleError(f"unknown latency mode {self.mode!r}")
        if self.mode == "detailed" and self.cycle_fn is None:
            raise ScheduleError("detailed mode needs a cycle function")

    def op_seconds(self, dims: ConvDims | None) -> Fraction:
        if dims is None:
            return Fraction(0)
        if self.mode == "analytical":
            return Fraction(op_workload(dims, self.workload_mode), self.macs_per_second)
        return Fraction(int(self.cycle_fn(dims)), self.clock_hz)


@dataclass(frozen=True)
class TraceEvent:
    buffer: str
    kind: str        # "R" or "W"
    t: Fraction


@dataclass
class AccessTrace:
    events: list
    total_time: Fraction
    schedule: Schedule

    def access_pairs(self):
        return [(e.buffer, e.kind) for e in self.events]

    def live_intervals(self) -> dict:
        first_write, last_read = {}, {}
        for e in self.events:
            if e.kind == "W":
                first_write.setdefault(e.buffer, e.t)
            else:
                last_read[e.buffer] = e.t
        return {
            n: (first_write[n], last_read.get(n, first_write[n]))
            for n in first_write
        }


def simulate_trace(schedule: Schedule, latency: LatencyModel) -> AccessTrace:
    """Serial replay: instruction i occupies [t, t + T_i).

    Operands stream through the whole instruction, so each input's read
    event lands at the instruction's completion time, as does the write.
    """
    check_schedule(schedule)
    events = []
    t = Fraction(0)
    for ins in schedule.instructions:
        t_end = t + latency.op_seconds(ins.dims)
        for name in ins.inputs:
            events.append(TraceEvent(name, "R", t_end))
        if ins.output is not None:
            events.append(TraceEvent(ins.output, "W", t_end))
        t = t_end
    return AccessTrace(events=events, total_time=t, schedule=schedule)


def measured_lifetimes(trace: AccessTrace) -> dict:
    """Per-buffer lifetime: max over reads of (read time - latest prior write).

    Never-read buffers have lifetime 0; a read before any write is a
    schedule bug and raises.
    """
    last_write = {}
    lifetimes = {}
    for e in trace.events:
        if e.kind == "W":
            last_write[e.buffer] = e.t
        else:
            if e.buffer not in last_write:
                raise ScheduleError(f"read of {e.buffer!r} before any write")
            gap = e.t - last_write[e.buffer]
            if gap > lifetimes.get(e.buffer, Fraction(-1)):
                lifetimes[e.buffer] = gap
    for name in trace.schedule.buffers:
        lifetimes.setdefault(name, Fraction(0))
    return lifetimes


def max_transient_lifetime(trace: AccessTrace) -> Fraction:
    lts = measured_lifetimes(trace)
    names = trace.schedule.transient_names()
    return max((lts[n] for n in names if n in lts), default=Fraction(0))


# ---------------------------------------------------------------------------
# closed-form lifetimes
# ---------------------------------------------------------------------------

@dataclass
class LifetimeReport:
    """Closed-form per-layer lifetime components plus the global maxima.

    Component naming follows the three forward access patterns (stream-1
    value, stream-2 value, backbone value) and the four backward ones
    (gradient streams g1/g2, recomputed streams y1/y2).  All values are
    rational seconds.
    """

    t_f: Fraction
    t_b: Fraction
    forward_stream1: list      # index l-1 -> value consumed by round l
    forward_stream2: list
    forward_backbone: list     # index l -> backbone output of stage l (l=0: input)
    backward_g1: list          # index l-1 -> gradient stream entering round l
    backward_g2: list
    backward_y1: list          # recomputed stream-1 values, index l
    backward_y2: list
    per_buffer_forward: dict = field(default_factory=dict)
    per_buffer_backward: dict = field(default_factory=dict)

    @property
    def t_data(self) -> Fraction:
        return max(self.t_f, self.t_b)

    def to_json(self) -> dict:
        f = lambda xs: [float(x) for x in xs]
        return {
            "T_f_seconds": float(self.t_f),
            "T_b_seconds": float(self.t_b),
            "T_data_seconds": float(self.t_data),
            "forward": {
                "T_y3_per_layer": f(self.forward_stream1),
                "T_y1_per_layer": f(self.forward_stream2),
                "T_y2_per_layer": f(self.forward_backbone),
            },
            "backward": {
                "T_g1_per_layer": f(self.backward_g1),
                "T_g2_per_layer": f(self.backward_g2),
                "T_y1_per_layer": f(self.backward_y1),
                "T_y2_per_layer": f(self.backward_y2),
            },
        }


def closed_form_lifetimes(dims: list, macs_per_second: int,
                          workload_mode: str = "paper") -> LifetimeReport:
    """Analytical lifetimes for the duplex forward/backward rounds.

    Derived from the round layouts at the top of this module; exactly equal
    to trace measurement in analytical latency mode for any dims.
    """
    L = len(dims)
    R = macs_per_second
    phi1 = [Fraction(op_workload(d.f1, workload_mode), R) for d in dims]
    phi2 = [Fraction(op_workload(d.f2, workload_mode), R) for d in dims]
    gamma = [Fraction(op_workload(d.g, workload_mode), R) if d.g is not None else Fraction(0)
             for d in dims]

    z = Fraction(0)

    def p1(l):
        return phi1[l - 1] if 1 <= l <= L else z

    def p2(l):
        return phi2[l - 1] if 1 <= l <= L else z

    def g(l):
        return gamma[l - 1] if 1 <= l <= L else z

    # forward: value entering round l; stream-1 survives the whole round,
    # stream-2 is consumed by CONV_F1, the backbone value by the next
    # round's CONV_F1 (its injection read)
    f_s1 = [g(l) + p1(l) + p2(l) for l in range(1, L + 1)]
    f_s2 = [p2(l - 1) + g(l) + p1(l) for l in range(1, L + 1)]
    f_bb = [p1(l) + p2(l) + g(l + 1) + p1(l + 1) for l in range(0, L)]

    fwd = {}
    for l in range(1, L + 1):
        fwd[f"s1.{l - 1}"] = f_s1[l - 1]
        fwd[f"s2.{l - 1}"] = f_s2[l - 1]
        fwd["input" if l == 1 else f"bb.{l - 1}"] = f_bb[l - 1]
    fwd[f"s1.{L}"] = z                    # read instantly by the head
    fwd[f"s2.{L}"] = p2(L)                # read by CONV_F2_L and the head
    fwd["logits"] = z

    # backward round offsets: REC_F2 | U2W | U2A | REC_F1 | U1W | U1A
    b_g1 = [3 * p2(l) + 3 * p1(l) for l in range(1, L + 1)]
    b_g2 = [(3 * p1(l + 1) if l < L else z) + 3 * p2(l) for l in range(1, L + 1)]
    b_y1 = [(2 * p2(l + 1) + 3 * p1(l + 1) if l < L else z) + p2(l) for l in range(1, L + 1)]
    b_y2 = [(2 * p1(l + 1) if l < L else z) + 3 * p2(l) + p1(l) for l in range(1, L + 1)]

    bwd = {}
    for l in range(1, L + 1):
        bwd[f"g1.{l}"] = b_g1[l - 1]
        bwd[f"g2.{l}"] = b_g2[l - 1]
        bwd[f"s1.{l}"] = b_y1[l - 1]
        bwd[f"s2.{l}"] = b_y2[l - 1]
    bwd["g1.0"] = z
    bwd["g2.0"] = 3 * p1(1)               # m.1 still feeds round 1's U1W/U1A
    bwd["s1.0"] = 2 * p2(1) + 2 * p1(1)   # consumed by REC_F1_1 and U1W_1
    bwd["s2.0"] = z

    return LifetimeReport(
        t_f=max(fwd.values()),
        t_b=max(bwd.values()),
        forward_stream1=f_s1,
        forward_stream2=f_s2,
        forward_backbone=f_bb,
        backward_g1=b_g1,
        backward_g2=b_g2,
        backward_y1=b_y1,
        backward_y2=b_y2,
        per_buffer_forward=fwd,
        per_buffer_backward=bwd,
    )


# ---------------------------------------------------------------------------
# peak memory
# ---------------------------------------------------------------------------

def peak_memory(schedule: Schedule, bytes_per_element=BYTES_PER_ELEMENT) -> int:
    """Maximum live transient footprint in bytes under the overwrite
    discipline: a value occupies storage from its write until another value
    recycles its slot (or the schedule ends)."""
    live = {}
    peak = Fraction(0)
    for ins in schedule.instructions:
        if ins.overwrites is not None:
            live.pop(ins.overwrites, None)
        if ins.output is not None:
            info = schedule.buffers[ins.output]
            if info.storage == TRANSIENT:
                live[ins.output] = info.elements
        total = sum(live.values()) * Fraction(bytes_per_element)
        if total > peak:
            peak = total
    return int(-(-peak))  # ceil to whole bytes
