"""Instruction-level pulse compiler for single-channel composite XY+Z control.

A program is a short list of instructions referencing a store of reusable
sample primitives, so sequences of tens of microseconds compile from well
under 100 ns of stored waveform data. Compilation walks the instruction
stream once, tracking a frame (carrier frequency, accumulated virtual-Z
phase, time) and emitting two aligned timelines:

* a complex XY envelope — each play instruction contributes
  amplitude * primitive * exp(i(phase_offset + frame_phase));
* a real Z baseband — flux edges, holds, and idle zeros.

Synthesis modulates the envelope with a phase-continuous carrier
(x(t) = Re{env * e^{-i theta(t)}}), applies the configured FIR to the
modulated XY path and the IIR corrector to the Z path, and sums both into the
single-DAC composite. Amplitudes are normalized to DAC full scale; anything
past |1| raises instead of clipping.

Z holds may host nested instructions (an XY burst riding on a flux step);
everything else is strictly sequential.
"""

from __future__ import annotations

import hashlib
import json
import math
import pathlib
import re
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import ProgramParseError, SaturationError, ScheduleError
from .filters import FirFilter, IirCorrector, apply_iir
from .waveform import Waveform

ENVELOPE = "envelope"
EDGE = "edge"


# ---------------------------------------------------------------------------
# program model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PulsePrimitive:
    """A stored, normalized sample pattern (tuple so equality is exact)."""

    id: str
    samples: tuple
    sample_rate: float
    kind: str = ENVELOPE

    def __post_init__(self):
        samples = tuple(float(s) for s in self.samples)
        if not samples:
            raise ValueError(f"primitive {self.id!r} has no samples")
        if any(abs(s) > 1.0 for s in samples):
            raise ValueError(f"primitive {self.id!r} has samples outside [-1, 1]")
        if self.kind not in (ENVELOPE, EDGE):
            raise ValueError(f"primitive kind must be 'envelope' or 'edge', got {self.kind!r}")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)

    @property
    def duration_ns(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class PlayXY:
    primitive_id: str
    amplitude: float = 1.0
    phase_offset: float = 0.0
    duration: float | None = None  # ns; validated against the primitive

    def __post_init__(self):
        if abs(self.amplitude) > 1.0:
            raise ValueError(f"amplitude {self.amplitude} outside [-1, 1]")


@dataclass(frozen=True)
class PlayZ:
    rise_primitive_id: str
    hold_amplitude: float
    hold_duration: float  # ns
    fall_primitive_id: str
    body: tuple = ()  # instructions executed during the hold

    def __post_init__(self):
        if abs(self.hold_amplitude) > 1.0:
            raise ValueError(f"hold amplitude {self.hold_amplitude} outside [-1, 1]")
        if self.hold_duration < 0:
            raise ValueError("hold duration must be non-negative")
        object.__setattr__(self, "body", tuple(self.body))


@dataclass(frozen=True)
class VirtualZ:
    phase: float


@dataclass(frozen=True)
class SetCarrier:
    frequency: float  # GHz

    def __post_init__(self):
        if self.frequency < 0:
            raise ValueError("carrier frequency must be non-negative")


@dataclass(frozen=True)
class Delay:
    duration: float  # ns

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("delay must be non-negative")


@dataclass(frozen=True)
class Repeat:
    count: int
    body: tuple

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("repeat count must be >= 1")
        object.__setattr__(self, "body", tuple(self.body))


def _walk_primitive_refs(instructions):
    for instr in instructions:
        if isinstance(instr, PlayXY):
            yield instr.primitive_id
        elif isinstance(instr, PlayZ):
            yield instr.rise_primitive_id
            yield instr.fall_primitive_id
            yield from _walk_primitive_refs(instr.body)
        elif isinstance(instr, Repeat):
            yield from _walk_primitive_refs(instr.body)


@dataclass(frozen=True)
class PulseProgram:
    instructions: tuple
    primitives: dict
    initial_carrier: float = 0.0  # GHz

    def __post_init__(self):
        object.__setattr__(self, "instructions", tuple(self.instructions))
        object.__setattr__(self, "primitives", dict(self.primitives))
        for pid, prim in self.primitives.items():
            if pid != prim.id:
                raise ValueError(f"store key {pid!r} does not match primitive id {prim.id!r}")
        for ref in _walk_primitive_refs(self.instructions):
            if ref not in self.primitives:
                raise ValueError(f"instruction references unknown primitive {ref!r}")

    def __eq__(self, other):
        if not isinstance(other, PulseProgram):
            return NotImplemented
        return (
            self.instructions == other.instructions
            and self.primitives == other.primitives
            and self.initial_carrier == other.initial_carrier
        )


@dataclass(frozen=True)
class SynthesisConfig:
    sample_rate: float  # GS/s
    xy_fir: FirFilter | None = None
    z_iir: IirCorrector | None = None
    dac_bits: int = 16
    dac_full_scale: float = 0.5  # volt

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if not 8 <= self.dac_bits <= 16:
            raise ValueError("dac_bits must be within [8, 16]")
        if self.xy_fir is not None and self.xy_fir.sample_rate != self.sample_rate:
            raise ValueError("xy_fir sample rate does not match the engine rate")
        if self.z_iir is not None and self.z_iir.sample_rate != self.sample_rate:
            raise ValueError("z_iir sample rate does not match the engine rate")


@dataclass(frozen=True)
class FrameState:
    carrier_ghz: float
    frame_phase_rad: float  # reported modulo 2 pi
    time_ns: float


@dataclass(frozen=True)
class FrameSegment:
    """Constant-carrier span: phase(t) = phase0 + 2 pi f (n - start)/rate."""

    start_index: int
    carrier_ghz: float
    carrier_phase_rad: float


@dataclass(frozen=True)
class CompiledProgram:
    xy_envelope: Waveform  # complex
    z_baseband: Waveform
    frame_segments: tuple
    final_frame: FrameState

    @property
    def sample_rate(self) -> float:
        return self.xy_envelope.sample_rate

    def __len__(self) -> int:
        return len(self.xy_envelope)


# ---------------------------------------------------------------------------
# compilation
# ---------------------------------------------------------------------------


def _sample_count(duration_ns: float, rate: float, what: str) -> int:
    exact = duration_ns * rate
    n = round(exact)
    if abs(exact - n) > 1e-6:
        raise ScheduleError(
            f"{what} of {duration_ns} ns is not an integer number of samples "
            f"at {rate} GS/s"
        )
    return int(n)


class _Compiler:
    def __init__(self, program: PulseProgram, rate: float):
        self.program = program
        self.rate = rate
        self.xy: list = []
        self.z: list = []
        self.n = 0
        self.frame_phase = 0.0
        self.z_level = 0.0
        self.in_hold = False
        self.segments = [FrameSegment(0, program.initial_carrier, 0.0)]

    # -- timeline ----------------------------------------------------------

    def _advance(self, count: int, xy_chunk=None, z_chunk=None):
        if count == 0:
            return
        self.xy.append(
            np.zeros(count, dtype=complex) if xy_chunk is None else xy_chunk
        )
        self.z.append(
            np.full(count, self.z_level) if z_chunk is None else z_chunk
        )
        self.n += count

    def _primitive(self, pid: str, want_kind: str) -> PulsePrimitive:
        prim = self.program.primitives[pid]
        if prim.kind != want_kind:
            raise ValueError(
                f"primitive {pid!r} has kind {prim.kind!r}; this instruction needs "
                f"{want_kind!r}"
            )
        if prim.sample_rate != self.rate:
            raise ValueError(
                f"primitive {pid!r} was stored at {prim.sample_rate} GS/s, engine "
                f"runs at {self.rate} GS/s"
            )
        return prim

    # -- instructions --------------------------------------------------------

    def run(self, instructions):
        for instr in instructions:
            if isinstance(instr, PlayXY):
                self._play_xy(instr)
            elif isinstance(instr, PlayZ):
                self._play_z(instr)
            elif isinstance(instr, VirtualZ):
                self.frame_phase += instr.phase
            elif isinstance(instr, SetCarrier):
                self._set_carrier(instr.frequency)
            elif isinstance(instr, Delay):
                self._advance(_sample_count(instr.duration, self.rate, "delay"))
            elif isinstance(instr, Repeat):
                for _ in range(instr.count):
                    self.run(instr.body)
            else:
                raise TypeError(f"unknown instruction {type(instr).__name__}")

    def _play_xy(self, instr: PlayXY):
        prim = self._primitive(instr.primitive_id, ENVELOPE)
        if instr.duration is not None and not math.isclose(
            instr.duration, prim.duration_ns, rel_tol=0.0, abs_tol=1e-9
        ):
            raise ScheduleError(
                f"PlayXY duration {instr.duration} ns does not equal primitive "
                f"{instr.primitive_id!r} length {prim.duration_ns} ns"
            )
        rotor = complex(
            math.cos(instr.phase_offset + self.frame_phase),
            math.sin(instr.phase_offset + self.frame_phase),
        )
        chunk = instr.amplitude * rotor * np.asarray(prim.samples)
        self._advance(len(prim.samples), xy_chunk=chunk.astype(complex))

    def _play_z(self, instr: PlayZ):
        if self.in_hold:
            raise ScheduleError("nested Z emission inside a Z hold is not allowed")
        rise = self._primitive(instr.rise_primitive_id, EDGE)
        fall = self._primitive(instr.fall_primitive_id, EDGE)
        amp = instr.hold_amplitude
        hold_samples = _sample_count(instr.hold_duration, self.rate, "Z hold")

        self._advance(len(rise.samples), z_chunk=amp * np.asarray(rise.samples))
        self.z_level = amp
        self.in_hold = True
        start = self.n
        try:
            self.run(instr.body)
        finally:
            self.in_hold = False
        used = self.n - start
        if used > hold_samples:
            raise ScheduleError(
                f"Z-hold body lasts {used / self.rate} ns, longer than the "
                f"{instr.hold_duration} ns hold"
            )
        self.in_hold = True
        self._advance(hold_samples - used)
        self.in_hold = False
        self.z_level = 0.0
        self._advance(len(fall.samples), z_chunk=amp * np.asarray(fall.samples))

    def _set_carrier(self, frequency: float):
        seg = self.segments[-1]
        phase_now = seg.carrier_phase_rad + (
            2.0 * math.pi * seg.carrier_ghz * (self.n - seg.start_index) / self.rate
        )
        if seg.start_index == self.n:
            self.segments[-1] = FrameSegment(self.n, frequency, phase_now)
        else:
            self.segments.append(FrameSegment(self.n, frequency, phase_now))

    def finish(self) -> CompiledProgram:
        xy = np.concatenate(self.xy) if self.xy else np.zeros(0, dtype=complex)
        z = np.concatenate(self.z) if self.z else np.zeros(0)
        return CompiledProgram(
            xy_envelope=Waveform(xy.astype(complex), self.rate),
            z_baseband=Waveform(z, self.rate),
            frame_segments=tuple(self.segments),
            final_frame=FrameState(
                carrier_ghz=self.segments[-1].carrier_ghz,
                frame_phase_rad=self.frame_phase % (2.0 * math.pi),
                time_ns=self.n / self.rate,
            ),
        )


def compile(program: PulseProgram, config: SynthesisConfig) -> CompiledProgram:
    """Expand a program into aligned XY-envelope and Z-baseband timelines."""
    compiler = _Compiler(program, config.sample_rate)
    compiler.run(program.instructions)
    return compiler.finish()


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------


def carrier_phase(compiled: CompiledProgram) -> np.ndarray:
    """Accumulated carrier phase theta[n] (radians) for every sample."""
    n_total = len(compiled)
    theta = np.empty(n_total)
    segments = compiled.frame_segments
    for i, seg in enumerate(segments):
        end = segments[i + 1].start_index if i + 1 < len(segments) else n_total
        idx = np.arange(seg.start_index, end)
        theta[idx] = seg.carrier_phase_rad + (
            2.0 * math.pi * seg.carrier_ghz * (idx - seg.start_index)
            / compiled.sample_rate
        )
    return theta


def synthesize(compiled: CompiledProgram, config: SynthesisConfig) -> Waveform:
    """Modulate, condition, and sum the two paths into the composite output.

    xy_real[n] = Re{env[n] e^{-i theta[n]}} with theta the phase-continuous
    accumulated carrier phase; the FIR acts on the modulated XY signal and the
    IIR corrector on the Z baseband; their sum must stay within DAC full
    scale.
    """
    if config.sample_rate != compiled.sample_rate:
        raise ValueError("config sample rate does not match the compiled program")
    if len(compiled) == 0:
        return Waveform(np.zeros(0), config.sample_rate)
    theta = carrier_phase(compiled)
    xy_real = np.real(compiled.xy_envelope.samples * np.exp(-1j * theta))
    if config.xy_fir is not None:
        xy_real = lfilter(config.xy_fir.taps_float, [1.0], xy_real)
    z = compiled.z_baseband
    if config.z_iir is not None:
        z = apply_iir(z, config.z_iir)
    composite = xy_real + z.samples
    peak_index = int(np.argmax(np.abs(composite)))
    peak = float(abs(composite[peak_index]))
    if peak > 1.0 + 1e-12:
        raise SaturationError(
            f"composite peak {peak:.6f} at sample {peak_index} exceeds full scale",
            peak=peak,
            index=peak_index,
        )
    return Waveform(composite, config.sample_rate)


def dac_quantize(w: Waveform, config: SynthesisConfig) -> np.ndarray:
    """Integer DAC codes: round-half-away-from-zero of w * (2^(bits-1) - 1)."""
    samples = np.asarray(w.samples)
    if np.iscomplexobj(samples):
        raise ValueError("quantization applies to real composites")
    peak_index = int(np.argmax(np.abs(samples))) if len(samples) else 0
    if len(samples) and abs(samples[peak_index]) > 1.0:
        raise SaturationError(
            f"sample {peak_index} at {samples[peak_index]:+.6f} exceeds full scale",
            peak=float(abs(samples[peak_index])),
            index=peak_index,
        )
    full = float(2 ** (config.dac_bits - 1) - 1)
    scaled = samples * full
    return (np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)).astype(np.int32)


def dac_dequantize(codes, config: SynthesisConfig, sample_rate: float) -> Waveform:
    full = float(2 ** (config.dac_bits - 1) - 1)
    return Waveform(np.asarray(codes, dtype=float) / full, sample_rate)


# ---------------------------------------------------------------------------
# memory accounting
# ---------------------------------------------------------------------------


def _sequence_duration_ns(instructions, program: PulseProgram, rate: float) -> float:
    total = 0.0
    for instr in instructions:
        if isinstance(instr, PlayXY):
            total += program.primitives[instr.primitive_id].duration_ns
        elif isinstance(instr, PlayZ):
            body = _sequence_duration_ns(instr.body, program, rate)
            if body > instr.hold_duration + 1e-9:
                raise ScheduleError(
                    f"Z-hold body lasts {body} ns, longer than the "
                    f"{instr.hold_duration} ns hold"
                )
            total += (
                program.primitives[instr.rise_primitive_id].duration_ns
                + instr.hold_duration
                + program.primitives[instr.fall_primitive_id].duration_ns
            )
        elif isinstance(instr, Delay):
            total += instr.duration
        elif isinstance(instr, Repeat):
            total += instr.count * _sequence_duration_ns(instr.body, program, rate)
    return total


def memory_report(program: PulseProgram, config: SynthesisConfig) -> dict:
    """Stored-vs-emitted accounting: {stored_ns, sequence_ns, ratio}.

    stored_ns counts every primitive in the store once; ratio is None when
    nothing is stored (the empty program).
    """
    stored = sum(p.duration_ns for p in program.primitives.values())
    sequence = _sequence_duration_ns(program.instructions, program, config.sample_rate)
    ratio = sequence / stored if stored > 0 else None
    return {"stored_ns": stored, "sequence_ns": sequence, "ratio": ratio}


# ---------------------------------------------------------------------------
# standard primitives
# ---------------------------------------------------------------------------


def cosine_envelope(duration_ns: float, sample_rate: float) -> np.ndarray:
    """Resonant-pulse envelope 0.5 (1 - cos(2 pi t / T)): zero ends, unit peak."""
    n = _sample_count(duration_ns, sample_rate, "envelope duration")
    if n < 2:
        raise ValueError("envelope needs at least 2 samples")
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def raised_cosine_edge(duration_ns: float, sample_rate: float, falling: bool = False) -> np.ndarray:
    """Smooth 0->1 flux edge (time-reversed when falling)."""
    n = _sample_count(duration_ns, sample_rate, "edge duration")
    if n < 2:
        raise ValueError("edge needs at least 2 samples")
    ramp = 0.5 * (1.0 - np.cos(np.pi * np.arange(n) / (n - 1)))
    return ramp[::-1].copy() if falling else ramp


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"\S+")


def _tokens(line: str):
    """(column, token) pairs, 1-based columns, comments stripped."""
    if "#" in line:
        line = line[: line.index("#")]
    return [(m.start() + 1, m.group()) for m in _TOKEN.finditer(line)]


def _parse_float(token, line_no, col, what):
    try:
        return float(token)
    except ValueError:
        raise ProgramParseError(f"bad {what} {token!r}", line_no, col) from None


def _parse_kv(token, key, line_no, col):
    if not token.startswith(key + "="):
        raise ProgramParseError(f"expected {key}=..., got {token!r}", line_no, col)
    return token[len(key) + 1 :]


class _Parser:
    def __init__(self, text: str, sample_rate: float, base_dir=None):
        self.lines = text.splitlines()
        self.rate = sample_rate
        self.base_dir = pathlib.Path(base_dir) if base_dir else pathlib.Path.cwd()
        self.primitives: dict = {}
        self.initial_carrier: float | None = None
        self.pos = 0  # next line index

    def parse(self) -> PulseProgram:
        instructions = self._block(top_level=True)
        return PulseProgram(
            instructions=tuple(instructions),
            primitives=self.primitives,
            initial_carrier=self.initial_carrier or 0.0,
        )

    def _block(self, top_level: bool) -> list:
        out: list = []
        while self.pos < len(self.lines):
            line_no = self.pos + 1
            toks = _tokens(self.lines[self.pos])
            self.pos += 1
            if not toks:
                continue
            col0, word = toks[0]
            if word == "}":
                if top_level:
                    raise ProgramParseError("unmatched '}'", line_no, col0)
                if len(toks) > 1:
                    raise ProgramParseError("'}' must end the line", line_no, toks[1][0])
                return out
            handler = getattr(self, f"_line_{word}", None)
            if handler is None:
                raise ProgramParseError(f"unknown directive {word!r}", line_no, col0)
            result = handler(toks, line_no, bool(out) or not top_level)
            if result is not None:
                out.append(result)
        if not top_level:
            raise ProgramParseError("unterminated block: missing '}'", len(self.lines))
        return out

    def _maybe_open_block(self, toks, line_no, from_index) -> tuple | None:
        """Returns parsed body if the line ends with '{', else None."""
        if from_index < len(toks) and toks[from_index][1] == "{":
            if from_index + 1 != len(toks):
                raise ProgramParseError(
                    "'{' must end the line", line_no, toks[from_index + 1][0]
                )
            return tuple(self._block(top_level=False))
        if from_index != len(toks):
            raise ProgramParseError(
                f"unexpected token {toks[from_index][1]!r}", line_no, toks[from_index][0]
            )
        return None

    def _line_prim(self, toks, line_no, _seen):
        if len(toks) < 4:
            raise ProgramParseError("prim needs: prim <id> <kind> <values...|path>", line_no, toks[0][0])
        (_, pid), (kcol, kind) = toks[1], toks[2]
        if pid in self.primitives:
            raise ProgramParseError(f"duplicate primitive id {pid!r}", line_no, toks[1][0])
        if kind == "file":
            path = self.base_dir / toks[3][1]
            try:
                values = [float(v) for v in path.read_text().split()]
            except OSError as exc:
                raise ProgramParseError(f"cannot read {path}: {exc}", line_no, toks[3][0]) from None
            if len(toks) > 4:
                raise ProgramParseError("unexpected token after path", line_no, toks[4][0])
            kind = ENVELOPE
        elif kind in (ENVELOPE, EDGE):
            values = [
                _parse_float(tok, line_no, col, "sample") for col, tok in toks[3:]
            ]
        else:
            raise ProgramParseError(
                f"primitive kind must be envelope, edge, or file, got {kind!r}",
                line_no,
                kcol,
            )
        try:
            self.primitives[pid] = PulsePrimitive(pid, tuple(values), self.rate, kind)
        except ValueError as exc:
            raise ProgramParseError(str(exc), line_no, toks[3][0]) from None
        return None

    def _line_carrier(self, toks, line_no, seen_instructions):
        if len(toks) != 2:
            raise ProgramParseError("carrier needs exactly one frequency", line_no, toks[0][0])
        freq = _parse_float(toks[1][1], line_no, toks[1][0], "frequency")
        if not seen_instructions and self.initial_carrier is None:
            self.initial_carrier = freq
            return None
        return SetCarrier(freq)

    def _line_xy(self, toks, line_no, _seen):
        if len(toks) < 2:
            raise ProgramParseError("xy needs a primitive id", line_no, toks[0][0])
        pid = toks[1][1]
        if pid not in self.primitives:
            raise ProgramParseError(f"unknown primitive {pid!r}", line_no, toks[1][0])
        amp, phase = 1.0, 0.0
        for col, tok in toks[2:]:
            if tok.startswith("amp="):
                amp = _parse_float(tok[4:], line_no, col, "amplitude")
            elif tok.startswith("phase="):
                phase = _parse_float(tok[6:], line_no, col, "phase")
            else:
                raise ProgramParseError(f"unexpected token {tok!r}", line_no, col)
        try:
            return PlayXY(primitive_id=pid, amplitude=amp, phase_offset=phase)
        except ValueError as exc:
            raise ProgramParseError(str(exc), line_no, toks[0][0]) from None

    def _line_vz(self, toks, line_no, _seen):
        if len(toks) != 2:
            raise ProgramParseError("vz needs exactly one phase", line_no, toks[0][0])
        return VirtualZ(_parse_float(toks[1][1], line_no, toks[1][0], "phase"))

    def _line_delay(self, toks, line_no, _seen):
        if len(toks) != 2:
            raise ProgramParseError("delay needs exactly one duration", line_no, toks[0][0])
        dur = _parse_float(toks[1][1], line_no, toks[1][0], "duration")
        self._check_integer_samples(dur, line_no, toks[1][0], "delay")
        try:
            return Delay(dur)
        except ValueError as exc:
            raise ProgramParseError(str(exc), line_no, toks[1][0]) from None

    def _line_z(self, toks, line_no, _seen):
        if len(toks) < 4:
            raise ProgramParseError(
                "z needs: z rise=<prim> hold=<amp>,<ns> fall=<prim>", line_no, toks[0][0]
            )
        rise = _parse_kv(toks[1][1], "rise", line_no, toks[1][0])
        hold = _parse_kv(toks[2][1], "hold", line_no, toks[2][0])
        fall = _parse_kv(toks[3][1], "fall", line_no, toks[3][0])
        for pid, (col, _) in ((rise, toks[1]), (fall, toks[3])):
            if pid not in self.primitives:
                raise ProgramParseError(f"unknown primitive {pid!r}", line_no, col)
        if "," not in hold:
            raise ProgramParseError("hold needs <amp>,<ns>", line_no, toks[2][0])
        amp_s, dur_s = hold.split(",", 1)
        amp = _parse_float(amp_s, line_no, toks[2][0], "hold amplitude")
        dur = _parse_float(dur_s, line_no, toks[2][0], "hold duration")
        self._check_integer_samples(dur, line_no, toks[2][0], "hold")
        body = self._maybe_open_block(toks, line_no, 4)
        try:
            return PlayZ(
                rise_primitive_id=rise,
                hold_amplitude=amp,
                hold_duration=dur,
                fall_primitive_id=fall,
                body=body or (),
            )
        except ValueError as exc:
            raise ProgramParseError(str(exc), line_no, toks[0][0]) from None

    def _line_repeat(self, toks, line_no, _seen):
        if len(toks) < 2:
            raise ProgramParseError("repeat needs a count", line_no, toks[0][0])
        try:
            count = int(toks[1][1])
        except ValueError:
            raise ProgramParseError(f"bad count {toks[1][1]!r}", line_no, toks[1][0]) from None
        body = self._maybe_open_block(toks, line_no, 2)
        if body is None:
            raise ProgramParseError("repeat needs a '{' block", line_no, toks[-1][0])
        try:
            return Repeat(count=count, body=body)
        except ValueError as exc:
            raise ProgramParseError(str(exc), line_no, toks[1][0]) from None

    def _check_integer_samples(self, duration, line_no, col, what):
        exact = duration * self.rate
        if abs(exact - round(exact)) > 1e-6:
            raise ProgramParseError(
                f"{what} of {duration} ns is not an integer number of samples at "
                f"{self.rate} GS/s",
                line_no,
                col,
            )


def parse_program(text: str, sample_rate: float, base_dir=None) -> PulseProgram:
    """Parse the line-oriented pulse-assembly format into a validated program."""
    return _Parser(text, sample_rate, base_dir).parse()


def _serialize_instruction(instr, lines, indent):
    pad = "  " * indent
    if isinstance(instr, PlayXY):
        lines.append(
            f"{pad}xy {instr.primitive_id} amp={instr.amplitude!r} "
            f"phase={instr.phase_offset!r}"
        )
    elif isinstance(instr, VirtualZ):
        lines.append(f"{pad}vz {instr.phase!r}")
    elif isinstance(instr, SetCarrier):
        lines.append(f"{pad}carrier {instr.frequency!r}")
    elif isinstance(instr, Delay):
        lines.append(f"{pad}delay {instr.duration!r}")
    elif isinstance(instr, PlayZ):
        head = (
            f"{pad}z rise={instr.rise_primitive_id} "
            f"hold={instr.hold_amplitude!r},{instr.hold_duration!r} "
            f"fall={instr.fall_primitive_id}"
        )
        if instr.body:
            lines.append(head + " {")
            for sub in instr.body:
                _serialize_instruction(sub, lines, indent + 1)
            lines.append(f"{pad}}}")
        else:
            lines.append(head)
    elif isinstance(instr, Repeat):
        lines.append(f"{pad}repeat {instr.count} {{")
        for sub in instr.body:
            _serialize_instruction(sub, lines, indent + 1)
        lines.append(f"{pad}}}")
    else:
        raise TypeError(f"cannot serialize {type(instr).__name__}")


def serialize_program(program: PulseProgram) -> str:
    """Inverse of parse_program (primitives are always emitted inline)."""
    lines = []
    for prim in program.primitives.values():
        values = " ".join(repr(s) for s in prim.samples)
        lines.append(f"prim {prim.id} {prim.kind} {values}")
    lines.append(f"carrier {program.initial_carrier!r}")
    for instr in program.instructions:
        _serialize_instruction(instr, lines, 0)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# binary waveform IO
# ---------------------------------------------------------------------------


def dump_waveform_binary(path, codes, sample_rate: float, dac_bits: int = 16) -> dict:
    """Write little-endian int16 samples plus a JSON sidecar with a sha256."""
    path = pathlib.Path(path)
    codes = np.asarray(codes)
    limit = 2 ** (dac_bits - 1) - 1
    if len(codes) and (codes.max() > limit or codes.min() < -limit - 1):
        raise ValueError(f"codes exceed {dac_bits}-bit range")
    payload = codes.astype("<i2").tobytes()
    path.write_bytes(payload)
    meta = {
        "sample_rate_gsps": sample_rate,
        "length": int(len(codes)),
        "dac_bits": dac_bits,
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2) + "\n")
    return meta


def load_waveform_binary(path) -> tuple:
    """Read samples + sidecar, verifying length and checksum."""
    path = pathlib.Path(path)
    payload = path.read_bytes()
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    if hashlib.sha256(payload).hexdigest() != meta["sha256"]:
        raise ValueError(f"checksum mismatch for {path}")
    codes = np.frombuffer(payload, dtype="<i2").astype(np.int32)
    if len(codes) != meta["length"]:
        raise ValueError(f"length mismatch for {path}")
    return codes, meta
