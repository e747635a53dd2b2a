"""Control-line transfer functions and compensation filters.

Three families live here:

* analytic transfer-function descriptors — the Gaussian low-pass model of the
  cryogenic filter, the bounded inverse used for pre-distortion
  (H_inv(f) = H_qubit / max[H_gauss(f), 10^(-G_max/20)] * W(f)), products,
  and sampled responses — plus frequency-domain application to waveforms;
* linear-phase FIR synthesis (frequency sampling + least squares on the
  symmetric half) with 16-bit quantization for fixed-point hardware;
* first-order IIR correction sections that invert measured multi-exponential
  settling tails on the baseband flux path.

Frequencies are GHz, times ns, sample rates GS/s throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import NonInvertibleError
from .waveform import Waveform


# ---------------------------------------------------------------------------
# transfer-function descriptors
# ---------------------------------------------------------------------------


class TransferFunction:
    """Base class for frequency-response descriptors.

    ``response(f)`` evaluates the descriptor on frequencies in GHz. Analytic
    kinds are zero-phase and return real values; sampled kinds return complex
    values. Negative frequencies follow H(-f) = conj(H(f)) so that filtered
    real signals stay real.
    """

    kind = "abstract"

    def response(self, f):
        raise NotImplementedError

    def magnitude(self, f):
        return np.abs(self.response(f))

    def __call__(self, f):
        return self.response(f)


@dataclass(frozen=True)
class GaussianLowpass(TransferFunction):
    """H(f) = exp(-(f sigma)^2 / 2) with |H(f_c)|^2 = 1/2.

    The 3-dB convention fixes sigma = sqrt(ln 2) / f_c.
    """

    f_c: float
    kind = "gaussian-lowpass"

    def __post_init__(self):
        if not self.f_c > 0:
            raise ValueError("f_c must be positive")

    @property
    def sigma(self) -> float:
        return math.sqrt(math.log(2.0)) / self.f_c

    def response(self, f):
        f = np.asarray(f, dtype=float)
        return np.exp(-((f * self.sigma) ** 2) / 2.0)


@dataclass(frozen=True)
class FlatResponse(TransferFunction):
    """All-ones response; the multiplicative identity for compose()."""

    kind = "flat"

    def response(self, f):
        return np.ones_like(np.asarray(f, dtype=float))


@dataclass(frozen=True)
class BoundedInverse(TransferFunction):
    """Gain-capped inverse of a Gaussian channel, windowed at high frequency.

    H_inv(f) = H_qubit / max[H_gauss(f), 10^(-g_max_db/20)] * W(f), where
    H_qubit = H_gauss(f_q) normalizes the passband so the compensated channel
    has unit relative gain at the qubit frequency, the cap bounds the inverse
    where the channel rolls off into the noise, and W is a Gaussian window
    (3-dB cutoff ``window_cutoff``) that tapers the boosted high end.
    """

    gauss: GaussianLowpass
    f_q: float
    g_max_db: float = 50.0
    window_cutoff: float = 1.0
    kind = "bounded-inverse"

    def __post_init__(self):
        if not isinstance(self.gauss, GaussianLowpass):
            raise ValueError("bounded_inverse requires a Gaussian channel descriptor")
        if not self.f_q > 0:
            raise ValueError("f_q must be positive")
        if not self.g_max_db > 0:
            raise ValueError("g_max_db must be positive")
        if not self.window_cutoff > 0:
            raise ValueError("window_cutoff must be positive")

    @property
    def window(self) -> GaussianLowpass:
        return GaussianLowpass(self.window_cutoff)

    @property
    def h_qubit(self) -> float:
        return float(self.gauss.response(self.f_q))

    @property
    def floor(self) -> float:
        return 10.0 ** (-self.g_max_db / 20.0)

    @property
    def floor_frequency(self) -> float:
        """Frequency where the gain cap engages: H_gauss(f) = floor."""
        return math.sqrt(2.0 * math.log(1.0 / self.floor)) / self.gauss.sigma

    def response(self, f):
        f = np.asarray(f, dtype=float)
        denom = np.maximum(self.gauss.response(f), self.floor)
        return self.h_qubit / denom * self.window.response(f)


@dataclass(frozen=True)
class ProductResponse(TransferFunction):
    """Pointwise product of descriptors."""

    factors: tuple
    kind = "product"

    def response(self, f):
        out = self.factors[0].response(f)
        for factor in self.factors[1:]:
            out = out * factor.response(f)
        return out


@dataclass(frozen=True)
class SampledResponse(TransferFunction):
    """Complex response tabulated on a non-negative frequency grid.

    Evaluation interpolates linearly on the grid, clamps beyond its edges,
    and uses conjugate symmetry for negative frequencies.
    """

    freqs_ghz: np.ndarray
    values: np.ndarray
    kind = "sampled"

    def __post_init__(self):
        freqs = np.asarray(self.freqs_ghz, dtype=float)
        vals = np.asarray(self.values, dtype=complex)
        if freqs.ndim != 1 or freqs.shape != vals.shape:
            raise ValueError("frequency grid and values must be matching 1-D arrays")
        if np.any(np.diff(freqs) <= 0) or freqs[0] < 0:
            raise ValueError("frequency grid must be non-negative and increasing")
        object.__setattr__(self, "freqs_ghz", freqs)
        object.__setattr__(self, "values", vals)

    def response(self, f):
        f = np.asarray(f, dtype=float)
        mag = np.interp(np.abs(f), self.freqs_ghz, self.values.real) + 1j * np.interp(
            np.abs(f), self.freqs_ghz, self.values.imag
        )
        return np.where(f >= 0, mag, np.conj(mag))


def gaussian_lowpass(f_c: float) -> GaussianLowpass:
    """Gaussian low-pass descriptor with 3-dB cutoff ``f_c`` (GHz)."""
    return GaussianLowpass(f_c)


def bounded_inverse(
    gauss: GaussianLowpass,
    f_q: float,
    g_max_db: float = 50.0,
    window_cutoff: float = 1.0,
) -> BoundedInverse:
    """Bounded-inverse pre-distortion descriptor for a Gaussian channel."""
    return BoundedInverse(gauss=gauss, f_q=f_q, g_max_db=g_max_db, window_cutoff=window_cutoff)


def identity_response() -> FlatResponse:
    return FlatResponse()


def compose(a: TransferFunction, b: TransferFunction) -> TransferFunction:
    """Pointwise product of two descriptors."""
    if isinstance(a, SampledResponse) and isinstance(b, SampledResponse):
        if a.freqs_ghz.shape != b.freqs_ghz.shape or not np.array_equal(
            a.freqs_ghz, b.freqs_ghz
        ):
            raise ValueError("sampled descriptors must share an identical frequency grid")
        return SampledResponse(a.freqs_ghz, a.values * b.values)
    return ProductResponse(factors=(a, b))


_PREDISTORT_KINDS = ("bounded-inverse", "product")


def apply_transfer(w: Waveform, h: TransferFunction, mode: str = "filter") -> Waveform:
    """Apply a transfer function to a real waveform in the frequency domain.

    The waveform is zero-padded to at least 4x its length (next power of two)
    to suppress circular-convolution wraparound, multiplied by the response
    on the DFT grid, and trimmed back to the input length. Callers should
    embed pulses with quiet margins; zero-phase filtering rings
    symmetrically.
    """
    if len(w) < 2:
        raise ValueError("waveform must have at least 2 samples")
    if np.iscomplexobj(w.samples):
        raise ValueError("apply_transfer operates on real waveforms")
    if mode not in ("filter", "predistort"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "predistort" and h.kind not in _PREDISTORT_KINDS:
        raise ValueError(
            f"predistort mode requires a bounded-inverse or product descriptor, got {h.kind!r}"
        )
    n = len(w)
    nfft = 1 << max(3, int(np.ceil(np.log2(4 * n))))
    freqs = np.fft.rfftfreq(nfft, d=1.0 / w.sample_rate)  # GHz
    spectrum = np.fft.rfft(w.samples, nfft) * h.response(freqs)
    out = np.fft.irfft(spectrum, nfft)[:n]
    return Waveform(out, w.sample_rate)


# ---------------------------------------------------------------------------
# FIR synthesis and quantization
# ---------------------------------------------------------------------------

INT16_FULL_SCALE = 32767


@dataclass(frozen=True)
class FirFilter:
    """Linear-phase FIR taps, float and (optionally) quantized int16."""

    taps_float: np.ndarray
    sample_rate: float
    taps_int16: np.ndarray = None

    def __post_init__(self):
        taps = np.asarray(self.taps_float, dtype=float)
        object.__setattr__(self, "taps_float", taps)
        if self.taps_int16 is not None:
            q = np.asarray(self.taps_int16, dtype=np.int64)
            object.__setattr__(self, "taps_int16", q)
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")

    @property
    def n_taps(self) -> int:
        return len(self.taps_float)


def _contains_bounded_inverse(h: TransferFunction) -> BoundedInverse | None:
    if isinstance(h, BoundedInverse):
        return h
    if isinstance(h, ProductResponse):
        for factor in h.factors:
            found = _contains_bounded_inverse(factor)
            if found is not None:
                return found
    return None


def synthesize_fir(
    target: TransferFunction, n_taps: int, sample_rate: float, grid_points: int = 512
) -> FirFilter:
    """Design an even-length (Type-II) linear-phase FIR matching |target|.

    The target magnitude is sampled on a dense grid from dc to Nyquist with
    the Nyquist point forced to zero (a Type-II response vanishes there
    structurally), and the symmetric half-taps are solved by least squares
    against the real amplitude response. The returned float taps are exactly
    symmetric by construction.
    """
    if n_taps % 2 != 0 or n_taps < 2:
        raise ValueError("n_taps must be even: Type-II linear-phase design")
    if grid_points < 512:
        raise ValueError("grid_points must be at least 512")
    inv = _contains_bounded_inverse(target)
    if inv is not None and not sample_rate > 2.0 * inv.f_q:
        raise ValueError(
            f"sample_rate {sample_rate} GS/s cannot represent the {inv.f_q} GHz band"
        )
    nyquist = sample_rate / 2.0
    grid = np.linspace(0.0, nyquist, grid_points)
    gain = np.abs(np.asarray(target.response(grid), dtype=complex))
    gain[-1] = 0.0  # Type-II constraint made explicit in the design target
    half = n_taps // 2
    delay = (n_taps - 1) / 2.0
    # amplitude response of a symmetric even-length filter:
    #   A(f) = sum_k 2 h[k] cos(2 pi f (delay - k) / fs), k = 0..half-1
    design = 2.0 * np.cos(
        2.0 * np.pi * np.outer(grid, delay - np.arange(half)) / sample_rate
    )
    half_taps, *_ = np.linalg.lstsq(design, gain, rcond=None)
    taps = np.concatenate([half_taps, half_taps[::-1]])
    return FirFilter(taps_float=taps, sample_rate=sample_rate)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_taps(f: FirFilter) -> FirFilter:
    """Normalize to max |tap| and quantize to signed 16-bit integers.

    Rounds half away from zero. Idempotent: re-quantizing quantized taps is a
    fixed point, and positive rescaling of the float taps does not change the
    result.
    """
    taps = f.taps_float
    peak = np.max(np.abs(taps))
    if peak == 0:
        raise ValueError("cannot quantize all-zero taps")
    scaled = taps / peak * INT16_FULL_SCALE
    q = _round_half_away(scaled).astype(np.int64)
    return FirFilter(taps_float=taps, sample_rate=f.sample_rate, taps_int16=q)


def fir_response(f: FirFilter, grid) -> SampledResponse:
    """Complex response sum_k h[k] exp(-2 pi i f k / fs) on ``grid`` (GHz).

    Uses the quantized taps when present, otherwise the float taps.
    """
    taps = f.taps_int16 if f.taps_int16 is not None else f.taps_float
    grid = np.asarray(grid, dtype=float)
    phases = np.exp(
        -2j * np.pi * np.outer(grid, np.arange(len(taps))) / f.sample_rate
    )
    return SampledResponse(grid, phases @ np.asarray(taps, dtype=float))


# ---------------------------------------------------------------------------
# IIR settling correction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IirSection:
    """First-order section y[n] = b0 x[n] + b1 x[n-1] - a1 y[n-1]."""

    b0: float
    b1: float
    a1: float


@dataclass(frozen=True)
class IirCorrector:
    """Cascade of first-order sections inverting exponential settling tails."""

    sections: tuple
    sample_rate: float
    source_exponentials: tuple

    @property
    def is_identity(self) -> bool:
        return len(self.sections) == 0

    def direct_form(self) -> tuple[np.ndarray, np.ndarray, int]:
        """Collapse the cascade to one direct-form filter.

        Returns (b, a, coefficient_count), where the count excludes the
        leading unit a[0] — the number of multipliers a direct-form hardware
        block needs. No claim is made about any vendor's tap-counting
        convention.
        """
        b = np.array([1.0])
        a = np.array([1.0])
        for s in self.sections:
            b = np.polymul(b, [s.b0, s.b1])
            a = np.polymul(a, [1.0, s.a1])
        return b, a, len(b) + len(a) - 1


def design_iir_corrector(exponentials: Sequence[tuple], sample_rate: float) -> IirCorrector:
    """One first-order correction section per exponential settling term.

    For a channel whose unit step acquires a tail A exp(-t/tau), the sampled
    step response is inverted exactly in the discrete domain: with
    lam = exp(-T/tau) the section is

        b0 = 1/(1+A),  b1 = -lam/(1+A),  a1 = -(lam+A)/(1+A),

    i.e. a zero matched at lam and a pole at (lam+A)/(1+A); dc gain is
    exactly 1. Per-section composition with the matching distortion is the
    exact discrete identity; a multi-term cascade inverts the summed model to
    first order in the amplitudes.
    """
    if not sample_rate > 0:
        raise ValueError("sample_rate must be positive")
    sections = []
    for amp, tau in exponentials:
        if abs(amp) >= 1.0:
            raise NonInvertibleError(
                f"settling amplitude {amp} has magnitude >= 1; step response "
                "crosses zero and cannot be stably inverted"
            )
        if not tau > 0:
            raise ValueError(f"tau must be positive, got {tau}")
        lam = math.exp(-1.0 / (sample_rate * tau))
        a1 = -(lam + amp) / (1.0 + amp)
        if abs(a1) >= 1.0:
            raise NonInvertibleError(
                f"term (A={amp}, tau={tau} ns) yields an unstable corrector pole "
                f"at {-a1:.6f} for sample rate {sample_rate} GS/s"
            )
        sections.append(IirSection(b0=1.0 / (1.0 + amp), b1=-lam / (1.0 + amp), a1=a1))
    return IirCorrector(
        sections=tuple(sections),
        sample_rate=sample_rate,
        source_exponentials=tuple((float(a), float(t)) for a, t in exponentials),
    )


def apply_iir(w: Waveform, c: IirCorrector, form: str = "cascade") -> Waveform:
    """Run a waveform through the corrector (causal, zero initial conditions).

    ``form="direct"`` applies the collapsed single direct-form filter instead
    of the section cascade; the two are the same filter.
    """
    if w.sample_rate != c.sample_rate:
        raise ValueError(
            f"waveform rate {w.sample_rate} GS/s does not match corrector rate "
            f"{c.sample_rate} GS/s"
        )
    if c.is_identity:
        return w
    if form == "direct":
        b, a, _ = c.direct_form()
        return Waveform(lfilter(b, a, w.samples), w.sample_rate)
    if form != "cascade":
        raise ValueError(f"unknown form {form!r}")
    out = np.asarray(w.samples, dtype=float)
    for s in c.sections:
        out = lfilter([s.b0, s.b1], [1.0, s.a1], out)
    return Waveform(out, w.sample_rate)


# ---------------------------------------------------------------------------
# design documents
# ---------------------------------------------------------------------------


def design_document(obj, provenance: str = "") -> dict:
    """Serializable record of a designed filter."""
    if isinstance(obj, FirFilter):
        return {
            "kind": "fir",
            "parameters": {"n_taps": obj.n_taps},
            "taps_float": [float(t) for t in obj.taps_float],
            "taps_int16": None
            if obj.taps_int16 is None
            else [int(t) for t in obj.taps_int16],
            "sample_rate_gsps": obj.sample_rate,
            "provenance": provenance,
        }
    if isinstance(obj, IirCorrector):
        b, a, count = obj.direct_form()
        return {
            "kind": "iir",
            "parameters": {
                "source_exponentials": [list(t) for t in obj.source_exponentials],
                "sections": [[s.b0, s.b1, s.a1] for s in obj.sections],
                "direct_form_b": [float(x) for x in b],
                "direct_form_a": [float(x) for x in a],
                "direct_form_coefficient_count": count,
            },
            "taps_float": None,
            "taps_int16": None,
            "sample_rate_gsps": obj.sample_rate,
            "provenance": provenance,
        }
    if isinstance(obj, GaussianLowpass):
        return {
            "kind": obj.kind,
            "parameters": {"f_c_ghz": obj.f_c},
            "taps_float": None,
            "taps_int16": None,
            "sample_rate_gsps": None,
            "provenance": provenance,
        }
    if isinstance(obj, BoundedInverse):
        return {
            "kind": obj.kind,
            "parameters": {
                "f_c_ghz": obj.gauss.f_c,
                "f_q_ghz": obj.f_q,
                "g_max_db": obj.g_max_db,
                "window_cutoff_ghz": obj.window_cutoff,
            },
            "taps_float": None,
            "taps_int16": None,
            "sample_rate_gsps": None,
            "provenance": provenance,
        }
    raise ValueError(f"no design-document form for {type(obj).__name__}")
