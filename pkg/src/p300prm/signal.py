"""Zero-phase Butterworth bandpass filtering, decimation and window extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .errors import RejectedInput

MODEL_RATE_HZ = 32
WINDOW_STEPS = 32
CHANNEL_NAMES = (
    "Fp1", "AF3", "F7", "F3", "FC1", "FC5", "T7", "C3",
    "CP1", "CP5", "P7", "P3", "Pz", "PO3", "O1", "Oz",
    "O2", "PO4", "P4", "P8", "CP6", "CP2", "C4", "T8",
    "FC6", "FC2", "F4", "F8", "AF4", "Fp2", "Fz", "Cz",
)  # fmt: skip


@dataclass(frozen=True)
class Section:
    b0: float
    b1: float
    b2: float
    a1: float
    a2: float

    def as_row(self) -> list[float]:
        return [self.b0, self.b1, self.b2, 1.0, self.a1, self.a2]

    def poles(self) -> np.ndarray:
        return np.roots([1.0, self.a1, self.a2])


@dataclass(frozen=True)
class BiquadCascade:
    sections: tuple[Section, ...]
    low_hz: float
    high_hz: float
    sample_rate_hz: float
    prototype_order: int

    @property
    def overall_order(self) -> int:
        return 2 * self.prototype_order

    @property
    def pad_length(self) -> int:
        return 3 * (2 * self.overall_order + 1)

    def sos(self) -> np.ndarray:
        return np.array([s.as_row() for s in self.sections])

    def max_pole_modulus(self) -> float:
        return max(float(np.max(np.abs(s.poles()))) for s in self.sections)

    def response(self, freqs_hz) -> np.ndarray:
        """Complex single-pass response H(e^{j 2 pi f / fs}) at the given frequencies."""
        z = np.exp(2j * np.pi * np.asarray(freqs_hz, dtype=np.float64) / self.sample_rate_hz)
        h = np.ones_like(z)
        for s in self.sections:
            h = h * (s.b0 + s.b1 / z + s.b2 / z**2) / (1.0 + s.a1 / z + s.a2 / z**2)
        return h


@dataclass
class Recording:
    sample_rate_hz: float
    samples: np.ndarray  # (n_samples, 32), microvolts
    channel_names: tuple[str, ...] = CHANNEL_NAMES

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[1] != 32 or len(self.channel_names) != 32:
            raise RejectedInput(f"recording must have exactly 32 channels, got shape {self.samples.shape}")
        if self.samples.shape[0] < 1:
            raise RejectedInput("recording has no samples")
        if self.sample_rate_hz < MODEL_RATE_HZ:
            raise RejectedInput(f"sample rate {self.sample_rate_hz} Hz is below {MODEL_RATE_HZ} Hz")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class StimulusEvent:
    onset_s: float
    image_id: int
    is_target: bool
    run: int
    trial: int


@dataclass
class StimulusSchedule:
    events: list[StimulusEvent] = field(default_factory=list)

    def __len__(self):
        return len(self.events)

    def validate(self, isi_s: float = 0.4, tolerance_s: float = 0.0) -> None:
        onsets = [e.onset_s for e in self.events]
        if any(b <= a for a, b in zip(onsets, onsets[1:])):
            raise RejectedInput("stimulus onsets must be strictly increasing")
        trials: dict[tuple[int, int], list[StimulusEvent]] = {}
        for e in self.events:
            trials.setdefault((e.run, e.trial), []).append(e)
        for key, evs in trials.items():
            if sorted(e.image_id for e in evs) != [1, 2, 3, 4, 5, 6]:
                raise RejectedInput(f"run/trial {key} does not show each image exactly once")
            if sum(e.is_target for e in evs) != 1:
                raise RejectedInput(f"run/trial {key} does not have exactly one target")
        for a, b in zip(self.events, self.events[1:]):
            if a.run == b.run and abs((b.onset_s - a.onset_s) - isi_s) > tolerance_s + 1e-9:
                raise RejectedInput(f"onsets {a.onset_s} and {b.onset_s} in run {a.run} are not one ISI apart")


@dataclass
class EEGWindow:
    data: np.ndarray  # (32 timesteps, 32 electrodes)
    label: int
    subject: int = 0
    session: int = 0
    run: int = 0
    trial: int = 0
    image_id: int = 0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (WINDOW_STEPS, 32):
            raise RejectedInput(f"window must be 32x32, got {self.data.shape}")
        if self.label not in (0, 1):
            raise RejectedInput(f"label must be 0 or 1, got {self.label}")
        if not np.all(np.isfinite(self.data)):
            raise RejectedInput("window contains non-finite values")

    @property
    def meta(self) -> dict:
        return {
            "subject": self.subject,
            "session": self.session,
            "run": self.run,
            "trial": self.trial,
            "image_id": self.image_id,
        }


def _bilinear(s: complex, fs: float) -> complex:
    return (2.0 * fs + s) / (2.0 * fs - s)


def design_bandpass(low_hz: float, high_hz: float, sample_rate_hz: float, prototype_order: int = 3) -> BiquadCascade:
    """Butterworth bandpass of overall order ``2 * prototype_order`` as biquad sections.

    Analog lowpass prototype, lowpass-to-bandpass transform on prewarped edges,
    bilinear transform. Gain is set to one at the center frequency.
    """
    if not (0 < low_hz < high_hz < sample_rate_hz / 2):
        raise RejectedInput(
            f"need 0 < low ({low_hz}) < high ({high_hz}) < Nyquist ({sample_rate_hz / 2}) Hz"
        )
    if int(prototype_order) != prototype_order or prototype_order < 1:
        raise RejectedInput(f"prototype_order must be a positive integer, got {prototype_order}")
    n = int(prototype_order)
    fs = float(sample_rate_hz)
    w_lo = 2 * fs * math.tan(math.pi * low_hz / fs)
    w_hi = 2 * fs * math.tan(math.pi * high_hz / fs)
    bw = w_hi - w_lo
    w0_sq = w_lo * w_hi

    proto = [complex(math.cos(math.pi * (2 * k + n + 1) / (2 * n)), math.sin(math.pi * (2 * k + n + 1) / (2 * n))) for k in range(n)]
    analog = []
    for p in proto:
        root = np.sqrt(complex((p * bw) ** 2 - 4 * w0_sq))
        analog += [(p * bw + root) / 2, (p * bw - root) / 2]
    digital = [_bilinear(s, fs) for s in analog]

    # one conjugate pair (or two real poles) per section
    upper = [z for z in digital if z.imag > 1e-12]
    real = sorted(z.real for z in digital if abs(z.imag) <= 1e-12)
    if 2 * len(upper) + len(real) != 2 * n or len(real) % 2:
        raise ArithmeticError("pole pairing failed")
    denominators = [(-2 * z.real, abs(z) ** 2) for z in upper]
    denominators += [(-(real[i] + real[i + 1]), real[i] * real[i + 1]) for i in range(0, len(real), 2)]
    # nearest-to-circle pair last, as is customary for SOS ordering
    denominators.sort(key=lambda a: a[1])

    w_center = 2 * math.atan(math.sqrt(w0_sq) / (2 * fs))
    zc = complex(math.cos(w_center), math.sin(w_center))
    h_center = 1.0 + 0j
    for a1, a2 in denominators:
        h_center *= (1 - zc**-2) / (1 + a1 / zc + a2 / zc**2)
    g = (1.0 / abs(h_center)) ** (1.0 / n)
    sections = tuple(Section(g, 0.0, -g, float(a1), float(a2)) for a1, a2 in denominators)
    return BiquadCascade(sections, float(low_hz), float(high_hz), fs, n)


def _odd_pad(x: np.ndarray, n: int) -> np.ndarray:
    left = 2 * x[:1] - x[n:0:-1]
    right = 2 * x[-1:] - x[-2 : -n - 2 : -1]
    return np.concatenate([left, x, right], axis=0)


def _forward_backward(sos: np.ndarray, zi: np.ndarray, x: np.ndarray) -> np.ndarray:
    y, _ = scipy.signal.sosfilt(sos, x, axis=0, zi=_scaled_zi(zi, x[0]))
    y = y[::-1]
    y, _ = scipy.signal.sosfilt(sos, y, axis=0, zi=_scaled_zi(zi, y[0]))
    return y[::-1]


def _scaled_zi(zi: np.ndarray, first: np.ndarray) -> np.ndarray:
    # steady-state section state for a signal that has sat at its first value forever
    first = np.asarray(first)
    return zi.reshape(zi.shape + (1,) * first.ndim) * first


def filtfilt(cascade: BiquadCascade, x) -> np.ndarray:
    """Zero-phase filtering along axis 0.

    Odd-reflection padding of ``cascade.pad_length`` samples at both ends and
    steady-state initial section states. The forward-backward pass is averaged
    with the mirrored backward-forward pass, so ``filtfilt(x[::-1])`` equals
    ``filtfilt(x)[::-1]`` to rounding, edges included.
    """
    x = np.asarray(x, dtype=np.float64)
    pad = cascade.pad_length
    if x.shape[0] <= pad:
        raise RejectedInput(f"sequence of length {x.shape[0]} is too short for padding of {pad} samples")
    if not np.all(np.isfinite(x)):
        raise RejectedInput("sequence contains non-finite values")
    sos = cascade.sos()
    zi = scipy.signal.sosfilt_zi(sos)
    ext = _odd_pad(x, pad)
    y = 0.5 * (_forward_backward(sos, zi, ext) + _forward_backward(sos, zi, ext[::-1])[::-1])
    return np.ascontiguousarray(y[pad:-pad])


def decimate(x, factor: int) -> np.ndarray:
    """Keep every ``factor``-th sample starting with the first (no anti-alias filtering)."""
    if int(factor) != factor or factor <= 0:
        raise RejectedInput(f"decimation factor must be a positive integer, got {factor}")
    return np.asarray(x)[:: int(factor)]


def onset_to_sample(onset_s: float, rate_hz: float = MODEL_RATE_HZ) -> int:
    # round half up; Python's round() would bank-round 12.5 -> 12
    return int(math.floor(onset_s * rate_hz + 0.5))


def extract_windows(
    recording32: Recording, schedule: StimulusSchedule, subject: int = 0, session: int = 0
) -> list[EEGWindow]:
    if recording32.sample_rate_hz != MODEL_RATE_HZ:
        raise RejectedInput(f"windows are cut at {MODEL_RATE_HZ} Hz, recording is at {recording32.sample_rate_hz} Hz")
    n = recording32.n_samples
    out = []
    for idx, ev in enumerate(schedule.events):
        start = onset_to_sample(ev.onset_s)
        if start < 0 or start + WINDOW_STEPS > n:
            raise RejectedInput(
                f"event {idx} (onset {ev.onset_s} s) needs samples [{start}, {start + WINDOW_STEPS}) "
                f"but the recording has {n}"
            )
        out.append(
            EEGWindow(
                data=recording32.samples[start : start + WINDOW_STEPS].copy(),
                label=int(bool(ev.is_target)),
                subject=subject,
                session=session,
                run=ev.run,
                trial=ev.trial,
                image_id=ev.image_id,
            )
        )
    return out


def decimation_factor(sample_rate_hz: float) -> int:
    factor = sample_rate_hz / MODEL_RATE_HZ
    if factor != int(factor) or factor < 1:
        raise RejectedInput(f"sample rate {sample_rate_hz} Hz is not an integer multiple of {MODEL_RATE_HZ} Hz")
    return int(factor)


def preprocess_recording(
    recording: Recording,
    schedule: StimulusSchedule,
    cascade: BiquadCascade,
    subject: int = 0,
    session: int = 0,
) -> list[EEGWindow]:
    """filtfilt every channel, decimate to 32 Hz, cut one window per event."""
    if cascade.sample_rate_hz != recording.sample_rate_hz:
        raise RejectedInput(
            f"filter designed for {cascade.sample_rate_hz} Hz but recording is at {recording.sample_rate_hz} Hz"
        )
    factor = decimation_factor(recording.sample_rate_hz)
    filtered = filtfilt(cascade, recording.samples)
    low = Recording(MODEL_RATE_HZ, decimate(filtered, factor), recording.channel_names)
    return extract_windows(low, schedule, subject=subject, session=session)
