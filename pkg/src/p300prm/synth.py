"""Synthetic oddball-paradigm recordings with injected P300-like deflections.

Waveform model: white noise plus a 10 Hz rhythm with random phase per
channel, plus a Gaussian bump after every target stimulus projected onto the
electrodes through fixed per-subject gains.

Randomness comes from ``numpy.random.default_rng`` (PCG64). Per-session
streams are seeded with ``numpy.random.SeedSequence([seed, subject, session])``
and subject profiles with ``SeedSequence([seed, subject])``; this mixing is
part of the output contract and only changes with a release note.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import RejectedInput
from .signal import CHANNEL_NAMES, Recording, StimulusEvent, StimulusSchedule

FWHM_TO_SIGMA = 2.355
DEFAULT_ACTIVE = ("Pz", "P3", "P4", "Cz", "O1", "O2")


@dataclass
class SubjectProfile:
    p300_latency_ms: float = 350.0
    latency_jitter_ms: float = 25.0
    p300_amplitude_uv: float = 10.0
    amplitude_jitter: float = 0.2  # relative std
    p300_width_ms: float = 150.0
    electrode_gains: np.ndarray = field(default_factory=lambda: default_gains())
    noise_std_uv: float = 20.0
    background_alpha_uv: float = 2.0

    def __post_init__(self):
        self.electrode_gains = np.asarray(self.electrode_gains, dtype=np.float64)
        if self.electrode_gains.shape != (32,):
            raise RejectedInput("electrode_gains must have 32 entries")
        if np.any(self.electrode_gains < 0) or np.any(self.electrode_gains > 1) or not np.any(self.electrode_gains > 0):
            raise RejectedInput("electrode_gains must lie in [0, 1] with at least one positive entry")
        if min(self.latency_jitter_ms, self.amplitude_jitter, self.noise_std_uv, self.background_alpha_uv) < 0:
            raise RejectedInput("standard deviations and amplitudes must be non-negative")
        if self.p300_width_ms <= 0:
            raise RejectedInput("p300_width_ms must be positive")

    def active_electrodes(self, threshold: float = 0.5) -> list[str]:
        return [CHANNEL_NAMES[i] for i in np.flatnonzero(self.electrode_gains >= threshold)]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["electrode_gains"] = [float(g) for g in self.electrode_gains]
        return d


def default_gains(active=DEFAULT_ACTIVE) -> np.ndarray:
    g = np.zeros(32)
    for name in active:
        g[CHANNEL_NAMES.index(name)] = 1.0
    return g


@dataclass
class SynthConfig:
    subjects: int = 1
    sessions_per_subject: int = 4
    runs_per_session: int = 6
    trials_per_run: int = 20
    isi_ms: float = 400.0
    flash_ms: float = 100.0
    sample_rate_hz: float = 512.0
    seed: int = 0
    lead_in_s: float = 2.0
    run_gap_s: float = 2.0
    # late bump on non-target windows, used to probe the PRM's second active region
    distractor: bool = False
    distractor_window_ms: tuple = (750.0, 900.0)
    distractor_amplitude_uv: Optional[float] = None
    # per-session shift of the subject's mean latency (intra-subject variability)
    session_latency_shift_ms: float = 0.0
    profile_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        counts = (self.subjects, self.sessions_per_subject, self.runs_per_session, self.trials_per_run)
        if min(counts) < 1:
            raise RejectedInput("all counts must be >= 1")
        if self.isi_ms < self.flash_ms:
            raise RejectedInput("isi_ms must be >= flash_ms")
        if self.sample_rate_hz <= 0:
            raise RejectedInput("sample_rate_hz must be positive")
        self.distractor_window_ms = tuple(self.distractor_window_ms)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise RejectedInput(f"unknown SynthConfig keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["distractor_window_ms"] = list(self.distractor_window_ms)
        return d


def p300_template(
    latency_ms: float, amplitude_uv: float, width_ms: float, sample_rate_hz: float, duration_ms: float
) -> np.ndarray:
    """Gaussian bump sampled over ``[0, duration_ms)``.

    The center is snapped to the sample nearest ``latency_ms`` so the peak
    sample carries exactly ``amplitude_uv``.
    """
    if min(latency_ms, width_ms, sample_rate_hz, duration_ms) <= 0 or amplitude_uv < 0:
        raise RejectedInput("template arguments must be positive")
    if latency_ms >= duration_ms:
        raise RejectedInput("latency must fall inside the template duration")
    n = int(math.ceil(duration_ms * sample_rate_hz / 1000.0 - 1e-9))
    k = np.arange(n)
    center = math.floor(latency_ms * sample_rate_hz / 1000.0 + 0.5)
    sigma = width_ms / FWHM_TO_SIGMA * sample_rate_hz / 1000.0
    return amplitude_uv * np.exp(-((k - center) ** 2) / (2.0 * sigma**2))


def sample_subject(seed, overrides: Optional[dict] = None, active=DEFAULT_ACTIVE) -> SubjectProfile:
    """Draw a subject: latency U(280, 420) ms, amplitude U(5, 15) uV, gains U(0.5, 1) on ``active``, U(0, 0.1) elsewhere."""
    rng = np.random.default_rng(seed)
    latency = rng.uniform(280.0, 420.0)
    amplitude = rng.uniform(5.0, 15.0)
    gains = rng.uniform(0.0, 0.1, size=32)
    idx = [CHANNEL_NAMES.index(name) for name in active]
    gains[idx] = rng.uniform(0.5, 1.0, size=len(idx))
    profile = SubjectProfile(p300_latency_ms=latency, p300_amplitude_uv=amplitude, electrode_gains=gains)
    if overrides:
        profile = dataclasses.replace(profile, **overrides)
    return profile


def subject_profile(cfg: SynthConfig, subject: int) -> SubjectProfile:
    return sample_subject(np.random.SeedSequence([cfg.seed, subject]), cfg.profile_overrides)


def make_schedule(cfg: SynthConfig, rng: np.random.Generator) -> StimulusSchedule:
    isi = cfg.isi_ms / 1000.0
    events = []
    k = 0  # events within the current run
    run_start = cfg.lead_in_s
    for run in range(1, cfg.runs_per_session + 1):
        target = int(rng.integers(1, 7))
        k = 0
        for trial in range(1, cfg.trials_per_run + 1):
            for image in rng.permutation(6) + 1:
                onset = round(run_start + k * isi, 9)
                events.append(StimulusEvent(onset, int(image), bool(image == target), run, trial))
                k += 1
        run_start = round(run_start + k * isi + cfg.run_gap_s, 9)
    return StimulusSchedule(events)


def generate_session(
    profile: SubjectProfile, cfg: SynthConfig, subject: int, session: int
) -> tuple[Recording, StimulusSchedule]:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, subject, session]))
    fs = cfg.sample_rate_hz
    schedule = make_schedule(cfg, rng)
    duration = schedule.events[-1].onset_s + 2.0
    n = int(math.ceil(duration * fs))

    x = rng.normal(0.0, 1.0, size=(n, 32)) * profile.noise_std_uv
    phase = rng.uniform(0.0, 2 * np.pi, size=32)
    t = np.arange(n) / fs
    x += profile.background_alpha_uv * np.sin(2 * np.pi * 10.0 * t[:, None] + phase)

    latency = profile.p300_latency_ms + rng.normal(0.0, 1.0) * cfg.session_latency_shift_ms
    span_ms = 1000.0
    lo_ms, hi_ms = cfg.distractor_window_ms
    distractor_amp = cfg.distractor_amplitude_uv
    if distractor_amp is None:
        distractor_amp = 0.5 * profile.p300_amplitude_uv
    for ev in schedule.events:
        # draws happen for every event so enabling the distractor leaves target jitter unchanged
        lat = latency + rng.normal() * profile.latency_jitter_ms
        amp = profile.p300_amplitude_uv * (1.0 + rng.normal() * profile.amplitude_jitter)
        late = rng.uniform(lo_ms, hi_ms)
        if ev.is_target:
            bump = p300_template(min(max(lat, 1.0), span_ms - 1.0), max(amp, 0.0), profile.p300_width_ms, fs, span_ms)
        elif cfg.distractor:
            bump = p300_template(late, distractor_amp, profile.p300_width_ms, fs, span_ms)
        else:
            continue
        start = int(math.floor(ev.onset_s * fs + 0.5))
        stop = min(start + len(bump), n)
        x[start:stop] += bump[: stop - start, None] * profile.electrode_gains
    return Recording(fs, x), schedule


def generate_subject(cfg: SynthConfig, subject: int):
    """All sessions of one subject as ``[(recording, schedule), ...]``."""
    profile = subject_profile(cfg, subject)
    return profile, [generate_session(profile, cfg, subject, s) for s in range(1, cfg.sessions_per_subject + 1)]
