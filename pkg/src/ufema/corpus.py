"""Synthetic speaker/noise corpus, WAV I/O and SNR mixing.

Everything here is a pure function of its seeds: the same arguments always
give bit-identical sample arrays. Seeds are expanded with
``numpy.random.SeedSequence`` so that distinct call sites never share a stream.
"""
from __future__ import annotations

import wave
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    AudioFormatError,
    DegenerateInputError,
    InvalidArgumentError,
    PoolViolationError,
)

SAMPLE_RATE = 16000

NOISE_KINDS = ("noise", "music", "babble")
CONDITION_KINDS = NOISE_KINDS + ("clean",)
POOLS = ("train", "test")

# Train and test noise recordings draw seeds from disjoint half-open ranges.
POOL_SEED_RANGES = {
    "train": (0, 1_000_000),
    "test": (1_000_000, 2_000_000),
}

# Namespaces keep the seed streams of different generators apart.
_NS_SPEAKER = 11
_NS_UTTERANCE = 12
_NS_NOISE = {"noise": 21, "music": 22, "babble": 23}
_NS_BABBLE_VOICE = 24
_NS_CROP = 31

# Formant multipliers for a small vowel inventory (F1..F4).
_VOWELS = np.array([
    [1.00, 1.00, 1.00, 1.00],
    [0.75, 1.22, 1.04, 1.00],
    [1.28, 0.86, 0.97, 1.00],
    [0.86, 0.80, 0.95, 0.99],
    [1.12, 1.12, 1.03, 1.01],
])


def _rng(*entropy: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(e) for e in entropy]))


@dataclass(frozen=True)
class Waveform:
    """Mono audio. ``samples`` is stored read-only."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise InvalidArgumentError(f"waveform must be 1-D, got shape {x.shape}")
        if x.size == 0:
            raise InvalidArgumentError("waveform is empty")
        if not np.all(np.isfinite(x)):
            raise InvalidArgumentError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise InvalidArgumentError(f"sample_rate must be positive, got {self.sample_rate}")
        if x is self.samples:
            x = x.copy()
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate

    def power(self) -> float:
        return float(np.mean(self.samples ** 2))


@dataclass(frozen=True)
class SpeakerSpec:
    speaker_id: int
    fundamental_hz: float
    formant_profile: tuple  # ((center_hz, bandwidth_hz, gain), ...)
    seed: int

    def __post_init__(self):
        if self.fundamental_hz <= 0:
            raise InvalidArgumentError("fundamental_hz must be positive")
        centers = [f[0] for f in self.formant_profile]
        if any(b <= a for a, b in zip(centers, centers[1:])):
            raise InvalidArgumentError("formant centers must be strictly increasing")

    @property
    def centers(self) -> np.ndarray:
        return np.array([f[0] for f in self.formant_profile])


def random_speaker(speaker_id: int, seed: int = 0) -> SpeakerSpec:
    """Draw a speaker: log-uniform pitch in [90, 240] Hz and four formants."""
    rng = _rng(_NS_SPEAKER, seed, speaker_id + 2**31)
    f0 = float(np.exp(rng.uniform(np.log(90.0), np.log(240.0))))
    centers = [rng.uniform(350, 850), rng.uniform(1000, 2200),
               rng.uniform(2350, 3200), rng.uniform(3350, 4300)]
    bandwidths = [rng.uniform(60, 120), rng.uniform(80, 160),
                  rng.uniform(100, 220), rng.uniform(150, 300)]
    gains = [1.0, rng.uniform(0.4, 0.9), rng.uniform(0.15, 0.5), rng.uniform(0.05, 0.25)]
    profile = tuple((float(c), float(b), float(g)) for c, b, g in zip(centers, bandwidths, gains))
    return SpeakerSpec(speaker_id, f0, profile, seed)


def _envelope(freqs: np.ndarray, centers, bandwidths, gains) -> np.ndarray:
    """Sum of Lorentzian resonances evaluated at ``freqs``."""
    out = np.full(freqs.shape, 0.01)
    for c, b, g in zip(centers, bandwidths, gains):
        out += g / (1.0 + ((freqs - c) / (0.5 * b)) ** 2)
    return out


def _voiced_segment(rng, spec: SpeakerSpec, f0_utt: float, n: int, sample_rate: int) -> np.ndarray:
    prof = np.array(spec.formant_profile)
    vowel = _VOWELS[rng.integers(len(_VOWELS))]
    centers = prof[:, 0] * vowel * (1.0 + rng.normal(0.0, 0.02, size=4))
    bandwidths, gains = prof[:, 1], prof[:, 2]

    f_start = f0_utt * np.exp(rng.normal(0.0, 0.04))
    glide = rng.uniform(-0.08, 0.08)
    f0 = f_start * (1.0 + glide * np.linspace(0.0, 1.0, n))
    phase = 2.0 * np.pi * np.cumsum(f0) / sample_rate

    f_mean = float(f0.mean())
    n_harm = int(min(7600.0, 0.475 * sample_rate) // (f_start * (1.0 + max(glide, 0.0))))
    k = np.arange(1, n_harm + 1)
    amps = _envelope(k * f_mean, centers, bandwidths, gains) / np.sqrt(k)
    offsets = rng.uniform(0.0, 2.0 * np.pi, size=n_harm)
    seg = amps @ np.cos(np.outer(k, phase) + offsets[:, None])

    ramp = min(n // 2, int(0.02 * sample_rate))
    env = np.ones(n)
    if ramp > 0:
        r = np.sin(0.5 * np.pi * np.arange(ramp) / ramp) ** 2
        env[:ramp] = r
        env[n - ramp:] = r[::-1]
    return seg * env * rng.uniform(0.6, 1.0)


def _peak_normalize(x: np.ndarray, peak: float = 0.9) -> np.ndarray:
    m = np.max(np.abs(x))
    return x if m == 0 else x * (peak / m)


def synth_utterance(spec: SpeakerSpec, duration_s: float, utterance_seed: int,
                    sample_rate: int = SAMPLE_RATE, pause_scale: float = 1.0) -> Waveform:
    """Harmonic "speech" for one speaker: syllables separated by short pauses.

    Each syllable picks a vowel, which rescales the speaker's formant
    centers, and gets its own pitch offset and glide. ``pause_scale``
    shortens (<1) or lengthens the inter-syllable gaps.
    """
    if not duration_s > 0:
        raise InvalidArgumentError(f"duration_s must be positive, got {duration_s}")
    n_total = int(round(duration_s * sample_rate))
    if n_total < 1:
        raise InvalidArgumentError("duration shorter than one sample")
    rng = _rng(_NS_UTTERANCE, spec.seed, spec.speaker_id + 2**31, utterance_seed)
    f0_utt = spec.fundamental_hz * np.exp(rng.normal(0.0, 0.05))

    out = np.zeros(n_total)
    t = int(rng.uniform(0.02, 0.15) * pause_scale * sample_rate)
    while t < n_total:
        n = int(rng.uniform(0.12, 0.35) * sample_rate)
        n = min(n, n_total - t)
        if n > 8:
            out[t:t + n] = _voiced_segment(rng, spec, f0_utt, n, sample_rate)
        t += n + int(rng.uniform(0.04, 0.18) * pause_scale * sample_rate)
    return Waveform(_peak_normalize(out), sample_rate)


def _check_kind(kind: str) -> None:
    if kind not in NOISE_KINDS:
        raise InvalidArgumentError(f"unknown noise kind {kind!r}; expected one of {NOISE_KINDS}")


def _shaped_noise(rng, n: int, sample_rate: int) -> np.ndarray:
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n, 1.0 / sample_rate)
    f_ref = np.maximum(f, 50.0) / 1000.0
    shape = f_ref ** rng.uniform(-0.9, 0.2)
    for _ in range(2):
        c, w = rng.uniform(300, 6000), rng.uniform(300, 1500)
        shape *= 1.0 + rng.uniform(0.5, 2.0) * np.exp(-0.5 * ((f - c) / w) ** 2)
    x = np.fft.irfft(spec * shape, n)
    t = np.arange(n) / sample_rate
    x *= 1.0 + 0.3 * np.sin(2 * np.pi * rng.uniform(0.2, 2.0) * t + rng.uniform(0, 2 * np.pi))
    return x


def _music(rng, n: int, sample_rate: int) -> np.ndarray:
    out = np.zeros(n)
    t = 0
    triads = ((0, 4, 7), (0, 3, 7), (0, 4, 7, 10), (0, 5, 9))
    while t < n:
        length = int(rng.uniform(0.4, 1.2) * sample_rate)
        tail = min(n - t, length + int(0.3 * sample_rate))
        root = rng.integers(45, 66)
        chord = triads[rng.integers(len(triads))]
        tt = np.arange(tail) / sample_rate
        decay = np.exp(-tt / rng.uniform(0.3, 1.0))
        attack = np.minimum(1.0, tt / 0.02)
        block = np.zeros(tail)
        for interval in chord:
            f = 440.0 * 2.0 ** ((root + interval - 69) / 12.0)
            for h in range(1, 9):
                if h * f >= 0.45 * sample_rate:
                    break
                block += h ** -1.2 * np.sin(2 * np.pi * h * f * tt + rng.uniform(0, 2 * np.pi))
        out[t:t + tail] += block * decay * attack * rng.uniform(0.5, 1.0)
        t += length
    return out


def babble_voices(duration_s: float, seed: int, n_voices: int = 4,
                  sample_rate: int = SAMPLE_RATE) -> list[Waveform]:
    """Component voices of a babble recording, from speakers outside any corpus.

    Babble speakers carry negative ids, so they can never collide with
    corpus speakers.
    """
    if n_voices < 4:
        raise InvalidArgumentError("babble needs at least 4 voices")
    voices = []
    for i in range(n_voices):
        voice_seed = int(_rng(_NS_BABBLE_VOICE, seed, i).integers(2**31))
        spec = random_speaker(-(i + 1), seed=voice_seed)
        voices.append(synth_utterance(spec, duration_s, seed, sample_rate, pause_scale=0.5))
    return voices


def synth_noise(kind: str, duration_s: float, seed: int, sample_rate: int = SAMPLE_RATE,
                n_voices: int = 4) -> Waveform:
    """Interference of one of the kinds ``noise``, ``music`` or ``babble``."""
    _check_kind(kind)
    if not duration_s > 0:
        raise InvalidArgumentError(f"duration_s must be positive, got {duration_s}")
    n = int(round(duration_s * sample_rate))
    if kind == "babble":
        x = np.sum([v.samples for v in babble_voices(duration_s, seed, n_voices, sample_rate)], axis=0)
    else:
        rng = _rng(_NS_NOISE[kind], seed)
        x = _shaped_noise(rng, n, sample_rate) if kind == "noise" else _music(rng, n, sample_rate)
    return Waveform(_peak_normalize(x), sample_rate)


def noise_gain(clean: Waveform, noise: Waveform, snr_db: float) -> float:
    """Scale g such that ``clean`` over ``g * noise[:len(clean)]`` sits at ``snr_db``."""
    n = len(clean)
    p_clean = float(np.mean(clean.samples ** 2))
    p_noise = float(np.mean(noise.samples[:n] ** 2))
    if p_clean == 0.0 or p_noise == 0.0:
        raise DegenerateInputError("cannot mix at an SNR with a zero-power signal")
    return float(np.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0))))


def mix_at_snr(clean: Waveform, noise: Waveform, snr_db: float) -> Waveform:
    """Return ``clean + g * noise`` with the noise cropped (never looped).

    The result is not rescaled, so low-SNR mixtures may exceed unit peak.
    """
    if clean.sample_rate != noise.sample_rate:
        raise InvalidArgumentError(
            f"sample rates differ: {clean.sample_rate} vs {noise.sample_rate}")
    if len(noise) < len(clean):
        raise InvalidArgumentError(
            f"noise ({len(noise)} samples) shorter than clean ({len(clean)} samples)")
    g = noise_gain(clean, noise, snr_db)
    return Waveform(clean.samples + g * noise.samples[:len(clean)], clean.sample_rate)


class ShortSegmentWarning(UserWarning):
    pass


def crop_offset(n_available: int, n_wanted: int, seed: int) -> int:
    return int(_rng(_NS_CROP, seed).integers(0, n_available - n_wanted + 1))


def truncate_segment(w: Waveform, seconds: float, seed: int, pad_short: bool = False) -> Waveform:
    """Seeded contiguous crop of exactly ``seconds``.

    Inputs that are too short raise, unless ``pad_short`` is set, in which
    case they are reflect-padded and a ``ShortSegmentWarning`` is issued.
    """
    n = int(round(seconds * w.sample_rate))
    if n <= 0:
        raise InvalidArgumentError("segment length must be positive")
    if len(w) < n:
        if not pad_short:
            raise InvalidArgumentError(f"waveform has {len(w)} samples, need {n}")
        warnings.warn(f"padding {len(w)}-sample waveform to {n}", ShortSegmentWarning, stacklevel=2)
        return Waveform(np.pad(w.samples, (0, n - len(w)), mode="reflect"), w.sample_rate)
    off = crop_offset(len(w), n, seed)
    return Waveform(w.samples[off:off + n], w.sample_rate)


# --------------------------------------------------------------------- WAV


def write_wav(path, w: Waveform) -> None:
    """16-bit PCM mono. Samples outside [-1, 1) are clipped."""
    q = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(w.sample_rate)
        f.writeframes(q.tobytes())


def load_wav(path) -> Waveform:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        f = wave.open(str(path), "rb")
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: not a PCM WAV file ({exc})") from exc
    with f:
        if f.getnchannels() != 1:
            raise AudioFormatError(f"{path}: expected mono, got {f.getnchannels()} channels")
        if f.getsampwidth() != 2:
            raise AudioFormatError(f"{path}: expected 16-bit samples, got {8 * f.getsampwidth()}-bit")
        rate = f.getframerate()
        data = np.frombuffer(f.readframes(f.getnframes()), dtype="<i2")
    return Waveform(data.astype(np.float64) / 32768.0, rate)


# ------------------------------------------------------------- conditions


@dataclass(frozen=True)
class NoiseCondition:
    kind: str
    snr_db: float | None = None
    pool: str = "test"

    def __post_init__(self):
        if self.kind not in CONDITION_KINDS:
            raise InvalidArgumentError(f"unknown condition kind {self.kind!r}")
        if self.pool not in POOLS:
            raise InvalidArgumentError(f"unknown pool {self.pool!r}")
        if (self.snr_db is None) != (self.kind == "clean"):
            raise InvalidArgumentError("snr_db must be given iff kind is not 'clean'")

    def __str__(self) -> str:
        if self.kind == "clean":
            return "clean"
        snr = self.snr_db
        return f"{self.kind}@{int(snr) if float(snr).is_integer() else snr}"


def parse_condition(text: str, pool: str = "test") -> NoiseCondition:
    """Parse ``kind@snr`` (e.g. ``babble@-5``) or ``clean``."""
    text = text.strip()
    if text == "clean":
        return NoiseCondition("clean", None, pool)
    kind, sep, snr = text.partition("@")
    if not sep:
        raise InvalidArgumentError(f"condition {text!r} is not of the form kind@snr")
    try:
        value = float(snr)
    except ValueError:
        raise InvalidArgumentError(f"bad SNR in condition {text!r}") from None
    return NoiseCondition(kind, value, pool)


def pool_seed(pool: str, index: int) -> int:
    lo, hi = POOL_SEED_RANGES[pool]
    if not 0 <= index < hi - lo:
        raise InvalidArgumentError(f"pool index {index} out of range")
    return lo + index


class NoisePoolRegistry:
    """Records every (kind, seed) handed out per pool and refuses overlaps."""

    def __init__(self):
        self._used: dict[str, set] = {p: set() for p in POOLS}

    def register(self, pool: str, kind: str, seed: int) -> None:
        lo, hi = POOL_SEED_RANGES[pool]
        if not lo <= seed < hi:
            raise PoolViolationError(f"seed {seed} lies outside the {pool} pool range [{lo}, {hi})")
        other = "test" if pool == "train" else "train"
        if (kind, seed) in self._used[other]:
            raise PoolViolationError(f"({kind}, {seed}) already used by the {other} pool")
        self._used[pool].add((kind, seed))

    def used(self, pool: str) -> frozenset:
        return frozenset(self._used[pool])

    def assert_disjoint(self) -> None:
        overlap = self._used["train"] & self._used["test"]
        if overlap:
            raise PoolViolationError(f"train/test noise pools overlap: {sorted(overlap)[:5]}")


@dataclass
class NoiseBank:
    """A finite set of noise recordings per kind from one pool, cropped on demand."""

    pool: str
    recordings: dict  # kind -> list[Waveform]
    seeds: dict  # kind -> list[int]

    def draw(self, kind: str, n_samples: int, seed: int) -> Waveform:
        _check_kind(kind)
        rng = _rng(_NS_CROP, seed, _NS_NOISE[kind])
        recs = self.recordings[kind]
        rec = recs[int(rng.integers(len(recs)))]
        if len(rec) < n_samples:
            raise InvalidArgumentError("noise recordings shorter than requested segment")
        off = int(rng.integers(0, len(rec) - n_samples + 1))
        return Waveform(rec.samples[off:off + n_samples], rec.sample_rate)


def build_noise_bank(pool: str, n_per_kind: int = 12, duration_s: float = 8.0,
                     registry: NoisePoolRegistry | None = None,
                     kinds: Sequence[str] = NOISE_KINDS,
                     sample_rate: int = SAMPLE_RATE) -> NoiseBank:
    if pool not in POOLS:
        raise InvalidArgumentError(f"unknown pool {pool!r}")
    recordings, seeds = {}, {}
    for kind in kinds:
        recordings[kind], seeds[kind] = [], []
        for i in range(n_per_kind):
            s = pool_seed(pool, i)
            if registry is not None:
                registry.register(pool, kind, s)
            recordings[kind].append(synth_noise(kind, duration_s, s, sample_rate))
            seeds[kind].append(s)
    return NoiseBank(pool, recordings, seeds)


# ----------------------------------------------------------------- corpus


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    speaker_id: int
    waveform: Waveform


@dataclass
class SynthCorpus:
    speakers: list
    utterances: list = field(default_factory=list)

    def by_speaker(self) -> dict:
        out: dict = {}
        for u in self.utterances:
            out.setdefault(u.speaker_id, []).append(u)
        return out

    def labels(self) -> np.ndarray:
        """Utterance labels as contiguous class indices in speaker order."""
        index = {s.speaker_id: i for i, s in enumerate(self.speakers)}
        return np.array([index[u.speaker_id] for u in self.utterances])


def make_corpus(speaker_ids: Iterable[int], utterance_seeds: Iterable[int],
                duration_s: float = 3.0, seed: int = 0,
                sample_rate: int = SAMPLE_RATE) -> SynthCorpus:
    speakers = [random_speaker(int(s), seed) for s in speaker_ids]
    profiles = [s.formant_profile for s in speakers]
    if len(set(profiles)) != len(profiles):
        raise InvalidArgumentError("two speakers drew identical formant profiles")
    utterance_seeds = list(utterance_seeds)
    utts = []
    for spec in speakers:
        for u in utterance_seeds:
            w = synth_utterance(spec, duration_s, u, sample_rate)
            utts.append(Utterance(f"spk{spec.speaker_id:04d}-utt{u:04d}", spec.speaker_id, w))
    return SynthCorpus(speakers, utts)


def write_manifest(path, rows: Iterable[tuple]) -> None:
    """``utt_id<TAB>speaker_id<TAB>relative_path`` per line."""
    with open(path, "w", encoding="utf-8") as f:
        for utt_id, speaker_id, rel in rows:
            f.write(f"{utt_id}\t{speaker_id}\t{rel}\n")


def read_manifest(path) -> list[tuple]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise InvalidArgumentError(f"{path}:{lineno}: expected 3 tab-separated fields")
            rows.append((parts[0], int(parts[1]), parts[2]))
    return rows


def export_corpus(corpus: SynthCorpus, out_dir) -> Path:
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    rows = []
    for u in corpus.utterances:
        rel = f"wav/{u.utt_id}.wav"
        write_wav(out_dir / rel, u.waveform)
        rows.append((u.utt_id, u.speaker_id, rel))
    manifest = out_dir / "manifest.tsv"
    write_manifest(manifest, rows)
    return manifest


def load_corpus_dir(manifest_path) -> list[Utterance]:
    """Load utterances listed in a manifest (paths relative to its directory)."""
    manifest_path = Path(manifest_path)
    return [Utterance(utt_id, spk, load_wav(manifest_path.parent / rel))
            for utt_id, spk, rel in read_manifest(manifest_path)]
