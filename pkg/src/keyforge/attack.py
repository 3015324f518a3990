"""Reconstruction of verifier-ready sequences from generated word samples.

Word samples carry no cross-word timing (terminal rows are zero by
convention), so stitching rebuilds an absolute-time event stream: presses
advance by each word's press-to-press latencies, and one synthetic space key
joins consecutive words with hold/gap times drawn from a space model fitted to
the target user's real spaces. Features are then re-extracted over the whole
stream, which makes cross-word latencies consistent by construction.

Two word-ordering conditions are supported: "ordered" keeps the single-user
corpus order, "random" applies a seeded permutation. Latent draws are keyed to
the word multiset rather than plan position, so the two conditions generate
identical per-word cells and differ only in arrangement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import (
    CharSequenceSample,
    FeatureRow,
    KeyEvent,
    SPACE_KEYCODE,
    WORD_LEN,
    WordSample,
    denormalize,
    extract_features,
    normalize,
    slice_windows,
)
from .gan import GanBundle, generate_word

CONDITIONS = ("ordered", "random")

ATTACKER_ID = "attacker"

_MIN_GAP_MS = 1.0


@dataclass(frozen=True)
class SpaceModel:
    """Gaussian timing model for synthesized space keys, in seconds."""

    hold_mean: float = 0.080
    hold_std: float = 0.015
    gap_mean: float = 0.110
    gap_std: float = 0.030


@dataclass(frozen=True)
class AttackConfig:
    condition: str = "ordered"
    n_sequences: int = 20
    seed: int = 0
    space_model: SpaceModel = SpaceModel()
    allow_regenerate: bool = True

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ValueError(f"condition must be one of {CONDITIONS}, got {self.condition!r}")
        if self.n_sequences < 1:
            raise ValueError("n_sequences must be >= 1")


def fit_space_model(sentences: list[list[KeyEvent]]) -> SpaceModel:
    """Estimate space-key hold and surrounding-gap statistics from real typing.

    Pre- and post-space gaps are pooled into one distribution. Falls back to
    the documented defaults when the sentences contain no space keys.
    """
    holds, gaps = [], []
    for sentence in sentences:
        for i, ev in enumerate(sentence):
            if ev.keycode != SPACE_KEYCODE:
                continue
            holds.append((ev.release_time - ev.press_time) / 1000.0)
            if i > 0:
                gaps.append((ev.press_time - sentence[i - 1].release_time) / 1000.0)
            if i + 1 < len(sentence):
                gaps.append((sentence[i + 1].press_time - ev.release_time) / 1000.0)
    if not holds or not gaps:
        return SpaceModel()
    return SpaceModel(
        hold_mean=float(np.mean(holds)),
        hold_std=float(np.std(holds)),
        gap_mean=float(np.mean(gaps)),
        gap_std=float(np.std(gaps)),
    )


def plan_words(
    corpus_words: list[str], config: AttackConfig, rng: np.random.Generator
) -> list[str]:
    """Word order for one reconstruction pass: identity or a seeded permutation."""
    if not corpus_words:
        raise ValueError("cannot plan an attack over an empty word list")
    if config.condition == "ordered":
        return list(corpus_words)
    return [corpus_words[i] for i in rng.permutation(len(corpus_words))]


def _sample_ms(rng: np.random.Generator, mean_s: float, std_s: float) -> float:
    return max(rng.normal(mean_s, std_s) * 1000.0, _MIN_GAP_MS)


def stitch_events(
    words: list[WordSample], space_model: SpaceModel, rng: np.random.Generator
) -> list[KeyEvent]:
    """Integrate word samples into one absolute-time event stream with spaces.

    Within a word, presses advance by the press-to-press latency (floored at
    1ms so the stream stays strictly press-monotone even for degenerate
    generator output); between words a space key is inserted with sampled
    hold and pre/post gaps.
    """
    if not words:
        raise ValueError("stitch needs at least one word sample")
    events: list[KeyEvent] = []
    clock = 0.0  # next press time, ms
    for w_index, word in enumerate(words):
        if w_index > 0:
            pre_gap = _sample_ms(rng, space_model.gap_mean, space_model.gap_std)
            hold = _sample_ms(rng, space_model.hold_mean, space_model.hold_std)
            post_gap = _sample_ms(rng, space_model.gap_mean, space_model.gap_std)
            press = events[-1].release_time + pre_gap
            events.append(KeyEvent(SPACE_KEYCODE, press, press + hold))
            clock = press + hold + post_gap
        rows = denormalize(word)
        press = clock
        for i, row in enumerate(rows):
            events.append(KeyEvent(row.keycode, press, press + row.hl * 1000.0))
            if i + 1 < len(rows):
                press += max(row.pl * 1000.0, _MIN_GAP_MS)
    return events


def stitch(
    words: list[WordSample], space_model: SpaceModel, rng: np.random.Generator
) -> np.ndarray:
    """Normalized feature rows of the stitched stream, one row per key event."""
    return normalize(extract_features(stitch_events(words, space_model, rng)))


def _generate_plan_samples(
    bundle: GanBundle, word_plan: list[str], rng: np.random.Generator
) -> list[WordSample]:
    """Generate one sample per planned word, with latents keyed to the multiset.

    Words are generated in canonical (sorted, occurrence-stable) order so that
    two plans over the same multiset consume identical latent draws per word.
    """
    samples: list[WordSample | None] = [None] * len(word_plan)
    canonical = sorted(range(len(word_plan)), key=lambda i: (word_plan[i], i))
    for i in canonical:
        samples[i] = generate_word(bundle, word_plan[i], rng)
    return samples  # type: ignore[return-value]


def build_attack_stream(
    bundle: GanBundle,
    word_plan: list[str],
    config: AttackConfig,
    rng: np.random.Generator,
) -> list[KeyEvent]:
    """Generate and stitch enough events to window n_sequences full sequences.

    The plan repeats (with fresh latents per pass) until the stream is long
    enough; with regeneration disabled a too-short plan is an error.
    """
    if not word_plan:
        raise ValueError("empty word plan")
    needed_rows = config.n_sequences * WORD_LEN
    words: list[WordSample] = []
    while True:
        words.extend(_generate_plan_samples(bundle, word_plan, rng))
        total_rows = sum(w.valid_len for w in words) + (len(words) - 1)
        if total_rows >= needed_rows:
            break
        if not config.allow_regenerate:
            raise ValueError(
                f"word plan yields only {total_rows} rows, need {needed_rows} "
                "and regeneration is disabled"
            )
    return stitch_events(words, config.space_model, rng)


def build_attack_sequences(
    bundle: GanBundle,
    word_plan: list[str],
    config: AttackConfig,
    rng: np.random.Generator,
    user_id: str = ATTACKER_ID,
) -> list[CharSequenceSample]:
    """Verifier-ready synthetic sequences: generate, stitch, window, take n."""
    events = build_attack_stream(bundle, word_plan, config, rng)
    rows = normalize(extract_features(events))
    windows = slice_windows(rows, WORD_LEN)
    return [
        CharSequenceSample(matrix=w, source="synthetic", user_id=user_id)
        for w in windows[: config.n_sequences]
    ]
