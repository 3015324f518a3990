"""Keystroke logs, latency features, word samples, and synthetic corpora.

Raw key events carry millisecond press/release timestamps; extracted feature
rows are in seconds. Normalized matrices scale hold/press/release latencies by
a fixed 5-second ceiling (inter-key latency symmetrically, since key rollover
makes it negative) and keycodes by 255, so model outputs stay interpretable
without any per-dataset statistics.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

T_MAX_SECONDS = 5.0
SPACE_KEYCODE = 32
WORD_LEN = 15
N_FEATURES = 5

COL_HL, COL_IL, COL_PL, COL_RL, COL_KEYCODE = range(N_FEATURES)

TSV_COLUMNS = ("PARTICIPANT_ID", "SENTENCE_ID", "KEYCODE", "PRESS_TIME", "RELEASE_TIME")


class ParseError(ValueError):
    """A log row the TSV reader cannot interpret."""


class ValidationError(ValueError):
    """Structurally readable data that violates a corpus invariant."""


@dataclass(frozen=True)
class KeyEvent:
    """One keystroke: ASCII keycode plus press/release times in milliseconds."""

    keycode: int
    press_time: float
    release_time: float

    def __post_init__(self):
        if not 0 <= self.keycode <= 255:
            raise ValidationError(f"keycode {self.keycode} outside 0..255")
        if self.press_time < 0 or self.release_time < 0:
            raise ValidationError(
                f"negative timestamp on keycode {self.keycode}: "
                f"press={self.press_time}, release={self.release_time}"
            )
        if self.release_time < self.press_time:
            raise ValidationError(
                f"release before press on keycode {self.keycode}: "
                f"press={self.press_time}, release={self.release_time}"
            )


@dataclass(frozen=True)
class FeatureRow:
    """Per-key latency tuple in seconds; the last key of a stream has il=pl=rl=0."""

    hl: float
    il: float
    pl: float
    rl: float
    keycode: int


@dataclass(frozen=True)
class WordSample:
    """A single word as a 15x5 normalized matrix, zero-padded past valid_len rows."""

    text: str
    matrix: np.ndarray
    valid_len: int


@dataclass(frozen=True)
class CharSequenceSample:
    """A full 15-row normalized sequence (no padding) attributed to one user."""

    matrix: np.ndarray
    source: str  # "real" | "synthetic"
    user_id: str


@dataclass
class UserLog:
    user_id: str
    sentences: list[list[KeyEvent]]


@dataclass
class Corpus:
    users: list[UserLog]

    def user_ids(self) -> list[str]:
        return [u.user_id for u in self.users]

    def get(self, user_id: str) -> UserLog:
        for u in self.users:
            if u.user_id == user_id:
                return u
        raise KeyError(f"unknown user id {user_id!r}")

    def n_events(self) -> int:
        return sum(len(s) for u in self.users for s in u.sentences)


def extract_features(events: list[KeyEvent]) -> list[FeatureRow]:
    """Derive HL/IL/PL/RL rows (seconds) from press-sorted events.

    Row i uses events i and i+1: hl = release-press of the same key, il = next
    press minus current release (negative under rollover), pl = press-to-press,
    rl = release-to-release. The terminal row keeps il = pl = rl = 0 so it
    merges cleanly with zero padding.
    """
    if not events:
        raise ValueError("extract_features requires at least one event")
    rows = []
    for i, ev in enumerate(events):
        hl = (ev.release_time - ev.press_time) / 1000.0
        if i + 1 < len(events):
            nxt = events[i + 1]
            il = (nxt.press_time - ev.release_time) / 1000.0
            pl = (nxt.press_time - ev.press_time) / 1000.0
            rl = (nxt.release_time - ev.release_time) / 1000.0
        else:
            il = pl = rl = 0.0
        rows.append(FeatureRow(hl=hl, il=il, pl=pl, rl=rl, keycode=ev.keycode))
    return rows


def rows_to_array(rows: list[FeatureRow]) -> np.ndarray:
    return np.array(
        [[r.hl, r.il, r.pl, r.rl, float(r.keycode)] for r in rows], dtype=np.float64
    ).reshape(len(rows), N_FEATURES)


def normalize(rows: list[FeatureRow]) -> np.ndarray:
    """Scale feature rows into an (n, 5) matrix of unit-range cells.

    HL/PL/RL are clamped to [0, T_max] then divided by T_max; IL is clamped to
    [-T_max, T_max] then divided; keycodes divide by 255. Clamping makes the
    map total, at the cost of saturating pathological latencies.
    """
    a = rows_to_array(rows)
    out = np.empty_like(a)
    for col in (COL_HL, COL_PL, COL_RL):
        out[:, col] = np.clip(a[:, col], 0.0, T_MAX_SECONDS) / T_MAX_SECONDS
    out[:, COL_IL] = np.clip(a[:, COL_IL], -T_MAX_SECONDS, T_MAX_SECONDS) / T_MAX_SECONDS
    out[:, COL_KEYCODE] = a[:, COL_KEYCODE] / 255.0
    return out


def denormalize_rows(matrix: np.ndarray) -> list[FeatureRow]:
    """Inverse of normalize on already-normalized rows; keycodes round to int."""
    rows = []
    for cells in np.atleast_2d(matrix):
        kc = int(round(float(cells[COL_KEYCODE]) * 255.0))
        rows.append(
            FeatureRow(
                hl=float(cells[COL_HL]) * T_MAX_SECONDS,
                il=float(cells[COL_IL]) * T_MAX_SECONDS,
                pl=float(cells[COL_PL]) * T_MAX_SECONDS,
                rl=float(cells[COL_RL]) * T_MAX_SECONDS,
                keycode=min(max(kc, 0), 255),
            )
        )
    return rows


def denormalize(sample: WordSample) -> list[FeatureRow]:
    """Recover the seconds-domain rows of a word sample (padding excluded)."""
    return denormalize_rows(sample.matrix[: sample.valid_len])


def pad_word_matrix(rows: np.ndarray) -> np.ndarray:
    out = np.zeros((WORD_LEN, N_FEATURES), dtype=np.float64)
    out[: rows.shape[0]] = rows
    return out


def words_from_sentence(events: list[KeyEvent]) -> list[WordSample]:
    """Split a sentence on the space key into fixed-size word samples.

    Each maximal non-space run becomes one sample; runs longer than 15 keys
    are truncated to their first 15. Features are extracted within the word
    only, so the terminal-row zeros never leak cross-word timing.
    """
    runs: list[list[KeyEvent]] = []
    current: list[KeyEvent] = []
    for ev in events:
        if ev.keycode == SPACE_KEYCODE:
            if current:
                runs.append(current)
                current = []
        else:
            current.append(ev)
    if current:
        runs.append(current)

    samples = []
    for run in runs:
        run = run[:WORD_LEN]
        matrix = pad_word_matrix(normalize(extract_features(run)))
        text = "".join(chr(ev.keycode) for ev in run)
        samples.append(WordSample(text=text, matrix=matrix, valid_len=len(run)))
    return samples


def words_from_corpus(user: UserLog) -> list[WordSample]:
    """All of one user's word samples in corpus order."""
    out: list[WordSample] = []
    for sentence in user.sentences:
        out.extend(words_from_sentence(sentence))
    return out


def slice_windows(rows: np.ndarray, width: int = WORD_LEN) -> list[np.ndarray]:
    """Non-overlapping width-row windows; the trailing remainder is dropped."""
    n = rows.shape[0] // width
    return [rows[i * width : (i + 1) * width].copy() for i in range(n)]


# ---------------------------------------------------------------------------
# Synthetic corpora
# ---------------------------------------------------------------------------

_LETTER_KEYCODES = [ord(c) for c in string.ascii_lowercase]


def synth_corpus(n_users: int, sentences_per_user: int, seed: int) -> Corpus:
    """Generate a deterministic multi-user corpus of plausible typing logs.

    Each user draws one mean hold time per keycode and one mean inter-key gap
    (hold means ~ N(90ms, 25ms), gap mean ~ N(120ms, 40ms), clamped positive),
    then types random 3-10 letter words with 10ms jitter around those means.
    Sentences carry 15-40 keys including separating spaces.
    """
    if n_users < 2:
        raise ValueError("synth_corpus needs n_users >= 2 (impostor pairs require a second user)")
    if sentences_per_user < 1:
        raise ValueError("sentences_per_user must be >= 1")

    rng = np.random.default_rng(seed)
    users = []
    for u in range(n_users):
        hold_means = {
            kc: max(1.0, rng.normal(90.0, 25.0))
            for kc in [SPACE_KEYCODE, *_LETTER_KEYCODES]
        }
        gap_mean = max(1.0, rng.normal(120.0, 40.0))

        sentences = []
        for _ in range(sentences_per_user):
            target_keys = int(rng.integers(15, 31))
            keycodes: list[int] = []
            while len(keycodes) < target_keys:
                if keycodes:
                    keycodes.append(SPACE_KEYCODE)
                word_len = int(rng.integers(3, 11))
                keycodes.extend(int(rng.choice(_LETTER_KEYCODES)) for _ in range(word_len))

            events = []
            press = 0.0
            for kc in keycodes:
                hold = max(1.0, rng.normal(hold_means[kc], 10.0))
                events.append(KeyEvent(keycode=kc, press_time=press, release_time=press + hold))
                gap = max(1.0, rng.normal(gap_mean, 10.0))
                press = press + hold + gap
            sentences.append(events)
        users.append(UserLog(user_id=f"u{u}", sentences=sentences))
    return Corpus(users=users)


# ---------------------------------------------------------------------------
# TSV ingestion / export
# ---------------------------------------------------------------------------


def ingest_log(path: str | Path) -> Corpus:
    """Read a keystroke TSV into a corpus, sorting each sentence by press time.

    The required header and column layout are PARTICIPANT_ID, SENTENCE_ID,
    KEYCODE, PRESS_TIME, RELEASE_TIME. Parse problems report the line number;
    events that violate invariants (release < press, duplicate press times)
    raise validation errors naming the offending event.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file, expected header row")
    header = tuple(lines[0].rstrip("\n").split("\t"))
    if header != TSV_COLUMNS:
        raise ParseError(f"{path}:1: bad header {header!r}, expected {TSV_COLUMNS!r}")

    grouped: dict[tuple[str, str], list[KeyEvent]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) != len(TSV_COLUMNS):
            raise ParseError(f"{path}:{lineno}: expected {len(TSV_COLUMNS)} columns, got {len(cells)}")
        pid, sid, kc_text, press_text, release_text = cells
        try:
            keycode = int(kc_text)
        except ValueError:
            raise ParseError(f"{path}:{lineno}: keycode {kc_text!r} is not an integer") from None
        try:
            press = float(press_text)
            release = float(release_text)
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-numeric time in {cells!r}") from None
        try:
            event = KeyEvent(keycode=keycode, press_time=press, release_time=release)
        except ValidationError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from None
        grouped.setdefault((pid, sid), []).append(event)

    users: dict[str, UserLog] = {}
    for (pid, sid), events in grouped.items():
        events.sort(key=lambda ev: ev.press_time)
        for a, b in zip(events, events[1:]):
            if b.press_time <= a.press_time:
                raise ValidationError(
                    f"{path}: user {pid!r} sentence {sid!r}: non-increasing press time "
                    f"{b.press_time} after {a.press_time}"
                )
        users.setdefault(pid, UserLog(user_id=pid, sentences=[])).sentences.append(events)
    return Corpus(users=list(users.values()))


def export_log(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus in the same TSV layout ingest_log reads."""
    path = Path(path)
    lines = ["\t".join(TSV_COLUMNS)]
    for user in corpus.users:
        for s_index, sentence in enumerate(user.sentences):
            sid = f"s{s_index}"
            for ev in sentence:
                lines.append(
                    f"{user.user_id}\t{sid}\t{ev.keycode}\t{ev.press_time!r}\t{ev.release_time!r}"
                )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
