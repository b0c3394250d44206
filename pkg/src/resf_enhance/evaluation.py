"""Word error rate, corpus aggregation and an external ASR adapter."""

from __future__ import annotations

import csv
import math
import re
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

AUDIO_PLACEHOLDER = "{audio}"
WER_THRESHOLD = 0.20

_PUNCT = re.compile(r"[^\w\s']|_")
_EDGE_APOSTROPHE = re.compile(r"(?<!\w)'|'(?!\w)")


class EvalError(ValueError):
    pass


class AsrError(RuntimeError):
    def __init__(self, message: str, returncode: int | None = None, stderr: str = ""):
        super().__init__(message)
        self.returncode = returncode
        self.stderr = stderr


def normalize(text: str) -> list[str]:
    """Lowercase, drop punctuation (keeping intra-word apostrophes), split."""
    text = _PUNCT.sub(" ", text.lower())
    text = _EDGE_APOSTROPHE.sub(" ", text)
    return text.split()


@dataclass(frozen=True)
class Transcript:
    utterance_id: str
    tokens: tuple[str, ...]

    @classmethod
    def from_text(cls, utterance_id: str, text: str) -> Transcript:
        return cls(utterance_id, tuple(normalize(text)))

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def edit_distance(ref: Sequence[str], hyp: Sequence[str]) -> int:
    """Word-level Levenshtein distance with unit costs."""
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i]
        for j, h in enumerate(hyp, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h)))
        prev = cur
    return prev[-1]


def wer(reference: Transcript | Sequence[str], hypothesis: Transcript | Sequence[str]) -> float:
    ref = reference.tokens if isinstance(reference, Transcript) else tuple(reference)
    hyp = hypothesis.tokens if isinstance(hypothesis, Transcript) else tuple(hypothesis)
    if not ref:
        raise EvalError("reference transcript is empty")
    return edit_distance(ref, hyp) / len(ref)


@dataclass(frozen=True)
class WerReport:
    per_file: list[tuple[str, float]] = field(default_factory=list)
    mean: float = 0.0
    std: float = 0.0
    pct_le_20: float = 0.0

    def summary(self) -> dict[str, float]:
        """Mean and STD as percentages, all rounded to 2 decimals."""
        return {
            "mean": round(100 * self.mean, 2),
            "std": round(100 * self.std, 2),
            "pct_le_20": round(self.pct_le_20, 2),
        }

    def format_table(self) -> str:
        width = max([len("utterance_id")] + [len(u) for u, _ in self.per_file])
        lines = [f"{'utterance_id':<{width}}  WER%"]
        lines += [f"{u:<{width}}  {100 * w:6.2f}" for u, w in self.per_file]
        s = self.summary()
        lines.append(f"{'SUMMARY':<{width}}  mean={s['mean']:.2f} std={s['std']:.2f} <=20%={s['pct_le_20']:.2f}")
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["utterance_id", "wer_pct"])
            for u, w in self.per_file:
                writer.writerow([u, f"{100 * w:.2f}"])
            s = self.summary()
            writer.writerow(["__mean__", f"{s['mean']:.2f}"])
            writer.writerow(["__std__", f"{s['std']:.2f}"])
            writer.writerow(["__pct_le_20__", f"{s['pct_le_20']:.2f}"])


def aggregate(per_file, ids: Sequence[str] | None = None) -> WerReport:
    """Mean, population STD and share of files at or below 20% WER."""
    values = np.asarray(list(per_file), dtype=np.float64)
    if values.size == 0:
        raise EvalError("cannot aggregate an empty list")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise EvalError("WER values must be finite and non-negative")
    ids = list(ids) if ids is not None else [str(i) for i in range(len(values))]
    if len(ids) != len(values):
        raise EvalError("ids and values differ in length")
    # fsum keeps the result independent of list order
    mean = math.fsum(values) / len(values)
    std = math.sqrt(math.fsum((values - mean) ** 2) / len(values))
    # a tiny slack keeps 0.2 computed as e.g. 2/10 on the inclusive side
    share = 100.0 * np.count_nonzero(values <= WER_THRESHOLD + 1e-12) / len(values)
    return WerReport(list(zip(ids, values.tolist())), mean, std, float(share))


def evaluate(references: dict[str, Transcript], hypotheses: dict[str, Transcript]) -> WerReport:
    missing = sorted(set(references) - set(hypotheses))
    extra = sorted(set(hypotheses) - set(references))
    if missing or extra:
        parts = []
        if missing:
            parts.append("missing from hypotheses: " + ", ".join(missing))
        if extra:
            parts.append("missing from references: " + ", ".join(extra))
        raise EvalError("; ".join(parts))
    ids = sorted(references)
    if not ids:
        raise EvalError("no utterances to evaluate")
    return aggregate([wer(references[u], hypotheses[u]) for u in ids], ids)


def read_transcripts(path) -> dict[str, Transcript]:
    """``<utterance_id>\\t<text>`` per line, UTF-8. Blank lines are skipped."""
    out: dict[str, Transcript] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if "\t" not in line:
            raise EvalError(f"{path}:{lineno}: expected '<id>\\t<text>'")
        uid, text = line.split("\t", 1)
        uid = uid.strip()
        if not uid:
            raise EvalError(f"{path}:{lineno}: empty utterance id")
        if uid in out:
            raise EvalError(f"{path}:{lineno}: duplicate utterance id {uid!r}")
        out[uid] = Transcript.from_text(uid, text)
    return out


def write_transcripts(path, transcripts: dict[str, Transcript]) -> None:
    lines = [f"{u}\t{t.text}\n" for u, t in sorted(transcripts.items())]
    Path(path).write_text("".join(lines), encoding="utf-8")


def run_asr(audio_path, command_template: str, utterance_id: str | None = None, timeout: float | None = None) -> Transcript:
    """Run an external recogniser and normalise its standard output.

    ``command_template`` is split shell-style; every ``{audio}`` is replaced
    by the audio path. No shell is involved.
    """
    if AUDIO_PLACEHOLDER not in command_template:
        raise EvalError(f"ASR command template lacks the {AUDIO_PLACEHOLDER} placeholder")
    argv = [arg.replace(AUDIO_PLACEHOLDER, str(audio_path)) for arg in shlex.split(command_template)]
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
    except FileNotFoundError as exc:
        raise AsrError(f"ASR command not found: {argv[0]}") from exc
    if proc.returncode != 0:
        raise AsrError(
            f"ASR command exited with status {proc.returncode}: {proc.stderr.strip()}",
            proc.returncode,
            proc.stderr,
        )
    uid = utterance_id if utterance_id is not None else Path(audio_path).stem
    transcript = Transcript.from_text(uid, proc.stdout)
    if not transcript.tokens:
        raise AsrError(f"ASR command produced no text for {audio_path}")
    return transcript
