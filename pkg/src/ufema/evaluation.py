"""Verification trials, cosine scoring, EER and per-condition evaluation."""
from __future__ import annotations

import csv
import hashlib
import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import NoiseBank, NoiseCondition, Utterance, Waveform, mix_at_snr, truncate_segment
from .errors import InvalidArgumentError, PoolViolationError


@dataclass(frozen=True)
class Trial:
    label: int  # 1 target, 0 nontarget
    utt_a: str
    utt_b: str

    def __post_init__(self):
        if self.utt_a == self.utt_b:
            raise InvalidArgumentError(f"trial pairs {self.utt_a} with itself")
        if self.label not in (0, 1):
            raise InvalidArgumentError(f"trial label must be 0 or 1, got {self.label}")


def cosine_score(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"embedding dims differ: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise InvalidArgumentError("cannot score a zero-norm embedding")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def _cosine_matrix(emb: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise InvalidArgumentError("cannot score a zero-norm embedding")
    u = emb / norms
    return np.clip(u @ u.T, -1.0, 1.0)


def compute_eer(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Equal error rate, with a trial accepted when ``score >= threshold``.

    Operating points are taken at every distinct score (plus "accept
    nothing"). The EER is where the polyline through consecutive
    (FAR, FRR) points crosses FAR = FRR, found by linear interpolation.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    n_tar, n_non = int(y.sum()), int((~y).sum())
    if n_tar == 0 or n_non == 0:
        raise InvalidArgumentError("EER needs at least one target and one nontarget trial")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # last index of each run of equal scores, in descending score order
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tar_acc = np.cumsum(y)[ends]
    non_acc = np.cumsum(~y)[ends]
    far = np.r_[0.0, non_acc / n_non]
    frr = np.r_[1.0, 1.0 - tar_acc / n_tar]
    d = frr - far
    i = int(np.argmax(d <= 0))
    if d[i] == 0:
        return float(far[i])
    lam = d[i - 1] / (d[i - 1] - d[i])
    return float(far[i - 1] + lam * (far[i] - far[i - 1]))


def make_trials(utterances: Sequence[Utterance], seed: int = 0,
                n_nontarget: int | None = None) -> list[Trial]:
    """Every same-speaker pair plus an equal number (by default) of random impostor pairs."""
    targets, nontargets = [], []
    for a, b in itertools.combinations(utterances, 2):
        (targets if a.speaker_id == b.speaker_id else nontargets).append((a.utt_id, b.utt_id))
    if not targets or not nontargets:
        raise InvalidArgumentError("trial list needs at least two speakers with two utterances")
    n = len(targets) if n_nontarget is None else n_nontarget
    rng = np.random.default_rng([seed, 97])
    pick = rng.choice(len(nontargets), size=min(n, len(nontargets)), replace=False)
    trials = [Trial(1, a, b) for a, b in targets] + [Trial(0, *nontargets[i]) for i in sorted(pick)]
    return trials


def write_trials(path, trials: Iterable[Trial]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for t in trials:
            f.write(f"{t.label} {t.utt_a} {t.utt_b}\n")


def read_trials(path) -> list[Trial]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3 or parts[0] not in ("0", "1"):
                raise InvalidArgumentError(f"{path}:{lineno}: expected 'label utt_a utt_b'")
            out.append(Trial(int(parts[0]), parts[1], parts[2]))
    return out


def condition_seed(utt_id: str, condition: NoiseCondition) -> int:
    digest = hashlib.sha256(f"{utt_id}|{condition}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def corrupt(clean: Waveform, condition: NoiseCondition, bank: NoiseBank | None, seed: int) -> Waveform:
    if condition.kind == "clean":
        return clean
    if bank is None:
        raise InvalidArgumentError(f"condition {condition} needs a noise bank")
    if bank.pool != condition.pool:
        raise PoolViolationError(
            f"condition {condition} targets the {condition.pool} pool but the bank is {bank.pool}")
    return mix_at_snr(clean, bank.draw(condition.kind, len(clean), seed), condition.snr_db)


def eval_segment(u: Utterance, seconds: float) -> Waveform:
    """Fixed per-utterance crop used for all evaluation conditions."""
    seed = int.from_bytes(hashlib.sha256(u.utt_id.encode()).digest()[:4], "little")
    return truncate_segment(u.waveform, seconds, seed)


def score_trials(embeddings: dict, trials: Sequence[Trial]) -> tuple[np.ndarray, np.ndarray]:
    ids = sorted({t.utt_a for t in trials} | {t.utt_b for t in trials})
    missing = [i for i in ids if i not in embeddings]
    if missing:
        raise InvalidArgumentError(f"no embedding for utterances {missing[:5]}")
    index = {u: k for k, u in enumerate(ids)}
    sims = _cosine_matrix(np.stack([embeddings[u] for u in ids]))
    a = np.array([index[t.utt_a] for t in trials])
    b = np.array([index[t.utt_b] for t in trials])
    return sims[a, b], np.array([t.label for t in trials])


def evaluate(embed_fn, utterances: Sequence[Utterance], trials: Sequence[Trial],
             conditions: Sequence[NoiseCondition], bank: NoiseBank | None,
             segment_s: float = 2.0, batch_size: int = 32) -> list[dict]:
    """EER per condition plus an ``average`` row (plain mean over conditions).

    ``embed_fn`` maps a list of noisy waveforms to an (n, D) array. Each
    utterance is corrupted once per condition with a seed derived from
    (utt_id, condition), so results do not depend on trial order.
    """
    for c in conditions:
        if c.kind != "clean" and c.pool != "test":
            raise PoolViolationError(f"evaluation condition {c} draws from the {c.pool} pool")
    needed = {t.utt_a for t in trials} | {t.utt_b for t in trials}
    utts = [u for u in utterances if u.utt_id in needed]
    if len(utts) != len(needed):
        known = {u.utt_id for u in utts}
        raise InvalidArgumentError(f"trials reference unknown utterances {sorted(needed - known)[:5]}")
    segments = {u.utt_id: eval_segment(u, segment_s) for u in utts}
    rows = []
    for cond in conditions:
        cache = {}
        ids = list(segments)
        for i in range(0, len(ids), batch_size):
            chunk = ids[i:i + batch_size]
            noisy = [corrupt(segments[u], cond, bank, condition_seed(u, cond)) for u in chunk]
            for u, e in zip(chunk, embed_fn(noisy)):
                cache[u] = e
        scores, labels = score_trials(cache, trials)
        rows.append({"condition": cond.kind, "snr_db": cond.snr_db,
                     "eer": compute_eer(scores, labels),
                     "n_target": int(labels.sum()), "n_nontarget": int((labels == 0).sum())})
    if rows:
        rows.append({"condition": "average", "snr_db": None,
                     "eer": float(np.mean([r["eer"] for r in rows])),
                     "n_target": rows[0]["n_target"], "n_nontarget": rows[0]["n_nontarget"]})
    return rows


def _fmt_snr(v):
    if v is None:
        return ""
    return str(int(v)) if float(v).is_integer() else str(v)


def write_results_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["condition", "snr_db", "eer", "n_target", "n_nontarget"])
        for r in rows:
            w.writerow([r["condition"], _fmt_snr(r["snr_db"]), repr(float(r["eer"])),
                        r["n_target"], r["n_nontarget"]])


def read_results_csv(path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    for r in rows:
        r["snr_db"] = float(r["snr_db"]) if r["snr_db"] else None
        r["eer"] = float(r["eer"])
        r["n_target"], r["n_nontarget"] = int(r["n_target"]), int(r["n_nontarget"])
    return rows
