"""Per-agent episodic memory with similarity, importance and timeliness gates."""

from __future__ import annotations

import hashlib
import json
import math
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .domain import BackendError, EmotionLabel


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


_TOKEN = re.compile(r"[a-z_]+|\d+")


class HashingEmbedder:
    """Deterministic signed feature-hash bag of words, L2-normalised.

    Numbers are bucketed by magnitude so that "payout 31" and "payout 33" share
    a feature. Stands in for a sentence encoder; any object with ``dim`` and
    ``embed`` can replace it.
    """

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise ValueError("embedding dimension must be >= 1")
        self.dim = dim

    def _features(self, text: str) -> Iterable[str]:
        prev = None
        for tok in _TOKEN.findall(text.lower()):
            if tok.isdigit():
                tok = f"<num{len(tok)}:{tok[0]}>"
            yield tok
            if prev is not None:
                yield prev + " " + tok
            prev = tok

    def embed(self, text: str) -> np.ndarray:
        v = np.zeros(self.dim)
        for feat in self._features(text):
            h = hashlib.blake2b(feat.encode(), digest_size=8).digest()
            idx = int.from_bytes(h[:4], "little") % self.dim
            v[idx] += 1.0 if h[4] & 1 else -1.0
        n = np.linalg.norm(v)
        if n == 0:
            v[0] = 1.0
            return v
        return v / n


def cosine_similarity(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity undefined for a zero vector")
    return float(max(-1.0, min(1.0, np.dot(a, b) / (na * nb))))


@dataclass
class MemoryRecord:
    created_tick: int
    problem_text: str
    decision_text: str
    rationale_text: str
    embedding: np.ndarray
    importance: float
    emotion_at_write: EmotionLabel = EmotionLabel.NEUTRAL
    id: int = -1

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "created_tick": self.created_tick,
            "problem_text": self.problem_text,
            "decision_text": self.decision_text,
            "rationale_text": self.rationale_text,
            "embedding": [float(x) for x in self.embedding],
            "importance": self.importance,
            "emotion_at_write": EmotionLabel(self.emotion_at_write).value,
        }

    @classmethod
    def from_json(cls, d: dict) -> "MemoryRecord":
        return cls(
            id=d["id"],
            created_tick=d["created_tick"],
            problem_text=d["problem_text"],
            decision_text=d["decision_text"],
            rationale_text=d["rationale_text"],
            embedding=np.asarray(d["embedding"], dtype=float),
            importance=d["importance"],
            emotion_at_write=EmotionLabel(d["emotion_at_write"]),
        )

    def snippet(self) -> str:
        text = f"{self.problem_text} -> {self.decision_text}"
        if self.rationale_text:
            text += f" ({self.rationale_text})"
        return text


@dataclass(frozen=True)
class RetrievalQuery:
    query_embedding: np.ndarray
    now_tick: int
    k: int = 3
    min_similarity: float = 0.4
    min_importance: float = 0.3
    ttl_ticks: int = 3 * 1440

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not (0 <= self.min_similarity <= 1 and 0 <= self.min_importance <= 1):
            raise ValueError("thresholds must lie in [0, 1]")
        if self.ttl_ticks <= 0:
            raise ValueError("ttl_ticks must be positive")


class MemoryWriteError(ValueError):
    pass


class MemoryStore:
    """Single-writer record store; retrieval is a linear scan."""

    def __init__(self, dim: int = 64):
        self.dim = dim
        self._records: dict[int, MemoryRecord] = {}
        self._next_id = 0

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records.values())

    def write(self, record: MemoryRecord) -> int:
        emb = np.asarray(record.embedding, dtype=float)
        if emb.shape != (self.dim,):
            raise MemoryWriteError(f"embedding has shape {emb.shape}, store expects ({self.dim},)")
        if not 0.0 <= record.importance <= 1.0:
            raise MemoryWriteError(f"importance {record.importance} outside [0, 1]")
        record.embedding = emb
        record.id = self._next_id
        self._next_id += 1
        self._records[record.id] = record
        return record.id

    def get(self, record_id: int) -> MemoryRecord:
        return self._records[record_id]

    def retrieve(self, q: RetrievalQuery) -> list[MemoryRecord]:
        hits = []
        for rec in self._records.values():
            if rec.importance < q.min_importance or q.now_tick - rec.created_tick > q.ttl_ticks:
                continue
            sim = cosine_similarity(rec.embedding, q.query_embedding)
            if sim >= q.min_similarity:
                hits.append((sim, rec))
        hits.sort(key=lambda h: (-h[0], -h[1].created_tick, -h[1].id))
        return [rec for _, rec in hits[: q.k]]

    def evict_expired(self, now_tick: int, ttl_ticks: int) -> list[int]:
        """Drop records whose age exceeds ttl_ticks; return their ids."""
        stale = [rid for rid, r in self._records.items() if now_tick - r.created_tick > ttl_ticks]
        for rid in stale:
            del self._records[rid]
        return stale

    def snapshot(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            for rid in sorted(self._records):
                fh.write(json.dumps(self._records[rid].to_json(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path, dim: int) -> "MemoryStore":
        store = cls(dim)
        with Path(path).open(encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = MemoryRecord.from_json(json.loads(line))
                store._records[rec.id] = rec
                store._next_id = max(store._next_id, rec.id + 1)
        return store


_NUMBER = re.compile(r"[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?")


def parse_importance(text: str) -> float | None:
    m = _NUMBER.search(text or "")
    if m is None:
        return None
    value = float(m.group())
    if not math.isfinite(value):
        return None
    return min(1.0, max(0.0, value))


def score_importance(rationale_text: str, backend, *, decision_text: str = "", default: float = 0.5, registry=None) -> float:
    """Ask an evaluator model how much emotion drove a decision.

    Unparseable replies fall back to ``default``; transport errors propagate.
    """
    from .desire import default_registry

    prompt = (registry or default_registry()).render("importance", decision=decision_text, rationale=rationale_text)
    try:
        reply = backend.respond(prompt)
    except BackendError as exc:
        raise BackendError(f"importance scoring of decision {decision_text!r} failed: {exc}") from exc
    value = parse_importance(reply)
    return default if value is None else value
