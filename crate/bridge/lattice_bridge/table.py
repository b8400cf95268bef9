import json
import math
from typing import Dict, List, Optional, Sequence, Tuple

SOS_TEXT = "<s>"
EOS_TEXT = "</s>"
SOS, EOS = 0, 1


def _normalize(entries, k):
    # Same order as the decoder's own distributions: descending log-prob,
    # ties to the lower id, consecutive duplicates dropped.
    kept = sorted(((t, lp) for t, lp in entries if math.isfinite(lp)), key=lambda e: (-e[1], e[0]))
    out = []
    for e in kept:
        if out and out[-1][0] == e[0]:
            continue
        out.append(e)
    return out[:k]


class TableBackend:
    """Explicit prefix table in the JSON format the `lattice` binary reads.

    Prefixes are keyed by generated tokens; unlisted prefixes get the
    default row, which without one puts all mass on the end token.
    """

    def __init__(self, words: Sequence[str]):
        self.words: List[str] = []
        self.index: Dict[str, int] = {}
        for w in [SOS_TEXT, EOS_TEXT, *words]:
            self._intern(w)
        self.rows: Dict[Tuple[int, ...], List[Tuple[int, float]]] = {}
        self.default = [(EOS, 0.0)]
        self.sos_id, self.eos_id = SOS, EOS

    @property
    def vocab_size(self) -> int:
        return len(self.words)

    def _intern(self, w: str) -> int:
        if w not in self.index:
            self.index[w] = len(self.words)
            self.words.append(w)
        return self.index[w]

    def _id(self, w: str) -> int:
        if w not in self.index:
            raise ValueError(f"table model: unknown word {w!r}")
        return self.index[w]

    def _check(self, entries):
        for t, lp in entries:
            if t == SOS or t >= len(self.words):
                raise ValueError(f"token id {t} cannot be predicted")
            if not lp <= 0.0 or math.isinf(lp):
                raise ValueError(f"log-probability {lp} for token {t} is not in (-inf, 0]")
        return _normalize(entries, len(entries))

    @classmethod
    def from_json(cls, text: str) -> "TableBackend":
        spec = json.loads(text)
        m = cls(spec["vocab"])
        for row in spec.get("rows", []):
            prefix = tuple(m._id(w) for w in row["prefix"])
            m.rows[prefix] = m._check([(m._id(w), float(lp)) for w, lp in row["next"]])
        if spec.get("default") is not None:
            m.default = m._check([(m._id(w), float(lp)) for w, lp in spec["default"]])
        return m

    def score(self, prefix: Sequence[int], source: Sequence[int], k: int) -> List[Tuple[int, float]]:
        return self.rows.get(tuple(prefix[1:]), self.default)[:k]

    def encode(self, text: str) -> List[int]:
        return [self.index[w] for w in text.split() if w in self.index]

    def vocab(self) -> Optional[List[str]]:
        return list(self.words)

    def set_deterministic(self, on: bool) -> None:
        pass
