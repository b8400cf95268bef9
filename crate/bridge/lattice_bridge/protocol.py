import json
import sys
from typing import IO, List, Optional, Protocol, Sequence, Tuple

PROTOCOL_VERSION = 1

Entry = Tuple[int, float]


class Backend(Protocol):
    vocab_size: int
    sos_id: int
    eos_id: int

    def score(self, prefix: Sequence[int], source: Sequence[int], k: int) -> List[Entry]: ...

    def encode(self, text: str) -> List[int]: ...

    def vocab(self) -> Optional[List[str]]: ...

    def set_deterministic(self, on: bool) -> None: ...


def _ids(value, field):
    if not isinstance(value, list) or not all(isinstance(x, int) and not isinstance(x, bool) and x >= 0 for x in value):
        raise ValueError(f"`{field}` must be a list of token ids")
    return value


class Session:
    """Protocol state for one client: the negotiated top-k and whether the
    session has ended."""

    def __init__(self, backend: Backend, top_k: int = 5, send_vocab: bool = True):
        self.backend = backend
        self.top_k = top_k
        self.send_vocab = send_vocab
        self.closed = False

    def handle(self, line: str) -> dict:
        try:
            req = json.loads(line)
        except json.JSONDecodeError as e:
            return {"error": f"request is not JSON: {e}"}
        if not isinstance(req, dict):
            return {"error": "request is not an object"}
        op = req.get("op")
        try:
            if op == "hello":
                return self._hello(req)
            if op == "score":
                prefix = _ids(req.get("prefix"), "prefix")
                source = _ids(req.get("source", []), "source")
                entries = self.backend.score(prefix, source, self.top_k)
                return {"entries": [[int(t), float(lp)] for t, lp in entries]}
            if op == "encode":
                text = req.get("text")
                if not isinstance(text, str):
                    return {"error": "encode request lacks `text`"}
                return {"ids": [int(t) for t in self.backend.encode(text)]}
            if op == "bye":
                self.closed = True
                return {"ok": True}
        except (ValueError, KeyError, IndexError) as e:
            return {"error": str(e)}
        return {"error": f"unknown op {op!r}"}

    def _hello(self, req: dict) -> dict:
        version = req.get("version", PROTOCOL_VERSION)
        if version != PROTOCOL_VERSION:
            return {"error": f"unsupported protocol version {version}"}
        k = req.get("k")
        if k is not None:
            if not isinstance(k, int) or k < 1:
                return {"error": "`k` must be a positive integer"}
            self.top_k = k
        if req.get("deterministic"):
            self.backend.set_deterministic(True)
        reply = {
            "version": PROTOCOL_VERSION,
            "vocab_size": self.backend.vocab_size,
            "eos_id": self.backend.eos_id,
            "sos_id": self.backend.sos_id,
        }
        vocab = self.backend.vocab() if self.send_vocab else None
        if vocab is not None:
            reply["vocab"] = vocab
        return reply


def serve(backend: Backend, stdin: IO[str] = sys.stdin, stdout: IO[str] = sys.stdout, **kwargs) -> None:
    """Answers requests until `bye` or end of input."""
    session = Session(backend, **kwargs)
    for line in stdin:
        if not line.strip():
            continue
        reply = session.handle(line)
        stdout.write(json.dumps(reply, allow_nan=False) + "\n")
        stdout.flush()
        if session.closed:
            return
