import argparse
import logging
import sys

from .protocol import serve
from .table import TableBackend


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="lattice-bridge", description=__doc__)
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--table", help="JSON table model")
    src.add_argument("--hf", metavar="MODEL", help="Hugging Face seq2seq checkpoint name or path")
    ap.add_argument("--top-k", type=int, default=5)
    ap.add_argument("--device", default="cpu")
    ap.add_argument("--no-vocab", action="store_true", help="leave the vocabulary out of the handshake")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr)

    try:
        if args.table:
            with open(args.table, encoding="utf-8") as f:
                backend = TableBackend.from_json(f.read())
        else:
            from .hf import HFBackend

            backend = HFBackend.load(args.hf, args.device)
    except Exception as e:  # any load failure ends the process before the handshake
        print(f"lattice-bridge: cannot load model: {e}", file=sys.stderr)
        return 1
    serve(backend, top_k=args.top_k, send_vocab=not args.no_vocab)
    return 0


if __name__ == "__main__":
    sys.exit(main())
