from typing import List, Optional, Sequence, Tuple


class HFBackend:
    """A Hugging Face encoder-decoder model.

    Scores are the full softmax over the vocabulary in float64, truncated to
    the top k. The last encoder output is cached, since a search scores many
    prefixes against one source.
    """

    def __init__(self, model, tokenizer=None, device: str = "cpu"):
        import torch

        self.torch = torch
        self.model = model.to(device).eval()
        self.tokenizer = tokenizer
        self.device = device
        cfg = model.config
        self.vocab_size = int(cfg.vocab_size)
        self.sos_id = int(cfg.decoder_start_token_id)
        self.eos_id = int(cfg.eos_token_id)
        self._cached: Optional[Tuple[Tuple[int, ...], object]] = None

    @classmethod
    def load(cls, name: str, device: str = "cpu") -> "HFBackend":
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        return cls(AutoModelForSeq2SeqLM.from_pretrained(name), AutoTokenizer.from_pretrained(name), device)

    def _encoder(self, source: Sequence[int]):
        key = tuple(source) or (self.eos_id,)
        if self._cached is None or self._cached[0] != key:
            ids = self.torch.tensor([list(key)], device=self.device)
            with self.torch.no_grad():
                out = self.model.get_encoder()(input_ids=ids)
            self._cached = (key, out)
        return self._cached[1]

    def score(self, prefix: Sequence[int], source: Sequence[int], k: int) -> List[Tuple[int, float]]:
        torch = self.torch
        if not prefix:
            raise ValueError("prefix must start with the start token")
        dec = torch.tensor([list(prefix)], device=self.device)
        with torch.no_grad():
            out = self.model(encoder_outputs=self._encoder(source), decoder_input_ids=dec)
        logp = torch.log_softmax(out.logits[0, -1].double(), dim=-1)
        top = torch.topk(logp, min(k, logp.numel()))
        entries = [(int(t), float(lp)) for lp, t in zip(top.values.tolist(), top.indices.tolist())]
        entries.sort(key=lambda e: (-e[1], e[0]))
        return entries

    def encode(self, text: str) -> List[int]:
        if self.tokenizer is None:
            raise ValueError("this bridge has no tokenizer")
        return list(self.tokenizer(text)["input_ids"])

    def vocab(self) -> Optional[List[str]]:
        if self.tokenizer is None:
            return None
        return [str(t) for t in self.tokenizer.convert_ids_to_tokens(list(range(self.vocab_size)))]

    def set_deterministic(self, on: bool) -> None:
        self.torch.use_deterministic_algorithms(on)
