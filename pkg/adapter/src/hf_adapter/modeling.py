"""Model management: loading, fine-tuning, decoding with per-token entropies,
embedding, and scoring for the backend wire protocol.

Fine-tuned checkpoints are immutable snapshots keyed by a deterministic id
(hash of the training payload) and evicted LRU; the harness's from-base-only
discipline keeps the live set small.
"""

from __future__ import annotations

import copy
import hashlib
import json
import string
import threading
from collections import OrderedDict

import torch
import torch.nn.functional as F

from hf_adapter.config import TINY_RANDOM, AdapterConfig

BASE_MODEL_ID = "base"


class AdapterError(ValueError):
    """Protocol-level error; the server maps it to a 4xx response."""


def _tiny_random_vocab() -> list[str]:
    words = (
        "the a an of to in on for and or is was are be with as at by from "
        "this that it he she they we you i not no yes if then than so but "
        "text write short long here there question answer context formal "
        "informal summary paraphrase one two three four five six seven "
        "eight nine zero do does did done make made take took give gave "
        "good bad new old big small first last next over under about"
    ).split()
    words += list(string.ascii_lowercase) + list(string.digits) + list(".,:;!?'\"-()")
    seen = []
    for w in words:
        if w not in seen:
            seen.append(w)
    return seen


def _build_tiny_random(device: str):
    """A small randomly-initialized encoder-decoder plus a word-level
    tokenizer, built entirely in-process (no hub access)."""
    from tokenizers import Tokenizer
    from tokenizers.models import WordLevel
    from tokenizers.pre_tokenizers import Whitespace
    from tokenizers.processors import TemplateProcessing
    from transformers import PreTrainedTokenizerFast, T5Config, T5ForConditionalGeneration

    words = _tiny_random_vocab()
    vocab = {"<pad>": 0, "</s>": 1, "<unk>": 2}
    for w in words:
        vocab[w] = len(vocab)
    tok = Tokenizer(WordLevel(vocab, unk_token="<unk>"))
    tok.pre_tokenizer = Whitespace()
    tok.post_processor = TemplateProcessing(
        single="$A </s>", pair="$A </s> $B </s>", special_tokens=[("</s>", 1)]
    )
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=tok, pad_token="<pad>", eos_token="</s>", unk_token="<unk>"
    )
    config = T5Config(
        vocab_size=len(vocab),
        d_model=32,
        d_kv=8,
        d_ff=64,
        num_layers=2,
        num_heads=2,
        dropout_rate=0.1,
        decoder_start_token_id=0,
        pad_token_id=0,
        eos_token_id=1,
    )
    torch.manual_seed(1234)  # reproducible random weights across processes
    model = T5ForConditionalGeneration(config).to(device)
    model.eval()
    return tokenizer, model


class ModelManager:
    def __init__(self, config: AdapterConfig):
        self.config = config
        self.device = config.device
        if config.model_name == TINY_RANDOM:
            self.tokenizer, self.base = _build_tiny_random(self.device)
        else:
            from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

            self.tokenizer = AutoTokenizer.from_pretrained(config.model_name)
            self.base = AutoModelForSeq2SeqLM.from_pretrained(config.model_name).to(self.device)
            self.base.eval()
        self._models: OrderedDict[str, torch.nn.Module] = OrderedDict()
        self._lock = threading.Lock()  # one in-flight fine-tune at a time
        self.formality_pipe = None
        if config.formality_model:
            from transformers import pipeline

            self.formality_pipe = pipeline(
                "text-classification", model=config.formality_model, device=-1
            )

    # --- capabilities ---

    def capabilities(self) -> list[str]:
        flags = ["finetune", "generate", "embed", "score_similarity"]
        if self.config.dropout_sampling:
            flags.append("stochastic_generate")
        if self.formality_pipe is not None:
            flags.append("score_formality")
        return sorted(flags)

    # --- model registry ---

    def _resolve(self, model_id: str) -> torch.nn.Module:
        if model_id == BASE_MODEL_ID:
            return self.base
        with self._lock:
            if model_id not in self._models:
                raise AdapterError(f"unknown model {model_id!r}")
            self._models.move_to_end(model_id)
            return self._models[model_id]

    def finetune(self, base_model_id: str, examples: list[dict], spec: dict) -> str:
        if base_model_id != BASE_MODEL_ID:
            raise AdapterError("fine-tuning starts from the base model, never incrementally")
        if not examples:
            return BASE_MODEL_ID
        payload = json.dumps({"examples": examples, "spec": spec}, sort_keys=True)
        model_id = "ft-" + hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
        with self._lock:
            if model_id in self._models:
                self._models.move_to_end(model_id)
                return model_id
            model = self._train(examples, spec)
            self._models[model_id] = model
            while len(self._models) > self.config.max_cached_models:
                self._models.popitem(last=False)
        return model_id

    def _train(self, examples: list[dict], spec: dict) -> torch.nn.Module:
        from transformers.optimization import Adafactor

        torch.manual_seed(spec["seed"])
        model = copy.deepcopy(self.base).to(self.device)
        model.train()
        optimizer = Adafactor(
            model.parameters(),
            lr=spec["learning_rate"],
            scale_parameter=False,
            relative_step=False,
            warmup_init=False,
        )
        inputs = [ex["input"] for ex in examples]
        targets = [ex["target"] for ex in examples]
        batch_size = spec["train_batch_size"]
        for _ in range(spec["epochs"]):
            order = torch.randperm(len(examples)).tolist()
            for start in range(0, len(order), batch_size):
                idx = order[start : start + batch_size]
                enc = self.tokenizer(
                    [inputs[i] for i in idx],
                    return_tensors="pt",
                    padding=True,
                    truncation=True,
                    max_length=256,
                ).to(self.device)
                labels = self.tokenizer(
                    [targets[i] for i in idx],
                    return_tensors="pt",
                    padding=True,
                    truncation=True,
                    max_length=256,
                ).input_ids.to(self.device)
                labels[labels == self.tokenizer.pad_token_id] = -100
                loss = model(**enc, labels=labels).loss
                loss.backward()
                optimizer.step()
                optimizer.zero_grad()
        model.eval()
        return model

    # --- generation ---

    @torch.no_grad()
    def _decode_once(self, model, texts: list[str]) -> list[tuple[str, list[float]]]:
        enc = self.tokenizer(
            texts, return_tensors="pt", padding=True, truncation=True, max_length=256
        ).to(self.device)
        out = model.generate(
            **enc,
            max_new_tokens=self.config.max_new_tokens,
            num_beams=self.config.num_beams,
            do_sample=False,
            output_scores=True,
            return_dict_in_generate=True,
        )
        sequences = out.sequences[:, 1:]  # drop the decoder start token
        special = set(self.tokenizer.all_special_ids)
        results = []
        for row in range(sequences.shape[0]):
            token_ids = sequences[row]
            entropies = []
            kept_ids = []
            for step, token_id in enumerate(token_ids.tolist()):
                if step >= len(out.scores):
                    break
                if token_id in special:
                    continue
                logp = F.log_softmax(out.scores[step][row].float(), dim=-1)
                entropy = float(-(logp.exp() * logp).sum())
                entropies.append(max(0.0, entropy))
                kept_ids.append(token_id)
            text = self.tokenizer.decode(kept_ids, skip_special_tokens=True)
            results.append((text, entropies))
        return results

    def generate(self, model_id: str, inputs: list[dict], mode) -> dict[str, list[dict]]:
        model = self._resolve(model_id)
        ids = [item["id"] for item in inputs]
        texts = [item["text"] for item in inputs]
        out: dict[str, list[dict]] = {i: [] for i in ids}
        if mode == "deterministic":
            model.eval()
            if texts:
                for example_id, (text, entropies) in zip(ids, self._decode_once(model, texts)):
                    out[example_id].append({"text": text, "token_entropies": entropies})
            return out
        if not self.config.dropout_sampling:
            raise AdapterError("stochastic generation is disabled on this server")
        num_samples = mode["stochastic"]["num_samples"]
        seed = mode["stochastic"]["seed"]
        # dropout stays active during decoding; each sample gets its own seed
        model.train()
        try:
            for k in range(num_samples):
                torch.manual_seed(seed * 100003 + k)
                if texts:
                    for example_id, (text, entropies) in zip(ids, self._decode_once(model, texts)):
                        out[example_id].append({"text": text, "token_entropies": entropies})
        finally:
            model.eval()
        return out

    # --- embeddings ---

    @torch.no_grad()
    def _encode_mean(self, texts: list[str]) -> torch.Tensor:
        enc = self.tokenizer(
            texts, return_tensors="pt", padding=True, truncation=True, max_length=256
        ).to(self.device)
        hidden = self.base.get_encoder()(**enc).last_hidden_state
        mask = enc.attention_mask.unsqueeze(-1).float()
        return (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)

    def embed(self, inputs: list[dict]) -> tuple[int, dict[str, list[float]]]:
        dim = int(self.base.config.d_model)
        if not inputs:
            return dim, {}
        vectors = self._encode_mean([item["text"] for item in inputs])
        return dim, {
            item["id"]: [float(x) for x in vectors[row]] for row, item in enumerate(inputs)
        }

    # --- scoring ---

    def score(self, kind: str, items: list[dict]) -> list[float]:
        if kind == "similarity":
            if not items:
                return []
            for item in items:
                if item.get("reference") is None:
                    raise AdapterError("similarity scoring needs a reference")
            cands = self._encode_mean([item["candidate"] for item in items])
            refs = self._encode_mean([item["reference"] for item in items])
            cos = F.cosine_similarity(cands, refs, dim=-1)
            return [float(min(1.0, max(0.0, (c + 1.0) / 2.0))) for c in cos]
        if kind == "formality":
            if self.formality_pipe is None:
                raise AdapterError("no formality classifier is loaded on this server")
            results = self.formality_pipe([item["candidate"] for item in items])
            scores = []
            for res in results:
                p = float(res["score"])
                scores.append(p if res["label"].lower().startswith("formal") else 1.0 - p)
            return [min(1.0, max(0.0, s)) for s in scores]
        raise AdapterError(f"unknown score kind {kind!r}")
