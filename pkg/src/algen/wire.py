"""HTTP wire protocol for model backends: JSON schemas, client, and server.

Request/response shapes are normative; the validators here are shared by the
client, the server, and the protocol tests, so both ends reject the same
malformed messages. Errors travel as non-2xx responses with {"error": str}.
"""

from __future__ import annotations

import json
import math
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import requests

from algen.backend import (
    BASE_MODEL_ID,
    Backend,
    BackendCapabilities,
    FinetuneSpec,
    Generation,
    GenerationMode,
    ModelHandle,
)
from algen.geometry import EmbeddingSet

ENDPOINTS = ("/capabilities", "/finetune", "/generate", "/embed", "/score")


class ProtocolError(ValueError):
    pass


def _require(cond: bool, msg: str):
    if not cond:
        raise ProtocolError(msg)


def _check_str(value, name: str) -> str:
    _require(isinstance(value, str), f"{name} must be a string")
    return value


def _check_finite_number(value, name: str) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool), f"{name} must be a number")
    _require(math.isfinite(value), f"{name} must be finite")
    return float(value)


def _check_inputs(value, name: str = "inputs") -> list:
    _require(isinstance(value, list), f"{name} must be a list")
    for item in value:
        _require(isinstance(item, dict), f"{name} entries must be objects")
        _check_str(item.get("id"), f"{name}[].id")
        _check_str(item.get("text"), f"{name}[].text")
    return value


# --- request/response validators, one pair per endpoint ---

def validate_capabilities_request(body) -> dict:
    _require(isinstance(body, dict), "capabilities request must be an object")
    return body


def validate_capabilities_response(body) -> dict:
    _require(isinstance(body, dict), "capabilities response must be an object")
    flags = body.get("flags")
    _require(isinstance(flags, list), "flags must be a list")
    for flag in flags:
        _check_str(flag, "flags[]")
    return body


def validate_finetune_request(body) -> dict:
    _require(isinstance(body, dict), "finetune request must be an object")
    _check_str(body.get("base_model_id"), "base_model_id")
    examples = body.get("examples")
    _require(isinstance(examples, list), "examples must be a list")
    for item in examples:
        _require(isinstance(item, dict), "examples entries must be objects")
        _check_str(item.get("input"), "examples[].input")
        _check_str(item.get("target"), "examples[].target")
    spec = body.get("spec")
    _require(isinstance(spec, dict), "spec must be an object")
    for key in ("epochs", "train_batch_size", "seed"):
        _require(isinstance(spec.get(key), int) and not isinstance(spec.get(key), bool), f"spec.{key} must be an integer")
    _check_finite_number(spec.get("learning_rate"), "spec.learning_rate")
    return body


def validate_finetune_response(body) -> dict:
    _require(isinstance(body, dict), "finetune response must be an object")
    _check_str(body.get("model_id"), "model_id")
    return body


def validate_generate_request(body) -> dict:
    _require(isinstance(body, dict), "generate request must be an object")
    _check_str(body.get("model_id"), "model_id")
    _check_inputs(body.get("inputs"))
    mode = body.get("mode")
    if mode == "deterministic":
        return body
    _require(isinstance(mode, dict) and set(mode) == {"stochastic"}, "mode must be 'deterministic' or {'stochastic': ...}")
    stoch = mode["stochastic"]
    _require(isinstance(stoch, dict), "mode.stochastic must be an object")
    num = stoch.get("num_samples")
    _require(isinstance(num, int) and not isinstance(num, bool), "num_samples must be an integer")
    _require(num >= 2, "num_samples must be >= 2")
    _require(isinstance(stoch.get("seed"), int) and not isinstance(stoch.get("seed"), bool), "seed must be an integer")
    return body


def validate_generate_response(body) -> dict:
    _require(isinstance(body, dict), "generate response must be an object")
    generations = body.get("generations")
    _require(isinstance(generations, dict), "generations must be an object")
    for example_id, items in generations.items():
        _check_str(example_id, "generations key")
        _require(isinstance(items, list) and items, f"generations[{example_id!r}] must be a nonempty list")
        for item in items:
            _require(isinstance(item, dict), "generation entries must be objects")
            _check_str(item.get("text"), "generations[].text")
            entropies = item.get("token_entropies")
            _require(isinstance(entropies, list), "generations[].token_entropies must be a list")
            for e in entropies:
                value = _check_finite_number(e, "token_entropies[]")
                _require(value >= 0.0, "token_entropies[] must be >= 0")
    return body


def validate_embed_request(body) -> dict:
    _require(isinstance(body, dict), "embed request must be an object")
    _check_inputs(body.get("inputs"))
    return body


def validate_embed_response(body) -> dict:
    _require(isinstance(body, dict), "embed response must be an object")
    dim = body.get("dim")
    _require(isinstance(dim, int) and not isinstance(dim, bool) and dim >= 1, "dim must be a positive integer")
    vectors = body.get("vectors")
    _require(isinstance(vectors, dict), "vectors must be an object")
    for example_id, vec in vectors.items():
        _check_str(example_id, "vectors key")
        _require(isinstance(vec, list) and len(vec) == dim, f"vectors[{example_id!r}] must have {dim} components")
        for comp in vec:
            _check_finite_number(comp, "vectors[][]")
    return body


def validate_score_request(body) -> dict:
    _require(isinstance(body, dict), "score request must be an object")
    _require(body.get("kind") in ("formality", "similarity"), "kind must be 'formality' or 'similarity'")
    items = body.get("items")
    _require(isinstance(items, list), "items must be a list")
    for item in items:
        _require(isinstance(item, dict), "items entries must be objects")
        _check_str(item.get("candidate"), "items[].candidate")
        ref = item.get("reference")
        _require(ref is None or isinstance(ref, str), "items[].reference must be a string or null")
        if body["kind"] == "similarity":
            _require(ref is not None, "similarity items need a reference")
    return body


def validate_score_response(body) -> dict:
    _require(isinstance(body, dict), "score response must be an object")
    scores = body.get("scores")
    _require(isinstance(scores, list), "scores must be a list")
    for s in scores:
        value = _check_finite_number(s, "scores[]")
        _require(0.0 <= value <= 1.0, "scores[] must be in [0, 1]")
    return body


REQUEST_VALIDATORS = {
    "/capabilities": validate_capabilities_request,
    "/finetune": validate_finetune_request,
    "/generate": validate_generate_request,
    "/embed": validate_embed_request,
    "/score": validate_score_request,
}

RESPONSE_VALIDATORS = {
    "/capabilities": validate_capabilities_response,
    "/finetune": validate_finetune_response,
    "/generate": validate_generate_response,
    "/embed": validate_embed_response,
    "/score": validate_score_response,
}


def mode_to_wire(mode: GenerationMode):
    if mode.kind == "deterministic":
        return "deterministic"
    return {"stochastic": {"num_samples": mode.num_samples, "seed": mode.seed}}


def mode_from_wire(wire) -> GenerationMode:
    if wire == "deterministic":
        return GenerationMode("deterministic")
    stoch = wire["stochastic"]
    return GenerationMode("stochastic", num_samples=stoch["num_samples"], seed=stoch["seed"])


class RemoteBackend:
    """Client for any server speaking the backend wire protocol."""

    def __init__(self, url: str, timeout: float = 600.0):
        self.url = url.rstrip("/")
        self.timeout = timeout
        self._session = requests.Session()

    def _post(self, endpoint: str, body: dict) -> dict:
        REQUEST_VALIDATORS[endpoint](body)
        resp = self._session.post(self.url + endpoint, json=body, timeout=self.timeout)
        try:
            payload = resp.json()
        except ValueError as err:
            raise ProtocolError(f"{endpoint}: non-JSON response (HTTP {resp.status_code})") from err
        if resp.status_code != 200:
            message = payload.get("error") if isinstance(payload, dict) else None
            raise ProtocolError(f"{endpoint}: HTTP {resp.status_code}: {message or payload}")
        return RESPONSE_VALIDATORS[endpoint](payload)

    def capabilities(self) -> BackendCapabilities:
        body = self._post("/capabilities", {})
        return BackendCapabilities(frozenset(body["flags"]))

    def base_model(self) -> ModelHandle:
        return ModelHandle(BASE_MODEL_ID, base=True)

    def finetune(self, base: ModelHandle, labeled: list[tuple[str, str]], spec: FinetuneSpec) -> ModelHandle:
        body = self._post(
            "/finetune",
            {
                "base_model_id": base.model_id,
                "examples": [{"input": inp, "target": target} for inp, target in labeled],
                "spec": {
                    "epochs": spec.epochs,
                    "learning_rate": spec.learning_rate,
                    "train_batch_size": spec.train_batch_size,
                    "seed": spec.seed,
                },
            },
        )
        model_id = body["model_id"]
        return ModelHandle(model_id, base=model_id == BASE_MODEL_ID)

    def generate(
        self, model: ModelHandle, inputs: list[tuple[str, str]], mode: GenerationMode
    ) -> dict[str, list[Generation]]:
        body = self._post(
            "/generate",
            {
                "model_id": model.model_id,
                "inputs": [{"id": i, "text": t} for i, t in inputs],
                "mode": mode_to_wire(mode),
            },
        )
        out: dict[str, list[Generation]] = {}
        for example_id, items in body["generations"].items():
            out[example_id] = [
                Generation(
                    example_id=example_id,
                    text=item["text"],
                    token_entropies=tuple(float(e) for e in item["token_entropies"]),
                )
                for item in items
            ]
        return out

    def embed(self, inputs: list[tuple[str, str]]) -> EmbeddingSet:
        body = self._post("/embed", {"inputs": [{"id": i, "text": t} for i, t in inputs]})
        vectors = {i: np.asarray(v, dtype=float) for i, v in body["vectors"].items()}
        return EmbeddingSet(dim=body["dim"], vectors=vectors)

    def score(self, kind: str, items: list[tuple[str, str | None]]) -> list[float]:
        body = self._post(
            "/score",
            {"kind": kind, "items": [{"candidate": c, "reference": r} for c, r in items]},
        )
        scores = body["scores"]
        if len(scores) != len(items):
            raise ProtocolError(f"/score: got {len(scores)} scores for {len(items)} items")
        return [float(s) for s in scores]


def _dispatch(backend: Backend, endpoint: str, body: dict) -> dict:
    """Translate one validated wire request into backend calls and back."""
    if endpoint == "/capabilities":
        return {"flags": sorted(backend.capabilities().flags)}
    if endpoint == "/finetune":
        spec_dict = body["spec"]
        spec = FinetuneSpec(
            epochs=spec_dict["epochs"],
            learning_rate=spec_dict["learning_rate"],
            train_batch_size=spec_dict["train_batch_size"],
            seed=spec_dict["seed"],
        )
        base = ModelHandle(body["base_model_id"], base=body["base_model_id"] == BASE_MODEL_ID)
        labeled = [(item["input"], item["target"]) for item in body["examples"]]
        handle = backend.finetune(base, labeled, spec)
        return {"model_id": handle.model_id}
    if endpoint == "/generate":
        mode = mode_from_wire(body["mode"])
        model_id = body["model_id"]
        model = ModelHandle(model_id, base=model_id == BASE_MODEL_ID)
        inputs = [(item["id"], item["text"]) for item in body["inputs"]]
        generations = backend.generate(model, inputs, mode)
        return {
            "generations": {
                example_id: [
                    {"text": g.text, "token_entropies": list(g.token_entropies)}
                    for g in items
                ]
                for example_id, items in generations.items()
            }
        }
    if endpoint == "/embed":
        inputs = [(item["id"], item["text"]) for item in body["inputs"]]
        emb = backend.embed(inputs)
        return {"dim": emb.dim, "vectors": {i: [float(x) for x in emb[i]] for i in emb.ids()}}
    if endpoint == "/score":
        items = [(item["candidate"], item.get("reference")) for item in body["items"]]
        return {"scores": [float(s) for s in backend.score(body["kind"], items)]}
    raise ProtocolError(f"unknown endpoint {endpoint}")


class BackendServer:
    """Serves any in-process Backend over the wire protocol (thread-based)."""

    def __init__(self, backend: Backend, host: str = "127.0.0.1", port: int = 0):
        handler = _make_handler(backend)
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "BackendServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join()

    def serve_forever(self):
        self._httpd.serve_forever()


def _make_handler(backend: Backend):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):  # keep test output quiet
            pass

        def _reply(self, status: int, payload: dict):
            data = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_POST(self):
            if self.path not in ENDPOINTS:
                self._reply(404, {"error": f"unknown endpoint {self.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                REQUEST_VALIDATORS[self.path](body)
                response = _dispatch(backend, self.path, body)
                RESPONSE_VALIDATORS[self.path](response)
            except (ProtocolError, ValueError, KeyError) as err:
                self._reply(400, {"error": str(err)})
                return
            except Exception as err:  # pragma: no cover - defensive
                self._reply(500, {"error": f"internal error: {err}"})
                return
            self._reply(200, response)

    return Handler
