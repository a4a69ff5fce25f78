"""Protocol conformance checker: exercises every wire endpoint of a backend
server and validates schemas, determinism contracts, entropy vectors, and
capability honesty. The built-in toy backend of the simulation framework and
this adapter must both pass the same suite."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import requests

KNOWN_FLAGS = {
    "finetune",
    "generate",
    "stochastic_generate",
    "embed",
    "score_formality",
    "score_similarity",
}

PAIRS = [
    {"input": "the quick brown fox", "target": "a fast auburn fox"},
    {"input": "one two three", "target": "counting one two three"},
    {"input": "it rains in the north", "target": "northern rain is common"},
]

SPEC = {"epochs": 1, "learning_rate": 5e-05, "train_batch_size": 2, "seed": 13}

INPUTS = [
    {"id": "q1", "text": "the quick fox"},
    {"id": "q2", "text": "two plus three"},
]


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""


@dataclass
class ConformanceReport:
    url: str
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    def add(self, name: str, ok: bool, detail: str = ""):
        self.checks.append(Check(name, bool(ok), detail))

    def lines(self) -> list[str]:
        return [
            f"[{'PASS' if c.ok else 'FAIL'}] {c.name}" + (f" - {c.detail}" if c.detail else "")
            for c in self.checks
        ]


def _post(url: str, endpoint: str, body: dict, timeout: float = 300.0):
    resp = requests.post(url.rstrip("/") + endpoint, json=body, timeout=timeout)
    try:
        payload = resp.json()
    except ValueError:
        payload = None
    return resp.status_code, payload


def _valid_generations(payload, expected_ids, expected_samples) -> str:
    """Empty string when well-formed, else the problem."""
    if not isinstance(payload, dict) or not isinstance(payload.get("generations"), dict):
        return "missing generations object"
    generations = payload["generations"]
    if set(generations) != set(expected_ids):
        return f"ids mismatch: {sorted(generations)} vs {sorted(expected_ids)}"
    for example_id, items in generations.items():
        if not isinstance(items, list) or len(items) != expected_samples:
            return f"{example_id}: expected {expected_samples} generations"
        for g in items:
            if not isinstance(g, dict) or not isinstance(g.get("text"), str):
                return f"{example_id}: missing text"
            if "token_entropies" not in g:
                return f"{example_id}: missing token_entropies"
            entropies = g["token_entropies"]
            if not isinstance(entropies, list):
                return f"{example_id}: token_entropies is not a list"
            for e in entropies:
                if not isinstance(e, (int, float)) or not math.isfinite(e) or e < 0:
                    return f"{example_id}: bad entropy {e!r}"
            if g["text"] == "" and entropies:
                return f"{example_id}: empty text with nonempty entropies"
    return ""


def conformance_check(url: str) -> ConformanceReport:
    report = ConformanceReport(url=url)

    # capabilities: schema + stability
    status, caps = _post(url, "/capabilities", {})
    caps_ok = (
        status == 200
        and isinstance(caps, dict)
        and isinstance(caps.get("flags"), list)
        and all(isinstance(f, str) for f in caps["flags"])
    )
    report.add("capabilities schema", caps_ok, f"HTTP {status}: {caps}")
    if not caps_ok:
        return report
    flags = set(caps["flags"])
    status2, caps2 = _post(url, "/capabilities", {})
    report.add("capabilities stable", status2 == 200 and caps2 == caps)
    report.add(
        "capabilities known flags", flags <= KNOWN_FLAGS, f"unknown: {sorted(flags - KNOWN_FLAGS)}"
    )

    # finetune: zero-shot identity, determinism, from-base-only discipline
    if "finetune" in flags:
        status, body = _post(url, "/finetune", {"base_model_id": "base", "examples": [], "spec": SPEC})
        report.add(
            "finetune empty returns base",
            status == 200 and isinstance(body, dict) and body.get("model_id") == "base",
            f"HTTP {status}: {body}",
        )
        status, body = _post(url, "/finetune", {"base_model_id": "base", "examples": PAIRS, "spec": SPEC})
        tuned_ok = status == 200 and isinstance(body, dict) and isinstance(body.get("model_id"), str)
        report.add("finetune returns model id", tuned_ok, f"HTTP {status}: {body}")
        tuned_id = body["model_id"] if tuned_ok else "base"
        status, _ = _post(url, "/finetune", {"base_model_id": tuned_id, "examples": PAIRS, "spec": SPEC})
        report.add("finetune rejects incremental", status != 200, f"HTTP {status}")
    else:
        tuned_id = "base"

    # deterministic generation: schema, repeatability, entropy vectors
    gen_request = {"model_id": tuned_id, "inputs": INPUTS, "mode": "deterministic"}
    status, first = _post(url, "/generate", gen_request)
    problem = _valid_generations(first, [i["id"] for i in INPUTS], 1) if status == 200 else f"HTTP {status}"
    report.add("generate deterministic schema", status == 200 and not problem, problem)
    if status == 200 and not problem:
        status2, second = _post(url, "/generate", gen_request)
        report.add("generate deterministic repeatable", status2 == 200 and second == first)
        lengths_ok = all(
            len(g["token_entropies"]) == len(second["generations"][i][0]["token_entropies"])
            for i, items in first["generations"].items()
            for g in items
        )
        report.add("entropy vector lengths stable", lengths_ok)
    status, body = _post(url, "/generate", {"model_id": tuned_id, "inputs": [], "mode": "deterministic"})
    report.add(
        "generate empty inputs",
        status == 200 and isinstance(body, dict) and body.get("generations") == {},
        f"HTTP {status}: {body}",
    )

    # stochastic generation: honesty, cardinality, per-seed determinism
    stoch_request = {
        "model_id": tuned_id,
        "inputs": INPUTS,
        "mode": {"stochastic": {"num_samples": 3, "seed": 21}},
    }
    status, first = _post(url, "/generate", stoch_request)
    if "stochastic_generate" in flags:
        problem = _valid_generations(first, [i["id"] for i in INPUTS], 3) if status == 200 else f"HTTP {status}"
        report.add("generate stochastic schema", status == 200 and not problem, problem)
        if status == 200 and not problem:
            status2, second = _post(url, "/generate", stoch_request)
            report.add("generate stochastic repeatable per seed", status2 == 200 and second == first)
    else:
        report.add("stochastic honestly absent", status != 200, f"HTTP {status}")
    bad_request = {
        "model_id": tuned_id,
        "inputs": INPUTS,
        "mode": {"stochastic": {"num_samples": 1, "seed": 0}},
    }
    status, body = _post(url, "/generate", bad_request)
    report.add(
        "stochastic num_samples < 2 rejected",
        status != 200 and isinstance(body, dict) and "error" in body,
        f"HTTP {status}",
    )

    # embeddings: schema, dimension agreement, determinism
    if "embed" in flags:
        status, first = _post(url, "/embed", {"inputs": INPUTS})
        emb_ok = (
            status == 200
            and isinstance(first, dict)
            and isinstance(first.get("dim"), int)
            and first["dim"] >= 1
            and isinstance(first.get("vectors"), dict)
            and set(first["vectors"]) == {i["id"] for i in INPUTS}
            and all(
                isinstance(v, list)
                and len(v) == first["dim"]
                and all(isinstance(x, (int, float)) and math.isfinite(x) for x in v)
                for v in first["vectors"].values()
            )
        )
        report.add("embed schema", emb_ok, f"HTTP {status}")
        if emb_ok:
            status2, second = _post(url, "/embed", {"inputs": INPUTS})
            report.add("embed deterministic", status2 == 200 and second == first)
            twin = [{"id": "a", "text": "same text"}, {"id": "b", "text": "same text"}]
            status3, twins = _post(url, "/embed", {"inputs": twin})
            report.add(
                "embed identical texts identical vectors",
                status3 == 200 and twins["vectors"]["a"] == twins["vectors"]["b"],
            )
        status, body = _post(url, "/embed", {"inputs": []})
        report.add(
            "embed empty inputs",
            status == 200 and isinstance(body, dict) and body.get("vectors") == {},
            f"HTTP {status}",
        )

    # scoring: range, cardinality, reference requirements, honesty
    for kind in ("similarity", "formality"):
        flag = f"score_{kind}"
        items = [
            {"candidate": "the same sentence", "reference": "the same sentence"},
            {"candidate": "completely different words", "reference": "the same sentence"},
        ]
        status, body = _post(url, "/score", {"kind": kind, "items": items})
        if flag in flags:
            score_ok = (
                status == 200
                and isinstance(body, dict)
                and isinstance(body.get("scores"), list)
                and len(body["scores"]) == len(items)
                and all(
                    isinstance(s, (int, float)) and 0.0 <= s <= 1.0 for s in body["scores"]
                )
            )
            report.add(f"score {kind} schema", score_ok, f"HTTP {status}: {body}")
            if kind == "similarity" and score_ok:
                report.add(
                    "score similarity identity >= different",
                    body["scores"][0] >= body["scores"][1],
                    f"{body['scores']}",
                )
        else:
            report.add(f"score {kind} honestly absent", status != 200, f"HTTP {status}")
    status, body = _post(
        url, "/score", {"kind": "similarity", "items": [{"candidate": "x", "reference": None}]}
    )
    report.add("score similarity without reference rejected", status != 200, f"HTTP {status}")

    # error surface
    status, body = _post(url, "/no-such-endpoint", {})
    report.add(
        "unknown endpoint rejected",
        status != 200 and (body is None or "error" in body),
        f"HTTP {status}",
    )
    status, body = _post(url, "/generate", {"model_id": 7, "inputs": "x", "mode": "deterministic"})
    report.add(
        "malformed request rejected",
        status != 200 and isinstance(body, dict) and "error" in body,
        f"HTTP {status}",
    )
    status, body = _post(url, "/generate", {"model_id": "no-such-model", "inputs": INPUTS, "mode": "deterministic"})
    report.add("unknown model rejected", status != 200, f"HTTP {status}")

    return report
