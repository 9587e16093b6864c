"""JSON file formats: factor-triple instances, measures and potentials.

Instance::

    {"alphabet": ["A", "B"], "transitions": [["A", "A"], ...], "code": {"A": "b", ...},
     "forbidden_words": [["A", "B", "A"]], "code_window": [l, r]}

``forbidden_words`` and ``code_window`` are optional.  With a nontrivial
window the code keys are blocks of length ``l + r + 1``.  Blocks and words
are written as lists of symbols, or as strings when every symbol is a
single character.  Instances with long forbidden words or a sliding code are
recoded to a 1-step, 1-block triple on higher blocks.

Measure::

    {"type": "markov", "transition": [[...]], "stationary": [...]}   # stationary optional
    {"type": "bernoulli", "probs": [...]}
    {"type": "parry"}
    {"type": "pushforward", "source": <measure object or path>, "instance": <path>}

Potential::

    {"k": 2, "table": {"AB": 0.5, ...}}
    {"type": "zero"} | {"type": "indicator", "symbol": "A", "scale": 0.2}
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import UnknownSymbol, ValidationError
from .measures import MarkovMeasure, Potential, PushforwardMeasure, bernoulli, parry_measure
from .shift_core import FactorTriple, GeneralTriple, Recoding, Sft, build_sft, make_triple, recode_to_one_step_one_block

INSTANCE_KEYS = {"alphabet", "transitions", "code", "forbidden_words", "code_window"}
REQUIRED_KEYS = {"alphabet", "transitions", "code"}


@dataclass(frozen=True, eq=False)
class Instance:
    triple: FactorTriple
    raw: dict
    hash: str
    recoding: Recoding | None = None
    path: str = ""


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def instance_hash(raw: dict) -> str:
    return hashlib.sha256(canonical_json(raw).encode("utf-8")).hexdigest()


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def parse_word(word, alphabet) -> tuple:
    """A word given as a list of symbols, or as a string of one-character symbols."""
    if isinstance(word, str):
        if word in alphabet:
            return (word,)
        if all(len(a) == 1 for a in alphabet):
            return tuple(word)
        return tuple(word.split("."))
    if isinstance(word, (list, tuple)):
        return tuple(str(s) for s in word)
    raise ValidationError(f"cannot read a word from {word!r}")


def load_instance_dict(raw: dict, name: str = "", path: str = "") -> Instance:
    if not isinstance(raw, dict):
        raise ValidationError("instance must be a JSON object")
    unknown = set(raw) - INSTANCE_KEYS
    if unknown:
        raise ValidationError(f"unknown instance keys: {sorted(unknown)}")
    missing = REQUIRED_KEYS - set(raw)
    if missing:
        raise ValidationError(f"missing instance keys: {sorted(missing)}")
    alphabet = [str(a) for a in raw["alphabet"]]
    if len(set(alphabet)) != len(alphabet):
        raise ValidationError("alphabet has repeated symbols")
    known = set(alphabet)
    pairs = []
    for pair in raw["transitions"]:
        pair = parse_word(pair, alphabet)
        if len(pair) != 2:
            raise ValidationError(f"transition {pair!r} is not a pair")
        for s in pair:
            if s not in known:
                raise UnknownSymbol(f"transition uses unknown symbol {s!r}")
        pairs.append(pair)
    forbidden = [parse_word(f, alphabet) for f in raw.get("forbidden_words", [])]
    for f in forbidden:
        if any(s not in known for s in f):
            raise UnknownSymbol(f"forbidden word {f!r} uses an unknown symbol")
    window = tuple(int(v) for v in raw.get("code_window", (0, 0)))
    if len(window) != 2:
        raise ValidationError("code_window must be [l, r]")
    code_raw = raw["code"]
    if not isinstance(code_raw, dict):
        raise ValidationError("code must be an object")
    hash_ = instance_hash(raw)
    if window == (0, 0) and all(len(f) <= 2 for f in forbidden):
        for key in code_raw:
            if key not in known:
                raise UnknownSymbol(f"code maps unknown symbol {key!r}")
        banned = {tuple(f) for f in forbidden if len(f) == 2}
        single = {f[0] for f in forbidden if len(f) == 1}
        allowed = [p for p in pairs if p not in banned and p[0] not in single and p[1] not in single]
        x = build_sft(alphabet, allowed)
        triple = make_triple(x, {k: str(v) for k, v in code_raw.items()}, name=name)
        return Instance(triple, raw, hash_, None, path)
    code = {}
    span = window[0] + window[1] + 1
    for key, value in code_raw.items():
        block = parse_word(key, alphabet)
        if len(block) != span:
            raise ValidationError(f"code key {key!r} does not have the window length {span}")
        code[block] = str(value)
    general = GeneralTriple(tuple(alphabet), tuple(forbidden), code, window, tuple(pairs))
    rec = recode_to_one_step_one_block(general)
    triple = rec.triple
    object.__setattr__(triple, "name", name)
    return Instance(triple, raw, hash_, rec, path)


def load_instance(path) -> Instance:
    raw = _read_json(path)
    return load_instance_dict(raw, name=Path(path).stem, path=str(path))


def _markov_on(sft: Sft, original_alphabet, transition, stationary=None) -> MarkovMeasure:
    P = np.array(transition, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValidationError("transition must be a square matrix")
    if P.shape[0] != sft.size and original_alphabet is not None and P.shape[0] == len(original_alphabet):
        keep = [list(original_alphabet).index(a) for a in sft.alphabet]
        dropped = [i for i in range(len(original_alphabet)) if i not in keep]
        if dropped and (np.any(P[np.ix_(keep, dropped)] > 0)):
            raise ValidationError("measure charges symbols removed by pruning")
        P = P[np.ix_(keep, keep)]
        if stationary is not None:
            stationary = np.asarray(stationary, dtype=float)[keep]
    return MarkovMeasure.from_transition(sft, P, stationary)


def measure_from_dict(spec: dict, instance: Instance, base_dir: str = "."):
    """A MarkovMeasure on the instance's X, or a PushforwardMeasure for ``"pushforward"``."""
    if not isinstance(spec, dict) or "type" not in spec:
        raise ValidationError("measure must be an object with a 'type'")
    kind = spec["type"]
    sft = instance.triple.x
    original = instance.raw.get("alphabet") if instance.recoding is None else None
    allowed = {
        "markov": {"type", "transition", "stationary"},
        "bernoulli": {"type", "probs"},
        "parry": {"type"},
        "pushforward": {"type", "source", "instance"},
    }
    if kind not in allowed:
        raise ValidationError(f"unknown measure type {kind!r}")
    unknown = set(spec) - allowed[kind]
    if unknown:
        raise ValidationError(f"unknown measure keys: {sorted(unknown)}")
    if kind == "markov":
        return _markov_on(sft, original, spec["transition"], spec.get("stationary"))
    if kind == "bernoulli":
        return bernoulli(sft, spec["probs"])
    if kind == "parry":
        return parry_measure(sft)
    inst = instance
    if "instance" in spec:
        inst = load_instance(Path(base_dir) / spec["instance"])
    source = spec["source"]
    if isinstance(source, str):
        source = _read_json(Path(base_dir) / source)
    mu = measure_from_dict(source, inst, base_dir)
    if isinstance(mu, PushforwardMeasure):
        raise ValidationError("pushforward source must be a measure on X")
    return PushforwardMeasure(mu, inst.triple)


def load_measure(path, instance: Instance):
    return measure_from_dict(_read_json(path), instance, str(Path(path).parent))


def as_markov(measure) -> MarkovMeasure:
    return measure.source if isinstance(measure, PushforwardMeasure) else measure


def potential_from_dict(spec: dict, instance: Instance) -> Potential:
    sft = instance.triple.x
    if not isinstance(spec, dict):
        raise ValidationError("potential must be a JSON object")
    kind = spec.get("type", "table")
    if kind == "zero":
        return Potential.zero(sft)
    if kind == "indicator":
        symbol = str(spec["symbol"])
        if symbol not in sft.alphabet:
            raise UnknownSymbol(f"indicator of unknown symbol {symbol!r}")
        return Potential.indicator(sft, symbol, float(spec.get("scale", 1.0)))
    if kind != "table":
        raise ValidationError(f"unknown potential type {kind!r}")
    unknown = set(spec) - {"type", "k", "table"}
    if unknown:
        raise ValidationError(f"unknown potential keys: {sorted(unknown)}")
    k = int(spec["k"])
    table = {parse_word(key, sft.alphabet): float(v) for key, v in spec["table"].items()}
    # blocks that are not legal in X carry no weight; keep only legal ones
    table = {b: v for b, v in table.items() if len(b) == k and sft.is_legal(b)}
    return Potential(sft, k, table)


def load_potential(path, instance: Instance) -> Potential:
    return potential_from_dict(_read_json(path), instance)
