"""Beam search over one model or an ensemble of checkpoints.

Every hypothesis keeps the attention row of each token it emitted, so the
translation of a sentence comes with its full attention matrix. With
``constrain_tree`` the search only extends hypotheses by tokens that keep the
output a well-formed linearized tree that can still be closed within the
length limit.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple, Union
import json
import logging

import numpy as np

from app.corpus import EOS, EOS_ID, UNK_ID, Vocabulary, decode, encode
from app.exceptions import TreeSyntaxError, ValidationError
from app.model import ModelParams, decode_steps, prepare_source
from app.subword import DEFAULT_MARKER, revert_bpe
from app.treebank import surface, tokenize_linear

DEFAULT_BEAM = 12
DEFAULT_MAX_LEN_CAP = 300
MAX_TREE_DEPTH = 40
_TINY = np.finfo(np.float64).tiny

ParamSet = Union[ModelParams, Sequence[ModelParams]]


@dataclass(frozen=True)
class AttentionRecord:
    src_tokens: Tuple[str, ...]
    tgt_tokens: Tuple[str, ...]
    weights: np.ndarray = field(compare=False)

    def __post_init__(self):
        object.__setattr__(self, "src_tokens", tuple(self.src_tokens))
        object.__setattr__(self, "tgt_tokens", tuple(self.tgt_tokens))
        weights = np.asarray(self.weights, dtype=np.float64).reshape(len(self.tgt_tokens), -1) \
            if len(self.tgt_tokens) else np.zeros((0, len(self.src_tokens)))
        object.__setattr__(self, "weights", weights)
        if weights.shape != (len(self.tgt_tokens), len(self.src_tokens)):
            raise ValidationError(f"Attention matrix of shape {weights.shape} does not match "
                                  f"{len(self.tgt_tokens)} target and {len(self.src_tokens)} source tokens")
        if len(weights) and np.abs(weights.sum(axis=1) - 1.0).max() > 1e-9:
            raise ValidationError("Attention rows must sum to 1")

    def to_dict(self) -> dict:
        return {"src_tokens": list(self.src_tokens), "tgt_tokens": list(self.tgt_tokens),
                "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> 'AttentionRecord':
        return cls(data["src_tokens"], data["tgt_tokens"], np.array(data["weights"], dtype=np.float64))


@dataclass(frozen=True)
class Hypothesis:
    target_ids: Tuple[int, ...]
    score: float
    weights: np.ndarray = field(compare=False)

    @property
    def normalized_score(self) -> float:
        return self.score / max(len(self.target_ids), 1)

    @property
    def finished(self) -> bool:
        return bool(self.target_ids) and self.target_ids[-1] == EOS_ID


# -- tree constraint ----------------------------------------------------------

class _Kind(Enum):
    OPEN = "open"
    CLOSE = "close"
    TERMINAL = "terminal"
    END = "end"


class TreeConstraint:
    """Legal next tokens for a partial linearized tree.

    A state is a tuple of (label, children so far) frames plus a flag telling
    whether the root has been opened.
    """

    def __init__(self, tgt_vocab: Vocabulary, max_depth: int = MAX_TREE_DEPTH):
        self.max_depth = max_depth
        self.size = len(tgt_vocab)
        self.kinds: List[_Kind] = []
        self.labels: List[Optional[str]] = []
        close_ids = {}
        for token_id, token in enumerate(tgt_vocab.tokens):
            kind, label = _classify(token_id, token)
            self.kinds.append(kind)
            self.labels.append(label)
            if kind is _Kind.CLOSE:
                close_ids[label] = token_id
        self.close_ids = close_ids
        self.terminal_ids = np.array([k is _Kind.TERMINAL for k in self.kinds])
        self.open_ids = np.array([k is _Kind.OPEN and self.labels[i] in close_ids
                                  for i, k in enumerate(self.kinds)])

    @staticmethod
    def initial() -> Tuple[Tuple[Tuple[str, int], ...], bool]:
        return (), False

    def allowed(self, state, remaining: int) -> np.ndarray:
        """Boolean mask over the vocabulary; ``remaining`` counts this step."""
        stack, started = state
        mask = np.zeros(self.size, dtype=bool)
        depth = len(stack)
        if not started:
            if remaining >= 4:
                mask |= self.open_ids
            return mask
        if depth == 0:
            mask[EOS_ID] = True
            return mask
        label, children = stack[-1]
        if children and remaining >= depth + 1:
            mask[self.close_ids[label]] = True
        if remaining >= depth + 2:
            mask |= self.terminal_ids
        if depth < self.max_depth and remaining >= depth + 4:
            mask |= self.open_ids
        return mask

    def fallback(self, state) -> int:
        stack, started = state
        if stack and stack[-1][1]:
            return self.close_ids[stack[-1][0]]
        if stack:
            return UNK_ID
        return EOS_ID

    def advance(self, state, token_id: int):
        stack, started = state
        kind = self.kinds[token_id]
        if kind is _Kind.OPEN:
            stack = _bump(stack) + ((self.labels[token_id], 0),)
            return stack, True
        if kind is _Kind.CLOSE:
            return stack[:-1], started
        if kind is _Kind.TERMINAL:
            return _bump(stack), started
        return stack, started


def _bump(stack):
    if not stack:
        return stack
    label, children = stack[-1]
    return stack[:-1] + ((label, children + 1),)


def _classify(token_id: int, token: str) -> Tuple[_Kind, Optional[str]]:
    if token_id == EOS_ID:
        return _Kind.END, None
    if len(token) > 1 and token[0] == "(":
        return _Kind.OPEN, token[1:]
    if len(token) > 1 and token[0] == ")":
        return _Kind.CLOSE, token[1:]
    return _Kind.TERMINAL, None


# -- search -------------------------------------------------------------------

@dataclass
class _Partial:
    ids: Tuple[int, ...]
    score: float
    states: List[np.ndarray]
    rows: List[np.ndarray]
    tree_state: object = None


def _members(param_set: ParamSet) -> List[ModelParams]:
    members = [param_set] if isinstance(param_set, ModelParams) else list(param_set)
    if not members:
        raise ValidationError("At least one parameter set is required")
    first = members[0].config
    for other in members[1:]:
        if (other.config.src_vocab_size, other.config.tgt_vocab_size) != \
                (first.src_vocab_size, first.tgt_vocab_size):
            raise ValidationError("Ensemble members must share vocabulary sizes")
    return members


def default_max_len(src_len: int, cap: int = DEFAULT_MAX_LEN_CAP) -> int:
    return min(3 * src_len + 10, cap)


def _ensemble_step(members, sources, partials):
    """Mean output distribution and mean attention over the ensemble."""
    prev = np.array([p.ids[-1] if p.ids else EOS_ID for p in partials], dtype=np.int64)
    probs_total = attention_total = None
    new_states = []
    for m, (params, source) in enumerate(zip(members, sources)):
        states = np.stack([p.states[m] for p in partials])
        probs, states, attention = decode_steps(params, prev, states, source)
        probs_total = probs if probs_total is None else probs_total + probs
        attention_total = attention if attention_total is None else attention_total + attention
        new_states.append(states)
    return probs_total / len(members), attention_total / len(members), new_states


def beam_search(param_set: ParamSet, src_ids: Sequence[int], beam_size: int = DEFAULT_BEAM,
                max_len: Optional[int] = None, constrain_tree: bool = False,
                tgt_vocab: Optional[Vocabulary] = None) -> List[Hypothesis]:
    """Length-normalized beam search; returns up to ``beam_size`` hypotheses best first.

    Each pass keeps ``width`` open hypotheses per step and stops once no open
    prefix can still beat the best finished one. Passes run for every width up
    to ``beam_size`` over one shared cache of model steps and their finished
    hypotheses are pooled, so widening the beam never worsens the best result.
    Hypotheses still open at ``max_len`` are kept as they are.
    """
    if beam_size < 1:
        raise ValidationError(f"beam_size must be positive: {beam_size}")
    if not src_ids:
        raise ValidationError("Cannot translate an empty source")
    members = _members(param_set)
    max_len = max_len or default_max_len(len(src_ids))
    constraint = None
    if constrain_tree:
        if tgt_vocab is None:
            raise ValidationError("Tree-constrained search needs the target vocabulary")
        constraint = TreeConstraint(tgt_vocab)
        max_len = max(max_len, 4)

    prepared = [prepare_source(params, src_ids) for params in members]
    search = _Search(members, [source for source, _ in prepared], constraint, max_len)
    start = _Partial((), 0.0, [state for _, state in prepared], [],
                     constraint.initial() if constraint else None)
    pool = {}
    for width in range(1, beam_size + 1):
        for hypothesis in search.run(start, width):
            pool.setdefault(hypothesis.target_ids, hypothesis)
    ranked = sorted(pool.values(), key=lambda h: (-h.normalized_score, h.target_ids))
    return ranked[:beam_size]


class _Search:
    """One source sentence; model steps are cached by target prefix."""

    def __init__(self, members, sources, constraint: Optional[TreeConstraint], max_len: int):
        self.members = members
        self.sources = sources
        self.constraint = constraint
        self.max_len = max_len
        self._steps = {}

    def _expand(self, live: Sequence[_Partial]):
        missing = [p for p in live if p.ids not in self._steps]
        if missing:
            probs, attention, new_states = _ensemble_step(self.members, self.sources, missing)
            log_probs = np.log(np.maximum(probs, _TINY))
            for i, partial in enumerate(missing):
                if self.constraint is not None:
                    mask = self.constraint.allowed(partial.tree_state, self.max_len - len(partial.ids))
                    if not mask.any():
                        mask[self.constraint.fallback(partial.tree_state)] = True
                    log_probs[i, ~mask] = -np.inf
                self._steps[partial.ids] = (log_probs[i], attention[i], [s[i] for s in new_states])
        return [self._steps[p.ids] for p in live]

    def run(self, start: _Partial, width: int) -> List[Hypothesis]:
        live = [start]
        finished: List[Hypothesis] = []
        while live:
            if finished:
                best = max(h.normalized_score for h in finished)
                # scores only fall, so no open prefix can end above score / max_len
                if best >= max(p.score for p in live) / self.max_len:
                    break
            steps = self._expand(live)
            totals = np.array([p.score for p in live])[:, None] + np.stack([s[0] for s in steps])
            survivors: List[_Partial] = []
            for i, token, score in _best_candidates(totals, live, width):
                partial, (_, attention, states) = live[i], steps[i]
                extended = _Partial(
                    partial.ids + (token,), score, states, partial.rows + [attention],
                    self.constraint.advance(partial.tree_state, token) if self.constraint else None,
                )
                if token == EOS_ID or len(extended.ids) == self.max_len:
                    finished.append(Hypothesis(extended.ids, score, np.array(extended.rows)))
                else:
                    survivors.append(extended)
            live = survivors
        return finished


def _best_candidates(totals: np.ndarray, live: Sequence[_Partial],
                     width: int) -> List[Tuple[int, int, float]]:
    flat = totals.ravel()
    finite = np.flatnonzero(np.isfinite(flat))
    if not len(finite):
        return []
    order = finite[np.argsort(-flat[finite], kind="stable")]
    cutoff = flat[order[min(width, len(order)) - 1]]
    pool = [index for index in order if flat[index] >= cutoff]
    vocab_size = totals.shape[1]
    candidates = [(int(index) // vocab_size, int(index) % vocab_size, float(flat[index])) for index in pool]
    candidates.sort(key=lambda c: (-c[2], live[c[0]].ids + (c[1],)))
    return candidates[:width]


def greedy_decode(param_set: ParamSet, src_ids: Sequence[int], max_len: Optional[int] = None) -> Hypothesis:
    """Picks the most probable token at every step, lowest id on ties."""
    members = _members(param_set)
    max_len = max_len or default_max_len(len(src_ids))
    prepared = [prepare_source(params, src_ids) for params in members]
    sources = [source for source, _ in prepared]
    partial = _Partial((), 0.0, [state for _, state in prepared], [])
    while len(partial.ids) < max_len and not (partial.ids and partial.ids[-1] == EOS_ID):
        probs, attention, new_states = _ensemble_step(members, sources, [partial])
        token = int(np.argmax(probs[0]))
        partial = _Partial(partial.ids + (token,),
                           partial.score + float(np.log(max(probs[0, token], _TINY))),
                           [states[0] for states in new_states], partial.rows + [attention[0]])
    return Hypothesis(partial.ids, partial.score, np.array(partial.rows))


# -- corpus translation -------------------------------------------------------

@dataclass(frozen=True)
class Translation:
    tokens: Tuple[str, ...]
    surface: Tuple[str, ...]
    record: AttentionRecord
    score: float


def surface_tokens(tokens: Sequence[str], target_is_tree: bool,
                   continuation_marker: str = DEFAULT_MARKER) -> List[str]:
    """Plain words of a system output; tree outputs need not be valid."""
    if not target_is_tree:
        return revert_bpe(tokens, continuation_marker)
    try:
        return surface(tokenize_linear(" ".join(tokens)), continuation_marker)
    except TreeSyntaxError:
        words = [t for t in tokens if not (len(t) > 1 and t[0] in "()")]
        return revert_bpe(words, continuation_marker)


def translate_sentence(param_set: ParamSet, src_tokens: Sequence[str], src_vocab: Vocabulary,
                       tgt_vocab: Vocabulary, beam_size: int = DEFAULT_BEAM,
                       max_len_cap: int = DEFAULT_MAX_LEN_CAP, constrain_tree: bool = False,
                       target_is_tree: bool = False,
                       continuation_marker: str = DEFAULT_MARKER) -> Translation:
    src_ids = encode(src_vocab, src_tokens)
    best = beam_search(param_set, src_ids, beam_size, default_max_len(len(src_ids), max_len_cap),
                       constrain_tree, tgt_vocab)[0]
    tokens = decode(tgt_vocab, best.target_ids)
    record = AttentionRecord(tuple(src_tokens) + (EOS,),
                             tuple(tgt_vocab.token_of(i) for i in best.target_ids), best.weights)
    return Translation(tuple(tokens), tuple(surface_tokens(tokens, target_is_tree, continuation_marker)),
                       record, best.score)


def translate_corpus(param_set: ParamSet, src_lines: Sequence[Sequence[str]], src_vocab: Vocabulary,
                     tgt_vocab: Vocabulary, beam_size: int = DEFAULT_BEAM,
                     max_len_cap: int = DEFAULT_MAX_LEN_CAP, constrain_tree: bool = False,
                     target_is_tree: bool = False, workers: int = 1,
                     continuation_marker: str = DEFAULT_MARKER) -> List[Translation]:
    """One translation per input line, in input order."""
    members = _members(param_set)

    def run(line: Sequence[str]) -> Translation:
        return translate_sentence(members, line, src_vocab, tgt_vocab, beam_size, max_len_cap,
                                  constrain_tree, target_is_tree, continuation_marker)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            translations = list(pool.map(run, src_lines))
    else:
        translations = [run(line) for line in src_lines]
    logging.info(f"Translated {len(translations)} sentences with {len(members)} model(s), beam {beam_size}")
    return translations


def write_attention_records(records: Iterable[AttentionRecord], path: Union[str, Path],
                            encoding: str = "utf-8") -> None:
    with open(path, "w", encoding=encoding) as handle:
        for record in records:
            handle.write(json.dumps(record.to_dict()) + "\n")


def read_attention_records(path: Union[str, Path], encoding: str = "utf-8") -> Iterator[AttentionRecord]:
    with open(path, encoding=encoding) as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                yield AttentionRecord.from_dict(json.loads(line))
            except (KeyError, TypeError, ValueError) as e:
                logging.error(f"Malformed attention record on line {number} of {path}: {e}")
                raise ValidationError(f"Malformed attention record on line {number} of {path}") from e
