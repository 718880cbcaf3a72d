"""Attention-based GRU encoder-decoder with hand-written backpropagation.

The encoder is a bidirectional GRU over source embeddings; each annotation is
the concatenation of the forward and backward states. The decoder state starts
from the projected mean annotation. At every step the previous decoder state
attends over the annotations (additive scoring), the GRU consumes the previous
target embedding together with the context, and the output layer reads the new
state, the context and the previous embedding.

All arithmetic is float64. Batches are right-padded with the end-of-sequence
id; padded source positions are masked out of attention and of the mean, and
padded target steps are masked out of the loss.
"""
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple
import math

import numpy as np

from app.corpus import EOS_ID, PaddedBatch, ParallelPair, pad_batch
from app.exceptions import ValidationError

PARAM_NAMES = (
    "src_embed", "tgt_embed",
    "enc_fwd_W", "enc_fwd_U", "enc_fwd_b",
    "enc_bwd_W", "enc_bwd_U", "enc_bwd_b",
    "dec_W", "dec_U", "dec_b",
    "att_W", "att_U", "att_v",
    "init_W", "init_b",
    "out_W", "out_b",
)


@dataclass(frozen=True)
class ModelConfig:
    src_vocab_size: int
    tgt_vocab_size: int
    embed_dim: int = 64
    hidden_dim: int = 128
    seed: int = 1234
    dropout_rate: float = 0.0

    def __post_init__(self):
        for name in ("src_vocab_size", "tgt_vocab_size", "embed_dim", "hidden_dim"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError(f"dropout_rate must be in [0, 1): {self.dropout_rate}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "src_vocab_size": self.src_vocab_size,
            "tgt_vocab_size": self.tgt_vocab_size,
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "seed": self.seed,
            "dropout_rate": self.dropout_rate,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ModelConfig':
        return cls(
            src_vocab_size=int(data["src_vocab_size"]),
            tgt_vocab_size=int(data["tgt_vocab_size"]),
            embed_dim=int(data["embed_dim"]),
            hidden_dim=int(data["hidden_dim"]),
            seed=int(data["seed"]),
            dropout_rate=float(data["dropout_rate"]),
        )


def param_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    E, H = config.embed_dim, config.hidden_dim
    C = 2 * H
    return {
        "src_embed": (config.src_vocab_size, E),
        "tgt_embed": (config.tgt_vocab_size, E),
        "enc_fwd_W": (E, 3 * H), "enc_fwd_U": (H, 3 * H), "enc_fwd_b": (3 * H,),
        "enc_bwd_W": (E, 3 * H), "enc_bwd_U": (H, 3 * H), "enc_bwd_b": (3 * H,),
        "dec_W": (E + C, 3 * H), "dec_U": (H, 3 * H), "dec_b": (3 * H,),
        "att_W": (H, H), "att_U": (C, H), "att_v": (H,),
        "init_W": (C, H), "init_b": (H,),
        "out_W": (H + C + E, config.tgt_vocab_size), "out_b": (config.tgt_vocab_size,),
    }


def is_bias(name: str) -> bool:
    return name.endswith("_b")


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: Dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def copy(self) -> 'ModelParams':
        return ModelParams(self.config, {name: value.copy() for name, value in self.tensors.items()})

    def zeros_like(self) -> 'ModelParams':
        return ModelParams(self.config, {name: np.zeros_like(value) for name, value in self.tensors.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([self.tensors[name].ravel() for name in PARAM_NAMES])

    @classmethod
    def from_flat(cls, config: ModelConfig, vector: np.ndarray) -> 'ModelParams':
        tensors, offset = {}, 0
        for name, shape in param_shapes(config).items():
            size = int(np.prod(shape))
            tensors[name] = np.array(vector[offset:offset + size], dtype=np.float64).reshape(shape)
            offset += size
        if offset != len(vector):
            raise ValidationError(f"Flat vector has {len(vector)} entries, expected {offset}")
        return cls(config, tensors)

    def num_parameters(self) -> int:
        return sum(value.size for value in self.tensors.values())

    def is_finite(self) -> bool:
        return all(np.isfinite(value).all() for value in self.tensors.values())


Gradients = ModelParams


def init_params(config: ModelConfig) -> ModelParams:
    """Uniform Glorot-style init in [-r, r], r = sqrt(6 / (fan_in + fan_out)); biases zero."""
    rng = np.random.default_rng(config.seed)
    tensors = {}
    for name, shape in param_shapes(config).items():
        if is_bias(name):
            tensors[name] = np.zeros(shape)
            continue
        fan_in, fan_out = (shape[0], shape[1]) if len(shape) == 2 else (shape[0], 1)
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        tensors[name] = rng.uniform(-limit, limit, size=shape)
    return ModelParams(config, tensors)


# -- building blocks ----------------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def _masked_softmax(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    scores = np.where(mask > 0, scores, -np.inf)
    weights = np.exp(scores - scores.max(axis=-1, keepdims=True))
    return weights / weights.sum(axis=-1, keepdims=True)


def _gru_forward(x, h, W, U, b):
    H = h.shape[1]
    a = x @ W + b
    u = h @ U
    r = _sigmoid(a[:, :H] + u[:, :H])
    z = _sigmoid(a[:, H:2 * H] + u[:, H:2 * H])
    n = np.tanh(a[:, 2 * H:] + r * u[:, 2 * H:])
    h_new = (1.0 - z) * n + z * h
    return h_new, (x, h, r, z, n, u[:, 2 * H:])


def _gru_backward(dh_new, cache, W, U):
    x, h, r, z, n, u_n = cache
    dn_pre = dh_new * (1.0 - z) * (1.0 - n * n)
    dz_pre = dh_new * (h - n) * z * (1.0 - z)
    dr_pre = dn_pre * u_n * r * (1.0 - r)
    da = np.concatenate([dr_pre, dz_pre, dn_pre], axis=1)
    du = np.concatenate([dr_pre, dz_pre, dn_pre * r], axis=1)
    dx = da @ W.T
    dh = dh_new * z + du @ U.T
    return dx, dh, x.T @ da, h.T @ du, da.sum(axis=0)


def _attention(P, state, annotations, keys, mask):
    pre = np.tanh(keys + (state @ P["att_W"])[:, None, :])
    weights = _masked_softmax(pre @ P["att_v"], mask)
    context = np.einsum("bs,bsc->bc", weights, annotations)
    return context, weights, (state, annotations, pre, weights)


def _attention_backward(P, dcontext, cache):
    state, annotations, pre, weights = cache
    dweights = np.einsum("bc,bsc->bs", dcontext, annotations)
    dannotations = weights[:, :, None] * dcontext[:, None, :]
    dscores = weights * (dweights - (weights * dweights).sum(axis=1, keepdims=True))
    dv = np.einsum("bs,bsa->a", dscores, pre)
    dkeys = dscores[:, :, None] * P["att_v"] * (1.0 - pre * pre)
    dprojected = dkeys.sum(axis=1)
    return dprojected @ P["att_W"].T, dannotations, dkeys, state.T @ dprojected, dv


# -- encoder ------------------------------------------------------------------

def _encode_batch(P, source, source_mask, src_dropout=None):
    embedded = P["src_embed"][source]
    if src_dropout is not None:
        embedded = embedded * src_dropout
    batch, length = source.shape
    H = P["enc_fwd_U"].shape[0]
    forward = np.zeros((batch, length, H))
    backward = np.zeros((batch, length, H))
    caches_fwd: List[Any] = [None] * length
    caches_bwd: List[Any] = [None] * length
    for direction, states, caches, steps in (
            ("fwd", forward, caches_fwd, range(length)),
            ("bwd", backward, caches_bwd, range(length - 1, -1, -1))):
        h = np.zeros((batch, H))
        for t in steps:
            h_new, caches[t] = _gru_forward(embedded[:, t], h, P[f"enc_{direction}_W"],
                                            P[f"enc_{direction}_U"], P[f"enc_{direction}_b"])
            m = source_mask[:, t:t + 1]
            h = m * h_new + (1.0 - m) * h
            states[:, t] = h
    annotations = np.concatenate([forward, backward], axis=2)
    return annotations, (source, source_mask, embedded, caches_fwd, caches_bwd, src_dropout)


def _encode_backward(P, dannotations, cache, grads):
    source, source_mask, embedded, caches_fwd, caches_bwd, src_dropout = cache
    batch, length = source.shape
    H = P["enc_fwd_U"].shape[0]
    dembedded = np.zeros_like(embedded)
    for direction, caches, steps, columns in (
            ("fwd", caches_fwd, range(length - 1, -1, -1), slice(0, H)),
            ("bwd", caches_bwd, range(length), slice(H, 2 * H))):
        dh = np.zeros((batch, H))
        for t in steps:
            dh = dh + dannotations[:, t, columns]
            m = source_mask[:, t:t + 1]
            dx, dh_prev, dW, dU, db = _gru_backward(m * dh, caches[t], P[f"enc_{direction}_W"],
                                                    P[f"enc_{direction}_U"])
            grads[f"enc_{direction}_W"] += dW
            grads[f"enc_{direction}_U"] += dU
            grads[f"enc_{direction}_b"] += db
            dembedded[:, t] += dx
            dh = dh_prev + (1.0 - m) * dh
    if src_dropout is not None:
        dembedded = dembedded * src_dropout
    np.add.at(grads["src_embed"], source, dembedded)


def encode(params: ModelParams, src_ids: Sequence[int]) -> np.ndarray:
    """Returns one annotation of size 2 * hidden_dim per source position."""
    if len(src_ids) == 0:
        raise ValidationError("Cannot encode an empty source")
    source = np.asarray([src_ids], dtype=np.int64)
    annotations, _ = _encode_batch(params.tensors, source, np.ones(source.shape))
    return annotations[0]


def _initial_state(P, annotations, mask):
    mean = (annotations * mask[:, :, None]).sum(axis=1) / mask.sum(axis=1, keepdims=True)
    return np.tanh(mean @ P["init_W"] + P["init_b"]), mean


def initial_state(params: ModelParams, annotations: np.ndarray) -> np.ndarray:
    state, _ = _initial_state(params.tensors, annotations[None], np.ones((1, len(annotations))))
    return state[0]


def attend(params: ModelParams, decoder_state: np.ndarray,
           annotations: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Additive attention of one decoder state over one sentence's annotations."""
    keys = annotations @ params["att_U"]
    context, weights, _ = _attention(params.tensors, decoder_state[None], annotations[None],
                                     keys[None], np.ones((1, len(annotations))))
    return context[0], weights[0]


# -- decoder ------------------------------------------------------------------

@dataclass(frozen=True)
class EncodedSource:
    """Annotations and precomputed attention keys for a single sentence."""
    annotations: np.ndarray
    keys: np.ndarray

    @property
    def length(self) -> int:
        return len(self.annotations)


def prepare_source(params: ModelParams, src_ids: Sequence[int]) -> Tuple[EncodedSource, np.ndarray]:
    """Encodes a sentence; returns it with the decoder's initial state."""
    annotations = encode(params, src_ids)
    return EncodedSource(annotations, annotations @ params["att_U"]), initial_state(params, annotations)


def decode_steps(params: ModelParams, prev_ids: np.ndarray, states: np.ndarray,
                 source: EncodedSource) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One decoder step for several hypotheses over the same source sentence.

    Returns output distributions (K, V), new states (K, H) and attention (K, S).
    """
    P = params.tensors
    count = len(prev_ids)
    annotations = np.broadcast_to(source.annotations, (count,) + source.annotations.shape)
    keys = np.broadcast_to(source.keys, (count,) + source.keys.shape)
    embedded = P["tgt_embed"][np.asarray(prev_ids, dtype=np.int64)]
    context, weights, _ = _attention(P, states, annotations, keys, np.ones((count, source.length)))
    new_states, _ = _gru_forward(np.concatenate([embedded, context], axis=1), states,
                                 P["dec_W"], P["dec_U"], P["dec_b"])
    features = np.concatenate([new_states, context, embedded], axis=1)
    return _softmax(features @ P["out_W"] + P["out_b"]), new_states, weights


def decode_step(params: ModelParams, prev_target_id: int, state: np.ndarray,
                annotations: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    source = EncodedSource(annotations, annotations @ params["att_U"])
    probs, new_states, weights = decode_steps(params, np.array([prev_target_id]), state[None], source)
    return probs[0], new_states[0], weights[0]


def sequence_log_prob(params: ModelParams, src_ids: Sequence[int], tgt_ids: Sequence[int]) -> float:
    """Teacher-forced log-probability of ``tgt_ids``, summed step by step."""
    source, state = prepare_source(params, src_ids)
    total, prev = 0.0, EOS_ID
    for token in tgt_ids:
        probs, state, _ = decode_step(params, prev, state, source.annotations)
        total += math.log(probs[token])
        prev = token
    return total


# -- training objective -------------------------------------------------------

@dataclass
class _DropoutMasks:
    source: Optional[np.ndarray] = None
    target: Optional[np.ndarray] = None
    state: Optional[np.ndarray] = None


def _dropout_masks(config: ModelConfig, rng: Optional[np.random.Generator],
                   batch: PaddedBatch) -> _DropoutMasks:
    if rng is None or config.dropout_rate == 0.0:
        return _DropoutMasks()
    keep = 1.0 - config.dropout_rate
    B, S = batch.source.shape
    T = batch.target.shape[1]
    E, H = config.embed_dim, config.hidden_dim
    draw = lambda shape: (rng.random(shape) < keep) / keep
    return _DropoutMasks(draw((B, S, E)), draw((B, T, E)), draw((B, T, H)))


def _forward(params: ModelParams, batch: PaddedBatch, masks: _DropoutMasks):
    P = params.tensors
    H = params.config.hidden_dim
    source, source_mask = batch.source, batch.source_mask
    target, target_mask = batch.target, batch.target_mask
    B, T = target.shape
    rows = np.arange(B)

    annotations, encoder_cache = _encode_batch(P, source, source_mask, masks.source)
    state, mean = _initial_state(P, annotations, source_mask)
    keys = annotations @ P["att_U"]
    previous = np.concatenate([np.full((B, 1), EOS_ID, dtype=np.int64), target[:, :-1]], axis=1)

    loss_sum = 0.0
    steps = []
    initial = state
    for t in range(T):
        embedded = P["tgt_embed"][previous[:, t]]
        if masks.target is not None:
            embedded = embedded * masks.target[:, t]
        context, _, attention_cache = _attention(P, state, annotations, keys, source_mask)
        new_state, gru_cache = _gru_forward(np.concatenate([embedded, context], axis=1), state,
                                            P["dec_W"], P["dec_U"], P["dec_b"])
        shown = new_state * masks.state[:, t] if masks.state is not None else new_state
        features = np.concatenate([shown, context, embedded], axis=1)
        log_probs = _log_softmax(features @ P["out_W"] + P["out_b"])
        loss_sum -= float((target_mask[:, t] * log_probs[rows, target[:, t]]).sum())
        steps.append((embedded, attention_cache, gru_cache, features, log_probs))
        state = new_state
    cache = (batch, masks, annotations, encoder_cache, initial, mean, keys, previous, steps)
    return loss_sum, cache


def _backward(params: ModelParams, cache, total_tokens: float) -> Gradients:
    P = params.tensors
    E, H = params.config.embed_dim, params.config.hidden_dim
    C = 2 * H
    batch, masks, annotations, encoder_cache, initial, mean, keys, previous, steps = cache
    target, target_mask = batch.target, batch.target_mask
    B, T = target.shape
    rows = np.arange(B)
    grads = params.zeros_like()
    G = grads.tensors

    dannotations = np.zeros_like(annotations)
    dkeys = np.zeros_like(keys)
    dstate = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        embedded, attention_cache, gru_cache, features, log_probs = steps[t]
        dlogits = np.exp(log_probs)
        dlogits[rows, target[:, t]] -= 1.0
        dlogits *= (target_mask[:, t] / total_tokens)[:, None]
        G["out_W"] += features.T @ dlogits
        G["out_b"] += dlogits.sum(axis=0)
        dfeatures = dlogits @ P["out_W"].T
        dshown = dfeatures[:, :H]
        if masks.state is not None:
            dshown = dshown * masks.state[:, t]
        dcontext = dfeatures[:, H:H + C]
        dembedded = dfeatures[:, H + C:]

        dx, dprev, dW, dU, db = _gru_backward(dstate + dshown, gru_cache, P["dec_W"], P["dec_U"])
        G["dec_W"] += dW
        G["dec_U"] += dU
        G["dec_b"] += db
        dembedded = dembedded + dx[:, :E]
        dcontext = dcontext + dx[:, E:]

        dstate_att, dann_t, dkeys_t, dWa, dv = _attention_backward(P, dcontext, attention_cache)
        dannotations += dann_t
        dkeys += dkeys_t
        G["att_W"] += dWa
        G["att_v"] += dv
        dstate = dprev + dstate_att

        if masks.target is not None:
            dembedded = dembedded * masks.target[:, t]
        np.add.at(G["tgt_embed"], previous[:, t], dembedded)

    dprojected = dstate * (1.0 - initial * initial)
    G["init_W"] += mean.T @ dprojected
    G["init_b"] += dprojected.sum(axis=0)
    source_mask = batch.source_mask
    dmean = (dprojected @ P["init_W"].T) / source_mask.sum(axis=1, keepdims=True)
    dannotations += source_mask[:, :, None] * dmean[:, None, :]

    G["att_U"] += annotations.reshape(-1, C).T @ dkeys.reshape(-1, H)
    dannotations += dkeys @ P["att_U"].T
    _encode_backward(P, dannotations, encoder_cache, G)
    return grads


def loss_and_grads(params: ModelParams, pairs: Sequence[ParallelPair],
                   rng: Optional[np.random.Generator] = None) -> Tuple[float, Gradients]:
    """Mean token-level negative log-likelihood of a batch and its exact gradients.

    ``rng`` drives dropout when the config enables it; without it the pass is
    deterministic.
    """
    if not pairs:
        raise ValidationError("Cannot compute the loss of an empty batch")
    batch = pad_batch(pairs)
    loss_sum, cache = _forward(params, batch, _dropout_masks(params.config, rng, batch))
    total_tokens = batch.target_tokens
    return loss_sum / total_tokens, _backward(params, cache, total_tokens)


def evaluate_loss(params: ModelParams, pairs: Sequence[ParallelPair], batch_size: int = 40) -> float:
    """Mean token-level negative log-likelihood without dropout."""
    if not pairs:
        raise ValidationError("Cannot evaluate an empty corpus")
    loss_sum = tokens = 0.0
    for start in range(0, len(pairs), batch_size):
        batch = pad_batch(pairs[start:start + batch_size])
        batch_loss, _ = _forward(params, batch, _DropoutMasks())
        loss_sum += batch_loss
        tokens += batch.target_tokens
    return loss_sum / tokens


def gradient_check(params: ModelParams, pairs: Sequence[ParallelPair],
                   eps: float = 1e-5) -> Dict[str, float]:
    """Block-wise relative error between analytic and central-difference gradients."""
    _, analytic = loss_and_grads(params, pairs)
    errors = {}
    for name in PARAM_NAMES:
        tensor = params.tensors[name]
        numeric = np.zeros_like(tensor)
        for index in np.ndindex(tensor.shape):
            original = tensor[index]
            tensor[index] = original + eps
            plus, _ = loss_and_grads(params, pairs)
            tensor[index] = original - eps
            minus, _ = loss_and_grads(params, pairs)
            tensor[index] = original
            numeric[index] = (plus - minus) / (2.0 * eps)
        difference = np.linalg.norm(analytic[name] - numeric)
        scale = np.linalg.norm(analytic[name]) + np.linalg.norm(numeric)
        errors[name] = float(difference / scale) if scale > 0 else 0.0
    return errors
