"""Compact windowed-attention encoder-decoder for story evaluation.

The encoder reads a [CLS]-prefixed story with sliding-window
self-attention (the [CLS] token, and in the comment path the aspect
prefix, attends globally).  Its position-0 state v_s feeds three linear
heads: a sigmoid preference score, a softmax over K aspect confidences,
and K sigmoid ratings.  A causal decoder with cross-attention generates
aspect-conditioned comments.

Heads are bias-free linear maps so each one is a single named tensor.
"""

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractViolation
from .vocab import Vocabulary, conditioned_ids, pad_batch

NEG_INF = -1e30


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 128
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    n_heads: int = 4
    window: int = 32
    max_len: int = 512
    n_aspects: int = 10
    dropout: float = 0.1

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.n_aspects < 1:
            raise ConfigError("n_aspects must be >= 1")
        if self.vocab_size < 7:
            raise ConfigError("vocab_size too small for reserved tokens")


@dataclass
class EvaluationOutput:
    """Everything the evaluator says about one story."""

    p_s: float
    a_c: np.ndarray
    a_r: np.ndarray
    comments: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.p_s <= 1.0:
            raise ContractViolation(f"p_s {self.p_s} outside [0,1]")
        if abs(float(self.a_c.sum()) - 1.0) > 1e-5:
            raise ContractViolation("aspect confidences do not sum to 1")
        if np.any(self.a_r < 0.0) or np.any(self.a_r > 1.0):
            raise ContractViolation("aspect rating outside [0,1]")


def init_params(config: ModelConfig, rng: np.random.Generator,
                dtype=np.float32) -> dict[str, Tensor]:
    """Fresh parameter dict: weights N(0, 0.02), norms identity, biases 0."""
    d, v, k = config.d_model, config.vocab_size, config.n_aspects
    h = 4 * d
    params: dict[str, Tensor] = {}

    def w(name, *shape):
        params[name] = Tensor(rng.normal(0.0, 0.02, shape).astype(dtype), requires_grad=True)

    def zeros(name, *shape):
        params[name] = Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)

    def ones(name, *shape):
        params[name] = Tensor(np.ones(shape, dtype=dtype), requires_grad=True)

    w("tok_emb", v, d)
    w("pos_emb", config.max_len, d)
    w("dec_pos_emb", config.max_len, d)
    for i in range(config.n_enc_layers):
        p = f"enc{i}"
        ones(f"{p}.ln1.g", d)
        zeros(f"{p}.ln1.b", d)
        for m in ("wq", "wk", "wv", "wo"):
            w(f"{p}.attn.{m}", d, d)
        ones(f"{p}.ln2.g", d)
        zeros(f"{p}.ln2.b", d)
        w(f"{p}.ff.w1", d, h)
        zeros(f"{p}.ff.b1", h)
        w(f"{p}.ff.w2", h, d)
        zeros(f"{p}.ff.b2", d)
    ones("enc_ln.g", d)
    zeros("enc_ln.b", d)
    for i in range(config.n_dec_layers):
        p = f"dec{i}"
        ones(f"{p}.ln1.g", d)
        zeros(f"{p}.ln1.b", d)
        for m in ("wq", "wk", "wv", "wo"):
            w(f"{p}.self.{m}", d, d)
        ones(f"{p}.ln2.g", d)
        zeros(f"{p}.ln2.b", d)
        for m in ("wq", "wk", "wv", "wo"):
            w(f"{p}.cross.{m}", d, d)
        ones(f"{p}.ln3.g", d)
        zeros(f"{p}.ln3.b", d)
        w(f"{p}.ff.w1", d, h)
        zeros(f"{p}.ff.b1", h)
        w(f"{p}.ff.w2", h, d)
        zeros(f"{p}.ff.b2", d)
    ones("dec_ln.g", d)
    zeros("dec_ln.b", d)
    w("w_ps", d, 1)
    w("w_ac", d, k)
    w("w_ar", d, k)
    w("w_out", d, v)
    return params


@contextmanager
def frozen(params: dict[str, Tensor]):
    """Temporarily drop requires_grad so inference skips graph building."""
    flags = {n: p.requires_grad for n, p in params.items()}
    for p in params.values():
        p.requires_grad = False
    try:
        yield
    finally:
        for n, p in params.items():
            p.requires_grad = flags[n]


# -- attention masks (additive, 0 = allowed) ------------------------------

def window_mask(lengths: np.ndarray, seq_len: int, window: int, n_global: int,
                dtype) -> np.ndarray:
    """(B,1,T,T) sliding-window mask with global prefix rows and columns."""
    i = np.arange(seq_len)[:, None]
    j = np.arange(seq_len)[None, :]
    local = (np.abs(i - j) <= window) | (i < n_global) | (j < n_global)
    base = np.where(local, 0.0, NEG_INF).astype(dtype)
    key_pad = np.where(np.arange(seq_len)[None, :] < lengths[:, None], 0.0, NEG_INF)
    return base[None, None, :, :] + key_pad.astype(dtype)[:, None, None, :]


def causal_mask(lengths: np.ndarray, seq_len: int, dtype) -> np.ndarray:
    """(B,1,T,T) lower-triangular mask with key padding."""
    i = np.arange(seq_len)[:, None]
    j = np.arange(seq_len)[None, :]
    base = np.where(j <= i, 0.0, NEG_INF).astype(dtype)
    key_pad = np.where(np.arange(seq_len)[None, :] < lengths[:, None], 0.0, NEG_INF)
    return base[None, None, :, :] + key_pad.astype(dtype)[:, None, None, :]


def cross_mask(enc_lengths: np.ndarray, enc_len: int, dtype) -> np.ndarray:
    """(B,1,1,Tk) mask hiding encoder padding from the decoder."""
    key_pad = np.where(np.arange(enc_len)[None, :] < enc_lengths[:, None], 0.0, NEG_INF)
    return key_pad.astype(dtype)[:, None, None, :]


def _mha(params, prefix, xq: Tensor, xkv: Tensor, mask: np.ndarray,
         n_heads: int, rate: float, rng) -> Tensor:
    b, tq, d = xq.shape
    tk = xkv.shape[1]
    dk = d // n_heads
    q = (xq @ params[f"{prefix}.wq"]).reshape(b, tq, n_heads, dk).swapaxes(1, 2)
    k = (xkv @ params[f"{prefix}.wk"]).reshape(b, tk, n_heads, dk).swapaxes(1, 2)
    v = (xkv @ params[f"{prefix}.wv"]).reshape(b, tk, n_heads, dk).swapaxes(1, 2)
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(dk)) + Tensor(mask)
    probs = ad.softmax(scores, axis=-1)
    if rate > 0.0:
        probs = ad.dropout(probs, rate, rng)
    ctx = (probs @ v).swapaxes(1, 2).reshape(b, tq, d)
    return ctx @ params[f"{prefix}.wo"]


def _ff(params, prefix, x: Tensor) -> Tensor:
    hidden = ad.relu(x @ params[f"{prefix}.w1"] + params[f"{prefix}.b1"])
    return hidden @ params[f"{prefix}.w2"] + params[f"{prefix}.b2"]


def _maybe_dropout(x: Tensor, rate: float, rng) -> Tensor:
    return ad.dropout(x, rate, rng) if rate > 0.0 else x


def encode(params: dict[str, Tensor], config: ModelConfig, ids: np.ndarray,
           lengths: np.ndarray, n_global: int = 1, train: bool = False,
           rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor]:
    """Run the encoder; returns (v_s (B,d), token states (B,T,d))."""
    if ids.ndim != 2:
        raise ContractViolation("encode expects a (batch, seq) id array")
    b, t = ids.shape
    if t > config.max_len:
        raise ContractViolation(f"sequence length {t} exceeds max_len {config.max_len}")
    rate = config.dropout if train else 0.0
    dtype = params["tok_emb"].dtype
    pos = np.broadcast_to(np.arange(t), (b, t))
    x = ad.embedding(params["tok_emb"], ids) + ad.embedding(params["pos_emb"], pos)
    x = _maybe_dropout(x, rate, rng)
    mask = window_mask(lengths, t, config.window, n_global, dtype)
    for i in range(config.n_enc_layers):
        p = f"enc{i}"
        normed = ad.layer_norm(x, params[f"{p}.ln1.g"], params[f"{p}.ln1.b"])
        x = x + _maybe_dropout(
            _mha(params, f"{p}.attn", normed, normed, mask, config.n_heads, rate, rng),
            rate, rng)
        normed = ad.layer_norm(x, params[f"{p}.ln2.g"], params[f"{p}.ln2.b"])
        x = x + _maybe_dropout(_ff(params, f"{p}.ff", normed), rate, rng)
    states = ad.layer_norm(x, params["enc_ln.g"], params["enc_ln.b"])
    v_s = states[:, 0, :]
    return v_s, states


def predict_preference(params: dict[str, Tensor], v_s: Tensor) -> Tensor:
    """p_s = sigmoid(W_ps v_s), shape (B,)."""
    return ad.sigmoid((v_s @ params["w_ps"]).reshape(-1))


def predict_aspects(params: dict[str, Tensor], v_s: Tensor) -> tuple[Tensor, Tensor]:
    """(a_c, a_r): softmax confidences and sigmoid ratings, each (B,K)."""
    a_c = ad.softmax(v_s @ params["w_ac"], axis=-1)
    a_r = ad.sigmoid(v_s @ params["w_ar"])
    return a_c, a_r


def decoder_logits(params: dict[str, Tensor], config: ModelConfig,
                   comment_in: np.ndarray, comment_lengths: np.ndarray,
                   enc_states: Tensor, enc_lengths: np.ndarray,
                   train: bool = False,
                   rng: np.random.Generator | None = None) -> Tensor:
    """Causal decoder over teacher-forced inputs; returns (B,Tc,V) logits."""
    b, t = comment_in.shape
    if t > config.max_len:
        raise ContractViolation(f"comment length {t} exceeds max_len {config.max_len}")
    rate = config.dropout if train else 0.0
    dtype = params["tok_emb"].dtype
    pos = np.broadcast_to(np.arange(t), (b, t))
    x = ad.embedding(params["tok_emb"], comment_in) + ad.embedding(params["dec_pos_emb"], pos)
    x = _maybe_dropout(x, rate, rng)
    self_mask = causal_mask(comment_lengths, t, dtype)
    xmask = cross_mask(enc_lengths, enc_states.shape[1], dtype)
    for i in range(config.n_dec_layers):
        p = f"dec{i}"
        normed = ad.layer_norm(x, params[f"{p}.ln1.g"], params[f"{p}.ln1.b"])
        x = x + _maybe_dropout(
            _mha(params, f"{p}.self", normed, normed, self_mask, config.n_heads, rate, rng),
            rate, rng)
        normed = ad.layer_norm(x, params[f"{p}.ln2.g"], params[f"{p}.ln2.b"])
        x = x + _maybe_dropout(
            _mha(params, f"{p}.cross", normed, enc_states, xmask, config.n_heads, rate, rng),
            rate, rng)
        normed = ad.layer_norm(x, params[f"{p}.ln3.g"], params[f"{p}.ln3.b"])
        x = x + _maybe_dropout(_ff(params, f"{p}.ff", normed), rate, rng)
    states = ad.layer_norm(x, params["dec_ln.g"], params["dec_ln.b"])
    return states @ params["w_out"]


class Model:
    """Bundles config, vocabulary and parameters behind task-level calls."""

    def __init__(self, config: ModelConfig, vocab: Vocabulary,
                 params: dict[str, Tensor] | None = None,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if len(vocab) != config.vocab_size:
            raise ConfigError(
                f"vocab has {len(vocab)} tokens but config says {config.vocab_size}")
        if vocab.n_aspects != config.n_aspects:
            raise ConfigError("vocab and config disagree on aspect count")
        self.config = config
        self.vocab = vocab
        if params is None:
            params = init_params(config, rng or np.random.default_rng(0), dtype=dtype)
        self.params = params

    def encode_stories(self, id_seqs: list[np.ndarray], n_global: int = 1,
                       train: bool = False, rng=None):
        ids, lengths = pad_batch(id_seqs, self.vocab.pad_id)
        v_s, states = encode(self.params, self.config, ids, lengths,
                             n_global=n_global, train=train, rng=rng)
        return v_s, states, lengths

    def evaluate_story(self, story_ids: np.ndarray, aspect_ids=(),
                       max_new_tokens: int = 40) -> EvaluationOutput:
        """Score one story and optionally comment on chosen aspects."""
        with frozen(self.params):
            v_s, _, _ = self.encode_stories([story_ids])
            p_s = float(predict_preference(self.params, v_s).data[0])
            a_c, a_r = predict_aspects(self.params, v_s)
            comments = {}
            for k in aspect_ids:
                out = self.generate_comment(story_ids, k, max_new_tokens=max_new_tokens)
                comments[int(k)] = self.vocab.decode(out)
        return EvaluationOutput(p_s=p_s, a_c=a_c.data[0].copy(),
                                a_r=a_r.data[0].copy(), comments=comments)

    def comment_encoder_states(self, story_id_seqs: list[np.ndarray],
                               aspect_ks: list[int], train: bool = False, rng=None):
        """Encode aspect-conditioned stories for the comment path."""
        conds = [conditioned_ids(s, k, self.vocab, self.config.max_len)
                 for s, k in zip(story_id_seqs, aspect_ks)]
        ids, lengths = pad_batch(conds, self.vocab.pad_id)
        _, states = encode(self.params, self.config, ids, lengths,
                           n_global=3, train=train, rng=rng)
        return states, lengths

    def comment_logits(self, story_id_seqs: list[np.ndarray], aspect_ks: list[int],
                       comment_in: np.ndarray, comment_lengths: np.ndarray,
                       train: bool = False, rng=None) -> Tensor:
        states, enc_lengths = self.comment_encoder_states(
            story_id_seqs, aspect_ks, train=train, rng=rng)
        return decoder_logits(self.params, self.config, comment_in, comment_lengths,
                              states, enc_lengths, train=train, rng=rng)

    def teacher_forced_nll(self, story_ids: np.ndarray, aspect_k: int,
                           comment_ids: np.ndarray, reduce: str = "mean") -> Tensor:
        """Summed-NLL MLE loss for one (story, aspect, comment) triple.

        ``comment_ids`` must start with <bos> and end with <eos>; the
        mean variant divides by the number of predicted tokens.
        """
        comment_ids = np.asarray(comment_ids, dtype=np.int64)
        if len(comment_ids) < 2:
            raise ContractViolation("comment must contain at least <bos> and <eos>")
        if comment_ids[0] != self.vocab.bos_id or comment_ids[-1] != self.vocab.eos_id:
            raise ContractViolation("comment ids must be <bos> ... <eos>")
        inputs = comment_ids[:-1][None, :]
        targets = comment_ids[1:][None, :]
        lengths = np.asarray([inputs.shape[1]])
        logits = self.comment_logits([story_ids], [aspect_k], inputs, lengths)
        logp = ad.log_softmax(logits, axis=-1)
        picked = ad.gather_last(logp, targets)
        total = -picked.sum()
        if reduce == "sum":
            return total
        if reduce == "mean":
            return total / float(targets.size)
        raise ContractViolation(f"unknown reduce '{reduce}'")

    def generate_comment(self, story_ids: np.ndarray, aspect_k: int,
                         max_new_tokens: int = 40, beam: int = 1) -> np.ndarray:
        """Greedy (or beam-search) comment token ids, <bos>/<eos> stripped."""
        if not 0 <= aspect_k < self.config.n_aspects:
            raise ContractViolation(f"aspect id {aspect_k} outside [0, {self.config.n_aspects})")
        if beam < 1:
            raise ContractViolation("beam width must be >= 1")
        with frozen(self.params):
            states, enc_lengths = self.comment_encoder_states([story_ids], [aspect_k])
            if beam == 1:
                out = self._greedy(states, enc_lengths, max_new_tokens)
            else:
                out = self._beam(states, enc_lengths, max_new_tokens, beam)
        return np.asarray(out, dtype=np.int64)

    def _step_logits(self, prefix: list[int], states: Tensor,
                     enc_lengths: np.ndarray) -> np.ndarray:
        ids = np.asarray(prefix, dtype=np.int64)[None, :]
        lengths = np.asarray([len(prefix)])
        logits = decoder_logits(self.params, self.config, ids, lengths,
                                states, enc_lengths)
        return logits.data[0, -1]

    def _greedy(self, states, enc_lengths, max_new_tokens: int) -> list[int]:
        seq = [self.vocab.bos_id]
        out: list[int] = []
        for _ in range(max_new_tokens):
            nxt = int(np.argmax(self._step_logits(seq, states, enc_lengths)))
            if nxt == self.vocab.eos_id:
                break
            out.append(nxt)
            seq.append(nxt)
        return out

    def _beam(self, states, enc_lengths, max_new_tokens: int, width: int) -> list[int]:
        # hypotheses: (score, ids, finished); ties resolve to the earliest
        # expansion so width 1 reproduces greedy exactly
        beams = [(0.0, [self.vocab.bos_id], False)]
        for _ in range(max_new_tokens):
            if all(done for _, _, done in beams):
                break
            candidates = []
            for score, seq, done in beams:
                if done:
                    candidates.append((score, seq, True))
                    continue
                logits = self._step_logits(seq, states, enc_lengths)
                logp = logits - np.log(np.exp(logits - logits.max()).sum()) - logits.max()
                order = np.argsort(-logp, kind="stable")[:width]
                for tok in order:
                    tok = int(tok)
                    candidates.append((score + float(logp[tok]), seq + [tok],
                                       tok == self.vocab.eos_id))
            candidates.sort(key=lambda c: -c[0])
            beams = candidates[:width]
        best = beams[0][1]
        body = best[1:]
        if body and body[-1] == self.vocab.eos_id:
            body = body[:-1]
        return body
