"""Analytic toy models for the split stack and the fused gradient oracle.

The client holds a depth-1 affine encoder with a deterministic per-position
rotation and a depth-4 affine decoder producing logits over local indices;
the cloud holds the middle map, either identity, affine with an optional
low-rank update, or a single softmax-attention block. Every map has exact
hand-derived gradients, so the wire exchange can be checked against a fused
local computation to float precision, which a real transformer would not
allow at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ArgumentError, DimsMismatch, NonFiniteLoss


@dataclass
class GenerationConfig:
    """Decoding controls; temperature 0 means argmax."""

    temperature: float = 0.25
    max_tokens: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.temperature < 0:
            raise ArgumentError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ArgumentError("max_tokens must be >= 1")


def _position_angles(positions: np.ndarray, d: int, dtype) -> tuple[np.ndarray, np.ndarray]:
    pairs = d // 2
    if pairs == 0:
        shape = (len(positions), 0)
        return np.ones(shape, dtype=dtype), np.zeros(shape, dtype=dtype)
    b = np.arange(pairs, dtype=np.float64)
    freq = 1.0 / (10000.0 ** (2.0 * b / d))
    theta = (positions[:, None].astype(np.float64) + 1.0) * freq[None, :]
    return np.cos(theta).astype(dtype), np.sin(theta).astype(dtype)


def _rotate(h: np.ndarray, positions: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Distinct fixed planar rotation per position; pure in (position, d)."""
    n, d = h.shape
    cos, sin = _position_angles(positions, d, h.dtype)
    if inverse:
        sin = -sin
    out = h.copy()
    even = h[:, 0:2 * (d // 2):2]
    odd = h[:, 1:2 * (d // 2):2]
    out[:, 0:2 * (d // 2):2] = cos * even - sin * odd
    out[:, 1:2 * (d // 2):2] = sin * even + cos * odd
    return out


@dataclass
class Encoder:
    """Depth-1 affine map plus the deterministic position transform."""

    weight: np.ndarray  # (m, d)
    bias: np.ndarray    # (d,)
    position_mixing: bool = True

    def forward(self, x: np.ndarray, positions: np.ndarray | None = None) -> np.ndarray:
        if positions is None:
            positions = np.arange(len(x))
        h = x @ self.weight + self.bias
        return _rotate(h, positions) if self.position_mixing else h

    def backward(self, x: np.ndarray, d_out: np.ndarray,
                 positions: np.ndarray | None = None):
        if positions is None:
            positions = np.arange(len(x))
        d_pre = _rotate(d_out, positions, inverse=True) if self.position_mixing else d_out
        grads = {"enc.weight": x.T @ d_pre, "enc.bias": d_pre.sum(axis=0)}
        return d_pre @ self.weight.T, grads


@dataclass
class AffineMiddle:
    """Affine map with an optional rank-r low-rank update."""

    weight: np.ndarray            # (d, d)
    bias: np.ndarray              # (d,)
    lora_u: np.ndarray | None = None  # (d, r)
    lora_v: np.ndarray | None = None  # (d, r)

    @property
    def lora_enabled(self) -> bool:
        return self.lora_u is not None and self.lora_u.shape[1] > 0

    def forward(self, e: np.ndarray) -> np.ndarray:
        y = e @ self.weight + self.bias
        if self.lora_enabled:
            y = y + (e @ self.lora_u) @ self.lora_v.T
        return y

    def backward(self, e: np.ndarray, d_out: np.ndarray):
        d_e = d_out @ self.weight.T
        grads = {"mid.weight": e.T @ d_out, "mid.bias": d_out.sum(axis=0)}
        if self.lora_enabled:
            d_e = d_e + (d_out @ self.lora_v) @ self.lora_u.T
            grads["mid.lora_u"] = e.T @ (d_out @ self.lora_v)
            grads["mid.lora_v"] = d_out.T @ (e @ self.lora_u)
        return d_e, grads


@dataclass
class IdentityMiddle:
    lora_enabled: bool = False

    def forward(self, e: np.ndarray) -> np.ndarray:
        return e

    def backward(self, e: np.ndarray, d_out: np.ndarray):
        return d_out, {}


@dataclass
class AttentionMiddle:
    """Single softmax-attention block with a residual connection."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    lora_enabled: bool = False

    def forward(self, e: np.ndarray) -> np.ndarray:
        y, _ = self._forward_cached(e)
        return y

    def _forward_cached(self, e: np.ndarray):
        d = e.shape[1]
        q, k, v = e @ self.wq, e @ self.wk, e @ self.wv
        scores = (q @ k.T) / math.sqrt(d)
        scores = scores - scores.max(axis=1, keepdims=True)
        a = np.exp(scores)
        a = a / a.sum(axis=1, keepdims=True)
        return e + a @ v, (q, k, v, a)

    def backward(self, e: np.ndarray, d_out: np.ndarray):
        d = e.shape[1]
        _, (q, k, v, a) = self._forward_cached(e)
        d_e = d_out.copy()
        d_a = d_out @ v.T
        d_v = a.T @ d_out
        d_scores = a * (d_a - (d_a * a).sum(axis=1, keepdims=True))
        d_q = d_scores @ k / math.sqrt(d)
        d_k = d_scores.T @ q / math.sqrt(d)
        d_e += d_q @ self.wq.T + d_k @ self.wk.T + d_v @ self.wv.T
        grads = {"mid.wq": e.T @ d_q, "mid.wk": e.T @ d_k, "mid.wv": e.T @ d_v}
        return d_e, grads


@dataclass
class Decoder:
    """Depth-4 affine maps ending in logits over the local index space."""

    layers: list[tuple[np.ndarray, np.ndarray]]  # [(W, b), ...]

    def forward(self, h: np.ndarray) -> np.ndarray:
        for w, b in self.layers:
            h = h @ w + b
        return h

    def forward_cached(self, h: np.ndarray):
        acts = [h]
        for w, b in self.layers:
            h = h @ w + b
            acts.append(h)
        return h, acts

    def backward(self, acts, d_out: np.ndarray):
        grads = {}
        for li in range(len(self.layers) - 1, -1, -1):
            w, _ = self.layers[li]
            grads[f"dec.{li}.weight"] = acts[li].T @ d_out
            grads[f"dec.{li}.bias"] = d_out.sum(axis=0)
            d_out = d_out @ w.T
        return d_out, grads


@dataclass
class ToyStack:
    """Client encoder/decoder plus the cloud middle, with shared dims."""

    m: int
    d: int
    vocab_size: int
    encoder: Encoder
    middle: IdentityMiddle | AffineMiddle | AttentionMiddle
    decoder: Decoder

    @property
    def dtype(self):
        return self.encoder.weight.dtype

    @classmethod
    def random(cls, m: int, d: int, vocab_size: int, seed: int, *,
               middle: str = "affine", lora_rank: int = 0,
               position_mixing: bool = True, dtype=np.float32,
               decoder_depth: int = 4) -> "ToyStack":
        rng = np.random.Generator(np.random.PCG64(seed))

        def init(rows, cols):
            return (rng.normal(0.0, 1.0 / math.sqrt(rows), (rows, cols))).astype(dtype)

        enc = Encoder(init(m, d), np.zeros(d, dtype=dtype), position_mixing)
        if middle == "identity":
            mid = IdentityMiddle()
        elif middle == "affine":
            u = v = None
            if lora_rank > 0:
                u = init(d, lora_rank)
                v = (rng.normal(0.0, 0.01, (d, lora_rank))).astype(dtype)
            mid = AffineMiddle(init(d, d) + np.eye(d, dtype=dtype),
                               np.zeros(d, dtype=dtype), u, v)
        elif middle == "attention":
            mid = AttentionMiddle(init(d, d), init(d, d), init(d, d))
        else:
            raise ArgumentError(f"unknown middle kind {middle!r}")
        layers = []
        width = d
        for li in range(decoder_depth):
            out = vocab_size if li == decoder_depth - 1 else d
            layers.append((init(width, out), np.zeros(out, dtype=dtype)))
            width = out
        return cls(m, d, vocab_size, enc, mid, Decoder(layers))

    @classmethod
    def identity(cls, dim: int, dtype=np.float32) -> "ToyStack":
        eye = np.eye(dim, dtype=dtype)
        zero = np.zeros(dim, dtype=dtype)
        enc = Encoder(eye.copy(), zero.copy(), position_mixing=False)
        dec = Decoder([(eye.copy(), zero.copy()) for _ in range(4)])
        return cls(dim, dim, dim, enc, IdentityMiddle(), dec)

    def astype(self, dtype) -> "ToyStack":
        def cast(a):
            return None if a is None else a.astype(dtype)
        enc = Encoder(cast(self.encoder.weight), cast(self.encoder.bias),
                      self.encoder.position_mixing)
        if isinstance(self.middle, IdentityMiddle):
            mid = IdentityMiddle()
        elif isinstance(self.middle, AffineMiddle):
            mid = AffineMiddle(cast(self.middle.weight), cast(self.middle.bias),
                               cast(self.middle.lora_u), cast(self.middle.lora_v))
        else:
            mid = AttentionMiddle(cast(self.middle.wq), cast(self.middle.wk),
                                  cast(self.middle.wv))
        dec = Decoder([(cast(w), cast(b)) for w, b in self.decoder.layers])
        return ToyStack(self.m, self.d, self.vocab_size, enc, mid, dec)


def cross_entropy(logits: np.ndarray, targets: np.ndarray):
    """Mean next-token cross-entropy and its logit gradient."""
    n = len(targets)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    loss = float(-logp[np.arange(n), targets].mean())
    if not math.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss}")
    d_logits = np.exp(logp)
    d_logits[np.arange(n), targets] -= 1.0
    return loss, (d_logits / n).astype(logits.dtype)


def monolithic_logits(stack: ToyStack, x: np.ndarray,
                      positions: np.ndarray | None = None) -> np.ndarray:
    """Fused encoder -> middle -> decoder forward pass."""
    if x.shape[1] != stack.m:
        raise DimsMismatch(f"input width {x.shape[1]}, encoder expects {stack.m}")
    e = stack.encoder.forward(x, positions)
    enriched = stack.middle.forward(e)
    return stack.decoder.forward(enriched)


def monolithic_oracle(stack: ToyStack, x: np.ndarray, targets: np.ndarray,
                      positions: np.ndarray | None = None):
    """Fused forward plus exact analytic gradients of every parameter and
    both boundary activations.

    Returns (loss, logits, grads) where grads includes "boundary.d_enriched"
    (loss gradient at the middle output) and "boundary.d_e" (at the middle
    input), alongside all encoder/middle/decoder parameter gradients.
    """
    if positions is None:
        positions = np.arange(len(x))
    e = stack.encoder.forward(x, positions)
    enriched = stack.middle.forward(e)
    logits, acts = stack.decoder.forward_cached(enriched)
    loss, d_logits = cross_entropy(logits, np.asarray(targets))
    d_enriched, dec_grads = stack.decoder.backward(acts, d_logits)
    d_e, mid_grads = stack.middle.backward(e, d_enriched)
    _, enc_grads = stack.encoder.backward(x, d_e, positions)
    grads = {**dec_grads, **mid_grads, **enc_grads,
             "boundary.d_enriched": d_enriched, "boundary.d_e": d_e}
    return loss, logits, grads


def _param_refs(stack: ToyStack) -> dict[str, np.ndarray]:
    refs = {"enc.weight": stack.encoder.weight, "enc.bias": stack.encoder.bias}
    mid = stack.middle
    if isinstance(mid, AffineMiddle):
        refs["mid.weight"] = mid.weight
        refs["mid.bias"] = mid.bias
        if mid.lora_enabled:
            refs["mid.lora_u"] = mid.lora_u
            refs["mid.lora_v"] = mid.lora_v
    elif isinstance(mid, AttentionMiddle):
        refs.update({"mid.wq": mid.wq, "mid.wk": mid.wk, "mid.wv": mid.wv})
    for li, (w, b) in enumerate(stack.decoder.layers):
        refs[f"dec.{li}.weight"] = w
        refs[f"dec.{li}.bias"] = b
    return refs


def apply_gradients(stack: ToyStack, grads: dict[str, np.ndarray], lr: float) -> None:
    """In-place SGD step over every parameter present in grads."""
    for name, ref in _param_refs(stack).items():
        if name in grads:
            ref -= (lr * grads[name]).astype(ref.dtype)


def finite_difference_check(stack: ToyStack, x: np.ndarray, targets: np.ndarray,
                            n_directions: int = 10, step: float = 1e-4,
                            seed: int = 0) -> float:
    """Max relative error of analytic directional derivatives vs central
    differences over random parameter directions."""
    stack64 = stack.astype(np.float64)
    x64 = x.astype(np.float64)
    rng = np.random.Generator(np.random.PCG64(seed))
    _, _, grads = monolithic_oracle(stack64, x64, targets)
    refs = _param_refs(stack64)
    worst = 0.0
    for _ in range(n_directions):
        direction = {name: rng.normal(size=ref.shape) for name, ref in refs.items()}
        analytic = sum(float((grads[name] * vec).sum()) for name, vec in direction.items())

        def loss_at(sign: float) -> float:
            for name, ref in refs.items():
                ref += sign * step * direction[name]
            loss, _, _ = monolithic_oracle(stack64, x64, targets)
            for name, ref in refs.items():
                ref -= sign * step * direction[name]
            return loss

        numeric = (loss_at(+1.0) - loss_at(-1.0)) / (2 * step)
        denom = max(abs(analytic), abs(numeric), 1e-12)
        worst = max(worst, abs(analytic - numeric) / denom)
    return worst
