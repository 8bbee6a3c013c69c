"""The client side: privacy-preserving generation and split fine-tuning.

The client embeds tokens through its randomized vocabulary, runs the
encoder locally, ships only boundary activations, and decodes enriched
embeddings into logits over its secret local index space. Nothing that
crosses the wire names a token: the frame schema has no representation for
strings, index tables, or the permutation.
"""

from __future__ import annotations

import numpy as np

from ..arr import IndVocab
from ..errors import ArgumentError, DimsMismatch, ProtocolError
from ..ltokenizer import TokenPermutation
from ..vocab import Vocabulary
from .frames import (
    EmptyPayload,
    Frame,
    FrameType,
    HelloPayload,
    Mode,
    TensorPayload,
    WIRE_VERSION,
)
from .stack import GenerationConfig, ToyStack, apply_gradients, cross_entropy
from .transport import read_frame, write_frame


class ClientSession:
    """One negotiated connection to the cloud middle server."""

    def __init__(self, transport, stack: ToyStack, mode: Mode = Mode.INFERENCE,
                 session_id: int = 1, lora: bool = False):
        self.transport = transport
        self.stack = stack
        self.mode = mode
        self.session_id = session_id
        hello = HelloPayload(WIRE_VERSION, mode, stack.m, stack.d,
                             stack.vocab_size, lora)
        write_frame(transport, Frame(FrameType.HELLO, session_id, hello))
        ack = self._expect(FrameType.HELLO_ACK)
        self.lora_active = ack.payload.lora_enabled

    def _expect(self, frame_type: FrameType) -> Frame:
        frame = read_frame(self.transport)
        if frame is None:
            raise ProtocolError("EOF", "connection closed by peer")
        if frame.frame_type == FrameType.ERROR:
            raise ProtocolError(frame.payload.code.name, frame.payload.message)
        if frame.frame_type != frame_type:
            raise ProtocolError("SEQ", f"expected {frame_type.name}, "
                                       f"got {frame.frame_type.name}")
        return frame

    def enrich(self, e: np.ndarray) -> np.ndarray:
        write_frame(self.transport, Frame(FrameType.EMB, self.session_id,
                                          TensorPayload(e)))
        return self._expect(FrameType.ENRICHED).payload.array

    def backprop(self, d_enriched: np.ndarray) -> np.ndarray:
        write_frame(self.transport, Frame(FrameType.GRAD_DOWN, self.session_id,
                                          TensorPayload(d_enriched)))
        return self._expect(FrameType.GRAD_UP).payload.array

    def apply_remote_updates(self) -> None:
        write_frame(self.transport, Frame(FrameType.PARAM_ACK, self.session_id,
                                          EmptyPayload()))
        self._expect(FrameType.PARAM_ACK)

    def bye(self) -> None:
        write_frame(self.transport, Frame(FrameType.BYE, self.session_id,
                                          EmptyPayload()))
        self.transport.close()


def _original_indices(tokens, vocab: Vocabulary) -> list[int]:
    out = []
    for tok in tokens:
        out.append(vocab.index_of(tok) if isinstance(tok, str) else int(tok))
    return out


def client_generate(prompt, indvocab: IndVocab, perm: TokenPermutation,
                    stack: ToyStack, session: ClientSession,
                    cfg: GenerationConfig, vocab: Vocabulary) -> list[int]:
    """Generate local-index tokens through the split exchange.

    Each step re-sends the full prefix: embed through the randomized
    vocabulary, encode locally, enrich remotely, decode locally, then
    sample the next local index (argmax at temperature 0).
    """
    if indvocab.dim != stack.m:
        raise DimsMismatch(f"embedding width {indvocab.dim}, encoder expects {stack.m}")
    if perm.size != indvocab.size:
        raise ArgumentError("permutation size does not match vocabulary")
    emb = indvocab.randomized_embeddings
    prefix_orig = _original_indices(prompt, vocab)
    if not prefix_orig:
        raise ArgumentError("prompt must contain at least one token")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    generated: list[int] = []
    for _ in range(cfg.max_tokens):
        x = emb[np.array(prefix_orig, dtype=np.int64)]
        e = stack.encoder.forward(x.astype(stack.dtype))
        enriched = session.enrich(e)
        logits = stack.decoder.forward(enriched.astype(stack.dtype))
        last = logits[-1].astype(np.float64)
        if cfg.temperature == 0:
            local = int(np.argmax(last))
        else:
            scaled = last / cfg.temperature
            scaled -= scaled.max()
            p = np.exp(scaled)
            p /= p.sum()
            local = int(rng.choice(len(p), p=p))
        generated.append(local)
        prefix_orig.append(int(perm.inverse[local]))
    return generated


def stuning_round(batch, stack: ToyStack, session: ClientSession,
                  learning_rate: float, indvocab: IndVocab,
                  perm: TokenPermutation, vocab: Vocabulary) -> float:
    """One split fine-tuning round over a batch of prompt/code records.

    Per record: forward through the split exchange, compute next-token
    cross-entropy against local one-hot targets, send the boundary gradient
    down, receive the encoder-boundary gradient back, and form client
    parameter gradients. Per-record gradients are averaged over the batch
    before the update; the cloud applies its accumulated low-rank update at
    the batch boundary. Returns the mean pre-update loss.
    """
    if session.mode != Mode.TUNING:
        raise ArgumentError("stuning_round needs a tuning-mode session")
    emb = indvocab.randomized_embeddings
    total: dict[str, np.ndarray] = {}
    losses = []
    count = 0
    for rec in batch:
        seq = _original_indices(tuple(rec.prompt) + tuple(rec.code), vocab)
        if len(seq) < 2:
            continue
        x = emb[np.array(seq[:-1], dtype=np.int64)].astype(stack.dtype)
        positions = np.arange(len(seq) - 1)
        targets = perm.forward[np.array(seq[1:], dtype=np.int64)]
        e = stack.encoder.forward(x, positions)
        enriched = session.enrich(e).astype(stack.dtype)
        logits, acts = stack.decoder.forward_cached(enriched)
        loss, d_logits = cross_entropy(logits, targets)
        losses.append(loss)
        d_enriched, dec_grads = stack.decoder.backward(acts, d_logits)
        d_e = session.backprop(d_enriched).astype(stack.dtype)
        _, enc_grads = stack.encoder.backward(x, d_e, positions)
        for name, g in {**dec_grads, **enc_grads}.items():
            total[name] = g if name not in total else total[name] + g
        count += 1
    if count == 0:
        raise ArgumentError("batch contains no trainable record")
    mean_grads = {name: g / count for name, g in total.items()}
    if learning_rate != 0.0:
        apply_gradients(stack, mean_grads, learning_rate)
    session.apply_remote_updates()
    return float(np.mean(losses))
