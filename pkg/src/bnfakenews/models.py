"""Declarative model specs for the six classifiers, construction, prediction, checkpoints."""

from __future__ import annotations

import copy
import json
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .nnet.layers import GruParams, LstmParams, bidirectional_gru, dropout, final_state, glorot, gru_sequence, lstm_sequence
from .nnet.tensor import (
    Tensor,
    concat,
    conv1d,
    embedding,
    global_avg_pool,
    global_max_pool,
    linear,
    max_pool1d,
    relu,
    reshape,
    stable_sigmoid,
    stack_time,
)
from .tokenizer import PAD_INDEX

ARCHITECTURES = ("bigru", "cnn1d", "lstm", "cnn_lstm", "cnn_gru", "cnn_lstm_gmp")
FORMAT_VERSION = 1
MAGIC = b"BNFNCKPT"
PREDICT_CHUNK = 32


class InvalidSpec(ValueError):
    pass


class SequenceLengthMismatch(ValueError):
    pass


class CheckpointError(ValueError):
    pass


class FormatVersionMismatch(CheckpointError):
    pass


class ChecksumMismatch(CheckpointError):
    pass


@dataclass
class ModelSpec:
    name: str
    vocab_size: int
    seq_len: int
    embed_dim: int = 128
    hidden: int = 64
    conv_filters: int = 128
    kernel_size: int = 5
    pool_window: int = 2
    dense_sizes: tuple[int, ...] = (64, 32)
    dropout: float = 0.3
    masked_pooling: bool = True
    layers: list[dict] | None = field(default=None)

    def stack(self) -> list[dict]:
        """The explicit layer list, or the default one for ``name``."""
        if self.layers is not None:
            return copy.deepcopy(self.layers)
        return default_layers(self)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dense_sizes"] = list(self.dense_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        d["dense_sizes"] = tuple(d.get("dense_sizes", (64, 32)))
        return cls(**d)


def _head(spec: ModelSpec, n_dense: int) -> list[dict]:
    layers = []
    for units in spec.dense_sizes[:n_dense]:
        layers.append({"type": "dense", "units": units, "activation": "relu"})
        layers.append({"type": "dropout", "rate": spec.dropout})
    layers.append({"type": "dense", "units": 1, "activation": "sigmoid"})
    return layers


def default_layers(spec: ModelSpec) -> list[dict]:
    emb = {"type": "embedding", "vocab_size": spec.vocab_size, "dim": spec.embed_dim}
    conv = {"type": "conv1d", "filters": spec.conv_filters, "kernel_size": spec.kernel_size}
    H = spec.hidden
    if spec.name == "bigru":
        body = [{"type": "bigru", "units": H}, {"type": "global_avg", "masked": spec.masked_pooling}]
        return [emb, *body, *_head(spec, 2)]
    if spec.name == "cnn1d":
        body = [conv, {"type": "max_pool", "window": spec.pool_window}, {"type": "global_max", "masked": False}]
        return [emb, *body, *_head(spec, 1)]
    if spec.name == "lstm":
        return [emb, {"type": "lstm", "units": H, "return_sequences": False}, *_head(spec, 1)]
    if spec.name in ("cnn_lstm", "cnn_gru"):
        rnn = "lstm" if spec.name == "cnn_lstm" else "gru"
        branches = [
            [conv, {"type": "global_max", "masked": False}],
            [{"type": rnn, "units": H, "return_sequences": False}],
        ]
        return [emb, {"type": "branches", "branches": branches}, *_head(spec, 1)]
    if spec.name == "cnn_lstm_gmp":
        body = [conv, {"type": "lstm", "units": H, "return_sequences": True}, {"type": "global_max", "masked": False}]
        return [emb, *body, *_head(spec, 1)]
    raise InvalidSpec(f"unknown architecture {spec.name!r}; expected one of {', '.join(ARCHITECTURES)}")


# shape inference ------------------------------------------------------------------


def _describe(layer: dict) -> str:
    return layer.get("type", "?")


def _infer(stack: list[dict], state: tuple, prefix: str, shapes: list) -> tuple:
    """Walk ``stack`` from ``state``; append (name, shape, kind) for each parameter."""
    prev = "input"
    for i, layer in enumerate(stack):
        kind = layer.get("type")
        name = f"{prefix}{i}.{kind}"
        pair = f"{prev} -> {_describe(layer)}"
        if kind == "embedding":
            if state[0] != "tokens":
                raise InvalidSpec(f"{pair}: embedding needs token input")
            shapes.append((f"{name}.E", (layer["vocab_size"], layer["dim"]), "embedding"))
            state = ("seq", state[1], layer["dim"])
        elif kind in ("bigru", "gru", "lstm"):
            if state[0] != "seq":
                raise InvalidSpec(f"{pair}: recurrent layer needs a sequence")
            H, d = layer["units"], state[2]
            gates = "ifog" if kind == "lstm" else "zrh"
            for direction in (("fwd", "bwd") if kind == "bigru" else ("cell",)):
                for g in gates:
                    shapes.append((f"{name}.{direction}.W_{g}", (H, d), "matrix"))
                    shapes.append((f"{name}.{direction}.U_{g}", (H, H), "matrix"))
                    shapes.append((f"{name}.{direction}.b_{g}", (H,), "bias"))
            if kind == "bigru" or layer.get("return_sequences", False):
                state = ("seq", state[1], 2 * H if kind == "bigru" else H)
            else:
                state = ("vec", H)
        elif kind == "conv1d":
            if state[0] != "seq":
                raise InvalidSpec(f"{pair}: conv1d needs a sequence")
            K, k = layer["filters"], layer["kernel_size"]
            if k > state[1]:
                raise InvalidSpec(f"{pair}: kernel width {k} exceeds sequence length {state[1]}")
            shapes.append((f"{name}.kernels", (K, k, state[2]), "conv"))
            shapes.append((f"{name}.bias", (K,), "bias"))
            state = ("seq", state[1] - k + 1, K)
        elif kind == "max_pool":
            if state[0] != "seq" or layer["window"] > state[1]:
                raise InvalidSpec(f"{pair}: max_pool needs a sequence at least one window long")
            state = ("seq", state[1] // layer["window"], state[2])
        elif kind in ("global_avg", "global_max"):
            if state[0] != "seq":
                raise InvalidSpec(f"{pair}: global pooling needs a sequence")
            state = ("vec", state[2])
        elif kind == "dense":
            if state[0] != "vec":
                raise InvalidSpec(f"{pair}: dense needs a vector input, got a sequence")
            n = state[1]
            declared = layer.get("in_features")
            if declared is not None and declared != n:
                raise InvalidSpec(f"{pair}: dense expects {declared} inputs but receives {n}")
            if layer.get("activation", "none") not in ("relu", "none", "sigmoid"):
                raise InvalidSpec(f"{pair}: unknown activation {layer.get('activation')!r}")
            shapes.append((f"{name}.W", (layer["units"], n), "matrix"))
            shapes.append((f"{name}.b", (layer["units"],), "bias"))
            state = ("vec", layer["units"])
        elif kind == "dropout":
            if not 0.0 <= layer["rate"] < 1.0:
                raise InvalidSpec(f"{pair}: dropout rate must lie in [0, 1)")
        elif kind == "branches":
            width = 0
            for j, branch in enumerate(layer["branches"]):
                out = _infer(branch, state, f"{name}.{j}.", shapes)
                if out[0] != "vec":
                    raise InvalidSpec(f"{pair}: branch {j} must end in a vector")
                width += out[1]
            state = ("vec", width)
        else:
            raise InvalidSpec(f"{pair}: unknown layer type {kind!r}")
        prev = _describe(layer)
    return state


def parameter_shapes(spec: ModelSpec) -> list[tuple[str, tuple[int, ...], str]]:
    stack = spec.stack()
    if not stack:
        raise InvalidSpec("empty layer stack")
    shapes: list = []
    out = _infer(stack, ("tokens", spec.seq_len), "", shapes)
    last = stack[-1]
    if out != ("vec", 1) or last.get("type") != "dense" or last.get("activation") != "sigmoid":
        raise InvalidSpec("the stack must end in a 1-unit sigmoid dense layer")
    return shapes


# model --------------------------------------------------------------------------------


class Model:
    def __init__(self, spec: ModelSpec, params: dict[str, Tensor]):
        self.spec = spec
        self.params = params
        self._stack = spec.stack()

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def n_params(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def _rnn(self, prefix: str, kind: str):
        cls = LstmParams if kind == "lstm" else GruParams
        gates = "ifog" if kind == "lstm" else "zrh"
        names = [f"{m}_{g}" for m in "WUb" for g in gates]
        return cls(**{n: self.params[f"{prefix}.{n}"] for n in names})

    def _run(self, stack, prefix, x, lengths, mode, rng):
        for i, layer in enumerate(stack):
            kind = layer["type"]
            name = f"{prefix}{i}.{kind}"
            if kind == "embedding":
                x = embedding(self.params[f"{name}.E"], x)
            elif kind == "bigru":
                x = bidirectional_gru(x, self._rnn(f"{name}.fwd", "gru"), self._rnn(f"{name}.bwd", "gru"))
            elif kind in ("gru", "lstm"):
                p = self._rnn(f"{name}.cell", kind)
                states = lstm_sequence(x, p) if kind == "lstm" else gru_sequence(x, p)
                x = stack_time(states) if layer.get("return_sequences") else final_state(states, lengths)
            elif kind == "conv1d":
                x = relu(conv1d(x, self.params[f"{name}.kernels"], self.params[f"{name}.bias"]))
                lengths = None if lengths is None else np.maximum(lengths - layer["kernel_size"] + 1, 1)
            elif kind == "max_pool":
                x = max_pool1d(x, layer["window"])
                lengths = None if lengths is None else np.maximum(lengths // layer["window"], 1)
            elif kind == "global_avg":
                x = global_avg_pool(x, lengths if layer.get("masked", True) else None)
            elif kind == "global_max":
                x = global_max_pool(x, lengths if layer.get("masked", False) else None)
            elif kind == "dense":
                x = linear(x, self.params[f"{name}.W"], self.params[f"{name}.b"])
                if layer.get("activation") == "relu":
                    x = relu(x)
            elif kind == "dropout":
                x = dropout(x, layer["rate"], mode, rng)
            elif kind == "branches":
                outs = [self._run(b, f"{name}.{j}.", x, lengths, mode, rng) for j, b in enumerate(layer["branches"])]
                x = concat(outs, axis=-1)
        return x

    def forward(self, indices, mode: str = "infer", rng: np.random.Generator | None = None) -> Tensor:
        """Logits ``[B]`` for a ``[B, L]`` index matrix (the head's sigmoid is not applied)."""
        indices = np.asarray(indices, dtype=np.int64)
        if indices.ndim != 2:
            raise SequenceLengthMismatch(f"expected a [batch, length] index matrix, got shape {indices.shape}")
        lengths = (indices != PAD_INDEX).sum(axis=1)
        out = self._run(self._stack, "", indices, lengths, mode, rng)
        return reshape(out, (indices.shape[0],))

    def predict(self, batch) -> np.ndarray:
        """Probabilities of the authentic class, one per sequence, in input order.

        Sequences are scored in fixed-size chunks so a sequence's score never
        depends on what else is in the batch.
        """
        batch = np.asarray(batch, dtype=np.int64)
        if batch.ndim == 1:
            batch = batch[None, :]
        if batch.ndim != 2 or batch.shape[1] != self.spec.seq_len:
            raise SequenceLengthMismatch(f"model expects sequences of length {self.spec.seq_len}, got shape {batch.shape}")
        out = np.empty(batch.shape[0], dtype=self.dtype)
        for start in range(0, batch.shape[0], PREDICT_CHUNK):
            chunk = batch[start : start + PREDICT_CHUNK]
            n = chunk.shape[0]
            if n < PREDICT_CHUNK:
                chunk = np.vstack([chunk, np.full((PREDICT_CHUNK - n, chunk.shape[1]), PAD_INDEX, dtype=np.int64)])
            logits = self.forward(chunk, mode="infer").data
            out[start : start + n] = stable_sigmoid(logits[:n])
        return out


def build_model(spec: ModelSpec, seed: int = 0, dtype=np.float32) -> Model:
    """Validate ``spec`` and draw every parameter from one seeded generator, in declaration order."""
    if spec.name not in ARCHITECTURES and spec.layers is None:
        raise InvalidSpec(f"unknown architecture {spec.name!r}; expected one of {', '.join(ARCHITECTURES)}")
    shapes = parameter_shapes(spec)
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    for name, shape, kind in shapes:
        if kind == "embedding":
            data = rng.uniform(-0.05, 0.05, size=shape).astype(dtype)
        elif kind == "matrix":
            data = glorot(rng, shape, shape[1], shape[0], dtype)
        elif kind == "conv":
            K, k, d = shape
            data = glorot(rng, shape, k * d, k * K, dtype)
        else:
            data = np.zeros(shape, dtype=dtype)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return Model(spec, params)


# checkpoints ----------------------------------------------------------------------------


def save_checkpoint(model: Model, path, vocab_ref: dict | None = None, config_digest: str | None = None) -> None:
    """Write manifest + float32 parameter blob + CRC-32 trailer to one file."""
    manifest = {
        "format_version": FORMAT_VERSION,
        "spec": model.spec.to_dict(),
        "vocabulary": vocab_ref or {},
        "train_config_sha256": config_digest,
        "tensors": [{"name": n, "shape": list(t.shape)} for n, t in model.params.items()],
    }
    head = json.dumps(manifest, sort_keys=True, ensure_ascii=False, indent=1).encode("utf-8")
    parts = [MAGIC, struct.pack("<Q", len(head)), head]
    for t in model.params.values():
        data = np.ascontiguousarray(t.data, dtype="<f4")
        parts.append(struct.pack("<Q", data.size))
        parts.append(data.tobytes())
    body = b"".join(parts)
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def read_manifest(path) -> dict:
    blob = Path(path).read_bytes()
    return _parse_manifest(blob)[0]


def _parse_manifest(blob: bytes) -> tuple[dict, int]:
    if len(blob) < len(MAGIC) + 12 or not blob.startswith(MAGIC):
        raise ChecksumMismatch("not a checkpoint file or truncated header")
    (n,) = struct.unpack_from("<Q", blob, len(MAGIC))
    start = len(MAGIC) + 8
    if start + n > len(blob):
        raise ChecksumMismatch("manifest truncated")
    try:
        manifest = json.loads(blob[start : start + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ChecksumMismatch("manifest is corrupt") from exc
    return manifest, start + n


def load_checkpoint(path) -> Model:
    """Rebuild a model; the format version is checked before the checksum."""
    blob = Path(path).read_bytes()
    manifest, offset = _parse_manifest(blob)
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(f"checkpoint format {version!r}, this build reads {FORMAT_VERSION}")
    body, trailer = blob[:-4], blob[-4:]
    if len(blob) < offset + 4 or struct.unpack("<I", trailer)[0] != zlib.crc32(body):
        raise ChecksumMismatch(f"{path}: CRC-32 mismatch")
    spec = ModelSpec.from_dict(manifest["spec"])
    expected = parameter_shapes(spec)
    entries = manifest["tensors"]
    if [e["name"] for e in entries] != [name for name, _, _ in expected]:
        raise CheckpointError("tensor list does not match the model spec")
    params: dict[str, Tensor] = {}
    for (name, shape, _), entry in zip(expected, entries):
        (count,) = struct.unpack_from("<Q", body, offset)
        offset += 8
        if count != int(np.prod(shape)) or list(shape) != entry["shape"]:
            raise CheckpointError(f"{name}: stored size {count} does not match shape {shape}")
        data = np.frombuffer(body, dtype="<f4", count=count, offset=offset).astype(np.float32).reshape(shape)
        offset += 4 * count
        params[name] = Tensor(data, requires_grad=True, name=name)
    if offset != len(body):
        raise CheckpointError("trailing bytes after the parameter blob")
    return Model(spec, params)
