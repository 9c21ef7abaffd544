"""Multi-task transformer encoder classifier.

Shared embedding + fixed sinusoidal positions -> N post-norm encoder layers
(multi-head self-attention with PAD keys masked out, ReLU feed-forward) ->
mean pooling over non-PAD positions -> one POS head and one Contlex head.
"""
import json
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from app.errors import ConfigError, DataFormatError, InputError
from app.schemas import ModelConfig
from app.services import numerics as nx
from app.services.augment import AugmentedEntry, assemble_input
from app.services.bpe import PAD_ID, SEP_ID, BpeModel, encode
from app.services.labels import LabelSpace, encode_records
from app.services.numerics import Rng, Tensor
from app.services.optim import AdamState

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "mtc/v1"
_HEADER_LEN = struct.Struct("<Q")


def xavier_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def sinusoidal_table(max_len: int, d_model: int) -> np.ndarray:
    position = np.arange(max_len, dtype=np.float64)[:, None]
    div_term = np.exp(np.arange(0, d_model, 2, dtype=np.float64) * (-math.log(10000.0) / d_model))
    table = np.zeros((max_len, d_model), dtype=np.float64)
    table[:, 0::2] = np.sin(position * div_term)
    table[:, 1::2] = np.cos(position * div_term[: d_model // 2])
    return table


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape of every learnable tensor, in a fixed order."""
    d, f = config.d_model, config.ffn_dim
    shapes: dict[str, tuple[int, ...]] = {"embedding": (config.vocab_size, d)}
    for layer in range(config.n_layers):
        p = f"layers.{layer}."
        for name in ("wq", "wk", "wv", "wo"):
            shapes[p + name] = (d, d)
            shapes[p + "b" + name[1]] = (d,)
        shapes[p + "ln1.gamma"] = (d,)
        shapes[p + "ln1.beta"] = (d,)
        shapes[p + "ffn.w1"] = (d, f)
        shapes[p + "ffn.b1"] = (f,)
        shapes[p + "ffn.w2"] = (f, d)
        shapes[p + "ffn.b2"] = (d,)
        shapes[p + "ln2.gamma"] = (d,)
        shapes[p + "ln2.beta"] = (d,)
    shapes["pos_head.w"] = (d, config.n_pos)
    shapes["pos_head.b"] = (config.n_pos,)
    shapes["contlex_head.w"] = (d, config.n_contlex)
    shapes["contlex_head.b"] = (config.n_contlex,)
    return shapes


def validate_config(config: ModelConfig) -> None:
    if config.d_model % config.n_heads != 0:
        raise ConfigError(f"d_model {config.d_model} is not divisible by n_heads {config.n_heads}")
    if not 0.0 <= config.dropout < 1.0:
        raise ConfigError(f"dropout must be in [0, 1), got {config.dropout}")


class TransformerClassifier:
    """All learnable weights plus the architecture config."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor]):
        validate_config(config)
        expected = parameter_shapes(config)
        if list(params) != list(expected) or any(params[k].shape != s for k, s in expected.items()):
            raise ConfigError("parameter set does not match the model config")
        self.config = config
        self.params = params
        dtype = next(iter(params.values())).dtype
        self.positional = sinusoidal_table(config.max_len, config.d_model).astype(dtype)

    @property
    def dtype(self):
        return self.positional.dtype

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            if state[name].shape != p.shape:
                raise DataFormatError(f"state tensor {name} has shape {state[name].shape}, expected {p.shape}")
            p.data = np.ascontiguousarray(state[name], dtype=p.dtype)

    def astype(self, dtype) -> "TransformerClassifier":
        """Copy of the model in another float precision (float64 = shadow mode)."""
        params = {name: Tensor(p.data.astype(dtype), requires_grad=True, dtype=dtype)
                  for name, p in self.params.items()}
        return TransformerClassifier(self.config, params)

    def copy(self) -> "TransformerClassifier":
        return self.astype(self.dtype)


def init(config: ModelConfig) -> TransformerClassifier:
    """Xavier-uniform weights, unit layer-norm gains, zero biases; deterministic under seed."""
    validate_config(config)
    rng = Rng(config.seed).split("init")
    params: dict[str, Tensor] = {}
    for name, shape in parameter_shapes(config).items():
        if len(shape) == 2:
            bound = xavier_bound(shape[0], shape[1])
            data = rng.split(name).uniform(-bound, bound, shape)
        elif name.endswith(".gamma"):
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        params[name] = Tensor(data, requires_grad=True, dtype=np.float32)
    model = TransformerClassifier(config, params)
    logger.info(f"Initialized classifier: {config.n_layers} layers, {config.n_heads} heads, "
                f"d_model={config.d_model}, ffn={config.ffn_dim}, {model.n_parameters()} parameters")
    return model


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return nx.add(nx.matmul(x, w), b)


def _split_heads(x: Tensor, batch: int, seq: int, heads: int, head_dim: int) -> Tensor:
    return nx.transpose(nx.reshape(x, (batch, seq, heads, head_dim)), (0, 2, 1, 3))


def forward(
    model: TransformerClassifier,
    token_ids,
    pad_mask,
    training: bool = False,
    rng: Optional[Rng] = None,
    attention_out: Optional[list] = None,
) -> tuple[Tensor, Tensor]:
    """Compute (pos_logits [B, n_pos], contlex_logits [B, n_contlex]).

    ``pad_mask`` is True at PAD positions. Dropout is active only when
    ``training`` is set; evaluation mode is a pure function of the weights.
    """
    cfg = model.config
    p = model.params
    ids = np.asarray(token_ids, dtype=np.int64)
    pad = np.asarray(pad_mask, dtype=bool)
    if ids.ndim != 2 or pad.shape != ids.shape:
        raise InputError(f"token_ids and pad_mask must both be [batch, seq], got {ids.shape} and {pad.shape}")
    batch, seq = ids.shape
    if seq > cfg.max_len:
        raise InputError(f"sequence length {seq} exceeds max_len {cfg.max_len}")
    if ids.size and (ids.min() < 0 or ids.max() >= cfg.vocab_size):
        raise InputError(f"token ids must lie in [0, {cfg.vocab_size})")
    valid = ~pad
    if not valid.any(axis=1).all():
        raise InputError("batch contains a row made only of padding")

    rate = cfg.dropout
    heads = cfg.n_heads
    head_dim = cfg.d_model // heads
    key_mask = valid[:, None, None, :]

    x = nx.mul(nx.embedding(p["embedding"], ids), math.sqrt(cfg.d_model))
    x = nx.add(x, model.positional[:seq])
    x = nx.dropout(x, rate, training, rng)

    for layer in range(cfg.n_layers):
        pre = f"layers.{layer}."
        q = _split_heads(_linear(x, p[pre + "wq"], p[pre + "bq"]), batch, seq, heads, head_dim)
        k = _split_heads(_linear(x, p[pre + "wk"], p[pre + "bk"]), batch, seq, heads, head_dim)
        v = _split_heads(_linear(x, p[pre + "wv"], p[pre + "bv"]), batch, seq, heads, head_dim)
        scores = nx.mul(nx.matmul(q, nx.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(head_dim))
        attn = nx.softmax(scores, axis=-1, where=key_mask)
        if attention_out is not None:
            attention_out.append(attn.data)
        attn = nx.dropout(attn, rate, training, rng)
        context = nx.reshape(nx.transpose(nx.matmul(attn, v), (0, 2, 1, 3)), (batch, seq, cfg.d_model))
        attended = _linear(context, p[pre + "wo"], p[pre + "bo"])
        x = nx.layer_norm(nx.add(x, attended), p[pre + "ln1.gamma"], p[pre + "ln1.beta"])

        hidden = nx.relu(_linear(x, p[pre + "ffn.w1"], p[pre + "ffn.b1"]))
        hidden = nx.dropout(hidden, rate, training, rng)
        ffn = _linear(hidden, p[pre + "ffn.w2"], p[pre + "ffn.b2"])
        x = nx.layer_norm(nx.add(x, ffn), p[pre + "ln2.gamma"], p[pre + "ln2.beta"])

    pooled = nx.masked_mean(x, valid)
    pos_logits = _linear(pooled, p["pos_head.w"], p["pos_head.b"])
    contlex_logits = _linear(pooled, p["contlex_head.w"], p["contlex_head.b"])
    return pos_logits, contlex_logits


def encode_batch(bpe: BpeModel, texts: Sequence[str], max_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Tokenize, truncate and right-pad a batch of assembled inputs.

    Sequences longer than ``max_len`` are cut after the last complete word
    form that fits; the lemma is always kept whole.

    Returns:
        Tuple of (token ids [B, T], pad mask [B, T] true at PAD)
    """
    rows = []
    truncated = 0
    for text in texts:
        ids = encode(bpe, text)
        if len(ids) > max_len:
            cut = max((i for i, t in enumerate(ids[: max_len + 1]) if t == SEP_ID), default=None)
            if cut is None:
                raise InputError(f"lemma of {text.split()[0]!r} alone exceeds max_len {max_len}")
            ids = ids[:cut]
            truncated += 1
        rows.append(ids)
    if truncated:
        logger.warning(f"Truncated {truncated} of {len(rows)} inputs to max_len {max_len}")
    width = max((len(r) for r in rows), default=0) or 1
    token_ids = np.full((len(rows), width), PAD_ID, dtype=np.int64)
    for i, r in enumerate(rows):
        token_ids[i, : len(r)] = r
    pad_mask = np.ones_like(token_ids, dtype=bool)
    for i, r in enumerate(rows):
        pad_mask[i, : len(r)] = False
    return token_ids, pad_mask


@dataclass
class EncodedDataset:
    """Token ids, padding mask and gold label ids for a set of entries."""
    token_ids: np.ndarray
    pad_mask: np.ndarray
    pos_ids: np.ndarray
    contlex_ids: np.ndarray

    def __len__(self):
        return int(self.token_ids.shape[0])

    def batch(self, index) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Rows ``index``, with trailing all-PAD columns dropped."""
        index = np.asarray(index, dtype=np.int64)
        pad = self.pad_mask[index]
        width = int((~pad).sum(axis=1).max()) if len(index) else 0
        width = max(width, 1)
        return self.token_ids[index, :width], pad[:, :width], self.pos_ids[index], self.contlex_ids[index]

    def subset(self, index) -> "EncodedDataset":
        index = np.asarray(index, dtype=np.int64)
        return EncodedDataset(self.token_ids[index], self.pad_mask[index],
                              self.pos_ids[index], self.contlex_ids[index])


def encode_entries(
    entries: Sequence[AugmentedEntry],
    bpe: BpeModel,
    space: LabelSpace,
    max_len: int,
    max_forms: int,
) -> EncodedDataset:
    """Assemble, tokenize and label-encode augmented entries."""
    texts = [assemble_input(e, max_forms) for e in entries]
    token_ids, pad_mask = encode_batch(bpe, texts, max_len)
    pos_ids, contlex_ids = encode_records(space, [e.record for e in entries])
    return EncodedDataset(token_ids, pad_mask, pos_ids, contlex_ids)


def save_checkpoint(
    model: TransformerClassifier,
    optimizer_state: Optional[AdamState],
    path,
    epoch: int = 0,
    extra: Optional[dict] = None,
) -> None:
    """Write the JSON header + little-endian float32 blob checkpoint."""
    tensors: list[tuple[str, np.ndarray]] = [(name, p.data) for name, p in model.params.items()]
    optimizer = None
    if optimizer_state is not None:
        optimizer = {"step": optimizer_state.step}
        for name in model.params:
            tensors.append((f"adam.m.{name}", optimizer_state.m[name]))
            tensors.append((f"adam.v.{name}", optimizer_state.v[name]))
    manifest = []
    blobs = []
    offset = 0
    for name, array in tensors:
        raw = np.ascontiguousarray(array, dtype="<f4").tobytes()
        manifest.append({"name": name, "shape": list(array.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "magic": CHECKPOINT_MAGIC,
        "config": model.config.model_dump(mode="json"),
        "epoch": epoch,
        "optimizer": optimizer,
        "extra": extra or {},
        "tensors": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_HEADER_LEN.pack(len(header_bytes)))
        f.write(header_bytes)
        for raw in blobs:
            f.write(raw)


def read_checkpoint_header(path) -> dict:
    return _read_checkpoint(path)[0]


def _read_checkpoint(path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER_LEN.size:
        raise DataFormatError(f"{path}: checkpoint too short")
    (header_len,) = _HEADER_LEN.unpack_from(raw)
    start = _HEADER_LEN.size
    if start + header_len > len(raw):
        raise DataFormatError(f"{path}: header length {header_len} exceeds file size")
    try:
        header = json.loads(raw[start:start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataFormatError(f"{path}: unreadable checkpoint header: {e}") from e
    if header.get("magic") != CHECKPOINT_MAGIC:
        raise DataFormatError(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")
    blob = raw[start + header_len:]
    expected = sum(t["nbytes"] for t in header["tensors"])
    if len(blob) != expected:
        raise DataFormatError(f"{path}: blob has {len(blob)} bytes, manifest expects {expected}")
    return header, blob


def load_checkpoint(
    path, expected_config: Optional[ModelConfig] = None
) -> tuple[TransformerClassifier, Optional[AdamState], dict]:
    """Restore a model (and optimizer moments when present) bit-for-bit.

    Raises:
        DataFormatError: corrupt file, or config differs from ``expected_config``
    """
    header, blob = _read_checkpoint(path)
    config = ModelConfig.model_validate(header["config"])
    if expected_config is not None and expected_config != config:
        raise DataFormatError(f"{path}: checkpoint config does not match the run config")
    arrays: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        if count * 4 != entry["nbytes"] or entry["offset"] + entry["nbytes"] > len(blob):
            raise DataFormatError(f"{path}: tensor {entry['name']} has an inconsistent byte range")
        array = np.frombuffer(blob, dtype="<f4", count=count, offset=entry["offset"])
        arrays[entry["name"]] = array.reshape(entry["shape"]).astype(np.float32)

    shapes = parameter_shapes(config)
    missing = [name for name in shapes if name not in arrays]
    if missing:
        raise DataFormatError(f"{path}: missing tensors {', '.join(missing[:3])}")
    params = {name: Tensor(arrays[name], requires_grad=True, dtype=np.float32) for name in shapes}
    model = TransformerClassifier(config, params)

    state = None
    if header.get("optimizer") is not None:
        state = AdamState(
            m={name: arrays[f"adam.m.{name}"] for name in shapes},
            v={name: arrays[f"adam.v.{name}"] for name in shapes},
            step=int(header["optimizer"]["step"]),
        )
    return model, state, header
