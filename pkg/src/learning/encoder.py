# src/learning/encoder.py
"""Point-set encoder: per-point MLP, coordinate-wise max-pool, linear embedding.

Two small heads sit on the embedding: a classifier producing a logit and a
regressor producing a traversability value squashed into [0, 1]. Gradients
are computed by hand from a forward tape.
"""
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.special import expit

from src.learning.objectives import SvddState
from src.utils.errors import ConfigError, UsageError
from src.utils.textio import ensure_parent, fmt, require_file

CHECKPOINT_MAGIC = "# travbench checkpoint v1"
INPUT_DIM = 3


@dataclass
class EncoderConfig:
    k: int = 16
    point_widths: Tuple[int, ...] = (32, 64)
    embedding_dim: int = 32
    head_widths: Tuple[int, ...] = (32, 16)
    final_layer_bias: bool = False

    def __post_init__(self):
        self.point_widths = tuple(int(w) for w in self.point_widths)
        self.head_widths = tuple(int(w) for w in self.head_widths)
        if self.k < 1:
            raise ConfigError(f"patch size k must be >= 1, got {self.k}")
        if self.embedding_dim < 2:
            raise ConfigError(f"embedding_dim must be >= 2, got {self.embedding_dim}")
        if not self.point_widths or any(w < 1 for w in self.point_widths + self.head_widths):
            raise ConfigError(f"layer widths must be positive, got {self.point_widths} / {self.head_widths}")


@dataclass
class ModelState:
    config: EncoderConfig
    params: Dict[str, np.ndarray]
    method: str = 'untrained'
    seed: int = 0
    svdd: Optional[SvddState] = None

    def parameter_names(self) -> List[str]:
        return list(self.params.keys())


@dataclass
class Tape:
    """Intermediate values of one forward pass, consumed by :func:`backward`."""
    patches: np.ndarray
    point_pre: List[np.ndarray] = field(default_factory=list)
    point_act: List[np.ndarray] = field(default_factory=list)
    argmax: Optional[np.ndarray] = None
    pooled: Optional[np.ndarray] = None
    embeddings: Optional[np.ndarray] = None
    heads: Dict[str, Tuple[List[np.ndarray], List[np.ndarray]]] = field(default_factory=dict)
    trav_pred: Optional[np.ndarray] = None


@dataclass
class ForwardOutput:
    embeddings: np.ndarray
    class_logit: np.ndarray
    trav_pred: np.ndarray
    tape: Optional[Tape] = None


# ---------------------------------------------------------------- layers

def dense_forward(x: np.ndarray, W: np.ndarray, b: Optional[np.ndarray] = None) -> np.ndarray:
    y = x @ W
    return y if b is None else y + b


def dense_backward(dy: np.ndarray, x: np.ndarray, W: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(dx, dW, db) for y = x @ W + b with leading batch axes flattened."""
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    return dy @ W.T, x2.T @ dy2, dy2.sum(axis=0)


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(config: EncoderConfig, seed: int) -> Dict[str, np.ndarray]:
    """Glorot-uniform weights and zero biases, in declaration order."""
    rng = np.random.default_rng(seed)
    params: Dict[str, np.ndarray] = {}
    widths = (INPUT_DIM,) + config.point_widths
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        params[f'point.{i}.W'] = glorot_uniform(rng, a, b)
        params[f'point.{i}.b'] = np.zeros(b)
    params['embed.W'] = glorot_uniform(rng, widths[-1], config.embedding_dim)
    if config.final_layer_bias:
        params['embed.b'] = np.zeros(config.embedding_dim)
    head = (config.embedding_dim,) + config.head_widths + (1,)
    for name in ('cls', 'reg'):
        for i, (a, b) in enumerate(zip(head[:-1], head[1:])):
            params[f'{name}.{i}.W'] = glorot_uniform(rng, a, b)
            params[f'{name}.{i}.b'] = np.zeros(b)
    return params


def init_state(config: EncoderConfig, seed: int, method: str = 'untrained') -> ModelState:
    return ModelState(config, init_params(config, seed), method, seed)


def _check_patches(patches: np.ndarray, config: EncoderConfig) -> np.ndarray:
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim == 2:
        patches = patches[None]
    if patches.ndim != 3 or patches.shape[2] != INPUT_DIM or patches.shape[1] != config.k:
        raise ConfigError(f"expected patches of shape (B, {config.k}, 3), got {patches.shape}")
    if not np.all(np.isfinite(patches)):
        raise ConfigError("patch contains non-finite coordinates")
    return patches


# ---------------------------------------------------------------- forward

def _head_forward(params, name: str, n_layers: int, x: np.ndarray, tape: Optional[Tape]) -> np.ndarray:
    pre, act = [], [x]
    h = x
    for i in range(n_layers):
        z = dense_forward(h, params[f'{name}.{i}.W'], params[f'{name}.{i}.b'])
        pre.append(z)
        h = relu(z) if i < n_layers - 1 else z
        act.append(h)
    if tape is not None:
        tape.heads[name] = (pre, act)
    return h[:, 0]


def forward(state: ModelState, patches: np.ndarray, record: bool = False) -> ForwardOutput:
    """Run the encoder and both heads over a batch of (B, k, 3) patches."""
    cfg = state.config
    params = state.params
    patches = _check_patches(patches, cfg)
    tape = Tape(patches) if record else None

    h = patches
    for i in range(len(cfg.point_widths)):
        z = dense_forward(h, params[f'point.{i}.W'], params[f'point.{i}.b'])
        h = relu(z)
        if tape is not None:
            tape.point_pre.append(z)
            tape.point_act.append(h)
    # np.argmax returns the first maximal index
    argmax = np.argmax(h, axis=1)
    pooled = np.take_along_axis(h, argmax[:, None, :], axis=1)[:, 0, :]
    embeddings = dense_forward(pooled, params['embed.W'], params.get('embed.b'))

    n_head = len(cfg.head_widths) + 1
    logits = _head_forward(params, 'cls', n_head, embeddings, tape)
    trav = expit(_head_forward(params, 'reg', n_head, embeddings, tape))
    if tape is not None:
        tape.argmax, tape.pooled, tape.embeddings, tape.trav_pred = argmax, pooled, embeddings, trav
    return ForwardOutput(embeddings, logits, trav, tape)


def encode(patch: np.ndarray, state: ModelState) -> np.ndarray:
    """Embedding of a single (k, 3) patch."""
    return forward(state, patch).embeddings[0]


def forward_heads(embedding: np.ndarray, state: ModelState) -> Dict[str, Union[float, np.ndarray]]:
    """Classifier logit and squashed regression value for one or many embeddings."""
    emb = np.asarray(embedding, dtype=np.float64)
    single = emb.ndim == 1
    emb = emb.reshape(-1, state.config.embedding_dim)
    n_head = len(state.config.head_widths) + 1
    logits = _head_forward(state.params, 'cls', n_head, emb, None)
    trav = expit(_head_forward(state.params, 'reg', n_head, emb, None))
    if single:
        return {'class_logit': float(logits[0]), 'trav_pred': float(trav[0])}
    return {'class_logit': logits, 'trav_pred': trav}


# ---------------------------------------------------------------- backward

def _head_backward(params, name: str, tape: Tape, d_out: np.ndarray, grads: Dict[str, np.ndarray]) -> np.ndarray:
    pre, act = tape.heads[name]
    dh = d_out[:, None]
    for i in range(len(pre) - 1, -1, -1):
        if i < len(pre) - 1:
            dh = dh * (pre[i] > 0)
        dx, dW, db = dense_backward(dh, act[i], params[f'{name}.{i}.W'])
        grads[f'{name}.{i}.W'] = dW
        grads[f'{name}.{i}.b'] = db
        dh = dx
    return dh


def backward(state: ModelState, tape: Optional[Tape], d_embeddings: Optional[np.ndarray] = None,
             d_logits: Optional[np.ndarray] = None, d_trav: Optional[np.ndarray] = None) -> Dict[str, np.ndarray]:
    """Parameter gradients given upstream gradients at the three outputs.

    ``d_trav`` is taken with respect to the squashed regression value. Missing
    upstream gradients count as zero. ReLU'(0) = 0 and max-pool routes to the
    first maximal point.
    """
    if tape is None or tape.embeddings is None:
        raise UsageError("backward needs the tape of a forward pass run with record=True")
    params = state.params
    n = len(tape.patches)
    zeros = np.zeros(n)
    d_logits = zeros if d_logits is None else np.asarray(d_logits, dtype=np.float64)
    d_trav = zeros if d_trav is None else np.asarray(d_trav, dtype=np.float64)

    grads: Dict[str, np.ndarray] = {}
    d_emb = np.zeros_like(tape.embeddings) if d_embeddings is None else np.array(d_embeddings, dtype=np.float64)
    d_emb = d_emb + _head_backward(params, 'cls', tape, d_logits, grads)
    d_emb = d_emb + _head_backward(params, 'reg', tape, d_trav * tape.trav_pred * (1.0 - tape.trav_pred), grads)

    d_pooled, grads['embed.W'], d_eb = dense_backward(d_emb, tape.pooled, params['embed.W'])
    if 'embed.b' in params:
        grads['embed.b'] = d_eb

    last = tape.point_act[-1]
    dh = np.zeros_like(last)
    np.put_along_axis(dh, tape.argmax[:, None, :], d_pooled[:, None, :], axis=1)
    for i in range(len(tape.point_pre) - 1, -1, -1):
        dz = dh * (tape.point_pre[i] > 0)
        x = tape.patches if i == 0 else tape.point_act[i - 1]
        dh, grads[f'point.{i}.W'], grads[f'point.{i}.b'] = dense_backward(dz, x, params[f'point.{i}.W'])
    return {name: grads[name] for name in params}


# ---------------------------------------------------------------- flat views

def flatten_params(params: Dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([p.ravel() for p in params.values()])


def unflatten_params(flat: np.ndarray, like: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    out, offset = {}, 0
    for name, p in like.items():
        out[name] = np.asarray(flat[offset:offset + p.size], dtype=np.float64).reshape(p.shape)
        offset += p.size
    if offset != len(flat):
        raise ConfigError(f"flat parameter vector has {len(flat)} entries, expected {offset}")
    return out


# ---------------------------------------------------------------- checkpoints

def write_checkpoint(path: Union[str, Path], state: ModelState) -> None:
    """Header with config, method and seed; then one ``name shape values...`` line per parameter."""
    path = ensure_parent(path)
    svdd = None
    if state.svdd is not None:
        svdd = {'center': [fmt(v) for v in state.svdd.center], 'radius': fmt(state.svdd.radius),
                'nu': fmt(state.svdd.nu), 'learnable_center': state.svdd.learnable_center}
    header = {'config': asdict(state.config), 'method': state.method, 'seed': state.seed, 'svdd': svdd}
    with open(path, 'w', newline='\n') as f:
        f.write(CHECKPOINT_MAGIC + "\n")
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for name, p in state.params.items():
            shape = 'x'.join(str(d) for d in p.shape)
            f.write(f"{name} {shape} {' '.join(fmt(v) for v in p.ravel())}\n")


def read_checkpoint(path: Union[str, Path]) -> ModelState:
    path = require_file(path)
    with open(path, 'r') as f:
        magic = f.readline().strip()
        if magic != CHECKPOINT_MAGIC:
            raise ConfigError(f"{path} is not a checkpoint (header {magic!r})")
        header = json.loads(f.readline())
        config = EncoderConfig(**header['config'])
        params = {}
        for line in f:
            parts = line.split()
            if not parts:
                continue
            shape = tuple(int(d) for d in parts[1].split('x'))
            params[parts[0]] = np.array([float(v) for v in parts[2:]], dtype=np.float64).reshape(shape)
    expected = init_params(config, 0)
    if list(params) != list(expected) or any(params[n].shape != expected[n].shape for n in expected):
        raise ConfigError(f"{path}: parameters do not match the encoder config")
    svdd = None
    if header.get('svdd'):
        s = header['svdd']
        svdd = SvddState(np.array([float(v) for v in s['center']]), float(s['radius']), float(s['nu']),
                         bool(s['learnable_center']))
    return ModelState(config, params, header['method'], int(header['seed']), svdd)
