"""Deterministic training of the encoder and walk projections.

The optimizer is decoupled-weight-decay Adam with a linear warmup and an
exponential half-life decay of the learning rate, and global gradient-norm
clipping. Feature inputs are fixed; only the slot and projection
parameters receive updates.

All per-step randomness (batch choice, slot-noise draws) is derived from
(seed, step) counters, so a run is bit-reproducible and resuming from a
checkpoint continues the exact same stream.
"""

from __future__ import annotations

import dataclasses
import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .data import Scene
from .errors import CompatibilityError, ConfigError, DataFormatError, TrainingDivergenceError
from .slots import SlotParams, encode
from .walks import WalkConfig, WalkProjection, total_loss

CHECKPOINT_MAGIC = b"OCWC"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Everything a run needs; maps 1:1 onto the `key = value` config file."""

    num_slots: int
    input_dim: int
    slot_dim: int = 256
    attn_dim: int = 0  # 0 means "same as slot_dim", resolved below
    iterations: int = 3
    walk_dim: int = 128
    tau: float = 0.1
    gamma: float = 0.7
    alpha: float = 1.0
    beta: float = 1.0
    base_lr: float = 0.0004
    warmup_steps: int = 200
    total_steps: int = 2000
    decay_half_life_steps: int = 100_000
    clip_norm: float = 1.0
    batch_size: int = 16
    weight_decay: float = 0.01
    seed: int = 0
    checkpoint_interval: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.attn_dim == 0:
            object.__setattr__(self, "attn_dim", self.slot_dim)
        if self.warmup_steps > self.total_steps:
            raise ConfigError(
                f"TrainConfig: warmup_steps {self.warmup_steps} exceeds"
                f" total_steps {self.total_steps}"
            )
        if self.warmup_steps < 0 or self.total_steps < 1:
            raise ConfigError("TrainConfig: step counts must be non-negative / positive")
        if self.clip_norm <= 0.0:
            raise ConfigError(f"TrainConfig: clip_norm must be positive, got {self.clip_norm}")
        if self.batch_size < 1:
            raise ConfigError(f"TrainConfig: batch_size must be >= 1, got {self.batch_size}")
        if self.base_lr < 0.0 or self.weight_decay < 0.0:
            raise ConfigError("TrainConfig: base_lr and weight_decay must be >= 0")
        if self.decay_half_life_steps < 1:
            raise ConfigError("TrainConfig: decay_half_life_steps must be >= 1")
        if self.workers < 1:
            raise ConfigError(f"TrainConfig: workers must be >= 1, got {self.workers}")
        if self.checkpoint_interval < 0:
            raise ConfigError("TrainConfig: checkpoint_interval must be >= 0")
        self.walk()  # validates tau / gamma / alpha / beta / walk_dim

    def walk(self) -> WalkConfig:
        return WalkConfig(
            tau=self.tau, gamma=self.gamma, alpha=self.alpha, beta=self.beta, dim=self.walk_dim
        )


_INT_KEYS = {
    "num_slots", "input_dim", "slot_dim", "attn_dim", "iterations", "walk_dim",
    "warmup_steps", "total_steps", "decay_half_life_steps", "batch_size", "seed",
    "checkpoint_interval", "workers",
}
_FLOAT_KEYS = {
    "tau", "gamma", "alpha", "beta", "base_lr", "clip_norm", "weight_decay",
}


def format_config(cfg: TrainConfig) -> str:
    """Canonical `key = value` text: sorted keys, round-trippable values."""
    lines = []
    for f in sorted(dataclasses.fields(cfg), key=lambda f: f.name):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {v!r}" if isinstance(v, float) else f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def parse_config_text(text: str, source: str = "config") -> TrainConfig:
    """Parse `key = value` lines; `#` starts a comment, unknown keys are errors."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataFormatError(f"{source} line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = (part.strip() for part in line.partition("="))
        if key in _INT_KEYS:
            try:
                values[key] = int(val)
            except ValueError:
                raise DataFormatError(f"{source} line {lineno}: {key} expects an integer, got {val!r}") from None
        elif key in _FLOAT_KEYS:
            try:
                values[key] = float(val)
            except ValueError:
                raise DataFormatError(f"{source} line {lineno}: {key} expects a number, got {val!r}") from None
        else:
            raise DataFormatError(f"{source} line {lineno}: unknown key {key!r}")
    for required in ("num_slots", "input_dim"):
        if required not in values:
            raise DataFormatError(f"{source}: missing required key {required!r}")
    return TrainConfig(**values)  # type: ignore[arg-type]


def config_hash(cfg: TrainConfig) -> bytes:
    return hashlib.sha256(format_config(cfg).encode()).digest()


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to base_lr, then exponential half-life decay."""
    if step < 0:
        raise ConfigError(f"lr_at: step must be >= 0, got {step}")
    if step < cfg.warmup_steps:
        return cfg.base_lr * step / cfg.warmup_steps
    return cfg.base_lr * 0.5 ** ((step - cfg.warmup_steps) / cfg.decay_half_life_steps)


def clip_grad_norm(
    grads: dict[str, np.ndarray], clip_norm: float, step: int | None = None
) -> tuple[dict[str, np.ndarray], float]:
    """Scale all gradients so their global l2 norm is at most clip_norm."""
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    norm = float(np.sqrt(total))
    if not np.isfinite(norm):
        where = f" at step {step}" if step is not None else ""
        raise TrainingDivergenceError(f"non-finite gradient norm{where}")
    if norm > clip_norm:
        factor = clip_norm / norm
        grads = {k: g * factor for k, g in grads.items()}
    return grads, norm


@dataclass
class OptimState:
    """Adam moment accumulators; shapes mirror the parameters."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "OptimState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptimState,
    lr: float,
    weight_decay: float,
) -> None:
    """Bias-corrected Adam update with decay applied directly to the weights."""
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p -= lr * (update + weight_decay * p)


def _named_parameters(params: SlotParams, proj: WalkProjection) -> dict[str, np.ndarray]:
    out = {f"slots.{k}": v for k, v in params.named().items()}
    out.update({f"proj.{k}": v for k, v in proj.named().items()})
    return out


@dataclass
class TrainResult:
    params: SlotParams
    proj: WalkProjection
    opt: OptimState
    config: TrainConfig
    steps_run: int
    losses: list[float] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    clipped_norms: list[float] = field(default_factory=list)


def _batch_loss(
    scenes: Sequence[Scene],
    indices: np.ndarray,
    lifted_params: SlotParams,
    lifted_proj: WalkProjection,
    cfg: TrainConfig,
    step: int,
) -> ad.Node:
    walk = cfg.walk()
    total: ad.Node | None = None
    for pos, idx in enumerate(indices):
        x = ad.constant(scenes[int(idx)].features)
        slots_hat, _ = encode(
            x, lifted_params, cfg.iterations, mode="train", seed=(cfg.seed, step, pos)
        )
        loss = total_loss(x, slots_hat, lifted_proj, walk)
        total = loss if total is None else ad.add(total, loss)
    return ad.scale(total, 1.0 / len(indices))


def train(
    scenes: Sequence[Scene],
    cfg: TrainConfig,
    out_dir=None,
    resume=None,
) -> TrainResult:
    """Run the optimization loop over the dataset.

    When out_dir is given, appends `step<TAB>loss<TAB>lr` lines to
    out_dir/trace.txt, writes out_dir/checkpoint.ocwc at the end, and
    numbered checkpoints every checkpoint_interval steps. `resume` may
    name a checkpoint whose config hash must match cfg.
    """
    if not scenes:
        raise ConfigError("train: dataset is empty")
    for i, scene in enumerate(scenes):
        if scene.features.shape[0] < cfg.num_slots:
            raise ConfigError(
                f"train: scene {i} has {scene.features.shape[0]} cells,"
                f" fewer than num_slots={cfg.num_slots}"
            )
        if scene.features.shape[1] != cfg.input_dim:
            raise ConfigError(
                f"train: scene {i} has feature width {scene.features.shape[1]},"
                f" config says input_dim={cfg.input_dim}"
            )

    if resume is not None:
        ckpt = load_checkpoint(resume)
        if config_hash(ckpt.config) != config_hash(cfg):
            raise CompatibilityError(
                "train: resume checkpoint was produced with a different configuration"
            )
        params, proj, opt, start_step = ckpt.params, ckpt.proj, ckpt.opt, ckpt.step
    else:
        params = SlotParams.create(
            cfg.num_slots, cfg.input_dim, cfg.slot_dim, cfg.attn_dim, seed=cfg.seed
        )
        proj = WalkProjection.create(cfg.input_dim, cfg.slot_dim, cfg.walk_dim, seed=cfg.seed + 1)
        opt = OptimState.for_params(_named_parameters(params, proj))
        start_step = 0

    out_path = Path(out_dir) if out_dir is not None else None
    trace = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        trace = open(out_path / "trace.txt", "a")

    result = TrainResult(params=params, proj=proj, opt=opt, config=cfg, steps_run=start_step)
    try:
        for step in range(start_step, cfg.total_steps):
            rng = np.random.default_rng((cfg.seed, step))
            replace = cfg.batch_size > len(scenes)
            indices = rng.choice(len(scenes), size=cfg.batch_size, replace=replace)

            lifted_params = params.lift()
            lifted_proj = proj.lift()
            loss = _batch_loss(scenes, indices, lifted_params, lifted_proj, cfg, step)
            loss_value = float(loss.value[0, 0])
            if not np.isfinite(loss_value):
                raise TrainingDivergenceError(
                    f"non-finite loss at step {step}, batch scenes {indices.tolist()}"
                )
            ad.backward(loss)

            grads = {
                name: node.grad
                for name, node in _named_parameters(lifted_params, lifted_proj).items()
            }
            grads, norm = clip_grad_norm(grads, cfg.clip_norm, step)
            _, post_norm = clip_grad_norm(grads, np.inf)
            lr = lr_at(step, cfg)
            adamw_step(_named_parameters(params, proj), grads, opt, lr, cfg.weight_decay)

            result.losses.append(loss_value)
            result.lrs.append(lr)
            result.grad_norms.append(norm)
            result.clipped_norms.append(post_norm)
            result.steps_run = step + 1
            if trace is not None:
                trace.write(f"{step}\t{loss_value!r}\t{lr!r}\n")
                trace.flush()
            if (
                out_path is not None
                and cfg.checkpoint_interval > 0
                and (step + 1) % cfg.checkpoint_interval == 0
                and step + 1 < cfg.total_steps
            ):
                save_checkpoint(
                    out_path / f"checkpoint_{step + 1:06d}.ocwc", params, proj, opt, step + 1, cfg
                )
    finally:
        if trace is not None:
            trace.close()
    if out_path is not None:
        save_checkpoint(out_path / "checkpoint.ocwc", params, proj, opt, result.steps_run, cfg)
    return result


@dataclass
class Checkpoint:
    params: SlotParams
    proj: WalkProjection
    opt: OptimState
    step: int
    config: TrainConfig


def _pack_blob(name: str, arr: np.ndarray) -> bytes:
    nb = name.encode()
    return (
        struct.pack("<I", len(nb))
        + nb
        + struct.pack("<II", arr.shape[0], arr.shape[1])
        + arr.astype("<f8").tobytes()
    )


class _Reader:
    def __init__(self, raw: bytes, source: str):
        self.raw = raw
        self.pos = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise DataFormatError(f"{self.source}: truncated at byte {self.pos}")
        out = self.raw[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def blob(self) -> tuple[str, np.ndarray]:
        (nlen,) = self.unpack("<I")
        name = self.take(nlen).decode()
        rows, cols = self.unpack("<II")
        data = np.frombuffer(self.take(8 * rows * cols), dtype="<f8")
        return name, data.reshape(rows, cols).copy()


def save_checkpoint(path, params: SlotParams, proj: WalkProjection, opt: OptimState, step: int, cfg: TrainConfig) -> None:
    """Binary checkpoint: magic, version, config hash + text, parameters, optimizer, step."""
    named = _named_parameters(params, proj)
    cfg_text = format_config(cfg).encode()
    out = [
        CHECKPOINT_MAGIC,
        struct.pack("<I", CHECKPOINT_VERSION),
        config_hash(cfg),
        struct.pack("<Q", step),
        struct.pack("<I", len(cfg_text)),
        cfg_text,
        struct.pack("<I", len(named)),
    ]
    for name, arr in named.items():
        out.append(_pack_blob(name, arr))
    out.append(struct.pack("<Qddd", opt.step, opt.beta1, opt.beta2, opt.eps))
    for prefix, table in (("m", opt.m), ("v", opt.v)):
        for name in named:
            out.append(_pack_blob(f"{prefix}.{name}", table[name]))
    Path(path).write_bytes(b"".join(out))


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    r = _Reader(raw, str(path))
    if r.take(4) != CHECKPOINT_MAGIC:
        raise DataFormatError(f"{path}: bad magic")
    (version,) = r.unpack("<I")
    if version != CHECKPOINT_VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    stored_hash = r.take(32)
    (step,) = r.unpack("<Q")
    (cfg_len,) = r.unpack("<I")
    cfg_text = r.take(cfg_len).decode()
    cfg = parse_config_text(cfg_text, source=f"{path} embedded config")
    if hashlib.sha256(cfg_text.encode()).digest() != stored_hash:
        raise CompatibilityError(f"{path}: config hash does not match embedded config")
    (n_params,) = r.unpack("<I")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_params):
        name, arr = r.blob()
        arrays[name] = arr
    opt_step, beta1, beta2, eps = r.unpack("<Qddd")
    m: dict[str, np.ndarray] = {}
    v: dict[str, np.ndarray] = {}
    for table, prefix in ((m, "m"), (v, "v")):
        for _ in range(n_params):
            name, arr = r.blob()
            if not name.startswith(prefix + "."):
                raise DataFormatError(f"{path}: optimizer blob {name!r} out of order")
            table[name[len(prefix) + 1 :]] = arr
    if r.pos != len(raw):
        raise DataFormatError(f"{path}: {len(raw) - r.pos} trailing bytes")

    slot_fields = {k[len("slots.") :]: v for k, v in arrays.items() if k.startswith("slots.")}
    proj_fields = {k[len("proj.") :]: v for k, v in arrays.items() if k.startswith("proj.")}
    try:
        params = SlotParams(**slot_fields)
        proj = WalkProjection(**proj_fields)
    except TypeError as exc:
        raise DataFormatError(f"{path}: parameter blobs do not form a model: {exc}") from None
    opt = OptimState(m=m, v=v, step=opt_step, beta1=beta1, beta2=beta2, eps=eps)
    return Checkpoint(params=params, proj=proj, opt=opt, step=step, config=cfg)
