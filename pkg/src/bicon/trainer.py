"""Training loop: Adam, global-norm clipping, checkpoints, deterministic logs."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diffcore as dc
from . import metrics
from .config import Config
from .corpus import Example
from .encoder import Vocab
from .errors import ConfigError
from .model import BiconModel
from .tagger import RelSchema, TagTable, build_gold_table

CKPT_VERSION = "bicon-ckpt-1"


class Adam(object):
    """Adam with bias correction; moments kept per parameter name."""

    def __init__(self, params: dict[str, dc.Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data, dtype=np.float64) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data, dtype=np.float64) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad.astype(np.float64, copy=False)
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
            p.data = (p.data.astype(np.float64) - update).astype(p.data.dtype)


def clip_global_norm(params: dict[str, dc.Tensor], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        factor = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * factor
    return norm


# ---------------------------------------------------------------------------
# Checkpoints. One .npz holds parameters, config, vocab, schema, optimizer
# moments and the RNG state, so a run can resume bit-for-bit.

def save_checkpoint(path: str | Path, model: BiconModel, epoch: int,
                    optimizer: Adam | None = None,
                    rng: np.random.Generator | None = None) -> None:
    arrays: dict[str, np.ndarray] = {}
    meta = {
        "version": CKPT_VERSION,
        "epoch": int(epoch),
        "config": model.cfg.to_dict(),
        "vocab": model.vocab.tokens,
        "relations": list(model.schema.names),
    }
    if rng is not None:
        meta["rng_state"] = rng.bit_generator.state
    arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
    for name, data in model.state_arrays().items():
        arrays["param:" + name] = data
    if optimizer is not None:
        arrays["adam:t"] = np.array(optimizer.t, dtype=np.int64)
        for name in model.params:
            arrays["adam.m:" + name] = optimizer.m[name]
            arrays["adam.v:" + name] = optimizer.v[name]
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)


@dataclass
class Checkpoint:
    config: Config
    vocab: Vocab
    schema: RelSchema
    epoch: int
    params: dict[str, np.ndarray]
    adam_t: int | None = None
    adam_m: dict[str, np.ndarray] | None = None
    adam_v: dict[str, np.ndarray] | None = None
    rng_state: dict | None = None


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"checkpoint {str(path)!r} does not exist")
    with np.load(path, allow_pickle=False) as z:
        if "meta" not in z:
            raise ConfigError(f"checkpoint {str(path)!r} has no meta record")
        meta = json.loads(str(z["meta"]))
        if meta.get("version") != CKPT_VERSION:
            raise ConfigError(f"checkpoint version {meta.get('version')!r} is not {CKPT_VERSION!r}")
        params = {k[len("param:"):]: z[k] for k in z.files if k.startswith("param:")}
        adam_t = int(z["adam:t"]) if "adam:t" in z.files else None
        adam_m = {k[len("adam.m:"):]: z[k] for k in z.files if k.startswith("adam.m:")} or None
        adam_v = {k[len("adam.v:"):]: z[k] for k in z.files if k.startswith("adam.v:")} or None
    return Checkpoint(config=Config.from_dict(meta["config"]),
                      vocab=Vocab(meta["vocab"]),
                      schema=RelSchema(tuple(meta["relations"])),
                      epoch=int(meta["epoch"]), params=params,
                      adam_t=adam_t, adam_m=adam_m, adam_v=adam_v,
                      rng_state=meta.get("rng_state"))


def restore_model(ckpt: Checkpoint) -> BiconModel:
    """Rebuild the model a checkpoint describes and load its parameters."""
    model = BiconModel(ckpt.config, ckpt.vocab, ckpt.schema, np.random.default_rng(0))
    model.load_arrays(ckpt.params)
    return model


def restore_optimizer(ckpt: Checkpoint, model: BiconModel) -> Adam:
    opt = Adam(model.params, lr=ckpt.config.lr)
    if ckpt.adam_t is not None:
        opt.t = ckpt.adam_t
        for name in model.params:
            opt.m[name] = ckpt.adam_m[name].copy()
            opt.v[name] = ckpt.adam_v[name].copy()
    return opt


def restore_rng(ckpt: Checkpoint) -> np.random.Generator:
    rng = np.random.default_rng(0)
    if ckpt.rng_state is not None:
        rng.bit_generator.state = ckpt.rng_state
    return rng


# ---------------------------------------------------------------------------
# Evaluation and the loop itself.

def evaluate(model: BiconModel, examples: list[Example],
             mode: str = "partial") -> tuple[list, metrics.EvalReport]:
    predictions = [model.predict(ex.seq) for ex in examples]
    return predictions, metrics.score_corpus(examples, predictions, mode)


def gold_tables(examples: list[Example], schema: RelSchema) -> list[TagTable]:
    return [build_gold_table(ex.triples, ex.n, schema, sid=ex.sid) for ex in examples]


@dataclass
class TrainResult:
    epochs_run: int
    best_epoch: int
    best_dev_f1: float
    final_train_f1: float
    final_dev_f1: float
    history: list[dict] = field(default_factory=list)
    log_path: Path | None = None
    best_path: Path | None = None
    last_path: Path | None = None


def _batches(order: np.ndarray, size: int):
    for i in range(0, len(order), size):
        yield order[i:i + size]


def train(model: BiconModel, train_data: list[Example], dev_data: list[Example],
          out_dir: str | Path, rng: np.random.Generator | None = None,
          optimizer: Adam | None = None, start_epoch: int = 0,
          log_name: str = "metrics.jsonl", quiet: bool = False) -> TrainResult:
    """Run the configured number of epochs; write logs and checkpoints.

    The metrics log is one JSON object per epoch with sorted keys and no
    timestamps, so identical runs produce byte-identical logs. Passing the
    optimizer, rng and start_epoch from a loaded checkpoint resumes the
    run exactly.
    """
    cfg = model.cfg
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if optimizer is None:
        optimizer = Adam(model.params, lr=cfg.lr)
    golds = gold_tables(train_data, model.schema)

    log_path = out_dir / log_name
    best_path = out_dir / "best.npz"
    last_path = out_dir / "last.npz"
    mode = "w" if start_epoch == 0 else "a"
    history: list[dict] = []
    best_dev, best_epoch = -1.0, -1
    result = TrainResult(epochs_run=0, best_epoch=-1, best_dev_f1=0.0,
                         final_train_f1=0.0, final_dev_f1=0.0, history=history,
                         log_path=log_path, best_path=best_path, last_path=last_path)

    with open(log_path, mode, encoding="utf-8") as log:
        for epoch in range(start_epoch + 1, cfg.epochs + 1):
            order = rng.permutation(len(train_data))
            losses = []
            for batch in _batches(order, cfg.batch_size):
                model.zero_grad()
                for idx in batch:
                    ex = train_data[int(idx)]
                    loss = model.loss_on(ex.seq, golds[int(idx)], train=True, rng=rng)
                    losses.append(float(loss.data))
                    dc.backward(dc.scale(loss, 1.0 / len(batch)))
                clip_global_norm(model.params, cfg.clip_norm)
                optimizer.step()
            _, train_rep = evaluate(model, train_data, mode="partial")
            _, dev_rep = evaluate(model, dev_data, mode="partial")
            row = {"epoch": epoch, "loss": round(float(np.mean(losses)), 6),
                   "train_f1": round(train_rep.f1, 6), "dev_f1": round(dev_rep.f1, 6)}
            history.append(row)
            log.write(json.dumps(row, sort_keys=True) + "\n")
            log.flush()
            if not quiet:
                print(f"epoch {epoch:3d}  loss {row['loss']:.6f}  "
                      f"train_f1 {row['train_f1']:.4f}  dev_f1 {row['dev_f1']:.4f}")
            result.epochs_run = epoch
            result.final_train_f1 = row["train_f1"]
            result.final_dev_f1 = row["dev_f1"]
            if dev_rep.f1 > best_dev:
                best_dev, best_epoch = dev_rep.f1, epoch
                save_checkpoint(best_path, model, epoch, optimizer=optimizer, rng=rng)
            if (cfg.early_stop_train_f1 is not None and cfg.early_stop_dev_f1 is not None
                    and row["train_f1"] >= cfg.early_stop_train_f1
                    and row["dev_f1"] >= cfg.early_stop_dev_f1):
                break
    result.best_epoch = best_epoch
    result.best_dev_f1 = max(best_dev, 0.0)
    save_checkpoint(last_path, model, result.epochs_run, optimizer=optimizer, rng=rng)
    return result


@dataclass
class TimingRow:
    stack: tuple[str, ...]
    seconds_per_epoch: float
    n_params: int


def time_stacks(cfg: Config, vocab: Vocab, schema: RelSchema,
                examples: list[Example], stacks: list[tuple[str, ...]],
                epochs: int = 1) -> list[TimingRow]:
    """Wall-clock seconds per training epoch for each local-stack variant."""
    rows = []
    for stack in stacks:
        variant = Config.from_dict({**cfg.to_dict(), "stack": list(stack)})
        rng = np.random.default_rng(cfg.seed)
        model = BiconModel(variant, vocab, schema, rng)
        optimizer = Adam(model.params, lr=variant.lr)
        golds = gold_tables(examples, schema)
        t0 = time.perf_counter()
        for _ in range(epochs):
            order = rng.permutation(len(examples))
            for batch in _batches(order, variant.batch_size):
                model.zero_grad()
                for idx in batch:
                    ex = examples[int(idx)]
                    loss = model.loss_on(ex.seq, golds[int(idx)], train=True, rng=rng)
                    dc.backward(dc.scale(loss, 1.0 / len(batch)))
                clip_global_norm(model.params, variant.clip_norm)
                optimizer.step()
        dt = (time.perf_counter() - t0) / epochs
        rows.append(TimingRow(stack=tuple(stack), seconds_per_epoch=dt,
                              n_params=model.n_params))
    return rows
