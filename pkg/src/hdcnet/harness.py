"""Training and evaluation harness.

Everything here is deterministic given a seed: model init, batch order,
and synthetic data all derive from independent streams of one seed, so
two runs with the same config produce identical logs and checkpoints.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import functional as F
from .data import checkpoint as ckpt_io
from .data import dataset as ds
from .losses import loss_mse, loss_normal, total_loss
from .metrics import CSV_HEADER, MetricsAccumulator, MetricsReport, evaluation_mask
from .model import HDCNet, ModelConfig
from .optim import AdamW
from .tensor import Tensor, backward, no_grad

log = logging.getLogger("hdcnet")

PRESETS = {
    # small enough to train on a laptop CPU in minutes
    "desk": dict(channels=8, height=48, width=64, heads="2,2,2,2", mha_heads=2),
    # the full-size configuration; runs through the pad-to-256 path
    "paper": dict(channels=24, height=240, width=320, heads="2,4,8,16", mha_heads=4),
}


@dataclass
class TrainConfig:
    channels: int = 8
    height: int = 48
    width: int = 64
    heads: str = "2,2,2,2"  # window-attention heads per stage
    mha_heads: int = 2
    epochs: int = 40
    steps: int = 0  # hard cap on optimizer steps; 0 = no cap
    batch_size: int = 8
    lr: float = 1e-3
    weight_decay: float = 0.01
    lam: float = 0.1  # weight of the surface-normal loss term
    seed: int = 0
    use_smfm: bool = True
    use_btmfm: bool = True
    upsample_mode: str = "nearest"
    synthetic: int = 0  # generate this many train samples instead of reading disk
    data_root: str = ""
    out_dir: str = "runs/default"

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            base_channels=self.channels,
            heads=tuple(int(h) for h in self.heads.split(",")),
            mha_heads=self.mha_heads,
            upsample_mode=self.upsample_mode,
            use_smfm=self.use_smfm,
            use_btmfm=self.use_btmfm,
        )

    def to_kv(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = str(int(v)) if isinstance(v, bool) else str(v)
        return out


_BOOL = {"true": True, "1": True, "false": False, "0": False}


def config_from_kv(kv: dict, base: TrainConfig | None = None) -> TrainConfig:
    """Apply string key=value pairs on top of base; unknown keys are an
    error so typos don't pass silently."""
    cfg = base if base is not None else TrainConfig()
    by_name = {f.name: f for f in fields(TrainConfig)}
    updates = {}
    for k, v in kv.items():
        f = by_name.get(k)
        if f is None:
            raise ValueError(f"unknown config key {k!r}")
        if f.type == "bool" or isinstance(getattr(cfg, k), bool):
            if v.lower() not in _BOOL:
                raise ValueError(f"config key {k!r}: boolean wanted, got {v!r}")
            updates[k] = _BOOL[v.lower()]
        elif isinstance(getattr(cfg, k), int):
            updates[k] = int(v)
        elif isinstance(getattr(cfg, k), float):
            updates[k] = float(v)
        else:
            updates[k] = v
    return replace(cfg, **updates)


def read_config_file(path) -> dict:
    """key=value lines, '#' comments, blank lines ignored."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {body!r}")
        k, v = body.split("=", 1)
        out[k.strip()] = v.strip()
    return out


# ---------------------------------------------------------------- batching


def batch_arrays(samples):
    """Stack samples into model-ready arrays: rgb [N,3,H,W], raw depth
    [N,1,H,W], gt [N,1,H,W], loss mask [N,1,H,W] (valid gt), and the
    evaluation mask [N,1,H,W]."""
    rgb = np.stack([s.rgb.transpose(2, 0, 1) for s in samples]).astype(np.float32)
    raw = np.stack([s.raw[None] for s in samples]).astype(np.float32)
    gt = np.stack([s.gt[None] for s in samples]).astype(np.float32)
    valid = np.stack([s.valid[None] for s in samples])
    ev = np.stack([evaluation_mask(s.valid, s.transparent)[None] for s in samples])
    return rgb, raw, gt, valid, ev


def check_resolution(cfg_h: int, cfg_w: int, samples, what: str) -> None:
    for s in samples:
        h, w = s.gt.shape
        if (h, w) != (cfg_h, cfg_w):
            raise ValueError(
                f"{what}: sample {s.sample_id!r} is {w}x{h}, model expects {cfg_w}x{cfg_h}"
            )


# ---------------------------------------------------------------- training


@dataclass
class TrainResult:
    log_rows: list = field(default_factory=list)  # (epoch, mse, normal, total, seconds)
    final_path: Path | None = None
    best_path: Path | None = None
    diverged: bool = False
    steps_done: int = 0


# local paths would make otherwise-identical runs produce different
# checkpoint bytes, so they stay out of the saved config
_VOLATILE_KEYS = ("out_dir", "data_root")


def save_model(path, model: HDCNet, cfg: TrainConfig) -> None:
    meta = {k: v for k, v in cfg.to_kv().items() if k not in _VOLATILE_KEYS}
    meta["format"] = "hdcnet-train"
    ckpt_io.save_checkpoint(path, model.state_dict(), meta)


def load_model(path):
    """Rebuild a model from a checkpoint.  Returns (model, TrainConfig)."""
    tensors, meta = ckpt_io.load_checkpoint(path)
    kv = {k: v for k, v in meta.items() if k != "format"}
    cfg = config_from_kv(kv)
    model = HDCNet.from_seed(cfg.model_config(), 0)
    model.load_state_dict(tensors)
    return model, cfg


def get_train_samples(cfg: TrainConfig):
    if cfg.synthetic > 0:
        return ds.synthetic_split(cfg.synthetic, base_seed=1000 * cfg.seed + 1, height=cfg.height, width=cfg.width)
    if not cfg.data_root:
        raise ValueError("need either synthetic>0 or a data_root")
    _, samples = ds.load_split(cfg.data_root, "train")
    return samples


def train(cfg: TrainConfig, samples=None, val_samples=None) -> TrainResult:
    """Run the training loop; writes final.ckpt, best.ckpt, and
    train_log.csv under cfg.out_dir.

    Best-checkpoint selection uses mean validation loss when a val set
    is given, else the epoch's mean training loss.  A non-finite loss
    aborts immediately; final.ckpt then holds the last epoch that
    completed cleanly.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if samples is None:
        samples = get_train_samples(cfg)
    if not samples:
        raise ValueError("empty training set")
    check_resolution(cfg.height, cfg.width, samples, "train")
    if val_samples:
        check_resolution(cfg.height, cfg.width, val_samples, "val")

    model = HDCNet.from_seed(cfg.model_config(), cfg.seed)
    params = list(model.parameters())
    opt = AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    shuffle_rng = np.random.default_rng([cfg.seed, 0xBA7C])

    res = TrainResult()
    log_path = out / "train_log.csv"
    log_path.write_text("epoch,loss_mse,loss_normal,loss_total,seconds\n")
    final = out / "final.ckpt"
    best = out / "best.ckpt"

    if cfg.epochs == 0 or cfg.steps < 0:
        save_model(final, model, cfg)
        res.final_path = final
        return res

    best_score = np.inf
    n = len(samples)
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(n)
        sums = np.zeros(3)
        batches = 0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            rgb, raw, gt, valid, _ = batch_arrays([samples[i] for i in idx])
            pred = model(Tensor(rgb), Tensor(raw))
            mse = loss_mse(pred, Tensor(gt), valid)
            nrm = loss_normal(pred, Tensor(gt), valid)
            total = mse + F._t(cfg.lam) * nrm
            vals = (mse.data.item(), nrm.data.item(), total.data.item())
            if not all(np.isfinite(v) for v in vals):
                log.error("diverged at epoch %d step %d (loss %r), keeping last checkpoint", epoch, res.steps_done, vals)
                res.diverged = True
                res.final_path = final if final.exists() else None
                return res
            backward(total, params)
            opt.step()
            opt.zero_grad()
            sums += vals
            batches += 1
            res.steps_done += 1
            if cfg.steps and res.steps_done >= cfg.steps:
                break
        mean = sums / batches
        dt = time.perf_counter() - t0
        row = (epoch, float(mean[0]), float(mean[1]), float(mean[2]), dt)
        res.log_rows.append(row)
        with open(log_path, "a") as f:
            f.write(f"{epoch},{mean[0]:.6f},{mean[1]:.6f},{mean[2]:.6f},{dt:.3f}\n")
        save_model(final, model, cfg)
        score = _val_loss(model, val_samples, cfg) if val_samples else float(mean[2])
        if score < best_score:
            best_score = score
            save_model(best, model, cfg)
        if cfg.steps and res.steps_done >= cfg.steps:
            break

    res.final_path = final
    res.best_path = best if best.exists() else None
    return res


def _val_loss(model: HDCNet, samples, cfg: TrainConfig) -> float:
    tot = 0.0
    with no_grad():
        for lo in range(0, len(samples), cfg.batch_size):
            rgb, raw, gt, valid, _ = batch_arrays(samples[lo : lo + cfg.batch_size])
            loss = total_loss(model(Tensor(rgb), Tensor(raw)), Tensor(gt), valid, lam=cfg.lam)
            tot += loss.data.item() * len(samples[lo : lo + cfg.batch_size])
    return tot / len(samples)


# -------------------------------------------------------------- evaluation


def predict(model: HDCNet, samples, batch_size: int = 8) -> np.ndarray:
    """Stacked predictions [N,H,W], no gradients."""
    outs = []
    with no_grad():
        for lo in range(0, len(samples), batch_size):
            rgb, raw, _, _, _ = batch_arrays(samples[lo : lo + batch_size])
            outs.append(model(Tensor(rgb), Tensor(raw)).data[:, 0])
    return np.concatenate(outs, axis=0)


def evaluate(model: HDCNet, samples, batch_size: int = 8, per_sample: bool = False):
    """Pixel-pooled metrics over the split; per_sample adds one report
    per sample id.  Returns (MetricsReport, list[(id, MetricsReport)])."""
    acc = MetricsAccumulator()
    rows = []
    preds = predict(model, samples, batch_size)
    for s, p in zip(samples, preds):
        ev = evaluation_mask(s.valid, s.transparent)
        acc.update(p, s.gt, ev)
        if per_sample:
            one = MetricsAccumulator()
            one.update(p, s.gt, ev)
            rows.append((s.sample_id, one.report()))
    return acc.report(), rows


def eval_csv(report: MetricsReport, rows=()) -> str:
    lines = [CSV_HEADER, report.csv_row()]
    for sid, rep in rows:
        lines.append(f"{sid},{rep.csv_row()}")
    return "\n".join(lines) + "\n"


def train_rmse(model: HDCNet, samples, batch_size: int = 8) -> float:
    """RMSE over the training samples' valid pixels (overfit check)."""
    acc = MetricsAccumulator()
    preds = predict(model, samples, batch_size)
    for s, p in zip(samples, preds):
        acc.update(p, s.gt, s.valid)
    return acc.report().rmse


# ---------------------------------------------------------------- ablation

ABLATION_GRID = (
    ("none", False, False),
    ("smfm", True, False),
    ("btmfm", False, True),
    ("smfm+btmfm", True, True),
)


def run_ablation(cfg: TrainConfig, n_train: int = 64, n_test: int = 16):
    """Train the four module-switch variants on one pinned benchmark and
    evaluate each on the same held-out split.

    Returns list of (label, TrainConfig, MetricsReport), grid order.
    """
    # The benchmark corrupts transparent regions with plausible background
    # readings rather than zeros: a gap announces itself in the depth
    # channel alone, a false reading can only be caught by consulting the
    # image, which is the ability the fusion modules are meant to add.
    # Six primitives per scene keep roughly a quarter of each image
    # corrupt, wide enough that fixing it needs context from clean areas,
    # and taller objects make an uncaught false reading expensive.
    bench_seed = 1000 * cfg.seed + 77
    bench_kw = dict(
        height=cfg.height,
        width=cfg.width,
        n_primitives=6,
        hole_mode="background",
        depth_offset=(0.05, 0.15),
    )
    train_set = ds.synthetic_split(n_train, base_seed=bench_seed, **bench_kw)
    test_set = ds.synthetic_split(n_test, base_seed=bench_seed + n_train, **bench_kw)
    out = []
    for label, smfm, btmfm in ABLATION_GRID:
        sub = replace(
            cfg,
            use_smfm=smfm,
            use_btmfm=btmfm,
            synthetic=0,
            out_dir=str(Path(cfg.out_dir) / f"ablate_{label.replace('+', '_')}"),
        )
        t0 = time.perf_counter()
        res = train(sub, samples=train_set)
        if res.diverged or res.final_path is None:
            raise RuntimeError(f"ablation variant {label!r} diverged")
        model, _ = load_model(res.final_path)
        report, _ = evaluate(model, test_set, batch_size=cfg.batch_size)
        log.info("ablate %-12s rel=%.6f rmse=%.6f (%.1fs)", label, report.rel, report.rmse, time.perf_counter() - t0)
        out.append((label, sub, report))
    return out


def ablation_csv(rows) -> str:
    lines = ["variant," + CSV_HEADER]
    for label, _, report in rows:
        lines.append(f"{label},{report.csv_row()}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------- inference


def infer_files(ckpt_path, rgb_path, raw_path, out_path, gt_path=None, depth_scale=ds.DEFAULT_DEPTH_SCALE):
    """Complete one depth map from image files; writes a 16-bit PGM (and
    an 8-bit error map next to it when gt is supplied)."""
    from .data import pnm

    model, cfg = load_model(ckpt_path)
    rgb8 = pnm.read_ppm(rgb_path)
    raw16 = pnm.read_pgm(raw_path)
    h, w = raw16.shape
    if rgb8.shape[:2] != (h, w):
        raise ValueError(f"rgb is {rgb8.shape[1]}x{rgb8.shape[0]}, raw depth is {w}x{h}")
    if (h, w) != (cfg.height, cfg.width):
        raise ValueError(f"inputs are {w}x{h}, checkpoint expects {cfg.width}x{cfg.height}")
    rgb = rgb8.astype(np.float32).transpose(2, 0, 1)[None] / 255.0
    raw = raw16.astype(np.float32)[None, None] * depth_scale
    with no_grad():
        pred = model(Tensor(rgb), Tensor(raw)).data[0, 0]
    q = np.clip(np.round(pred.astype(np.float64) / depth_scale), 0, 65535).astype(np.uint16)
    pnm.write_pgm(out_path, q)
    if gt_path is not None:
        gt16 = pnm.read_pgm(gt_path)
        if gt16.shape != (h, w):
            raise ValueError(f"gt is {gt16.shape[1]}x{gt16.shape[0]}, raw depth is {w}x{h}")
        gt = gt16.astype(np.float64) * depth_scale
        err_path = Path(str(out_path)).with_suffix(".err.pgm")
        pnm.write_error_map(err_path, pred.astype(np.float64), gt, gt > 0)
        return Path(str(out_path)), err_path
    return Path(str(out_path)), None
