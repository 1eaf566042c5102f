"""Dataset handling and the labels -> train -> infer -> post -> eval flow.

Dataset layout: ``images/*.png`` (8-bit RGB), ``points/*.csv`` (row,col
header), optional ``masks/*.png`` (16-bit instance ids) with matching
stems, plus generated ``labels/{cluster,voronoi,point}/*.png``.
"""

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import imageio, labels as labelgen, setn
from .errors import DataError
from .losses import FrwConfig, LossWeights
from .lrp import heatmap_to_u8
from .metrics import dataset_report, image_report, pixel_metrics, write_report
from .network import forward, load_model
from .postprocess import (PostprocessConfig, binarize_seg, condense_cc_blobs,
                          expand_cc, morph_cleanup, split_instances)
from .train import Sample, train

MODES = ("base", "split", "split_expand")


@dataclass
class PipelineConfig:
    data_dir: str = ""
    model_dir: str = ""
    out_dir: str = "out"
    mode: str = "split_expand"
    seed: int = 0
    threads: int = 1
    epochs: int = 200
    patch_size: int = None
    depth: int = 4
    width: int = 32
    k: int = 10
    fold: int = 0
    loss_weights: LossWeights = None
    frw: FrwConfig = field(default_factory=FrwConfig)
    post: PostprocessConfig = field(default_factory=PostprocessConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise DataError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.loss_weights is None:
            self.loss_weights = LossWeights.defaults(self.frw.enabled)

    @classmethod
    def from_json(cls, path, **overrides):
        with open(path) as fh:
            raw = json.load(fh)
        raw.update(overrides)
        for key, typ in (("loss_weights", LossWeights), ("frw", FrwConfig),
                         ("post", PostprocessConfig)):
            if isinstance(raw.get(key), dict):
                raw[key] = typ(**raw[key])
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=1)


# ---------------------------------------------------------------------------
# dataset IO
# ---------------------------------------------------------------------------

def dataset_names(data_dir):
    img_dir = os.path.join(data_dir, "images")
    if not os.path.isdir(img_dir):
        raise DataError(f"{img_dir}: no images directory")
    names = sorted(os.path.splitext(f)[0] for f in os.listdir(img_dir)
                   if f.endswith(".png"))
    if not names:
        raise DataError(f"{img_dir}: no images found")
    return names


def write_synthetic_dataset(records, out_dir):
    for sub in ("images", "points", "masks"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    for rec in records:
        imageio.write_image_rgb(
            os.path.join(out_dir, "images", f"{rec.name}.png"), rec.image)
        labelgen.write_points_csv(
            os.path.join(out_dir, "points", f"{rec.name}.csv"), rec.points)
        imageio.write_instance_map(
            os.path.join(out_dir, "masks", f"{rec.name}.png"), rec.instances)


def load_image_nchw(data_dir, name):
    img = imageio.read_image_rgb(os.path.join(data_dir, "images", f"{name}.png"))
    return imageio.image_to_nchw(img), img


def generate_labels(data_dir, seed=0, k=3):
    """Write the three coarse label maps for every image; returns the dir."""
    out_root = os.path.join(data_dir, "labels")
    for sub in ("cluster", "voronoi", "point"):
        os.makedirs(os.path.join(out_root, sub), exist_ok=True)
    for name in dataset_names(data_dir):
        _, img = load_image_nchw(data_dir, name)
        pts = labelgen.read_points_csv(
            os.path.join(data_dir, "points", f"{name}.csv"))
        h, w = img.shape[0], img.shape[1]
        maps = {
            "cluster": labelgen.cluster_labels(img, pts, k=k, seed=seed),
            "voronoi": labelgen.voronoi_labels(pts, h, w),
            "point": labelgen.enlarged_point_labels(pts, h, w),
        }
        for sub, m in maps.items():
            imageio.write_label_map(
                os.path.join(out_root, sub, f"{name}.png"), m)
    return out_root


def load_samples(data_dir, names=None):
    """Training samples with the three label maps (must exist)."""
    names = names or dataset_names(data_dir)
    root = os.path.join(data_dir, "labels")
    samples = []
    for name in names:
        nchw, _ = load_image_nchw(data_dir, name)
        maps = []
        for sub in ("voronoi", "cluster", "point"):
            path = os.path.join(root, sub, f"{name}.png")
            if not os.path.exists(path):
                raise DataError(f"{path}: missing label map; run labels first")
            maps.append(imageio.read_label_map(path))
        samples.append(Sample(name, nchw, *maps))
    return samples


def load_masks(data_dir, names=None):
    names = names or dataset_names(data_dir)
    out = {}
    for name in names:
        path = os.path.join(data_dir, "masks", f"{name}.png")
        if os.path.exists(path):
            out[name] = imageio.read_instance_map(path)
    return out


def pad_to_multiple(image, div):
    """Reflect-pad H and W (bottom/right) up to a multiple of ``div``."""
    h, w = image.shape[2], image.shape[3]
    ph = (div - h % div) % div
    pw = (div - w % div) % div
    if ph == 0 and pw == 0:
        return image, (h, w)
    padded = np.pad(image, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="reflect")
    return padded, (h, w)


# ---------------------------------------------------------------------------
# pipeline stages
# ---------------------------------------------------------------------------

def infer_image(model, nchw):
    """Forward pass with padding handled; returns (y_seg, y_cc, trace)."""
    padded, (h, w) = pad_to_multiple(nchw, 2 ** model.depth)
    y_seg, y_cc, trace = forward(model, padded)
    return y_seg[:, :, :h, :w], y_cc[:, :, :h, :w], trace


def run_infer(config, names=None):
    model = load_model(config.model_dir)
    names = names or dataset_names(config.data_dir)
    os.makedirs(config.out_dir, exist_ok=True)
    for name in names:
        nchw, _ = load_image_nchw(config.data_dir, name)
        y_seg, y_cc, _ = infer_image(model, nchw)
        setn.write_setn(os.path.join(config.out_dir, f"{name}_seg.setn"), y_seg)
        setn.write_setn(os.path.join(config.out_dir, f"{name}_cc.setn"), y_cc)
    return names


def postprocess_image(y_seg, y_cc, mode, pcfg, model=None, trace=None):
    """Instance map for one image; returns (instances, cc_points, artifacts).

    ``model``/``trace`` are only needed in split_expand mode, where
    orphan cc points are grown from relevance heatmaps.
    """
    instances = morph_cleanup(binarize_seg(y_seg, pcfg), pcfg.min_object_size)
    if mode == "base":
        return instances, [], []
    points, blobs = condense_cc_blobs(np.asarray(y_cc)[0, 1], pcfg)
    instances = split_instances(instances, points)
    artifacts = []
    if mode == "split_expand":
        if model is None or trace is None:
            raise DataError("split_expand needs the model and a forward trace")
        instances = expand_cc(instances, points, model, trace, pcfg,
                              cc_blobs=blobs, artifacts=artifacts)
    return instances, points, artifacts


def _process_one(model, config, name, gt_masks):
    nchw, img = load_image_nchw(config.data_dir, name)
    y_seg, y_cc, trace = infer_image(model, nchw)
    instances, points, artifacts = postprocess_image(
        y_seg, y_cc, config.mode, config.post, model=model, trace=trace)
    pred_dir = os.path.join(config.out_dir, "instances")
    imageio.write_instance_map(os.path.join(pred_dir, f"{name}.png"), instances)
    imageio.write_image_rgb(
        os.path.join(config.out_dir, "overlays", f"{name}.png"),
        imageio.overlay_instances(img, instances, points) / 255.0)
    for art in artifacts:
        heat = art["heatmap"][:instances.shape[0], :instances.shape[1]]
        base = f"{name}_cc{art['point'].source_blob_id}"
        hdir = os.path.join(config.out_dir, "heatmaps")
        setn.write_setn(os.path.join(hdir, base + ".setn"), heat)
        imageio.write_gray8(os.path.join(hdir, base + ".png"),
                            heatmap_to_u8(heat))
    if name in gt_masks:
        return name, image_report(gt_masks[name], instances)
    return name, None


def run_pipeline(config, names=None):
    """forward -> binarize -> cleanup -> (split) -> (expand) -> eval."""
    model = load_model(config.model_dir)
    names = names or dataset_names(config.data_dir)
    if not names:
        raise DataError("empty test set")
    gt_masks = load_masks(config.data_dir, names)
    for sub in ("instances", "overlays", "heatmaps"):
        os.makedirs(os.path.join(config.out_dir, sub), exist_ok=True)
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(
                lambda n: _process_one(model, config, n, gt_masks), names))
    else:
        results = [_process_one(model, config, n, gt_masks) for n in names]
    per_image = {name: rep for name, rep in results if rep is not None}
    report = dataset_report(per_image) if per_image else {"per_image": {},
                                                          "mean": {}}
    write_report(os.path.join(config.out_dir, "report.json"), report)
    return report


def evaluate_dirs(pred_dir, gt_dir, out_path=None):
    """Metrics report for two directories of 16-bit instance maps."""
    names = sorted(os.path.splitext(f)[0] for f in os.listdir(gt_dir)
                   if f.endswith(".png"))
    if not names:
        raise DataError(f"{gt_dir}: no ground-truth maps")
    per_image = {}
    for name in names:
        pred_path = os.path.join(pred_dir, f"{name}.png")
        if not os.path.exists(pred_path):
            raise DataError(f"{pred_path}: missing prediction")
        gt = imageio.read_instance_map(os.path.join(gt_dir, f"{name}.png"))
        pred = imageio.read_instance_map(pred_path)
        per_image[name] = image_report(gt, pred)
    report = dataset_report(per_image)
    if out_path:
        write_report(out_path, report)
    return report


def train_with_selection(model, train_samples, val_pairs, epochs,
                         select_every=10, pcfg=None, **train_kw):
    """Train, keeping the weights with the best validation pixel F1.

    ``val_pairs`` holds (1x3xHxW image, HxW foreground mask) tuples; the
    F1 is evaluated every ``select_every`` epochs and at the end, and the
    best snapshot is restored into the model afterwards.
    """
    pcfg = pcfg or PostprocessConfig()
    best = {"f1": -1.0, "weights": None, "epoch": -1}

    def score(mdl):
        f1s = []
        for nchw, gt_fg in val_pairs:
            y_seg, _, _ = infer_image(mdl, nchw)
            f1s.append(pixel_metrics(binarize_seg(y_seg, pcfg),
                                     np.asarray(gt_fg) > 0)[1])
        return math.fsum(f1s) / len(f1s)

    def callback(epoch, mdl, row):
        if (epoch + 1) % select_every and epoch + 1 != epochs:
            return
        f1 = score(mdl)
        if f1 > best["f1"]:
            best.update(f1=f1, epoch=epoch,
                        weights={k: v.copy() for k, v in mdl.weights.items()})

    model, log = train(model, train_samples, epochs=epochs,
                       epoch_callback=callback, **train_kw)
    if best["weights"] is not None:
        model.weights = best["weights"]
    return model, log, best


def kfold_split(n_or_items, k=10, fold=0, seed=0):
    """Deterministic (train, val, test) index lists for one fold.

    The shuffled dataset is cut into k chunks differing in size by at
    most one; fold f tests on chunk f and validates on chunk (f+1) % k.
    """
    n = n_or_items if isinstance(n_or_items, int) else len(n_or_items)
    if k < 2 or k > n:
        raise DataError(f"k={k} incompatible with dataset size {n}")
    if not 0 <= fold < k:
        raise DataError(f"fold {fold} outside 0..{k - 1}")
    perm = np.random.default_rng(seed).permutation(n)
    chunks = np.array_split(perm, k)
    test = chunks[fold].tolist()
    val = chunks[(fold + 1) % k].tolist()
    used = set(test) | set(val)
    train = [int(i) for i in perm if int(i) not in used]
    return train, [int(i) for i in val], [int(i) for i in test]
