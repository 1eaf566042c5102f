"""Two-head mini U-Net: topology, forward pass with tracing, model files.

The trunk is D encoder blocks (two conv3x3-BN-ReLU each) with 2x2 max
pools, a bottleneck block, and D decoder stages (2x2 stride-2 transposed
conv + ReLU, concat with the encoder skip, two conv3x3-BN-ReLU). The seg
head is a 1x1 conv to 2 channels; the cc head adds two conv3x3-BN-ReLU
blocks before its 1x1 conv. Both heads end in a channel softmax.
"""

import json
import os
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from .errors import (FormatError, InputSizeError, MissingWeightError,
                     ShapeError, WeightShapeError)
from .layers import BN_EPS, LayerSpec, apply_layer, output_dims

MODEL_FORMAT = "dotseg-model"
MODEL_VERSION = 1
INPUT = "__input__"


@dataclass
class NetworkModel:
    trunk: list
    seg_head: list
    cc_head: list
    weights: dict
    depth: int
    width: int
    in_channels: int = 3

    @property
    def dtype(self):
        return next(iter(self.weights.values())).dtype

    def all_layers(self):
        return self.trunk + self.seg_head + self.cc_head

    def layer(self, name):
        for spec in self.all_layers():
            if spec.name == name:
                return spec
        raise KeyError(name)


@dataclass
class ActivationTrace:
    """Per-layer outputs of one forward pass, keyed by layer name.

    ``outputs[INPUT]`` is the network input. ``bn_stats`` holds the
    (mean, var) actually used by each batchnorm when run in training mode.
    """
    outputs: dict = field(default_factory=dict)
    bn_stats: dict = field(default_factory=dict)
    recomputed: list = field(default_factory=list)  # set by forward_from

    @property
    def image(self):
        return self.outputs[INPUT]

    def output(self, name):
        return self.outputs[name]


PlanStep = namedtuple("PlanStep", "layer input_name skip_name section")


def build_topology(depth=4, width=32, in_channels=3):
    """Layer lists (trunk, seg_head, cc_head) for the given scale."""
    if depth < 1 or width < 1:
        raise ShapeError(f"invalid depth={depth} width={width}")
    trunk = []

    def block(prefix, cin, cout):
        trunk.extend([
            LayerSpec("conv3x3", f"{prefix}.conv1", cin, cout),
            LayerSpec("batchnorm", f"{prefix}.bn1", cout, cout),
            LayerSpec("relu", f"{prefix}.relu1", cout, cout),
            LayerSpec("conv3x3", f"{prefix}.conv2", cout, cout),
            LayerSpec("batchnorm", f"{prefix}.bn2", cout, cout),
            LayerSpec("relu", f"{prefix}.relu2", cout, cout),
        ])

    cin = in_channels
    for d in range(1, depth + 1):
        cout = width * 2 ** (d - 1)
        block(f"enc{d}", cin, cout)
        trunk.append(LayerSpec("maxpool2x2", f"pool{d}", cout, cout))
        cin = cout
    block("bottleneck", cin, 2 * cin)
    cur = 2 * cin
    for d in range(depth, 0, -1):
        wd = width * 2 ** (d - 1)
        trunk.append(LayerSpec("transposed_conv2x2", f"up{d}", cur, wd))
        trunk.append(LayerSpec("relu", f"up{d}.relu", wd, wd))
        trunk.append(LayerSpec("concat_skip", f"cat{d}", wd, 2 * wd,
                               skip_source=f"enc{d}.relu2"))
        block(f"dec{d}", 2 * wd, wd)
        cur = wd
    seg_head = [
        LayerSpec("conv1x1", "seg.conv", width, 2),
        LayerSpec("softmax_channel", "seg.softmax", 2, 2),
    ]
    cc_head = [
        LayerSpec("conv3x3", "cc.conv1", width, width),
        LayerSpec("batchnorm", "cc.bn1", width, width),
        LayerSpec("relu", "cc.relu1", width, width),
        LayerSpec("conv3x3", "cc.conv2", width, width),
        LayerSpec("batchnorm", "cc.bn2", width, width),
        LayerSpec("relu", "cc.relu2", width, width),
        LayerSpec("conv1x1", "cc.conv3", width, 2),
        LayerSpec("softmax_channel", "cc.softmax", 2, 2),
    ]
    return trunk, seg_head, cc_head


def init_weights(layers, seed=0, dtype=np.float32):
    """He-normal conv weights, zero biases, identity batchnorm."""
    rng = np.random.default_rng(seed)
    weights = {}
    for spec in layers:
        if spec.kind in ("conv3x3", "conv1x1", "transposed_conv2x2"):
            k = {"conv3x3": 3, "conv1x1": 1, "transposed_conv2x2": 2}[spec.kind]
            fan_in = spec.in_channels * k * k
            std = np.sqrt(2.0 / fan_in)
            shape = (spec.out_channels, spec.in_channels, k, k)
            weights[f"{spec.name}.w"] = rng.normal(0, std, shape).astype(dtype)
            weights[f"{spec.name}.b"] = np.zeros(spec.out_channels, dtype)
        elif spec.kind == "batchnorm":
            c = spec.in_channels
            weights[f"{spec.name}.gamma"] = np.ones(c, dtype)
            weights[f"{spec.name}.beta"] = np.zeros(c, dtype)
            weights[f"{spec.name}.mean"] = np.zeros(c, dtype)
            weights[f"{spec.name}.var"] = np.ones(c, dtype)
    return weights


def new_model(depth=4, width=32, in_channels=3, seed=0, dtype=np.float32):
    trunk, seg_head, cc_head = build_topology(depth, width, in_channels)
    weights = init_weights(trunk + seg_head + cc_head, seed=seed, dtype=dtype)
    return NetworkModel(trunk, seg_head, cc_head, weights, depth, width,
                        in_channels)


def cast_model(model, dtype):
    """Copy of the model with all weights cast (float64 for grad checks)."""
    weights = {k: v.astype(dtype) for k, v in model.weights.items()}
    return NetworkModel(model.trunk, model.seg_head, model.cc_head, weights,
                        model.depth, model.width, model.in_channels)


def block_aliases(model):
    """Map block names (enc1, bottleneck, dec2, ...) to their output layer."""
    names = {spec.name for spec in model.trunk}
    alias = {}
    for spec in model.trunk:
        if spec.name.endswith(".relu2"):
            alias[spec.name[:-len(".relu2")]] = spec.name
    alias.update({n: n for n in names})
    return alias


def resolve_trunk_layer(model, name):
    alias = block_aliases(model)
    if name not in alias:
        raise ShapeError(f"{name!r} is not a trunk layer or block of this model")
    return alias[name]


def execution_plan(model, heads=("seg", "cc")):
    """Ordered PlanSteps for the trunk plus the requested heads."""
    steps = []
    prev = INPUT
    for spec in model.trunk:
        skip = spec.skip_source if spec.kind == "concat_skip" else None
        steps.append(PlanStep(spec, prev, skip, "trunk"))
        prev = spec.name
    trunk_out = prev
    for head, section in (("seg", "seg_head"), ("cc", "cc_head")):
        if head not in heads:
            continue
        prev = trunk_out
        for spec in getattr(model, section):
            steps.append(PlanStep(spec, prev, None, section))
            prev = spec.name
    return steps


def required_weight_names(model):
    names = []
    for spec in model.all_layers():
        if spec.kind in ("conv3x3", "conv1x1", "transposed_conv2x2"):
            names += [f"{spec.name}.w", f"{spec.name}.b"]
        elif spec.kind == "batchnorm":
            names += [f"{spec.name}.{s}" for s in ("gamma", "beta", "mean", "var")]
    return names


def validate_model(model):
    """Check channel chaining and weight presence/dims; raises on problems."""
    for name in required_weight_names(model):
        if name not in model.weights:
            raise MissingWeightError(f"missing weight array {name!r}")
    side = 2 ** model.depth
    dims = {INPUT: (model.in_channels, side, side)}
    for step in execution_plan(model):
        skip_dims = dims[step.skip_name] if step.skip_name else None
        dims[step.layer.name] = output_dims(step.layer, dims[step.input_name],
                                            skip_dims)


def forward(model, image, training=False):
    """Full forward pass.

    ``image`` is 1 x in_channels x H x W with H, W divisible by 2**depth
    and values in [0, 1]. Returns (y_seg, y_cc, trace): both outputs are
    1x2xHxW channel-softmax probability maps.
    """
    image = np.asarray(image)
    if image.ndim != 4 or image.shape[0] != 1 or image.shape[1] != model.in_channels:
        raise ShapeError(f"expected 1x{model.in_channels}xHxW input, "
                         f"got {image.shape}")
    h, w = image.shape[2], image.shape[3]
    div = 2 ** model.depth
    if h % div or w % div:
        raise InputSizeError(f"input {h}x{w} not divisible by 2**{model.depth}; "
                             "reflect-pad before calling forward")
    if image.min() < -1e-6 or image.max() > 1 + 1e-6:
        raise ShapeError("input values outside [0, 1]")
    image = np.ascontiguousarray(image, dtype=model.dtype)
    trace = ActivationTrace(outputs={INPUT: image})
    run_plan(model, execution_plan(model), trace.outputs, training,
             trace.bn_stats)
    return (trace.outputs["seg.softmax"], trace.outputs["cc.softmax"], trace)


def run_plan(model, steps, acts, training=False, bn_stats=None):
    """Execute plan steps over an activation dict keyed by layer name."""
    for step in steps:
        skip = acts[step.skip_name] if step.skip_name else None
        acts[step.layer.name] = apply_layer(
            step.layer, acts[step.input_name], model.weights, skip=skip,
            training=training, batch_stats=bn_stats)


def forward_from(model, trace, start, new_value, heads=("cc",), training=False):
    """Re-run the network with layer ``start``'s output replaced.

    Everything downstream of ``start`` (through skips) is recomputed;
    untouched activations are reused from ``trace``. Returns a new trace.
    """
    start = resolve_trunk_layer(model, start)
    if new_value.shape != trace.outputs[start].shape:
        raise ShapeError(f"replacement for {start} has shape {new_value.shape}, "
                         f"expected {trace.outputs[start].shape}")
    acts = dict(trace.outputs)
    acts[start] = new_value
    new_trace = ActivationTrace(outputs=acts, bn_stats=dict(trace.bn_stats))
    dirty = {start}
    steps = execution_plan(model, heads=heads)
    begin = next(i for i, s in enumerate(steps) if s.layer.name == start) + 1
    for step in steps[begin:]:
        if step.input_name in dirty or step.skip_name in dirty:
            skip = acts[step.skip_name] if step.skip_name else None
            acts[step.layer.name] = apply_layer(
                step.layer, acts[step.input_name], model.weights, skip=skip,
                training=training, batch_stats=new_trace.bn_stats)
            dirty.add(step.layer.name)
            new_trace.recomputed.append(step.layer.name)
    return new_trace


# ---------------------------------------------------------------------------
# model directory format: topology.json + weights.bin
# ---------------------------------------------------------------------------

def _spec_to_json(spec):
    d = {"kind": spec.kind, "name": spec.name,
         "in_channels": spec.in_channels, "out_channels": spec.out_channels}
    if spec.skip_source:
        d["skip_source"] = spec.skip_source
    return d


def _spec_from_json(d):
    return LayerSpec(d["kind"], d["name"], d["in_channels"], d["out_channels"],
                     d.get("skip_source"))


def save_model(model, path):
    """Write topology.json + weights.bin (raw f32 LE arrays in index order)."""
    os.makedirs(path, exist_ok=True)
    index = []
    offset = 0
    blobs = []
    for name in required_weight_names(model):
        arr = np.ascontiguousarray(model.weights[name], dtype="<f4")
        index.append({"name": name, "offset": offset,
                      "dims": list(arr.shape)})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    topo = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "depth": model.depth,
        "width": model.width,
        "in_channels": model.in_channels,
        "bn_eps": BN_EPS,
        "trunk": [_spec_to_json(s) for s in model.trunk],
        "seg_head": [_spec_to_json(s) for s in model.seg_head],
        "cc_head": [_spec_to_json(s) for s in model.cc_head],
        "weight_index": index,
    }
    with open(os.path.join(path, "topology.json"), "w") as fh:
        json.dump(topo, fh, indent=1)
    with open(os.path.join(path, "weights.bin"), "wb") as fh:
        fh.write(b"".join(blobs))


def load_model(path):
    """Load a model directory; raises distinct errors for format problems."""
    topo_path = os.path.join(path, "topology.json")
    try:
        with open(topo_path) as fh:
            topo = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"{topo_path}: missing topology.json")
    except json.JSONDecodeError as exc:
        raise FormatError(f"{topo_path}: invalid JSON ({exc})")
    if topo.get("format") != MODEL_FORMAT:
        raise FormatError(f"{topo_path}: format {topo.get('format')!r}, "
                          f"expected {MODEL_FORMAT!r}")
    if topo.get("version") != MODEL_VERSION:
        raise FormatError(f"{topo_path}: unsupported version "
                          f"{topo.get('version')!r}")
    model = NetworkModel(
        trunk=[_spec_from_json(d) for d in topo["trunk"]],
        seg_head=[_spec_from_json(d) for d in topo["seg_head"]],
        cc_head=[_spec_from_json(d) for d in topo["cc_head"]],
        weights={},
        depth=topo["depth"], width=topo["width"],
        in_channels=topo.get("in_channels", 3),
    )
    blob_path = os.path.join(path, "weights.bin")
    try:
        with open(blob_path, "rb") as fh:
            blob = fh.read()
    except FileNotFoundError:
        raise FormatError(f"{blob_path}: missing weights.bin")
    indexed = {}
    for entry in topo["weight_index"]:
        name, offset = entry["name"], entry["offset"]
        dims = tuple(entry["dims"])
        count = int(np.prod(dims))
        if offset + 4 * count > len(blob):
            raise MissingWeightError(f"{blob_path}: truncated blob, first "
                                     f"missing array is {name!r}")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        indexed[name] = arr.reshape(dims).copy()
    expected = _expected_weight_dims(model)
    for name, dims in expected.items():
        if name not in indexed:
            raise MissingWeightError(f"topology references weight {name!r} "
                                     "absent from blob")
        if tuple(indexed[name].shape) != dims:
            raise WeightShapeError(f"{name}: stored dims "
                                   f"{indexed[name].shape} != topology {dims}")
    model.weights = indexed
    validate_model(model)
    return model


def _expected_weight_dims(model):
    dims = {}
    for spec in model.all_layers():
        if spec.kind in ("conv3x3", "conv1x1", "transposed_conv2x2"):
            k = {"conv3x3": 3, "conv1x1": 1, "transposed_conv2x2": 2}[spec.kind]
            dims[f"{spec.name}.w"] = (spec.out_channels, spec.in_channels, k, k)
            dims[f"{spec.name}.b"] = (spec.out_channels,)
        elif spec.kind == "batchnorm":
            for s in ("gamma", "beta", "mean", "var"):
                dims[f"{spec.name}.{s}"] = (spec.in_channels,)
    return dims
