/**
 * Two-head U-Net topology description, kept in lockstep with the Python
 * engine's layer naming, and the export manifest derived from it.
 *
 * Checkpoint kernels are channels-last ([kh, kw, in, out] for conv,
 * [kh, kw, out, in] for the transposed conv); the engine stores every
 * conv kernel as (out, in, kh, kw) row-major f32 LE.
 */

export interface LayerSpec {
  kind: string;
  name: string;
  in_channels: number;
  out_channels: number;
  skip_source?: string;
}

export type Layout = 'copy' | 'hwio_to_oihw' | 'hwoi_to_oihw';

export interface ManifestEntry {
  /** variable name inside the checkpoint, e.g. "enc1_conv1/kernel" */
  source: string;
  /** weight name in the exported model, e.g. "enc1.conv1.w" */
  target: string;
  /** expected dims after the layout transform (engine order) */
  dims: number[];
  layout: Layout;
}

export interface ExportManifest {
  depth: number;
  width: number;
  in_channels: number;
  entries: ManifestEntry[];
}

export interface Topology {
  depth: number;
  width: number;
  in_channels: number;
  trunk: LayerSpec[];
  seg_head: LayerSpec[];
  cc_head: LayerSpec[];
}

export function buildTopology(depth: number, width: number,
                              inChannels = 3): Topology {
  const trunk: LayerSpec[] = [];
  const block = (prefix: string, cin: number, cout: number) => {
    trunk.push(
      { kind: 'conv3x3', name: `${prefix}.conv1`, in_channels: cin, out_channels: cout },
      { kind: 'batchnorm', name: `${prefix}.bn1`, in_channels: cout, out_channels: cout },
      { kind: 'relu', name: `${prefix}.relu1`, in_channels: cout, out_channels: cout },
      { kind: 'conv3x3', name: `${prefix}.conv2`, in_channels: cout, out_channels: cout },
      { kind: 'batchnorm', name: `${prefix}.bn2`, in_channels: cout, out_channels: cout },
      { kind: 'relu', name: `${prefix}.relu2`, in_channels: cout, out_channels: cout },
    );
  };
  let cin = inChannels;
  for (let d = 1; d <= depth; d++) {
    const cout = width * 2 ** (d - 1);
    block(`enc${d}`, cin, cout);
    trunk.push({ kind: 'maxpool2x2', name: `pool${d}`, in_channels: cout, out_channels: cout });
    cin = cout;
  }
  block('bottleneck', cin, 2 * cin);
  let cur = 2 * cin;
  for (let d = depth; d >= 1; d--) {
    const wd = width * 2 ** (d - 1);
    trunk.push(
      { kind: 'transposed_conv2x2', name: `up${d}`, in_channels: cur, out_channels: wd },
      { kind: 'relu', name: `up${d}.relu`, in_channels: wd, out_channels: wd },
      { kind: 'concat_skip', name: `cat${d}`, in_channels: wd, out_channels: 2 * wd, skip_source: `enc${d}.relu2` },
    );
    block(`dec${d}`, 2 * wd, wd);
    cur = wd;
  }
  const seg_head: LayerSpec[] = [
    { kind: 'conv1x1', name: 'seg.conv', in_channels: width, out_channels: 2 },
    { kind: 'softmax_channel', name: 'seg.softmax', in_channels: 2, out_channels: 2 },
  ];
  const cc_head: LayerSpec[] = [
    { kind: 'conv3x3', name: 'cc.conv1', in_channels: width, out_channels: width },
    { kind: 'batchnorm', name: 'cc.bn1', in_channels: width, out_channels: width },
    { kind: 'relu', name: 'cc.relu1', in_channels: width, out_channels: width },
    { kind: 'conv3x3', name: 'cc.conv2', in_channels: width, out_channels: width },
    { kind: 'batchnorm', name: 'cc.bn2', in_channels: width, out_channels: width },
    { kind: 'relu', name: 'cc.relu2', in_channels: width, out_channels: width },
    { kind: 'conv1x1', name: 'cc.conv3', in_channels: width, out_channels: 2 },
    { kind: 'softmax_channel', name: 'cc.softmax', in_channels: 2, out_channels: 2 },
  ];
  return { depth, width, in_channels: inChannels, trunk, seg_head, cc_head };
}

export function allLayers(topo: Topology): LayerSpec[] {
  return [...topo.trunk, ...topo.seg_head, ...topo.cc_head];
}

const KERNEL_SIZE: Record<string, number> = {
  conv3x3: 3, conv1x1: 1, transposed_conv2x2: 2,
};

/** checkpoint variable prefix for an engine layer name (dots -> underscores) */
export function checkpointLayerName(engineName: string): string {
  return engineName.replace(/\./g, '_');
}

export function buildManifest(depth: number, width: number,
                              inChannels = 3): ExportManifest {
  const topo = buildTopology(depth, width, inChannels);
  const entries: ManifestEntry[] = [];
  for (const layer of allLayers(topo)) {
    const src = checkpointLayerName(layer.name);
    if (layer.kind in KERNEL_SIZE) {
      const k = KERNEL_SIZE[layer.kind];
      entries.push({
        source: `${src}/kernel`,
        target: `${layer.name}.w`,
        dims: [layer.out_channels, layer.in_channels, k, k],
        layout: layer.kind === 'transposed_conv2x2' ? 'hwoi_to_oihw'
                                                    : 'hwio_to_oihw',
      });
      entries.push({
        source: `${src}/bias`, target: `${layer.name}.b`,
        dims: [layer.out_channels], layout: 'copy',
      });
    } else if (layer.kind === 'batchnorm') {
      const pairs: Array<[string, string]> = [
        ['gamma', 'gamma'], ['beta', 'beta'],
        ['moving_mean', 'mean'], ['moving_variance', 'var'],
      ];
      for (const [ckpt, engine] of pairs) {
        entries.push({
          source: `${src}/${ckpt}`, target: `${layer.name}.${engine}`,
          dims: [layer.in_channels], layout: 'copy',
        });
      }
    }
  }
  return { depth, width, in_channels: inChannels, entries };
}

/** weight names in the fixed order the engine's weights.bin uses */
export function requiredWeightNames(topo: Topology): string[] {
  const names: string[] = [];
  for (const layer of allLayers(topo)) {
    if (layer.kind in KERNEL_SIZE) {
      names.push(`${layer.name}.w`, `${layer.name}.b`);
    } else if (layer.kind === 'batchnorm') {
      for (const s of ['gamma', 'beta', 'mean', 'var']) {
        names.push(`${layer.name}.${s}`);
      }
    }
  }
  return names;
}
