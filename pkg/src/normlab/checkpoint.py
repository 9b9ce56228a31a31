"""Binary network checkpoints: magic, JSON manifest, raw float64 buffers.

Layout: the 4-byte magic "BLN1", a little-endian uint32 manifest length,
the manifest JSON (utf-8, sorted keys), then every buffer listed in the
manifest as consecutive little-endian float64 values. All network floats,
including running-statistics scalars, live in the payload so round trips
are bitwise exact.
"""

import json
import struct

from .data import DataFormatError
from .nn import Network, Normalizer, layer_from_descriptor
from .tensor import Tensor

MAGIC = b"BLN1"
VERSION = 1


def _buffer_entries(net):
    """(name, shape, data) for every float buffer, in a fixed order."""
    entries = []
    for i, layer in enumerate(net.layers):
        for name in sorted(layer.params()):
            p = layer.params()[name]
            entries.append((f"{i}.{name}", list(p.shape), p.data))
        if isinstance(layer, Normalizer):
            r = layer.running
            entries.append((f"{i}.running.e_mu_b", list(r.e_mu_b.shape), r.e_mu_b.data))
            entries.append((f"{i}.running.e_sigma_b", list(r.e_sigma_b.shape), r.e_sigma_b.data))
            entries.append((f"{i}.running.e_mu_f", [1], [r.e_mu_f]))
            entries.append((f"{i}.running.e_sigma_f", [1], [r.e_sigma_f]))
    return entries


def save_checkpoint(path, net, meta=None):
    """Write the network (parameters, running stats, layer layout) to disk."""
    manifest = {
        "version": VERSION,
        "layers": [layer.describe() for layer in net.layers],
        "running": [
            {"layer": i, "count": layer.running.count, "batch_m": layer.running.batch_m}
            for i, layer in enumerate(net.layers)
            if isinstance(layer, Normalizer)
        ],
        "meta": meta or {},
    }
    entries = _buffer_entries(net)
    manifest["buffers"] = [{"name": n, "shape": s} for n, s, _ in entries]
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, _, data in entries:
            fh.write(struct.pack(f"<{len(data)}d", *data))


def load_checkpoint(path):
    """Rebuild (network, manifest) from a checkpoint file."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataFormatError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise DataFormatError(f"malformed checkpoint: {path} lacks the BLN1 magic")
    (length,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + length:
        raise DataFormatError(f"malformed checkpoint: {path} manifest truncated")
    try:
        manifest = json.loads(raw[8:8 + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"malformed checkpoint: {path} manifest unreadable") from exc
    if manifest.get("version") != VERSION:
        raise DataFormatError(f"unsupported checkpoint version {manifest.get('version')!r}")

    layers = [layer_from_descriptor(d) for d in manifest["layers"]]
    net = Network(layers)

    offset = 8 + length
    buffers = {}
    for entry in manifest["buffers"]:
        shape = tuple(entry["shape"])
        count = 1
        for s in shape:
            count *= s
        end = offset + 8 * count
        if end > len(raw):
            raise DataFormatError(f"malformed checkpoint: {path} payload truncated")
        values = list(struct.unpack(f"<{count}d", raw[offset:end]))
        buffers[entry["name"]] = (shape, values)
        offset = end
    if offset != len(raw):
        raise DataFormatError(f"malformed checkpoint: {path} has trailing bytes")

    for i, layer in enumerate(layers):
        for name in layer.params():
            shape, values = buffers[f"{i}.{name}"]
            layer.set_param(name, Tensor._wrap(shape, values))
        if isinstance(layer, Normalizer):
            r = layer.running
            shape, values = buffers[f"{i}.running.e_mu_b"]
            r.e_mu_b = Tensor._wrap(shape, values)
            shape, values = buffers[f"{i}.running.e_sigma_b"]
            r.e_sigma_b = Tensor._wrap(shape, values)
            r.e_mu_f = buffers[f"{i}.running.e_mu_f"][1][0]
            r.e_sigma_f = buffers[f"{i}.running.e_sigma_f"][1][0]
    for entry in manifest["running"]:
        layer = layers[entry["layer"]]
        layer.running.count = entry["count"]
        layer.running.batch_m = entry["batch_m"]
    return net, manifest
