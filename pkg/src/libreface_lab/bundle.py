"""ModelBundle (encoder + classifier) and its on-disk format.

Layout, all integers little-endian::

    b"LFMB" | u32 version | u64 metadata length | UTF-8 JSON metadata | float32 blobs

Blobs are concatenated in the order of the metadata's ``manifest`` list.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from .errors import (
    BadMagicError,
    ConfigError,
    IOFailure,
    MetadataMismatchError,
    TruncatedBlobError,
    VersionMismatchError,
)
from .tensor import NetworkSpec, Params, cast_params, init_network

MAGIC = b"LFMB"
FORMAT_VERSION = 1
OUTPUT_SCHEMA_VERSION = 1

INTENSITY_AUS = (1, 2, 4, 5, 6, 9, 12, 15, 17, 20, 25, 26)
DETECTION_AUS = (7, 10, 14, 23, 24)

CLASS_SETS = {
    "affectnet8": ("neutral", "happy", "sad", "surprise", "fear", "disgust", "anger", "contempt"),
    "rafdb7": ("surprise", "fear", "disgust", "happiness", "sadness", "anger", "neutral"),
}

# required classifier output width per head kind; None = declared by metadata
HEAD_OUTPUTS = {
    "au": len(INTENSITY_AUS) + len(DETECTION_AUS),
    "au_intensity": len(INTENSITY_AUS),
    "au_detection": len(DETECTION_AUS),
    "fer": None,
    "raw": None,
}


@dataclass
class ModelBundle:
    encoder: NetworkSpec
    encoder_params: Params
    classifier: NetworkSpec
    classifier_params: Params
    head: str = "raw"
    metadata: Dict = field(default_factory=dict)
    _f32: Optional[tuple] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        validate_bundle(self)
        self.metadata.setdefault("feature_dim", self.encoder.out_dim)
        self.metadata.setdefault("schema_version", OUTPUT_SCHEMA_VERSION)
        self.metadata.setdefault("provenance", "")

    @property
    def feature_dim(self) -> int:
        return self.encoder.out_dim

    @property
    def output_dim(self) -> int:
        return self.classifier.out_dim

    @property
    def class_names(self):
        class_set = self.metadata.get("class_set")
        if class_set in CLASS_SETS:
            return CLASS_SETS[class_set]
        return tuple(f"class_{i}" for i in range(self.output_dim))

    def params(self) -> Params:
        """Flat view with ``encoder.`` / ``classifier.`` prefixes."""
        out = {f"encoder.{k}": v for k, v in self.encoder_params.items()}
        out.update({f"classifier.{k}": v for k, v in self.classifier_params.items()})
        return out

    def with_params(self, flat: Params) -> "ModelBundle":
        enc = {k[len("encoder."):]: v for k, v in flat.items() if k.startswith("encoder.")}
        cls = {k[len("classifier."):]: v for k, v in flat.items() if k.startswith("classifier.")}
        return replace(self, encoder_params=enc, classifier_params=cls, metadata=dict(self.metadata))

    def copy(self) -> "ModelBundle":
        return self.with_params({k: v.copy() for k, v in self.params().items()})

    def float32(self):
        """(encoder params, classifier params) cast to float32, cached."""
        if self._f32 is None:
            self._f32 = (cast_params(self.encoder_params, np.float32), cast_params(self.classifier_params, np.float32))
        return self._f32


def validate_bundle(b: ModelBundle) -> None:
    if b.encoder.role != "encoder" or b.classifier.role != "classifier":
        raise ConfigError("bundle needs an encoder-role and a classifier-role network", key="role")
    if b.encoder.out_dim != b.classifier.in_dim:
        raise ConfigError(
            f"encoder feature_dim {b.encoder.out_dim} != classifier input {b.classifier.in_dim}",
            key="feature_dim",
        )
    if b.head not in HEAD_OUTPUTS:
        raise ConfigError(f"unknown head kind {b.head!r}", key="head")
    want = HEAD_OUTPUTS[b.head]
    if want is not None and b.classifier.out_dim != want:
        raise ConfigError(f"{b.head} head needs {want} outputs, classifier has {b.classifier.out_dim}", key="head")
    class_set = b.metadata.get("class_set")
    if b.head == "fer" and class_set in CLASS_SETS and len(CLASS_SETS[class_set]) != b.classifier.out_dim:
        raise ConfigError(f"class set {class_set} has {len(CLASS_SETS[class_set])} classes, "
                          f"classifier has {b.classifier.out_dim}", key="class_set")
    res = b.metadata.get("input_resolution")
    if res is not None and b.encoder.in_dim != res * res * 3:
        raise ConfigError(f"encoder in_dim {b.encoder.in_dim} != {res}x{res}x3 input", key="input_resolution")
    for net, params in ((b.encoder, b.encoder_params), (b.classifier, b.classifier_params)):
        shapes = net.param_shapes()
        if set(shapes) != set(params):
            raise ConfigError(f"parameter names {sorted(params)} do not match network {sorted(shapes)}", key="params")
        for name, shape in shapes.items():
            if tuple(np.shape(params[name])) != shape:
                raise ConfigError(f"parameter {name} has shape {np.shape(params[name])}, expected {shape}", key=name)


def new_bundle(encoder: NetworkSpec, classifier: NetworkSpec, seed: int, head="raw", **metadata) -> ModelBundle:
    """Freshly initialized bundle; encoder and classifier draw from distinct seed streams."""
    return ModelBundle(
        encoder, init_network(encoder, seed), classifier, init_network(classifier, seed + 1_000_003),
        head=head, metadata=dict(metadata),
    )


def _manifest(bundle: ModelBundle):
    entries = []
    for prefix, params in (("encoder", bundle.encoder_params), ("classifier", bundle.classifier_params)):
        for name in sorted(params):
            arr = params[name]
            entries.append((f"{prefix}.{name}", np.asarray(arr)))
    return entries


def bundle_bytes(bundle: ModelBundle) -> bytes:
    validate_bundle(bundle)
    entries = _manifest(bundle)
    blobs = [np.ascontiguousarray(a, dtype="<f4").tobytes() for _, a in entries]
    meta = {
        "head": bundle.head,
        "encoder": bundle.encoder.to_dict(),
        "classifier": bundle.classifier.to_dict(),
        "metadata": bundle.metadata,
        "manifest": [
            {"name": n, "shape": list(a.shape), "nbytes": len(blob)} for (n, a), blob in zip(entries, blobs)
        ],
        "blob_bytes": sum(len(b) for b in blobs),
    }
    meta_raw = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    header = MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(meta_raw))
    return header + meta_raw + b"".join(blobs)


def save_bundle(bundle: ModelBundle, path) -> None:
    try:
        Path(path).write_bytes(bundle_bytes(bundle))
    except OSError as exc:
        raise IOFailure(f"cannot write bundle {path}: {exc}") from exc


def bundle_from_bytes(raw: bytes) -> ModelBundle:
    if raw[:4] != MAGIC:
        raise BadMagicError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < 16:
        raise TruncatedBlobError(f"header truncated: expected 16 bytes, got {len(raw)}", 16, len(raw))
    version, meta_len = struct.unpack("<IQ", raw[4:16])
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"bundle format version {version}, this reader supports {FORMAT_VERSION}")
    if len(raw) < 16 + meta_len:
        raise TruncatedBlobError(
            f"metadata truncated: expected {meta_len} bytes, got {len(raw) - 16}", meta_len, len(raw) - 16
        )
    try:
        meta = json.loads(raw[16:16 + meta_len].decode("utf-8"))
        encoder = NetworkSpec.from_dict(meta["encoder"])
        classifier = NetworkSpec.from_dict(meta["classifier"])
        manifest = meta["manifest"]
        declared = int(meta["blob_bytes"])
    except (ValueError, KeyError, TypeError, ConfigError) as exc:
        raise MetadataMismatchError(f"unreadable bundle metadata: {exc}") from None

    blob = raw[16 + meta_len:]
    if sum(int(e["nbytes"]) for e in manifest) != declared:
        raise MetadataMismatchError("manifest byte counts disagree with declared blob length")
    if len(blob) < declared:
        raise TruncatedBlobError(
            f"weight blob truncated: expected {declared} bytes, got {len(blob)}", declared, len(blob)
        )
    if len(blob) > declared:
        raise MetadataMismatchError(f"weight blob has {len(blob) - declared} bytes beyond the declared {declared}")

    expected = {f"encoder.{k}": v for k, v in encoder.param_shapes().items()}
    expected.update({f"classifier.{k}": v for k, v in classifier.param_shapes().items()})
    params, offset = {}, 0
    for e in manifest:
        name, shape, nbytes = e["name"], tuple(e["shape"]), int(e["nbytes"])
        if expected.get(name) != shape or nbytes != 4 * int(np.prod(shape)):
            raise MetadataMismatchError(f"manifest entry {name} {shape} ({nbytes} bytes) disagrees with layer specs")
        params[name] = np.frombuffer(blob, dtype="<f4", count=nbytes // 4, offset=offset).reshape(shape).astype(np.float32)
        offset += nbytes
    if set(params) != set(expected):
        raise MetadataMismatchError(f"manifest is missing parameters {sorted(set(expected) - set(params))}")
    enc = {k[len("encoder."):]: v for k, v in params.items() if k.startswith("encoder.")}
    cls = {k[len("classifier."):]: v for k, v in params.items() if k.startswith("classifier.")}
    try:
        return ModelBundle(encoder, enc, classifier, cls, head=meta["head"], metadata=meta.get("metadata", {}))
    except ConfigError as exc:
        raise MetadataMismatchError(f"bundle metadata inconsistent: {exc}") from None


def load_bundle(path) -> ModelBundle:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IOFailure(f"cannot read bundle {path}: {exc}") from exc
    return bundle_from_bytes(raw)


def fingerprint(bundle: ModelBundle) -> str:
    """SHA-256 over the full-precision parameters and the bundle description."""
    h = hashlib.sha256()
    desc = {
        "head": bundle.head,
        "encoder": bundle.encoder.to_dict(),
        "classifier": bundle.classifier.to_dict(),
        "metadata": bundle.metadata,
    }
    h.update(json.dumps(desc, sort_keys=True).encode())
    for name, arr in sorted(bundle.params().items()):
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()
