import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import face_bundle
from libreface_lab.bundle import (
    FORMAT_VERSION,
    MAGIC,
    bundle_bytes,
    bundle_from_bytes,
    fingerprint,
    load_bundle,
    new_bundle,
    save_bundle,
)
from libreface_lab.errors import (
    BadMagicError,
    ConfigError,
    IOFailure,
    MetadataMismatchError,
    TruncatedBlobError,
    VersionMismatchError,
)
from libreface_lab.tensor import Dense, NetworkSpec, mlp


def corrupt_metadata(raw: bytes, edit) -> bytes:
    (meta_len,) = struct.unpack("<Q", raw[8:16])
    meta = raw[16:16 + meta_len].decode()
    new = edit(meta).encode()
    return raw[:8] + struct.pack("<Q", len(new)) + new + raw[16 + meta_len:]


def test_round_trip_is_weight_exact(tmp_path):
    b = face_bundle(provenance="unit test")
    save_bundle(b, tmp_path / "m.lfmb")
    back = load_bundle(tmp_path / "m.lfmb")
    assert back.metadata == b.metadata
    assert back.head == b.head and back.encoder == b.encoder and back.classifier == b.classifier
    for k, v in b.params().items():
        np.testing.assert_array_equal(back.params()[k], v.astype(np.float32))


def test_header_layout():
    raw = bundle_bytes(face_bundle())
    assert raw[:4] == MAGIC
    assert struct.unpack("<I", raw[4:8])[0] == FORMAT_VERSION


def test_serialization_is_deterministic():
    assert bundle_bytes(face_bundle(seed=3)) == bundle_bytes(face_bundle(seed=3))


def test_bad_magic():
    raw = bundle_bytes(face_bundle())
    with pytest.raises(BadMagicError):
        bundle_from_bytes(b"XXXX" + raw[4:])


def test_version_mismatch():
    raw = bundle_bytes(face_bundle())
    with pytest.raises(VersionMismatchError):
        bundle_from_bytes(raw[:4] + struct.pack("<I", 99) + raw[8:])


def test_truncated_blob_reports_byte_counts():
    raw = bundle_bytes(face_bundle())
    with pytest.raises(TruncatedBlobError) as info:
        bundle_from_bytes(raw[:-10])
    assert info.value.actual == info.value.expected - 10


def test_metadata_shape_mismatch():
    raw = bundle_bytes(face_bundle())
    bad = corrupt_metadata(raw, lambda m: m.replace('"shape":[192,16]', '"shape":[16,192]'))
    with pytest.raises(MetadataMismatchError):
        bundle_from_bytes(bad)


def test_missing_file_is_io_failure(tmp_path):
    with pytest.raises(IOFailure):
        load_bundle(tmp_path / "absent.lfmb")


def test_head_width_is_validated():
    enc = mlp([4, 8])
    with pytest.raises(ConfigError):
        new_bundle(enc, NetworkSpec((Dense(8, 3),), role="classifier"), 0, head="au_intensity")


def test_feature_width_must_chain():
    with pytest.raises(ConfigError):
        new_bundle(mlp([4, 8]), NetworkSpec((Dense(6, 12),), role="classifier"), 0)


def test_fingerprint_tracks_parameters():
    b = face_bundle()
    h = fingerprint(b)
    assert fingerprint(b.copy()) == h
    flat = b.params()
    flat["classifier.0.bias"] = flat["classifier.0.bias"] + 1e-12
    assert fingerprint(b.with_params(flat)) != h


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 10_000))
def test_arbitrary_shapes_round_trip(d_in, d_hid, d_out, seed):
    b = new_bundle(mlp([d_in, d_hid]), NetworkSpec((Dense(d_hid, d_out),), role="classifier"), seed)
    back = bundle_from_bytes(bundle_bytes(b))
    assert bundle_bytes(back) == bundle_bytes(b)
