#!/usr/bin/env python3
"""
Tests for binary model checkpoints
"""

import json

import numpy as np
import pytest

from sphere_kge.checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint
from sphere_kge.exceptions import CheckpointSizeError, CheckpointVersionError, SphereKGEError
from sphere_kge.models import ModelKind, init_model


@pytest.mark.parametrize("kind", list(ModelKind))
def test_save_load_bitwise(tmp_path, kind):
    model = init_model(kind, 11, 3, 6, seed=9, radius=2.0, delta=1e-3)
    if model.spherization:
        model.spherization.scale = 1.25
    path = save_checkpoint(model, tmp_path / "model.ckpt")
    loaded = load_checkpoint(path)

    assert loaded.kind is kind
    assert loaded.dim == 6
    assert loaded.entity_latent.tobytes() == model.entity_latent.tobytes()
    assert loaded.relation_vecs.tobytes() == model.relation_vecs.tobytes()
    if kind.spherical:
        assert loaded.spherization == model.spherization
    else:
        assert loaded.spherization is None


def test_header_line(tmp_path):
    path = save_checkpoint(init_model("skge", 4, 2, 3), tmp_path / "model.ckpt")
    header = json.loads(path.read_bytes().split(b"\n", 1)[0])
    assert header["format_version"] == FORMAT_VERSION
    assert header["kind"] == "skge"
    assert (header["n_entities"], header["n_relations"], header["dim"]) == (4, 2, 3)
    assert header["radius"] == 1.0


def test_payload_is_little_endian_float32(tmp_path):
    model = init_model("transe", 4, 2, 3)
    path = save_checkpoint(model, tmp_path / "model.ckpt")
    payload = path.read_bytes().split(b"\n", 1)[1]
    values = np.frombuffer(payload, dtype="<f4")
    np.testing.assert_array_equal(values[:12], model.entity_latent.ravel())
    np.testing.assert_array_equal(values[12:], model.relation_vecs.ravel())


def test_truncated_payload(tmp_path):
    path = save_checkpoint(init_model("skge", 5, 2, 4), tmp_path / "model.ckpt")
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(CheckpointSizeError) as excinfo:
        load_checkpoint(path)
    assert excinfo.value.actual_bytes == excinfo.value.expected_bytes - 4


def test_wrong_version(tmp_path):
    path = save_checkpoint(init_model("skge", 5, 2, 4), tmp_path / "model.ckpt")
    header, payload = path.read_bytes().split(b"\n", 1)
    fields = json.loads(header)
    fields["format_version"] = 7
    path.write_bytes(json.dumps(fields).encode("utf-8") + b"\n" + payload)

    with pytest.raises(CheckpointVersionError) as excinfo:
        load_checkpoint(path)
    message = str(excinfo.value)
    assert "7" in message and str(FORMAT_VERSION) in message


def test_unreadable_header(tmp_path):
    path = tmp_path / "model.ckpt"
    path.write_bytes(b"not json\n\x00\x00")
    with pytest.raises(SphereKGEError):
        load_checkpoint(path)


def test_previous_checkpoint_is_kept(tmp_path):
    first = init_model("transe", 3, 1, 2, seed=1)
    second = init_model("transe", 3, 1, 2, seed=2)
    path = tmp_path / "model.ckpt"
    save_checkpoint(first, path)
    save_checkpoint(second, path)

    backup = load_checkpoint(tmp_path / "model.ckpt.bak")
    np.testing.assert_array_equal(backup.entity_latent, first.entity_latent)
    np.testing.assert_array_equal(load_checkpoint(path).entity_latent, second.entity_latent)
