import itertools
import json
import struct

import numpy as np
import pytest

import diffseg

MAGIC = b"ATTN4D\x00\x01"


def quadrants(side):
    labels = np.zeros((side, side), dtype=np.int32)
    h = side // 2
    labels[:h, h:] = 1
    labels[h:, :h] = 2
    labels[h:, h:] = 3
    return labels


def block_attention(labels, w):
    """Each location attends uniformly to the cells of its own segment."""
    cell = labels.shape[0] // w
    coarse = labels[::cell, ::cell]
    out = np.zeros((w, w, w, w), dtype=np.float32)
    for i, j in itertools.product(range(w), range(w)):
        same = coarse == coarse[i, j]
        out[i, j] = same / same.sum()
    return out


def write_stack_numpy(path, layers, image_size, time_step=300, source_id="np"):
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    for n, layer in enumerate(layers):
        name = f"layer_{n:02d}.bin"
        w = layer.shape[0]
        with open(path / name, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", w))
            f.write(np.ascontiguousarray(layer, dtype="<f4").tobytes())
        entries.append({"resolution": w, "file": name})
    manifest = {
        "format_version": 1,
        "image_height": image_size,
        "image_width": image_size,
        "time_step": time_step,
        "source_id": source_id,
        "layers": entries,
    }
    (path / "manifest.json").write_text(json.dumps(manifest))


def test_reads_a_stack_written_without_the_library(tmp_path):
    labels = quadrants(8)
    layers = [block_attention(labels, 8), block_attention(labels, 4)]
    write_stack_numpy(tmp_path / "s", layers, 64)
    stack = diffseg.read_stack(str(tmp_path / "s"))
    assert stack.resolutions == [8, 4]
    assert stack.image_height == 64
    assert stack.source_id == "np"
    for got, want in zip(stack.layers, layers):
        assert np.array_equal(got, want)
    assert diffseg.validate_stack(stack) == []


def test_write_stack_matches_the_numpy_writer(tmp_path):
    labels = quadrants(8)
    layers = [block_attention(labels, 8)]
    write_stack_numpy(tmp_path / "a", layers, 64)
    diffseg.write_stack(diffseg.read_stack(str(tmp_path / "a")), str(tmp_path / "b"))
    assert (tmp_path / "a" / "layer_00.bin").read_bytes() == (tmp_path / "b" / "layer_00.bin").read_bytes()


def test_corrupt_layer_is_rejected(tmp_path):
    write_stack_numpy(tmp_path / "s", [block_attention(quadrants(4), 4)], 32)
    blob = bytearray((tmp_path / "s" / "layer_00.bin").read_bytes())
    blob[0] = ord("X")
    (tmp_path / "s" / "layer_00.bin").write_bytes(bytes(blob))
    with pytest.raises(ValueError):
        diffseg.read_stack(str(tmp_path / "s"))


def test_segment_recovers_quadrants():
    labels = quadrants(8)
    stack = diffseg.AttentionStack([block_attention(labels, 8)], 64, 64)
    out = diffseg.segment(stack, anchors=8, tau=0.5, out_h=8, out_w=8)
    assert out["num_labels"] == 4
    score = diffseg.evaluate(out["labels"], labels)
    assert score["miou"] == 1.0
    assert score["acc"] == 1.0


def test_kl_distance_is_half_the_symmetric_divergence():
    p = np.array([0.5, 0.5])
    q = np.array([0.25, 0.75])
    want = 0.5 * (np.sum(p * np.log(p / q)) + np.sum(q * np.log(q / p)))
    assert diffseg.kl_distance(p, q) == pytest.approx(want, abs=1e-14)


def test_synthetic_stack_and_merging():
    labels = quadrants(16)
    stack, gt = diffseg.generate_stack(labels, [16, 8], epsilon=0.05, seed=3)
    assert stack.resolutions == [16, 8]
    tau = 0.5 * diffseg.min_cross_distance(labels, [16, 8], epsilon=0.05)
    field = diffseg.aggregate(stack)
    assert field.shape == (16, 16, 16, 16)
    assert np.allclose(field.sum(axis=(2, 3)), 1.0)
    proposals, counts = diffseg.run_merging(field, anchors=8, tau=tau)
    assert counts[0] == 64
    assert proposals.shape[0] == 4
    mask = diffseg.nms_assign(proposals, 16, 16)
    assert diffseg.evaluate(mask, gt)["miou"] == 1.0


def test_hungarian_maximises_matched_pixels():
    counts = np.array([[10, 9, 0], [9, 0, 0], [0, 0, 1]])
    assignment = diffseg.hungarian_match(counts)
    best = max(itertools.permutations(range(3)), key=lambda p: sum(counts[i, p[i]] for i in range(3)))
    assert list(assignment) == list(best)


def test_kmeans_on_a_separable_field():
    labels = quadrants(8)
    stack = diffseg.AttentionStack([block_attention(labels, 8)], 64, 64)
    mask = diffseg.kmeans_segment(diffseg.aggregate(stack), k=4, seed=1, restarts=2)
    assert mask.shape == (8, 8)
    assert diffseg.evaluate(mask, labels)["miou"] == 1.0


def test_invalid_arguments_raise_value_error():
    with pytest.raises(ValueError):
        diffseg.AttentionStack([np.zeros((2, 2, 2), dtype=np.float32)], 16, 16)
    with pytest.raises(ValueError):
        diffseg.kl_distance(np.ones(2) / 2, np.ones(3) / 3)
