#!/usr/bin/env python3
"""Walkthrough: compress the difference between two checkpoints and rebuild
the fine-tuned model from the base plus the archive.

We fabricate a small "model" whose fine-tune touched only two layers with
low-rank updates, which is the structure this compressor exploits.
"""

import tempfile
from pathlib import Path

import numpy as np

from dsvd import (
    Checkpoint,
    Dtype,
    TensorRecord,
    compress_checkpoint,
    compression_report,
    load_archive,
    read_checkpoint,
    reconstruct_checkpoint,
    save_archive,
    write_checkpoint,
)

rng = np.random.default_rng(0)


def record(name, values):
    values = np.asarray(values, dtype=np.float32)
    return TensorRecord(name=name, dtype=Dtype.F32, shape=values.shape, data=values)


# a base model: two weight matrices and a bias
base = Checkpoint.from_records(
    [
        record("encoder.weight", rng.standard_normal((96, 64))),
        record("decoder.weight", rng.standard_normal((64, 96))),
        record("decoder.bias", rng.standard_normal(96)),
    ]
)

# the "fine-tune" nudged both weight matrices along a rank-2 direction and
# left the bias alone
def rank2_bump(d, k, scale=4.0):
    u = rng.standard_normal((d, 2))
    v = rng.standard_normal((2, k))
    return scale * (u @ v) / np.sqrt(d * k)


ft = Checkpoint.from_records(
    [
        record(
            "encoder.weight",
            np.asarray(base["encoder.weight"].data, dtype=float) + rank2_bump(96, 64),
        ),
        record(
            "decoder.weight",
            np.asarray(base["decoder.weight"].data, dtype=float) + rank2_bump(64, 96),
        ),
        record("decoder.bias", np.asarray(base["decoder.bias"].data)),
    ]
)

workdir = Path(tempfile.mkdtemp(prefix="dsvd-demo-"))
write_checkpoint(base, workdir / "base.safetensors")
write_checkpoint(ft, workdir / "finetuned.safetensors")

# compress at a high energy threshold: the rank-2 structure is recovered
archive = compress_checkpoint(base, ft, tau=0.999)
save_archive(archive, workdir / "delta.dsvd")

report = compression_report(archive)
print("per-layer outcome:")
for entry in report["per_layer"]:
    print(f"  {entry['layer']:<18} kind={entry['kind']:<9} rank={entry['rank']}")
print(f"dense delta params : {report['dense_param_count']}")
print(f"stored params      : {report['stored_param_count']}")
print(f"compression ratio  : {report['ratio']:.1f}x")

# rebuild from base + archive and measure the worst per-layer error
restored = reconstruct_checkpoint(
    read_checkpoint(workdir / "base.safetensors"),
    load_archive(workdir / "delta.dsvd"),
)
worst = 0.0
for name in ft.names():
    want = np.asarray(ft[name].data, dtype=float)
    got = np.asarray(restored[name].data, dtype=float)
    err = np.linalg.norm(got - want) / max(np.linalg.norm(want), 1e-300)
    worst = max(worst, err)
print(f"worst relative reconstruction error: {worst:.2e}")
print(f"artifacts left in {workdir}")
