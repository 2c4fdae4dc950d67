#!/usr/bin/env python3
"""Sweep the energy threshold and watch rank, storage and error trade off.

Lower thresholds keep fewer singular values per layer: storage shrinks while
reconstruction error grows. The sweep values mirror the canonical
{0.8, 0.5, 0.2, 0.06} operating points.
"""

import numpy as np

from dsvd import (
    Checkpoint,
    Dtype,
    TensorRecord,
    compress_checkpoint,
    compression_report,
    rank_table,
    reconstruct_checkpoint,
)

rng = np.random.default_rng(7)

SHAPES = {
    "conv_in.weight": (32, 4, 3, 3),
    "down_blocks.0.attn.weight": (128, 128),
    "down_blocks.1.attn.weight": (128, 128),
    "mid_block.attn.weight": (128, 128),
    "up_blocks.0.attn.weight": (128, 128),
    "conv_out.weight": (4, 32, 3, 3),
}


def record(name, values):
    values = np.asarray(values, dtype=np.float32)
    return TensorRecord(name=name, dtype=Dtype.F32, shape=values.shape, data=values)


def full_spectrum_bump(shape, decay=0.7):
    """Perturbation with geometrically decaying singular values, so different
    thresholds select visibly different ranks."""
    flat = (shape[0], int(np.prod(shape[1:]))) if len(shape) > 1 else (shape[0], 1)
    r = min(flat)
    u, _ = np.linalg.qr(rng.standard_normal((flat[0], r)))
    v, _ = np.linalg.qr(rng.standard_normal((flat[1], r)))
    sigma = decay ** np.arange(r) * 3.0
    return ((u * sigma) @ v.T).reshape(shape)


base = Checkpoint.from_records(
    [record(name, rng.standard_normal(shape)) for name, shape in SHAPES.items()]
)
ft = Checkpoint.from_records(
    [
        record(name, np.asarray(base[name].data, dtype=float) + full_spectrum_bump(shape))
        for name, shape in SHAPES.items()
    ]
)


def worst_error(restored):
    errs = []
    for name in ft.names():
        want = np.asarray(ft[name].data, dtype=float)
        got = np.asarray(restored[name].data, dtype=float)
        errs.append(np.linalg.norm(got - want) / np.linalg.norm(want))
    return max(errs)


print(f"{'tau':>5} | {'stored':>8} | {'ratio':>7} | {'max rel err':>11} | avg rank per group")
print("-" * 86)
for tau in [0.8, 0.5, 0.2, 0.06]:
    archive = compress_checkpoint(base, ft, tau)
    rep = compression_report(archive)
    groups = rank_table(archive)
    restored = reconstruct_checkpoint(base, archive, force=True)
    group_txt = ", ".join(f"{g}={r:.0f}" for g, r in groups.items())
    print(
        f"{tau:>5} | {rep['stored_param_count']:>8} | {rep['ratio']:>6.1f}x "
        f"| {worst_error(restored):>11.2e} | {group_txt}"
    )
