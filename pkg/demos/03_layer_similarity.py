#!/usr/bin/env python3
"""Which layers did a fine-tune actually touch?

The per-layer cosine similarity between base and fine-tuned weights makes
sparse updates visible: untouched layers sit at exactly 1.0, modified layers
fall away from it.
"""

import numpy as np

from dsvd import Checkpoint, Dtype, TensorRecord, layer_similarity_report

rng = np.random.default_rng(21)


def record(name, values):
    values = np.asarray(values, dtype=np.float32)
    return TensorRecord(name=name, dtype=Dtype.F32, shape=values.shape, data=values)


names = [f"block.{i:02d}.weight" for i in range(16)]
base_arrays = {name: rng.standard_normal((48, 32)) for name in names}

# fine-tuning only touched four layers, with different strengths
touched = {"block.03.weight": 0.2, "block.07.weight": 0.8, "block.08.weight": 2.0,
           "block.12.weight": 5.0}
ft_arrays = {}
for name, arr in base_arrays.items():
    if name in touched:
        ft_arrays[name] = arr + rng.standard_normal(arr.shape) * touched[name]
    else:
        ft_arrays[name] = arr

base = Checkpoint.from_records([record(n, a) for n, a in base_arrays.items()])
ft = Checkpoint.from_records([record(n, a) for n, a in ft_arrays.items()])

report = layer_similarity_report(base, ft)
print("cosine similarity per layer (* marks layers the fine-tune touched):")
for name, cosine in report.entries:
    marker = " *" if name in touched else ""
    bar = "#" * int(max(cosine, 0.0) * 40)
    print(f"  {name:<16} {cosine:+.6f} {bar}{marker}")
print(f"\nfraction of layers effectively unchanged: {report.summary:.2f}")
