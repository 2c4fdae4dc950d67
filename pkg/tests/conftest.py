import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from dsvd.tensor_store import Checkpoint, Dtype, TensorRecord

from oracles import known_rank_perturbation

SRC_DIR = str(Path(__file__).resolve().parent.parent / "src")


def run_cli(*args, env_extra=None):
    """Invoke the CLI in a fresh interpreter process."""
    env = dict(os.environ)
    env["PYTHONPATH"] = SRC_DIR + os.pathsep + env.get("PYTHONPATH", "")
    env.update(env_extra or {})
    return subprocess.run(
        [sys.executable, "-m", "dsvd", *map(str, args)],
        capture_output=True,
        text=True,
        env=env,
    )


def stdout_json(proc):
    assert proc.stdout.strip(), f"no stdout; stderr: {proc.stderr}"
    return json.loads(proc.stdout)


def make_checkpoint(arrays, dtype=Dtype.F32, metadata=None):
    """Checkpoint from {name: float array}, stored at the given dtype."""
    records = [
        TensorRecord(
            name=name,
            dtype=dtype,
            shape=np.asarray(values).shape,
            data=np.asarray(values, dtype=dtype.numpy_dtype),
        )
        for name, values in arrays.items()
    ]
    return Checkpoint.from_records(records, metadata=metadata or {})


def checkpoints_equal(a: Checkpoint, b: Checkpoint) -> bool:
    """Field-for-field equality including raw payload bytes."""
    if a.names() != b.names() or a.metadata != b.metadata:
        return False
    for name in a.names():
        ra, rb = a[name], b[name]
        if ra.dtype != rb.dtype or ra.shape != rb.shape:
            return False
        if ra.to_bytes() != rb.to_bytes():
            return False
    return True


def matricized(arr):
    """The (d, k) flattening used for >1-D tensors."""
    a = np.asarray(arr, dtype=float)
    if a.ndim == 1:
        return a.reshape(-1, 1)
    return a.reshape(a.shape[0], -1)


LOW_RANK_SIGMAS = [1.0, 0.9, 0.8, 0.7]


def build_low_rank_pair(seed=7, rank=4, scale=20.0):
    """12-layer base plus a fine-tune where every >=2-D layer got a
    perturbation with exactly `rank` known singular values.

    Shapes mix [64, 48] matrices, [8, 4, 3, 3] conv kernels and [77] biases;
    bias layers are left untouched. Returns (base, finetuned, perturbed_names).
    """
    rng = np.random.default_rng(seed)
    shapes = {}
    for i in range(4):
        shapes[f"down_blocks.{i}.attn.weight"] = (64, 48)
    for i in range(4):
        shapes[f"mid_block.resnets.{i}.conv.weight"] = (8, 4, 3, 3)
    for i in range(4):
        shapes[f"up_blocks.{i}.attn.bias"] = (77,)

    base_arrays = {name: rng.standard_normal(shape) for name, shape in shapes.items()}
    sigmas = [s * scale for s in LOW_RANK_SIGMAS[:rank]]
    ft_arrays = {}
    perturbed = []
    for name, arr in base_arrays.items():
        if arr.ndim >= 2:
            flat = matricized(arr)
            bump = known_rank_perturbation(rng, flat.shape[0], flat.shape[1], sigmas)
            ft_arrays[name] = (flat + bump).reshape(arr.shape)
            perturbed.append(name)
        else:
            ft_arrays[name] = arr
    return make_checkpoint(base_arrays), make_checkpoint(ft_arrays), sorted(perturbed)


def build_unet_shaped_pair(seed=11, rank=8):
    """~5M-parameter synthetic model with names from the five UNet layer
    groups, plus a fine-tune with known rank-`rank` perturbations on every
    weight tensor (biases untouched)."""
    rng = np.random.default_rng(seed)
    shapes = {"conv_in.weight": (320, 4, 3, 3), "conv_in.bias": (320,),
              "conv_out.weight": (4, 320, 3, 3), "conv_out.bias": (4,)}
    for i in range(7):
        shapes[f"down_blocks.{i}.attn.weight"] = (512, 512)
    for i in range(6):
        shapes[f"mid_block.attentions.{i}.weight"] = (512, 512)
    for i in range(7):
        shapes[f"up_blocks.{i}.attn.weight"] = (512, 512)

    sigmas = np.linspace(1.0, 0.65, rank) * 5.0
    base_arrays = {}
    ft_arrays = {}
    for name, shape in shapes.items():
        arr = rng.standard_normal(shape)
        base_arrays[name] = arr
        if len(shape) >= 2:
            flat = matricized(arr)
            bump = known_rank_perturbation(rng, flat.shape[0], flat.shape[1], sigmas)
            ft_arrays[name] = (flat + bump).reshape(shape)
        else:
            ft_arrays[name] = arr
    return make_checkpoint(base_arrays), make_checkpoint(ft_arrays)


@pytest.fixture(scope="session")
def low_rank_pair():
    return build_low_rank_pair()


@pytest.fixture(scope="session")
def unet_shaped_pair():
    return build_unet_shaped_pair()
