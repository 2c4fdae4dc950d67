"""Command-line surface.

Stdout carries exactly one JSON document per invocation; prose goes to
stderr. Exit codes: 0 success, 1 pipeline error, 2 usage error,
3 verification tolerance exceeded.
"""

from __future__ import annotations

import functools
import json
import sys

import click
import numpy as np

from .analysis import (
    LayerGroupSpec,
    compression_report,
    layer_similarity_report,
    rank_table,
)
from .archive import build_manifest, load_archive, save_archive
from .delta import (
    MismatchPolicy,
    compress_checkpoint,
    reconstruct_checkpoint,
)
from .errors import DsvdError, LayerSetMismatch, ShapeMismatch
from .tensor_store import fingerprint, read_checkpoint, write_checkpoint

EXIT_PIPELINE_ERROR = 1
EXIT_VERIFY_FAILED = 3


def _emit(doc) -> None:
    click.echo(json.dumps(doc, sort_keys=True))


def _pipeline_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DsvdError as exc:
            _emit({"error": {"code": exc.code, "message": str(exc)}})
            click.echo(f"error[{exc.code}]: {exc}", err=True)
            sys.exit(EXIT_PIPELINE_ERROR)
        except Exception as exc:  # noqa: BLE001 - report, never traceback-dump to stdout
            _emit({"error": {"code": "InternalError", "message": str(exc)}})
            click.echo(f"error[InternalError]: {exc}", err=True)
            sys.exit(EXIT_PIPELINE_ERROR)

    return wrapper


def _validate_tau(ctx, param, value):
    if not (0.0 < value <= 1.0):
        raise click.BadParameter("must be in (0, 1]", ctx=ctx, param=param)
    return value


_POLICIES = {"strict": MismatchPolicy.STRICT, "skip": MismatchPolicy.SKIP_MISMATCHED}


@click.group()
def main():
    """Compress and reconstruct fine-tuned checkpoint deltas."""


@main.command()
@click.option("--base", "base_path", required=True, help="Base checkpoint path.")
@click.option("--finetuned", "ft_path", required=True, help="Fine-tuned checkpoint path.")
@click.option("--tau", required=True, type=float, callback=_validate_tau,
              help="Energy threshold in (0, 1].")
@click.option("--out", "out_path", required=True, help="Output archive path (.dsvd).")
@click.option("--policy", type=click.Choice(["strict", "skip"]), default="strict",
              help="Handling of layer-set or dtype mismatches.")
@click.option("--energy-mode", type=click.Choice(["linear", "squared"]), default="linear",
              help="Cumulative energy in sigma (default) or sigma^2.")
@click.option("--threads", type=int, default=0, envvar="DSVD_THREADS", show_default=True,
              help="Layer-parallel worker cap; 0 = auto.")
@_pipeline_errors
def compress(base_path, ft_path, tau, out_path, policy, energy_mode, threads):
    """Compress the delta between two checkpoints into an archive."""
    base = read_checkpoint(base_path)
    ft = read_checkpoint(ft_path)
    archive = compress_checkpoint(
        base,
        ft,
        tau,
        _POLICIES[policy],
        squared=(energy_mode == "squared"),
        threads=threads,
    )
    save_archive(archive, out_path)
    report = compression_report(archive)
    if archive.stats.mismatch_warnings:
        click.echo(
            f"warning: {archive.stats.mismatch_warnings} mismatched layer(s) "
            "stored standalone or skipped",
            err=True,
        )
    _emit(report)


@main.command()
@click.option("--base", "base_path", required=True, help="Base checkpoint path.")
@click.option("--delta", "archive_path", required=True, help="Archive path (.dsvd).")
@click.option("--out", "out_path", required=True, help="Output checkpoint path.")
@click.option("--force", is_flag=True, help="Proceed on fingerprint mismatch.")
@_pipeline_errors
def reconstruct(base_path, archive_path, out_path, force):
    """Rebuild the fine-tuned checkpoint from base + archive."""
    base = read_checkpoint(base_path)
    archive = load_archive(archive_path)
    if force and fingerprint(base) != archive.base_fingerprint:
        click.echo(
            "warning: base fingerprint does not match the archive; --force given, "
            "reconstructing anyway",
            err=True,
        )
    restored = reconstruct_checkpoint(base, archive, force=force)
    write_checkpoint(restored, out_path)
    _emit({"out": str(out_path), "tensors": len(restored), "forced": bool(force)})


@main.command()
@click.option("--delta", "archive_path", required=True, help="Archive path (.dsvd).")
@click.option("--groups", "groups_path", default=None,
              help="JSON layer-group config; defaults to the five UNet groups.")
@_pipeline_errors
def inspect(archive_path, groups_path):
    """Summarize an archive: manifest, per-group ranks, size accounting."""
    archive = load_archive(archive_path)
    spec = LayerGroupSpec.from_json_file(groups_path) if groups_path else None
    manifest = build_manifest(archive)
    kinds: dict[str, int] = {}
    for entry in manifest["layer_index"].values():
        kinds[entry["kind"]] = kinds.get(entry["kind"], 0) + 1
    _emit(
        {
            "manifest": {
                "format_version": manifest["format_version"],
                "tau": manifest["tau"],
                "base_fingerprint": manifest["base_fingerprint"],
                "tool_version": manifest["tool_version"],
                "layer_count": len(manifest["layer_index"]),
                "kinds": kinds,
            },
            "rank_table": rank_table(archive, spec),
            "compression_report": compression_report(archive),
        }
    )


@main.command()
@click.option("--base", "base_path", required=True, help="Base checkpoint path.")
@click.option("--finetuned", "ft_path", required=True, help="Fine-tuned checkpoint path.")
@_pipeline_errors
def diff(base_path, ft_path):
    """Per-layer cosine similarity between two checkpoints."""
    base = read_checkpoint(base_path)
    ft = read_checkpoint(ft_path)
    _emit(layer_similarity_report(base, ft).to_dict())


@main.command()
@click.option("--base", "base_path", required=True, help="Base checkpoint path.")
@click.option("--finetuned", "ft_path", required=True, help="True fine-tuned checkpoint path.")
@click.option("--delta", "archive_path", required=True, help="Archive path (.dsvd).")
@click.option("--tol", type=float, default=1e-3, show_default=True,
              help="Maximum allowed per-layer relative Frobenius error.")
@_pipeline_errors
def verify(base_path, ft_path, archive_path, tol):
    """Reconstruct and report per-layer error against the true fine-tuned model."""
    base = read_checkpoint(base_path)
    ft = read_checkpoint(ft_path)
    archive = load_archive(archive_path)
    restored = reconstruct_checkpoint(base, archive)
    if set(restored.names()) != set(ft.names()):
        only_restored = sorted(set(restored.names()) - set(ft.names()))
        only_ft = sorted(set(ft.names()) - set(restored.names()))
        raise LayerSetMismatch(
            f"reconstruction and fine-tuned checkpoints disagree on layers "
            f"(reconstruction-only: {only_restored[:3]}, fine-tuned-only: {only_ft[:3]})"
        )
    per_layer: dict[str, float] = {}
    for name, ft_rec in ft.tensors.items():
        rec = restored[name]
        if rec.shape != ft_rec.shape:
            raise ShapeMismatch(
                f"layer {name!r}: reconstructed {rec.shape} vs fine-tuned {ft_rec.shape}"
            )
        diff_norm = float(
            np.linalg.norm(
                rec.data.astype(np.float64).ravel() - ft_rec.data.astype(np.float64).ravel()
            )
        )
        ref_norm = float(np.linalg.norm(ft_rec.data.astype(np.float64).ravel()))
        if ref_norm == 0.0:
            per_layer[name] = 0.0 if diff_norm == 0.0 else float("inf")
        else:
            per_layer[name] = diff_norm / ref_norm
    errors = list(per_layer.values())
    max_err = max(errors) if errors else 0.0
    mean_err = sum(errors) / len(errors) if errors else 0.0
    passed = max_err <= tol

    def encodable(value: float):
        # json must stay strict: no Infinity literals
        return value if np.isfinite(value) else "infinite"

    _emit(
        {
            "per_layer": {name: encodable(v) for name, v in per_layer.items()},
            "max": encodable(max_err),
            "mean": encodable(mean_err),
            "tol": tol,
            "pass": passed,
        }
    )
    if not passed:
        click.echo(f"verification failed: max error {max_err:g} > tol {tol:g}", err=True)
        sys.exit(EXIT_VERIFY_FAILED)


if __name__ == "__main__":
    main()
