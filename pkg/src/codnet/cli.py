"""Command-line entry point: ``codnet {train,eval,predict,ablate,synth,metrics}``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np
from PIL import Image

from codnet.data import IMAGE_EXTS, load_manifest, read_image, read_mask, save_sample, synth_samples
from codnet.metrics import evaluate_folder
from codnet.network import VARIANTS
from codnet.trainer import (
    DataSpec,
    TrainConfig,
    evaluate,
    load_checkpoint,
    load_config,
    predict as predict_map,
    run_ablation,
    seed_everything,
    train as train_model,
)

log = logging.getLogger("codnet")


class RuntimeFailure(click.ClickException):
    exit_code = 2


def _base_config(config_path, seed) -> TrainConfig:
    cfg = load_config(config_path) if config_path else TrainConfig()
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    return cfg


def common(f):
    f = click.option("--seed", type=int, default=None, help="Random seed (overrides the config file).")(f)
    f = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     default=None, help="YAML run config.")(f)
    return f


def to_u8(prob: np.ndarray) -> np.ndarray:
    return np.round(np.clip(prob, 0.0, 1.0) * 255.0).astype(np.uint8)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose):
    """Boundary-guided camouflaged object detection toolkit."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@common
@click.option("--variant", type=click.Choice(VARIANTS), default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--weight-decay", type=float, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--input-size", type=int, default=None)
@click.option("--data-root", type=click.Path(file_okay=False), default=None,
              help="Imgs/ + GT/ training tree; synthetic data is used when omitted.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None)
def train(config_path, seed, variant, epochs, lr, weight_decay, batch_size, input_size, data_root, out_dir):
    """Train a network and write checkpoints plus a JSON-lines log."""
    cfg = _base_config(config_path, seed)
    overrides = {k: v for k, v in dict(variant=variant, epochs=epochs, lr=lr, weight_decay=weight_decay,
                                        batch_size=batch_size, input_size=input_size, out_dir=out_dir).items()
                 if v is not None}
    if data_root:
        overrides["dataset"] = {"kind": "folder", "root": data_root}
    try:
        cfg = cfg.replace(**overrides)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    result = train_model(cfg)
    click.echo(json.dumps({"checkpoint": str(result.checkpoint), "best": str(result.best_checkpoint),
                           "final": result.log[-1]}))


@cli.command("eval")
@common
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--data-root", type=click.Path(exists=True, file_okay=False), default=None,
              help="Imgs/ + GT/ test tree; synthetic test data is generated when omitted.")
@click.option("--count", type=int, default=32, show_default=True, help="Synthetic test samples.")
@click.option("--out", type=click.Path(), required=True, help="Report path stem (.csv and .json are written).")
def eval_cmd(config_path, seed, checkpoint, data_root, count, out):
    """Score sigmoid(M1) of a checkpoint against ground truth."""
    cfg = _base_config(config_path, seed)
    if data_root:
        data = load_manifest(data_root, "test")
        name = Path(data_root).name
    else:
        spec = cfg.dataset
        data = synth_samples(count, spec.size, spec.difficulty, seed=cfg.seed + 10_000)
        name = "synthetic"
    report = evaluate(checkpoint, data, dataset_name=name)
    report.save(out)
    click.echo(json.dumps(report.summary()))


def _list_inputs(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    return sorted((p for p in path.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_EXTS),
                  key=lambda p: p.name.encode())


def _overlay(image: np.ndarray, prob: np.ndarray, gt: np.ndarray | None) -> Image.Image:
    rgb = to_u8(image.transpose(1, 2, 0))
    panels = [rgb, np.repeat(to_u8(prob)[..., None], 3, axis=2)]
    if gt is not None:
        panels.append(np.repeat(to_u8(gt)[..., None], 3, axis=2))
    return Image.fromarray(np.concatenate(panels, axis=1))


@cli.command()
@common
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--input", "input_path", type=click.Path(exists=True), required=True, help="Image file or directory.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--save-edges", is_flag=True, help="Also write the refined edge map as <stem>_edge.png.")
@click.option("--overlay", is_flag=True, help="Also write <stem>_overlay.png: input | prediction [| GT].")
@click.option("--gt", "gt_dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Ground-truth directory used for the overlay's third panel.")
def predict(config_path, seed, checkpoint, input_path, out_dir, save_edges, overlay, gt_dir):
    """Write 8-bit prediction maps at each input's native resolution."""
    if seed is not None:
        seed_everything(seed)
    inputs = _list_inputs(Path(input_path))
    if not inputs:
        raise RuntimeFailure("no inputs")
    model, state = load_checkpoint(checkpoint)
    input_size = state["config"]["input_size"]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    for path in inputs:
        try:
            image = read_image(path)
        except Exception as exc:
            click.echo(f"skipping {path}: {exc}", err=True)
            continue
        prob, edge = predict_map(model, image, input_size, with_edges=True)
        Image.fromarray(to_u8(prob)).save(out / f"{path.stem}.png")
        if save_edges:
            if edge is None:
                edge = np.zeros_like(prob)
            Image.fromarray(to_u8(edge)).save(out / f"{path.stem}_edge.png")
        if overlay:
            gt = None
            if gt_dir and (Path(gt_dir) / f"{path.stem}.png").exists():
                gt = read_mask(Path(gt_dir) / f"{path.stem}.png")
                if gt.shape != prob.shape:
                    gt = None
            _overlay(image, prob, gt).save(out / f"{path.stem}_overlay.png")
        written += 1
    if written == 0:
        raise RuntimeFailure("all inputs failed to decode")
    click.echo(f"wrote {written} predictions to {out}")


@cli.command()
@common
@click.option("--variants", default=",".join(VARIANTS), show_default=True, help="Comma-separated variant names.")
@click.option("--test-count", type=int, default=128, show_default=True, help="Held-out synthetic samples.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="CSV table path.")
def ablate(config_path, seed, variants, test_count, out):
    """Train every requested variant on shared data and tabulate held-out metrics."""
    cfg = _base_config(config_path, seed)
    names = [v.strip() for v in variants.split(",") if v.strip()]
    bad = [v for v in names if v not in VARIANTS]
    if bad:
        raise click.UsageError(f"unknown variants: {bad}")
    spec = cfg.dataset
    if spec.kind == "synthetic":
        test = synth_samples(test_count, spec.size, spec.difficulty, seed=spec.seed + 10_000)
    else:
        test = load_manifest(spec.root, "test")
    result = run_ablation(cfg, names, test_data=test, out_csv=out)
    click.echo(Path(out).read_text())
    if result.failures and len(result.failures) == len(names):
        raise RuntimeFailure("every variant failed")


@cli.command()
@common
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--count", type=int, default=None, help="Number of samples.")
@click.option("--size", type=int, default=None, help="Image side, divisible by 32.")
@click.option("--difficulty", type=float, default=None, help="0 (easy) .. 1 (hard).")
def synth(config_path, seed, out_dir, count, size, difficulty):
    """Materialize synthetic camouflage scenes as Imgs/, GT/ and Edge/."""
    spec = load_config(config_path).dataset if config_path else DataSpec()
    count = spec.count if count is None else count
    size = spec.size if size is None else size
    difficulty = spec.difficulty if difficulty is None else difficulty
    seed = spec.seed if seed is None else seed
    if size % 32:
        raise click.UsageError(f"--size must be divisible by 32, got {size}")
    if not 0 <= difficulty <= 1:
        raise click.UsageError("--difficulty must lie in [0, 1]")
    if count <= 0:
        raise click.UsageError("--count must be positive")
    for sample in synth_samples(count, size, difficulty, seed=seed):
        save_sample(sample, out_dir)
    click.echo(f"wrote {count} samples to {out_dir}")


@cli.command()
@common
@click.option("--pred", "pred_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--gt", "gt_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(), required=True, help="Report path stem (.csv and .json are written).")
@click.option("--e-mode", type=click.Choice(["adaptive", "mean"]), default="adaptive", show_default=True)
def metrics(config_path, seed, pred_dir, gt_dir, out, e_mode):
    """Score a folder of prediction maps against a folder of masks."""
    report = evaluate_folder(pred_dir, gt_dir, e_mode=e_mode)
    report.save(out)
    click.echo(json.dumps(report.summary()))


def main(argv=None) -> int:
    try:
        rv = cli.main(args=argv, prog_name="codnet", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except Exception as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return 2
    return rv if isinstance(rv, int) else 0


if __name__ == "__main__":
    sys.exit(main())
