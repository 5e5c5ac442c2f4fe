"""
Command line entry point.

    medpatch split   --data m.csv --config c.yaml --output out/
    medpatch train   --data m.csv --config c.yaml --output out/ [--parallel N]
    medpatch infer   --data m.csv --config c.yaml --output out/
    medpatch preview --data m.csv --config c.yaml --output out/
    medpatch synth   --kind ellipses --output data/ --count 200
    medpatch mine    --data slide.ppm --output out/

Exit codes: 0 success, 1 a stage failed (named in the log), 2 usage error.
"""

import logging
import sys
from pathlib import Path
from typing import Optional

import click
import numpy as np

from medpatch import __version__
from medpatch.events import Dispatcher
from medpatch.logging import parse_level, setup_logging
from medpatch.result import Ok, Result
from medpatch.types import EventHandler

logger = logging.getLogger("medpatch.cli")

LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL', '10', '20', '30', '40', '50']


class _ProgressLog(EventHandler):
    def handle_event(self, event: dict) -> Result[None]:
        if event["name"] == "checkpoint":
            logger.debug("checkpoint %s: %s", event["data"]["kind"], event["data"]["path"])
        elif event["name"] == "epoch-end":
            logger.debug("epoch %s done in %.2fs", event["data"]["epoch"], event["data"]["seconds"])
        return Ok(None)


def _finish(stage: str, res: Result) -> None:
    """Exit 1 with the error tree when a stage failed."""
    if res:
        return
    logger.error("%s failed: %s", stage, res.error)
    logger.debug("error tree: %s", res.as_tree)
    sys.exit(1)


def _load_config(ctx: click.Context, config: Path, seed: Optional[int]):
    from medpatch.training.config import parse_config

    overrides = {"seed": seed} if seed is not None else None
    res = parse_config(config, ctx.obj["plugins_path"], overrides)
    _finish("configuration", res)
    return res.unwrapped


def _experiment_options(fn):
    options = [
        click.option('--data', '-d', required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path),
                     help='Subject manifest (CSV)'),
        click.option('--config', '-c', required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path),
                     help='Experiment configuration (YAML)'),
        click.option('--output', '-o', required=True, type=click.Path(file_okay=False, path_type=Path),
                     help='Output directory'),
        click.option('--device', type=click.Choice(['cpu']), default='cpu', show_default=True,
                     help='Compute device'),
        click.option('--seed', envvar='MEDPATCH_SEED', type=int, default=None,
                     help='Override the configuration seed'),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@click.group()
@click.version_option(__version__, prog_name="medpatch")
@click.option('--plugins-path',
              envvar='MEDPATCH_PLUGINS_PATH',
              type=str,
              default=None,
              help='Colon-separated list of directories holding plugin subdirectories with a main.py')
@click.option('--log-level', '-l',
              envvar='MEDPATCH_LOG_LEVEL',
              type=click.Choice(LOG_LEVELS),
              default='INFO',
              help='Log level (DEBUG=10, INFO=20, WARNING=30, ERROR=40, CRITICAL=50)')
@click.option('--log-file', '-f',
              envvar='MEDPATCH_LOG_FILE',
              type=str,
              default=None,
              help='Log file path (default: stderr)')
@click.pass_context
def main(ctx, plugins_path, log_level, log_file):
    """Patch-based CNN training and inference for medical images"""
    setup_logging(level=parse_level(log_level), log_file=log_file)
    ctx.ensure_object(dict)
    ctx.obj["plugins_path"] = plugins_path


@main.command()
@_experiment_options
@click.pass_context
def split(ctx, data, config, output, device, seed):
    """Write the nested cross-validation plan to split_plan.csv"""
    from medpatch.training.experiment import write_split_plan

    cfg = _load_config(ctx, config, seed)
    _finish("split", write_split_plan(data, cfg, output))


@main.command()
@_experiment_options
@click.option('--parallel', '-j', type=click.IntRange(min=1), default=1, show_default=True,
              help='Number of fold processes')
@click.pass_context
def train(ctx, data, config, output, device, seed, parallel):
    """Train every fold into OUTPUT/outer_<i>/inner_<j>/"""
    from medpatch.training.experiment import run_training

    cfg = _load_config(ctx, config, seed)
    res = Dispatcher.create()
    _finish("train", res)
    dispatcher = res.unwrapped
    dispatcher.register_event_handler("trainer", _ProgressLog())
    try:
        res = run_training(data, cfg, output, parallel, ctx.obj["plugins_path"], dispatcher)
    finally:
        dispatcher.dispose()
    _finish("train", res)
    for artifacts in res.unwrapped:
        logger.info("%s: best validation loss %.6f at epoch %d", artifacts.directory, artifacts.best_val_loss,
                    artifacts.best_epoch)


@main.command()
@_experiment_options
@click.option('--models', '-m', type=click.Path(exists=True, file_okay=False, path_type=Path), default=None,
              help='Directory with the trained folds (default: --output)')
@click.pass_context
def infer(ctx, data, config, output, device, seed, models):
    """Predict every subject with all trained folds; writes OUTPUT/predictions/"""
    from medpatch.inference.runner import run_inference

    cfg = _load_config(ctx, config, seed)
    res = run_inference(data, cfg, models or output, output, ctx.obj["plugins_path"])
    _finish("infer", res)
    logger.info("results in %s", res.unwrapped.results_path)


@main.command()
@_experiment_options
@click.option('--subject', '-s', type=str, default=None, help='Subject to preview (default: first in the manifest)')
@click.pass_context
def preview(ctx, data, config, output, device, seed, subject):
    """Apply the configured augmentations to one subject and render them"""
    from medpatch.preview import preview_augmentations

    cfg = _load_config(ctx, config, seed)
    _finish("preview", preview_augmentations(data, cfg, output, subject, ctx.obj["plugins_path"]))


def _extents(ctx, param, value: str):
    try:
        extents = tuple(int(v) for v in value.split(","))
    except ValueError:
        raise click.BadParameter("expected comma-separated integers, e.g. 64,64") from None
    if not extents or any(n < 1 for n in extents):
        raise click.BadParameter("extents must be positive")
    return extents


@main.command()
@click.option('--kind', '-k', type=click.Choice(['ellipses', 'regression', 'slide']), required=True,
              help='Dataset to generate')
@click.option('--output', '-o', required=True, type=click.Path(file_okay=False, path_type=Path),
              help='Output directory (images/, labels/, manifest.csv)')
@click.option('--count', '-n', type=click.IntRange(min=1), default=20, show_default=True, help='Number of subjects')
@click.option('--extents', '-e', type=str, default="64,64", show_default=True, callback=_extents,
              help='Image extents, comma-separated')
@click.option('--seed', envvar='MEDPATCH_SEED', type=int, default=0, show_default=True, help='Generator seed')
def synth(kind, output, count, extents, seed):
    """Generate a synthetic dataset with its manifest"""
    from medpatch.synthetic import make_dataset

    res = make_dataset(kind, output, count, extents, seed)
    _finish("synth", res)


@main.command()
@click.option('--data', '-d', required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help='RGB slide image (.ppm, .png or .mha)')
@click.option('--output', '-o', required=True, type=click.Path(file_okay=False, path_type=Path),
              help='Output directory')
@click.option('--levels', type=click.IntRange(min=1), default=4, show_default=True, help='Pyramid levels')
@click.option('--factor', type=click.IntRange(min=2), default=2, show_default=True, help='Downsample factor')
@click.option('--tile', type=click.IntRange(min=1), default=256, show_default=True, help='Tile size')
@click.option('--mask-level', type=click.IntRange(min=0), default=2, show_default=True,
              help='Pyramid level the tissue mask is computed at')
@click.option('--patch-size', type=click.IntRange(min=1), default=64, show_default=True, help='Patch size')
@click.option('--overlap', type=click.FloatRange(0.0, 1.0, max_open=True), default=0.0, show_default=True,
              help='Patch overlap fraction')
@click.option('--min-tissue', type=click.FloatRange(0.0, 1.0), default=0.5, show_default=True,
              help='Minimum tissue fraction of a kept patch')
def mine(data, output, levels, factor, tile, mask_level, patch_size, overlap, min_tissue):
    """Build a slide pyramid, its tissue mask and the mined patch coordinates"""
    from medpatch.histology import build_tiled_pyramid, mine_patches, tissue_mask, write_pyramid
    from medpatch.imaging.image import Image
    from medpatch.imaging.io import read_image, write_image

    res = read_image(data)
    _finish("mine", res)
    try:
        tiled = build_tiled_pyramid(res.unwrapped, levels, factor, tile)
        mask = tissue_mask(tiled, min(mask_level, len(tiled) - 1))
        coords = mine_patches(mask, patch_size, overlap, min_tissue)
    except Exception as e:
        _finish("mine", Result.error(f"slide pipeline failed on {data}", e))
        return
    _finish("mine", write_pyramid(tiled, output / data.stem))
    _finish("mine", write_image(Image(mask.mask[np.newaxis].astype(np.uint8), tiled.level(mask.level).geometry),
                                output / "tissue_mask.mha"))
    _finish("mine", coords.to_csv(output / "coordinates.csv"))
    logger.info("%d patches mined from %s", len(coords), data)


if __name__ == '__main__':
    main()
