"""Command-line surface tying the pipeline stages together.

Run configuration resolves in layers: the built-in desk profile, then an
optional YAML file, then ``--set dotted.path=value`` overrides, then the
first-class flags (``--seed``, ``--proportion``, ``--copy-mode``,
``--amr-mode``, ``--freeze-amr-encoder``, ...).  Later layers win.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Optional

import click
import yaml

from .copy_head import COPY_MODES, CopyConfig
from .data import SplitSpec, generate_synthetic, load_dataset, save_dataset
from .errors import ArgexError
from .metrics import ScoreReport
from .model import AMR_MODES, ModelConfig
from .parser_client import AMRCache, make_backend, precompute_corpus
from .prefix import AMREncoderSpec
from .prompts import load_ontology, save_ontology
from .training import (
    AMR_MODES_GRID,
    COPY_MODES_GRID,
    Checkpoint,
    RunConfig,
    ablate,
    desk_profile,
    evaluate,
    format_ablation,
    predict,
    train,
)


# --- config resolution ------------------------------------------------------


def _base_dict() -> dict:
    data = json.loads(json.dumps(dataclasses.asdict(desk_profile(vocab_size=0))))
    # keep sites symbolic so a later amr_mode override re-derives the default
    data["model"]["injection_sites"] = None
    return data


def _deep_merge(base: dict, extra: dict, path: str = "") -> None:
    for key, value in extra.items():
        if key not in base:
            raise click.BadParameter(f"unknown config field {path}{key!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            _deep_merge(base[key], value, f"{path}{key}.")
        else:
            base[key] = value


def _apply_set(data: dict, spec: str) -> None:
    path, sep, raw = spec.partition("=")
    if not sep:
        raise click.BadParameter(f"--set expects PATH=VALUE, got {spec!r}")
    node = data
    keys = path.strip().split(".")
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            raise click.BadParameter(f"unknown config field {path!r}")
        node = node[key]
    if keys[-1] not in node:
        raise click.BadParameter(f"unknown config field {path!r}")
    node[keys[-1]] = yaml.safe_load(raw)


def _config_from_dict(data: dict) -> RunConfig:
    model = dict(data["model"])
    sites = model.get("injection_sites")
    model["injection_sites"] = tuple(sites) if sites is not None else None
    try:
        return RunConfig(
            model=ModelConfig(**model),
            copy=CopyConfig(**data["copy"]),
            amr_spec=AMREncoderSpec(**data["amr_spec"]),
            prefix_len=data["prefix_len"],
            learning_rate=data["learning_rate"],
            epochs=data["epochs"],
            batch_size=data["batch_size"],
            seed=data["seed"],
            split=SplitSpec(**data["split"]),
            max_decode_len=data["max_decode_len"],
            clip_norm=data["clip_norm"],
            dataset_path=data.get("dataset_path"),
            ontology_path=data.get("ontology_path"),
            cache_dir=data.get("cache_dir"),
            output_dir=data.get("output_dir"),
        )
    except (TypeError, ValueError) as exc:
        raise click.BadParameter(str(exc)) from exc


def resolve_config(
    config_path: Optional[Path],
    overrides: tuple[str, ...],
    seed: Optional[int] = None,
    proportion: Optional[float] = None,
    copy_mode: Optional[str] = None,
    amr_mode: Optional[str] = None,
    freeze: Optional[bool] = None,
    epochs: Optional[int] = None,
    learning_rate: Optional[float] = None,
    batch_size: Optional[int] = None,
) -> RunConfig:
    data = _base_dict()
    if config_path is not None:
        loaded = yaml.safe_load(Path(config_path).read_text()) or {}
        if not isinstance(loaded, dict):
            raise click.BadParameter(f"{config_path} is not a mapping")
        _deep_merge(data, loaded)
    for spec in overrides:
        _apply_set(data, spec)
    if amr_mode is not None:
        data["model"]["amr_mode"] = amr_mode
        data["model"]["injection_sites"] = None
    if copy_mode is not None:
        data["copy"]["mode"] = copy_mode
    if freeze is not None:
        data["amr_spec"]["frozen"] = freeze
    if seed is not None:
        data["seed"] = seed
        data["split"]["seed"] = seed
    if proportion is not None:
        data["split"]["proportion"] = proportion
    if epochs is not None:
        data["epochs"] = epochs
    if learning_rate is not None:
        data["learning_rate"] = learning_rate
    if batch_size is not None:
        data["batch_size"] = batch_size
    if data["model"]["amr_mode"] == "encoding_concat":
        data["amr_spec"]["output_dim"] = data["model"]["d_model"]
    return _config_from_dict(data)


def config_options(f):
    opts = [
        click.option(
            "--config", "config_path",
            type=click.Path(exists=True, dir_okay=False, path_type=Path),
            default=None, help="YAML run configuration layered over the desk profile.",
        ),
        click.option(
            "--set", "overrides", multiple=True, metavar="PATH=VALUE",
            help="Override any config field by dotted path, "
                 "e.g. --set model.d_model=96.",
        ),
        click.option("--seed", type=int, default=None,
                     help="Seed for init, batching, and the data split."),
        click.option("--proportion", type=float, default=None,
                     help="Fraction of the training split to use, in (0, 1]."),
        click.option("--copy-mode", type=click.Choice(COPY_MODES), default=None),
        click.option("--amr-mode", type=click.Choice(AMR_MODES), default=None,
                     help="Graph conditioning mode; resets injection sites "
                          "to the mode's default."),
        click.option("--freeze-amr-encoder/--no-freeze-amr-encoder", "freeze",
                     default=None),
        click.option("--epochs", type=int, default=None),
        click.option("--learning-rate", type=float, default=None),
        click.option("--batch-size", type=int, default=None),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


# --- shared IO helpers ------------------------------------------------------


def _load_corpus(dataset: Path, ontology_path: Path, dev_dataset: Optional[Path],
                 dev_fraction: float):
    ontology = load_ontology(ontology_path)
    instances = load_dataset(dataset, ontology)
    if dev_dataset is not None:
        return instances, load_dataset(dev_dataset, ontology), ontology
    n_dev = int(round(dev_fraction * len(instances)))
    cut = len(instances) - n_dev
    return instances[:cut], instances[cut:], ontology


def _cache(cache_dir: Optional[Path]) -> Optional[AMRCache]:
    return AMRCache(cache_dir) if cache_dir is not None else None


def format_report(report: ScoreReport) -> str:
    lines = [
        f"gold {report.gold}  predicted {report.predicted}",
        f"{'':<6} {'P':>7} {'R':>7} {'F1':>7}",
    ]
    for name, (p, r, f1) in (("Arg-I", report.arg_i), ("Arg-C", report.arg_c)):
        lines.append(f"{name:<6} {p:>7.3f} {r:>7.3f} {f1:>7.3f}")
    return "\n".join(lines)


# --- commands ---------------------------------------------------------------


def friendly_errors(f):
    """Surface domain errors as clean one-line failures, not tracebacks."""

    import functools

    @functools.wraps(f)
    def wrapped(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ArgexError as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapped


@click.group()
def main():
    """Event argument extraction with graph-conditioned template generation."""


@main.command("gen-synthetic")
@click.option("--n", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--ontology-size", type=int, default=None,
              help="Number of event types to draw from (default: all).")
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path),
              required=True)
def gen_synthetic(n: int, seed: int, ontology_size: Optional[int], out_dir: Path):
    """Generate a synthetic corpus: dataset.jsonl plus ontology.json.

    Every instance embeds its own graph, so no parser or cache is needed
    downstream.
    """
    kwargs = {} if ontology_size is None else {"ontology_size": ontology_size}
    instances, ontology, _ = generate_synthetic(n, seed=seed, **kwargs)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_dataset(instances, out_dir / "dataset.jsonl")
    save_ontology(ontology, out_dir / "ontology.json")
    click.echo(f"wrote {len(instances)} instances and "
               f"{len(ontology)} event types to {out_dir}")


@main.command("parse-amr")
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False,
                                           path_type=Path), required=True)
@click.option("--cache-dir", type=click.Path(file_okay=False, path_type=Path),
              required=True)
@click.option("--backend", "backend_spec", default=None,
              help="Parser backend descriptor: inline JSON or a YAML file, "
                   'e.g. \'{"kind": "http", "url": "http://localhost:8000"}\'. '
                   "Omit to require embedded graphs.")
@friendly_errors
def parse_amr(dataset: Path, cache_dir: Path, backend_spec: Optional[str]):
    """Precompute the graph cache for every passage in a dataset."""
    backend = None
    if backend_spec is not None:
        if backend_spec.lstrip().startswith("{"):
            descriptor = json.loads(backend_spec)
        else:
            descriptor = yaml.safe_load(Path(backend_spec).read_text())
        backend = make_backend(descriptor)
    instances = load_dataset(dataset)
    cache = AMRCache(cache_dir)
    added = precompute_corpus(instances, cache, backend)
    click.echo(f"cached {added} new graphs ({len(cache.ids())} total) in {cache_dir}")


@main.command("train")
@config_options
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False,
                                           path_type=Path), required=True)
@click.option("--dev-dataset", type=click.Path(exists=True, dir_okay=False,
                                               path_type=Path), default=None)
@click.option("--dev-fraction", type=float, default=0.2, show_default=True,
              help="Without --dev-dataset, hold out this trailing fraction.")
@click.option("--ontology", "ontology_path",
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True)
@click.option("--cache-dir", type=click.Path(file_okay=False, path_type=Path),
              default=None)
@click.option("--output", "-o", type=click.Path(dir_okay=False, path_type=Path),
              default=Path("checkpoint.pt"), show_default=True)
@friendly_errors
def train_cmd(config_path, overrides, seed, proportion, copy_mode, amr_mode,
              freeze, epochs, learning_rate, batch_size, dataset, dev_dataset,
              dev_fraction, ontology_path, cache_dir, output):
    """Train a model and save the best-dev checkpoint."""
    config = resolve_config(config_path, overrides, seed, proportion, copy_mode,
                            amr_mode, freeze, epochs, learning_rate, batch_size)
    config = dataclasses.replace(
        config,
        dataset_path=str(dataset),
        ontology_path=str(ontology_path),
        cache_dir=str(cache_dir) if cache_dir else None,
        output_dir=str(output.parent),
    )
    tr, dev, ontology = _load_corpus(dataset, ontology_path, dev_dataset,
                                     dev_fraction)
    result = train(config, tr, dev, ontology, cache=_cache(cache_dir))
    if output.parent != Path(""):
        output.parent.mkdir(parents=True, exist_ok=True)
    result.checkpoint.save(output)
    click.echo(f"trained {config.epochs} epochs on {len(tr)} instances "
               f"({len(dev)} dev) in {result.seconds:.1f}s")
    if result.loss_history:
        click.echo(f"train loss {result.loss_history[0]:.3f} -> "
                   f"{result.loss_history[-1]:.3f}")
    click.echo(f"best dev Arg-C F1 {result.checkpoint.best_dev_arg_c:.3f} "
               f"at epoch {result.checkpoint.epoch}")
    click.echo(f"saved checkpoint to {output}")


@main.command("eval")
@click.option("--checkpoint", "checkpoint_path",
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True)
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False,
                                           path_type=Path), required=True)
@click.option("--ontology", "ontology_path",
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True)
@click.option("--cache-dir", type=click.Path(file_okay=False, path_type=Path),
              default=None)
@friendly_errors
def eval_cmd(checkpoint_path, dataset, ontology_path, cache_dir):
    """Score a checkpoint on a dataset."""
    ontology = load_ontology(ontology_path)
    instances = load_dataset(dataset, ontology)
    checkpoint = Checkpoint.load(checkpoint_path)
    report = evaluate(checkpoint, instances, ontology, cache=_cache(cache_dir))
    click.echo(format_report(report))


@main.command("predict")
@click.option("--checkpoint", "checkpoint_path",
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True)
@click.option("--passage", required=True, help="Whitespace-tokenized text.")
@click.option("--trigger", required=True)
@click.option("--event-type", required=True)
@click.option("--ontology", "ontology_path",
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True)
@click.option("--amr-file", type=click.Path(exists=True, dir_okay=False,
                                            path_type=Path), default=None,
              help="Penman graph for the passage (graph-conditioned modes).")
@click.option("--cache-dir", type=click.Path(file_okay=False, path_type=Path),
              default=None)
@friendly_errors
def predict_cmd(checkpoint_path, passage, trigger, event_type, ontology_path,
                amr_file, cache_dir):
    """Extract arguments for one trigger in one passage."""
    ontology = load_ontology(ontology_path)
    checkpoint = Checkpoint.load(checkpoint_path)
    amr = amr_file.read_text() if amr_file else None
    assignment, text = predict(checkpoint, passage, trigger, event_type,
                               ontology, amr=amr, cache=_cache(cache_dir))
    click.echo(f"generated: {text!r}")
    if assignment.degraded:
        click.echo("note: output did not fully match the template "
                   "(or the trigger was not found)")
    for role, fillers in assignment.fillers.items():
        click.echo(f"{role}: {' and '.join(fillers) if fillers else '-'}")


@main.command("ablate")
@config_options
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False,
                                           path_type=Path), required=True)
@click.option("--dev-dataset", type=click.Path(exists=True, dir_okay=False,
                                               path_type=Path), default=None)
@click.option("--dev-fraction", type=float, default=0.2, show_default=True)
@click.option("--ontology", "ontology_path",
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True)
@click.option("--cache-dir", type=click.Path(file_okay=False, path_type=Path),
              default=None)
@click.option("--seeds", default="0", show_default=True,
              help="Comma-separated seeds; results report mean and std.")
@click.option("--amr-modes", default=",".join(AMR_MODES_GRID), show_default=True)
@click.option("--copy-modes", default=",".join(COPY_MODES_GRID), show_default=True)
@click.option("--frozen", type=click.Choice(["false", "true", "both"]),
              default="both", show_default=True,
              help="Graph-encoder freezing arms to sweep.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path),
              default=None, help="Also write the table to this file.")
@friendly_errors
def ablate_cmd(config_path, overrides, seed, proportion, copy_mode, amr_mode,
               freeze, epochs, learning_rate, batch_size, dataset, dev_dataset,
               dev_fraction, ontology_path, cache_dir, seeds, amr_modes,
               copy_modes, frozen, out):
    """Sweep amr-mode x copy-mode x frozen grids and print one table.

    The first-class mode flags still work here: they narrow the base config
    the sweep starts from, while --amr-modes/--copy-modes pick the grid.
    """
    config = resolve_config(config_path, overrides, seed, proportion, copy_mode,
                            amr_mode, freeze, epochs, learning_rate, batch_size)
    tr, dev, ontology = _load_corpus(dataset, ontology_path, dev_dataset,
                                     dev_fraction)
    seed_list = tuple(int(s) for s in seeds.split(",") if s.strip())
    amr_list = tuple(m.strip() for m in amr_modes.split(",") if m.strip())
    copy_list = tuple(m.strip() for m in copy_modes.split(",") if m.strip())
    for mode in amr_list:
        if mode not in AMR_MODES_GRID:
            raise click.BadParameter(f"unknown amr mode {mode!r}")
    for mode in copy_list:
        if mode not in COPY_MODES_GRID:
            raise click.BadParameter(f"unknown copy mode {mode!r}")
    frozen_options = {"false": (False,), "true": (True,),
                      "both": (False, True)}[frozen]
    rows = ablate(config, tr, dev, ontology, seeds=seed_list,
                  amr_modes=amr_list, copy_modes=copy_list,
                  frozen_options=frozen_options, cache=_cache(cache_dir))
    table = format_ablation(rows)
    click.echo(table)
    if out is not None:
        out.write_text(table + "\n")
        click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
