# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# CLI Logic for structreward

import os
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

import typer
from rich.console import Console

from structreward.core.ablation import ABLATION_GROUPS, ablation_variants, run_ablation
from structreward.core.audit import AuditRecord, audit_metrics, derive_record, overlap_audit
from structreward.core.context import AppContext
from structreward.core.manifest import RunManifest
from structreward.core.matcher import build_object_map, match_events
from structreward.core.reward_engine import build_question_sets
from structreward.core.score import get_caption_files, load_caption, score_directory, score_files
from structreward.core.trainer import train as run_training
from structreward.errors import StructRewardError
from structreward.generators.question_gen import FACTUAL, TEMPORAL
from structreward.generators.world_sim import (
    corrupt as corrupt_caption,
    dump_world,
    load_world,
    render_reference,
    sample_world,
)
from structreward.models.caption_ir import serialize
from structreward.parsers.grammar_parser import parse_caption
from structreward.parsers.lexicon import load_lexicon
from structreward.utils.config import (
    get_reward_config,
    get_trainer_config,
    get_verifier_config,
    get_world_config,
    with_overrides,
)
from structreward.utils.format_converter import (
    read_jsonl,
    read_name_list,
    report_dumps,
    to_jsonl,
    write_json,
    write_text,
)
from structreward.utils.logging import setup_logging

# Initialize Typer app
app = typer.Typer(
    name="structreward",
    help="Structured-consistency rewards for captions: parse, score, verify, simulate and train",
    add_completion=True,
)
# stdout carries command output only
console = Console(stderr=True)

# Create app context
ctx = AppContext()


class LogLevel(str, Enum):
    error = "error"
    info = "info"
    debug = "debug"


class CorruptionKind(str, Enum):
    attribute_swap = "attribute_swap"
    relation_swap = "relation_swap"
    participant_swap = "participant_swap"
    order_invert = "order_invert"
    instance_collapse = "instance_collapse"


def _config_option() -> Any:
    return typer.Option(None, "--config", "-c", help="Configuration file for this command")


def _seed_option() -> Any:
    return typer.Option(None, "--seed", help="Seed (falls back to STRUCTREWARD_SEED, then the config)")


# Define global options
@app.callback()
def callback(
    config: Optional[Path] = typer.Option(
        None, "--config", "-c", help="Path to configuration file"
    ),
    log_level: LogLevel = typer.Option(
        LogLevel.error, "--log-level", help="JSON-lines log level on standard error"
    ),
):
    """
    Global options for the structreward CLI
    """
    global ctx
    ctx = AppContext(str(config) if config else None, log_level.value)
    setup_logging(log_level.value)


@contextmanager
def domain_errors() -> Iterator[None]:
    """Render domain and I/O failures as a typed message and exit 1"""
    try:
        yield
    except StructRewardError as e:
        console.print(f"❌ {e.name}: {e}", style="red")
        raise typer.Exit(code=1)
    except (OSError, ValueError) as e:
        console.print(f"❌ {type(e).__name__}: {e}", style="red")
        raise typer.Exit(code=1)


def _emit(text: str, output: Optional[Path]) -> None:
    if output is None:
        typer.echo(text, nl=False)
    else:
        write_text(text, str(output))


def _out(output: Optional[Path]) -> Optional[str]:
    return str(output) if output is not None else None


@app.command("parse")
def parse(
    text: Optional[str] = typer.Option(None, "--text", help="Caption text to parse"),
    input_path: Optional[Path] = typer.Option(
        None, "--in", exists=True, dir_okay=False, help="File holding the caption text"
    ),
    output: Optional[Path] = typer.Option(None, "--out", "-o", help="Where to write the IR JSON"),
    lexicon_path: Optional[Path] = typer.Option(
        None, "--lexicon", exists=True, dir_okay=False, help="Lexicon file (defaults to the configured one)"
    ),
    config: Optional[Path] = _config_option(),
):
    """
    Parse a caption into its structured IR.
    """
    if (text is None) == (input_path is None):
        raise typer.BadParameter("give exactly one of --text or --in")
    with domain_errors():
        ctx.use_config(_out(config))
        lexicon = load_lexicon(str(lexicon_path)) if lexicon_path else ctx.lexicon
        inputs = [str(input_path)] if input_path else []
        manifest = RunManifest.start("parse", ctx.config, None, inputs)
        manifest.write(_out(output))
        if input_path is not None:
            text = input_path.read_text(encoding="utf-8")
        caption = parse_caption(text, lexicon)
        _emit(serialize(caption).decode("utf-8") + "\n", output)
        manifest.finish(_out(output))
    if output:
        console.print(f"✅ Caption IR saved to {output}", style="green")


@app.command("score")
def score(
    gen: Path = typer.Option(..., "--gen", exists=True, help="Generated caption file or directory"),
    ref: Path = typer.Option(..., "--ref", exists=True, help="Reference caption file or directory"),
    verifier: Optional[str] = typer.Option(
        None, "--verifier", help="self | world:<file> | tcp:host:port | stdio:<command> | http(s)://..."
    ),
    output: Optional[Path] = typer.Option(None, "--out", "-o", help="Where to write the report"),
    jobs: int = typer.Option(1, "--jobs", "-j", min=1, help="Worker threads for directory pairs"),
    seed: Optional[int] = _seed_option(),
    config: Optional[Path] = _config_option(),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Show progress"),
):
    """
    Score generated captions against references.

    Files are scored as one pair; directories are paired by file stem.
    """
    if gen.is_dir() != ref.is_dir():
        raise typer.BadParameter("--gen and --ref must both be files or both be directories")
    with domain_errors():
        ctx.use_config(_out(config))
        run_seed = ctx.seed(seed)
        reward_config = with_overrides(get_reward_config(ctx.config), seed=run_seed)
        settings = get_verifier_config(ctx.config)
        binding = verifier or settings.binding
        manifest = RunManifest.start("score", ctx.config, run_seed, [str(gen), str(ref)])
        manifest.write(_out(output))

        if gen.is_dir():
            report = score_directory(
                str(gen), str(ref), reward_config, binding, settings, ctx.provider, ctx.lexicon, jobs, verbose
            )
        else:
            with console.status("Scoring caption pair..."):
                report = score_files(
                    str(gen), str(ref), reward_config, binding, settings, ctx.provider, ctx.lexicon
                ).to_dict()
        _emit(report_dumps(report), output)
        manifest.finish(_out(output))

    if gen.is_dir():
        console.print(
            f"Scored {report['successful']}/{report['total_pairs']} pairs, mean R = {report['mean_R']}",
            style="bold blue",
        )
        if report["failed"]:
            console.print(f"❌ {report['failed']} pairs failed", style="red")
            raise typer.Exit(code=1)
    elif verbose:
        console.print(f"R = {report['R']:.6f}", style="bold blue")
    if output:
        console.print(f"✅ Report saved to {output}", style="green")


@app.command("questions")
def questions(
    gen: Path = typer.Option(..., "--gen", exists=True, dir_okay=False, help="Generated caption file"),
    ref: Path = typer.Option(..., "--ref", exists=True, dir_okay=False, help="Reference caption file"),
    output: Optional[Path] = typer.Option(None, "--out", "-o", help="Where to write the question set"),
    budget: Optional[int] = typer.Option(None, "--budget", min=0, help="Per-branch question cap"),
    seed: Optional[int] = _seed_option(),
    config: Optional[Path] = _config_option(),
):
    """
    Build the factual and temporal verification questions for a caption pair.
    """
    with domain_errors():
        ctx.use_config(_out(config))
        run_seed = ctx.seed(seed)
        reward_config = with_overrides(get_reward_config(ctx.config), seed=run_seed, question_budget=budget)
        manifest = RunManifest.start("questions", ctx.config, run_seed, [str(gen), str(ref)])
        manifest.write(_out(output))
        gen_caption = load_caption(str(gen), ctx.lexicon)
        ref_caption = load_caption(str(ref), ctx.lexicon)
        object_map = build_object_map(
            gen_caption, ref_caption, ctx.provider, reward_config.min_weight, ctx.lexicon
        )
        event_matching = match_events(
            list(gen_caption.events), list(ref_caption.events), object_map, ctx.provider,
            reward_config.min_weight, ctx.lexicon,
        )
        sets = build_question_sets(
            gen_caption, ref_caption, object_map, event_matching, reward_config, ctx.lexicon
        )
        records = sets[FACTUAL].to_list() + sets[TEMPORAL].to_list()
        _emit(report_dumps(records), output)
        manifest.finish(_out(output))
    if output:
        console.print(f"✅ {len(records)} questions saved to {output}", style="green")


@app.command("gen-world")
def gen_world(
    output: Optional[Path] = typer.Option(None, "--out", "-o", help="Where to write the world JSON"),
    seed: Optional[int] = _seed_option(),
    config: Optional[Path] = _config_option(),
):
    """
    Sample a synthetic world from the world config.
    """
    with domain_errors():
        ctx.use_config(_out(config))
        run_seed = ctx.seed(seed)
        manifest = RunManifest.start("gen-world", ctx.config, run_seed)
        manifest.write(_out(output))
        world = sample_world(get_world_config(ctx.config), run_seed, ctx.lexicon)
        _emit(dump_world(world) + "\n", output)
        manifest.finish(_out(output))
    if output:
        console.print(f"✅ World saved to {output}", style="green")


@app.command("render")
def render(
    world_path: Path = typer.Option(..., "--world", exists=True, dir_okay=False, help="World JSON file"),
    output: Optional[Path] = typer.Option(None, "--out", "-o", help="Where to write the caption text"),
):
    """
    Render a world as its reference caption.
    """
    with domain_errors():
        manifest = RunManifest.start("render", ctx.config, None, [str(world_path)])
        manifest.write(_out(output))
        world = load_world(str(world_path))
        _emit(render_reference(world, get_world_config(ctx.config).connective) + "\n", output)
        manifest.finish(_out(output))
    if output:
        console.print(f"✅ Caption saved to {output}", style="green")


@app.command("corrupt")
def corrupt(
    input_path: Path = typer.Option(..., "--in", exists=True, dir_okay=False, help="Caption IR or text file"),
    kind: CorruptionKind = typer.Option(..., "--kind", help="Corruption to apply"),
    output: Optional[Path] = typer.Option(None, "--out", "-o", help="Where to write the corrupted IR"),
    seed: Optional[int] = _seed_option(),
    config: Optional[Path] = _config_option(),
):
    """
    Apply one structural corruption to a caption.
    """
    with domain_errors():
        ctx.use_config(_out(config))
        run_seed = ctx.seed(seed)
        manifest = RunManifest.start("corrupt", ctx.config, run_seed, [str(input_path)])
        manifest.write(_out(output))
        caption = load_caption(str(input_path), ctx.lexicon)
        corrupted = corrupt_caption(caption, kind.value, run_seed, ctx.lexicon)
        _emit(serialize(corrupted).decode("utf-8") + "\n", output)
        manifest.finish(_out(output))
    if output:
        console.print(f"✅ Corrupted caption ({kind.value}) saved to {output}", style="green")


@app.command("audit")
def audit(
    records_path: Optional[Path] = typer.Option(
        None, "--records", exists=True, dir_okay=False, help="Audit records JSONL"
    ),
    captions: Optional[Path] = typer.Option(
        None, "--captions", exists=True, file_okay=False, help="Directory of captions to derive records from"
    ),
    worlds: Optional[Path] = typer.Option(
        None, "--worlds", exists=True, file_okay=False, help="Directory of world files matching --captions"
    ),
    records_out: Optional[Path] = typer.Option(None, "--records-out", help="Where to write derived records"),
    output: Optional[Path] = typer.Option(None, "--out", "-o", help="Where to write the summary"),
    config: Optional[Path] = _config_option(),
):
    """
    Compute cascaded root, attribute and existence accuracies.
    """
    derive = captions is not None or worlds is not None
    if derive and (captions is None or worlds is None):
        raise typer.BadParameter("--captions and --worlds go together")
    if derive == (records_path is not None):
        raise typer.BadParameter("give either --records or --captions with --worlds")
    with domain_errors():
        ctx.use_config(_out(config))
        inputs = [str(records_path)] if records_path else [str(captions), str(worlds)]
        manifest = RunManifest.start("audit", ctx.config, None, inputs)
        manifest.write(_out(output))
        if records_path is not None:
            records = [AuditRecord.from_dict(r) for r in read_jsonl(str(records_path))]
        else:
            records = _derive_records(captions, worlds)
            if records_out is not None:
                to_jsonl([r.to_dict() for r in records], str(records_out))
        summary = audit_metrics(records)
        _emit(report_dumps(summary.to_dict()), output)
        manifest.finish(_out(output))
    if output:
        console.print(f"✅ Audit of {summary.n_total} records saved to {output}", style="green")


def _derive_records(captions: Path, worlds: Path) -> List[AuditRecord]:
    caption_files = get_caption_files(str(captions))
    world_files = get_caption_files(str(worlds))
    min_weight = get_reward_config(ctx.config).min_weight
    records = []
    for stem in sorted(caption_files):
        if stem not in world_files:
            console.print(f"⚠ {stem}: no world file, skipped", style="yellow")
            continue
        records.append(
            derive_record(
                stem,
                load_caption(caption_files[stem], ctx.lexicon),
                load_world(world_files[stem]),
                None,
                ctx.provider,
                min_weight,
                ctx.lexicon,
            )
        )
    return records


@app.command("overlap")
def overlap(
    train_list: Path = typer.Option(..., "--train", exists=True, dir_okay=False, help="Training name list"),
    eval_lists: List[Path] = typer.Option(
        ..., "--eval", exists=True, dir_okay=False, help="Evaluation name list (repeatable)"
    ),
    output: Optional[Path] = typer.Option(None, "--out", "-o", help="Where to write the overlap report"),
):
    """
    Count normalized filename overlap between training and evaluation lists.
    """
    with domain_errors():
        inputs = [str(train_list)] + [str(p) for p in eval_lists]
        manifest = RunManifest.start("overlap", ctx.config, None, inputs)
        manifest.write(_out(output))
        eval_sets: Dict[str, List[str]] = {}
        for path in eval_lists:
            eval_sets[path.stem] = read_name_list(str(path))
        report = overlap_audit(read_name_list(str(train_list)), eval_sets)
        _emit(report_dumps(report), output)
        manifest.finish(_out(output))
    for name, entry in report["sets"].items():
        console.print(f"{name}: {entry['display']}")
    if output:
        console.print(f"✅ Overlap report saved to {output}", style="green")


@app.command("train")
def train(
    output: Path = typer.Option(..., "--out", "-o", help="Output directory for history and policy"),
    steps: Optional[int] = typer.Option(None, "--steps", min=0, help="Override trainer.steps"),
    seed: Optional[int] = _seed_option(),
    config: Optional[Path] = _config_option(),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Show progress"),
):
    """
    Train the toy caption policy against the structured reward.
    """
    with domain_errors():
        ctx.use_config(_out(config))
        run_seed = ctx.seed(seed)
        trainer_config = with_overrides(get_trainer_config(ctx.config), steps=steps)
        reward_config = with_overrides(get_reward_config(ctx.config), seed=run_seed)
        manifest = RunManifest.start("train", ctx.config, run_seed)
        manifest.write(str(output), directory=True)
        history = run_training(
            trainer_config,
            reward_config,
            get_world_config(ctx.config),
            run_seed,
            ctx.lexicon,
            ctx.provider,
            verbose,
        )
        history.write(os.path.join(output, "history.jsonl"))
        write_json(history.policy.to_dict(), os.path.join(output, "policy.json"))
        manifest.finish(str(output), directory=True)
    final = history.records[-1]
    console.print(
        f"Final mean R = {final['mean_R']:.4f}, mean KL = {final['mean_kl']:.4f}", style="bold blue"
    )
    console.print(f"✅ Training history saved to {output}", style="green")


@app.command("ablate")
def ablate(
    output: Path = typer.Option(..., "--out", "-o", help="Output directory for histories and the summary"),
    groups: List[str] = typer.Option(
        ["components"], "--group", help=f"Ablation group, repeatable: {', '.join(ABLATION_GROUPS)}"
    ),
    pool_sizes: List[int] = typer.Option([], "--pool-size", help="Training pool size for the scale group"),
    steps: Optional[int] = typer.Option(None, "--steps", min=0, help="Override trainer.steps"),
    seed: Optional[int] = _seed_option(),
    config: Optional[Path] = _config_option(),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Show progress"),
):
    """
    Retrain with reward branches removed, weights rebalanced or the training pool resized.
    """
    with domain_errors():
        ctx.use_config(_out(config))
        run_seed = ctx.seed(seed)
        trainer_config = with_overrides(get_trainer_config(ctx.config), steps=steps)
        reward_config = with_overrides(get_reward_config(ctx.config), seed=run_seed)
        variants = ablation_variants(reward_config, trainer_config, groups, pool_sizes)
        manifest = RunManifest.start("ablate", ctx.config, run_seed)
        manifest.write(str(output), directory=True)
        report = run_ablation(
            variants, get_world_config(ctx.config), run_seed, str(output), ctx.lexicon, ctx.provider, verbose
        )
        manifest.finish(str(output), directory=True)
    for entry in report["variants"]:
        final = entry["final"]
        console.print(f"{entry['name']}: mean R = {final['mean_R']:.4f}, aca = {final['aca']}, eca = {final['eca']}")
    console.print(f"✅ Ablation saved to {output}", style="green")


if __name__ == "__main__":
    app()
