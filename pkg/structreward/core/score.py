# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# Score caption files or directories of caption pairs
import logging
import os
from concurrent.futures import Future, ThreadPoolExecutor, as_completed
from typing import Any, Dict, List, Optional, Tuple

from rich.console import Console
from rich.progress import BarColumn, Progress, TextColumn, TimeElapsedColumn

from structreward.core.reward_engine import RewardBreakdown, score_pair
from structreward.errors import StructRewardError
from structreward.models.caption_ir import StructuredCaption, ingest_json
from structreward.models.verifier import open_binding
from structreward.parsers.grammar_parser import parse_caption
from structreward.parsers.lexicon import Lexicon
from structreward.utils.config import RewardConfig, VerifierSettings
from structreward.utils.similarity import SimilarityProvider

logger = logging.getLogger(__name__)
console = Console(stderr=True)

# Caption inputs: IR documents or caption text
CAPTION_EXTENSIONS = [".json", ".txt"]


def load_caption(path: str, lexicon: Lexicon) -> StructuredCaption:
    """Read an IR JSON file, or parse a caption text file"""
    with open(path, "rb") as f:
        data = f.read()
    if path.lower().endswith(".json"):
        return ingest_json(data)
    return parse_caption(data.decode("utf-8"), lexicon)


def get_caption_files(directory: str) -> Dict[str, str]:
    """Caption files in a directory keyed by file stem"""
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"Directory not found: {directory}")
    files = {}
    for filename in sorted(os.listdir(directory)):
        path = os.path.join(directory, filename)
        stem, ext = os.path.splitext(filename)
        if os.path.isfile(path) and ext.lower() in CAPTION_EXTENSIONS:
            if stem in files:
                logger.warning("Duplicate caption stem", extra={"stem": stem, "skipped": path})
                continue
            files[stem] = path
    return files


def pair_directories(gen_dir: str, ref_dir: str) -> Tuple[List[Tuple[str, str, str]], List[str]]:
    """Pair generated and reference captions by file stem

    Returns:
        (pairs as (stem, gen_path, ref_path), stems present on one side only)
    """
    gen_files = get_caption_files(gen_dir)
    ref_files = get_caption_files(ref_dir)
    pairs = [(stem, gen_files[stem], ref_files[stem]) for stem in sorted(gen_files) if stem in ref_files]
    unpaired = sorted(set(gen_files) ^ set(ref_files))
    return pairs, unpaired


def score_files(
    gen_path: str,
    ref_path: str,
    config: RewardConfig,
    binding_spec: str,
    verifier_settings: VerifierSettings,
    provider: SimilarityProvider,
    lexicon: Lexicon,
) -> RewardBreakdown:
    """Score one caption pair read from disk"""
    gen = load_caption(gen_path, lexicon)
    ref = load_caption(ref_path, lexicon)
    binding = open_binding(binding_spec, verifier_settings)
    if binding is None:
        return score_pair(gen, ref, config, None, provider, lexicon)
    with binding:
        return score_pair(gen, ref, config, binding, provider, lexicon)


def score_directory(
    gen_dir: str,
    ref_dir: str,
    config: RewardConfig,
    binding_spec: str,
    verifier_settings: VerifierSettings,
    provider: SimilarityProvider,
    lexicon: Lexicon,
    jobs: int = 1,
    verbose: bool = False,
) -> Dict[str, Any]:
    """Score every stem-matched caption pair of two directories

    Args:
        gen_dir: Directory of generated captions
        ref_dir: Directory of reference captions
        jobs: Worker threads; each pair opens its own verifier binding
        verbose: Show a progress bar

    Returns:
        Dictionary with per-pair reports in stem order, failures and unpaired stems
    """
    pairs, unpaired = pair_directories(gen_dir, ref_dir)
    for stem in unpaired:
        logger.warning("Caption has no counterpart", extra={"stem": stem})

    results: Dict[str, Any] = {
        "total_pairs": len(pairs),
        "successful": 0,
        "failed": 0,
        "mean_R": None,
        "results": [],
        "errors": [],
        "unpaired": unpaired,
    }
    if not pairs:
        console.print(f"No caption pairs found in {gen_dir} and {ref_dir}", style="yellow")
        return results

    reports: Dict[str, Dict[str, Any]] = {}
    errors: Dict[str, Dict[str, Any]] = {}
    with Progress(
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("[progress.percentage]{task.percentage:>3.0f}%"),
        TextColumn("({task.completed}/{task.total})"),
        TimeElapsedColumn(),
        console=console,
        disable=not verbose,
    ) as progress:
        task = progress.add_task("Scoring caption pairs", total=len(pairs))
        with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
            futures: Dict[Future, str] = {
                executor.submit(
                    score_files, gen_path, ref_path, config, binding_spec, verifier_settings, provider, lexicon
                ): stem
                for stem, gen_path, ref_path in pairs
            }
            for future in as_completed(futures):
                stem = futures[future]
                try:
                    reports[stem] = future.result().to_dict()
                except (StructRewardError, OSError) as e:
                    errors[stem] = {"stem": stem, "error": f"{type(e).__name__}: {e}"}
                    if verbose:
                        console.print(f"✗ {stem}: {type(e).__name__}: {e}", style="red")
                progress.update(task, advance=1)

    # Collected in stem order so the report does not depend on completion order
    for stem, _, _ in pairs:
        if stem in reports:
            results["results"].append({"stem": stem, "report": reports[stem]})
        else:
            results["errors"].append(errors[stem])
    results["successful"] = len(reports)
    results["failed"] = len(errors)
    if reports:
        results["mean_R"] = sum(r["report"]["R"] for r in results["results"]) / len(reports)
    logger.info(
        "Scored caption directory",
        extra={"pairs": len(pairs), "successful": results["successful"], "failed": results["failed"]},
    )
    return results
