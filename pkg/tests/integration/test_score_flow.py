"""Integration tests for directory scoring."""

import pytest

from structreward.core.score import pair_directories, score_directory
from structreward.models.caption_ir import to_dict
from structreward.parsers.grammar_parser import parse_caption
from structreward.utils.config import RewardConfig, VerifierSettings
from tests.utils import SAMPLE_WORLD_TEXT


@pytest.fixture
def caption_dirs(temp_env):
    temp_env.create_files(
        {
            "gen/a.txt": SAMPLE_WORLD_TEXT,
            "ref/a.txt": SAMPLE_WORLD_TEXT,
            # Out-of-vocabulary word: the pair fails to parse
            "gen/b.txt": "A zebra runs.",
            "ref/b.txt": "A man runs.",
            "ref/c.txt": "A cup is present.",
            "ref/notes.md": "ignored",
        }
    )
    return temp_env.join("gen"), temp_env.join("ref")


@pytest.mark.integration
def test_pair_directories(caption_dirs):
    pairs, unpaired = pair_directories(*caption_dirs)
    assert [stem for stem, _, _ in pairs] == ["a", "b"]
    assert unpaired == ["c"]


@pytest.mark.integration
@pytest.mark.parametrize("jobs", [1, 2])
def test_score_directory_collects_failures(caption_dirs, lexicon, provider, jobs):
    gen_dir, ref_dir = caption_dirs
    results = score_directory(gen_dir, ref_dir, RewardConfig(), "self", VerifierSettings(), provider, lexicon, jobs=jobs)
    assert results["total_pairs"] == 2
    assert results["successful"] == 1
    assert results["failed"] == 1
    assert [r["stem"] for r in results["results"]] == ["a"]
    assert [e["stem"] for e in results["errors"]] == ["b"]
    assert results["errors"][0]["error"].startswith("UnknownToken")
    assert results["unpaired"] == ["c"]
    assert results["mean_R"] == pytest.approx(0.75)


@pytest.mark.integration
def test_score_directory_is_order_independent(caption_dirs, lexicon, provider):
    gen_dir, ref_dir = caption_dirs
    one = score_directory(gen_dir, ref_dir, RewardConfig(), "self", VerifierSettings(), provider, lexicon, jobs=1)
    two = score_directory(gen_dir, ref_dir, RewardConfig(), "self", VerifierSettings(), provider, lexicon, jobs=2)
    assert one == two


@pytest.mark.integration
def test_missing_directory(tmp_path, lexicon, provider):
    with pytest.raises(FileNotFoundError):
        score_directory(str(tmp_path / "x"), str(tmp_path), RewardConfig(), "self", VerifierSettings(), provider, lexicon)


@pytest.mark.integration
def test_empty_directories(tmp_path, lexicon, provider):
    results = score_directory(str(tmp_path), str(tmp_path), RewardConfig(), "self", VerifierSettings(), provider, lexicon)
    assert results["total_pairs"] == 0
    assert results["mean_R"] is None


@pytest.mark.integration
def test_ir_documents_score_like_text(temp_env, lexicon, provider):
    ir = to_dict(parse_caption(SAMPLE_WORLD_TEXT, lexicon))
    temp_env.create_json_files({"gen/s.json": ir})
    temp_env.create_files({"ref/s.txt": SAMPLE_WORLD_TEXT})
    results = score_directory(
        temp_env.join("gen"), temp_env.join("ref"), RewardConfig(), "self", VerifierSettings(), provider, lexicon
    )
    assert results["successful"] == 1
    assert results["mean_R"] == pytest.approx(0.75)
