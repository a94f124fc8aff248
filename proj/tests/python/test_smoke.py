import json
import math

import pytest

import venuerank


def test_cleaning_goldens():
    assert venuerank.baseline_clean("The a an") == ""
    assert venuerank.split_camel_case("ArtificialIntelligence") == "Artificial Intelligence"
    assert venuerank.enhanced_clean("simultaneous-approximation-term") == "simultaneous approximation term"
    assert venuerank.max_len("TK") == 256
    assert venuerank.max_len("TAKS") == 512


def test_cosine():
    assert venuerank.cosine([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0, abs=1e-12)
    assert venuerank.cosine([1, 2, 3], [4, 5, 6]) == pytest.approx(32 / math.sqrt(14 * 77), abs=1e-12)
    with pytest.raises(ValueError):
        venuerank.cosine([1, 2], [1, 2, 3])


def test_metrics_hand_fixture():
    rankings = [list("abc"), list("acb"), list("cab"), list("bac")]
    labels = list("abca")
    assert venuerank.hitrate_at_k(rankings, labels, 1) == 0.5
    assert venuerank.hitrate_at_k(rankings, labels, 2) == 0.75
    assert venuerank.macro_accuracy_at_k(rankings, labels, 1, list("abc")) == pytest.approx(2 / 3)
    assert venuerank.macro_accuracy_at_k(rankings, labels, 2, list("abc")) == pytest.approx(0.5)


def test_grad_check():
    label, worst = venuerank.grad_check("baseline", 1)
    assert label.startswith("baseline")
    assert worst < 1e-4


@pytest.fixture(scope="module")
def model(tmp_path_factory):
    d = tmp_path_factory.mktemp("vr")
    code, _, err = venuerank.cli("synth-data", "--out-dir", d, "--venues", 4, "--docs-per-venue", 10,
                                 "--vocab", 80, "--seed", 2)
    assert code == 0, err
    ckpt = d / "m.ckpt"
    code, _, err = venuerank.cli("train", "--corpus", d / "corpus.jsonl", "--venues", d / "venues.jsonl",
                                 "--out", ckpt, "--epochs", 2, "--seed", 1)
    assert code == 0, err
    first = json.loads((d / "corpus.jsonl").read_text().splitlines()[0])
    return ckpt, first["title"]


def test_recommend_matches_cli(model):
    ckpt, title = model
    rec = venuerank.Recommender(ckpt)
    assert len(rec.venue_ids) == 4
    got = rec.recommend(title=title, k=3)
    assert len(got["ranked"]) == 3
    code, out, _ = venuerank.cli("recommend", "--model", ckpt, "--title", title, "--k", 3, "--json")
    assert code == 0
    assert json.loads(out) == got
    assert got["model_id"] == rec.model_id


def test_recommend_errors(model):
    ckpt, _ = model
    rec = venuerank.Recommender(ckpt)
    with pytest.raises(venuerank.RequestError):
        rec.recommend(title="x", k=99)
    with pytest.raises(venuerank.EmptyTextError):
        rec.recommend(title="the of 42")


def test_cli_usage_error():
    code, _, _ = venuerank.cli("frobnicate")
    assert code == 1
