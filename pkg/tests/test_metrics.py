# tests/test_metrics.py

import math
from collections import Counter

import numpy as np
import pytest

from metrics import REPORT_COLUMNS, cider_d, macro_f1, read_csv, unique_words, write_report


def oracle_cider(candidates, references):
    """Straightforward reimplementation with explicit loops, used as a reference."""
    def grams(text, n):
        words = text.lower().split()
        return Counter(tuple(words[i:i + n]) for i in range(len(words) - n + 1))

    N = len(references)
    scores = []
    for cand, refs in zip(candidates, references):
        clip_total = 0.0
        for ref in refs:
            per_n = []
            for n in range(1, 5):
                def df(g):
                    return sum(1 for rs in references if any(g in grams(r, n) for r in rs))

                def weights(text):
                    return {g: c * (math.log(N) - math.log(max(1, df(g)))) for g, c in grams(text, n).items()}

                wc, wr = weights(cand), weights(ref)
                nc = math.sqrt(sum(v * v for v in wc.values()))
                nr = math.sqrt(sum(v * v for v in wr.values()))
                dot = sum(min(wc[g], wr[g]) * wr[g] for g in wc if g in wr)
                sim = dot / (nc * nr) if nc and nr else 0.0
                delta = len(cand.split()) - len(ref.split())
                per_n.append(sim * math.exp(-delta ** 2 / 72.0))
            clip_total += sum(per_n) / 4
        scores.append(10.0 * clip_total / len(refs))
    return sum(scores) / len(scores)


class TestCider:
    def test_identical_captions_score_ten(self):
        first = "a dog barks loudly outside"
        second = "rain falls on tin roofs"
        result = cider_d([first, second], [[first] * 5, [second] * 5])
        assert result.score == pytest.approx(10.0)
        assert result.per_clip == pytest.approx([10.0, 10.0])

    def test_disjoint_captions_score_zero(self):
        result = cider_d(["a dog barks", "a cat meows"], [["rain falls down"] * 5, ["bells ring out"] * 5])
        assert result.score == 0.0

    def test_empty_candidate_scores_zero(self):
        result = cider_d(["", "a cat meows"], [["a dog barks"], ["a cat meows"]])
        assert result.per_clip[0] == 0.0

    def test_matches_oracle(self):
        candidates = ["a dog barks then a cat meows", "the bell rings", "a car passes and a bird chirps"]
        references = [
            ["a dog barks then a cat meows", "a cat meows after a dog barks", "a hound barks"],
            ["a bell rings", "the chime rings loudly", "a gong rings then a bell rings"],
            ["a vehicle passes", "a car passes then a sparrow chirps", "a bird chirps after a car passes"],
        ]
        assert cider_d(candidates, references).score == pytest.approx(oracle_cider(candidates, references), rel=1e-9)

    def test_punctuation_and_case_are_normalised(self):
        references = [["a dog barks now"], ["rain falls"]]
        plain = cider_d(["a dog barks now", "rain falls"], references).score
        noisy = cider_d(["A dog, barks now!", "Rain falls."], references).score
        assert plain == noisy > 0

    def test_mismatched_lengths(self):
        with pytest.raises(ValueError):
            cider_d(["a"], [])

    def test_clip_without_references(self):
        with pytest.raises(ValueError):
            cider_d(["a dog"], [[]])

    def test_single_clip_uses_unit_idf(self):
        caption = "a dog barks loudly outside"
        assert cider_d([caption], [[caption] * 5]).score == pytest.approx(10.0)

    def test_short_captions_lose_the_missing_orders(self):
        result = cider_d(["a car passes", "rain falls"], [["a car passes"] * 5, ["rain falls"] * 5])
        assert result.per_clip == pytest.approx([7.5, 5.0])

    def test_ngrams_shared_by_every_clip_weigh_nothing(self):
        caption = "a dog barks loudly outside"
        assert cider_d([caption, caption], [[caption] * 5, [caption] * 5]).score == 0.0

    def test_clip_order_does_not_matter(self):
        candidates = ["a dog barks then a cat meows", "the bell rings", "a car passes and a bird chirps"]
        references = [
            ["a dog barks then a cat meows", "a hound barks"],
            ["a bell rings", "a gong rings then a bell rings"],
            ["a vehicle passes", "a bird chirps after a car passes"],
        ]
        order = [2, 0, 1]
        forward = cider_d(candidates, references)
        shuffled = cider_d([candidates[i] for i in order], [references[i] for i in order])
        assert shuffled.score == pytest.approx(forward.score, abs=1e-12)
        assert shuffled.per_clip == pytest.approx([forward.per_clip[i] for i in order], abs=1e-12)


class TestUniqueWords:
    def test_counts_distinct_words(self):
        assert unique_words(["a dog barks", "a cat"]) == 4

    def test_normalises(self):
        assert unique_words(["A Dog!", "a dog"]) == 2

    def test_empty(self):
        assert unique_words([]) == 0


class TestMacroF1:
    def test_single_class_example(self):
        assert macro_f1(np.array([1, 0, 1]), np.array([1, 1, 0])) == pytest.approx(0.5)

    def test_perfect(self):
        labels = np.array([[1, 0, 1], [0, 1, 0]])
        assert macro_f1(labels.astype(float), labels) == 1.0

    def test_all_wrong(self):
        labels = np.array([[1, 0], [0, 1]])
        assert macro_f1(1.0 - labels, labels) == 0.0

    def test_threshold(self):
        assert macro_f1(np.array([[0.49], [0.5]]), np.array([[0], [1]])) == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            macro_f1(np.zeros((2, 3)), np.zeros((2, 2)))


def test_report_is_byte_stable(tmp_path):
    rows = [{"system": "kmeans", "cider_d": 0.1234567, "n_words": 12, "macro_f1": 0.5},
            {"system": "fbank", "cider_d": 1.0, "n_words": 3}]
    write_report(tmp_path / "a.csv", rows)
    write_report(tmp_path / "b.csv", rows)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    parsed = read_csv(tmp_path / "a.csv")
    assert tuple(parsed[0].keys()) == REPORT_COLUMNS
    assert parsed[0]["cider_d"] == "0.123457"
    assert parsed[1]["macro_f1"] == ""
