import pytest

from granubot.kg import load_catalog
from granubot.nlu import (
    DomainRanking,
    SlotLexicon,
    extract_intent,
    identify_domain,
    is_follow_up,
)

LEXICON = SlotLexicon(
    {
        "housekeeper": ("pro", "housekeeper"),
        "house keeper": ("pro", "housekeeper"),
        "babysitter": ("pro", "nursery teacher"),
        "low": ("price", "low"),
        "cheap": ("price", "low"),
        "expensive": ("price", "high"),
        "woman": ("gender", "woman"),
        "man": ("gender", "man"),
        "young": ("age", "young"),
        "old": ("age", "old"),
    }
)


class TestExtractIntent:
    def test_worked_example(self):
        d = extract_intent(
            "Please help me to arrange a young woman housekeeper with low price", LEXICON
        )
        assert d.merged() == {
            "pro": {"housekeeper"},
            "price": {"low"},
            "gender": {"woman"},
            "age": {"young"},
        }
        assert len(d.concerns) == 1

    def test_chat_utterance_is_empty(self):
        assert extract_intent("nice weather today", LEXICON).is_chat

    def test_repeated_terms_collapse(self):
        d = extract_intent("cheap cheap housekeeper", LEXICON)
        assert d.merged()["price"] == {"low"}

    def test_case_insensitive_and_permutation_invariant(self):
        a = extract_intent("Young WOMAN housekeeper, LOW price", LEXICON)
        b = extract_intent("low price housekeeper woman young", LEXICON)
        assert a.merged() == b.merged()

    def test_multiword_term_matched_greedily(self):
        d = extract_intent("I want a house keeper", LEXICON)
        assert d.merged() == {"pro": {"housekeeper"}}

    def test_synonyms_merge_into_one_value(self):
        d = extract_intent("cheap and low price housekeeper", LEXICON)
        assert d.merged()["price"] == {"low"}


@pytest.fixture(scope="module")
def two_domain_kg(tmp_path_factory):
    path = tmp_path_factory.mktemp("cat") / "catalog.csv"
    rows = [
        "provider_id,service_type,price",
        '"h1","housekeeping",1000',
        '"h2","housekeeping",2000',
        '"j1","jobhunting",1500',
    ]
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return load_catalog(
        path,
        synonyms={"housekeeper": "housekeeping", "job": "jobhunting", "work": "jobhunting"},
    )


class TestIdentifyDomain:
    def test_headed_by_housekeeping(self, two_domain_kg):
        ranking = identify_domain("arrange a housekeeper for me", two_domain_kg)
        assert ranking.top == "housekeeping"

    def test_no_domain_terms(self, two_domain_kg):
        assert identify_domain("under 3000", two_domain_kg).is_empty

    def test_scores_sum_to_one(self, two_domain_kg):
        ranking = identify_domain("housekeeper or a job or work", two_domain_kg)
        assert sum(s for _, s in ranking.ranked) == pytest.approx(1.0)

    def test_tie_broken_alphabetically(self, two_domain_kg):
        ranking = identify_domain("housekeeper job", two_domain_kg)
        assert [tag for tag, _ in ranking.ranked] == ["housekeeping", "jobhunting"]
        assert ranking.ranked[0][1] == pytest.approx(ranking.ranked[1][1])


class TestIsFollowUp:
    def test_same_top_domain(self):
        saved = DomainRanking([("housekeeping", 1.0)])
        current = DomainRanking([("housekeeping", 0.6), ("jobhunting", 0.4)])
        assert is_follow_up(current, saved)

    def test_different_domain_resets(self):
        saved = DomainRanking([("housekeeping", 1.0)])
        assert not is_follow_up(DomainRanking([("jobhunting", 1.0)]), saved)

    def test_pure_answer_inherits_saved_domain(self):
        saved = DomainRanking([("housekeeping", 1.0)])
        assert is_follow_up(DomainRanking(), saved)


def test_shipped_lexicon_loads():
    from importlib import resources

    with resources.as_file(resources.files("granubot") / "data" / "slot_lexicon.tsv") as p:
        lex = SlotLexicon.from_file(p)
    d = extract_intent("a young woman housekeeper with low price", lex)
    assert d.merged()["pro"] == {"housekeeper"}
    assert {"price", "gender", "age"} <= d.labels()
