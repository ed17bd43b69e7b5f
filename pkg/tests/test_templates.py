import pytest

from msmu_forge.templates import CATEGORIES, FAMILIES, POLARITY_RE, pick_polarity, placeholder_order, substitute

LABELS = {"A", "B", "C", "X"}
NUMERIC = {"Length", "Width", "Height", "Length A", "Width A", "Height A", "Length B", "Width B", "Height B",
           "Height C", "dis A2B", "dis B2C", "x", "y"}


def test_every_category_has_a_family():
    assert {f.category for f in FAMILIES.values()} == set(CATEGORIES)


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_placeholders_known_and_answer_covered(name):
    fam = FAMILIES[name]
    for t in fam.questions + fam.answers:
        assert set(placeholder_order(t)) <= LABELS | NUMERIC, t
    # every answer variant carries the same numeric placeholders
    nums = {frozenset(set(placeholder_order(a)) & NUMERIC) for a in fam.answers}
    assert len(nums) == 1


@pytest.mark.parametrize("name", ["left", "stands", "taller", "tallest", "larger"])
def test_polarity_pairs_resolve_consistently(name):
    fam = FAMILIES[name]
    assert all(POLARITY_RE.search(q) for q in fam.questions)
    for t in fam.questions + fam.answers:
        pairs = POLARITY_RE.findall(t)
        for pol in (0, 1):
            out = pick_polarity(t, pol)
            assert "/" not in out.replace("A2B", "").replace("B2C", "")
            for a, b in pairs:
                assert (a if pol == 0 else b) in out


def test_substitute():
    assert substitute("[A] and [B] are [X] apart.", {"A": "the bed", "B": "the lamp", "X": "1.00 m"}) == "the bed and the lamp are 1.00 m apart."
    with pytest.raises(KeyError):
        substitute("[A] and [B]", {"A": "x"})


def test_quantitative_flags():
    quant = {n for n, f in FAMILIES.items() if f.quantitative}
    assert {"size", "height", "width", "count", "distance", "refer1", "refer5"} <= quant
    assert not ({"zero", "left", "closer", "taller", "position1"} & quant)
