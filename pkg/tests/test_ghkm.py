import pytest

from app.aligners import Alignment
from app.exceptions import ValidationError
from app.ghkm import (
    GhkmRule, count_rules, extract_ghkm, group_rules, groups_to_dataframe, read_rules,
    rule_statistics, write_rules,
)
from app.toy import gen_toy
from app.treebank import Internal, Leaf


def diagonal(n):
    return Alignment(tuple((i, i) for i in range(n)))


def expand(rule, src_tokens):
    """Rewrites a rule's rhs with each variable replaced by its source span."""
    words = []
    for symbol in rule.rhs:
        if symbol.startswith('"'):
            words.append(symbol[1:-1])
        else:
            low, high = rule.variable_spans[int(symbol[1:])]
            words.extend(src_tokens[low:high + 1])
    return words


REORDERING_TREE = Internal("ROOT", (
    Internal("S", (
        Internal("NP", (Leaf("Jane"),)),
        Internal("VP", (Leaf("has"), Internal("VP", (Leaf("bought"), Internal("NP", (Leaf("a"), Leaf("cat"))))))),
    )),
))
REORDERING_SOURCE = "Jane hat eine Katze gekauft".split()
REORDERING_LINKS = Alignment(((0, 0), (1, 1), (2, 4), (3, 2), (4, 3)))


class TestExtract:
    def test_monotone_sentence(self, jane_tree):
        rules = extract_ghkm(jane_tree, "Jane hatte eine Katze .".split(), diagonal(5))
        assert [(r.lhs, r.rhs) for r in rules] == [
            ("ROOT(x0:S)", ("x0",)),
            ("S(x0:NP x1:VP x2:TER)", ("x0", "x1", "x2")),
            ("NP(Jane)", ('"Jane"',)),
            ("VP(x0:TER x1:NP)", ("x0", "x1")),
            ("NP(a cat)", ('"eine"', '"Katze"')),
        ]
        assert not any(r.reordering for r in rules)

    def test_verb_final_source(self):
        rules = extract_ghkm(REORDERING_TREE, REORDERING_SOURCE, REORDERING_LINKS)
        assert [(r.lhs, r.rhs_text, r.reordering) for r in rules] == [
            ("ROOT(x0:S)", "x0", False),
            ("S(x0:NP x1:VP)", "x0 x1", False),
            ("NP(Jane)", '"Jane"', False),
            ("VP(x0:TER x1:VP)", "x0 x1", False),
            ("VP(x0:TER x1:NP)", "x1 x0", True),
            ("NP(a cat)", '"eine" "Katze"', False),
        ]

    def test_unaligned_source_word_becomes_literal(self):
        tree = Internal("ROOT", (Internal("S", (Internal("NP", (Leaf("Jane"),)), Internal("VP", (Leaf("left"),)))),))
        rules = extract_ghkm(tree, "Jane ist gegangen".split(), Alignment(((0, 0), (1, 2))))
        by_lhs = {r.lhs: r.rhs for r in rules}
        assert by_lhs["S(x0:NP x1:VP)"] == ("x0", '"ist"', "x1")
        assert by_lhs["VP(left)"] == ('"gegangen"',)

    def test_empty_alignment(self, jane_tree):
        assert extract_ghkm(jane_tree, "Jane hatte eine Katze .".split(), Alignment()) == []

    def test_out_of_range_indices(self, jane_tree):
        with pytest.raises(ValidationError, match="Source index 9"):
            extract_ghkm(jane_tree, ["a"], Alignment(((0, 9),)))
        with pytest.raises(ValidationError, match="Target index 7"):
            extract_ghkm(jane_tree, ["a"], Alignment(((7, 0),)))

    def test_rules_reproduce_their_source_span(self):
        for pair in gen_toy(200, seed=9):
            for rule in extract_ghkm(pair.tree, pair.source, pair.alignment):
                low, high = rule.source_span
                assert expand(rule, pair.source) == list(pair.source[low:high + 1]), rule


class TestAggregation:
    vp = "VP(x0:TER x1:NP)"

    def test_count_rules_merges_duplicates(self):
        rules = [GhkmRule(self.vp, ("x1", "x0"), reordering=True)] * 3 + [GhkmRule("NP(a)", ('"ein"',))]
        counted = count_rules(rules)
        assert [(r.lhs, r.count) for r in counted] == [("NP(a)", 1), (self.vp, 3)]

    def test_single_rule_single_group(self):
        groups = group_rules([GhkmRule("NP(a)", ('"ein"',))])
        assert len(groups) == 1
        assert groups[0].entries[0].count == 1

    def test_groups_sorted_by_reordering_total(self):
        rules = [GhkmRule("S(x0:NP x1:VP)", ("x1", "x0"), 3, True),
                 GhkmRule(self.vp, ("x1", "x0"), 5, True),
                 GhkmRule(self.vp, ("x0", "x1"), 9, False)]
        groups = group_rules(rules)
        assert [(g.lhs, g.reordering_total) for g in groups] == [(self.vp, 5), ("S(x0:NP x1:VP)", 3)]
        assert [e.rhs_text for e in groups[0].entries] == ["x0 x1", "x1 x0"]

    def test_ties_and_top_k(self):
        rules = [GhkmRule(self.vp, ("x1", f'"w{i}"', "x0"), 2, True) for i in range(7)]
        group = group_rules(rules, k=5)[0]
        assert [e.rhs_text for e in group.entries] == [f'x1 "w{i}" x0' for i in range(5)]
        assert group.reordering_total == 14

    def test_dataframe(self):
        df = groups_to_dataframe(group_rules([GhkmRule(self.vp, ("x1", "x0"), 4, True)]))
        assert df.to_dict("records") == [{"lhs": self.vp, "reordering_total": 4, "rhs": "x1 x0",
                                          "count": 4, "reordering": True}]

    def test_rule_statistics(self):
        reorder = GhkmRule(self.vp, ("x1", "x0"), reordering=True)
        mono = GhkmRule("NP(a)", ('"ein"',))
        stats = rule_statistics([[reorder, mono], [mono], [reorder]])
        assert (stats.total_rules, stats.reordering_rules) == (2, 1)
        assert stats.reordering_share == 0.5
        assert stats.top_reordering_rule == (self.vp, "x1 x0")
        assert stats.top_rule_sentence_share == pytest.approx(2 / 3)

    def test_statistics_without_rules(self):
        stats = rule_statistics([])
        assert stats.top_reordering_rule is None
        assert stats.reordering_share == 0.0


class TestRulesFile:
    def test_roundtrip(self, tmp_path):
        rules = count_rules(extract_ghkm(REORDERING_TREE, REORDERING_SOURCE, REORDERING_LINKS))
        path = tmp_path / "rules.tsv"
        write_rules(rules, path)
        assert "VP(x0:TER x1:NP)\tx1 x0\t1\t1" in path.read_text(encoding="utf-8").splitlines()
        loaded = read_rules(path)
        assert [(r.key, r.count, r.reordering) for r in loaded] == [(r.key, r.count, r.reordering) for r in rules]

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "rules.tsv"
        path.write_text("NP(a)\t\"ein\"\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="Malformed rule on line 1"):
            read_rules(path)
