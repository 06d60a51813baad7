import json

import pytest

from eventcl.augment import Event
from eventcl.data import (
    HardPair,
    McncInstance,
    SyntheticSpec,
    TransitivePair,
    default_cluster_vocab,
    generate_synthetic,
    load_events,
    load_hard_pairs,
    load_mcnc,
    load_transitive,
    save_events,
    save_hard_pairs,
    save_mcnc,
    save_transitive,
)
from eventcl.errors import InputError, ParseError, RangeError, SchemaError


def _write(path, lines):
    path.write_text("\n".join(lines) + "\n")


class TestLoadEvents:
    def test_single_line(self, tmp_path):
        p = tmp_path / "events.jsonl"
        _write(p, ['{"subject":"military","predicate":"launch","object":"missile"}'])
        assert load_events(p) == [Event("military", "launch", "missile")]

    def test_empty_file(self, tmp_path):
        p = tmp_path / "events.jsonl"
        p.write_text("")
        assert load_events(p) == []

    def test_blank_lines_skipped(self, tmp_path):
        p = tmp_path / "events.jsonl"
        _write(p, ['{"subject":"a","predicate":"b","object":"c"}', "", '{"subject":"d","predicate":"e","object":"f"}'])
        assert len(load_events(p)) == 2

    def test_missing_key_names_key_and_line(self, tmp_path):
        p = tmp_path / "events.jsonl"
        _write(p, ['{"subject":"a","predicate":"b","object":"c"}', '{"subject":"a","predicate":"b"}'])
        with pytest.raises(SchemaError) as exc:
            load_events(p)
        assert "object" in str(exc.value) and "line 2" in str(exc.value)

    def test_malformed_json_reports_line(self, tmp_path):
        p = tmp_path / "events.jsonl"
        _write(p, ['{"subject":"a","predicate":"b","object":"c"}', "{oops"])
        with pytest.raises(ParseError) as exc:
            load_events(p)
        assert exc.value.line_number == 2

    def test_roundtrip(self, tmp_path, small_events):
        p = tmp_path / "events.jsonl"
        save_events(p, small_events)
        assert load_events(p) == small_events


class TestHardPairs:
    def test_roundtrip(self, tmp_path):
        pairs = [
            HardPair(
                similar=(Event("a", "b", "c"), Event("d", "e", "f")),
                dissimilar=(Event("a", "b", "c"), Event("a", "b", "z")),
            )
        ]
        p = tmp_path / "hard.jsonl"
        save_hard_pairs(p, pairs)
        assert load_hard_pairs(p) == pairs

    def test_missing_similar_key(self, tmp_path):
        p = tmp_path / "hard.jsonl"
        _write(p, ['{"dissimilar": [{"subject":"a","predicate":"b","object":"c"},{"subject":"a","predicate":"b","object":"z"}]}'])
        with pytest.raises(SchemaError):
            load_hard_pairs(p)


class TestTransitive:
    def test_boundary_scores_accepted(self, tmp_path):
        p = tmp_path / "trans.jsonl"
        ev = '{"subject":"a","predicate":"b","object":"c"}'
        _write(p, [f'{{"event_a":{ev},"event_b":{ev},"gold_score":7.0}}', f'{{"event_a":{ev},"event_b":{ev},"gold_score":1.0}}'])
        pairs = load_transitive(p)
        assert [x.gold_score for x in pairs] == [7.0, 1.0]

    def test_out_of_range_score(self, tmp_path):
        p = tmp_path / "trans.jsonl"
        ev = '{"subject":"a","predicate":"b","object":"c"}'
        _write(p, [f'{{"event_a":{ev},"event_b":{ev},"gold_score":7.5}}'])
        with pytest.raises(RangeError):
            load_transitive(p)

    def test_roundtrip(self, tmp_path):
        pairs = [TransitivePair(Event("a", "b", "c"), Event("d", "e", "f"), 5.0)]
        p = tmp_path / "trans.jsonl"
        save_transitive(p, pairs)
        assert load_transitive(p) == pairs


class TestMcnc:
    def _line(self, n_candidates=5, gold=1):
        ev = lambda i: {"subject": f"s{i}", "predicate": f"p{i}", "object": f"o{i}"}
        return json.dumps(
            {"context": [ev(10), ev(11)], "candidates": [ev(i) for i in range(n_candidates)], "gold_index": gold}
        )

    def test_roundtrip(self, tmp_path):
        p = tmp_path / "mcnc.jsonl"
        _write(p, [self._line()])
        instances = load_mcnc(p)
        assert len(instances) == 1 and instances[0].gold_index == 1
        save_mcnc(p, instances)
        assert load_mcnc(p) == instances

    def test_four_candidates_rejected(self, tmp_path):
        p = tmp_path / "mcnc.jsonl"
        _write(p, [self._line(n_candidates=4)])
        with pytest.raises(SchemaError):
            load_mcnc(p)

    def test_gold_index_out_of_range(self, tmp_path):
        p = tmp_path / "mcnc.jsonl"
        _write(p, [self._line(gold=5)])
        with pytest.raises(RangeError):
            load_mcnc(p)

    def test_duplicate_candidates_rejected(self, tmp_path):
        ev = {"subject": "s", "predicate": "p", "object": "o"}
        line = json.dumps({"context": [ev], "candidates": [ev] * 5, "gold_index": 0})
        p = tmp_path / "mcnc.jsonl"
        _write(p, [line])
        with pytest.raises(SchemaError):
            load_mcnc(p)


_GEN_SPEC = SyntheticSpec(num_synonym_clusters=6, events_per_cluster=40, seed=3, num_hard_pairs=80, num_transitive=60, num_mcnc=50)
_GEN_DATA = generate_synthetic(_GEN_SPEC)


class TestSyntheticGeneration:
    @pytest.fixture
    def data(self):
        return _GEN_DATA, _GEN_SPEC

    def test_counts(self, data):
        out, spec = data
        assert len(out.corpus) == 6 * 40
        assert len(out.hard_pairs) == 80
        assert len(out.transitive_pairs) == 60
        assert len(out.mcnc_instances) == 50

    def test_hard_pair_overlap_constraints(self, data):
        out, _ = data
        for pair in out.hard_pairs:
            a, b = pair.similar
            assert len(set(a.components()) & set(b.components())) == 0
            a2, b2 = pair.dissimilar
            assert len(set(a2.components()) & set(b2.components())) == 2

    def test_transitive_grades(self, data):
        out, _ = data
        scores = {p.gold_score for p in out.transitive_pairs}
        assert scores == {7.0, 5.0, 3.0, 1.0}
        for p in out.transitive_pairs:
            overlap = len(set(p.event_a.components()) & set(p.event_b.components()))
            assert overlap == 0  # graded pairs never share surface words

    def test_fully_foreign_pair_gets_gold_one(self, data):
        out, _ = data
        vocab = default_cluster_vocab(6)

        def cluster_of(word, role):
            for name, roles in vocab.items():
                if word in roles[role]:
                    return name
            raise AssertionError(f"word {word} not found")

        for p in out.transitive_pairs:
            if p.gold_score == 1.0:
                for role in ("subject", "predicate", "object"):
                    assert cluster_of(getattr(p.event_a, role), role) != cluster_of(getattr(p.event_b, role), role)

    def test_mcnc_gold_is_lexically_fresh(self, data):
        out, _ = data
        for inst in out.mcnc_instances:
            context_words = {w for e in inst.context for w in e.components()}
            gold = inst.candidates[inst.gold_index]
            assert not (set(gold.components()) & context_words)
            assert len(set(inst.candidates)) == 5

    def test_deterministic(self):
        spec = SyntheticSpec(num_synonym_clusters=4, events_per_cluster=10, seed=9, num_hard_pairs=10, num_transitive=8, num_mcnc=6)
        a = generate_synthetic(spec)
        b = generate_synthetic(spec)
        assert a.corpus == b.corpus
        assert a.hard_pairs == b.hard_pairs
        assert a.transitive_pairs == b.transitive_pairs
        assert a.mcnc_instances == b.mcnc_instances

    def test_file_roundtrip_byte_identical(self, tmp_path):
        spec = SyntheticSpec(num_synonym_clusters=4, events_per_cluster=10, seed=9, num_hard_pairs=10, num_transitive=8, num_mcnc=6)
        out = generate_synthetic(spec)
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_events(p1, out.corpus)
        save_events(p2, generate_synthetic(spec).corpus)
        assert p1.read_bytes() == p2.read_bytes()

    def test_too_few_clusters_rejected(self):
        with pytest.raises(InputError):
            generate_synthetic(SyntheticSpec(num_synonym_clusters=1))

    def test_cluster_vocab_needs_two_words_per_role(self):
        bad = {"a": {"subject": ["x"], "predicate": ["y", "z"], "object": ["u", "v"]},
               "b": {"subject": ["q", "r"], "predicate": ["y", "z"], "object": ["u", "v"]}}
        with pytest.raises(InputError):
            generate_synthetic(SyntheticSpec(cluster_vocab=bad))

    def test_pseudo_word_clusters_beyond_builtin(self):
        vocab = default_cluster_vocab(14)
        assert len(vocab) == 14
        for roles in vocab.values():
            for role in ("subject", "predicate", "object"):
                assert len(roles[role]) >= 2
