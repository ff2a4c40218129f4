from __future__ import annotations

from fixtures.cases import CORPUS, GROUPS, build


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_checked_in_corpus_is_current(tmp_path):
    build(tmp_path)
    fresh = _tree(tmp_path)
    stored = {k: v for k, v in _tree(CORPUS).items() if k.split("/")[0] in GROUPS}
    assert sorted(fresh) == sorted(stored)
    assert [k for k in fresh if fresh[k] != stored[k]] == []


def test_group_sizes():
    assert len(GROUPS["triggers"]) >= 19
    assert len(GROUPS["patches"]) >= 11
    assert len(GROUPS["baseline"]) == 10
    ids = [c.id for c in GROUPS["triggers"] + GROUPS["patches"]]
    assert len(ids) == len(set(ids))
