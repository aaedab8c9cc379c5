"""Tag table construction, scoring head, and loss tests."""

import numpy as np
import pytest

import bicon.diffcore as dc
from bicon.decoder import Triple
from bicon.errors import ConfigError, DataError, ShapeError
from bicon.tagger import (BB, BE, EE, NA, LABELS, HeadConfig, RelSchema,
                          TagTable, build_gold_table, init_params, loss,
                          score_tables)


def test_label_constants():
    assert LABELS == ("N/A", "B-B", "B-E", "E-E")
    assert (NA, BB, BE, EE) == (0, 1, 2, 3)


def test_rel_schema():
    s = RelSchema(("born_in", "works_for"))
    assert s.k == 2
    assert s.id_of("works_for") == 1
    with pytest.raises(DataError):
        s.id_of("unknown_rel")
    with pytest.raises(ConfigError):
        RelSchema(("a", "a"))
    with pytest.raises(ConfigError):
        RelSchema(())


def test_build_gold_table_frozen_single_triple():
    # ([1,2], r0, [4,5]) in a 5-token sentence.
    schema = RelSchema(("r0",))
    t = build_gold_table([Triple(1, 2, 0, 4, 5)], 5, schema).data[:, :, 0]
    want = np.zeros((5, 5), dtype=np.int8)
    want[0, 3] = BB
    want[0, 4] = BE
    want[1, 4] = EE
    np.testing.assert_array_equal(t, want)


def test_build_gold_table_collision_precedence():
    schema = RelSchema(("r0",))
    # ([1,2], r0, [2,2]): B-B, B-E and E-E all target cells in column 2;
    # cell (1,2) receives both B-B and B-E -> B-E wins.
    t = build_gold_table([Triple(1, 2, 0, 2, 2)], 3, schema).data[:, :, 0]
    assert t[0, 1] == BE
    assert t[1, 1] == EE
    # A later B-B (then B-E) beats an earlier E-E in the same cell.
    t2 = build_gold_table([Triple(1, 3, 0, 3, 3), Triple(3, 3, 0, 3, 3)], 3,
                          schema).data[:, :, 0]
    assert t2[0, 2] == BE  # single-cell subject/object start marks collapse
    assert t2[2, 2] == BE  # second triple's marks beat the first's E-E


def test_build_gold_table_validates(rng):
    schema = RelSchema(("r0",))
    with pytest.raises(DataError, match="sid-9"):
        build_gold_table([Triple(1, 2, 0, 4, 6)], 5, schema, sid="sid-9")
    with pytest.raises(DataError):
        build_gold_table([Triple(2, 1, 0, 1, 1)], 5, schema)
    with pytest.raises(DataError):
        build_gold_table([Triple(1, 1, 3, 1, 1)], 5, schema)


def test_tag_table_validation_and_signature():
    arr = np.zeros((3, 3, 1), dtype=np.int8)
    t1 = TagTable(arr)
    t2 = TagTable(arr.copy())
    assert t1.signature() == t2.signature()
    arr2 = arr.copy()
    arr2[0, 0, 0] = BE
    assert TagTable(arr2).signature() != t1.signature()
    with pytest.raises(DataError):
        TagTable(np.full((2, 2, 1), 7, dtype=np.int8))
    with pytest.raises(ShapeError):
        TagTable(np.zeros((2, 3, 1), dtype=np.int8))


def _head(d_h=6, k=2, seed=0):
    cfg = HeadConfig(hidden_mult=2, dropout_keep=0.9)
    params = init_params(d_h, k, cfg, np.random.default_rng(seed))
    return cfg, params


def test_score_tables_shape_and_eval_determinism(rng):
    cfg, params = _head()
    grid = dc.Tensor(rng.normal(size=(4, 4, 6)).astype(np.float32))
    out1 = score_tables(grid, params, 2, cfg, train=False).data
    out2 = score_tables(grid, params, 2, cfg, train=False).data
    assert out1.shape == (4, 4, 2, 4)
    np.testing.assert_array_equal(out1, out2)


def test_score_tables_dropout_only_in_train(rng):
    cfg, params = _head()
    grid = dc.Tensor(rng.normal(size=(4, 4, 6)).astype(np.float32))
    out_eval = score_tables(grid, params, 2, cfg, train=False).data
    out_train = score_tables(grid, params, 2, cfg, train=True,
                             rng=np.random.default_rng(3)).data
    assert not np.allclose(out_eval, out_train)


def test_score_tables_gradient(rng):
    cfg, params = _head(d_h=4, k=1)
    grid = dc.Tensor(rng.normal(size=(3, 3, 4)).astype(np.float32) * 0.3,
                     requires_grad=True)
    report = dc.grad_check(
        lambda: dc.sum_all(score_tables(grid, params, 1, cfg, train=False)),
        [grid] + list(params.values()))
    assert report.max_rel_err < 1e-3, report.worst


def test_loss_uniform_logits_is_log4():
    schema = RelSchema(("r0", "r1"))
    gold = build_gold_table([Triple(1, 1, 0, 2, 2)], 3, schema)
    logits = dc.Tensor(np.zeros((3, 3, 2, 4), dtype=np.float32))
    out = loss(logits, gold)
    np.testing.assert_allclose(float(out.data), np.log(4.0), rtol=1e-6)


def test_loss_token_mask_excludes_cells():
    schema = RelSchema(("r0",))
    gold = build_gold_table([Triple(1, 1, 0, 2, 2)], 3, schema)
    logits = np.zeros((3, 3, 1, 4), dtype=np.float32)
    logits[2, :, 0, :] = [0.0, 50.0, 0.0, 0.0]  # confidently wrong in row 3
    mask = np.array([True, True, False])
    masked = loss(dc.Tensor(logits), gold, token_mask=mask)
    np.testing.assert_allclose(float(masked.data), np.log(4.0), rtol=1e-6)
    unmasked = loss(dc.Tensor(logits), gold)
    assert float(unmasked.data) > np.log(4.0)


def test_loss_drives_logits_toward_gold(rng):
    schema = RelSchema(("r0",))
    gold = build_gold_table([Triple(1, 2, 0, 3, 4)], 4, schema)
    logits = dc.Tensor(rng.normal(size=(4, 4, 1, 4)).astype(np.float32) * 0.1,
                       requires_grad=True)
    out = loss(logits, gold)
    dc.backward(out)
    g = logits.grad
    # gradient at the gold label of a cell is negative (push the logit up)
    assert g[0, 2, 0, BB] < 0
    assert g[0, 3, 0, BE] < 0
    assert g[1, 3, 0, EE] < 0
    assert g[2, 2, 0, NA] < 0
