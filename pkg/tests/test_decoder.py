import itertools
import math

import numpy as np
import pytest

from dualslvd.algebra import BinaryPolynomial, crc_append
from dualslvd.decoder import (
    EXHAUSTED,
    FOUND,
    ListViterbi,
    branch_metric,
    decode_tb_multi,
    decode_tb_single,
    decode_tb_wava,
    decode_zt,
    path_metric,
    slvd_next_path,
    viterbi_forward,
)
from dualslvd.encoder import CodeConfig, encode, tb_encode
from dualslvd.trellis import augment_root_node, build_dual_trellis, build_multi_trellis_forest
from oracles import ml_decode, zt_codebook

A = 1.0


def toy_cfg(toy_H, mode, K=9, m=3, crc=0x9):
    return CodeConfig(H=toy_H, K=K, m=m, crc=BinaryPolynomial(crc), mode=mode)


def _open_list(t, received):
    init = np.full(t.num_states, np.inf)
    init[list(t.start_states)] = 0.0
    table = viterbi_forward(t, received, init, A)
    ends = [(table.metric[t.N, 0, s], 0, s) for s in t.end_states]
    return ListViterbi(table, ends)


def test_branch_metric():
    assert branch_metric(2.0, 0, 2.0) == 0.0
    assert branch_metric(0.0, 0, 1.5) == branch_metric(0.0, 1, 1.5) == 1.5**2
    assert branch_metric(-1.0, 1) == 0.0


def test_squared_distance_ranks_like_log_likelihood():
    rng = np.random.default_rng(3)
    words = rng.integers(0, 2, (50, 16))
    for _ in range(20):
        r = rng.normal(size=16)
        amp = 0.8
        x = amp * (1 - 2 * words)
        ll = -((r - x) ** 2).sum(axis=1) / 2 - 8 * math.log(2 * math.pi) / 2
        d = np.array([path_metric(r, w, amp) for w in words])
        assert np.argmin(d) == np.argmax(ll)


def test_noiseless_zero_word(toy_H):
    t = build_dual_trellis(toy_H, 5 * 4, zero_terminated=True)
    table = viterbi_forward(t, np.ones(t.N), np.where(np.arange(8) == 0, 0.0, np.inf))
    assert table.metric[t.N, 0, 0] == 0.0


def test_viterbi_best_is_codebook_argmin(toy_H):
    steps = 2  # 6 data bits
    book = zt_codebook(toy_H, steps)
    words = np.array([np.frombuffer(w, dtype=np.uint8) for w in book])
    t = build_dual_trellis(toy_H, words.shape[1], zero_terminated=True)
    rng = np.random.default_rng(0)
    for _ in range(50):
        r = 1 - 2 * words[rng.integers(len(words))] + rng.normal(size=words.shape[1])
        lv = _open_list(t, r)
        first = lv.next_path()
        i, d = ml_decode(r, words, A)
        assert first.metric == pytest.approx(d)
        assert np.array_equal(first.codeword(), words[i])


def test_list_enumerates_codebook_in_metric_order(toy_H):
    steps = 2
    book = zt_codebook(toy_H, steps)
    words = np.array([np.frombuffer(w, dtype=np.uint8) for w in book])
    t = build_dual_trellis(toy_H, words.shape[1], zero_terminated=True)
    rng = np.random.default_rng(1)
    r = rng.normal(size=words.shape[1])
    expected = sorted(path_metric(r, w) for w in words)
    lv = _open_list(t, r)
    got, seen = [], set()
    while True:
        p = lv.next_path()
        if p is None:
            break
        got.append(p.metric)
        seen.add(p.codeword().tobytes())
        assert path_metric(r, p.codeword()) == pytest.approx(p.metric)
    assert len(got) == len(words) == 2**6
    assert seen == set(book)
    assert np.allclose(got, expected)
    assert all(a <= b + 1e-9 for a, b in zip(got, got[1:]))
    with pytest.raises(LookupError):
        slvd_next_path(lv)


def test_tie_prefers_lower_predecessor(toy_H):
    # all-zero received: every branch costs the same, so every comparison ties
    t = build_dual_trellis(toy_H, 8, zero_terminated=True)
    lv = _open_list(t, np.zeros(t.N))
    p = lv.next_path()
    assert p.start == 0 and p.end == 0
    # ties keep column 0, the lower (state, y) predecessor, so the zero word wins
    assert not any(p.ys)
    q = lv.next_path()
    assert q.metric == p.metric and q.ys != p.ys


def test_root_keeps_best_metric(toy_H):
    t = build_dual_trellis(toy_H, 16)
    rooted = augment_root_node(t)
    rng = np.random.default_rng(5)
    r = rng.normal(size=16)
    a = _open_list(t, r).next_path()
    b = _open_list(rooted, r).next_path()
    assert a.metric == b.metric and a.ys == b.ys


def _noisy(cfg, rng, snr_db):
    amp = 10 ** (snr_db / 20)
    data = rng.integers(0, 2, cfg.K).astype(np.uint8)
    word = encode(data, cfg)
    return data, word, amp * (1 - 2 * word.astype(float)) + rng.normal(size=cfg.N), amp


def test_noiseless_rank_one(toy_H):
    rng = np.random.default_rng(2)
    zt = toy_cfg(toy_H, "ZT")
    tb = toy_cfg(toy_H, "TB")  # L = 4 steps, not a multiple of 3
    tz = build_dual_trellis(toy_H, zt.N, zero_terminated=True)
    tr = augment_root_node(build_dual_trellis(toy_H, tb.N))
    forest = build_multi_trellis_forest(toy_H, tb.N)
    for _ in range(10):
        data = rng.integers(0, 2, zt.K).astype(np.uint8)
        res = decode_zt(tz, 3.0 * (1 - 2 * encode(data, zt).astype(float)), zt, 3.0)
        assert res.found and res.list_rank == 1 and np.array_equal(res.data, data)
        data = rng.integers(0, 2, tb.K).astype(np.uint8)
        word, s0 = tb_encode(data, tb)
        r = 3.0 * (1 - 2 * word.astype(float))
        for dec, arg in ((decode_tb_single, tr), (decode_tb_multi, forest), (decode_tb_wava, tr)):
            res = dec(arg, r, tb, 3.0)
            assert res.found and res.list_rank == 1 and np.array_equal(res.data, data)
            assert res.start_state == s0
        assert decode_tb_wava(tr, r, tb, 3.0).wava_early


def test_decoders_match_ml_and_each_other(toy_H):
    cfg = toy_cfg(toy_H, "TB")
    msgs = np.array(list(itertools.product((0, 1), repeat=cfg.K)), dtype=np.uint8)
    words = np.array([tb_encode(m, cfg)[0] for m in msgs])
    tr = augment_root_node(build_dual_trellis(toy_H, cfg.N))
    forest = build_multi_trellis_forest(toy_H, cfg.N)
    rng = np.random.default_rng(11)
    wava_err = single_err = 0
    for _ in range(150):
        data, _, r, amp = _noisy(cfg, rng, 1.0)
        i, d = ml_decode(r, words, amp)
        s = decode_tb_single(tr, r, cfg, amp)
        mt = decode_tb_multi(forest, r, cfg, amp)
        w = decode_tb_wava(tr, r, cfg, amp)
        assert s.metric == pytest.approx(d) and mt.metric == pytest.approx(d)
        assert np.array_equal(s.data, msgs[i]) and np.array_equal(mt.data, msgs[i])
        assert s.tb and mt.tb and w.tb
        if w.wava_early:
            assert np.array_equal(w.data, s.data)
        K_m = cfg.K + cfg.m
        for res in (s, mt):
            assert res.insertions <= K_m * res.list_rank + 2**cfg.v - 1
        single_err += not np.array_equal(s.data, data)
        wava_err += not np.array_equal(w.data, data)
    assert wava_err >= single_err


def test_list_cap(toy_H):
    cfg = toy_cfg(toy_H, "ZT")
    t = build_dual_trellis(toy_H, cfg.N, zero_terminated=True)
    rng = np.random.default_rng(4)
    # pure noise: the best path fails the CRC most of the time
    for _ in range(20):
        r = rng.normal(size=cfg.N)
        res = decode_zt(t, r, cfg, 1.0, max_list=1)
        assert res.list_rank <= 1
        if res.status == EXHAUSTED:
            assert res.data is None and not res.found
            break
    else:
        pytest.fail("no capped decode exhausted its list")


def test_result_json(toy_H):
    cfg = toy_cfg(toy_H, "ZT")
    t = build_dual_trellis(toy_H, cfg.N, zero_terminated=True)
    data = np.zeros(cfg.K, dtype=np.uint8)
    res = decode_zt(t, np.ones(cfg.N), cfg)
    j = res.to_json()
    assert j["status"] == FOUND and j["L"] == 1 and j["data_bits"] == cfg.K
    assert set(j) >= {"data", "status", "L", "I", "metric", "tb", "wava_early"}
    assert np.array_equal(res.data, data)


def test_zt_crc_scope_excludes_termination(toy_H):
    cfg = toy_cfg(toy_H, "ZT")
    t = build_dual_trellis(toy_H, cfg.N, zero_terminated=True)
    rng = np.random.default_rng(8)
    data = rng.integers(0, 2, cfg.K).astype(np.uint8)
    word = encode(data, cfg)
    res = decode_zt(t, 1 - 2 * word.astype(float), cfg)
    assert np.array_equal(res.codeword, word)
    sys_bits = word.reshape(-1, 4)[:, list(toy_H.systematic_rails)].reshape(-1)
    assert np.array_equal(sys_bits[: cfg.K + cfg.m], crc_append(data, cfg.crc))
