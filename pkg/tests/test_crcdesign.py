import itertools

import numpy as np
import pytest

from dualslvd.algebra import BinaryPolynomial, crc_candidates, int_mod, int_to_bits
from dualslvd.crcdesign import (
    InsufficientThreshold,
    collect_iee_tb,
    collect_iee_zt,
    design_crc,
    free_distance,
    low_weight_paths,
    reconstruct_tb_paths,
    reconstruct_zt_paths,
    search_dso_crc,
)
from dualslvd.encoder import CodeConfig, ParityCheck, state_machine, tb_encode, zt_encode
from oracles import tb_codebook, zt_codebook


def brute_iees(H, max_len, d_tilde):
    """Every input sequence from state 0 that first returns to 0 at its end."""
    sm = state_machine(H)
    found = set()
    for length in range(1, max_len + 1):
        for u in itertools.product(range(sm.num_inputs), repeat=length):
            s, w, ok = 0, 0, True
            for i, x in enumerate(u):
                w += sm.weight_list[s][x]
                s = sm.next_list[s][x]
                if s == 0 and i < length - 1:
                    ok = False
                    break
            if ok and s == 0 and 0 < w < d_tilde:
                found.add(u)
    return found


def event_inputs(e, k):
    return tuple((e.inputs >> (k * (e.length - 1 - i))) & ((1 << k) - 1) for i in range(e.length))


def test_threshold_one_is_empty(toy_H):
    assert collect_iee_zt(toy_H, 1) == []


@pytest.mark.parametrize("name,max_len,d", [("toy_H", 5, 6), ("v3_H", 8, 7)])
def test_zt_iees_complete(request, name, max_len, d):
    H = request.getfixturevalue(name)
    got = collect_iee_zt(H, d, max_len=max_len)
    keys = [event_inputs(e, H.n - 1) for e in got]
    assert len(keys) == len(set(keys))
    assert set(keys) == brute_iees(H, max_len, d)


def test_events_replay(v4_H):
    sm = state_machine(v4_H)
    events = collect_iee_tb(v4_H, 7, 12)
    assert any(events[s] for s in range(1, 16))
    for sigma, evs in events.items():
        for e in evs:
            s = sigma
            states = []
            for x in event_inputs(e, 3):
                s = sm.next_list[s][x]
                states.append(s)
            assert states[-1] == sigma
            assert all(t > sigma for t in states[:-1])
            out, _ = sm.run(sigma, list(event_inputs(e, 3)))
            assert int(out.sum()) == e.weight
            assert np.array_equal(out, e.output_bits(4))


def test_tb_events_at_zero_are_zt_events(v4_H):
    zt = collect_iee_zt(v4_H, 8, max_len=20)
    tb = collect_iee_tb(v4_H, 8, 20)[0]
    assert {(e.inputs, e.length) for e in zt} == {(e.inputs, e.length) for e in tb}


def _as_book(paths):
    return {o: (i, w) for i, w, o in zip(paths.inputs, paths.weights, paths.outputs)}


def _brute_low(book, n_out, d, k):
    out = {}
    for word, u in book.items():
        bits = np.frombuffer(word, dtype=np.uint8)
        w = int(bits.sum())
        if 0 < w < d:
            ins = 0
            for x in u:
                ins = (ins << k) | x
            out[int("".join(map(str, bits)), 2)] = w
    return out


@pytest.mark.parametrize("name,steps,d", [("toy_H", 3, 7), ("v3_H", 5, 7), ("v4_H", 3, 8)])
def test_zt_reconstruction_matches_codebook(request, name, steps, d):
    H = request.getfixturevalue(name)
    k = H.n - 1
    paths = reconstruct_zt_paths(collect_iee_zt(H, d, max_len=steps), H, steps, d)
    got = _as_book(paths)
    assert len(got) == len(paths)
    assert {o: w for o, (i, w) in got.items()} == _brute_low(zt_codebook(H, steps), H.n, d, k)
    sm = state_machine(H)
    for i, w, o in zip(paths.inputs, paths.weights, paths.outputs):
        u = [(i >> (k * (steps - 1 - t))) & ((1 << k) - 1) for t in range(steps)]
        assert sm.run(0, u)[0].tolist() == list(int_to_bits(o, paths.output_len)[: H.n * steps])


# toy L=3 is the singular case where some inputs have several TB start states
@pytest.mark.parametrize("name,steps,d", [("toy_H", 3, 7), ("toy_H", 4, 7), ("v3_H", 5, 7), ("v4_H", 3, 8)])
def test_tb_reconstruction_matches_codebook(request, name, steps, d):
    H = request.getfixturevalue(name)
    paths = reconstruct_tb_paths(collect_iee_tb(H, d, steps), H, steps, d)
    got = _as_book(paths)
    assert len(got) == len(paths)
    assert {o: w for o, (i, w) in got.items()} == _brute_low(tb_codebook(H, steps), H.n, d, H.n - 1)


def test_tb_paths_closed_under_rotation(v4_H):
    steps = 6
    paths = reconstruct_tb_paths(collect_iee_tb(v4_H, 7, steps), v4_H, steps, 7)
    outs = set(paths.outputs)
    width = 4 * steps
    for o in outs:
        rot = ((o << 4) | (o >> (width - 4))) & ((1 << width) - 1)
        assert rot in outs


def test_no_room_gives_empty(v4_H):
    # nothing lies below the free distance (4), so there is nothing to place
    assert len(reconstruct_zt_paths([], v4_H, 1, 3)) == 0


def _brute_spectrum(cfg_for, K, candidates, d_limit):
    out = {}
    for p in candidates:
        cfg = cfg_for(p)
        counts = {}
        for msg in itertools.product((0, 1), repeat=K):
            if not any(msg):
                continue
            word = zt_encode(np.array(msg, np.uint8), cfg) if cfg.mode == "ZT" else tb_encode(np.array(msg, np.uint8), cfg)[0]
            w = int(word.sum())
            if w < d_limit:
                counts[w] = counts.get(w, 0) + 1
        out[p.bits] = counts
    return out


@pytest.mark.parametrize("mode", ["ZT", "TB"])
def test_dso_matches_exhaustive_search(toy_H, mode):
    K, m = 9, 3
    cands = crc_candidates(m)
    design = design_crc(toy_H, K, m, mode)
    d = design.d_tilde
    brute = _brute_spectrum(lambda p: CodeConfig(toy_H, K, m, p, mode), K, cands, d)
    for p in cands:
        assert design.spectra[p.bits].counts == brute[p.bits]

    def key(p):
        c = brute[p.bits]
        d0 = min(c)
        return (-d0,) + tuple(c.get(x, 0) for x in range(d0, d)), p.bits

    assert design.crc == min(cands, key=key)


def test_insufficient_threshold(v4_H):
    paths = low_weight_paths(v4_H, 93, 3, "TB", 5)
    with pytest.raises(InsufficientThreshold) as info:
        search_dso_crc(paths, 3, 5)
    assert info.value.needed > 5


def test_free_distance(v4_H, toy_H):
    assert free_distance(v4_H) == 4
    assert free_distance(toy_H) >= 1


@pytest.mark.parametrize("m,crc", [(6, 0x4D), (7, 0xF3), (8, 0x1E9)])
def test_zt_v4_higher_degrees(v4_H, m, crc):
    assert design_crc(v4_H, 90 - m, m, "ZT").crc.bits == crc


@pytest.mark.parametrize("m,crc", [(3, 0x9), (4, 0x15), (5, 0x25), (6, 0x7B), (7, 0xED)])
def test_zt_v5(m, crc):
    H = ParityCheck.from_octal("47,73,57,75")
    assert design_crc(H, 90 - m, m, "ZT").crc.bits == crc


def test_tb_degree_eight_listed_polynomial_admits_weight_five(v4_H):
    """Our degree-8 TB pick reaches distance 8; 0x1CF lets a weight-5 word through."""
    design = design_crc(v4_H, 88, 8, "TB")
    assert design.crc.bits == 0x10D and design.spectrum.d_min == 8
    assert design.spectra[0x1CF].d_min == 5
    # explicit witness, re-encoded independently of the search
    inputs = int("04000000000000000000000000000041", 8)
    assert int_mod(inputs, 0x1CF) == 0
    cfg = CodeConfig(v4_H, 88, 8, BinaryPolynomial(0x1CF), "TB")
    word, _ = tb_encode(int_to_bits(inputs, 96)[:88], cfg)
    assert int(word.sum()) == 5
