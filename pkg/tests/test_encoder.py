import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dualslvd.algebra import BinaryPolynomial, crc_append, crc_check
from dualslvd.encoder import (
    CodeConfig,
    ConfigError,
    EncodingError,
    ParityCheck,
    blocklength,
    encode_step,
    gf2_matpow,
    gf2_rank,
    pack_inputs,
    state_machine,
    tb_encode,
    tb_initial_state,
    zt_encode,
)
from dualslvd.trellis import build_termination_table
from oracles import syndrome_tb, syndrome_zt

P = BinaryPolynomial


def v4_cfg(mode, K=None, m=3, crc=0x9):
    H = ParityCheck.from_octal("33,25,37,31")
    K = K if K is not None else (93 if mode == "TB" else 87)
    return CodeConfig(H=H, K=K, m=m, crc=P(crc), mode=mode)


def test_parity_check_shape(v4_H, toy_H):
    assert (v4_H.n, v4_H.v) == (4, 4)
    assert (toy_H.n, toy_H.v) == (4, 2)
    assert v4_H.to_octal() == "33,25,37,31"


def test_parity_check_rejects_zero_feedback_rail():
    with pytest.raises(ConfigError):
        ParityCheck.from_octal("3,0")


def test_rest_state_is_fixed(toy_H):
    out, nxt = encode_step(0, (0, 0, 0), toy_H)
    assert not out.any() and nxt == 0


def test_single_step_by_hand(toy_H):
    # rails 0, 2, 3 are systematic and rail 1 (h=7) is the parity rail.
    # u=(1,0,0) drives rail 0: partial sums 110, parity bit 0, next state 11.
    assert toy_H.parity_rail == 1
    assert toy_H.systematic_rails == (0, 2, 3)
    out, nxt = encode_step(0, (1, 0, 0), toy_H)
    assert list(out) == [1, 0, 0, 0]
    assert nxt == 0b11


def test_parity_rail_is_lowest_rail_with_constant_term(v4_H):
    # 31 is h^(0) and has a constant term
    assert v4_H.parity_rail == 0
    assert v4_H.systematic_rails == (1, 2, 3)


@pytest.mark.parametrize(
    "K,m,mode,N",
    [(87, 3, "ZT", 128), (93, 3, "TB", 128), (79, 11, "ZT", 128), (86, 10, "TB", 128)],
)
def test_blocklength(K, m, mode, N):
    assert blocklength(K, m, 4, 4, mode) == N


def test_blocklength_divisibility():
    with pytest.raises(ConfigError):
        blocklength(92, 3, 4, 4, "TB")
    with pytest.raises(ConfigError):
        v4_cfg("TB", K=92)


def test_config_checks_crc_degree():
    with pytest.raises(ConfigError):
        v4_cfg("TB", m=4, K=92, crc=0x9)


def test_zero_data_gives_zero_codeword():
    for mode in ("ZT", "TB"):
        cfg = v4_cfg(mode)
        word = zt_encode(np.zeros(cfg.K, np.uint8), cfg) if mode == "ZT" else tb_encode(np.zeros(cfg.K, np.uint8), cfg)[0]
        assert word.shape == (128,) and not word.any()


def _systematic(word, cfg):
    rails = np.asarray(word).reshape(-1, cfg.n)[:, list(cfg.H.systematic_rails)]
    return rails.reshape(-1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**87 - 1))
def test_zt_codeword_properties(seed_bits):
    cfg = v4_cfg("ZT")
    data = np.array([(seed_bits >> i) & 1 for i in range(cfg.K)], dtype=np.uint8)
    word = zt_encode(data, cfg)
    assert word.shape == (cfg.N,)
    assert syndrome_zt(word, cfg.H) == 0
    sys_bits = _systematic(word, cfg)
    assert np.array_equal(sys_bits[: cfg.K + cfg.m], crc_append(data, cfg.crc))
    assert crc_check(sys_bits[: cfg.K + cfg.m], cfg.crc)
    # the encoder returns to rest after termination
    sm = state_machine(cfg.H)
    assert sm.run(0, pack_inputs(sys_bits, cfg.n - 1))[1] == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**93 - 1))
def test_tb_codeword_properties(seed_bits):
    cfg = v4_cfg("TB")
    data = np.array([(seed_bits >> i) & 1 for i in range(cfg.K)], dtype=np.uint8)
    word, s0 = tb_encode(data, cfg)
    assert syndrome_tb(word, cfg.H) == 0
    assert np.array_equal(_systematic(word, cfg), crc_append(data, cfg.crc))
    inputs = pack_inputs(crc_append(data, cfg.crc), cfg.n - 1)
    assert s0 == tb_initial_state(inputs, cfg.H, "exhaustive")
    assert state_machine(cfg.H).run(s0, inputs)[1] == s0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**87 - 1), st.integers(0, 2**87 - 1))
def test_zt_linearity(a, b):
    cfg = v4_cfg("ZT")
    da = np.array([(a >> i) & 1 for i in range(cfg.K)], dtype=np.uint8)
    db = np.array([(b >> i) & 1 for i in range(cfg.K)], dtype=np.uint8)
    assert np.array_equal(zt_encode(da ^ db, cfg), zt_encode(da, cfg) ^ zt_encode(db, cfg))


def test_termination_table(v4_H, toy_H, v3_H):
    table = build_termination_table(v4_H)
    assert table.steps == 2 and table.input_bits == 6
    assert sum(len(f) for f in table.free) == 4
    sm = state_machine(v4_H)
    assert not table.outputs[0].any()
    for s in range(16):
        assert sm.run(s, table.inputs[s])[1] == 0
    for H in (toy_H, v3_H):
        t = build_termination_table(H)
        for s in range(1 << H.v):
            assert state_machine(H).run(s, t.inputs[s])[1] == 0


def test_toy_zero_input_map_has_order_three(toy_H):
    A, _ = state_machine(toy_H).linear_maps()
    eye = np.eye(2, dtype=np.uint8)
    assert np.array_equal(gf2_matpow(A, 3), eye)
    assert gf2_rank(gf2_matpow(A, 3) ^ eye) == 0
    assert gf2_rank(gf2_matpow(A, 4) ^ eye) == 2


def test_tb_solve_falls_back_when_singular(toy_H):
    # L = 3: A^L + I = 0, so the affine solve is impossible and the scan is used
    sm = state_machine(toy_H)
    for u in ([1, 0, 0], [0, 5, 3], [7, 7, 7]):
        try:
            s = tb_initial_state(u, toy_H)
        except EncodingError:
            assert all(sm.run(x, u)[1] != x for x in range(4))
            continue
        assert sm.run(s, u)[1] == s
        assert s == tb_initial_state(u, toy_H, "exhaustive")
