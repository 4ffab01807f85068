import numpy as np
import pytest

from seqtag import kernels
from seqtag.numerics import Rng


def _gru_inputs(seed, B=3, T=5, H=4):
    rng = Rng(seed)
    xs = [np.ascontiguousarray(rng.uniform(-1, 1, (B, T, H))) for _ in range(3)]
    ws = [rng.uniform(-0.8, 0.8, (H, H)) for _ in range(3)]
    lengths = np.array([T, 2, 1][:B] + [T] * max(0, B - 3), dtype=np.int64)
    return xs, ws, lengths


def test_fallback_is_always_available():
    names = [b.BACKEND for b in kernels.available_backends()]
    assert "python" in names


def test_env_var_selects_python(monkeypatch):
    import importlib
    monkeypatch.setenv("SEQTAG_KERNELS", "python")
    mod = importlib.reload(kernels)
    try:
        assert mod.active.BACKEND == "python"
    finally:
        monkeypatch.delenv("SEQTAG_KERNELS")
        importlib.reload(kernels)


@pytest.mark.skipif(len(kernels.available_backends()) < 2, reason="compiled backend not built")
def test_backends_agree():
    py, cy = kernels.python_backend, kernels.compiled_backend
    xs, ws, lengths = _gru_inputs(3)
    fa, fb = py.gru_forward(*xs, *ws, lengths), cy.gru_forward(*xs, *ws, lengths)
    for a, b in zip(fa, fb):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)
    dh = np.ascontiguousarray(Rng(4).uniform(-1, 1, fa[0].shape))
    grads = []
    for mod, fwd in ((py, fa), (cy, fb)):
        dws = [np.zeros_like(w) for w in ws]
        dx = mod.gru_backward(*fwd, lengths, *ws, dh, *dws)
        grads.append(list(dx) + dws)
    for a, b in zip(*grads):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)

    rng = Rng(5)
    e = np.ascontiguousarray(rng.uniform(-2, 2, (4, 6, 3)))
    A, init = rng.uniform(-1, 1, (3, 3)), rng.uniform(-1, 1, (3,))
    lens = np.array([6, 1, 3, 4], dtype=np.int64)
    for a, b in zip(py.crf_forward_backward(e, lens, A, init),
                    cy.crf_forward_backward(e, lens, A, init)):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
    ta, sa = py.crf_viterbi(e, lens, A, init)
    tb, sb = cy.crf_viterbi(e, lens, A, init)
    np.testing.assert_array_equal(ta, tb)
    np.testing.assert_allclose(sa, sb, atol=1e-12)


def test_gru_padding_is_ignored(backend):
    xs, ws, lengths = _gru_inputs(9)
    h, *_ = kernels.gru_forward(*xs, *ws, lengths)
    cut = [np.ascontiguousarray(x[1:2, :2]) for x in xs]
    h_short, *_ = kernels.gru_forward(*cut, *ws, np.array([2]))
    np.testing.assert_allclose(h[1, :2], h_short[0], atol=1e-15)
    assert not h[1, 2:].any()
