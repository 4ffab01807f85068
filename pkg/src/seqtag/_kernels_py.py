"""Pure numpy implementations of the hot loops.

Shapes: ``B`` sequences padded to ``T`` steps, hidden size ``H``, ``L``
labels.  Steps at or beyond ``lengths[b]`` are never read and outputs there
are zero.
"""
import numpy as np

BACKEND = "python"


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def gru_forward(xr, xz, xh, w_rh, w_zh, w_hh, lengths):
    """Run the GRU recurrence over precomputed input projections.

    Returns hidden states ``h`` and the gate caches ``r``, ``z`` and the
    candidate ``hc``, all (B, T, H).
    """
    B, T, H = xr.shape
    h = np.zeros((B, T, H))
    r = np.zeros((B, T, H))
    z = np.zeros((B, T, H))
    hc = np.zeros((B, T, H))
    h_prev = np.zeros((B, H))
    lengths = np.asarray(lengths)
    for t in range(T):
        live = (lengths > t)[:, None]
        r_t = _sigmoid(xr[:, t] + h_prev @ w_rh.T)
        z_t = _sigmoid(xz[:, t] + h_prev @ w_zh.T)
        hc_t = np.tanh(xh[:, t] + (r_t * h_prev) @ w_hh.T)
        h_t = z_t * h_prev + (1.0 - z_t) * hc_t
        h[:, t] = np.where(live, h_t, 0.0)
        r[:, t] = np.where(live, r_t, 0.0)
        z[:, t] = np.where(live, z_t, 0.0)
        hc[:, t] = np.where(live, hc_t, 0.0)
        h_prev = np.where(live, h_t, h_prev)
    return h, r, z, hc


def gru_backward(h, r, z, hc, lengths, w_rh, w_zh, w_hh, dh, dw_rh, dw_zh, dw_hh):
    """Backpropagate ``dh`` (B, T, H) through the recurrence.

    Adds into ``dw_rh``, ``dw_zh``, ``dw_hh`` and returns the gradients with
    respect to the three input projections.
    """
    B, T, H = h.shape
    dxr = np.zeros((B, T, H))
    dxz = np.zeros((B, T, H))
    dxh = np.zeros((B, T, H))
    d_next = np.zeros((B, H))
    lengths = np.asarray(lengths)
    for t in range(T - 1, -1, -1):
        live = (lengths > t)[:, None]
        h_prev = h[:, t - 1] if t > 0 else np.zeros((B, H))
        r_t, z_t, hc_t = r[:, t], z[:, t], hc[:, t]
        d = np.where(live, dh[:, t] + d_next, 0.0)
        daz = d * (h_prev - hc_t) * z_t * (1.0 - z_t)
        dah = d * (1.0 - z_t) * (1.0 - hc_t * hc_t)
        rh = r_t * h_prev
        d_rh = dah @ w_hh
        dar = d_rh * h_prev * r_t * (1.0 - r_t)
        dw_hh += dah.T @ rh
        dw_rh += dar.T @ h_prev
        dw_zh += daz.T @ h_prev
        d_prev = d * z_t + d_rh * r_t + dar @ w_rh + daz @ w_zh
        dxr[:, t] = dar
        dxz[:, t] = daz
        dxh[:, t] = dah
        d_next = np.where(live, d_prev, d_next)
    return dxr, dxz, dxh


def _lse_rows(m, axis):
    mx = m.max(axis=axis, keepdims=True)
    return (mx + np.log(np.exp(m - mx).sum(axis=axis, keepdims=True))).squeeze(axis)


def crf_forward_backward(emissions, lengths, transitions, initial):
    """Log-partition per sequence plus expected label and transition counts.

    Returns ``(log_z (B,), node (B, T, L), edge (L, L))`` where ``edge`` is
    summed over the batch.
    """
    B, T, L = emissions.shape
    log_z = np.zeros(B)
    node = np.zeros((B, T, L))
    edge = np.zeros((L, L))
    for b in range(B):
        n = int(lengths[b])
        e = emissions[b, :n]
        alpha = np.empty((n, L))
        beta = np.zeros((n, L))
        alpha[0] = initial + e[0]
        for t in range(1, n):
            alpha[t] = _lse_rows(alpha[t - 1][:, None] + transitions, 0) + e[t]
        for t in range(n - 2, -1, -1):
            beta[t] = _lse_rows(transitions + (e[t + 1] + beta[t + 1])[None, :], 1)
        lz = _lse_rows(alpha[n - 1], 0)
        log_z[b] = lz
        node[b, :n] = np.exp(alpha + beta - lz)
        for t in range(1, n):
            edge += np.exp(alpha[t - 1][:, None] + transitions
                           + (e[t] + beta[t])[None, :] - lz)
    return log_z, node, edge


def crf_viterbi(emissions, lengths, transitions, initial):
    """Best tag sequence per row; ties go to the lower label index."""
    B, T, L = emissions.shape
    tags = np.zeros((B, T), dtype=np.int64)
    scores = np.zeros(B)
    for b in range(B):
        n = int(lengths[b])
        e = emissions[b, :n]
        back = np.zeros((n, L), dtype=np.int64)
        delta = initial + e[0]
        for t in range(1, n):
            cand = delta[:, None] + transitions
            # argmax returns the first maximum, i.e. the lowest index on ties
            back[t] = cand.argmax(axis=0)
            delta = cand[back[t], np.arange(L)] + e[t]
        best = int(delta.argmax())
        scores[b] = delta[best]
        tags[b, n - 1] = best
        for t in range(n - 1, 0, -1):
            best = int(back[t, best])
            tags[b, t - 1] = best
    return tags, scores
