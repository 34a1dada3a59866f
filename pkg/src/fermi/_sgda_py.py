"""Pure numpy implementation of the SGDA inner loop.

One call advances the solver state through a contiguous run of iterations
("segment"); the driver in :mod:`fermi.solver` handles batch planning,
diagnostics, and snapshots between segments. The compiled backend
(``fermi._sgda_cy``) implements the same contract; see
:func:`run_segment` for the authoritative semantics.

Per iteration, with minibatch B, probabilities f_i = softmax(W x_i + b),
observed set O(B) = {i in B : s_i known}, and fairness-relevant set
R(B) = {i in O(B) : conditioning class of i is tracked}:

    theta <- theta - eta_theta * [ (1/|B|)    sum_{i in B}    grad ce_i
                                 + (lam/|O|)  sum_{i in R}    grad psi_i ]
    V_c   <- V_c   + (2 lam eta_w / |O|) sum_{i in R, class c}
                     ( -V_c diag(f_i) + scale_c(s_i) e_{s_i} f_i^T )

followed by an optional Frobenius-ball projection of each updated critic
block V_c. Both updates are evaluated at the pre-update state. When lam is 0
the fairness machinery is skipped entirely, so the trajectory is literally
plain minibatch SGD on the cross-entropy. A batch with |O| = 0 applies only
the loss update and is counted as skipped; its psi record is NaN.
"""

import numpy as np

from .model import PROB_FLOOR

__all__ = ["run_segment"]


def run_segment(X, labels, fclass, s_codes, weights, bias, critic, scales,
                batches, batch_sizes, eta_theta, eta_w, lam, radius,
                loss_out, psi_out):
    """Advance ``len(batch_sizes)`` iterations, mutating weights/bias/critic
    in place and filling the per-iteration loss and psi records.

    ``batches`` holds the concatenated minibatch indices, ``fclass`` the
    critic-block index per sample (-1 = contributes no fairness term),
    ``s_codes`` the sensitive group per sample (-1 = masked), ``scales`` the
    per-block 1/sqrt(group frequency) vectors, ``radius`` the projection
    radius (<= 0 disables projection). Returns the number of batches whose
    fairness update was skipped for lack of observed sensitive attributes.
    """
    n_iter = batch_sizes.shape[0]
    skipped = 0
    pos = 0
    for t in range(n_iter):
        b = int(batch_sizes[t])
        idx = batches[pos:pos + b]
        pos += b
        xb = X[idx]
        yb = labels[idx]

        z = xb @ weights.T + bias
        z -= z.max(axis=1, keepdims=True)
        np.exp(z, out=z)
        z /= z.sum(axis=1, keepdims=True)
        rows = np.arange(b)
        loss_out[t] = -np.log(np.maximum(z[rows, yb], PROB_FLOOR)).mean()
        hce = z.copy()
        hce[rows, yb] -= 1.0
        gw = hce.T @ xb
        gb = hce.sum(axis=0)

        if lam == 0.0:
            psi_out[t] = np.nan
            coef_l = eta_theta / b
            weights -= coef_l * gw
            bias -= coef_l * gb
            continue

        si = s_codes[idx]
        obs = si >= 0
        nobs = int(np.count_nonzero(obs))
        coef_l = eta_theta / b
        weights -= coef_l * gw
        bias -= coef_l * gb
        if nobs == 0:
            psi_out[t] = np.nan
            skipped += 1
            continue

        rel = obs & (fclass[idx] >= 0)
        nrel = int(np.count_nonzero(rel))
        if nrel == 0:
            psi_out[t] = 0.0
            continue

        f_rel = z[rel]
        x_rel = xb[rel]
        c_rel = fclass[idx][rel]
        r_rel = si[rel]
        mats = critic[c_rel]  # gather copies: safe against the update below
        col_sq = np.einsum("nkm,nkm->nm", mats, mats)
        sc = scales[c_rel, r_rel]
        g = -col_sq + (2.0 * sc)[:, None] * mats[np.arange(nrel), r_rel]
        fg = np.einsum("nm,nm->n", f_rel, g)
        psi_out[t] = float((fg.sum() - nrel) / nobs)

        hpsi = f_rel * (g - fg[:, None])
        coef_f = eta_theta * lam / nobs
        weights -= coef_f * (hpsi.T @ x_rel)
        bias -= coef_f * hpsi.sum(axis=0)

        coef_w = 2.0 * eta_w * lam / nobs
        for c in np.unique(c_rel):
            in_c = c_rel == c
            f_c = f_rel[in_c]
            fsum = f_c.sum(axis=0)
            acc = np.zeros_like(critic[c])
            np.add.at(acc, r_rel[in_c], scales[c, r_rel[in_c]][:, None] * f_c)
            critic[c] += coef_w * (acc - critic[c] * fsum[None, :])
            if radius > 0.0:
                nrm = float(np.sqrt(np.sum(critic[c] * critic[c])))
                if nrm > radius:
                    critic[c] *= radius / nrm
    return skipped
