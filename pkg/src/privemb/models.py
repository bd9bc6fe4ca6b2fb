"""Encoder, decoders, adversaries, and their hand-written gradients.

Six wiring variants share one two-layer graph-convolution encoder:

  GAE        plain reconstruction, full feature matrix
  GAE_RM     plain reconstruction, private attribute removed from features
  APDGE      privacy labels concatenated for the decoder, Gaussian prior
             matching on the compressed code, expansion layer to the
             release width
  APPGE      adversarial attacker purging the private attribute, no
             expansion, no prior matching
  APGE       APDGE and APPGE combined
  APGE_NOEXP APGE without the expansion layer (release width equals the
             code width)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .numkit import (
    Rng,
    ShapeError,
    bce_with_logits,
    derive_seed,
    matmul,
    relu,
    relu_backward,
    sigmoid,
    softmax_cross_entropy,
    softmax_rows,
    softplus,
    spmm,
)

VARIANTS = ("GAE", "GAE_RM", "APDGE", "APPGE", "APGE", "APGE_NOEXP")

EXPANSION_VARIANTS = frozenset({"APDGE", "APGE"})
CONCAT_VARIANTS = frozenset({"APDGE", "APGE", "APGE_NOEXP"})
DISCRIMINATOR_VARIANTS = frozenset({"APDGE", "APGE", "APGE_NOEXP"})
ATTACKER_VARIANTS = frozenset({"APPGE", "APGE", "APGE_NOEXP"})

_DISC_HIDDEN = 64


@dataclass
class ModelState:
    """All trainable parameters for one variant.

    Construction validates that exactly the blocks the variant uses are
    present: expansion (We), discriminator (Wd1/bd1/Wd2/bd2), attacker
    (Wa/ba). ``heads`` maps each utility attribute name to its decoder
    weight matrix.
    """

    variant: str
    W0: np.ndarray
    W1: np.ndarray
    heads: dict
    We: np.ndarray = None
    Wd1: np.ndarray = None
    bd1: np.ndarray = None
    Wd2: np.ndarray = None
    bd2: np.ndarray = None
    Wa: np.ndarray = None
    ba: np.ndarray = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant '{self.variant}'")
        wants_exp = self.variant in EXPANSION_VARIANTS
        wants_disc = self.variant in DISCRIMINATOR_VARIANTS
        wants_att = self.variant in ATTACKER_VARIANTS
        if wants_exp != (self.We is not None):
            raise ValueError(f"{self.variant}: expansion layer wiring mismatch")
        disc = [self.Wd1, self.bd1, self.Wd2, self.bd2]
        if wants_disc != all(p is not None for p in disc):
            raise ValueError(f"{self.variant}: discriminator wiring mismatch")
        if not wants_disc and any(p is not None for p in disc):
            raise ValueError(f"{self.variant} does not use a discriminator")
        att = [self.Wa, self.ba]
        if wants_att != all(p is not None for p in att):
            raise ValueError(f"{self.variant}: attacker wiring mismatch")
        if not wants_att and any(p is not None for p in att):
            raise ValueError(f"{self.variant} does not use an attacker")

    def obf_params(self) -> dict:
        """Encoder, expansion, and decoder heads: everything the
        reconstruction objective trains."""
        out = {"W0": self.W0, "W1": self.W1}
        if self.We is not None:
            out["We"] = self.We
        for name, w in self.heads.items():
            out[f"head:{name}"] = w
        return out

    def encoder_params(self) -> dict:
        return {"W0": self.W0, "W1": self.W1}

    def disc_params(self) -> dict:
        return {"Wd1": self.Wd1, "bd1": self.bd1, "Wd2": self.Wd2, "bd2": self.bd2}

    def attacker_params(self) -> dict:
        return {"Wa": self.Wa, "ba": self.ba}


def init_state(variant: str, feat_dim: int, hidden: int, release_dim: int,
               code_dim: int, utility_dims: dict, m_private: int, seed: int) -> ModelState:
    """Glorot-initialize weights, zero biases, one derived stream per tensor."""

    def glorot(name, rows, cols):
        return Rng(derive_seed(seed, f"init/{name}")).glorot(rows, cols)

    enc_out = code_dim if variant in (EXPANSION_VARIANTS | {"APGE_NOEXP"}) else release_dim
    release = code_dim if variant == "APGE_NOEXP" else release_dim
    dec_in = release + (m_private if variant in CONCAT_VARIANTS else 0)

    kwargs = dict(
        variant=variant,
        W0=glorot("W0", feat_dim, hidden),
        W1=glorot("W1", hidden, enc_out),
        heads={name: glorot(f"head:{name}", dec_in, m) for name, m in utility_dims.items()},
    )
    if variant in EXPANSION_VARIANTS:
        kwargs["We"] = glorot("We", code_dim, release_dim)
    if variant in DISCRIMINATOR_VARIANTS:
        kwargs["Wd1"] = glorot("Wd1", enc_out, _DISC_HIDDEN)
        kwargs["bd1"] = np.zeros(_DISC_HIDDEN)
        kwargs["Wd2"] = glorot("Wd2", _DISC_HIDDEN, 1)
        kwargs["bd2"] = np.zeros(1)
    if variant in ATTACKER_VARIANTS:
        kwargs["Wa"] = glorot("Wa", release, m_private)
        kwargs["ba"] = np.zeros(m_private)
    return ModelState(**kwargs)


@dataclass
class Batch:
    """Per-run tensors shared by every loss: normalized adjacency, features,
    reconstruction targets, and label blocks."""

    laplacian: sp.csr_matrix
    features: np.ndarray
    link_targets: sp.csr_matrix
    utility: dict
    privacy_onehot: np.ndarray
    privacy_mask: np.ndarray
    _dense_targets: np.ndarray = field(default=None, repr=False)
    _pos_pairs: tuple = field(default=None, repr=False)
    _pos_keys: set = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def pos_weight(self) -> float:
        nnz = self.link_targets.nnz
        return (self.n * self.n - nnz) / nnz

    def dense_targets(self) -> np.ndarray:
        if self._dense_targets is None:
            self._dense_targets = np.asarray(self.link_targets.todense(), dtype=np.float64)
        return self._dense_targets

    def positive_pairs(self):
        """All ordered nonzero target pairs, self-loops included."""
        if self._pos_pairs is None:
            coo = self.link_targets.tocoo()
            self._pos_pairs = (coo.row.astype(np.int64), coo.col.astype(np.int64))
        return self._pos_pairs

    def positive_keys(self) -> np.ndarray:
        """Sorted i*n+j keys of the nonzero targets, for fast rejection."""
        if self._pos_keys is None:
            rows, cols = self.positive_pairs()
            self._pos_keys = np.sort(rows * np.int64(self.n) + cols)
        return self._pos_keys


def gcn_encode(lap, x, w0, w1) -> np.ndarray:
    """Two-layer graph convolution: ReLU after the first layer, linear second."""
    return spmm(lap, matmul(relu(spmm(lap, matmul(x, w0))), w1))


def encoder_forward(lap, x, w0, w1):
    pre = spmm(lap, matmul(x, w0))
    hidden = relu(pre)
    z = spmm(lap, matmul(hidden, w1))
    return z, (pre, hidden)


def encoder_backward(dz, cache, lap, x, w1):
    pre, hidden = cache
    dmix = spmm(lap, dz)
    dw1 = matmul(hidden.T, dmix)
    dhidden = matmul(dmix, w1.T)
    dpre = relu_backward(dhidden, pre)
    dw0 = matmul(x.T, spmm(lap, dpre))
    return dw0, dw1


def expand(z_code, we) -> np.ndarray:
    """Linear expansion from the code width to the release width."""
    return matmul(z_code, we)


def concat_privacy(z, privacy_onehot) -> np.ndarray:
    """Append the one-hot private label to each row; missing labels append zeros."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(privacy_onehot, dtype=np.float64)
    if z.shape[0] != y.shape[0]:
        raise ShapeError("embedding and label row counts differ")
    return np.hstack([z, y])


def decode_links(z_in) -> np.ndarray:
    """Inner-product link logits."""
    z_in = np.asarray(z_in, dtype=np.float64)
    return z_in @ z_in.T


def link_loss_exact(z_in, targets_dense, pos_weight):
    logits = decode_links(z_in)
    loss, g = bce_with_logits(logits, targets_dense, pos_weight)
    dz = (g + g.T) @ z_in
    return loss, dz


def link_loss_sampled(z_in, pos_rows, pos_cols, neg_rows, neg_cols, n_neg_total):
    """Balanced link loss over all positives plus sampled negatives.

    Scaled so that sampling every negative exactly once reproduces the
    exact-mode value and gradient.
    """
    n = z_in.shape[0]
    scale = n_neg_total / float(n * n)
    x_pos = np.einsum("ij,ij->i", z_in[pos_rows], z_in[pos_cols])
    x_neg = np.einsum("ij,ij->i", z_in[neg_rows], z_in[neg_cols])
    loss = scale * (float(softplus(-x_pos).mean()) + float(softplus(x_neg).mean()))
    gp = scale * (sigmoid(x_pos) - 1.0) / x_pos.size
    gn = scale * sigmoid(x_neg) / x_neg.size
    dz = np.zeros_like(z_in)
    np.add.at(dz, pos_rows, gp[:, None] * z_in[pos_cols])
    np.add.at(dz, pos_cols, gp[:, None] * z_in[pos_rows])
    np.add.at(dz, neg_rows, gn[:, None] * z_in[neg_cols])
    np.add.at(dz, neg_cols, gn[:, None] * z_in[neg_rows])
    return float(loss), dz


def sample_negative_pairs(batch: Batch, count: int, rng: Rng):
    """Ordered (i, j) pairs with a zero reconstruction target, with replacement."""
    n = batch.n
    pos_keys = batch.positive_keys()
    rows = []
    cols = []
    have = 0
    while have < count:
        k = max(256, count - have)
        cand = rng.integers(0, n, size=(k, 2)).astype(np.int64)
        keys = cand[:, 0] * np.int64(n) + cand[:, 1]
        idx = np.minimum(np.searchsorted(pos_keys, keys), pos_keys.size - 1)
        good = cand[pos_keys[idx] != keys]
        rows.append(good[:, 0])
        cols.append(good[:, 1])
        have += good.shape[0]
    rows = np.concatenate(rows)[:count]
    cols = np.concatenate(cols)[:count]
    return rows, cols


def link_loss(z_in, batch: Batch, mode: str = "exact", rng: Rng = None,
              negs_per_pos: int = 5, neg_pairs=None):
    """Dispatch between the dense all-pairs loss and the sampled one."""
    if mode == "exact":
        return link_loss_exact(z_in, batch.dense_targets(), batch.pos_weight)
    if mode != "sampled":
        raise ValueError(f"unknown link loss mode '{mode}'")
    pos_rows, pos_cols = batch.positive_pairs()
    if neg_pairs is not None:
        neg_rows, neg_cols = neg_pairs
    else:
        if rng is None:
            raise ValueError("sampled mode needs an rng or explicit negatives")
        neg_rows, neg_cols = sample_negative_pairs(batch, negs_per_pos * pos_rows.size, rng)
    n_neg_total = batch.n * batch.n - batch.link_targets.nnz
    return link_loss_sampled(z_in, pos_rows, pos_cols, neg_rows, neg_cols, n_neg_total)


def attr_loss(z_in, wc, onehot, mask):
    """Masked softmax cross-entropy for one utility head.

    Returns (loss, d_z_in, d_wc).
    """
    logits = matmul(z_in, wc)
    loss, g = softmax_cross_entropy(logits, onehot, mask)
    return loss, matmul(g, wc.T), matmul(z_in.T, g)


def recon_loss(l_link: float, attr_losses) -> float:
    """Reconstruction objective: link loss plus every utility head loss."""
    return float(l_link) + float(sum(attr_losses))


def _disc_forward(z, wd1, bd1, wd2, bd2):
    pre = z @ wd1 + bd1
    hidden = relu(pre)
    q = (hidden @ wd2).ravel() + bd2[0]
    return q, pre, hidden


def _disc_backward(dq, z, pre, hidden, wd1, wd2):
    dq = dq[:, None]
    dwd2 = hidden.T @ dq
    dbd2 = np.array([dq.sum()])
    dhidden = dq @ wd2.T
    dpre = relu_backward(dhidden, pre)
    dwd1 = z.T @ dpre
    dbd1 = dpre.sum(axis=0)
    dz = dpre @ wd1.T
    return {"Wd1": dwd1, "bd1": dbd1, "Wd2": dwd2, "bd2": dbd2}, dz


def discriminate(z, wd1, bd1, wd2, bd2) -> np.ndarray:
    """Probability that each row came from the Gaussian prior."""
    q, _, _ = _disc_forward(np.asarray(z, dtype=np.float64), wd1, bd1, wd2, bd2)
    return sigmoid(q)


def disc_loss(real, fake, wd1, bd1, wd2, bd2):
    """Discriminator objective mean(-log D(real) - log(1 - D(fake))).

    Returns (loss, grads over discriminator parameters, d_fake) so the same
    forward pass serves both the discriminator step and gradient checks
    through the encoder.
    """
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    if real.shape[1] != fake.shape[1]:
        raise ShapeError("real and fake batches must share the code width")
    q_r, pre_r, hid_r = _disc_forward(real, wd1, bd1, wd2, bd2)
    q_f, pre_f, hid_f = _disc_forward(fake, wd1, bd1, wd2, bd2)
    loss = float(softplus(-q_r).mean()) + float(softplus(q_f).mean())
    dq_r = (sigmoid(q_r) - 1.0) / q_r.size
    dq_f = sigmoid(q_f) / q_f.size
    grads_r, _ = _disc_backward(dq_r, real, pre_r, hid_r, wd1, wd2)
    grads_f, dfake = _disc_backward(dq_f, fake, pre_f, hid_f, wd1, wd2)
    grads = {k: grads_r[k] + grads_f[k] for k in grads_r}
    return loss, grads, dfake


def gen_fool_loss(fake, wd1, bd1, wd2, bd2):
    """Non-saturating generator objective mean(-log D(fake)).

    Returns (loss, d_fake); discriminator parameters are left alone.
    """
    fake = np.asarray(fake, dtype=np.float64)
    q, pre, hidden = _disc_forward(fake, wd1, bd1, wd2, bd2)
    loss = float(softplus(-q).mean())
    dq = (sigmoid(q) - 1.0) / q.size
    _, dfake = _disc_backward(dq, fake, pre, hidden, wd1, wd2)
    return loss, dfake


def attacker_forward(z, wa, ba) -> np.ndarray:
    """Softmax attacker posterior over private classes."""
    return softmax_rows(matmul(z, wa) + ba)


def attacker_loss(z, wa, ba, onehot, mask):
    """Cross-entropy of the linear softmax attacker on labeled rows.

    Returns (loss, d_z, d_wa, d_ba).
    """
    logits = matmul(z, wa) + ba
    loss, g = softmax_cross_entropy(logits, onehot, mask)
    return loss, matmul(g, wa.T), matmul(z.T, g), g.sum(axis=0)


def obf_loss(l_recon: float, l_att, lam: float) -> float:
    """Obfuscator objective: reconstruction minus lam times attacker loss."""
    if lam < 0:
        raise ValueError("lam must be non-negative")
    if lam and l_att is None:
        raise ValueError("attacker loss required when lam > 0")
    return float(l_recon) - (lam * float(l_att) if lam else 0.0)


def release_embedding(state: ModelState, batch: Batch):
    """Forward pass only: returns (code Z', released embedding Z)."""
    z_code = gcn_encode(batch.laplacian, batch.features, state.W0, state.W1)
    z = expand(z_code, state.We) if state.We is not None else z_code
    return z_code, z


def obfuscator_losses(state: ModelState, batch: Batch, lam: float = 0.0,
                      link_mode: str = "exact", rng: Rng = None,
                      negs_per_pos: int = 5, neg_pairs=None):
    """Joint forward and backward pass for the obfuscator update.

    Computes the link loss, every utility head loss, and (when the variant
    wires an attacker and labels exist) the attacker loss, then
    backpropagates the combined objective to every parameter in
    ``state.obf_params()``. Attacker and discriminator weights are treated
    as constants here.

    Returns (parts, grads): ``parts`` holds l_link, l_attr, l_att (None when
    not computed), l_recon, and l_obf.
    """
    z_code, cache = encoder_forward(batch.laplacian, batch.features, state.W0, state.W1)
    z = expand(z_code, state.We) if state.We is not None else z_code
    concat = state.variant in CONCAT_VARIANTS
    z_in = concat_privacy(z, batch.privacy_onehot) if concat else z

    l_link, dz_in = link_loss(z_in, batch, mode=link_mode, rng=rng,
                              negs_per_pos=negs_per_pos, neg_pairs=neg_pairs)
    grads = {}
    attr_values = []
    for name, (onehot, mask) in batch.utility.items():
        l_c, dz_c, dwc = attr_loss(z_in, state.heads[name], onehot, mask)
        attr_values.append(l_c)
        dz_in = dz_in + dz_c
        grads[f"head:{name}"] = dwc
    l_recon = recon_loss(l_link, attr_values)

    d = z.shape[1]
    dz = dz_in[:, :d] if concat else dz_in

    l_att = None
    if state.Wa is not None and batch.privacy_mask.size:
        l_att, dz_att, _, _ = attacker_loss(z, state.Wa, state.ba,
                                            batch.privacy_onehot, batch.privacy_mask)
        if lam:
            dz = dz - lam * dz_att
    l_obf = obf_loss(l_recon, l_att, lam if l_att is not None else 0.0)

    if state.We is not None:
        grads["We"] = matmul(z_code.T, dz)
        dz_code = matmul(dz, state.We.T)
    else:
        dz_code = dz
    grads["W0"], grads["W1"] = encoder_backward(dz_code, cache, batch.laplacian,
                                                batch.features, state.W1)
    parts = {
        "l_link": l_link,
        "l_attr": float(sum(attr_values)),
        "l_att": l_att,
        "l_recon": l_recon,
        "l_obf": l_obf,
    }
    return parts, grads
