"""User-embedding metafeatures from a denoising autoencoder and a VAE."""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from .errors import DivergenceError

EMBEDDING_SOURCES = ("cdae50", "cdae200", "vae200")


@dataclass
class EmbeddingMatrix:
    values: np.ndarray  # (n_users, k)
    source: str

    @property
    def k(self):
        return self.values.shape[1]


@dataclass
class CdaeModel:
    params: dict  # W_in (n_items,h), V (n_users,h), b_h (h), W_out (h,n_items), b_out (n_items)
    corruption: float
    h: int


@dataclass
class VaeModel:
    params: dict
    k: int
    hidden: int
    beta: float


class Adam:
    """Plain deterministic Adam over a dict of parameter arrays."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            mhat = self.m[k] / (1 - self.b1**self.t)
            vhat = self.v[k] / (1 - self.b2**self.t)
            params[k] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _uniform_init(rng, shape, scale=0.05):
    return rng.uniform(-scale, scale, size=shape)


def _softplus(x):
    return np.logaddexp(0.0, x)


# ---------------------------------------------------------------------------
# CDAE: hidden = tanh(x_corrupt @ W_in + V[u] + b_h), logistic outputs on items.
# ---------------------------------------------------------------------------

def cdae_init(n_users, n_items, h, seed):
    rng = np.random.default_rng(seed)
    return {
        "W_in": _uniform_init(rng, (n_items, h)),
        "V": _uniform_init(rng, (n_users, h)),
        "b_h": np.zeros(h),
        "W_out": _uniform_init(rng, (h, n_items)),
        "b_out": np.zeros(n_items),
    }


def cdae_loss_and_grad(params, x, users, keep_mask, corruption):
    """Mean logistic reconstruction loss of corrupted inputs plus gradients.

    `keep_mask` marks coordinates that survive corruption; kept values are
    rescaled by 1/(1-corruption) so corruption=0 is the identity.
    """
    B = x.shape[0]
    scale = 1.0 / (1.0 - corruption) if corruption > 0 else 1.0
    x_tilde = x * keep_mask * scale
    a = x_tilde @ params["W_in"] + params["V"][users] + params["b_h"]
    z = np.tanh(a)
    logits = z @ params["W_out"] + params["b_out"]
    loss = float(np.sum(_softplus(logits) - x * logits)) / B

    dlogits = (expit(logits) - x) / B
    dz = dlogits @ params["W_out"].T
    da = dz * (1.0 - z * z)
    dV = np.zeros_like(params["V"])
    np.add.at(dV, users, da)
    grads = {
        "W_in": x_tilde.T @ da,
        "V": dV,
        "b_h": da.sum(axis=0),
        "W_out": z.T @ dlogits,
        "b_out": dlogits.sum(axis=0),
    }
    return loss, grads


def train_cdae(train, h, corruption=0.5, lr=1e-3, epochs=30, seed=0, batch_size=64):
    """SGD (Adam) on the denoising reconstruction loss; embeddings live in V."""
    if h < 1 or not 0.0 <= corruption < 1.0 or lr <= 0:
        raise ValueError("require h >= 1, corruption in [0,1), lr > 0")
    dense = np.asarray(train.todense(), dtype=float)
    n_users, n_items = dense.shape
    params = cdae_init(n_users, n_items, h, seed)
    if epochs == 0:
        return CdaeModel(params=params, corruption=corruption, h=h)
    rng = np.random.default_rng(seed)
    opt = Adam(params, lr)
    for epoch in range(epochs):
        order = rng.permutation(n_users)
        for start in range(0, n_users, batch_size):
            users = order[start:start + batch_size]
            x = dense[users]
            keep = (rng.random(x.shape) >= corruption).astype(float)
            loss, grads = cdae_loss_and_grad(params, x, users, keep, corruption)
            if not np.isfinite(loss):
                raise DivergenceError(f"CDAE loss diverged at epoch {epoch}")
            opt.step(params, grads)
    return CdaeModel(params=params, corruption=corruption, h=h)


def cdae_epoch_loss(params, dense, corruption, rng):
    """Full-pass loss with a fresh corruption draw (for loss-curve checks)."""
    keep = (rng.random(dense.shape) >= corruption).astype(float)
    loss, _ = cdae_loss_and_grad(params, dense, np.arange(dense.shape[0]), keep, corruption)
    return loss


# ---------------------------------------------------------------------------
# VAE: tanh encoder to (mean, log-variance), multinomial softmax decoder.
# ---------------------------------------------------------------------------

def vae_init(n_items, k, hidden, seed):
    rng = np.random.default_rng(seed)
    return {
        "W_e": _uniform_init(rng, (n_items, hidden)),
        "b_e": np.zeros(hidden),
        "W_mu": _uniform_init(rng, (hidden, k)),
        "b_mu": np.zeros(k),
        "W_lv": _uniform_init(rng, (hidden, k)),
        "b_lv": np.zeros(k),
        "W_d": _uniform_init(rng, (k, hidden)),
        "b_d": np.zeros(hidden),
        "W_o": _uniform_init(rng, (hidden, n_items)),
        "b_o": np.zeros(n_items),
    }


def vae_encode(params, x):
    h = np.tanh(x @ params["W_e"] + params["b_e"])
    mu = h @ params["W_mu"] + params["b_mu"]
    lv = h @ params["W_lv"] + params["b_lv"]
    return h, mu, lv


def vae_loss_and_grad(params, x, eps, beta):
    """Negative ELBO (multinomial likelihood, KL to standard normal) + gradients.

    `eps` is the reparameterization noise, treated as a fixed input so the
    gradient is an exact derivative of a deterministic function.
    """
    B = x.shape[0]
    h, mu, lv = vae_encode(params, x)
    z = mu + eps * np.exp(0.5 * lv)
    hd = np.tanh(z @ params["W_d"] + params["b_d"])
    logits = hd @ params["W_o"] + params["b_o"]
    logp = logits - logsumexp(logits, axis=1, keepdims=True)
    recon = -float(np.sum(x * logp)) / B
    kl = 0.5 * float(np.sum(np.exp(lv) + mu * mu - 1.0 - lv)) / B
    loss = recon + beta * kl

    row_mass = x.sum(axis=1, keepdims=True)
    dlogits = (np.exp(logp) * row_mass - x) / B
    dhd = dlogits @ params["W_o"].T
    dzd = dhd * (1.0 - hd * hd)
    dz = dzd @ params["W_d"].T
    dmu = dz + beta * mu / B
    dlv = dz * eps * 0.5 * np.exp(0.5 * lv) + beta * 0.5 * (np.exp(lv) - 1.0) / B
    dh = dmu @ params["W_mu"].T + dlv @ params["W_lv"].T
    da = dh * (1.0 - h * h)
    grads = {
        "W_e": x.T @ da,
        "b_e": da.sum(axis=0),
        "W_mu": h.T @ dmu,
        "b_mu": dmu.sum(axis=0),
        "W_lv": h.T @ dlv,
        "b_lv": dlv.sum(axis=0),
        "W_d": z.T @ dzd,
        "b_d": dzd.sum(axis=0),
        "W_o": hd.T @ dlogits,
        "b_o": dlogits.sum(axis=0),
    }
    return loss, grads


def _vae_eval_loss(params, x, beta):
    """Deterministic validation loss (eps = 0)."""
    loss, _ = vae_loss_and_grad(params, x, np.zeros((x.shape[0], params["b_mu"].shape[0])), beta)
    return loss


def train_vae(train, k, hidden=600, beta=0.2, lr=1e-3, epochs=50, seed=0,
              user_split=(0.8, 0.1, 0.1), batch_size=64):
    """Train on an internal user split, keep the epoch with the best validation loss.

    The KL weight anneals linearly from 0 to `beta` over the epochs.
    """
    if k < 1 or hidden < 1 or lr <= 0:
        raise ValueError("require k >= 1, hidden >= 1, lr > 0")
    dense = np.asarray(train.todense(), dtype=float)
    n_users, n_items = dense.shape
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_users)
    n_tr = max(1, int(round(user_split[0] * n_users)))
    n_val = max(1, int(round(user_split[1] * n_users)))
    if n_tr + n_val >= n_users:
        n_tr = max(1, n_users - n_val - 1)
    tr_users, val_users = perm[:n_tr], perm[n_tr:n_tr + n_val]
    params = vae_init(n_items, k, hidden, seed)
    opt = Adam(params, lr)
    best = {key: v.copy() for key, v in params.items()}
    best_val = _vae_eval_loss(params, dense[val_users], beta)
    for epoch in range(epochs):
        beta_t = beta * (epoch + 1) / epochs
        order = rng.permutation(tr_users)
        for start in range(0, len(order), batch_size):
            users = order[start:start + batch_size]
            x = dense[users]
            eps = rng.standard_normal((x.shape[0], k))
            loss, grads = vae_loss_and_grad(params, x, eps, beta_t)
            if not np.isfinite(loss):
                raise DivergenceError(f"VAE loss diverged at epoch {epoch}")
            opt.step(params, grads)
        val_loss = _vae_eval_loss(params, dense[val_users], beta)
        if val_loss < best_val:
            best_val = val_loss
            best = {key: v.copy() for key, v in params.items()}
    return VaeModel(params=best, k=k, hidden=hidden, beta=beta)


def extract_embeddings(model, train, source=None):
    """One embedding row per user: CDAE -> V, VAE -> deterministic posterior mean."""
    n_users = train.shape[0]
    if isinstance(model, CdaeModel):
        if model.params["V"].shape[0] != n_users:
            raise ValueError("CDAE user count does not match the training matrix")
        values = model.params["V"].copy()
        src = source or f"cdae{model.h}"
    elif isinstance(model, VaeModel):
        if model.params["W_e"].shape[0] != train.shape[1]:
            raise ValueError("VAE item count does not match the training matrix")
        dense = np.asarray(train.todense(), dtype=float)
        _, mu, _ = vae_encode(model.params, dense)
        values = mu
        src = source or f"vae{model.k}"
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")
    if not np.all(np.isfinite(values)):
        raise ValueError("embedding matrix contains non-finite values")
    return EmbeddingMatrix(values=values, source=src)
