"""Hand-built translators with known closed-form behaviour."""
import numpy as np

from latentbridge.tensor import Tensor
from latentbridge.translator import TranslatorConfig, TranslatorParams

SHIFT = 20.0  # pushes the extractor GELU into its identity regime


def mean_preserving_orthogonal(h, seed=0):
    """Random orthogonal Q with Q @ ones = ones."""
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(np.column_stack([np.ones(h), rng.standard_normal((h, h - 1))]))
    r, _ = np.linalg.qr(rng.standard_normal((h - 1, h - 1)))
    inner = np.eye(h)
    inner[1:, 1:] = r
    return basis @ inner @ basis.T


def standardized_rows(rng, n, h):
    """Rows with zero mean and unit population variance, which layer norm leaves fixed."""
    x = rng.standard_normal((n, h))
    x -= x.mean(axis=1, keepdims=True)
    return x / x.std(axis=1, keepdims=True)


def linear_translator(q, n_heads=2, n_slots=2, eps=1e-5):
    """A translator computing ``x @ q`` exactly on standardized inputs.

    Extractor = q with a large bias so GELU acts as identity, every slot is the
    identity minus that bias, attention output is zero, the norm gain undoes
    the variance epsilon and the generator is the identity.
    """
    h = q.shape[0]
    cfg = TranslatorConfig(h, h, h, n_heads, n_slots, seed=0)
    z = np.zeros((h, h))
    p = {
        "extractor.w": q, "extractor.b": np.full(h, SHIFT),
        "slots.w": np.stack([np.eye(h)] * n_slots), "slots.b": np.full((n_slots, h), -SHIFT),
        "attn.w_q": z, "attn.b_q": np.zeros(h), "attn.w_k": z, "attn.b_k": np.zeros(h),
        "attn.w_v": z, "attn.b_v": np.zeros(h), "attn.w_out": z, "attn.b_out": np.zeros(h),
        "norm.g": np.full(h, np.sqrt(1.0 + eps)), "norm.b": np.zeros(h),
        "generator.w": np.eye(h), "generator.b": np.zeros(h),
    }
    return TranslatorParams(cfg, {k: Tensor(np.asarray(v, np.float64), requires_grad=True, dtype=np.float64)
                                  for k, v in p.items()})
