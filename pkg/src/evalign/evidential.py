"""Loss stack for uncertainty-calibrated contrastive alignment.

Given a batch of N image embeddings I and text embeddings T on the unit
sphere, the similarity matrix S = I T^t holds matched pairs on its diagonal.
The total training loss combines:

- a symmetric contrastive term over rows (image-to-text) and columns
  (text-to-image), written as a sum over the batch, halved;
- for each direction, a Dirichlet reparameterization of the similarity rows:
  evidence e = softplus(S), concentration alpha = e + 1, strength S = sum
  alpha, belief b = e/S and uncertainty u = N/S (so sum b + u = 1);
- an evidential cross-entropy sum_rows psi(strength) - psi(alpha at target),
  pushing evidence toward the matched pair;
- a KL regularizer to the uniform Dirichlet computed on alpha with the
  target coordinate pinned to 1, so correct-pair evidence is never punished,
  weighted by a balance factor lambda in [0, 1] that training anneals up.

All loss terms are built from tape ops, so gradients flow back through
digamma/log-gamma into the encoders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import special
from .autodiff import Tensor
from .errors import ContractError, DomainError

COSINE_SLACK = 1e-9

_CONST_CACHE = {}


def _const(kind, n):
    """Cached constant tensors shared across loss evaluations."""
    key = (kind, n)
    if key not in _CONST_CACHE:
        if kind == "eye":
            value = np.eye(n)
        elif kind == "ce_signs":
            value = np.concatenate([np.ones(n), -np.ones(n)])
        elif kind == "kl_signs":
            value = np.concatenate([-np.ones(n * n), np.ones(n)])
        elif kind == "one_minus_eye":
            value = 1.0 - np.eye(n)
        else:
            raise KeyError(kind)
        _CONST_CACHE[key] = Tensor(value)
    return _CONST_CACHE[key]


@dataclass
class SimilarityMatrix:
    """All-pairs cosine similarities for a batch, diagonal = matched pairs."""

    values: Tensor
    n: int

    def __post_init__(self):
        if self.values.data.ndim != 2 or self.values.shape != (self.n, self.n):
            raise ContractError(f"similarity matrix must be {self.n}x{self.n}")
        data = self.values.data
        if data.min() < -1.0 - COSINE_SLACK or data.max() > 1.0 + COSINE_SLACK:
            raise ContractError(
                f"cosine similarities outside [-1, 1]: range [{data.min()}, {data.max()}]"
            )


def similarity_matrix(image_rows, text_rows):
    """Build the N x N cosine matrix from unit-norm embedding rows."""
    image_rows = image_rows if isinstance(image_rows, Tensor) else Tensor(image_rows)
    text_rows = text_rows if isinstance(text_rows, Tensor) else Tensor(text_rows)
    if image_rows.shape != text_rows.shape or image_rows.data.ndim != 2:
        raise ContractError(
            f"embedding blocks must share shape, got {image_rows.shape} vs {text_rows.shape}"
        )
    values = ad.matmul_nt(image_rows, text_rows)
    return SimilarityMatrix(values=values, n=image_rows.shape[0])


def _values(s):
    if isinstance(s, SimilarityMatrix):
        return s.values, s.n
    t = s if isinstance(s, Tensor) else Tensor(s)
    if t.data.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ContractError(f"expected square similarity matrix, got {t.shape}")
    return t, t.shape[0]


def contrastive_loss(s, temperature=1.0, normalize=False):
    """Symmetric alignment loss: summed diagonal negative log-softmax over
    rows and over columns, halved.

    Written as a sum over the batch (not a mean); `normalize=True` divides
    by N for experimentation.  `temperature` rescales logits and defaults
    to 1, which reproduces the plain formulation.
    """
    v, n = _values(s)
    if temperature != 1.0:
        v = ad.mul(v, 1.0 / temperature)
    eye = _const("eye", n)
    rows = ad.tsum(ad.mul(ad.log_softmax_row(v), eye))
    cols = ad.tsum(ad.mul(ad.log_softmax_row(ad.transpose(v)), eye))
    loss = ad.mul(ad.add(rows, cols), -0.5)
    if normalize:
        loss = ad.mul(loss, 1.0 / n)
    return loss


def evidence_from_similarity(s, direction):
    """Step 1: positive evidence from similarities, per direction.

    Image-to-text reads rows of S; text-to-image reads rows of S^t.
    """
    v, _ = _values(s)
    if direction == "i2t":
        return ad.softplus(v)
    if direction == "t2i":
        return ad.softplus(ad.transpose(v))
    raise ContractError(f"direction must be 'i2t' or 't2i', got {direction!r}")


@dataclass
class EvidentialOutput:
    """Dirichlet view of one evidence row (steps 2-3)."""

    direction: str
    evidence: np.ndarray
    alpha: np.ndarray
    strength: float
    belief: np.ndarray
    uncertainty: float

    def closure(self):
        """sum(belief) + uncertainty; equals 1 up to rounding."""
        return float(self.belief.sum() + self.uncertainty)


def dirichlet_params(evidence_row, n, direction="i2t"):
    """Steps 2-3: alpha = e + 1, strength, belief masses, uncertainty."""
    e = np.asarray(
        evidence_row.data if isinstance(evidence_row, Tensor) else evidence_row,
        dtype=np.float64,
    ).reshape(-1)
    if e.shape[0] != n:
        raise ContractError(f"evidence row has {e.shape[0]} entries, batch size is {n}")
    if np.any(e <= 0.0):
        raise ContractError("evidence must be strictly positive")
    alpha = e + 1.0
    strength = float(alpha.sum())
    return EvidentialOutput(
        direction=direction,
        evidence=e,
        alpha=alpha,
        strength=strength,
        belief=e / strength,
        uncertainty=n / strength,
    )


def evidential_rows(s, direction):
    """EvidentialOutput for every row of the chosen direction."""
    ev = evidence_from_similarity(s, direction)
    n = ev.shape[0]
    return [dirichlet_params(ev.data[i], n, direction) for i in range(n)]


def _target_columns(n, targets):
    if targets is None:
        return np.arange(n)
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != (n, n) or not np.allclose(y.sum(axis=1), 1.0):
        raise ContractError("targets must be one-hot rows matching the batch")
    return y.argmax(axis=1)


def dirichlet_ce_loss(alpha, targets=None):
    """Evidential cross-entropy: sum over rows of psi(strength) - psi(alpha
    at the target column).  Differentiable through digamma."""
    a = alpha if isinstance(alpha, Tensor) else Tensor(alpha)
    if a.data.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"alpha must be square, got {a.shape}")
    if a.data.min() < 1.0 - 1e-12:
        raise DomainError("alpha must be >= 1 elementwise (evidence + 1)")
    n = a.shape[0]
    cols = _target_columns(n, targets)
    strengths = ad.tsum(a, axis=1)
    picked = ad.gather_rows(a, cols)
    # one digamma evaluation; +1 weights on strengths, -1 on picked entries
    return ad.tsum(ad.mul(ad.digamma_t(ad.concat1d([strengths, picked])), _const("ce_signs", n)))


def dirichlet_kl_loss(alpha, targets=None):
    """KL(Dir(alpha-hat) || Dir(1,...,1)) summed over rows, where alpha-hat
    pins the target coordinate to 1 so correct-pair evidence goes unpunished.

    Uses sum_k (alpha_hat - 1) = strength - N to evaluate the digamma inner
    product without broadcasting:

        KL = sum_r [ lnG(S_r) - sum_k lnG(a_rk) - lnG(N)
                     + sum_k (a_rk - 1) psi(a_rk) - (S_r - N) psi(S_r) ]
    """
    a = alpha if isinstance(alpha, Tensor) else Tensor(alpha)
    if a.data.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"alpha must be square, got {a.shape}")
    if a.data.min() < 1.0 - 1e-12:
        raise DomainError("alpha must be >= 1 elementwise (evidence + 1)")
    n = a.shape[0]
    cols = _target_columns(n, targets)
    if targets is None:
        one_minus_y = _const("one_minus_eye", n)
        y = _const("eye", n)
    else:
        y_arr = np.zeros((n, n))
        y_arr[np.arange(n), cols] = 1.0
        y = Tensor(y_arr)
        one_minus_y = Tensor(1.0 - y_arr)
    a_hat = ad.add(ad.mul(a, one_minus_y), y)
    flat = ad.reshape(a_hat, (n * n,))
    s_hat = ad.tsum(a_hat, axis=1)
    both = ad.concat1d([flat, s_hat])
    log_norm = ad.tsum(ad.mul(ad.lgamma_t(both), _const("kl_signs", n)))
    weights = ad.concat1d([ad.sub(flat, 1.0), ad.mul(ad.sub(s_hat, float(n)), -1.0)])
    inner = ad.tsum(ad.mul(ad.digamma_t(both), weights))
    return ad.sub(ad.add(log_norm, inner), n * special.lgamma(float(n)))


@dataclass
class LossBreakdown:
    """All scalar components of one loss evaluation, for logging."""

    em: float
    dl_i2t_ce: float
    dl_i2t_kl: float
    dl_t2i_ce: float
    dl_t2i_kl: float
    lam: float
    total: float

    def recombined(self):
        return (
            self.em
            + self.dl_i2t_ce
            + self.lam * self.dl_i2t_kl
            + self.dl_t2i_ce
            + self.lam * self.dl_t2i_kl
        )

    def as_log_record(self):
        return {
            "L_Em": self.em,
            "CE_i2t": self.dl_i2t_ce,
            "KL_i2t": self.dl_i2t_kl,
            "CE_t2i": self.dl_t2i_ce,
            "KL_t2i": self.dl_t2i_kl,
            "lambda": self.lam,
            "L_Con": self.total,
        }


def total_loss(s, lam, em_only=False, temperature=1.0, normalize_em=False):
    """Assemble the full objective and return (scalar tensor, breakdown).

    With `em_only=True` the Dirichlet terms are neither computed nor added
    (ablation mode); the breakdown reports them as 0.
    """
    if not 0.0 <= lam <= 1.0:
        raise ContractError(f"lambda must lie in [0, 1], got {lam}")
    em = contrastive_loss(s, temperature=temperature, normalize=normalize_em)
    if em_only:
        bd = LossBreakdown(em.item(), 0.0, 0.0, 0.0, 0.0, lam, em.item())
        return em, bd
    v, _ = _values(s)
    terms = {}
    for direction in ("i2t", "t2i"):
        base = v if direction == "i2t" else ad.transpose(v)
        alpha = ad.add(ad.softplus(base), 1.0)
        terms[direction] = (dirichlet_ce_loss(alpha), dirichlet_kl_loss(alpha))
    ce_i, kl_i = terms["i2t"]
    ce_t, kl_t = terms["t2i"]
    total = ad.add(
        em,
        ad.add(
            ad.add(ce_i, ad.mul(kl_i, lam)),
            ad.add(ce_t, ad.mul(kl_t, lam)),
        ),
    )
    bd = LossBreakdown(
        em=em.item(),
        dl_i2t_ce=ce_i.item(),
        dl_i2t_kl=kl_i.item(),
        dl_t2i_ce=ce_t.item(),
        dl_t2i_kl=kl_t.item(),
        lam=lam,
        total=total.item(),
    )
    return total, bd


def dirichlet_pdf(p, alpha, off_simplex="zero", tol=1e-9):
    """Dirichlet density at simplex point(s) p for concentration alpha.

    `p` may be a single K-vector or an (M, K) batch.  Points off the unit
    simplex yield 0 by default, or raise DomainError with
    `off_simplex="error"`.
    """
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    if np.any(alpha <= 0.0):
        raise DomainError("dirichlet_pdf: concentration must be positive")
    if off_simplex not in ("zero", "error"):
        raise ContractError("off_simplex must be 'zero' or 'error'")
    pts = np.asarray(p, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != alpha.shape[0]:
        raise ContractError(
            f"point width {pts.shape[1]} does not match {alpha.shape[0]} concentrations"
        )
    on = (np.abs(pts.sum(axis=1) - 1.0) <= tol) & np.all(pts >= -tol, axis=1) & np.all(
        pts <= 1.0 + tol, axis=1
    )
    if off_simplex == "error" and not on.all():
        raise DomainError("point(s) off the unit simplex")
    log_norm = special.lgamma(alpha.sum()) - special.lgamma(alpha).sum()
    clipped = np.clip(pts, 0.0, 1.0)
    out = np.zeros(pts.shape[0])
    for i in range(pts.shape[0]):
        if not on[i]:
            continue
        log_terms = 0.0
        hit_zero_pole = False
        for pk, ak in zip(clipped[i], alpha):
            if pk == 0.0:
                if ak > 1.0:
                    log_terms = -np.inf
                    break
                if ak < 1.0:
                    hit_zero_pole = True
                    break
            else:
                log_terms += (ak - 1.0) * np.log(pk)
        if hit_zero_pole:
            out[i] = np.inf
        else:
            out[i] = np.exp(log_norm + log_terms)
    return float(out[0]) if single else out
