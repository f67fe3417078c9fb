"""Tour of the tape engine: build an expression, read gradients, and poke
the special functions the evidential losses depend on."""

import numpy as np

from evalign import autodiff as ad
from evalign.autodiff import Tensor, backward
from evalign.special import digamma, lgamma, trigamma

# A tensor is a float64 array plus a gradient slot.  Ops record themselves,
# so any scalar built from them can be differentiated.
a = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
b = Tensor([[0.5], [-1.0]], requires_grad=True)

product = ad.matmul(a, b)            # matrix product, (2x2) @ (2x1)
squashed = ad.softplus(product)      # ln(1 + e^x), strictly positive
loss = ad.tsum(squashed)

backward(loss)
print("loss            :", loss.item())
print("d loss / d a    :\n", a.grad)
print("d loss / d b    :\n", b.grad)

# The recorded tape is in topological order; backward walks it once.
print("tape length     :", len(ad.trace_graph(loss)))

# Row softmax is shift-invariant and always sums to one.
logits = Tensor([[0.0, np.log(3.0)]])
print("softmax row     :", ad.softmax_row(logits).data, "(expect [0.25, 0.75])")

# Unit-sphere normalization underlies every embedding this package makes.
v = ad.l2_normalize(Tensor([3.0, 4.0]))
print("normalized      :", v.data, "norm:", np.linalg.norm(v.data))

# Digamma/log-gamma are implemented in-repo (series + recurrence); their
# recurrences make handy sanity checks.
x = 2.31
print("psi(x+1)-psi(x) :", digamma(x + 1) - digamma(x), "vs 1/x =", 1 / x)
print("lnG(x+1)-lnG(x) :", lgamma(x + 1) - lgamma(x), "vs ln x =", np.log(x))
print("trigamma(1)     :", trigamma(1.0), "vs pi^2/6 =", np.pi**2 / 6)
