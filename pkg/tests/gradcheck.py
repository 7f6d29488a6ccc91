"""Central finite-difference gradient checking for the tensor engine."""

import numpy as np

from breathnet.losses import total_loss
from breathnet.model import init_params, unet_forward
from breathnet.tensor import Tensor, backward, mul

STEP = 1e-5


def numeric_grad(f, arr, index=None, step=STEP):
    """d f() / d arr, by central differences; ``arr`` is perturbed in place."""
    indices = [index] if index is not None else list(np.ndindex(arr.shape))
    out = np.zeros(arr.shape)
    for idx in indices:
        old = arr[idx]
        arr[idx] = old + step
        hi = f()
        arr[idx] = old - step
        lo = f()
        arr[idx] = old
        out[idx] = (hi - lo) / (2 * step)
    return out


def relative_error(analytic, numeric):
    """Largest elementwise error, relative to the larger of the two gradients."""
    analytic, numeric = np.asarray(analytic, float), np.asarray(numeric, float)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / scale))


def check_op(op, *arrays, seed=0):
    """Max relative error of every input gradient of ``sum(w * op(*inputs))``.

    ``w`` is a fixed random weighting so all output entries matter.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    w = None

    def value():
        out = op(*[Tensor(a) for a in arrays])
        return float(np.sum(out.data * w))

    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = op(*tensors)
    w = np.random.default_rng(seed).standard_normal(out.shape)
    loss = (out * Tensor(w)).sum()
    grads = backward(loss, tensors)
    return max(relative_error(g, numeric_grad(value, a)) for g, a in zip(grads, arrays))


def unet_gradient_errors(config, count=20, seed=11):
    """Relative errors of d total_loss / d param for ``count`` random learnable entries.

    Runs in double precision, in train mode with one fixed set of dropout masks.
    """
    rng = np.random.default_rng(seed)
    p = init_params(config, seed=2, dtype=np.float64)
    x = rng.random((2, config.input_frames, config.input_bins, 1)) * 3
    mags, target = np.expm1(x), np.expm1(x) * rng.random(x.shape)
    masks = {}

    def loss_of(params):
        mask = unet_forward(params, x, config, "train", rng=np.random.default_rng(0), dropout_masks=masks)
        return total_loss(Tensor(target), mul(mask, Tensor(mags)))

    tensors = {k: Tensor(v, requires_grad=k in p.learnable_names()) for k, v in p.tensors.items()}
    names = p.learnable_names()
    grads = dict(zip(names, backward(loss_of(tensors), [tensors[k] for k in names])))
    errors = []
    for k in rng.choice(len(names), size=count, replace=False):
        name = names[k]
        idx = tuple(int(rng.integers(0, s)) for s in p[name].shape)
        # a 1e-5 step on an early-layer weight can straddle one of the many ReLU/abs
        # kinks downstream; 1e-6 keeps the difference quotient on one linear piece
        numeric = numeric_grad(lambda: float(loss_of(p.tensors).data), p.tensors[name], idx,
                               step=1e-6)[idx]
        errors.append(relative_error(grads[name][idx], numeric))
    return errors
