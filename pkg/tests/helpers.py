"""Shared test utilities: independent oracles and the gradient checker."""

import numpy as np

from ipcnet import autodiff as ad


def matmul_oracle(a, b):
    """Naive triple-loop matrix product."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for p in range(k):
                out[i, j] += a[i, p] * b[p, j]
    return out


def conv_oracle(x, weights, bias, stride_h, stride_w):
    """Explicit sliding-window cross-correlation; x is (H, W, C),
    weights is (kh, kw, C, O)."""
    kh, kw, _, cout = weights.shape
    out_h = (x.shape[0] - kh) // stride_h + 1
    out_w = (x.shape[1] - kw) // stride_w + 1
    out = np.zeros((out_h, out_w, cout))
    for i in range(out_h):
        for j in range(out_w):
            patch = x[i * stride_h : i * stride_h + kh, j * stride_w : j * stride_w + kw]
            for o in range(cout):
                out[i, j, o] = (patch * weights[:, :, :, o]).sum() + bias[o]
    return out


def maxpool_oracle(x, pool_h, pool_w, stride_h, stride_w):
    """Per-block scan maximum; x is (H, W, C)."""
    out_h = (x.shape[0] - pool_h) // stride_h + 1
    out_w = (x.shape[1] - pool_w) // stride_w + 1
    out = np.zeros((out_h, out_w, x.shape[2]))
    for i in range(out_h):
        for j in range(out_w):
            block = x[i * stride_h : i * stride_h + pool_h, j * stride_w : j * stride_w + pool_w]
            out[i, j] = block.max(axis=(0, 1))
    return out


def cross_entropy_oracle(logits, labels):
    """Direct log-sum-exp evaluation of the mean point NLL."""
    total = 0.0
    for row, label in zip(logits, labels):
        total += np.log(np.exp(row).sum()) - row[label]
    return total / len(labels)


def chi_square_p_value(observed, expected):
    """Goodness-of-fit p-value (chi-square survival function).

    Restricted to even degrees of freedom, where the tail is the closed
    Poisson sum exp(-x/2) * sum_{j<dof/2} (x/2)^j / j! -- no special
    functions needed.
    """
    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(expected, dtype=float)
    stat = ((observed - expected) ** 2 / expected).sum()
    dof = observed.size - 1
    assert dof % 2 == 0, "closed-form tail needs even dof"
    half = stat / 2.0
    term, total = 1.0, 1.0
    for j in range(1, dof // 2):
        term *= half / j
        total += term
    return float(np.exp(-half) * total)


def relative_error(analytic, numeric):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return np.abs(analytic - numeric) / denom


def finite_difference(build_loss, tensor, h=1e-5):
    """Central finite differences of build_loss() w.r.t. tensor.data."""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = build_loss().item()
        flat[i] = orig - h
        down = build_loss().item()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def finite_difference_at(build_loss, tensor, index, h=1e-5):
    """Central difference of build_loss() w.r.t. one flat element."""
    flat = tensor.data.ravel()
    orig = flat[index]
    flat[index] = orig + h
    up = build_loss().item()
    flat[index] = orig - h
    down = build_loss().item()
    flat[index] = orig
    return (up - down) / (2.0 * h)


def check_gradients_sampled(build_loss, tensors, gen, per_tensor=4, rtol=1e-4, h=1e-5):
    """Like check_gradients but probing a random element subset per tensor,
    for models too large to difference exhaustively."""
    for t in tensors:
        t.grad = None
    ad.backward(build_loss())
    worst = 0.0
    for t in tensors:
        assert t.grad is not None, f"missing gradient on {t.name or 'tensor'}"
        size = t.data.size
        picks = gen.choice(size, size=min(per_tensor, size), replace=False)
        for i in picks:
            numeric = finite_difference_at(build_loss, t, int(i), h=h)
            worst = max(worst, float(relative_error(t.grad.ravel()[int(i)], numeric)))
    assert worst <= rtol, f"sampled gradient mismatch: max relative error {worst:.3e}"


def rotation_matrix(axis, angle):
    """Axis-angle rotation via the Rodrigues formula."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    kx, ky, kz = axis
    k = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def check_gradients(build_loss, tensors, rtol=1e-4, h=1e-5):
    """Assert analytic gradients of build_loss() match central differences.

    build_loss must recompute the scalar loss from the tensors' current
    data every call; tensors are the tracked leaves to check.
    """
    for t in tensors:
        t.grad = None
    loss = build_loss()
    ad.backward(loss)
    for t in tensors:
        assert t.grad is not None, "missing gradient on tracked tensor"
        numeric = finite_difference(build_loss, t, h=h)
        err = relative_error(t.grad, numeric)
        assert err.max() <= rtol, f"gradient mismatch: max relative error {err.max():.3e}"
