"""Independent reference implementations used to cross-check the package.

Everything here is deliberately written against the public behavior, not
the package internals: loop-based forward passes, finite differences,
a hand-rolled Jacobi eigensolver, quadrature for the Gaussian KL, and
plain transcriptions of the closed-form constants. Tests compare package
output against these, so none of them may import package modules beyond
type construction helpers.
"""

import math
import struct

import numpy as np
from scipy import integrate

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049


def write_idx_images(path, images):
    """Write a big-endian IDX3 image file from a uint8 (n, rows, cols) array."""
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(str(path), "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels):
    """Write a big-endian IDX1 label file from a uint8 vector."""
    labels = np.asarray(labels, dtype=np.uint8)
    with open(str(path), "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABEL_MAGIC, labels.size))
        fh.write(labels.tobytes())


def write_cifar_bin(path, labels, pixels):
    """Write a CIFAR-10 style binary batch: 1 label byte + 3072 pixel bytes."""
    labels = np.asarray(labels, dtype=np.uint8)
    pixels = np.asarray(pixels, dtype=np.uint8)
    assert pixels.shape == (labels.size, 3072)
    with open(str(path), "wb") as fh:
        for lab, row in zip(labels, pixels):
            fh.write(bytes([int(lab)]) + row.tobytes())


def reference_logits(layers, x):
    """Forward pass written with explicit loops and per-row dot products."""
    a = [float(v) for v in x]
    for h, w in enumerate(layers):
        z = []
        for row in np.asarray(w, dtype=np.float64):
            acc = 0.0
            for wij, aj in zip(row, a):
                acc += float(wij) * aj
            z.append(acc)
        if h < len(layers) - 1:
            a = [v if v > 0.0 else 0.0 for v in z]
        else:
            a = z
    return np.array(a, dtype=np.float64)


def reference_mean_ce(layers, features, labels):
    """Mean cross-entropy via the loop forward and a scalar logsumexp."""
    total = 0.0
    for x, y in zip(features, labels):
        logits = reference_logits(layers, x)
        m = max(float(v) for v in logits)
        lse = m + math.log(sum(math.exp(float(v) - m) for v in logits))
        total += lse - float(logits[int(y)])
    return total / len(labels)


def _shift(layers, j, delta):
    """Copy of the weight list with flat coordinate j moved by delta."""
    out = [np.array(w, dtype=np.float64, copy=True) for w in layers]
    off = 0
    for w in out:
        if j < off + w.size:
            w.flat[j - off] += delta
            return out
        off += w.size
    raise IndexError(j)


def fd_loss_gradient(layers, features, labels, step=1e-5):
    """Central finite differences of the reference mean cross-entropy."""
    p = sum(w.size for w in layers)
    grad = np.empty(p)
    for j in range(p):
        up = reference_mean_ce(_shift(layers, j, step), features, labels)
        dn = reference_mean_ce(_shift(layers, j, -step), features, labels)
        grad[j] = (up - dn) / (2.0 * step)
    return grad


def fd_loss_hessian_diag(layers, features, labels, step=1e-3):
    """Central second differences of the reference mean cross-entropy."""
    p = sum(w.size for w in layers)
    mid = reference_mean_ce(layers, features, labels)
    diag = np.empty(p)
    for j in range(p):
        up = reference_mean_ce(_shift(layers, j, step), features, labels)
        dn = reference_mean_ce(_shift(layers, j, -step), features, labels)
        diag[j] = (up - 2.0 * mid + dn) / (step * step)
    return diag


def fd_logits_jacobian(layers, x, step=1e-6):
    """Central finite differences of the loop forward pass."""
    p = sum(w.size for w in layers)
    k = len(layers[-1])
    jac = np.empty((k, p))
    for j in range(p):
        up = reference_logits(_shift(layers, j, step), x)
        dn = reference_logits(_shift(layers, j, -step), x)
        jac[:, j] = (up - dn) / (2.0 * step)
    return jac


def jacobi_eigenvalues(matrix, tol=1e-12, max_sweeps=100):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    a = np.array(matrix, dtype=np.float64, copy=True)
    n = a.shape[0]
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i, j] ** 2 for i in range(n)
                            for j in range(n) if i != j))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < tol / (n * n):
                    continue
                theta = 0.5 * math.atan2(2.0 * a[p, q], a[q, q] - a[p, p])
                c, s = math.cos(theta), math.sin(theta)
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))


def kl_gaussian_quad(mean_q, var_q, mean_p, var_p):
    """Diagonal-Gaussian KL by numerical quadrature, one coordinate at a time."""
    total = 0.0
    for mq, vq, mp, vp in zip(mean_q, var_q, mean_p, var_p):
        sq, sp = math.sqrt(vq), math.sqrt(vp)

        def integrand(x, mq=mq, sq=sq, mp=mp, sp=sp):
            q = math.exp(-0.5 * ((x - mq) / sq) ** 2) / (sq * math.sqrt(2 * math.pi))
            logq = -0.5 * ((x - mq) / sq) ** 2 - math.log(sq)
            logp = -0.5 * ((x - mp) / sp) ** 2 - math.log(sp)
            return q * (logq - logp)

        lo = min(mq - 12 * sq, mp - 12 * sp)
        hi = max(mq + 12 * sq, mp + 12 * sp)
        val, _ = integrate.quad(integrand, lo, hi, limit=200)
        total += val
    return total


def dup_fast_rate(eta):
    """Transcription of the fast-rate pair (a, b)."""
    return math.log(1.0 / eta) / (1.0 - eta), 1.0 / (1.0 - eta)


def dup_tail_constants(g_bound, zeta, kappa, alpha, sigma2, theta_norm):
    """Transcription of the decay rates (c1, c2) with 0 -> inf guards."""

    def inv(x):
        return 1.0 / x if x > 0.0 else math.inf

    c1 = inv(12.0 * sigma2 * zeta)
    c2 = min(
        inv(18.0 * sigma2 * g_bound * g_bound),
        inv(18.0 * sigma2 * zeta * zeta * theta_norm * theta_norm),
        inv(72.0 * sigma2 * sigma2 * kappa * zeta * zeta),
    )
    return c1, c2


def dup_bound_total(margin_loss, kl_total, tail, n, eta, delta):
    """Transcription of the deviation-bound assembly."""
    a, b = dup_fast_rate(eta)
    return (a * margin_loss + b * kl_total / (2.0 * n)
            + tail + b * math.log(1.0 / delta) / n)


def dup_sample_complexity(margin_grid, eps, delta, depth, sigma2,
                          g_bound, zeta, kappa, alpha, theta_norm, hdiag):
    """Transcription of the sample-size recipe; returns (n0, lam, g_inv)."""
    target = eps / 4.0
    g_inv = None
    for g, v in margin_grid:
        if v >= target:
            g_inv = float(g)
            break
    if g_inv is None:
        raise ValueError("margin grid never reaches eps/4")
    zeta_loc = 3.0 / g_inv
    c1, c2 = dup_tail_constants(g_bound, zeta, kappa, alpha, sigma2, theta_norm)
    log_term = math.log(24.0 / eps)
    lam = max(
        math.sqrt(zeta_loc * zeta_loc / c2 * log_term),
        math.sqrt(zeta_loc / c1 * log_term),
        math.sqrt(2.0 * zeta_loc * sigma2 * alpha),
        (6.0 * g_bound * theta_norm / g_inv) ** (1.0 / (depth - 1)),
        (3.0 * zeta_loc * theta_norm * theta_norm / g_inv) ** (1.0 / (depth - 2)),
    )
    ec = 0.0
    for h in hdiag:
        if float(h) * sigma2 > 1.0:
            ec += math.log(float(h) * sigma2)
    curvature = (4.0 / (eps * eps)) * (
        ec + lam * lam * theta_norm * theta_norm / (2.0 * sigma2)) ** 2
    confidence = (16.0 / (eps * eps)) * math.log(1.0 / delta)
    return int(math.ceil(max(curvature, confidence))), lam, g_inv


def spectral_product_svd(layers):
    """Product of the largest singular values, straight from dense SVD."""
    prod = 1.0
    for w in layers:
        prod *= float(np.linalg.svd(np.asarray(w, dtype=np.float64),
                                    compute_uv=False)[0])
    return prod
