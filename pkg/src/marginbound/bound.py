"""Margin losses and the curvature-based generalization certificate.

The certificate for a trained deterministic network reads

    risk <= a * margin_loss(gamma)
          + (b / 2n) * kl_total
          + tail(gamma)
          + b * log(1/delta) / n

where (a, b) are fast-rate constants of a confidence parameter eta,
kl_total is either the effective-curvature + L2 upper bound or twice the
exact diagonal-Gaussian KL, and the tail term decays exponentially in the
margin. Curvature enters through the Gauss-Newton diagonal of the training
loss, which is the exact Hessian diagonal of the realized linear network.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, MarginInversionError
from .network import MlpParams, batch_logits, forward, output_jacobian, softmax

CSV_COLUMNS = [
    "n", "p", "gamma", "sigma2", "eta", "delta", "margin_loss", "p_tilde",
    "effective_curvature", "l2_term", "kl_exact", "tail_term",
    "confidence_term", "total",
]

VARIANT_TWO_CLASS = "nonsmooth-2class"
VARIANT_MULTICLASS = "multiclass-smooth"


@dataclass
class FastRateConstants:
    """Constants (a, b, d) attached to a confidence level eta in (0, 1)."""

    eta: float
    a: float
    b: float
    d: float
    variant: str


def fast_rate_constants(eta, num_classes=2, variant=VARIANT_TWO_CLASS):
    """a = log(1/eta)/(1-eta), b = 1/(1-eta), and the tail multiplier d.

    variant selects d: "nonsmooth-2class" gives 6(a+1), "multiclass-smooth"
    gives num_classes * (a+1).
    """
    if not 0 < eta < 1:
        raise ArgumentError("eta must lie in (0, 1)")
    if num_classes < 2:
        raise ArgumentError("num_classes must be at least 2")
    a = math.log(1.0 / eta) / (1.0 - eta)
    b = 1.0 / (1.0 - eta)
    if variant == VARIANT_TWO_CLASS:
        d = 6.0 * (a + 1.0)
    elif variant == VARIANT_MULTICLASS:
        d = num_classes * (a + 1.0)
    else:
        raise ArgumentError(f"unknown variant {variant!r}")
    return FastRateConstants(eta, a, b, d, variant)


@dataclass
class AssumptionConstants:
    """Per-example loss landscape bounds used by the tail term.

    g_bound bounds the gradient norm, zeta the Hessian spectral norm, and
    kappa / alpha are the squared-Frobenius and trace ratios against the
    spectral norm (stable rank and intrinsic dimension).
    """

    g_bound: float
    zeta: float
    kappa: float
    alpha: float

    def __post_init__(self):
        for name in ("g_bound", "zeta", "kappa", "alpha"):
            if getattr(self, name) < 0:
                raise ArgumentError(f"{name} must be non-negative")


def margin_loss(params: MlpParams, ds, gamma) -> float:
    """Fraction of examples not classified with margin more than gamma.

    An example counts when logit[y] <= max over other classes + gamma,
    boundary included. gamma may be negative; gamma = 0 gives 0-1 error
    with ties counted as errors.
    """
    return float(np.mean(_margins(params, ds) <= gamma))


def margin_curve(params: MlpParams, ds, gammas):
    """margin_loss at every point of an ascending margin grid.

    Returns a list of (gamma, loss) pairs. The grid must be sorted
    ascending, so the losses are nondecreasing.
    """
    gammas = np.asarray(gammas, dtype=np.float64)
    if gammas.ndim != 1 or gammas.size == 0:
        raise ArgumentError("margin grid must be a non-empty 1-D array")
    if np.any(np.diff(gammas) < 0):
        raise ArgumentError("margin grid must be sorted ascending")
    margins = np.sort(_margins(params, ds))
    counts = np.searchsorted(margins, gammas, side="right")
    return [(float(g), c / margins.size) for g, c in zip(gammas, counts)]


def _margins(params: MlpParams, ds) -> np.ndarray:
    logits = batch_logits(params, ds.features)
    idx = np.arange(ds.n)
    true = logits[idx, ds.labels]
    others = logits.copy()
    others[idx, ds.labels] = -np.inf
    return true - others.max(axis=1)


def hessian_diag(params: MlpParams, ds) -> np.ndarray:
    """Diagonal of the Gauss-Newton Hessian of the mean cross-entropy.

    Entry j is (1/n) sum_i g_ij' (diag(p_i) - p_i p_i') g_ij with g_ij the
    j-th column of the logit Jacobian and p_i the softmax probabilities.
    Because each logit is degree one in every single weight at a fixed
    ReLU pattern, this is the exact Hessian diagonal of the realized
    linear network's loss. Computed as a softmax-weighted variance, so
    every entry is non-negative.
    """
    total = np.zeros(params.num_params)
    for i in range(ds.n):
        jac, probs = _jacobian_and_probs(params, ds.features[i])
        mean = probs @ jac
        total += probs @ (jac - mean) ** 2
    return total / ds.n


def _jacobian_and_probs(params: MlpParams, x):
    jac = output_jacobian(params, x)
    logits, _ = forward(params, x)
    return jac, softmax(logits)


def posterior_variances(hdiag, prior_vars) -> np.ndarray:
    """Coordinate-wise min of the prior variance and inverse curvature."""
    hdiag, prior_vars = _check_hdiag_prior(hdiag, prior_vars)
    inv = np.full(hdiag.shape, np.inf)
    pos = hdiag > 0
    inv[pos] = 1.0 / hdiag[pos]
    return np.minimum(prior_vars, inv)


def effective_curvature(hdiag, prior_vars):
    """Sum of log(max(h_j, 1/omega_j^2) * omega_j^2) and the count p_tilde.

    Only coordinates with h_j strictly above 1/omega_j^2 contribute;
    p_tilde counts them. Summation walks coordinates in index order.

    Returns:
        (value, p_tilde)
    """
    hdiag, prior_vars = _check_hdiag_prior(hdiag, prior_vars)
    active = hdiag * prior_vars > 1.0
    value = float(np.sum(np.log(hdiag[active] * prior_vars[active])))
    return value, int(np.count_nonzero(active))


def l2_term(theta, theta0, prior_vars) -> float:
    """Squared prior-weighted distance sum_j (theta_j - theta0_j)^2 / omega_j^2."""
    theta = np.asarray(theta, dtype=np.float64)
    theta0 = np.asarray(theta0, dtype=np.float64)
    prior_vars = np.asarray(prior_vars, dtype=np.float64)
    if theta.shape != theta0.shape or theta.shape != prior_vars.shape:
        raise ArgumentError("theta, theta0, and prior_vars must share a shape")
    if np.any(prior_vars <= 0):
        raise ArgumentError("prior variances must be positive")
    return float(np.sum((theta - theta0) ** 2 / prior_vars))


def kl_diag_gaussian(mean_q, var_q, mean_p, var_p) -> float:
    """KL divergence between diagonal Gaussians, 1/2-convention.

    KL = 1/2 sum_j [ v_q/v_p + log(v_p/v_q) - 1 + (m_q - m_p)^2 / v_p ].
    """
    mean_q = np.asarray(mean_q, dtype=np.float64)
    var_q = np.asarray(var_q, dtype=np.float64)
    mean_p = np.asarray(mean_p, dtype=np.float64)
    var_p = np.asarray(var_p, dtype=np.float64)
    if not (mean_q.shape == var_q.shape == mean_p.shape == var_p.shape):
        raise ArgumentError("all four arguments must share a shape")
    if np.any(var_q <= 0) or np.any(var_p <= 0):
        raise ArgumentError("variances must be positive")
    ratio = var_q / var_p
    return 0.5 * float(
        np.sum(ratio - np.log(ratio) - 1.0 + (mean_q - mean_p) ** 2 / var_p)
    )


def _check_hdiag_prior(hdiag, prior_vars):
    hdiag = np.asarray(hdiag, dtype=np.float64)
    prior_vars = np.asarray(prior_vars, dtype=np.float64)
    if hdiag.shape != prior_vars.shape:
        raise ArgumentError("hdiag and prior_vars must share a shape")
    if np.any(hdiag < 0):
        raise ArgumentError("curvature entries must be non-negative")
    if np.any(prior_vars <= 0):
        raise ArgumentError("prior variances must be positive")
    return hdiag, prior_vars


def _inv_or_inf(x: float) -> float:
    return 1.0 / x if x > 0 else math.inf


def tail_constants(constants: AssumptionConstants, sigma2, theta_norm):
    """Margin-decay rates (c1, c2) from the landscape constants.

    c2 = min[ 1/(18 s2 G^2), 1/(18 s2 z^2 t^2), 1/(72 s2^2 kappa z^2) ],
    c1 = 1/(12 s2 z), with s2 the prior variance, G the gradient bound,
    z the curvature bound, and t the parameter norm. Vanishing constants
    push the corresponding rate to infinity.
    """
    if sigma2 <= 0:
        raise ArgumentError("sigma2 must be positive")
    g, z, kap = constants.g_bound, constants.zeta, constants.kappa
    c2 = min(
        _inv_or_inf(18.0 * sigma2 * g * g),
        _inv_or_inf(18.0 * sigma2 * z * z * theta_norm * theta_norm),
        _inv_or_inf(72.0 * sigma2 * sigma2 * kap * z * z),
    )
    c1 = _inv_or_inf(12.0 * sigma2 * z)
    return c1, c2


def tail_term(gamma, constants: AssumptionConstants, sigma2, theta_norm, d):
    """Margin tail d * exp(-min(c2 gamma^2, c1 gamma)).

    Returns:
        (value, margin_ok): margin_ok is False when gamma is not above
        6 * sigma2 * zeta * alpha, the threshold below which the decay
        rates are not guaranteed; the value is still computed.
    """
    if gamma < 0:
        raise ArgumentError("gamma must be non-negative")
    c1, c2 = tail_constants(constants, sigma2, theta_norm)
    if gamma == 0:
        exponent = 0.0
    else:
        exponent = min(c2 * gamma * gamma, c1 * gamma)
    value = d * math.exp(-exponent)
    margin_ok = gamma > 6.0 * sigma2 * constants.zeta * constants.alpha
    return value, margin_ok


def margin_inflation(constants: AssumptionConstants, theta_norm, depth) -> float:
    """Homogeneity slack rho_k added twice to the margin when requested.

    rho = 1.5 G t for depth 2 and G t + zeta t^2 / 2 for deeper networks,
    with t the parameter norm.
    """
    if depth < 2:
        raise ArgumentError("depth must be at least 2")
    if depth == 2:
        return 1.5 * constants.g_bound * theta_norm
    return constants.g_bound * theta_norm + 0.5 * constants.zeta * theta_norm ** 2


def estimate_assumption_constants(params: MlpParams, ds) -> AssumptionConstants:
    """Empirical plug-in estimates of the landscape constants.

    g_bound is the largest per-class logit gradient norm over the sample,
    zeta the largest Gauss-Newton diagonal entry, and alpha / kappa the
    trace and squared-Frobenius ratios of that diagonal against zeta. An
    all-zero diagonal returns alpha = kappa = 0.
    """
    g_max = 0.0
    total = np.zeros(params.num_params)
    for i in range(ds.n):
        jac, probs = _jacobian_and_probs(params, ds.features[i])
        g_max = max(g_max, float(np.sqrt((jac * jac).sum(axis=1)).max()))
        mean = probs @ jac
        total += probs @ (jac - mean) ** 2
    hdiag = total / ds.n
    zeta = float(hdiag.max())
    if zeta == 0.0:
        return AssumptionConstants(g_max, 0.0, 0.0, 0.0)
    alpha = float(hdiag.sum() / zeta)
    kappa = float((hdiag ** 2).sum() / zeta ** 2)
    return AssumptionConstants(g_max, zeta, kappa, alpha)


@dataclass
class BoundConfig:
    """Settings for evaluate_bound.

    prior_vars, when given, must lie in (0, sigma2] coordinate-wise;
    otherwise the prior is isotropic with variance sigma2. theta0 defaults
    to the zero vector. use_exact_kl switches kl_total from the
    effective-curvature + L2 upper bound to twice the exact diagonal KL.
    include_tail adds the margin tail using `constants` (estimated from
    the sample when absent).
    """

    sigma2: float
    gamma: float
    eta: float = 0.1
    delta: float = 0.05
    prior_vars: np.ndarray = None
    theta0: np.ndarray = None
    include_tail: bool = True
    use_exact_kl: bool = False
    inflate_margin: bool = False
    constants: AssumptionConstants = None
    variant: str = VARIANT_TWO_CLASS

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ArgumentError("sigma2 must be positive")
        if self.gamma < 0:
            raise ArgumentError("gamma must be non-negative")
        if not 0 < self.eta < 1:
            raise ArgumentError("eta must lie in (0, 1)")
        if not 0 < self.delta < 1:
            raise ArgumentError("delta must lie in (0, 1)")


@dataclass
class BoundReport:
    """All terms of one bound evaluation.

    total is exactly a * margin_loss + (b / 2n) * kl_total + tail_term +
    confidence_term, with kl_total = effective_curvature + l2_term unless
    the exact-KL variant was requested.
    """

    n: int
    p: int
    gamma: float
    sigma2: float
    eta: float
    delta: float
    margin_loss: float
    p_tilde: int
    effective_curvature: float
    l2_term: float
    kl_exact: float
    tail_term: float
    confidence_term: float
    total: float
    kl_total: float = 0.0
    a: float = 0.0
    b: float = 0.0
    d: float = 0.0
    margin_ok: bool = None
    use_exact_kl: bool = False
    include_tail: bool = True

    def csv_row(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]

    def csv_dict(self) -> dict:
        return {c: getattr(self, c) for c in CSV_COLUMNS}

    def text(self) -> str:
        lines = [
            f"n={self.n} p={self.p} gamma={self.gamma:g} sigma2={self.sigma2:g} "
            f"eta={self.eta:g} delta={self.delta:g}",
            f"margin_loss          {self.margin_loss:.6g}",
            f"effective_curvature  {self.effective_curvature:.6g} "
            f"(p_tilde={self.p_tilde})",
            f"l2_term              {self.l2_term:.6g}",
            f"kl_exact             {self.kl_exact:.6g}",
            f"tail_term            {self.tail_term:.6g}",
            f"confidence_term      {self.confidence_term:.6g}",
            f"total                {self.total:.6g}",
        ]
        if self.margin_ok is False:
            lines.append("warning: gamma below the guaranteed tail-decay range")
        return "\n".join(lines)


def evaluate_bound(params: MlpParams, ds, config: BoundConfig) -> BoundReport:
    """Evaluate every term of the certificate for a trained network."""
    n, p = ds.n, params.num_params
    theta = params.flatten()
    theta0 = (np.zeros(p) if config.theta0 is None
              else np.asarray(config.theta0, dtype=np.float64))
    if theta0.shape != theta.shape:
        raise ArgumentError("theta0 length does not match the parameter count")
    if config.prior_vars is None:
        prior_vars = np.full(p, float(config.sigma2))
    else:
        prior_vars = np.asarray(config.prior_vars, dtype=np.float64)
        if prior_vars.shape != theta.shape:
            raise ArgumentError("prior_vars length does not match the parameter count")
        if np.any(prior_vars <= 0) or np.any(prior_vars > config.sigma2):
            raise ArgumentError("prior variances must lie in (0, sigma2]")

    frc = fast_rate_constants(config.eta, ds.num_classes, config.variant)
    theta_norm = float(np.linalg.norm(theta))

    constants = config.constants
    if constants is None and (config.include_tail or config.inflate_margin):
        constants = estimate_assumption_constants(params, ds)

    gamma_eff = config.gamma
    if config.inflate_margin:
        gamma_eff = config.gamma + 2.0 * margin_inflation(
            constants, theta_norm, params.depth)
    ml = margin_loss(params, ds, gamma_eff)

    hdiag = hessian_diag(params, ds)
    ec, p_tilde = effective_curvature(hdiag, prior_vars)
    l2 = l2_term(theta, theta0, prior_vars)
    nu2 = posterior_variances(hdiag, prior_vars)
    kl_exact = 2.0 * kl_diag_gaussian(theta, nu2, theta0, prior_vars)
    kl_total = kl_exact if config.use_exact_kl else ec + l2

    if config.include_tail:
        tail, margin_ok = tail_term(
            config.gamma, constants, config.sigma2, theta_norm, frc.d)
    else:
        tail, margin_ok = 0.0, None

    confidence = frc.b * math.log(1.0 / config.delta) / n
    total = frc.a * ml + frc.b / (2.0 * n) * kl_total + tail + confidence
    return BoundReport(
        n=n, p=p, gamma=config.gamma, sigma2=config.sigma2, eta=config.eta,
        delta=config.delta, margin_loss=ml, p_tilde=p_tilde,
        effective_curvature=ec, l2_term=l2, kl_exact=kl_exact,
        tail_term=tail, confidence_term=confidence, total=total,
        kl_total=kl_total, a=frc.a, b=frc.b, d=frc.d, margin_ok=margin_ok,
        use_exact_kl=config.use_exact_kl, include_tail=config.include_tail,
    )


@dataclass
class SampleComplexityResult:
    """Output of sample_complexity with its intermediate quantities."""

    n0: int
    lam: float
    g_inv: float
    curvature_branch: float
    confidence_branch: float


def sample_complexity(margin_grid, eps, delta, depth, sigma2,
                      constants: AssumptionConstants, theta_norm,
                      hdiag) -> SampleComplexityResult:
    """Sample size sufficient for a target excess risk eps.

    margin_grid is an ascending list of (gamma, g(gamma)) pairs for the
    nondecreasing margin-gap function g. The inversion point is the
    smallest grid gamma with g(gamma) >= eps / 4; the scale lambda is the
    largest of five expressions built from the local curvature
    3 / g_inv, the decay rates (c1, c2), and the parameter norm; and

        n0 = ceil(max( (4/eps^2) (EC + lambda^2 t^2 / (2 s2))^2,
                       (16/eps^2) log(1/delta) ))

    with EC the effective curvature of hdiag under the isotropic prior.

    Raises:
        ArgumentError: depth <= 2, eps/delta out of (0, 1), or a
            decreasing grid.
        MarginInversionError: g never reaches eps / 4 on the grid.
    """
    if depth <= 2:
        raise ArgumentError("sample_complexity requires depth > 2")
    if not 0 < eps < 1:
        raise ArgumentError("eps must lie in (0, 1)")
    if not 0 < delta < 1:
        raise ArgumentError("delta must lie in (0, 1)")
    if sigma2 <= 0:
        raise ArgumentError("sigma2 must be positive")
    pairs = [(float(g), float(v)) for g, v in margin_grid]
    if not pairs:
        raise ArgumentError("margin grid must be non-empty")
    gs = [g for g, _ in pairs]
    vs = [v for _, v in pairs]
    if any(b < a for a, b in zip(gs, gs[1:])):
        raise ArgumentError("margin grid must be sorted ascending")
    if any(b < a for a, b in zip(vs, vs[1:])):
        raise ArgumentError("margin-gap values must be nondecreasing")

    target = eps / 4.0
    g_inv = next((g for g, v in pairs if v >= target), None)
    if g_inv is None:
        raise MarginInversionError(
            f"margin function never reaches eps/4 = {target:g} "
            f"(grid maximum {vs[-1]:g})"
        )

    zeta_loc = 3.0 / g_inv
    c1, c2 = tail_constants(constants, sigma2, theta_norm)
    log_term = math.log(24.0 / eps)
    lam = max(
        math.sqrt(zeta_loc * zeta_loc / c2 * log_term),
        math.sqrt(zeta_loc / c1 * log_term),
        math.sqrt(2.0 * zeta_loc * sigma2 * constants.alpha),
        (6.0 * constants.g_bound * theta_norm / g_inv) ** (1.0 / (depth - 1)),
        (3.0 * zeta_loc * theta_norm * theta_norm / g_inv) ** (1.0 / (depth - 2)),
    )

    hdiag = np.asarray(hdiag, dtype=np.float64)
    ec, _ = effective_curvature(hdiag, np.full(hdiag.shape, float(sigma2)))
    curvature_branch = (4.0 / (eps * eps)) * (
        ec + lam * lam * theta_norm * theta_norm / (2.0 * sigma2)) ** 2
    confidence_branch = (16.0 / (eps * eps)) * math.log(1.0 / delta)
    n0 = int(math.ceil(max(curvature_branch, confidence_branch)))
    return SampleComplexityResult(n0, lam, g_inv, curvature_branch,
                                  confidence_branch)


def spectral_norm_product(params: MlpParams, max_iters=200, tol=1e-10, seed=0):
    """Product of layer spectral norms via per-layer power iteration.

    Iterates v <- W'W v / |W'W v| from a seeded start and stops when two
    successive Rayleigh quotients differ by less than tol. Hitting
    max_iters on any layer clears the converged flag but the best
    estimate is still returned.

    Returns:
        (product, converged)
    """
    if max_iters < 1:
        raise ArgumentError("max_iters must be positive")
    if tol <= 0:
        raise ArgumentError("tol must be positive")
    rng = np.random.default_rng(seed)
    product = 1.0
    converged = True
    for w in params.layers:
        gram = w.T @ w
        v = rng.standard_normal(gram.shape[0])
        v /= np.linalg.norm(v)
        rayleigh = float(v @ (gram @ v))
        layer_done = False
        for _ in range(max_iters):
            bv = gram @ v
            norm = np.linalg.norm(bv)
            if norm == 0.0:
                rayleigh = 0.0
                layer_done = True
                break
            v = bv / norm
            new_rayleigh = float(v @ (gram @ v))
            if abs(new_rayleigh - rayleigh) < tol:
                rayleigh = new_rayleigh
                layer_done = True
                break
            rayleigh = new_rayleigh
        if not layer_done:
            converged = False
        product *= math.sqrt(max(rayleigh, 0.0))
    return product, converged
