"""Residuals of the pathwise identities, one function per named check.

Every function has the signature ``(n, seed, paths) -> float`` and returns a
nonnegative residual computed on a fresh batch with base grid ``n``.  The
same functions feed the tolerance calibration and the tests, so a tolerance
``C n^{-1/2}`` always refers to exactly the quantity measured here.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .calculus import (
    IntegrandPath,
    ito_reciprocal_check,
    quadratic_covariation,
    relative_row_sup,
    step_integrand,
    stochastic_integral,
)
from .measure import girsanov_classical, inverse_transform, lenglart_transform
from .models import (
    RngStream,
    build_continuous_control,
    build_sec5_1,
    build_usual_orth,
    simulate_brownian,
)
from .paths import CadlagPath
from .representation import (
    LocalizationSequence,
    construct_integrand,
    localize,
    single_jump_mrp_integrand,
    verify_representation,
)

__all__ = ["CHECKS", "EXACT_CHECKS", "residual", "sec5_1_representation", "random_step_integrands",
           "commutation_residual"]

REP_T = 0.2  # below 1/4 so that Q(tau1 <= T) < 1 and the target is not constant


def _sup(a) -> float:
    a = np.asarray(a, dtype=float)
    return float(np.max(np.abs(a))) if a.size else 0.0


def _sup_path(p: CadlagPath) -> float:
    return max(_sup(p.values), _sup(p.left_limits))


# ----------------------------------------------------------------------
# individual checks

def brownian_qv(n: int, seed: int, paths: int = 20) -> float:
    W = simulate_brownian(1.0, n, RngStream(seed, 100), paths=paths)
    return _sup(quadratic_covariation(W, W).values[..., -1] - 1.0)


def stoch_exp_usual(n: int, seed: int, paths: int = 50) -> float:
    s = build_usual_orth(1.0, n, RngStream(seed, 101), paths=paths)
    out = 0.0
    for name in ("X", "Y"):
        sim, cf = s[name].values, s.closed_forms[name].values
        pos = cf > 0
        rel = np.where(pos, np.abs(sim / np.where(pos, cf, 1.0) - 1.0), np.abs(sim))
        out = max(out, float(np.max(rel)))
    return out


def usual_bracket(n: int, seed: int, paths: int = 50) -> float:
    s = build_usual_orth(1.0, n, RngStream(seed, 102), paths=paths)
    X, Y = s["X"], s["Y"]
    res = quadratic_covariation(X, Y) + stochastic_integral(IntegrandPath(X * Y), s["M"])
    return relative_row_sup(res, X * Y)


def ito_continuous(n: int, seed: int, paths: int = 50) -> float:
    s = build_continuous_control(1.0, n, RngStream(seed, 103), paths=paths)
    return ito_reciprocal_check(s["Z"])


def ito_fv_sec5_1(n: int, seed: int, paths: int = 50) -> float:
    s = build_sec5_1(REP_T, n, RngStream(seed, 104), paths=paths)
    return ito_reciprocal_check(s["Z"])


def roundtrip_continuous(n: int, seed: int, paths: int = 50) -> float:
    s = build_continuous_control(1.0, n, RngStream(seed, 105), paths=paths)
    back = inverse_transform(lenglart_transform(s["X"], s["Z"]), s["Z"])
    return _sup_path(back - s["X"])


def roundtrip_usual(n: int, seed: int, paths: int = 50) -> float:
    s = build_usual_orth(1.0, n, RngStream(seed, 106), paths=paths)
    out = 0.0
    for name in ("X", "Y"):
        back = inverse_transform(lenglart_transform(s[name], s["Z"]), s["Z"])
        out = max(out, relative_row_sup(back - s[name], s[name]))
    return out


def classical_vs_lenglart(n: int, seed: int, paths: int = 50) -> float:
    s = build_continuous_control(1.0, n, RngStream(seed, 107), paths=paths)
    lh = lenglart_transform(s["X"], s["Z"])
    cl = girsanov_classical(s["X"], s["Z"], s.predictable_covariations["X,Z"], s.meta)
    return _sup_path(lh - cl)


def orthogonality_continuous(n: int, seed: int, paths: int = 50) -> float:
    s = build_continuous_control(1.0, n, RngStream(seed, 108), paths=paths)
    a = lenglart_transform(s["X"], s["Z"])
    b = lenglart_transform(s["X2"], s["Z"])
    return _sup_path(quadratic_covariation(a, b))


def random_step_integrands(rng: np.random.Generator, like: CadlagPath, driver: CadlagPath,
                           T: float, count: int = 20, pieces: int = 5) -> list[IntegrandPath]:
    """Random predictable step integrands.

    Levels are ``a_i + b_i tanh(driver at the left end of the piece)``, so
    they depend on the path but only through information available when the
    piece starts.
    """
    out = []
    for _ in range(count):
        br = np.concatenate([[0.0], np.sort(rng.uniform(0, T, pieces - 1)), [T]])
        a = rng.normal(size=pieces)
        b = rng.normal(size=pieces)
        at = np.stack([np.asarray(driver.value_at(x), dtype=float) for x in br[:-1]], axis=-1)
        out.append(step_integrand(br, a + b * np.tanh(at), like))
    return out


def commutation_residual(M: CadlagPath, Z: CadlagPath, Hs) -> float:
    worst = 0.0
    LM = lenglart_transform(M, Z)
    for H in Hs:
        lhs = lenglart_transform(stochastic_integral(H, M), Z)
        rhs = stochastic_integral(H, LM)
        worst = max(worst, _sup_path(lhs - rhs))
    return worst


def commutation(n: int, seed: int, paths: int = 20) -> float:
    rng = np.random.default_rng([seed, 109])
    worst = 0.0
    models = [
        (build_sec5_1(REP_T, n, RngStream(seed, 110), paths=paths), REP_T, ("X",)),
        (build_continuous_control(1.0, n, RngStream(seed, 111), paths=paths), 1.0, ("X", "X2")),
        (build_usual_orth(1.0, n, RngStream(seed, 112), paths=paths), 1.0, ("X", "Y")),
    ]
    for scn, T, comps in models:
        for c in comps:
            M = scn[c]
            Hs = random_step_integrands(rng, M, M, T)
            worst = max(worst, commutation_residual(M, scn["Z"], Hs))
    return worst


def sec5_1_representation(n: int, seed: int, paths: int = 50, T: float = REP_T,
                          negative_control: bool = False):
    """Represent ``N = E_Q[1{tau1 <= T} | F_t]`` against ``Xhat`` on sec5-1.

    ``Z N`` is the ``P``-martingale closed by ``g(tau1) = Z_T 1{tau1 <= T}``;
    its integrand against ``X = u^{-1/2} . M^{tau1}`` is
    ``sqrt(t) (g(t) - h(t)) = 1 + sqrt(t) - 2t - sqrt(t) h(t)`` on ``[0, T]``.
    Returns the certificate.
    """
    s = build_sec5_1(T, n, RngStream(seed, 113), paths=paths)
    X, Z = s["X"], s["Z"]
    tau = np.asarray(s.stopping_times["tau1"].value)

    def g(u):
        return (1.0 + 1.0 / np.sqrt(u) - 2.0 * np.sqrt(u)) if 0 < u <= T else 0.0

    sj = single_jump_mrp_integrand(g, rate=1.0, breakpoints=[T], upper=T)
    ZN = sj.martingale(X.times, tau)
    t = X.times
    rt = np.sqrt(t)
    k = np.where(t <= T, 1.0 + rt - 2.0 * t - rt * sj.h(t), 0.0)
    K = IntegrandPath.from_arrays(t, np.where(t < T, k, 0.0), k, tag="K")
    N = ZN.with_data(ZN.values / Z.values, ZN.left_limits / Z.left_limits)
    taus = localize(ZN, T)
    loc = LocalizationSequence(taus, [K] * (len(taus) - 1))
    H = s.integrands["H"]
    phi = construct_integrand(H, loc, Z, N, T=T)
    if negative_control:
        zero = np.zeros(t.shape)
        phi = IntegrandPath.from_arrays(t, zero, zero)
    Xh = lenglart_transform(X, Z)
    return verify_representation(N, phi, Xh, scope="mc_tolerance", tolerance=np.inf)


def representation_sec5_1(n: int, seed: int, paths: int = 50) -> float:
    return sec5_1_representation(n, seed, paths).residual


def single_jump_self(n: int, seed: int, paths: int = 50) -> float:
    """``E[1{tau <= 1} | F_t]`` against its single-jump integrand."""
    from .models import simulate_poisson
    from .paths import stop

    ps = simulate_poisson(1.0, 2.0, RngStream(seed, 114), paths=paths, n=n, extra=[1.0])
    tau = np.asarray(ps.tau1.value)
    Mst = stop(ps.M, tau)
    sj = single_jump_mrp_integrand(lambda u: 1.0 if u <= 1.0 else 0.0, breakpoints=[1.0], upper=1.0)
    N = sj.martingale(Mst.times, tau)
    cert = verify_representation(N, sj.integrand(Mst.times), Mst, scope="mc_tolerance",
                                 tolerance=np.inf)
    return cert.residual


CHECKS: dict[str, Callable[..., float]] = {
    "brownian_qv": brownian_qv,
    "stoch_exp_usual": stoch_exp_usual,
    "usual_bracket": usual_bracket,
    "ito_continuous": ito_continuous,
    "ito_fv_sec5_1": ito_fv_sec5_1,
    "roundtrip_continuous": roundtrip_continuous,
    "roundtrip_usual": roundtrip_usual,
    "classical_vs_lenglart": classical_vs_lenglart,
    "orthogonality_continuous": orthogonality_continuous,
    "commutation": commutation,
    "representation_sec5_1": representation_sec5_1,
    "single_jump_self": single_jump_self,
}


def ito_jumps_sec5_1(n: int, seed: int, paths: int = 50) -> float:
    """Reciprocal identity on the jump parts only; exact for a pure-jump density."""
    s = build_sec5_1(REP_T, n, RngStream(seed, 115), paths=paths)
    return ito_reciprocal_check(s["Z"], jumps_only=True)


def roundtrip_sec5_1(n: int, seed: int, paths: int = 50) -> float:
    s = build_sec5_1(REP_T, n, RngStream(seed, 116), paths=paths)
    back = inverse_transform(lenglart_transform(s["X"], s["Z"]), s["Z"])
    return relative_row_sup(back - s["X"], s["X"])


def xhat_closed_form_sec5_1(n: int, seed: int, paths: int = 50) -> float:
    s = build_sec5_1(0.25, n, RngStream(seed, 117), paths=paths)
    return _sup_path(lenglart_transform(s["X"], s["Z"]) - s.closed_forms["Xhat"])


# checks that hold up to rounding on any grid; budget 1e-10
EXACT_CHECKS: dict[str, Callable[..., float]] = {
    "ito_jumps_sec5_1": ito_jumps_sec5_1,
    "roundtrip_sec5_1": roundtrip_sec5_1,
    "xhat_closed_form_sec5_1": xhat_closed_form_sec5_1,
}


def residual(check: str, n: int, seed: int, paths: int | None = None) -> float:
    fn = CHECKS.get(check) or EXACT_CHECKS[check]
    return fn(n, seed) if paths is None else fn(n, seed, paths)
