"""Safety-bound formulas for SPIBB on (finite-)history MDPs.

Two variants share one formula and differ only in the state count used in the
union bound:

``finite-history``  |N×Z|, the ⟨n,z⟩ states of the improved policy's window
``history``         a caller-supplied finite proxy for |H| (e.g. |H_k|)

In both, the successor support is bounded by 2^|Z| rather than 2^|S|, since a
history's successors are determined by the next observation.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

VARIANTS = ("finite-history", "history")


def _log_term(state_count: float, action_count: int, support_exp: int, delta: float) -> float:
    # log(2 |X| |A| 2^e / δ); ldexp scales by 2^e exactly
    try:
        return math.log(math.ldexp(2.0 * state_count * action_count / delta, support_exp))
    except OverflowError:
        return (math.log(2.0 * state_count * action_count / delta)
                + support_exp * math.log(2.0))


def epsilon(n_wedge: float, delta: float, state_count: float, action_count: int,
            obs_count: int) -> float:
    """L1 radius ε holding for every pair with more than N∧ samples, w.p. 1-δ."""
    if n_wedge <= 0:
        return math.inf
    if delta <= 0:
        raise ValueError("delta must be positive")
    return math.sqrt(2.0 / n_wedge * max(0.0, _log_term(state_count, action_count, obs_count, delta)))


@dataclass
class SafetyReport:
    zeta: float
    epsilon: float
    rho_improved_mle: float
    rho_behavior_mle: float
    variant: str
    inputs: dict = field(default_factory=dict)

    def recompute(self) -> float:
        return zeta_bound(**self.inputs).zeta

    def to_json(self) -> str:
        def enc(x):
            return x if not (isinstance(x, float) and math.isinf(x)) else "inf"
        doc = {k: enc(v) for k, v in asdict(self).items() if k != "inputs"}
        doc["inputs"] = {k: enc(v) for k, v in self.inputs.items()}
        return json.dumps(doc, sort_keys=True)


def zeta_bound(variant: str, state_count: float, action_count: int, obs_count: int,
               n_wedge: float, delta: float, v_max: float, gamma: float,
               rho_improved_mle: float, rho_behavior_mle: float) -> SafetyReport:
    """Admissible performance loss ζ = 4V_max/(1-γ) · ε - ρ(π_I, M̃) + ρ(π_β, M̃).

    N∧ = 0 gives ζ = ε = inf (no guarantee).
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if state_count <= 0 or action_count <= 0 or obs_count < 0 or n_wedge < 0 or v_max < 0:
        raise ValueError("counts must be positive and n_wedge, v_max nonnegative")
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must be in [0, 1)")
    inputs = dict(variant=variant, state_count=state_count, action_count=action_count,
                  obs_count=obs_count, n_wedge=n_wedge, delta=delta, v_max=v_max, gamma=gamma,
                  rho_improved_mle=rho_improved_mle, rho_behavior_mle=rho_behavior_mle)
    eps = epsilon(n_wedge, delta, state_count, action_count, obs_count)
    if math.isinf(eps):
        zeta = math.inf
    else:
        zeta = 4.0 * v_max / (1.0 - gamma) * eps - rho_improved_mle + rho_behavior_mle
    return SafetyReport(zeta, eps, rho_improved_mle, rho_behavior_mle, variant, inputs)


def sufficiency_count(zeta: float, delta: float, state_count: float, action_count: int,
                      v_max: float, gamma: float, support_exp: int | None = None) -> int:
    """Samples per pair after which plain MLE solving is ζ-safe w.p. 1-δ.

    ⌈8 V_max² / (ζ² (1-γ)²) · log(2 |X| |A| 2^e / δ)⌉, clamped at 0. The
    exponent e defaults to ``state_count`` (the fully observable MDP form);
    pass |Z| for the finite-history refinement.
    """
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    if delta <= 0:
        raise ValueError("delta must be positive")
    e = int(state_count) if support_exp is None else support_exp
    value = 8.0 * v_max ** 2 / (zeta ** 2 * (1.0 - gamma) ** 2) \
        * _log_term(state_count, action_count, e, delta)
    return max(0, math.ceil(value))


def weissman_check(support_size: int, m: float, eps: float) -> float:
    """Upper bound on Pr(||P - P̃_m||_1 >= ε) for an m-sample empirical distribution."""
    if support_size < 2 or m < 1 or eps <= 0:
        raise ValueError("need support_size >= 2, m >= 1 and eps > 0")
    return min(1.0, (2.0 ** support_size - 2.0) * math.exp(-m * eps * eps / 2.0))
