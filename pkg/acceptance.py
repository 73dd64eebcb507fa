"""
驗收套件模組
以固定種子執行全部驗收準則，回報每項的狀態、量測值與容許誤差
"""
import math
import time
import logging
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy import special

from bodies import Halfspace, canonical_bp, l2_ball
from constructors import (TangentConfig, empirical_theta, junta_term_volume_check,
                          nazarov_w_scale, sample_junta_intersection, sample_nazarov,
                          solve_junta_params, solve_nazarov_params, tangent_approximator,
                          tune_nazarov_w)
from errors import ParameterError
from estimators import (boppana_check, estimate_distance, estimate_gns, estimate_total_influence,
                        iid_tail_check, iid_tail_exact_chi2, tail_ratio_without_replacement,
                        zoom_collapse_curve)
from experiments import ExperimentConfig, identity_suite, inequality_grid, run_experiment
from gaussian_core import HAZARD_CONSTANT, RandomStream, chi2_cdf, chi_pdf, gaussian_abs_moment, map_chunks

logger = logging.getLogger(__name__)

Tier = Literal["fast", "full"]
Status = Literal["pass", "fail", "outside_regime", "error"]


class AcceptanceTolerances(BaseModel):
    """各準則的門檻與放寬常數（套件內固定，不隨執行調整）"""
    sigma: float = 3.0
    volume_half_slack: float = 0.06
    ball_influence_floor: float = 0.398
    ball_influence_slack: float = 0.05
    cross_polytope_floor: float = 0.1
    cross_polytope_slack: float = 0.15
    dilation_slack: float = 0.05
    tangent_max_facets: int = 200
    nazarov_final_max: float = 0.25
    junta_distance_max: float = 0.2
    junta_rejection_max: float = 0.05
    solver_scale_low: float = 0.2
    solver_scale_high: float = 5.0
    solver_residual_max: float = 1e-6
    hrw_low: float = 0.5
    hrw_high: float = 2.0
    hazard_constant: float = HAZARD_CONSTANT
    # 預設 c_l1 = 1 在 n = 4096 得到 m > n，改用 1/8 使 m ≈ n/8
    junta_c_l1: float = 0.125


class TierScale(BaseModel):
    """每個層級的樣本規模"""
    volume_samples: int
    influence_samples: int
    boppana_seeds: int
    boppana_samples: int
    identity_samples: int
    identity_anchors: int
    identity_inner: int
    sheppard_samples: int
    tangent_samples: int
    nazarov_exponents: List[int]
    nazarov_seeds: int
    nazarov_samples: int
    junta_samples: int
    junta_theta_samples: int
    hrw_trials: int
    petrov_trials: int
    cj_samples: int
    zoom_seeds: int
    zoom_anchors: int
    zoom_inner: int


TIERS: Dict[str, TierScale] = {
    "full": TierScale(
        volume_samples=1_000_000, influence_samples=10_000_000,
        boppana_seeds=20, boppana_samples=100_000,
        identity_samples=1_000_000, identity_anchors=2000, identity_inner=2000,
        sheppard_samples=1_000_000, tangent_samples=1_000_000,
        nazarov_exponents=[6, 8, 10, 12, 14], nazarov_seeds=5, nazarov_samples=100_000,
        junta_samples=1_000_000, junta_theta_samples=200_000,
        hrw_trials=1_000_000, petrov_trials=1_000_000, cj_samples=1_000_000,
        zoom_seeds=5, zoom_anchors=400, zoom_inner=400,
    ),
    "fast": TierScale(
        volume_samples=200_000, influence_samples=1_000_000,
        boppana_seeds=4, boppana_samples=20_000,
        identity_samples=200_000, identity_anchors=400, identity_inner=400,
        sheppard_samples=200_000, tangent_samples=200_000,
        nazarov_exponents=[6, 8, 10], nazarov_seeds=3, nazarov_samples=20_000,
        junta_samples=200_000, junta_theta_samples=100_000,
        hrw_trials=100_000, petrov_trials=200_000, cj_samples=50_000,
        zoom_seeds=3, zoom_anchors=150, zoom_inner=150,
    ),
}


class CriterionResult(BaseModel):
    index: int
    name: str
    status: Status
    measured: Dict[str, Any] = Field(default_factory=dict)
    tolerances: Dict[str, Any] = Field(default_factory=dict)
    seconds: float = 0.0
    message: str = ""


class AcceptanceReport(BaseModel):
    tier: Tier
    entries: List[CriterionResult]

    @property
    def passed(self) -> bool:
        return all(e.status == "pass" for e in self.entries)


Outcome = Tuple[Status, Dict[str, Any], Dict[str, Any]]


def _status(ok: bool) -> Status:
    return "pass" if ok else "fail"


# ============ 準則 ============

def _volume_oracle(scale: TierScale, tol: AcceptanceTolerances, threads: Optional[int]) -> Outcome:
    measured: Dict[str, Any] = {}
    ok = True
    for n in (10, 100):
        cfg = ExperimentConfig(command="volume", seed=1, samples=scale.volume_samples, threads=threads,
                               options={"body": f"l2ball:n={n},r=auto"})
        volume = run_experiment(cfg, persist=False)[0].estimates["volume"]
        exact = float(chi2_cdf(n, n))
        agrees = abs(volume["value"] - exact) <= tol.sigma * volume["stderr"]
        measured[f"n{n}"] = {"estimate": volume["value"], "stderr": volume["stderr"], "exact": exact}
        ok &= agrees
    half_gap = abs(float(chi2_cdf(100, 100)) - 0.5)
    measured["half_gap_n100"] = half_gap
    ok &= half_gap <= tol.volume_half_slack
    return _status(ok), measured, {"sigma": tol.sigma, "volume_half_slack": tol.volume_half_slack}


def _ball_influence(scale: TierScale, tol: AcceptanceTolerances, threads: Optional[int]) -> Outcome:
    n = 64
    tinf = estimate_total_influence(l2_ball(n, 8.0), scale.influence_samples, RandomStream(seed=2), threads)
    exact = 8.0 * float(chi_pdf(8.0, n))
    floor = tol.ball_influence_floor * 8.0 * (1.0 - tol.ball_influence_slack)
    ok = tinf.agrees_with(exact, tol.sigma) and exact >= floor
    return (_status(ok), {"estimate": tinf.value, "stderr": tinf.stderr, "exact": exact},
            {"sigma": tol.sigma, "analytic_floor": floor})


def _cross_polytope_influence(scale: TierScale, tol: AcceptanceTolerances, threads: Optional[int]) -> Outcome:
    n = 64
    tinf = estimate_total_influence(canonical_bp(n, 1.0), scale.influence_samples, RandomStream(seed=3), threads)
    floor = tol.cross_polytope_floor * math.sqrt(n) * (1.0 - tol.cross_polytope_slack)
    ok = tinf.value - tol.sigma * tinf.stderr >= floor
    return _status(ok), {"estimate": tinf.value, "stderr": tinf.stderr}, {"floor": floor, "sigma": tol.sigma}


def _boppana(scale: TierScale, tol: AcceptanceTolerances, threads: Optional[int]) -> Outcome:
    n = 16
    cases = []
    for seed in range(scale.boppana_seeds):
        for s in (8, 64, 512):
            # Φ(w/√n)^s ≈ 0.6，體積落在 [0.3, 0.9]
            w = math.sqrt(n) * float(special.ndtri(0.6 ** (1.0 / s)))
            build_stream, probe_stream = RandomStream(seed=1000 + seed, stream_id=s).split(2)
            polytope = sample_nazarov(n, w, s, build_stream)
            check = boppana_check(polytope, scale.boppana_samples, probe_stream, threads, tol.sigma)
            cases.append({"seed": seed, "s": s, "tinf": check.tinf.value,
                          "stderr": check.tinf.stderr, "bound": check.bound, "holds": check.holds})
    ok = all(c["holds"] for c in cases)
    worst = max(cases, key=lambda c: c["tinf"] / c["bound"])
    return _status(ok), {"cases": len(cases), "worst": worst}, {"sigma": tol.sigma}


def _identities(scale: TierScale, tol: AcceptanceTolerances, threads: Optional[int]) -> Outcome:
    results = identity_suite(scale.identity_samples, RandomStream(seed=5), threads,
                             scale.identity_anchors, scale.identity_inner, tol.sigma, tol.dilation_slack)
    ok = all(r["agrees"] for r in results.values())
    return _status(ok), results, {"sigma": tol.sigma, "dilation_slack": tol.dilation_slack}


def _sheppard(scale: TierScale, tol: AcceptanceTolerances, threads: Optional[int]) -> Outcome:
    halfspace = Halfspace(np.eye(5)[0], 0.0)
    measured = {}
    ok = True
    for index, rho in enumerate((0.05, 0.1, 0.25)):
        gns = estimate_gns(halfspace, rho, scale.sheppard_samples, RandomStream(seed=6, stream_id=index), threads)
        exact = math.acos(1.0 - 2.0 * rho) / math.pi
        measured[f"rho{rho}"] = {"estimate": gns.value, "stderr": gns.stderr, "exact": exact}
        ok &= gns.agrees_with(exact, tol.sigma)
    return _status(ok), measured, {"sigma": tol.sigma}


def _tangent(scale: TierScale, tol: AcceptanceTolerances, threads: Optional[int]) -> Outcome:
    eps, delta = 0.2, 0.1
    disk = l2_ball(2, math.sqrt(-2.0 * math.log(delta)))
    tangent_config = TangentConfig.practical(eps, delta, math.pi / 16.0)
    polytope = tangent_approximator(disk, tangent_config)
    distance = estimate_distance(disk, polytope, scale.tangent_samples, RandomStream(seed=7), threads)
    facets = polytope.facet_count()
    logger.info(f"📊 切平面近似器：{facets} 個面，dist={distance.value:.3g}")
    ok = distance.value + tol.sigma * distance.stderr <= eps * delta and facets <= tol.tangent_max_facets
    return (_status(ok), {"distance": distance.value, "stderr": distance.stderr, "facets": facets},
            {"target": eps * delta, "sigma": tol.sigma, "max_facets": tol.tangent_max_facets})


def _nazarov_curve(scale: TierScale, tol: AcceptanceTolerances, threads: Optional[int]) -> Outcome:
    n = 8
    target = l2_ball(n, math.sqrt(n))
    medians = []
    for exponent in scale.nazarov_exponents:
        s = 2 ** exponent
        distances = [tune_nazarov_w(target, s, RandomStream(seed=800 + seed, stream_id=s),
                                    scale.nazarov_samples, 20, threads).distance.value
                     for seed in range(scale.nazarov_seeds)]
        medians.append(float(np.median(distances)))
    ok = all(b < a for a, b in zip(medians, medians[1:]))
    if 14 in scale.nazarov_exponents:
        ok &= medians[scale.nazarov_exponents.index(14)] <= tol.nazarov_final_max
    return (_status(ok), {"exponents": scale.nazarov_exponents, "median_distance": medians},
            {"final_max": tol.nazarov_final_max})


def _junta_l1(scale: TierScale, tol: AcceptanceTolerances, threads: Optional[int]) -> Outcome:
    n, m, M = 128, 48, 64
    stream = RandomStream(seed=9)
    theta = empirical_theta(n, 1.0, m, 1.0 - 1.0 / (2.0 * M), scale.junta_theta_samples, stream)
    junta = sample_junta_intersection(n, 1.0, M, m, theta, stream)
    distance = estimate_distance(canonical_bp(n, 1.0), junta, scale.junta_samples, stream, threads)

    mu = n * gaussian_abs_moment(1.0)
    sigma = math.sqrt(n * (1.0 - 2.0 / math.pi))

    def rejections(sub: RandomStream, size: int) -> Tuple[int, int]:
        X = sub.normals((size, n))
        deep = np.abs(X).sum(axis=1) <= mu - 2.0 * sigma
        return int(deep.sum()), int((~junta.contains(X[deep])).sum()) if deep.any() else 0

    parts = map_chunks(rejections, scale.junta_samples, stream, threads)
    deep_total = sum(p[0] for p in parts)
    rejected = sum(p[1] for p in parts)
    rate = rejected / deep_total if deep_total else 0.0
    ok = distance.value <= tol.junta_distance_max and rate <= tol.junta_rejection_max
    return (_status(ok), {"theta": theta, "distance": distance.value, "stderr": distance.stderr,
                          "deep_probes": deep_total, "rejection_rate": rate},
            {"distance_max": tol.junta_distance_max, "rejection_max": tol.junta_rejection_max})


def _solver_scaling(scale: TierScale, tol: AcceptanceTolerances, threads: Optional[int]) -> Outcome:
    ratios = {}
    worst_residual = 0.0
    for n in (16, 64, 256, 1024, 4096):
        for eps in (0.3, 0.1, 0.03):
            params = solve_nazarov_params(n, eps)
            ratios[f"n{n}_eps{eps}"] = params.w / nazarov_w_scale(n, eps)
            worst_residual = max(worst_residual, params.residual)
    ok = (all(tol.solver_scale_low <= r <= tol.solver_scale_high for r in ratios.values())
          and worst_residual <= tol.solver_residual_max)
    return (_status(ok), {"ratios": ratios, "worst_residual": worst_residual},
            {"scale_low": tol.solver_scale_low, "scale_high": tol.solver_scale_high,
             "residual_max": tol.solver_residual_max})


def _cramer(scale: TierScale, tol: AcceptanceTolerances, threads: Optional[int]) -> Outcome:
    stream = RandomStream(seed=11)
    values = np.abs(stream.split(1)[0].normals(2000))
    population = values - values.mean()
    grid = [0.5, 1.0, 2.0]
    hrw = tail_ratio_without_replacement(population, 200, grid, scale.hrw_trials, stream, threads)
    hrw_ok = all(tol.hrw_low <= r <= tol.hrw_high for r in hrw.ratios)

    petrov = iid_tail_check(2.0, 400, [1.0], scale.petrov_trials, stream, threads)
    exact_ratio = iid_tail_exact_chi2(400, 1.0)
    exact_probability = exact_ratio * float(special.ndtr(-1.0))
    petrov_ok = petrov.exceedance[0].agrees_with(exact_probability, tol.sigma)
    return (_status(hrw_ok and petrov_ok),
            {"hrw_ratios": hrw.ratios, "petrov_ratio": petrov.ratios[0], "petrov_exact": exact_ratio},
            {"hrw_range": [tol.hrw_low, tol.hrw_high], "sigma": tol.sigma})


def _inequalities(scale: TierScale, tol: AcceptanceTolerances, threads: Optional[int]) -> Outcome:
    checks = inequality_grid(tol.hazard_constant)
    failed = [c for c in checks if not c["holds"]]
    return (_status(not failed), {"checks": len(checks), "failed": failed},
            {"hazard_constant": tol.hazard_constant})


def _junta_term_volume(scale: TierScale, tol: AcceptanceTolerances, threads: Optional[int]) -> Outcome:
    params = solve_junta_params(4096, 1.0, 0.3, c_l1=tol.junta_c_l1)
    if tol.junta_c_l1 != 1.0:
        logger.info(f"ℹ️ 準則 13 使用 c_l1={tol.junta_c_l1}（預設 1）")
    M = params.M
    substituted = None
    if M is None or not 3 <= M <= 10 ** 6:
        # M 為 None 代表 log_M 已溢位
        substituted = 10 ** 6 if M is None else min(max(M, 3), 10 ** 6)
        logger.warning(f"⚠️ M={M} 超出 [3, 10⁶]，改用 {substituted}")
        M = substituted
    check = junta_term_volume_check(params.m, 1.0, params.theta, M, scale.cj_samples,
                                    RandomStream(seed=13), tol.sigma, threads)
    if check.bounds_hold:
        status: Status = "pass"
    elif params.m < params.m_unclamped:
        # m 被截斷到 n/2，界不適用；仍算未通過
        status = "outside_regime"
    else:
        status = "fail"
    return (status, {"m": params.m, "m_unclamped": params.m_unclamped, "theta": params.theta,
                     "M": M, "M_substituted": substituted, "c_l1": tol.junta_c_l1,
                     "c_l1_substituted": tol.junta_c_l1 != 1.0, "volume": check.volume.value,
                     "stderr": check.volume.stderr},
            {"lower": check.lower, "upper": check.upper, "sigma": tol.sigma})


def _zoom_collapse(scale: TierScale, tol: AcceptanceTolerances, threads: Optional[int]) -> Outcome:
    n, s = 8, 16
    w = math.sqrt(n) * float(special.ndtri(0.5 ** (1.0 / s)))
    lambdas = [0.5, 0.2, 0.05]
    rows = []
    for seed in range(scale.zoom_seeds):
        build_stream, probe_stream = RandomStream(seed=1400 + seed).split(2)
        polytope = sample_nazarov(n, w, s, build_stream)
        curve = zoom_collapse_curve(polytope, lambdas, [0.5], scale.zoom_anchors, scale.zoom_inner,
                                    probe_stream, threads)
        rows.append([row[0] for row in curve.exceedance])
    medians = np.median(np.asarray(rows), axis=0).tolist()
    ok = all(b <= a for a, b in zip(medians, medians[1:]))
    return _status(ok), {"lambdas": lambdas, "median_exceedance": medians}, {"threshold": 0.5}


def _determinism(scale: TierScale, tol: AcceptanceTolerances, threads: Optional[int]) -> Outcome:
    payloads = []
    for worker_count in (1, 4):
        cfg = ExperimentConfig(command="volume", seed=1, samples=scale.volume_samples,
                               threads=worker_count, options={"body": "l2ball:n=10,r=auto"})
        record = run_experiment(cfg, persist=False)[0]
        payloads.append((record.params, record.estimates, record.seed))
    identical = payloads[0] == payloads[1]
    return _status(identical), {"identical": identical}, {"threads": [1, 4]}


CRITERIA: List[Tuple[str, Callable[[TierScale, AcceptanceTolerances, Optional[int]], Outcome]]] = [
    ("volume_oracle", _volume_oracle),
    ("ball_influence", _ball_influence),
    ("cross_polytope_influence", _cross_polytope_influence),
    ("boppana", _boppana),
    ("identities", _identities),
    ("sheppard", _sheppard),
    ("tangent", _tangent),
    ("nazarov_curve", _nazarov_curve),
    ("junta_l1", _junta_l1),
    ("solver_scaling", _solver_scaling),
    ("cramer", _cramer),
    ("inequalities", _inequalities),
    ("junta_term_volume", _junta_term_volume),
    ("zoom_collapse", _zoom_collapse),
    ("determinism", _determinism),
]


def run_acceptance_suite(tier: Tier = "fast", only: Optional[Sequence[str]] = None,
                         tolerances: Optional[AcceptanceTolerances] = None,
                         threads: Optional[int] = None) -> AcceptanceReport:
    """
    執行驗收套件

    Args:
        tier: fast 或 full
        only: 只執行指定名稱的準則
        tolerances: 容許誤差（預設 AcceptanceTolerances()）
        threads: 執行緒數

    Returns:
        AcceptanceReport（失敗記錄在報告中，不拋出例外）
    """
    if tier not in TIERS:
        raise ParameterError(f"未知的驗收層級: {tier}")
    names = [name for name, _ in CRITERIA]
    if only is not None:
        unknown = [name for name in only if name not in names]
        if unknown:
            raise ParameterError(f"未知的驗收準則: {unknown}")
    scale = TIERS[tier]
    tol = tolerances or AcceptanceTolerances()
    entries = []
    for index, (name, criterion) in enumerate(CRITERIA, start=1):
        if only is not None and name not in only:
            continue
        logger.info(f"🔄 [{index}/{len(CRITERIA)}] {name}")
        start = time.perf_counter()
        try:
            status, measured, tolerance_used = criterion(scale, tol, threads)
            message = ""
        except Exception as e:
            logger.error(f"❌ {name} 執行失敗: {e}")
            status, measured, tolerance_used, message = "error", {}, {}, str(e)
        seconds = time.perf_counter() - start
        icon = {"pass": "✅", "outside_regime": "⚠️"}.get(status, "❌")
        logger.info(f"{icon} {name}: {status}（{seconds:.1f} 秒）")
        entries.append(CriterionResult(index=index, name=name, status=status, measured=measured,
                                       tolerances=tolerance_used, seconds=seconds, message=message))
    return AcceptanceReport(tier=tier, entries=entries)
