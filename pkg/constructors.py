"""
近似器建構模組
Nazarov 隨機多面體、ℓp junta 交集、切平面相對誤差近似器，
各自的參數求解器，以及面數上界計算
"""
import math
import logging
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy import optimize, special

import config
from bodies import Body, JuntaIntersection, Polytope
from errors import (BudgetError, CapabilityError, DimensionError, ParameterError,
                    SolverError, UnsupportedDimensionError)
from gaussian_core import (Estimate, RandomStream, gaussian_abs_moment, map_chunks,
                           monte_carlo_mean, sample_without_replacement, tail_m)

logger = logging.getLogger(__name__)

# 比值方程式在對數域的容許殘差
NAZAROV_RESIDUAL_TOL = 1e-6


# ============ Nazarov 隨機多面體 ============

class NazarovParams(BaseModel):
    """Nazarov 建構的參數（s 以 log 形式保存）"""
    n: int
    eps: float
    d_in: float
    d_out: float
    w: float
    log_s: float
    residual: float
    bracket: Tuple[float, float]

    @property
    def s_estimate(self) -> float:
        return math.exp(self.log_s) if self.log_s < 700 else math.inf


def nazarov_w_scale(n: int, eps: float) -> float:
    """w 的漸近尺度 n^{3/4}·√((1/ε)(ln(4/ε) + ln ln(4/ε)))"""
    log_term = math.log(4.0 / eps)
    return n ** 0.75 * math.sqrt((log_term + math.log(log_term)) / eps)


def solve_nazarov_params(n: int, eps: float, bracket: Optional[Tuple[float, float]] = None) -> NazarovParams:
    """
    求解 (1−Φ(w/d_out))/(1−Φ(w/d_in)) = (4/ε)·ln(4/ε)

    在對數尾部空間以二分法求根，d_in/out = √n ∓ ε/4，
    並回傳 log s = log(ε/4) − log(1 − Φ(w/d_in))。

    Args:
        n: 維度（≥ 2）
        eps: 目標誤差，0 < ε < 0.5
        bracket: 搜尋區間，預設 [√n, 100n]

    Returns:
        NazarovParams
    """
    if n < 2:
        raise DimensionError(f"Nazarov 建構需要 n ≥ 2，收到 {n}")
    if not 0.0 < eps < 0.5:
        raise ParameterError(f"ε 必須在 (0, 0.5)，收到 {eps}")
    root_n = math.sqrt(n)
    d_in = root_n - eps / 4.0
    d_out = root_n + eps / 4.0
    target = math.log((4.0 / eps) * math.log(4.0 / eps))

    def gap(w: float) -> float:
        return float(special.log_ndtr(-w / d_out) - special.log_ndtr(-w / d_in)) - target

    lo, hi = bracket if bracket is not None else (root_n, 100.0 * n)
    gap_lo, gap_hi = gap(lo), gap(hi)
    if gap_lo * gap_hi > 0:
        raise SolverError(
            f"Nazarov 比值方程式在 [{lo}, {hi}] 內沒有變號",
            diagnostics={"lo": lo, "hi": hi, "gap_lo": gap_lo, "gap_hi": gap_hi},
        )
    w = optimize.bisect(gap, lo, hi, xtol=1e-12, maxiter=500)
    residual = abs(gap(w))
    if residual > NAZAROV_RESIDUAL_TOL:
        raise SolverError(f"Nazarov 求解殘差 {residual} 過大", diagnostics={"w": w})
    log_s = math.log(eps / 4.0) - float(special.log_ndtr(-w / d_in))
    logger.info(f"✅ Nazarov 參數 n={n}, ε={eps}: w={w:.6g}, log s={log_s:.6g}")
    return NazarovParams(n=n, eps=eps, d_in=d_in, d_out=d_out, w=w, log_s=log_s,
                         residual=residual, bracket=(lo, hi))


def nazarov_membership_probability(norm_x: float, w: float, s: int) -> float:
    """固定點 x 落在 Naz(w, s) 內的機率 Φ(w/‖x‖)^s"""
    if norm_x <= 0:
        return 1.0
    return math.exp(s * float(special.log_ndtr(w / norm_x)))


def sample_nazarov(n: int, w: float, s: int, stream: RandomStream, budget: int = None) -> Polytope:
    """
    抽樣 Naz(w, s)：s 個半空間 {⟨x, g_i⟩ ≤ w}，g_i 為 i.i.d. 標準常態

    Args:
        n: 維度
        w: 共同門檻（> 0）
        s: 面數
        stream: 亂數串流
        budget: 實體化面數上限（預設取設定值）

    Returns:
        含原點的多面體（法向量已正規化、門檻為 w/‖g_i‖）
    """
    limit = budget if budget is not None else config.FACET_BUDGET
    if s < 1:
        raise ParameterError(f"面數必須 ≥ 1，收到 {s}")
    if s > limit:
        raise BudgetError(f"面數 s={s} 超過實體化預算 {limit}，請改用 log s 與面數上界")
    if not w > 0:
        raise ParameterError(f"w 必須 > 0，收到 {w}")
    normals = stream.normals((s, n))
    return Polytope(n, normals, np.full(s, float(w)))


class NazarovFit(BaseModel):
    """固定法向量下以一維搜尋調整 w 的結果"""
    model_config = {"arbitrary_types_allowed": True}

    w: float
    distance: Estimate
    evaluations: int
    polytope: Polytope


def tune_nazarov_w(
    target: Body,
    s: int,
    stream: RandomStream,
    n_samples: int = 100_000,
    evaluations: int = 20,
    threads: int = None,
) -> NazarovFit:
    """
    在固定的 s 個高斯法向量下，以有界 Brent（黃金分割）搜尋
    使 dist_G(target, K_w) 最小的 w

    法向量與探針各抽一次（共同亂數），因此每次評估只需比較
    max_i ⟨x, g_i⟩ 與 w。

    Args:
        target: 目標物體
        s: 面數
        stream: 亂數串流
        n_samples: 探針數
        evaluations: 距離評估次數上限
        threads: 執行緒數

    Returns:
        NazarovFit
    """
    n = target.dim
    if s > config.FACET_BUDGET:
        raise BudgetError(f"面數 s={s} 超過實體化預算 {config.FACET_BUDGET}")
    if evaluations < 1:
        raise ParameterError(f"評估次數必須 ≥ 1，收到 {evaluations}")
    normals = stream.normals((s, n))

    def probe_chunk(sub: RandomStream, size: int):
        X = sub.normals((size, n))
        scores = np.full(size, -np.inf)
        for start in range(0, s, 1024):
            scores = np.maximum(scores, (X @ normals[start:start + 1024].T).max(axis=1))
        return scores, target.contains(X)

    parts = map_chunks(probe_chunk, n_samples, stream, threads)
    scores = np.concatenate([p[0] for p in parts])
    inside = np.concatenate([p[1] for p in parts])
    calls = {"count": 0}
    best = {"w": None, "distance": math.inf}

    class _BudgetReached(Exception):
        pass

    def distance(w: float) -> float:
        if calls["count"] >= evaluations:
            raise _BudgetReached()
        calls["count"] += 1
        value = float(np.mean((scores <= w) != inside))
        if value < best["distance"]:
            best["w"], best["distance"] = w, value
        return value

    lo, hi = np.quantile(scores, [0.005, 0.995])
    try:
        optimize.minimize_scalar(distance, bounds=(float(lo), float(hi)), method="bounded",
                                 options={"maxiter": evaluations, "xatol": 1e-6})
    except _BudgetReached:
        logger.info(f"ℹ️ Nazarov w 搜尋達到 {evaluations} 次評估上限")
    w = float(best["w"])
    disagreements = ((scores <= w) != inside).astype(float)
    estimate = Estimate.from_values(disagreements, bernoulli=True)
    logger.info(f"📊 Nazarov s={s}: w={w:.5g}, dist={estimate.value:.5g}（{calls['count']} 次評估）")
    return NazarovFit(w=w, distance=estimate, evaluations=calls["count"],
                      polytope=Polytope(n, normals, np.full(s, w)))


# ============ ℓp junta 交集 ============

class JuntaParams(BaseModel):
    """junta 建構參數；M 以 log_M 記帳，過大時 M 為 None"""
    n: int
    p: float
    eps: float
    mode: Literal["l1", "lp"]
    m: int
    m_unclamped: int
    t: float
    theta: float
    M: Optional[int]
    log_M: float
    c1: float
    c2: float
    c3: float
    c_l1: float
    c_t: float
    mu_p: float
    sigma_p: float
    d_in: float
    omega_n: float
    variance_constant: float
    warnings: List[str] = Field(default_factory=list)


def solve_junta_params(
    n: int,
    p: float,
    eps: float,
    c2: float = 1.0,
    c3: float = 1.0,
    c_l1: float = 1.0,
    c_t: float = 1.0,
    regime_ceiling: float = 0.5,
) -> JuntaParams:
    """
    依 junta 建構的參數方程式求出 m、t、θ、M

    μ_p = n·A_p，σ_p² = n(A_{2p} − A_p²)，d_in = μ_p − ε·σ_p；
    θ = d_in·m/n + √c·t·ω_n，ω_n² = m(1 − m/n)，M = ε/(1 − Φ(t))。
    m 超過 ⌊n/2⌋ 時截斷並記錄警告。

    Args:
        n: 維度
        p: 次方，p ∈ [1, 2)
        eps: 目標誤差，0 < ε < 1
        c2, c3: p ∈ (1, 2) 模式的常數
        c_l1, c_t: p = 1 模式的常數
        regime_ceiling: ε 的建議上限（超出時只警告）

    Returns:
        JuntaParams
    """
    if not 0.0 < eps < 1.0:
        raise ParameterError(f"ε 必須在 (0, 1)，收到 {eps}")
    if not 1.0 <= p < 2.0:
        raise ParameterError(f"p 必須在 [1, 2)，收到 {p}")
    if n < 2:
        raise DimensionError(f"junta 建構需要 n ≥ 2，收到 {n}")
    warnings = []
    if eps < 1.0 / math.sqrt(math.log(n)) or eps >= regime_ceiling:
        warnings.append(f"eps={eps} 超出建議範圍 [1/√ln n, {regime_ceiling})")

    a_p = gaussian_abs_moment(p)
    variance_constant = gaussian_abs_moment(2.0 * p) - a_p * a_p
    mu_p = n * a_p
    sigma_p = math.sqrt(n * variance_constant)
    d_in = mu_p - eps * sigma_p
    log_inv = math.log(1.0 / eps)
    c1 = c2 * eps * eps / log_inv

    if p == 1.0:
        mode = "l1"
        m_raw = c_l1 * (log_inv / eps) ** 1.5 * n ** 0.75
    else:
        mode = "lp"
        m_raw = c3 * log_inv ** 2.25 / eps ** 4 * n ** 0.75
    m_unclamped = max(1, int(round(m_raw)))
    m = min(m_unclamped, max(1, n // 2))
    if m < m_unclamped:
        warnings.append(f"m={m_unclamped} 超過 n/2，截斷為 {m}")

    t = c_t * m ** (1.0 / 6.0) if mode == "l1" else c1 * m ** (1.0 / 6.0)
    omega_n = math.sqrt(m * (1.0 - m / n))
    theta = d_in * m / n + math.sqrt(variance_constant) * t * omega_n
    log_M = math.log(eps) - float(special.log_ndtr(-t))
    M = max(1, int(round(math.exp(log_M)))) if log_M < 40.0 else None

    for message in warnings:
        logger.warning(f"⚠️ junta 參數: {message}")
    logger.info(f"✅ junta 參數 n={n}, p={p}, ε={eps}: m={m}, t={t:.4g}, θ={theta:.6g}, log M={log_M:.4g}")
    return JuntaParams(n=n, p=p, eps=eps, mode=mode, m=m, m_unclamped=m_unclamped, t=t,
                       theta=theta, M=M, log_M=log_M, c1=c1, c2=c2, c3=c3, c_l1=c_l1, c_t=c_t,
                       mu_p=mu_p, sigma_p=sigma_p, d_in=d_in, omega_n=omega_n,
                       variance_constant=variance_constant, warnings=warnings)


def sample_junta_intersection(n: int, p: float, M: int, m: int, theta: float,
                              stream: RandomStream) -> JuntaIntersection:
    """
    抽樣 M 個獨立的 m 元組（元組內不放回），每項共用門檻 θ

    Returns:
        JuntaIntersection
    """
    if m > n:
        raise ParameterError(f"元組大小 m={m} 不可超過 n={n}")
    if M < 1 or m < 1:
        raise ParameterError(f"需要 M ≥ 1 且 m ≥ 1，收到 M={M}, m={m}")
    indices = sample_without_replacement(stream, M, n, m)
    return JuntaIntersection(n, p, indices, theta)


def empirical_theta(n: int, p: float, m: int, target_volume: float, samples: int,
                    stream: RandomStream, threads: int = None) -> float:
    """
    Σ_{k≤m} |g_k|^p 的經驗 target_volume 分位數（單項體積 ≈ target_volume）

    Args:
        n: 維度（只用於檢查 m ≤ n）
        p: 次方
        m: 元組大小
        target_volume: 目標單項體積 ∈ (0, 1)
        samples: 樣本數（≥ 10³）
        stream: 亂數串流
    """
    if not 0.0 < target_volume < 1.0:
        raise ParameterError(f"目標體積必須在 (0, 1)，收到 {target_volume}")
    if samples < 1000:
        raise ParameterError(f"樣本數必須 ≥ 1000，收到 {samples}")
    if m > n:
        raise ParameterError(f"元組大小 m={m} 不可超過 n={n}")

    def power_sums(sub: RandomStream, size: int) -> np.ndarray:
        return (np.abs(sub.normals((size, m))) ** p).sum(axis=1)

    sums = np.concatenate(map_chunks(power_sums, samples, stream, threads))
    return float(np.quantile(sums, target_volume))


def junta_volume_bounds(M: float) -> Tuple[float, float]:
    """單項體積的上下界 (1 − ln M/M, 1 − 1/(3M))"""
    if M < 3:
        raise ParameterError(f"需要 M ≥ 3，收到 {M}")
    return 1.0 - math.log(M) / M, 1.0 - 1.0 / (3.0 * M)


def intersection_volume_lower_bound(term_volumes: Sequence[float]) -> float:
    """聯集界：Vol(∩C_j) ≥ 1 − Σ(1 − Vol(C_j))"""
    return max(0.0, 1.0 - float(np.sum(1.0 - np.asarray(term_volumes, dtype=float))))


class JuntaVolumeCheck(BaseModel):
    volume: Estimate
    lower: float
    upper: float
    bounds_hold: bool


def junta_term_volume_check(m: int, p: float, theta: float, M: float, n_samples: int,
                            stream: RandomStream, k_sigma: float = 3.0,
                            threads: int = None) -> JuntaVolumeCheck:
    """
    以 m 維蒙地卡羅估計 Vol(C_j) = Pr[Σ|g_k|^p ≤ θ]，
    並檢查 1 − ln M/M ≤ Vol ≤ 1 − 1/(3M)（各放寬 kσ）
    """
    lower, upper = junta_volume_bounds(M)

    def inside(sub: RandomStream, size: int) -> np.ndarray:
        return (np.abs(sub.normals((size, m))) ** p).sum(axis=1) <= theta

    volume = monte_carlo_mean(inside, n_samples, stream, threads, bernoulli=True)
    slack = k_sigma * volume.stderr
    holds = volume.value + slack >= lower and volume.value - slack <= upper
    return JuntaVolumeCheck(volume=volume, lower=lower, upper=upper, bounds_hold=holds)


# ============ 切平面近似器 ============

DirectionMode = Literal["deterministic_net", "random_directions"]


class TangentConfig(BaseModel):
    """切平面近似器設定"""
    eps: float = Field(gt=0.0, lt=1.0)
    delta_estimate: float = Field(gt=0.0, lt=0.5)
    tau: float = Field(gt=0.0)
    k_star: int = Field(ge=1)
    theta_star: float = Field(gt=0.0, lt=math.pi / 2)
    direction_mode: DirectionMode = "deterministic_net"
    direction_budget: int = Field(default=4096, ge=1)
    truncation_radius: Optional[float] = None
    parameter_mode: Literal["theoretical", "practical"] = "practical"

    @staticmethod
    def _check(eps: float, delta: float) -> None:
        if not 0.0 < eps < 1.0:
            raise ParameterError(f"ε 必須在 (0, 1)，收到 {eps}")
        if not 0.0 < delta < 0.5:
            raise ParameterError(f"δ 估計值必須在 (0, 0.5)，收到 {delta}")

    @classmethod
    def theoretical(cls, n: int, eps: float, delta: float, direction_mode: DirectionMode = "deterministic_net",
                    direction_budget: int = 4096) -> "TangentConfig":
        """τ = εδ/8、θ* 與 k* 全部依定理設定"""
        cls._check(eps, delta)
        tau = eps * delta / 8.0
        radius = math.sqrt(n) + 2.0 * math.sqrt(math.log(2.0 / (eps * delta)))
        spread = 2.0 + 16.0 / eps
        theta_star = (eps * eps / 64.0) / (radius * spread * (2.0 * radius ** 2 * spread - n / 4.0))
        return cls(eps=eps, delta_estimate=delta, tau=tau,
                   k_star=math.ceil(math.log(4.0 / (eps * delta)) / tau),
                   theta_star=theta_star, direction_mode=direction_mode,
                   direction_budget=direction_budget, truncation_radius=radius,
                   parameter_mode="theoretical")

    @classmethod
    def practical(cls, eps: float, delta: float, theta_star: float,
                  direction_mode: DirectionMode = "deterministic_net",
                  direction_budget: int = 4096) -> "TangentConfig":
        """使用者指定網格角度，τ 與 k* 仍依定理設定"""
        cls._check(eps, delta)
        tau = eps * delta / 8.0
        return cls(eps=eps, delta_estimate=delta, tau=tau,
                   k_star=math.ceil(math.log(4.0 / (eps * delta)) / tau),
                   theta_star=theta_star, direction_mode=direction_mode,
                   direction_budget=direction_budget, parameter_mode="practical")


def _greedy_cover_indices(points: np.ndarray, radius: float) -> List[int]:
    """最遠點貪婪法：回傳使所有點與所選點夾角 ≤ radius 的索引"""
    if len(points) == 0:
        return []
    cos_radius = math.cos(radius)
    chosen = [0]
    best = np.clip(points @ points[0], -1.0, 1.0)
    while True:
        far = int(np.argmin(best))
        if best[far] >= cos_radius:
            return chosen
        chosen.append(far)
        best = np.maximum(best, points @ points[far])


def _fibonacci_sphere(count: int) -> np.ndarray:
    index = np.arange(count)
    z = 1.0 - (2.0 * index + 1.0) / count
    r = np.sqrt(1.0 - z * z)
    phi = index * math.pi * (3.0 - math.sqrt(5.0))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def sphere_net(n: int, angle: float, mode: DirectionMode = "deterministic_net",
               budget: int = 4096, stream: Optional[RandomStream] = None) -> np.ndarray:
    """
    單位球面方向網格

    確定性模式（n ≤ 3）：在細候選集上做最遠點貪婪，
    候選集本身的覆蓋半徑預先扣除，因此整個球面都在 angle 內；
    隨機模式：budget 個正規化高斯方向，無覆蓋保證。

    Args:
        n: 維度
        angle: 覆蓋角，0 < angle < π/2
        mode: deterministic_net 或 random_directions
        budget: 隨機模式的方向數
        stream: 隨機模式所需的亂數串流

    Returns:
        形狀 (k, n) 的單位向量陣列
    """
    if not 0.0 < angle < math.pi / 2:
        raise ParameterError(f"網格角度必須在 (0, π/2)，收到 {angle}")
    if mode == "random_directions":
        if budget < 1:
            raise ParameterError(f"方向數必須 ≥ 1，收到 {budget}")
        if stream is None:
            raise ParameterError("隨機方向模式需要亂數串流")
        directions = stream.normals((budget, n))
        return directions / np.linalg.norm(directions, axis=1)[:, None]
    if n > 3:
        raise UnsupportedDimensionError(f"確定性網格只支援 n ≤ 3，收到 n={n}")
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        count = max(8, math.ceil(4.0 * math.pi / angle))
    else:
        count = math.ceil(4.0 * math.pi * 36.0 / angle ** 2)
    if count > config.FACET_BUDGET:
        raise BudgetError(f"網格候選數 {count} 超過預算 {config.FACET_BUDGET}")
    if n == 2:
        phases = 2.0 * math.pi * np.arange(count) / count
        candidates = np.column_stack([np.cos(phases), np.sin(phases)])
        margin = math.pi / count
    else:
        candidates = _fibonacci_sphere(count)
        margin = 2.0 * math.sqrt(4.0 * math.pi / count)
    return candidates[_greedy_cover_indices(candidates, angle - margin)]


def tangent_approximator(body: Body, tangent_config: TangentConfig,
                         stream: Optional[RandomStream] = None) -> Polytope:
    """
    切平面外近似器

    1. 產生候選方向（確定性網格或隨機方向）
    2. 以支撐函數與 m(ℓ(v)) 計算每個方向的射線尾質量
    3. 捨棄 m(ℓ(v)) ≤ εδ/4 的方向
    4. 依 m(ℓ(v)) ∈ ((1+τ)^{−k}, (1+τ)^{−k+1}] 分桶，k ≤ k*
    5. 每桶保留角度 θ* 的覆蓋子集（隨機模式全部保留）
    6. 每個保留方向輸出支撐半空間 {⟨x, v⟩ ≤ ℓ(v)}

    Args:
        body: 具支撐函數的物體
        tangent_config: TangentConfig
        stream: 隨機方向模式所需的亂數串流

    Returns:
        包含 body 的多面體
    """
    if not body.has_support:
        raise CapabilityError(f"{type(body).__name__} 沒有支撐函數，無法建構切平面近似器")
    cfg = tangent_config
    n = body.dim
    deterministic = cfg.direction_mode == "deterministic_net"
    if deterministic:
        candidates = sphere_net(n, cfg.theta_star / 2.0, cfg.direction_mode)
    else:
        candidates = sphere_net(n, cfg.theta_star, cfg.direction_mode, cfg.direction_budget, stream)

    support = np.asarray(body.support_many(candidates), dtype=float)
    mass = np.asarray(tail_m(np.clip(support, 0.0, None), n), dtype=float).reshape(-1)
    cutoff = cfg.eps * cfg.delta_estimate / 4.0
    keep = mass > cutoff
    with np.errstate(divide="ignore"):
        bucket = np.floor(-np.log(np.where(keep, mass, 1.0)) / math.log1p(cfg.tau)).astype(np.int64) + 1
    keep &= bucket <= cfg.k_star

    chosen: List[int] = []
    kept_buckets = np.unique(bucket[keep])
    for k in kept_buckets:
        members = np.flatnonzero(keep & (bucket == k))
        if deterministic:
            picked = _greedy_cover_indices(candidates[members], cfg.theta_star / 2.0)
            chosen.extend(members[picked].tolist())
        else:
            chosen.extend(members.tolist())
    chosen.sort()
    logger.info(f"✅ 切平面近似器：{len(candidates)} 個候選方向，{len(kept_buckets)} 個桶，"
                f"{len(chosen)} 個面")
    if not chosen:
        return Polytope(n, np.zeros((0, n)), [])
    index = np.asarray(chosen, dtype=int)
    return Polytope(n, candidates[index], support[index])


# ============ 面數上界 ============

def fc_bound_universal(n: int, eps: float, constant: float = 1.0) -> float:
    """通用上界 ((n−1)/2)·ln(C·(n^{5/4} + 2n^{3/4}√ln(2/ε))/ε)（自然對數）"""
    if n < 1:
        raise DimensionError(f"維度必須 ≥ 1，收到 {n}")
    if not 0.0 < eps < 1.0:
        raise ParameterError(f"ε 必須在 (0, 1)，收到 {eps}")
    scale = n ** 1.25 + 2.0 * n ** 0.75 * math.sqrt(math.log(2.0 / eps))
    return 0.5 * (n - 1) * math.log(constant * scale / eps)


def fc_bound_relative(n: int, eps: float, delta: float, constant: float = 1.0) -> float:
    """相對誤差上界 ln(1/δ) + C·n·ln((n/ε)·ln(1/δ))"""
    if n < 1:
        raise DimensionError(f"維度必須 ≥ 1，收到 {n}")
    if not eps > 0.0:
        raise ParameterError(f"ε 必須 > 0，收到 {eps}")
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"δ 必須在 (0, 1)，收到 {delta}")
    log_inv = math.log(1.0 / delta)
    return log_inv + constant * n * math.log((n / eps) * log_inv)


def fc_bound_bronstein(n: int, eps: float) -> float:
    """單位球內凸體的上界 ln(3√n) + ((n−1)/2)·ln(9/ε)，需 0 < ε < 10⁻³"""
    if n < 1:
        raise DimensionError(f"維度必須 ≥ 1，收到 {n}")
    if not 0.0 < eps < 1e-3:
        raise ParameterError(f"ε 必須在 (0, 10⁻³)，收到 {eps}")
    return math.log(3.0 * math.sqrt(n)) + 0.5 * (n - 1) * math.log(9.0 / eps)
