"""
估計器模組
高斯體積與距離、凸影響力（直接、伸縮、Hermite 三條路徑）、
雜訊敏感度與穩定度、zoom 變異數剖面、Hermite 投影，
以及 Cramér 型尾部定理與影響力上界的經驗驗證器
"""
import math
import logging
from itertools import combinations_with_replacement
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field
from scipy import integrate, special, stats

import config
from bodies import Body, Polytope, zoom_body
from errors import (BudgetError, DimensionError, DomainError, NormalizationError,
                    ParameterError)
from gaussian_core import (BERRY_ESSEEN_CONSTANT, Estimate, RandomStream, chi_pdf,
                           correlated_pair, gaussian_abs_moment, hermite_multi,
                           hermite_table, map_chunks, monte_carlo_mean, monte_carlo_means,
                           phi_inv, phi_pdf, sample_without_replacement)

logger = logging.getLogger(__name__)

MultiIndex = Tuple[int, ...]

# Hermite 展開求值時單一區塊允許的元素數
_EVAL_BLOCK_ELEMENTS = 1 << 22
# Kolmogorov 距離在 95% 水準的漸近臨界係數
_KS_CRITICAL = 1.36


def _check_samples(n_samples: int) -> None:
    if n_samples < 1:
        raise ParameterError(f"樣本數必須 ≥ 1，收到 {n_samples}")


def _check_origin(body: Body, strict: bool = False) -> None:
    """影響力定義要求 0 ∈ K；strict 時違反即拋出錯誤，否則只警告"""
    if body.membership(np.zeros(body.dim)):
        return
    if strict:
        raise ParameterError("物體必須包含原點")
    logger.warning("⚠️ 物體不包含原點，凸影響力的定義前提不成立")


def _unit_direction(v, dim: int) -> np.ndarray:
    direction = np.asarray(v, dtype=float).ravel()
    if direction.size != dim:
        raise DimensionError(f"方向維度 {direction.size} 與物體維度 {dim} 不符")
    norm = float(np.linalg.norm(direction))
    if abs(norm - 1.0) > 1e-9:
        raise ParameterError(f"方向必須是單位向量，‖v‖ = {norm}")
    return direction


# ============ 體積與距離 ============

def estimate_volume(body: Body, n_samples: int, stream: RandomStream,
                    threads: int = None) -> Estimate:
    """
    高斯體積 Vol(K) = Pr[x ∈ K]，x ~ N(0, I_n)

    Args:
        body: 凸體
        n_samples: 探針數
        stream: 亂數串流
        threads: 執行緒數

    Returns:
        附 Wilson 區間的 Bernoulli 估計值
    """
    _check_samples(n_samples)
    n = body.dim

    def inside(sub: RandomStream, size: int) -> np.ndarray:
        return body.contains(sub.normals((size, n)))

    return monte_carlo_mean(inside, n_samples, stream, threads, bernoulli=True)


def estimate_distance(body_a: Body, body_b: Body, n_samples: int, stream: RandomStream,
                      threads: int = None) -> Estimate:
    """
    高斯距離 dist_G(A, B) = Pr[x ∈ A △ B]

    同一批探針同時判定兩個物體（共同亂數）。
    """
    if body_a.dim != body_b.dim:
        raise DimensionError(f"維度不符: {body_a.dim} vs {body_b.dim}")
    _check_samples(n_samples)
    n = body_a.dim

    def differs(sub: RandomStream, size: int) -> np.ndarray:
        X = sub.normals((size, n))
        return body_a.contains(X) != body_b.contains(X)

    return monte_carlo_mean(differs, n_samples, stream, threads, bernoulli=True)


# ============ 凸影響力 ============

def estimate_total_influence(body: Body, n_samples: int, stream: RandomStream,
                             threads: int = None) -> Estimate:
    """
    總凸影響力 TInf[K] = E[K(x)(n − ‖x‖²)]（K 為 0/1 指標）
    """
    _check_samples(n_samples)
    _check_origin(body)
    n = body.dim

    def integrand(sub: RandomStream, size: int) -> np.ndarray:
        X = sub.normals((size, n))
        return body.contains(X) * (n - np.einsum("ij,ij->i", X, X))

    estimate = monte_carlo_mean(integrand, n_samples, stream, threads)
    logger.info(f"📊 TInf = {estimate.value:.6g} ± {estimate.stderr:.2g}（n={n}）")
    return estimate


def estimate_directional_influence(body: Body, v, n_samples: int, stream: RandomStream,
                                   threads: int = None) -> Estimate:
    """
    方向 v 的凸影響力 Inf_v[K] = E[K(x)(1 − ⟨x, v⟩²)]

    Args:
        body: 凸體
        v: 單位方向
        n_samples: 探針數
        stream: 亂數串流
    """
    _check_samples(n_samples)
    direction = _unit_direction(v, body.dim)
    _check_origin(body)
    n = body.dim

    def integrand(sub: RandomStream, size: int) -> np.ndarray:
        X = sub.normals((size, n))
        return body.contains(X) * (1.0 - (X @ direction) ** 2)

    return monte_carlo_mean(integrand, n_samples, stream, threads)


def estimate_influence_dilation(body: Body, delta_step: float = 0.01, n_samples: int = 100_000,
                                stream: RandomStream = None, threads: int = None,
                                richardson: bool = False) -> Estimate:
    """
    伸縮差商 (Vol((1+δ)K) − Vol(K))/δ

    兩個體積使用同一批探針。前向差分有 O(δ) 偏差；
    richardson=True 時改用 2·D(δ/2) − D(δ)，偏差降為 O(δ²)。

    Args:
        body: 凸體（需含原點）
        delta_step: δ ∈ (0, 0.2]
        n_samples: 探針數
        stream: 亂數串流
        richardson: 是否使用 Richardson 外插
    """
    if not 0.0 < delta_step <= 0.2:
        raise ParameterError(f"δ 必須在 (0, 0.2]，收到 {delta_step}")
    if stream is None:
        raise ParameterError("需要亂數串流")
    _check_samples(n_samples)
    _check_origin(body)
    n = body.dim

    def quotient(X: np.ndarray, base: np.ndarray, step: float) -> np.ndarray:
        return (body.contains(X / (1.0 + step)).astype(float) - base) / step

    def integrand(sub: RandomStream, size: int) -> np.ndarray:
        X = sub.normals((size, n))
        base = body.contains(X).astype(float)
        forward = quotient(X, base, delta_step)
        if not richardson:
            return forward
        return 2.0 * quotient(X, base, 0.5 * delta_step) - forward

    return monte_carlo_mean(integrand, n_samples, stream, threads)


def level2_diagonal_coeffs(body: Body, n_samples: int, stream: RandomStream,
                           threads: int = None) -> List[Estimate]:
    """
    估計 K̃(2e_i)，i = 1..n（同一批探針）

    Returns:
        n 個 Estimate
    """
    _check_samples(n_samples)
    n = body.dim

    def columns(sub: RandomStream, size: int) -> np.ndarray:
        X = sub.normals((size, n))
        h2 = (X * X - 1.0) / math.sqrt(2.0)
        return body.contains(X)[:, None] * h2

    return monte_carlo_means(columns, n_samples, stream, threads)


def estimate_influence_hermite(body: Body, n_samples: int, stream: RandomStream,
                               threads: int = None) -> Estimate:
    """
    第三條 TInf 路徑：−√2·Σ_i K̃(2e_i)，逐樣本加總後取平均
    """
    _check_samples(n_samples)
    _check_origin(body)
    n = body.dim

    def integrand(sub: RandomStream, size: int) -> np.ndarray:
        X = sub.normals((size, n))
        h2_sum = hermite_table(2, X)[..., 2].sum(axis=1)
        return -math.sqrt(2.0) * body.contains(X) * h2_sum

    return monte_carlo_mean(integrand, n_samples, stream, threads)


# ============ 雜訊敏感度與穩定度 ============

def estimate_gns(body: Body, rho: float, n_samples: int, stream: RandomStream,
                 threads: int = None) -> Estimate:
    """
    高斯雜訊敏感度 GNS_ρ = Pr[K(z) ≠ K(z')]，z、z' 為 (1−2ρ) 相關

    Args:
        body: 凸體
        rho: ρ ∈ [0, 1/2]
        n_samples: 樣本對數
        stream: 亂數串流
    """
    if not 0.0 <= rho <= 0.5:
        raise ParameterError(f"ρ 必須在 [0, 1/2]，收到 {rho}")
    _check_samples(n_samples)
    n = body.dim

    def disagree(sub: RandomStream, size: int) -> np.ndarray:
        z, z_prime = correlated_pair(sub, n, 1.0 - 2.0 * rho, count=size)
        return body.contains(z) != body.contains(z_prime)

    return monte_carlo_mean(disagree, n_samples, stream, threads, bernoulli=True)


def estimate_stability(body: Body, rho_corr: float, n_samples: int, stream: RandomStream,
                       threads: int = None) -> Estimate:
    """
    雜訊穩定度 Stab_ρ = E[f(z)f(z')]，f = 2K − 1 為 ±1 值
    """
    if not -1.0 <= rho_corr <= 1.0:
        raise ParameterError(f"相關係數必須在 [-1, 1]，收到 {rho_corr}")
    _check_samples(n_samples)
    n = body.dim

    def product(sub: RandomStream, size: int) -> np.ndarray:
        z, z_prime = correlated_pair(sub, n, rho_corr, count=size)
        f = 2.0 * body.contains(z) - 1.0
        f_prime = 2.0 * body.contains(z_prime) - 1.0
        return f * f_prime

    return monte_carlo_mean(product, n_samples, stream, threads)


def gns_from_stability(stability: Estimate) -> Estimate:
    """GNS_ρ = 1/2 − Stab_{1−2ρ}/2"""
    return stability.scaled(-0.5, 0.5)


# ============ Random zoom ============

class ZoomProfile(BaseModel):
    """zoom 變異數剖面：每個錨點的 ±1 指標變異數"""
    lam: float
    anchor_count: int
    inner_count: int
    per_anchor_variance: List[float]
    per_anchor_volume: List[float]
    mean_variance: Estimate
    quantiles: Dict[str, float]


_PROFILE_QUANTILES = {"q05": 0.05, "q25": 0.25, "q50": 0.5, "q75": 0.75, "q95": 0.95}


def zoom_variance_profile(body: Body, lam: float, n_anchors: int, n_inner: int,
                          stream: RandomStream, threads: int = None) -> ZoomProfile:
    """
    每個錨點 X_i ~ N(0, I_n) 以 n_inner 個新探針估計 zoom 體積 v_i，
    記錄修正後的變異數 4·v̂(1−v̂)·N/(N−1)（對 4v(1−v) 無偏）

    Args:
        body: 凸體
        lam: λ ∈ [0, 1]
        n_anchors: 錨點數（≥ 2）
        n_inner: 每個錨點的內層探針數（≥ 2）
        stream: 亂數串流
        threads: 執行緒數

    Returns:
        ZoomProfile
    """
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"λ 必須在 [0, 1]，收到 {lam}")
    if n_anchors < 2 or n_inner < 2:
        raise ParameterError(f"錨點數與內層探針數必須 ≥ 2，收到 {n_anchors}, {n_inner}")
    n = body.dim
    correction = n_inner / (n_inner - 1.0)

    def anchors_chunk(sub: RandomStream, size: int):
        volumes = np.empty(size)
        for i in range(size):
            anchor = sub.normals(n)
            inner = sub.normals((n_inner, n))
            volumes[i] = zoom_body(body, lam, anchor).contains(inner).mean()
        return volumes

    chunk = max(1, config.CHUNK_SIZE // n_inner)
    volumes = np.concatenate(map_chunks(anchors_chunk, n_anchors, stream, threads, chunk_size=chunk))
    variances = 4.0 * volumes * (1.0 - volumes) * correction
    quantiles = dict(zip(_PROFILE_QUANTILES,
                         np.quantile(variances, list(_PROFILE_QUANTILES.values())).tolist()))
    mean_variance = Estimate.from_values(variances)
    logger.debug(f"🔄 zoom λ={lam}: 平均變異數 {mean_variance.value:.5g}")
    return ZoomProfile(lam=lam, anchor_count=n_anchors, inner_count=n_inner,
                       per_anchor_variance=variances.tolist(), per_anchor_volume=volumes.tolist(),
                       mean_variance=mean_variance, quantiles=quantiles)


def _exceedance(variances: Sequence[float], thresholds: Sequence[float]) -> List[float]:
    values = np.asarray(variances, dtype=float)
    return [float(np.mean(values >= tau)) for tau in thresholds]


def zoom_collapse_experiment(polytope: Polytope, lam: float, thresholds: Sequence[float],
                             n_anchors: int, n_inner: int, stream: RandomStream,
                             threads: int = None) -> List[float]:
    """
    zoom 變異數 ≥ τ 的錨點比例（每個門檻一個值）
    """
    if polytope.facet_count() < 1:
        raise ParameterError("多面體至少需要一個面")
    profile = zoom_variance_profile(polytope, lam, n_anchors, n_inner, stream, threads)
    return _exceedance(profile.per_anchor_variance, thresholds)


class ZoomCollapseCurve(BaseModel):
    lambdas: List[float]
    thresholds: List[float]
    exceedance: List[List[float]]
    monotone: List[bool]


def zoom_collapse_curve(polytope: Polytope, lambdas: Sequence[float], thresholds: Sequence[float],
                        n_anchors: int, n_inner: int, stream: RandomStream,
                        threads: int = None) -> ZoomCollapseCurve:
    """
    各 λ 的超越比例曲線；所有 λ 共用同一批錨點與內層探針

    monotone[j] 表示門檻 j 的超越比例隨 λ 遞減而不增。
    """
    if polytope.facet_count() < 1:
        raise ParameterError("多面體至少需要一個面")
    ordered = sorted((float(lam) for lam in lambdas), reverse=True)
    base = stream.split(1)[0]
    rows = [zoom_collapse_experiment(polytope, lam, thresholds, n_anchors, n_inner,
                                     base.clone(), threads) for lam in ordered]
    monotone = [all(rows[i + 1][j] <= rows[i][j] for i in range(len(rows) - 1))
                for j in range(len(thresholds))]
    logger.info(f"📊 zoom 崩塌曲線：λ={ordered}，單調={monotone}")
    return ZoomCollapseCurve(lambdas=ordered, thresholds=list(thresholds),
                             exceedance=rows, monotone=monotone)


# ============ Hermite 展開 ============

def _degree(alpha: Sequence[int]) -> int:
    return int(sum(alpha))


def estimate_hermite_coeff(body: Body, alpha: Sequence[int], n_samples: int,
                           stream: RandomStream, threads: int = None) -> Estimate:
    """
    Hermite 係數 K̃(α) = E[K(x)·h_α(x)]

    Args:
        body: 凸體
        alpha: 多重指標，|α| ≤ MAX_HERMITE_ORDER
        n_samples: 探針數
        stream: 亂數串流
    """
    index = tuple(int(a) for a in alpha)
    if len(index) != body.dim:
        raise DimensionError(f"多重指標長度 {len(index)} 與維度 {body.dim} 不符")
    if _degree(index) > config.MAX_HERMITE_ORDER:
        raise BudgetError(f"|α| = {_degree(index)} 超過上限 {config.MAX_HERMITE_ORDER}，標準誤將失去意義")
    _check_samples(n_samples)
    n = body.dim

    def integrand(sub: RandomStream, size: int) -> np.ndarray:
        X = sub.normals((size, n))
        return body.contains(X) * np.asarray(hermite_multi(index, X))

    return monte_carlo_mean(integrand, n_samples, stream, threads)


class HermiteExpansion:
    """
    稀疏 Hermite 展開 g = Σ_α ĝ(α)·h_α

    Attributes:
        dim: 維度
        coeffs: {多重指標: 係數}
        estimates: 由蒙地卡羅得到時，各係數的 Estimate
    """

    def __init__(self, dim: int, coeffs: Dict[MultiIndex, float],
                 estimates: Optional[Dict[MultiIndex, Estimate]] = None):
        if dim < 1:
            raise DimensionError(f"維度必須 ≥ 1，收到 {dim}")
        self.dim = dim
        self.coeffs: Dict[MultiIndex, float] = {}
        for alpha, value in coeffs.items():
            key = tuple(int(a) for a in alpha)
            if len(key) != dim:
                raise DimensionError(f"多重指標 {key} 長度與維度 {dim} 不符")
            if min(key) < 0:
                raise ParameterError(f"多重指標不可為負: {key}")
            self.coeffs[key] = float(value)
        self.estimates = estimates

    def coeff(self, alpha: Sequence[int]) -> float:
        return self.coeffs.get(tuple(int(a) for a in alpha), 0.0)

    def degree(self) -> int:
        return max((_degree(alpha) for alpha, c in self.coeffs.items() if c != 0.0), default=0)

    def mean(self) -> float:
        return self.coeff((0,) * self.dim)

    def norm_squared(self) -> float:
        return float(sum(c * c for c in self.coeffs.values()))

    def variance(self) -> float:
        """Parseval：Σ_{α≠0} ĝ(α)²"""
        return self.norm_squared() - self.mean() ** 2

    def evaluate(self, points) -> np.ndarray:
        """g(x) = Σ_α ĝ(α)·h_α(x)，points 形狀 (N, dim)"""
        X = np.asarray(points, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.dim:
            raise DimensionError(f"點的維度 {X.shape[1]} 與展開維度 {self.dim} 不符")
        if not self.coeffs:
            return np.zeros(len(X))
        alphas = np.array(list(self.coeffs), dtype=int)
        weights = np.array(list(self.coeffs.values()))
        columns = np.arange(self.dim)[None, :]
        block = max(1, _EVAL_BLOCK_ELEMENTS // (len(alphas) * self.dim))
        out = np.empty(len(X))
        for start in range(0, len(X), block):
            table = hermite_table(int(alphas.max()), X[start:start + block])
            basis = table[:, columns, alphas].prod(axis=-1)
            out[start:start + block] = basis @ weights
        return out

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "coeffs": {",".join(str(a) for a in alpha): c for alpha, c in self.coeffs.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HermiteExpansion":
        try:
            coeffs = {tuple(int(a) for a in key.split(",")): float(value)
                      for key, value in data["coeffs"].items()}
            return cls(int(data["dim"]), coeffs)
        except (KeyError, AttributeError, ValueError) as e:
            raise ParameterError(f"Hermite 展開格式錯誤: {e}") from e


def noise_operator(expansion: HermiteExpansion, rho: float) -> HermiteExpansion:
    """U_ρ g = Σ ρ^{|α|}·ĝ(α)·h_α"""
    return HermiteExpansion(expansion.dim, {alpha: c * rho ** _degree(alpha)
                                            for alpha, c in expansion.coeffs.items()})


def hypervariance(expansion: HermiteExpansion, R: float) -> float:
    """R-超變異數 Σ_{α≠0} R^{2|α|}·ĝ(α)²，R ≥ 1"""
    if R < 1.0:
        raise ParameterError(f"R 必須 ≥ 1，收到 {R}")
    return float(sum(R ** (2 * _degree(alpha)) * c * c
                     for alpha, c in expansion.coeffs.items() if _degree(alpha) > 0))


def stability_from_coeffs(expansion: HermiteExpansion, rho: float) -> float:
    """Stab_ρ[g] = Σ_α ρ^{|α|}·ĝ(α)²"""
    return float(sum(rho ** _degree(alpha) * c * c for alpha, c in expansion.coeffs.items()))


def estimate_two_point(expansion: HermiteExpansion, rho: float, n_samples: int,
                       stream: RandomStream, threads: int = None) -> Estimate:
    """E[g(z)g(z')]，z、z' 為 ρ 相關（stability_from_coeffs 的蒙地卡羅對照）"""
    _check_samples(n_samples)
    n = expansion.dim

    def product(sub: RandomStream, size: int) -> np.ndarray:
        z, z_prime = correlated_pair(sub, n, rho, count=size)
        return expansion.evaluate(z) * expansion.evaluate(z_prime)

    return monte_carlo_mean(product, n_samples, stream, threads)


def multi_indices(n: int, degree: int) -> List[MultiIndex]:
    """
    所有 |α| ≤ degree 的多重指標（依總次數排序）

    數量為 C(n+d, d)，超過 MULTI_INDEX_BUDGET 時拒絕。
    """
    if n < 1:
        raise DimensionError(f"維度必須 ≥ 1，收到 {n}")
    if degree < 0:
        raise ParameterError(f"次數必須 ≥ 0，收到 {degree}")
    count = math.comb(n + degree, degree)
    if count > config.MULTI_INDEX_BUDGET:
        raise BudgetError(f"多重指標數 {count} 超過預算 {config.MULTI_INDEX_BUDGET}")
    indices = []
    for k in range(degree + 1):
        for combo in combinations_with_replacement(range(n), k):
            indices.append(tuple(int(c) for c in np.bincount(np.asarray(combo, dtype=int), minlength=n)))
    return indices


def _design_matrix(X: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    table = hermite_table(int(alphas.max(initial=0)), X)
    return table[:, np.arange(X.shape[1])[None, :], alphas].prod(axis=-1)


def low_degree_projection(body: Body, degree: int, n_samples: int, stream: RandomStream,
                          threads: int = None, method: str = "mean") -> HermiteExpansion:
    """
    低次 Hermite 投影：估計所有 |α| ≤ d 的 K̃(α)

    method="mean" 逐係數取樣本平均（附 Estimate）；
    method="least_squares" 在同一批探針的經驗測度上做最小平方擬合，
    因此同一批探針上的 l2_error 隨 d 嚴格不增。

    Args:
        body: 凸體
        degree: 最高總次數 d
        n_samples: 探針數
        stream: 亂數串流
        method: mean 或 least_squares

    Returns:
        HermiteExpansion
    """
    if method not in ("mean", "least_squares"):
        raise ParameterError(f"未知的投影方法: {method}")
    _check_samples(n_samples)
    n = body.dim
    indices = multi_indices(n, degree)
    alphas = np.array(indices, dtype=int)

    if method == "mean":
        def columns(sub: RandomStream, size: int) -> np.ndarray:
            X = sub.normals((size, n))
            return body.contains(X)[:, None] * _design_matrix(X, alphas)

        estimates = monte_carlo_means(columns, n_samples, stream, threads)
        by_index = dict(zip(indices, estimates))
        logger.info(f"✅ Hermite 投影 d={degree}：{len(indices)} 個係數（樣本平均）")
        return HermiteExpansion(n, {a: e.value for a, e in by_index.items()}, estimates=by_index)

    def probes(sub: RandomStream, size: int):
        X = sub.normals((size, n))
        return _design_matrix(X, alphas), body.contains(X).astype(float)

    parts = map_chunks(probes, n_samples, stream, threads)
    design = np.vstack([p[0] for p in parts])
    target = np.concatenate([p[1] for p in parts])
    solution, *_ = np.linalg.lstsq(design, target, rcond=None)
    logger.info(f"✅ Hermite 投影 d={degree}：{len(indices)} 個係數（最小平方）")
    return HermiteExpansion(n, dict(zip(indices, solution.tolist())))


def l2_error(expansion: HermiteExpansion, body: Body, n_samples: int, stream: RandomStream,
             threads: int = None) -> Estimate:
    """E[(g(x) − K(x))²]"""
    if expansion.dim != body.dim:
        raise DimensionError(f"維度不符: {expansion.dim} vs {body.dim}")
    _check_samples(n_samples)
    n = body.dim

    def squared_error(sub: RandomStream, size: int) -> np.ndarray:
        X = sub.normals((size, n))
        return (expansion.evaluate(X) - body.contains(X)) ** 2

    return monte_carlo_mean(squared_error, n_samples, stream, threads)


Coefficient = Union[Estimate, float]


def _value_and_stderr(item: Coefficient) -> Tuple[float, float]:
    if isinstance(item, Estimate):
        return item.value, item.stderr
    return float(item), 0.0


def parseval_distance_lb(coeffs_k: Sequence[Coefficient], coeffs_l: Sequence[Coefficient],
                         conservative: bool = False, k_sigma: float = 3.0) -> float:
    """
    Parseval 截斷下界 Σ_i (K̃(2e_i) − L̃(2e_i))² ≤ dist(K, L)

    conservative=True 時每一項先扣除 kσ（合併標準誤），下限為 0。
    """
    if len(coeffs_k) != len(coeffs_l):
        raise ParameterError(f"係數列表長度不符: {len(coeffs_k)} vs {len(coeffs_l)}")
    total = 0.0
    for a, b in zip(coeffs_k, coeffs_l):
        value_a, err_a = _value_and_stderr(a)
        value_b, err_b = _value_and_stderr(b)
        gap = abs(value_a - value_b)
        if conservative:
            gap = max(0.0, gap - k_sigma * math.hypot(err_a, err_b))
        total += gap * gap
    return total


# ============ Cramér 型尾部驗證 ============

class TailRatioProfile(BaseModel):
    """尾部比值 Pr[S ≥ t·scale]/(1 − Φ(t))"""
    grid: List[float]
    scale: float
    exceedance: List[Estimate]
    ratios: List[float]
    ratio_low: List[float]
    ratio_high: List[float]


def _ratio_profile(grid: Sequence[float], scale: float, exceedance: List[Estimate]) -> TailRatioProfile:
    tails = special.ndtr(-np.asarray(grid, dtype=float))
    return TailRatioProfile(
        grid=[float(t) for t in grid], scale=scale, exceedance=exceedance,
        ratios=[e.value / q for e, q in zip(exceedance, tails)],
        ratio_low=[e.ci_low / q for e, q in zip(exceedance, tails)],
        ratio_high=[e.ci_high / q for e, q in zip(exceedance, tails)],
    )


def normalize_population(population: Sequence[float]) -> np.ndarray:
    """平移並縮放使 Σa_i = 0、Σa_i² = n"""
    a = np.asarray(population, dtype=float).ravel()
    if a.size < 2:
        raise NormalizationError("母體至少需要兩個元素")
    a = a - a.mean()
    energy = float(np.dot(a, a))
    if energy <= 0.0 or np.ptp(a) == 0.0:
        raise NormalizationError("常數母體無法標準化")
    return a * math.sqrt(a.size / energy)


def tail_ratio_without_replacement(population: Sequence[float], m: int, t_grid: Sequence[float],
                                   trials: int, stream: RandomStream,
                                   threads: int = None) -> TailRatioProfile:
    """
    不放回抽樣和的尾部比值 Pr[S_m ≥ t·ω_n]/(1 − Φ(t))，ω_n² = m(1 − m/n)

    母體先標準化為 Σa_i = 0、Σa_i² = n。m = n 時 S_m ≡ 0：
    t > 0 的超越機率記為 0，t = 0 記為 1。

    Args:
        population: 母體數值
        m: 抽樣數，1 ≤ m ≤ n
        t_grid: t 值列表
        trials: 試驗次數
        stream: 亂數串流
    """
    a = normalize_population(population)
    n = a.size
    if not 1 <= m <= n:
        raise ParameterError(f"需要 1 ≤ m ≤ n，收到 m={m}, n={n}")
    _check_samples(trials)
    grid = np.asarray(t_grid, dtype=float)
    omega = math.sqrt(m * (1.0 - m / n))

    if m == n:
        hits = [float(trials) if t <= 0 else 0.0 for t in grid]
        exceedance = [Estimate.from_sums(h, h, trials, bernoulli=True) for h in hits]
        return _ratio_profile(grid, omega, exceedance)

    levels = grid * omega

    def exceeds(sub: RandomStream, size: int) -> np.ndarray:
        sums = a[sample_without_replacement(sub, size, n, m)].sum(axis=1)
        return sums[:, None] >= levels[None, :]

    exceedance = monte_carlo_means(exceeds, trials, stream, threads, bernoulli=True)
    return _ratio_profile(grid, omega, exceedance)


def iid_tail_check(p_power: float, m: int, z_grid: Sequence[float], trials: int,
                   stream: RandomStream, threads: int = None) -> TailRatioProfile:
    """
    i.i.d. 和 S_m = Σ(|g_j|^p − A_p) 的尾部比值 Pr[S_m ≥ zσ√m]/(1 − Φ(z))

    σ² = A_{2p} − A_p²
    """
    if not 1.0 <= p_power <= 2.0:
        raise ParameterError(f"p 必須在 [1, 2]，收到 {p_power}")
    if m < 1:
        raise ParameterError(f"m 必須 ≥ 1，收到 {m}")
    _check_samples(trials)
    a_p = gaussian_abs_moment(p_power)
    sigma = math.sqrt(gaussian_abs_moment(2.0 * p_power) - a_p * a_p)
    scale = sigma * math.sqrt(m)
    levels = np.asarray(z_grid, dtype=float) * scale

    def exceeds(sub: RandomStream, size: int) -> np.ndarray:
        sums = (np.abs(sub.normals((size, m))) ** p_power - a_p).sum(axis=1)
        return sums[:, None] >= levels[None, :]

    exceedance = monte_carlo_means(exceeds, trials, stream, threads, bernoulli=True)
    return _ratio_profile(z_grid, scale, exceedance)


def iid_tail_exact_chi2(m: int, z: float) -> float:
    """p = 2 時的精確比值 Pr[χ²(m) ≥ m + z√(2m)]/(1 − Φ(z))"""
    if m < 1:
        raise ParameterError(f"m 必須 ≥ 1，收到 {m}")
    level = m + z * math.sqrt(2.0 * m)
    if level <= 0:
        return 1.0 / float(special.ndtr(-z))
    return float(special.gammaincc(0.5 * m, 0.5 * level)) / float(special.ndtr(-z))


class BerryEsseenCheck(BaseModel):
    kolmogorov: float
    bound: float
    slack: float
    third_moment: float
    holds: bool


def _centered_third_moment(p: float, a_p: float) -> float:
    """E|(|g|^p − A_p)|³，以數值積分計算"""
    knot = a_p ** (1.0 / p)

    def integrand(x: float) -> float:
        return abs(x ** p - a_p) ** 3 * phi_pdf(x)

    left, _ = integrate.quad(integrand, 0.0, knot)
    right, _ = integrate.quad(integrand, knot, np.inf)
    return 2.0 * (left + right)


def berry_esseen_check(p: float, m: int, trials: int, stream: RandomStream,
                       threads: int = None) -> BerryEsseenCheck:
    """
    標準化和與 N(0,1) 的 Kolmogorov 距離，對照 Berry–Esseen 界
    0.56·E|X|³/(σ³√m)；經驗 CDF 的抽樣誤差以 1.36/√trials 放寬
    """
    if not 1.0 <= p <= 2.0:
        raise ParameterError(f"p 必須在 [1, 2]，收到 {p}")
    if m < 1:
        raise ParameterError(f"m 必須 ≥ 1，收到 {m}")
    _check_samples(trials)
    a_p = gaussian_abs_moment(p)
    sigma = math.sqrt(gaussian_abs_moment(2.0 * p) - a_p * a_p)

    def standardized(sub: RandomStream, size: int) -> np.ndarray:
        sums = (np.abs(sub.normals((size, m))) ** p - a_p).sum(axis=1)
        return sums / (sigma * math.sqrt(m))

    values = np.concatenate(map_chunks(standardized, trials, stream, threads))
    distance = float(stats.kstest(values, "norm").statistic)
    third = _centered_third_moment(p, a_p)
    bound = BERRY_ESSEEN_CONSTANT * third / (sigma ** 3 * math.sqrt(m))
    slack = _KS_CRITICAL / math.sqrt(trials)
    return BerryEsseenCheck(kolmogorov=distance, bound=bound, slack=slack,
                            third_moment=third, holds=distance <= bound + slack)


# ============ GSA ============

def gsa_ball_analytic(n: int, r: float) -> float:
    """半徑 r 的球面 GSA = chi_pdf(r, n)"""
    if r <= 0:
        raise ParameterError(f"半徑必須 > 0，收到 {r}")
    return float(chi_pdf(r, n))


def nazarov_gsa_bound(s: int) -> float:
    """s 個半空間交集的 GSA 上界 √(2 ln s) + 2"""
    if s < 2:
        raise ParameterError(f"需要 s ≥ 2，收到 {s}")
    return math.sqrt(2.0 * math.log(s)) + 2.0


def ball_gsa_bound(n: int, constant: float = 1.0) -> float:
    """凸體 GSA 上界 C·n^{1/4}"""
    if n < 1:
        raise DimensionError(f"維度必須 ≥ 1，收到 {n}")
    return constant * n ** 0.25


def isoperimetric_gsa_lower_bound(volume: float) -> float:
    """高斯等周下界 φ(Φ⁻¹(Vol))"""
    if not 0.0 <= volume <= 1.0:
        raise DomainError(f"體積必須在 [0, 1]，收到 {volume}")
    if volume in (0.0, 1.0):
        return 0.0
    return float(phi_pdf(phi_inv(volume)))


# ============ 影響力上界與分布 ============

class BoppanaCheck(BaseModel):
    tinf: Estimate
    bound: float
    facet_count: int
    holds: bool


def boppana_check(polytope: Polytope, n_samples: int, stream: RandomStream,
                  threads: int = None, k_sigma: float = 3.0) -> BoppanaCheck:
    """
    含原點、s ≥ 3 個面的多面體：TInf[K] < 7 ln s

    holds 為 TInf − kσ < 7 ln s。
    """
    s = polytope.facet_count()
    if s < 3:
        raise ParameterError(f"需要至少 3 個面，收到 {s}")
    _check_origin(polytope, strict=True)
    tinf = estimate_total_influence(polytope, n_samples, stream, threads)
    bound = 7.0 * math.log(s)
    holds = tinf.value - k_sigma * tinf.stderr < bound
    if not holds:
        logger.warning(f"⚠️ Boppana 界不成立：TInf={tinf.value:.5g}，7 ln s={bound:.5g}")
    return BoppanaCheck(tinf=tinf, bound=bound, facet_count=s, holds=holds)


class InfluenceFraction(BaseModel):
    threshold: float
    influences: List[Estimate]
    count: int
    fraction: float = Field(ge=0.0, le=1.0)


def influential_direction_fraction(body: Body, threshold: float, n_samples: int,
                                   stream: RandomStream, threads: int = None) -> InfluenceFraction:
    """
    以同一批探針估計全部 n 個座標方向的 Inf_{e_i}，
    回傳點估計 ≥ threshold 的方向比例（呼叫端保證 body 對稱）
    """
    if not threshold > 0:
        raise ParameterError(f"門檻必須 > 0，收到 {threshold}")
    _check_samples(n_samples)
    _check_origin(body)
    n = body.dim

    def columns(sub: RandomStream, size: int) -> np.ndarray:
        X = sub.normals((size, n))
        return body.contains(X)[:, None] * (1.0 - X * X)

    influences = monte_carlo_means(columns, n_samples, stream, threads)
    count = sum(1 for e in influences if e.value >= threshold)
    return InfluenceFraction(threshold=threshold, influences=influences,
                             count=count, fraction=count / n)


# ============ 衰減多項式 ============

def is_attenuated(expansion: HermiteExpansion, R: float, eps: float) -> bool:
    """(R, ε)-衰減：HV_R[g] ≤ ε‖g‖₂²"""
    if eps < 0:
        raise ParameterError(f"ε 必須 ≥ 0，收到 {eps}")
    return hypervariance(expansion, R) <= eps * expansion.norm_squared()


class AttenuationCheck(BaseModel):
    eps: float
    gamma: float
    R: float
    rate: Estimate
    bound: float
    holds: bool


def attenuated_concentration_check(expansion: HermiteExpansion, R: float, gamma: float,
                                   n_samples: int, stream: RandomStream,
                                   threads: int = None, k_sigma: float = 3.0) -> AttenuationCheck:
    """
    衰減多項式的乘法集中：Pr[g(z) 不 ≈_γ E[g]] ≤ (2√ε/γ)^{R²/2+1}

    ε 取使 g 成為 (R, ε)-衰減的最小值 HV_R[g]/‖g‖₂²。

    Args:
        expansion: 多項式 g
        R: R ≥ √2
        gamma: γ ∈ (0, 1]
        n_samples: 探針數
        stream: 亂數串流
    """
    if R < math.sqrt(2.0):
        raise ParameterError(f"需要 R ≥ √2，收到 {R}")
    if not 0.0 < gamma <= 1.0:
        raise ParameterError(f"γ 必須在 (0, 1]，收到 {gamma}")
    mu = expansion.mean()
    if mu == 0.0:
        raise DomainError("E[g] = 0 時乘法近似沒有定義")
    eps = hypervariance(expansion, R) / expansion.norm_squared()
    if eps > 1.0:
        raise ParameterError(f"g 不是 (R, ε ≤ 1)-衰減（最小 ε = {eps:.4g}）")
    _check_samples(n_samples)
    n = expansion.dim
    low, high = math.exp(-gamma), math.exp(gamma)

    def far_from_mean(sub: RandomStream, size: int) -> np.ndarray:
        ratio = expansion.evaluate(sub.normals((size, n))) / mu
        return ~((ratio >= low) & (ratio <= high))

    rate = monte_carlo_mean(far_from_mean, n_samples, stream, threads, bernoulli=True)
    bound = (2.0 * math.sqrt(eps) / gamma) ** (0.5 * R * R + 1.0)
    return AttenuationCheck(eps=eps, gamma=gamma, R=R, rate=rate, bound=bound,
                            holds=rate.value - k_sigma * rate.stderr <= bound)
