"""
高斯核心模組
提供可重現、可分流的計數器型亂數串流、蒙地卡羅估計值，
以及所有解析機率函數（Φ、χ/χ²、Hermite 多項式、絕對動差）
"""
import math
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field
from scipy import special

import config
from errors import DimensionError, DomainError, ParameterError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

SQRT_2PI = math.sqrt(2.0 * math.pi)
# 危險率引理中 (1−Φ(b))/(1−Φ(a)) ≤ C/η 的常數
HAZARD_CONSTANT = math.e ** 2
# Berry–Esseen 常數上界
BERRY_ESSEEN_CONSTANT = 0.56

_UINT64 = 2 ** 64
# Philox 每個計數器區塊輸出 4 個 64-bit 字
_WORDS_PER_BLOCK = 4


def _as_output(values: np.ndarray) -> ArrayLike:
    """0 維結果轉回 Python float，其餘維持陣列"""
    if np.ndim(values) == 0:
        return float(values)
    return values


# ============ 亂數串流 ============

class RandomStream(BaseModel):
    """
    計數器型亂數串流（Philox4x64）

    (seed, stream_id) 作為 Philox 金鑰，counter 指定區塊位置；
    相同三元組在任何平台、任何執行緒數下都輸出相同的數列。
    串流為單一擁有者物件，抽樣會推進 counter。
    """
    seed: int = Field(ge=0, lt=_UINT64)
    stream_id: int = Field(default=0, ge=0, lt=_UINT64)
    counter: int = Field(default=0, ge=0, lt=_UINT64)

    def _generator(self) -> np.random.Generator:
        bit_generator = np.random.Philox(
            key=np.array([self.seed, self.stream_id], dtype=np.uint64),
            counter=np.array([self.counter, 0, 0, 0], dtype=np.uint64),
        )
        return np.random.Generator(bit_generator)

    def _advance(self, words: int) -> None:
        blocks = -(-words // _WORDS_PER_BLOCK)
        self.counter = (self.counter + blocks) % _UINT64

    def uniforms(self, shape) -> np.ndarray:
        """
        抽取 (0, 1) 開區間均勻亂數

        每個值消耗一個 64-bit 字，counter 前進 ceil(k/4) 個區塊
        """
        size = int(np.prod(shape))
        values = self._generator().random(size) + 2.0 ** -54
        self._advance(size)
        return values.reshape(shape)

    def normals(self, shape) -> np.ndarray:
        """以反 CDF 抽取標準常態亂數（每個座標固定消耗一個字）"""
        return special.ndtri(self.uniforms(shape))

    def split(self, count: int) -> List["RandomStream"]:
        """
        由目前狀態衍生 count 條互相獨立的子串流

        子串流的 stream_id 由 (seed, stream_id, counter, index) 經
        SeedSequence 混合而得；母串流 counter 前進 1，
        因此連續兩次 split 得到不同的子串流。

        Args:
            count: 子串流數量

        Returns:
            子串流列表（順序固定）
        """
        if count < 1:
            raise ParameterError(f"子串流數量必須 ≥ 1，收到 {count}")
        mixer = np.random.SeedSequence([self.seed, self.stream_id, self.counter])
        ids = mixer.generate_state(count, dtype=np.uint64)
        self._advance(_WORDS_PER_BLOCK)
        return [RandomStream(seed=self.seed, stream_id=int(i), counter=0) for i in ids]

    def clone(self) -> "RandomStream":
        """相同狀態的複本（用於共同亂數）"""
        return self.model_copy()


def std_normal_vector(stream: RandomStream, n: int) -> np.ndarray:
    """
    抽取 n 維標準常態向量

    Args:
        stream: 亂數串流
        n: 維度

    Returns:
        長度 n 的陣列
    """
    if n < 1:
        raise DimensionError(f"維度必須 ≥ 1，收到 {n}")
    return stream.normals(n)


def correlated_pair(
    stream: RandomStream, n: int, rho: float, count: Optional[int] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    產生 ρ 相關的高斯向量對 z' = ρz + √(1−ρ²)g

    Args:
        stream: 亂數串流
        n: 維度
        rho: 相關係數，|ρ| ≤ 1
        count: 若指定，回傳 (count, n) 的批次

    Returns:
        (z, z')
    """
    if n < 1:
        raise DimensionError(f"維度必須 ≥ 1，收到 {n}")
    if not -1.0 <= rho <= 1.0:
        raise ParameterError(f"相關係數必須在 [-1, 1]，收到 {rho}")
    shape = n if count is None else (count, n)
    z = stream.normals(shape)
    g = stream.normals(shape)
    return z, rho * z + math.sqrt(1.0 - rho * rho) * g


def sample_without_replacement(stream: RandomStream, rows: int, n: int, m: int) -> np.ndarray:
    """
    每列從 {0..n−1} 不放回抽出 m 個索引（部分 Fisher–Yates，逐欄向量化）

    Args:
        stream: 亂數串流
        rows: 列數（彼此獨立）
        n: 母體大小
        m: 每列抽出數量

    Returns:
        形狀 (rows, m) 的整數陣列
    """
    if not 0 <= m <= n:
        raise ParameterError(f"需要 0 ≤ m ≤ n，收到 m={m}, n={n}")
    perm = np.tile(np.arange(n, dtype=np.int32), (rows, 1))
    u = stream.uniforms((rows, max(m, 1)))
    row = np.arange(rows)
    for k in range(m):
        j = k + np.minimum((u[:, k] * (n - k)).astype(np.int64), n - k - 1)
        picked = perm[row, j]
        perm[row, j] = perm[row, k]
        perm[row, k] = picked
    return perm[:, :m]


# ============ 估計值 ============

def normal_quantile(ci_level: float) -> float:
    """雙尾信賴水準對應的常態分位數 z"""
    if not 0.0 < ci_level < 1.0:
        raise DomainError(f"信賴水準必須在 (0, 1)，收到 {ci_level}")
    return float(special.ndtri(0.5 + 0.5 * ci_level))


def wilson_interval(successes: float, trials: int, ci_level: float = None) -> Tuple[float, float]:
    """
    Bernoulli 比例的 Wilson 分數區間

    Args:
        successes: 成功次數
        trials: 試驗次數
        ci_level: 信賴水準（預設取設定值）

    Returns:
        (下界, 上界)
    """
    if trials <= 0:
        return (0.0, 1.0)
    z = normal_quantile(ci_level if ci_level is not None else config.CI_LEVEL)
    p_hat = successes / trials
    denominator = 1.0 + z * z / trials
    center = (p_hat + z * z / (2.0 * trials)) / denominator
    margin = (z / denominator) * math.sqrt(
        max(p_hat * (1.0 - p_hat), 0.0) / trials + z * z / (4.0 * trials * trials)
    )
    return (max(0.0, center - margin), min(1.0, center + margin))


class Estimate(BaseModel):
    """蒙地卡羅估計值：平均、標準誤、樣本數與信賴區間"""
    value: float
    stderr: float = Field(ge=0.0)
    n_samples: int = Field(gt=0)
    ci_level: float = Field(gt=0.0, lt=1.0)
    ci_low: float
    ci_high: float

    @classmethod
    def from_sums(
        cls,
        total: float,
        total_sq: float,
        n_samples: int,
        ci_level: float = None,
        bernoulli: bool = False,
    ) -> "Estimate":
        """由樣本和與平方和建立（外插標準差，Bernoulli 附 Wilson 區間）"""
        level = ci_level if ci_level is not None else config.CI_LEVEL
        mean = total / n_samples
        if n_samples > 1:
            variance = max(total_sq - n_samples * mean * mean, 0.0) / (n_samples - 1)
        else:
            variance = 0.0
        stderr = math.sqrt(variance / n_samples)
        if bernoulli:
            low, high = wilson_interval(total, n_samples, level)
        else:
            half = normal_quantile(level) * stderr
            low, high = mean - half, mean + half
        return cls(value=mean, stderr=stderr, n_samples=n_samples,
                   ci_level=level, ci_low=low, ci_high=high)

    @classmethod
    def from_values(cls, values: Sequence[float], ci_level: float = None,
                    bernoulli: bool = False) -> "Estimate":
        """由樣本陣列建立"""
        data = np.asarray(values, dtype=float).ravel()
        if data.size == 0:
            raise ParameterError("樣本不可為空")
        return cls.from_sums(float(data.sum()), float(np.square(data).sum()),
                             int(data.size), ci_level, bernoulli)

    @property
    def half_width(self) -> float:
        return normal_quantile(self.ci_level) * self.stderr

    def combined_sigma(self, other: "Estimate") -> float:
        return math.hypot(self.stderr, other.stderr)

    def agrees_with(self, other: Union["Estimate", float], k_sigma: float = 3.0,
                    rel_slack: float = 0.0) -> bool:
        """
        判斷兩個估計值（或估計值與解析值）是否在 kσ 內一致

        Args:
            other: 另一個 Estimate 或精確值
            k_sigma: 合併標準誤的倍數
            rel_slack: 額外的相對容許誤差
        """
        if isinstance(other, Estimate):
            target, sigma = other.value, self.combined_sigma(other)
        else:
            target, sigma = float(other), self.stderr
        return abs(self.value - target) <= k_sigma * sigma + rel_slack * abs(target)

    def scaled(self, factor: float, offset: float = 0.0) -> "Estimate":
        """仿射轉換 factor·X + offset 後的估計值"""
        ends = sorted((factor * self.ci_low + offset, factor * self.ci_high + offset))
        return Estimate(value=factor * self.value + offset, stderr=abs(factor) * self.stderr,
                        n_samples=self.n_samples, ci_level=self.ci_level,
                        ci_low=ends[0], ci_high=ends[1])

    def as_record(self) -> dict:
        return self.model_dump()


# ============ 分塊蒙地卡羅引擎 ============

def map_chunks(
    fn: Callable[[RandomStream, int], object],
    n_items: int,
    stream: RandomStream,
    threads: int = None,
    chunk_size: int = None,
) -> list:
    """
    將 n_items 個樣本切成固定大小的區塊，每塊使用獨立子串流

    結果依區塊順序回傳，因此與執行緒數無關。

    Args:
        fn: fn(子串流, 區塊大小) → 區塊結果
        n_items: 樣本總數
        stream: 母串流
        threads: 執行緒數（預設取設定值）
        chunk_size: 區塊大小（預設取設定值）

    Returns:
        依區塊順序排列的結果列表
    """
    if n_items < 1:
        raise ParameterError(f"樣本數必須 ≥ 1，收到 {n_items}")
    size = chunk_size or config.CHUNK_SIZE
    workers = threads or config.DEFAULT_THREADS
    n_chunks = -(-n_items // size)
    substreams = stream.split(n_chunks)
    sizes = [min(size, n_items - i * size) for i in range(n_chunks)]

    def work(index: int):
        return fn(substreams[index], sizes[index])

    if workers > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(work, range(n_chunks)))
    return [work(i) for i in range(n_chunks)]


def monte_carlo_sums(
    sample_fn: Callable[[RandomStream, int], np.ndarray],
    n_samples: int,
    stream: RandomStream,
    threads: int = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    逐區塊累加樣本值與平方和（多欄時逐欄累加）

    Returns:
        (各欄總和, 各欄平方和)
    """
    def chunk_sums(sub: RandomStream, size: int):
        values = np.asarray(sample_fn(sub, size), dtype=float).reshape(size, -1)
        return values.sum(axis=0), np.square(values).sum(axis=0)

    parts = map_chunks(chunk_sums, n_samples, stream, threads)
    total = np.zeros_like(parts[0][0])
    total_sq = np.zeros_like(parts[0][1])
    for part_sum, part_sq in parts:
        total = total + part_sum
        total_sq = total_sq + part_sq
    return total, total_sq


def monte_carlo_means(sample_fn, n_samples: int, stream: RandomStream, threads: int = None,
                      bernoulli: bool = False) -> List[Estimate]:
    """多欄版本，每欄一個 Estimate"""
    total, total_sq = monte_carlo_sums(sample_fn, n_samples, stream, threads)
    return [Estimate.from_sums(float(s), float(q), n_samples, bernoulli=bernoulli)
            for s, q in zip(total, total_sq)]


def monte_carlo_mean(sample_fn, n_samples: int, stream: RandomStream, threads: int = None,
                     bernoulli: bool = False) -> Estimate:
    """單欄蒙地卡羅平均"""
    return monte_carlo_means(sample_fn, n_samples, stream, threads, bernoulli)[0]


# ============ 常態分布 ============

def phi_cdf(t: ArrayLike) -> ArrayLike:
    """標準常態 CDF Φ(t)"""
    return _as_output(special.ndtr(np.asarray(t, dtype=float)))


def phi_pdf(t: ArrayLike) -> ArrayLike:
    """標準常態密度 φ(t)"""
    x = np.asarray(t, dtype=float)
    return _as_output(np.exp(-0.5 * x * x) / SQRT_2PI)


def phi_inv(p: ArrayLike) -> ArrayLike:
    """Φ 的反函數，p 必須在 (0, 1)"""
    prob = np.asarray(p, dtype=float)
    if np.any(~((prob > 0.0) & (prob < 1.0))):
        raise DomainError(f"phi_inv 的引數必須在 (0, 1)，收到 {p}")
    return _as_output(special.ndtri(prob))


def log_phi_tail(t: ArrayLike) -> ArrayLike:
    """ln(1 − Φ(t))，在遠尾端仍保持精度"""
    return _as_output(special.log_ndtr(-np.asarray(t, dtype=float)))


# ============ χ 與 χ² 分布 ============

def _check_degrees(n: float) -> None:
    if n < 1:
        raise ParameterError(f"自由度必須 ≥ 1，收到 {n}")


def _check_nonnegative(x: np.ndarray, name: str) -> None:
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise DomainError(f"{name} 必須 ≥ 0")


def chi2_cdf(t: ArrayLike, n: float) -> ArrayLike:
    """χ²(n) 的 CDF（正則化下不完全 Gamma）"""
    _check_degrees(n)
    x = np.asarray(t, dtype=float)
    _check_nonnegative(x, "t")
    return _as_output(special.gammainc(0.5 * n, 0.5 * x))


def chi_pdf(r: ArrayLike, n: float) -> ArrayLike:
    """
    χ(n) 密度 r^{n−1} e^{−r²/2} / (2^{n/2−1} Γ(n/2))

    在對數域計算以避免大 n 時溢位
    """
    _check_degrees(n)
    x = np.asarray(r, dtype=float)
    _check_nonnegative(x, "r")
    log_density = (special.xlogy(n - 1.0, x) - 0.5 * x * x
                   - (0.5 * n - 1.0) * math.log(2.0) - special.gammaln(0.5 * n))
    return _as_output(np.exp(log_density))


def tail_m(t: ArrayLike, n: float) -> ArrayLike:
    """沿射線的質量 m(t) = Pr[‖x‖ ≥ t] = Pr[χ²(n) ≥ t²]"""
    _check_degrees(n)
    x = np.asarray(t, dtype=float)
    _check_nonnegative(x, "t")
    return _as_output(special.gammaincc(0.5 * n, 0.5 * x * x))


def log_tail_m(t: ArrayLike, n: float) -> ArrayLike:
    """ln m(t)"""
    with np.errstate(divide="ignore"):
        return _as_output(np.log(np.asarray(tail_m(t, n), dtype=float)))


def gaussian_abs_moment(p: float) -> float:
    """
    標準常態的 p 次絕對動差 A_p = √(2^p/π)·Γ((p+1)/2)

    Args:
        p: 次方，p ≥ 0

    Returns:
        E|g|^p
    """
    if p < 0:
        raise DomainError(f"動差次方必須 ≥ 0，收到 {p}")
    return math.exp(0.5 * p * math.log(2.0) + special.gammaln(0.5 * (p + 1.0))
                    - 0.5 * math.log(math.pi))


# ============ Hermite 多項式 ============

def hermite_table(max_degree: int, x: ArrayLike) -> np.ndarray:
    """
    計算正規化 Hermite 多項式 h_0..h_d

    三項遞迴 h_{j+1} = (x·h_j − √j·h_{j−1}) / √(j+1)，
    h_2(x) = (x² − 1)/√2。

    Args:
        max_degree: 最高次數 d
        x: 任意形狀的輸入

    Returns:
        形狀 x.shape + (d+1,) 的陣列
    """
    if max_degree < 0:
        raise ParameterError(f"次數必須 ≥ 0，收到 {max_degree}")
    values = np.asarray(x, dtype=float)
    table = np.empty(values.shape + (max_degree + 1,))
    table[..., 0] = 1.0
    if max_degree >= 1:
        table[..., 1] = values
    for j in range(1, max_degree):
        table[..., j + 1] = (values * table[..., j] - math.sqrt(j) * table[..., j - 1]) / math.sqrt(j + 1)
    return table


def hermite_poly(j: int, x: ArrayLike) -> ArrayLike:
    """單變數正規化 Hermite 多項式 h_j(x)"""
    return _as_output(hermite_table(j, x)[..., j])


def hermite_multi(alpha: Sequence[int], x: ArrayLike) -> ArrayLike:
    """
    多變數 Hermite 基底 h_α(x) = Π_i h_{α_i}(x_i)

    Args:
        alpha: 多重指標（長度等於維度）
        x: 形狀 (n,) 或 (N, n) 的點

    Returns:
        純量或長度 N 的陣列
    """
    points = np.asarray(x, dtype=float)
    degrees = np.asarray(alpha, dtype=int)
    if points.shape[-1] != degrees.size:
        raise DimensionError(f"多重指標長度 {degrees.size} 與點的維度 {points.shape[-1]} 不符")
    if np.any(degrees < 0):
        raise ParameterError("多重指標不可為負")
    table = hermite_table(int(degrees.max(initial=0)), points)
    picked = np.take_along_axis(
        table, np.broadcast_to(degrees, points.shape)[..., None], axis=-1
    )[..., 0]
    return _as_output(np.prod(picked, axis=-1))


# ============ 解析不等式檢查 ============

def check_gaussian_tail_bound(r: float) -> Tuple[float, float, float]:
    """
    高斯尾部夾擠 φ(r)(1/r − 1/r³) ≤ 1−Φ(r) ≤ φ(r)(1/r − 1/r³ + 3/r⁵)

    Returns:
        (下界, 精確值, 上界)
    """
    if r <= 0:
        raise ParameterError(f"r 必須 > 0，收到 {r}")
    density = phi_pdf(r)
    lower = density * (1.0 / r - 1.0 / r ** 3)
    upper = density * (1.0 / r - 1.0 / r ** 3 + 3.0 / r ** 5)
    return lower, float(special.ndtr(-r)), upper


def check_chi2_tail_bound(n: int, t: float) -> Tuple[float, float]:
    """
    χ² 上尾 Pr[y ≥ n + 2√(nt) + 2t] ≤ e^{−t}

    Returns:
        (上界 e^{−t}, 精確尾機率)
    """
    _check_degrees(n)
    if t <= 0:
        raise ParameterError(f"t 必須 > 0，收到 {t}")
    level = n + 2.0 * math.sqrt(n * t) + 2.0 * t
    return math.exp(-t), float(special.gammaincc(0.5 * n, 0.5 * level))


def check_chi2_lower_tail_bound(n: int, t: float) -> Tuple[float, float]:
    """
    χ² 下尾 Pr[y ≤ n − 2√(nt)] ≤ e^{−t}

    Returns:
        (上界 e^{−t}, 精確下尾機率)
    """
    _check_degrees(n)
    if t <= 0:
        raise ParameterError(f"t 必須 > 0，收到 {t}")
    level = n - 2.0 * math.sqrt(n * t)
    exact = float(special.gammainc(0.5 * n, 0.5 * level)) if level > 0 else 0.0
    return math.exp(-t), exact


def check_hazard_fact(a: float, b: float, eta: float,
                      constant: float = HAZARD_CONSTANT) -> Tuple[float, float]:
    """
    常態危險率：a > b > ln(1/η) > 2 且 a − b ≤ ln(1/η)/a 時
    (1−Φ(b))/(1−Φ(a)) ≤ C/η

    Args:
        a, b: 兩個尾端位置
        eta: η ∈ (0, 1)
        constant: 常數 C（預設 e²）

    Returns:
        (比值, 上界 C/η)
    """
    if not 0.0 < eta < 1.0:
        raise ParameterError(f"η 必須在 (0, 1)，收到 {eta}")
    log_inv = -math.log(eta)
    if not (a > b > log_inv > 2.0):
        raise ParameterError(f"需要 a > b > ln(1/η) > 2，收到 a={a}, b={b}, ln(1/η)={log_inv}")
    if a - b > log_inv / a:
        raise ParameterError(f"需要 a − b ≤ ln(1/η)/a，收到 a−b={a - b}")
    ratio = math.exp(float(special.log_ndtr(-b) - special.log_ndtr(-a)))
    return ratio, constant / eta


def multiplicatively_close(a: float, b: float, nu: float) -> bool:
    """a ≈_ν b ⇔ e^{−ν} ≤ a/b ≤ e^{ν}（a、b 皆非零）"""
    if a == 0 or b == 0:
        raise DomainError("乘法近似只對非零實數定義")
    if nu < 0:
        raise ParameterError(f"ν 必須 ≥ 0，收到 {nu}")
    ratio = a / b
    return ratio > 0 and math.exp(-nu) <= ratio <= math.exp(nu)
