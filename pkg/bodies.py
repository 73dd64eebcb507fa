"""
凸體模組
以統一的成員判定介面表示多面體、ℓp 球、半空間與 junta 交集，
並提供支撐函數、伸縮與 zoom 包裝，以及多面體檔案格式
"""
import json
import math
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import linprog

import config
from errors import CapError, DimensionError, ParameterError, SolverError, CapabilityError
from gaussian_core import gaussian_abs_moment

logger = logging.getLogger(__name__)

# 每次比對的面數區塊（區塊之間做短路）
_FACET_BLOCK = 256
# junta 成員判定時單一批次允許的元素數
_JUNTA_BATCH_ELEMENTS = 1 << 22


def _as_points(points, dim: int) -> np.ndarray:
    """將輸入轉為 (N, dim) 陣列並檢查維度"""
    array = np.asarray(points, dtype=float)
    if array.ndim == 1:
        array = array[None, :]
    if array.ndim != 2 or array.shape[1] != dim:
        raise DimensionError(f"點的維度 {array.shape[-1]} 與物體維度 {dim} 不符")
    return array


def _unit(v, dim: Optional[int] = None) -> np.ndarray:
    direction = np.asarray(v, dtype=float).ravel()
    if dim is not None and direction.size != dim:
        raise DimensionError(f"方向維度 {direction.size} 與物體維度 {dim} 不符")
    norm = float(np.linalg.norm(direction))
    if norm == 0.0 or not math.isfinite(norm):
        raise ParameterError("方向向量不可為零")
    return direction / norm


class Body(ABC):
    """
    凸體的成員判定介面

    contains 為批次路徑（吞吐量關鍵），membership 為單點版本；
    有支撐函數的物體設定 has_support = True。
    """
    dim: int
    has_support: bool = False

    @abstractmethod
    def contains(self, points) -> np.ndarray:
        """批次成員判定，回傳 bool 陣列"""

    def membership(self, x) -> bool:
        point = np.asarray(x, dtype=float)
        if point.ndim != 1:
            raise DimensionError("membership 只接受單一點")
        return bool(self.contains(_as_points(point, self.dim))[0])

    def support(self, v) -> float:
        raise CapabilityError(f"{type(self).__name__} 沒有支撐函數")

    def support_many(self, directions) -> np.ndarray:
        return np.array([self.support(v) for v in np.asarray(directions, dtype=float)])


class FullSpace(Body):
    """整個 R^n（永遠在內）"""
    has_support = True

    def __init__(self, dim: int):
        if dim < 1:
            raise DimensionError(f"維度必須 ≥ 1，收到 {dim}")
        self.dim = dim

    def contains(self, points) -> np.ndarray:
        return np.ones(len(_as_points(points, self.dim)), dtype=bool)

    def support(self, v) -> float:
        _unit(v, self.dim)
        return math.inf

    def support_many(self, directions) -> np.ndarray:
        return np.full(len(np.atleast_2d(directions)), math.inf)


class Halfspace(Body):
    """
    半空間 {x : ⟨x, v⟩ ≤ θ}

    建構時將法向量正規化，門檻同比例縮放；原始輸入保留以便存檔。
    """
    has_support = True

    def __init__(self, normal: Sequence[float], threshold: float):
        raw = np.asarray(normal, dtype=float).ravel()
        norm = float(np.linalg.norm(raw))
        if norm == 0.0:
            raise ParameterError("半空間法向量不可為零")
        self.dim = raw.size
        self.raw_normal = raw
        self.raw_threshold = float(threshold)
        self.normal = raw / norm
        self.threshold = float(threshold) / norm

    def contains(self, points) -> np.ndarray:
        return _as_points(points, self.dim) @ self.normal <= self.threshold

    def support(self, v) -> float:
        # 只有法向量方向的支撐值有限
        if float(_unit(v, self.dim) @ self.normal) >= 1.0 - 1e-12:
            return self.threshold
        return math.inf

    def as_polytope(self) -> "Polytope":
        return Polytope(self.dim, [self.raw_normal], [self.raw_threshold])


class Polytope(Body):
    """
    半空間交集 {x : ⟨x, v_i⟩ ≤ θ_i, i = 1..s}

    法向量存成 (s, n) 陣列；成員判定依面的順序分塊短路。
    """
    has_support = True

    def __init__(self, dim: int, normals, thresholds):
        if dim < 1:
            raise DimensionError(f"維度必須 ≥ 1，收到 {dim}")
        raw_normals = np.asarray(normals, dtype=float).reshape(-1, dim) if len(normals) else np.zeros((0, dim))
        raw_thresholds = np.asarray(thresholds, dtype=float).ravel()
        if raw_normals.shape[0] != raw_thresholds.size:
            raise ParameterError(f"法向量數 {raw_normals.shape[0]} 與門檻數 {raw_thresholds.size} 不符")
        norms = np.linalg.norm(raw_normals, axis=1)
        if np.any(norms == 0.0):
            raise ParameterError("多面體含有零法向量")
        self.dim = dim
        self.raw_normals = raw_normals
        self.raw_thresholds = raw_thresholds
        self.normals = raw_normals / norms[:, None]
        self.thresholds = raw_thresholds / norms

    @classmethod
    def from_halfspaces(cls, dim: int, halfspaces: Iterable[Halfspace]) -> "Polytope":
        items = list(halfspaces)
        for h in items:
            if h.dim != dim:
                raise DimensionError(f"半空間維度 {h.dim} 與多面體維度 {dim} 不符")
        return cls(dim, [h.raw_normal for h in items], [h.raw_threshold for h in items])

    @property
    def halfspaces(self) -> List[Halfspace]:
        return [Halfspace(v, t) for v, t in zip(self.raw_normals, self.raw_thresholds)]

    def facet_count(self) -> int:
        return int(self.thresholds.size)

    def contains_origin(self) -> bool:
        return bool(np.all(self.thresholds >= 0.0))

    def contains(self, points) -> np.ndarray:
        X = _as_points(points, self.dim)
        inside = np.ones(len(X), dtype=bool)
        alive = np.arange(len(X))
        for start in range(0, self.facet_count(), _FACET_BLOCK):
            block = slice(start, start + _FACET_BLOCK)
            ok = np.all(X[alive] @ self.normals[block].T <= self.thresholds[block], axis=1)
            inside[alive[~ok]] = False
            alive = alive[ok]
            if alive.size == 0:
                break
        return inside

    def support(self, v) -> float:
        """以線性規劃求 sup{⟨x, v⟩ : x ∈ P}，無界時回傳 +∞"""
        direction = _unit(v, self.dim)
        if self.facet_count() == 0:
            return math.inf
        bounds = [(None, None)] * self.dim
        result = linprog(-direction, A_ub=self.normals, b_ub=self.thresholds, bounds=bounds)
        if result.status == 4 and "unbounded or infeasible" in result.message:
            # presolve 無法區分時，以可行性問題判斷
            feasible = linprog(np.zeros(self.dim), A_ub=self.normals, b_ub=self.thresholds, bounds=bounds)
            return math.inf if feasible.success else -math.inf
        if result.status == 3:
            return math.inf
        if result.status == 2:
            return -math.inf
        if not result.success:
            raise SolverError(f"多面體支撐函數線性規劃失敗: {result.message}")
        return float(-result.fun)

    def permuted(self, order: Sequence[int]) -> "Polytope":
        index = np.asarray(order, dtype=int)
        if sorted(index.tolist()) != list(range(self.facet_count())):
            raise ParameterError("面的排列必須是 0..s−1 的排列")
        return Polytope(self.dim, self.raw_normals[index], self.raw_thresholds[index])

    def intersect(self, other: "Polytope") -> "Polytope":
        if other.dim != self.dim:
            raise DimensionError(f"維度不符: {self.dim} vs {other.dim}")
        return Polytope(self.dim, np.vstack([self.raw_normals, other.raw_normals]),
                        np.concatenate([self.raw_thresholds, other.raw_thresholds]))

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "halfspaces": [{"v": v.tolist(), "theta": float(t)}
                           for v, t in zip(self.raw_normals, self.raw_thresholds)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Polytope":
        try:
            dim = int(data["dim"])
            halfspaces = data["halfspaces"]
            normals = [[float(c) for c in h["v"]] for h in halfspaces]
            thresholds = [float(h["theta"]) for h in halfspaces]
        except (KeyError, TypeError, ValueError) as e:
            raise ParameterError(f"多面體格式錯誤: {e}") from e
        for i, v in enumerate(normals):
            if len(v) != dim:
                raise DimensionError(f"第 {i} 個半空間維度 {len(v)} 與 dim={dim} 不符")
        return cls(dim, normals, thresholds)


class LpBall(Body):
    """
    ℓp 球 {x : Σ|x_i|^p ≤ budget}；p = ∞ 時為 max|x_i| ≤ budget
    """
    has_support = True

    def __init__(self, dim: int, p: float, p_power_budget: float):
        if dim < 1:
            raise DimensionError(f"維度必須 ≥ 1，收到 {dim}")
        if not p >= 1.0:
            raise ParameterError(f"p 必須在 [1, ∞]，收到 {p}")
        if not p_power_budget > 0.0:
            raise ParameterError(f"p 次方預算必須 > 0，收到 {p_power_budget}")
        self.dim = dim
        self.p = float(p)
        self.p_power_budget = float(p_power_budget)

    @property
    def radius(self) -> float:
        if math.isinf(self.p):
            return self.p_power_budget
        return self.p_power_budget ** (1.0 / self.p)

    @property
    def dual_exponent(self) -> float:
        if self.p == 1.0:
            return math.inf
        if math.isinf(self.p):
            return 1.0
        return self.p / (self.p - 1.0)

    def power_sums(self, points) -> np.ndarray:
        """Σ|x_i|^p（p = ∞ 時為 max|x_i|）"""
        X = _as_points(points, self.dim)
        if math.isinf(self.p):
            return np.abs(X).max(axis=1)
        if self.p == 2.0:
            return np.einsum("ij,ij->i", X, X)
        if self.p == 1.0:
            return np.abs(X).sum(axis=1)
        return (np.abs(X) ** self.p).sum(axis=1)

    def contains(self, points) -> np.ndarray:
        return self.power_sums(points) <= self.p_power_budget

    def support(self, v) -> float:
        return support_lp(self, v)

    def support_many(self, directions) -> np.ndarray:
        V = _as_points(directions, self.dim)
        units = V / np.linalg.norm(V, axis=1)[:, None]
        return self.radius * np.linalg.norm(units, ord=self.dual_exponent, axis=1)


class JuntaIntersection(Body):
    """
    p 次方 junta 限制的交集：對每一項 j，Σ_{k∈T_j} |x_k|^p ≤ θ_j
    """

    def __init__(self, dim: int, p: float, indices, thetas):
        index_array = np.atleast_2d(np.asarray(indices, dtype=int))
        if dim < 1:
            raise DimensionError(f"維度必須 ≥ 1，收到 {dim}")
        if not 1.0 <= p <= 2.0:
            raise ParameterError(f"junta 的 p 必須在 [1, 2]，收到 {p}")
        if index_array.size and (index_array.min() < 0 or index_array.max() >= dim):
            raise DimensionError(f"座標索引超出 [0, {dim})")
        ordered = np.sort(index_array, axis=1)
        if index_array.shape[1] > 1 and np.any(np.diff(ordered, axis=1) == 0):
            raise ParameterError("同一項中的座標索引必須互異")
        self.dim = dim
        self.p = float(p)
        self.indices = index_array
        self.thetas = np.broadcast_to(np.asarray(thetas, dtype=float), (index_array.shape[0],)).copy()

    @property
    def m(self) -> int:
        return int(self.indices.shape[1])

    @property
    def term_count(self) -> int:
        return int(self.indices.shape[0])

    @property
    def terms(self) -> list:
        return [(tuple(int(i) for i in row), float(t)) for row, t in zip(self.indices, self.thetas)]

    def with_terms(self, count: int) -> "JuntaIntersection":
        """只保留前 count 項"""
        return JuntaIntersection(self.dim, self.p, self.indices[:count], self.thetas[:count])

    def virtual_facet_count(self) -> Optional[int]:
        """p = 1 時為 M·2^m；p ∈ (1, 2] 沒有有限面數，回傳 None"""
        if self.p == 1.0:
            return self.term_count * 2 ** self.m
        return None

    def log_virtual_facet_count(self) -> Optional[float]:
        if self.p == 1.0:
            return math.log(self.term_count) + self.m * math.log(2.0)
        return None

    def contains(self, points) -> np.ndarray:
        X = _as_points(points, self.dim)
        inside = np.ones(len(X), dtype=bool)
        alive = np.arange(len(X))
        start = 0
        while start < self.term_count and alive.size:
            block = max(1, _JUNTA_BATCH_ELEMENTS // (alive.size * max(self.m, 1)))
            index = self.indices[start:start + block]
            values = np.abs(X[alive][:, index])
            if self.p != 1.0:
                values = values ** self.p
            ok = np.all(values.sum(axis=2) <= self.thetas[start:start + block], axis=1)
            inside[alive[~ok]] = False
            alive = alive[ok]
            start += block
        return inside


class DilatedBody(Body):
    """伸縮 scale·K：x ∈ scale·K ⇔ x/scale ∈ K"""

    def __init__(self, base: Body, scale: float):
        self.base = base
        self.scale = float(scale)
        self.dim = base.dim
        self.has_support = base.has_support

    def contains(self, points) -> np.ndarray:
        return self.base.contains(_as_points(points, self.dim) / self.scale)

    def support(self, v) -> float:
        return self.scale * self.base.support(v)

    def support_many(self, directions) -> np.ndarray:
        return self.scale * self.base.support_many(directions)


class ZoomedBody(Body):
    """λ-zoom：y ↦ K(√(1−λ)·anchor + √λ·y)"""

    def __init__(self, base: Body, lam: float, anchor):
        self.base = base
        self.lam = float(lam)
        self.dim = base.dim
        self.anchor = _as_points(anchor, self.dim)[0]
        self._shift = math.sqrt(1.0 - self.lam) * self.anchor
        self._spread = math.sqrt(self.lam)

    def contains(self, points) -> np.ndarray:
        return self.base.contains(self._shift + self._spread * _as_points(points, self.dim))


class IntersectionBody(Body):
    """一般物體的交集（逐一短路判定）"""

    def __init__(self, bodies: Sequence[Body]):
        self.bodies = list(bodies)
        self.dim = self.bodies[0].dim

    def contains(self, points) -> np.ndarray:
        X = _as_points(points, self.dim)
        inside = np.ones(len(X), dtype=bool)
        alive = np.arange(len(X))
        for body in self.bodies:
            ok = body.contains(X[alive])
            inside[alive[~ok]] = False
            alive = alive[ok]
            if alive.size == 0:
                break
        return inside


# ============ 建構與操作函數 ============

def membership(body: Body, x) -> bool:
    """單點成員判定（檢查維度）"""
    return body.membership(x)


def support_lp(ball: LpBall, v) -> float:
    """
    ℓp 球的支撐函數 r·‖v‖_q，r = budget^{1/p}，1/p + 1/q = 1

    Args:
        ball: ℓp 球
        v: 方向（會先正規化）

    Returns:
        sup{⟨x, v⟩ : x ∈ ball}
    """
    direction = _unit(v, ball.dim)
    return ball.radius * float(np.linalg.norm(direction, ord=ball.dual_exponent))


def l2_ball(n: int, r: float) -> LpBall:
    """半徑 r 的歐氏球 B(r)"""
    if r <= 0:
        raise ParameterError(f"半徑必須 > 0，收到 {r}")
    return LpBall(n, 2.0, r * r)


def canonical_bp(n: int, p: float) -> LpBall:
    """標準 B_p：Σ|x_i|^p ≤ n·A_p（高斯體積約 1/2）"""
    if math.isinf(p):
        raise ParameterError("標準 B_p 只對有限 p 定義")
    return LpBall(n, p, n * gaussian_abs_moment(p))


def cube(n: int, r: float) -> Polytope:
    """立方體 [−r, r]^n，2n 個面"""
    if r <= 0:
        raise ParameterError(f"邊界必須 > 0，收到 {r}")
    eye = np.eye(n)
    return Polytope(n, np.vstack([eye, -eye]), np.full(2 * n, float(r)))


def dilate(body: Body, scale: float) -> Body:
    """伸縮物體，scale 必須 > 0"""
    if not scale > 0:
        raise ParameterError(f"伸縮倍率必須 > 0，收到 {scale}")
    return DilatedBody(body, scale)


def zoom_body(body: Body, lam: float, anchor) -> Body:
    """物體在 anchor 處的 λ-zoom"""
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"λ 必須在 [0, 1]，收到 {lam}")
    return ZoomedBody(body, lam, anchor)


def l1_junta_to_polytope(dim: int, indices: Sequence[int], theta: float, cap: int = None) -> Polytope:
    """
    將 p = 1 的單項 junta 展開為 2^m 面多面體

    每個符號向量 b ∈ {−1, 1}^m 對應 Σ b_k x_{i_k} ≤ θ，
    正規化後法向量為 b/√m、門檻為 θ/√m。

    Args:
        dim: 維度
        indices: m 個互異座標
        theta: 門檻（≥ 0）
        cap: m 的上限（預設取設定值）
    """
    limit = cap if cap is not None else config.JUNTA_CAP
    index = np.asarray(indices, dtype=int).ravel()
    m = index.size
    if m > limit:
        raise CapError(f"junta 大小 m={m} 超過實體化上限 {limit}")
    if m < 1 or len(set(index.tolist())) != m:
        raise ParameterError("junta 座標必須非空且互異")
    if index.min() < 0 or index.max() >= dim:
        raise DimensionError(f"座標索引超出 [0, {dim})")
    if theta < 0:
        raise ParameterError(f"門檻必須 ≥ 0，收到 {theta}")
    patterns = 1.0 - 2.0 * ((np.arange(2 ** m)[:, None] >> np.arange(m)) & 1)
    normals = np.zeros((2 ** m, dim))
    normals[:, index] = patterns
    return Polytope(dim, normals, np.full(2 ** m, float(theta)))


def intersect(bodies: Sequence[Body]) -> Body:
    """
    物體交集；全為多面體時串接面列表

    Args:
        bodies: 同維度物體列表
    """
    items = list(bodies)
    if not items:
        raise ParameterError("交集至少需要一個物體")
    dim = items[0].dim
    for body in items:
        if body.dim != dim:
            raise DimensionError(f"維度不符: {dim} vs {body.dim}")
    if len(items) == 1:
        return items[0]
    if all(isinstance(b, Polytope) for b in items):
        result = items[0]
        for other in items[1:]:
            result = result.intersect(other)
        return result
    return IntersectionBody(items)


def symmetric_slab(v: Sequence[float], theta: float) -> Polytope:
    """對稱平板 {x : |⟨x, v⟩| ≤ θ}（兩個面）"""
    if theta < 0:
        raise ParameterError(f"平板寬度必須 ≥ 0，收到 {theta}")
    direction = _unit(v)
    return Polytope(direction.size, np.vstack([direction, -direction]), [theta, theta])


# ============ 多面體檔案 ============

def load_polytope(path: Union[str, Path]) -> Polytope:
    """
    讀取多面體 JSON 檔 {"dim": n, "halfspaces": [{"v": [...], "theta": t}]}
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ParameterError(f"無法讀取多面體檔案 {path}: {e}") from e
    polytope = Polytope.from_dict(data)
    logger.info(f"📂 載入多面體 {path}：dim={polytope.dim}，{polytope.facet_count()} 個面")
    return polytope


def save_polytope(polytope: Polytope, path: Union[str, Path]) -> None:
    """以原始（未正規化）數值存檔，讀回後逐值相等"""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(polytope.to_dict(), f, ensure_ascii=False)
    logger.info(f"💾 多面體已儲存: {path}")
