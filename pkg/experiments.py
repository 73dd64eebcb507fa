"""
實驗編排模組
物體描述語言、實驗設定 schema、各子命令的估計管線，
以及結果記錄的產生與寫入
"""
import math
import time
import logging
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
from numpy.polynomial import hermite_e
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError

import config
import results_store
from bodies import (Body, FullSpace, Halfspace, LpBall, Polytope, canonical_bp, cube,
                    l1_junta_to_polytope, l2_ball, load_polytope, save_polytope, symmetric_slab)
from constructors import (DirectionMode, TangentConfig, empirical_theta, fc_bound_bronstein,
                          fc_bound_relative, fc_bound_universal, sample_junta_intersection,
                          sample_nazarov, solve_junta_params, solve_nazarov_params,
                          tangent_approximator, tune_nazarov_w)
from errors import ParameterError, SpecParseError
from estimators import (HermiteExpansion, berry_esseen_check, boppana_check, estimate_directional_influence,
                        estimate_distance, estimate_gns, estimate_hermite_coeff,
                        estimate_influence_dilation, estimate_influence_hermite, estimate_stability,
                        estimate_total_influence, estimate_two_point, estimate_volume,
                        gns_from_stability, iid_tail_check, iid_tail_exact_chi2, l2_error,
                        low_degree_projection, multi_indices, stability_from_coeffs,
                        tail_ratio_without_replacement, zoom_collapse_curve, zoom_variance_profile)
from gaussian_core import (HAZARD_CONSTANT, Estimate, RandomStream, check_chi2_lower_tail_bound,
                           check_chi2_tail_bound, check_gaussian_tail_bound, check_hazard_fact,
                           hermite_table)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


# ============ 物體描述語言 ============
#
#   spec  := kind ":" item ("," item)*
#   item  := key "=" value
#   value := number | "auto" | "e" digits | number (";" number)* | path
#

BODY_KEYS: Dict[str, Tuple[str, ...]] = {
    "l2ball": ("n", "r"),
    "lpball": ("n", "p", "budget"),
    "halfspace": ("n", "v", "theta"),
    "slab": ("n", "v", "theta"),
    "polytope_file": ("path",),
    "nazarov": ("n", "w", "s", "seed"),
    "junta": ("n", "p", "M", "m", "theta", "seed"),
    "cube": ("n", "r"),
    "full": ("n",),
}

# theta=auto 時 empirical_theta 使用的樣本數
_AUTO_THETA_SAMPLES = 200_000


class BodySpec(BaseModel):
    """解析後的物體描述：種類與原始字串參數（保留輸入順序）"""
    kind: str
    params: Dict[str, str]
    text: str = ""
    _offsets: Dict[str, int] = PrivateAttr(default_factory=dict)

    def render(self) -> str:
        return f"{self.kind}:" + ",".join(f"{k}={v}" for k, v in self.params.items())

    def _fail(self, message: str, key: str) -> SpecParseError:
        return SpecParseError(f"{message}: {self.text}", self._offsets.get(key, 0))

    def number(self, key: str) -> float:
        try:
            return float(self.params[key])
        except ValueError:
            raise self._fail(f"{key} 不是合法數字 '{self.params[key]}'", key) from None

    def integer(self, key: str) -> int:
        raw = self.params[key]
        try:
            return int(raw)
        except ValueError:
            raise self._fail(f"{key} 不是合法整數 '{raw}'", key) from None

    def vector(self, key: str, n: int) -> np.ndarray:
        try:
            return parse_vector(self.params[key], n)
        except SpecParseError as e:
            raise self._fail(e.message, key) from None


def parse_vector(raw: str, n: int) -> np.ndarray:
    """'1;0;2' 或座標簡寫 'e3'（從 1 起算）"""
    text = raw.strip()
    if text.startswith("e") and text[1:].isdigit():
        index = int(text[1:])
        if not 1 <= index <= n:
            raise SpecParseError(f"座標方向 {text} 超出 1..{n}", 0)
        out = np.zeros(n)
        out[index - 1] = 1.0
        return out
    try:
        values = np.array([float(part) for part in text.split(";")])
    except ValueError:
        raise SpecParseError(f"不是合法向量 '{text}'", 0) from None
    if values.size != n:
        raise SpecParseError(f"向量長度 {values.size} 與 n={n} 不符", 0)
    return values


def parse_body_spec(text: str) -> BodySpec:
    """
    解析物體描述字串，例如 "l2ball:n=10,r=auto"

    Raises:
        SpecParseError: 未知種類、缺少或多餘的鍵、格式錯誤（附字元位置）
    """
    source = text.strip()
    colon = source.find(":")
    if colon < 0:
        raise SpecParseError(f"缺少 ':' 分隔種類與參數: {source}", len(source))
    kind = source[:colon]
    if kind not in BODY_KEYS:
        raise SpecParseError(f"未知的物體種類 '{kind}'", 0)
    params: Dict[str, str] = {}
    offsets: Dict[str, int] = {}
    position = colon + 1
    for item in source[colon + 1:].split(","):
        if "=" not in item:
            raise SpecParseError(f"參數 '{item}' 缺少 '='", position)
        key, value = (part.strip() for part in item.split("=", 1))
        if key not in BODY_KEYS[kind]:
            raise SpecParseError(f"{kind} 不接受參數 '{key}'", position)
        if key in params:
            raise SpecParseError(f"參數 '{key}' 重複", position)
        if not value:
            raise SpecParseError(f"參數 '{key}' 沒有值", position + len(item))
        params[key] = value
        offsets[key] = position + item.index("=") + 1
        position += len(item) + 1
    missing = [k for k in BODY_KEYS[kind] if k not in params]
    if missing:
        raise SpecParseError(f"{kind} 缺少必要參數 {missing}", len(source))
    spec = BodySpec(kind=kind, params=params, text=source)
    spec._offsets = offsets
    return spec


def build_body(spec: BodySpec) -> Body:
    """
    依描述建構物體；隨機種類以 seed 參數建立亂數串流

    Args:
        spec: BodySpec

    Returns:
        Body
    """
    kind = spec.kind
    if kind == "polytope_file":
        return load_polytope(spec.params["path"])
    n = spec.integer("n")
    if n < 1:
        raise spec._fail("n 必須 ≥ 1", "n")
    if kind == "full":
        return FullSpace(n)
    if kind == "l2ball":
        r = math.sqrt(n) if spec.params["r"] == "auto" else spec.number("r")
        return l2_ball(n, r)
    if kind == "cube":
        return cube(n, spec.number("r"))
    if kind == "lpball":
        p = spec.number("p")
        if spec.params["budget"] == "auto":
            return canonical_bp(n, p)
        return LpBall(n, p, spec.number("budget"))
    if kind == "halfspace":
        return Halfspace(spec.vector("v", n), spec.number("theta"))
    if kind == "slab":
        return symmetric_slab(spec.vector("v", n), spec.number("theta"))

    seed = spec.integer("seed")
    if not 0 <= seed < 2 ** 64:
        raise spec._fail("seed 必須在 [0, 2^64)", "seed")
    stream = RandomStream(seed=seed)
    if kind == "nazarov":
        return sample_nazarov(n, spec.number("w"), spec.integer("s"), stream)
    p, M, m = spec.number("p"), spec.integer("M"), spec.integer("m")
    if spec.params["theta"] == "auto":
        target = 1.0 - 1.0 / (2.0 * M)
        theta = empirical_theta(n, p, m, target, _AUTO_THETA_SAMPLES, stream)
    else:
        theta = spec.number("theta")
    return sample_junta_intersection(n, p, M, m, theta, stream)


def body_from_text(text: str) -> Body:
    return build_body(parse_body_spec(text))


# ============ 結果記錄 ============

class ResultRecord(BaseModel):
    """JSONL 的一筆結果"""
    v: int = SCHEMA_VERSION
    experiment: str
    params: Dict[str, Any]
    estimates: Dict[str, Any]
    seed: int
    tool_version: str = config.TOOL_VERSION
    wall_time_ms: int = 0


# ============ 子命令選項 ============

class _Options(BaseModel):
    model_config = ConfigDict(extra="forbid")


class VolumeOptions(_Options):
    body: str


class DistanceOptions(_Options):
    a: str
    b: str


class InfluenceOptions(_Options):
    body: str
    method: Literal["direct", "dilation", "hermite"] = "direct"
    direction: Optional[str] = None
    delta_step: float = Field(default=0.01, gt=0.0, le=0.2)
    richardson: bool = False


class GnsOptions(_Options):
    body: str
    rho: float = Field(ge=0.0, le=0.5)


class StabilityOptions(_Options):
    body: str
    rho_corr: float = Field(ge=-1.0, le=1.0)


class ZoomOptions(_Options):
    body: str
    lam: float = Field(ge=0.0, le=1.0)
    anchors: int = Field(default=200, ge=2)
    inner: int = Field(default=200, ge=2)


class ZoomCollapseOptions(_Options):
    body: str
    lambdas: List[float] = [0.5, 0.2, 0.05]
    thresholds: List[float] = [0.5]
    anchors: int = Field(default=200, ge=2)
    inner: int = Field(default=200, ge=2)


class BuildOptions(_Options):
    kind: Literal["nazarov", "junta", "tangent", "l1-polytope"]
    n: Optional[int] = Field(default=None, ge=1)
    eps: Optional[float] = None
    delta: Optional[float] = None
    p: float = 1.0
    body: Optional[str] = None
    s: Optional[int] = Field(default=None, ge=1)
    evaluations: int = Field(default=20, ge=1)
    theta_star: Optional[float] = None
    direction_mode: DirectionMode = "deterministic_net"
    direction_budget: int = Field(default=4096, ge=1)
    indices: Optional[List[int]] = None
    theta: Optional[float] = None
    c2: float = 1.0
    c3: float = 1.0
    c_l1: float = 1.0
    c_t: float = 1.0
    materialize: bool = False
    save: Optional[str] = None


class BoundsOptions(_Options):
    kind: Literal["universal", "relative", "bronstein"]
    n: int = Field(ge=1)
    eps: float
    delta: Optional[float] = None
    constant: float = 1.0


class VerifyOptions(_Options):
    kind: Literal["tails", "hrw", "petrov", "boppana", "hermite", "identities"]
    body: Optional[str] = None
    p: float = 2.0
    m: int = Field(default=400, ge=1)
    population_size: int = Field(default=2000, ge=2)
    grid: List[float] = [0.5, 1.0, 2.0]
    max_degree: int = Field(default=8, ge=0)
    anchors: int = Field(default=2000, ge=2)
    inner: int = Field(default=2000, ge=2)
    hazard_constant: float = HAZARD_CONSTANT


class HermiteProjectOptions(_Options):
    body: str
    degree: int = Field(default=2, ge=0)
    method: Literal["mean", "least_squares"] = "mean"


OPTIONS_MODELS = {
    "volume": VolumeOptions,
    "distance": DistanceOptions,
    "influence": InfluenceOptions,
    "gns": GnsOptions,
    "stability": StabilityOptions,
    "zoom": ZoomOptions,
    "zoom-collapse": ZoomCollapseOptions,
    "build": BuildOptions,
    "bounds": BoundsOptions,
    "verify": VerifyOptions,
    "hermite-project": HermiteProjectOptions,
}

Command = Literal["volume", "distance", "influence", "gns", "stability", "zoom", "zoom-collapse",
                  "build", "bounds", "verify", "hermite-project"]


class ExperimentConfig(BaseModel):
    """一次實驗的完整設定（CLI 旗標、--config 檔案與 HTTP 請求共用）"""
    model_config = ConfigDict(extra="forbid")

    command: Command
    seed: int = Field(ge=0, lt=2 ** 64)
    samples: int = Field(default=100_000, ge=1)
    threads: Optional[int] = Field(default=None, ge=1)
    out: Optional[str] = None
    options: Dict[str, Any] = Field(default_factory=dict)

    def resolved_options(self) -> _Options:
        try:
            return OPTIONS_MODELS[self.command].model_validate(self.options)
        except ValidationError as e:
            raise ParameterError(f"{self.command} 選項錯誤: {e}") from e


# ============ 分析驗證 ============

def inequality_grid(hazard_constant: float = HAZARD_CONSTANT) -> List[Dict[str, Any]]:
    """
    解析不等式網格（不需蒙地卡羅）：
    高斯尾部夾擠、χ² 上下尾、常態危險率

    Returns:
        每個檢查一筆 {name, args, values, holds}
    """
    checks = []
    for r in np.arange(0.5, 8.01, 0.5):
        lower, exact, upper = check_gaussian_tail_bound(float(r))
        checks.append({"name": "gaussian_tail", "args": {"r": float(r)},
                       "values": [lower, exact, upper], "holds": lower <= exact <= upper})
    for n in (10, 100):
        for t in (1.0, 5.0, 20.0):
            bound, exact = check_chi2_tail_bound(n, t)
            checks.append({"name": "chi2_upper_tail", "args": {"n": n, "t": t},
                           "values": [exact, bound], "holds": exact <= bound})
            bound, exact = check_chi2_lower_tail_bound(n, t)
            checks.append({"name": "chi2_lower_tail", "args": {"n": n, "t": t},
                           "values": [exact, bound], "holds": exact <= bound})
    for log_inv in np.arange(2.5, 7.01, 0.5):
        a = float(log_inv) + 1.0
        b = a - float(log_inv) / a
        eta = math.exp(-float(log_inv))
        ratio, bound = check_hazard_fact(a, b, eta, hazard_constant)
        checks.append({"name": "hazard", "args": {"a": a, "b": b, "eta": eta},
                       "values": [ratio, bound], "holds": ratio <= bound})
    return checks


def hermite_orthonormality_grid(max_degree: int) -> Dict[str, Any]:
    """以 Gauss–Hermite 求積計算 E[h_j h_k]，j, k ≤ max_degree，應為單位矩陣"""
    nodes, weights = hermite_e.hermegauss(max_degree + 1)
    weights = weights / math.sqrt(2.0 * math.pi)
    table = hermite_table(max_degree, nodes)
    gram = (table * weights[:, None]).T @ table
    error = float(np.abs(gram - np.eye(max_degree + 1)).max())
    return {"max_degree": max_degree, "max_abs_error": error, "holds": error <= 1e-10}


def identity_suite(samples: int, stream: RandomStream, threads: int = None,
                   anchors: int = 2000, inner: int = 2000, k_sigma: float = 3.0,
                   dilation_slack: float = 0.05) -> Dict[str, Dict[str, Any]]:
    """
    兩條路徑恆等式：
    (a) TInf 直接 vs 伸縮；(b) Inf_{e1} vs −√2·K̃(2e1)；
    (c) GNS_{0.2} vs 1/2 − Stab_{0.6}/2；(d) 平均 zoom 變異數 vs 2·GNS_{0.15}；
    (e) stability_from_coeffs vs 兩點函數

    Returns:
        {名稱: {lhs, rhs, agrees}}
    """
    streams = stream.split(10)
    ball16 = l2_ball(16, 4.0)
    ball8 = l2_ball(8, math.sqrt(8.0))
    results: Dict[str, Dict[str, Any]] = {}

    def record(name: str, lhs: Estimate, rhs: Any, rel_slack: float = 0.0) -> None:
        results[name] = {
            "lhs": lhs.as_record(),
            "rhs": rhs.as_record() if isinstance(rhs, Estimate) else float(rhs),
            "agrees": lhs.agrees_with(rhs, k_sigma, rel_slack),
        }

    direct = estimate_total_influence(ball16, samples, streams[0], threads)
    dilation = estimate_influence_dilation(ball16, 0.01, samples, streams[1], threads)
    record("tinf_direct_vs_dilation", direct, dilation, dilation_slack)

    e1 = np.eye(8)[0]
    directional = estimate_directional_influence(ball8, e1, samples, streams[2], threads)
    coeff = estimate_hermite_coeff(ball8, 2 * e1.astype(int), samples, streams[3], threads)
    record("influence_vs_hermite", directional, coeff.scaled(-math.sqrt(2.0)))

    gns = estimate_gns(ball16, 0.2, samples, streams[4], threads)
    stab = estimate_stability(ball16, 0.6, samples, streams[5], threads)
    record("gns_vs_stability", gns, gns_from_stability(stab))

    profile = zoom_variance_profile(ball16, 0.3, anchors, inner, streams[6], threads)
    gns_half = estimate_gns(ball16, 0.15, samples, streams[7], threads)
    record("zoom_variance_vs_gns", profile.mean_variance, gns_half.scaled(2.0))

    indices = multi_indices(4, 2)
    draws = streams[8].normals(len(indices)) / math.sqrt(len(indices))
    expansion = HermiteExpansion(4, dict(zip(indices, draws.tolist())))
    two_point = estimate_two_point(expansion, 0.4, samples, streams[9], threads)
    record("stability_coeffs_vs_two_point", two_point, stability_from_coeffs(expansion, 0.4))
    return results


# ============ 子命令管線 ============

Outcome = Tuple[str, Dict[str, Any], Dict[str, Any], str]


def _est(estimate: Estimate) -> Dict[str, Any]:
    return estimate.as_record()


def _summary(estimate: Estimate) -> str:
    return f"{estimate.value:.6g} ± {estimate.stderr:.2g} (n={estimate.n_samples})"


def _run_volume(opts: VolumeOptions, cfg: ExperimentConfig, stream: RandomStream) -> List[Outcome]:
    volume = estimate_volume(body_from_text(opts.body), cfg.samples, stream, cfg.threads)
    return [("volume", {}, {"volume": _est(volume)}, _summary(volume))]


def _run_distance(opts: DistanceOptions, cfg: ExperimentConfig, stream: RandomStream) -> List[Outcome]:
    distance = estimate_distance(body_from_text(opts.a), body_from_text(opts.b),
                                 cfg.samples, stream, cfg.threads)
    return [("distance", {}, {"distance": _est(distance)}, _summary(distance))]


def _run_influence(opts: InfluenceOptions, cfg: ExperimentConfig, stream: RandomStream) -> List[Outcome]:
    spec = parse_body_spec(opts.body)
    body = build_body(spec)
    if opts.direction is not None:
        v = parse_vector(opts.direction, body.dim)
        estimate = estimate_directional_influence(body, v / np.linalg.norm(v), cfg.samples,
                                                  stream, cfg.threads)
        name = "directional_influence"
    elif opts.method == "dilation":
        estimate = estimate_influence_dilation(body, opts.delta_step, cfg.samples, stream,
                                               cfg.threads, opts.richardson)
        name = "total_influence"
    elif opts.method == "hermite":
        estimate = estimate_influence_hermite(body, cfg.samples, stream, cfg.threads)
        name = "total_influence"
    else:
        estimate = estimate_total_influence(body, cfg.samples, stream, cfg.threads)
        name = "total_influence"
    return [("influence", {"dim": body.dim}, {name: _est(estimate)}, _summary(estimate))]


def _run_gns(opts: GnsOptions, cfg: ExperimentConfig, stream: RandomStream) -> List[Outcome]:
    gns = estimate_gns(body_from_text(opts.body), opts.rho, cfg.samples, stream, cfg.threads)
    return [("gns", {}, {"gns": _est(gns)}, _summary(gns))]


def _run_stability(opts: StabilityOptions, cfg: ExperimentConfig, stream: RandomStream) -> List[Outcome]:
    stab = estimate_stability(body_from_text(opts.body), opts.rho_corr, cfg.samples, stream, cfg.threads)
    return [("stability", {}, {"stability": _est(stab), "gns_derived": _est(gns_from_stability(stab))},
             _summary(stab))]


def _run_zoom(opts: ZoomOptions, cfg: ExperimentConfig, stream: RandomStream) -> List[Outcome]:
    profile = zoom_variance_profile(body_from_text(opts.body), opts.lam, opts.anchors,
                                    opts.inner, stream, cfg.threads)
    return [("zoom", {}, {"profile": profile.model_dump()}, _summary(profile.mean_variance))]


def _run_zoom_collapse(opts: ZoomCollapseOptions, cfg: ExperimentConfig,
                       stream: RandomStream) -> List[Outcome]:
    body = body_from_text(opts.body)
    if not isinstance(body, Polytope):
        raise ParameterError("zoom-collapse 需要多面體")
    curve = zoom_collapse_curve(body, opts.lambdas, opts.thresholds, opts.anchors, opts.inner,
                                stream, cfg.threads)
    return [("zoom-collapse", {}, {"curve": curve.model_dump()}, f"單調={curve.monotone}")]


def _require(value: Any, name: str, kind: str) -> Any:
    if value is None:
        raise ParameterError(f"build {kind} 需要 {name}")
    return value


def _save(polytope: Polytope, path: Optional[str]) -> None:
    if path:
        save_polytope(polytope, path)


def _run_build(opts: BuildOptions, cfg: ExperimentConfig, stream: RandomStream) -> List[Outcome]:
    kind = opts.kind
    if kind == "nazarov":
        if opts.body is not None and opts.s is not None:
            target = body_from_text(opts.body)
            fit = tune_nazarov_w(target, opts.s, stream, cfg.samples, opts.evaluations, cfg.threads)
            _save(fit.polytope, opts.save)
            return [("build", {"dim": target.dim},
                     {"w": fit.w, "distance": _est(fit.distance), "evaluations": fit.evaluations},
                     f"w={fit.w:.6g}, dist={_summary(fit.distance)}")]
        n = _require(opts.n, "n", kind)
        params = solve_nazarov_params(n, _require(opts.eps, "eps", kind))
        estimates: Dict[str, Any] = {"w": params.w, "log_s": params.log_s, "residual": params.residual}
        if opts.materialize:
            s = max(1, int(round(params.s_estimate)))
            polytope = sample_nazarov(n, params.w, s, stream)
            _save(polytope, opts.save)
            estimates["facets"] = polytope.facet_count()
        return [("build", {"solver": params.model_dump()}, estimates,
                 f"w={params.w:.6g}, log s={params.log_s:.6g}")]

    if kind == "junta":
        n = _require(opts.n, "n", kind)
        params = solve_junta_params(n, opts.p, _require(opts.eps, "eps", kind),
                                    opts.c2, opts.c3, opts.c_l1, opts.c_t)
        estimates = {"m": params.m, "theta": params.theta, "log_M": params.log_M, "M": params.M}
        if opts.materialize:
            if params.M is None:
                raise ParameterError(f"M = e^{params.log_M:.4g} 過大，無法實體化")
            junta = sample_junta_intersection(n, opts.p, params.M, params.m, params.theta, stream)
            target = canonical_bp(n, opts.p)
            estimates["distance"] = _est(estimate_distance(target, junta, cfg.samples, stream, cfg.threads))
        return [("build", {"solver": params.model_dump()}, estimates,
                 f"m={params.m}, θ={params.theta:.6g}, log M={params.log_M:.4g}")]

    if kind == "tangent":
        body = body_from_text(_require(opts.body, "body", kind))
        eps, delta = _require(opts.eps, "eps", kind), _require(opts.delta, "delta", kind)
        if opts.theta_star is None:
            tangent_config = TangentConfig.theoretical(body.dim, eps, delta, opts.direction_mode,
                                                       opts.direction_budget)
        else:
            tangent_config = TangentConfig.practical(eps, delta, opts.theta_star, opts.direction_mode,
                                                     opts.direction_budget)
        polytope = tangent_approximator(body, tangent_config, stream.split(1)[0])
        _save(polytope, opts.save)
        distance = estimate_distance(body, polytope, cfg.samples, stream, cfg.threads)
        return [("build", {"tangent": tangent_config.model_dump()},
                 {"facets": polytope.facet_count(), "distance": _est(distance)},
                 f"{polytope.facet_count()} 個面, dist={_summary(distance)}")]

    n = _require(opts.n, "n", kind)
    polytope = l1_junta_to_polytope(n, _require(opts.indices, "indices", kind),
                                    _require(opts.theta, "theta", kind))
    _save(polytope, opts.save)
    return [("build", {}, {"facets": polytope.facet_count()}, f"{polytope.facet_count()} 個面")]


def _run_bounds(opts: BoundsOptions, cfg: ExperimentConfig, stream: RandomStream) -> List[Outcome]:
    if opts.kind == "universal":
        value = fc_bound_universal(opts.n, opts.eps, opts.constant)
    elif opts.kind == "relative":
        if opts.delta is None:
            raise ParameterError("bounds relative 需要 delta")
        value = fc_bound_relative(opts.n, opts.eps, opts.delta, opts.constant)
    else:
        value = fc_bound_bronstein(opts.n, opts.eps)
    return [("bounds", {}, {"log_facets": value, "log2_facets": value / math.log(2.0)},
             f"ln FC ≤ {value:.6g}")]


def _population(stream: RandomStream, size: int) -> np.ndarray:
    """centered |g| 母體"""
    values = np.abs(stream.normals(size))
    return values - values.mean()


def _run_verify(opts: VerifyOptions, cfg: ExperimentConfig, stream: RandomStream) -> List[Outcome]:
    kind = opts.kind
    if kind == "tails":
        checks = inequality_grid(opts.hazard_constant)
        passed = sum(c["holds"] for c in checks)
        return [("verify", {}, {"checks": checks, "all_hold": passed == len(checks)},
                 f"{passed}/{len(checks)} 項成立")]
    if kind == "hermite":
        grid = hermite_orthonormality_grid(opts.max_degree)
        return [("verify", {}, grid, f"最大誤差 {grid['max_abs_error']:.3g}")]
    if kind == "hrw":
        population = _population(stream.split(1)[0], opts.population_size)
        profile = tail_ratio_without_replacement(population, opts.m, opts.grid, cfg.samples,
                                                 stream, cfg.threads)
        return [("verify", {}, {"profile": profile.model_dump()}, f"比值 {profile.ratios}")]
    if kind == "petrov":
        profile = iid_tail_check(opts.p, opts.m, opts.grid, cfg.samples, stream, cfg.threads)
        estimates: Dict[str, Any] = {"profile": profile.model_dump()}
        if opts.p == 2.0:
            estimates["exact"] = [iid_tail_exact_chi2(opts.m, z) for z in opts.grid]
        estimates["berry_esseen"] = berry_esseen_check(opts.p, opts.m, cfg.samples, stream,
                                                       cfg.threads).model_dump()
        return [("verify", {}, estimates, f"比值 {profile.ratios}")]
    if kind == "boppana":
        body = body_from_text(_require(opts.body, "body", "boppana"))
        if not isinstance(body, Polytope):
            raise ParameterError("verify boppana 需要多面體")
        check = boppana_check(body, cfg.samples, stream, cfg.threads)
        return [("verify", {}, check.model_dump(),
                 f"TInf={_summary(check.tinf)} vs 7 ln s={check.bound:.4g}")]
    results = identity_suite(cfg.samples, stream, cfg.threads, opts.anchors, opts.inner)
    agreed = sum(r["agrees"] for r in results.values())
    return [("verify", {}, {"identities": results}, f"{agreed}/{len(results)} 項一致")]


def _run_hermite_project(opts: HermiteProjectOptions, cfg: ExperimentConfig,
                         stream: RandomStream) -> List[Outcome]:
    body = body_from_text(opts.body)
    base = stream.split(1)[0]
    expansion = low_degree_projection(body, opts.degree, cfg.samples, base.clone(), cfg.threads,
                                      opts.method)
    error = l2_error(expansion, body, cfg.samples, base.clone(), cfg.threads)
    estimates: Dict[str, Any] = {"expansion": expansion.to_dict(), "l2_error": _est(error)}
    if expansion.estimates is not None:
        estimates["coefficients"] = {",".join(map(str, a)): _est(e)
                                     for a, e in expansion.estimates.items()}
    return [("hermite-project", {}, estimates, f"L² 誤差 {_summary(error)}")]


PIPELINES: Dict[str, Callable[..., List[Outcome]]] = {
    "volume": _run_volume,
    "distance": _run_distance,
    "influence": _run_influence,
    "gns": _run_gns,
    "stability": _run_stability,
    "zoom": _run_zoom,
    "zoom-collapse": _run_zoom_collapse,
    "build": _run_build,
    "bounds": _run_bounds,
    "verify": _run_verify,
    "hermite-project": _run_hermite_project,
}


def run_experiment(cfg: ExperimentConfig, persist: bool = True) -> List[ResultRecord]:
    """
    執行子命令管線，將記錄附加到 JSONL 並逐筆印出摘要

    Args:
        cfg: ExperimentConfig
        persist: 是否寫入結果檔（cfg.out 或 RESULTS_PATH）

    Returns:
        ResultRecord 列表
    """
    options = cfg.resolved_options()
    stream = RandomStream(seed=cfg.seed)
    start = time.perf_counter()
    outcomes = PIPELINES[cfg.command](options, cfg, stream)
    elapsed_ms = int(round((time.perf_counter() - start) * 1000))

    base_params = {
        "command": cfg.command,
        "samples": cfg.samples,
        "chunk_size": config.CHUNK_SIZE,
        "ci_level": config.CI_LEVEL,
        **options.model_dump(),
    }
    records = []
    for experiment, extra, estimates, summary in outcomes:
        record = ResultRecord(experiment=experiment, params={**base_params, **extra},
                              estimates=estimates, seed=cfg.seed, wall_time_ms=elapsed_ms)
        if persist:
            results_store.insert_record(record.model_dump(), cfg.out)
        print(f"✅ {experiment}: {summary}")
        records.append(record)
    return records
