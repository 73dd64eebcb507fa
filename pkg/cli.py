"""
高斯測度工作台命令列介面

    python cli.py volume --body "l2ball:n=10,r=auto" --seed 1 --samples 1000000
    python cli.py build nazarov --n 8 --s 1024 --body "l2ball:n=8,r=auto" --seed 3
    python cli.py export --input results.jsonl --columns experiment,estimates.volume.value --csv out.csv
    python cli.py accept --tier fast

結束碼：0 成功、2 參數或解析錯誤、3 估計器拒絕、4 驗收失敗
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

import config
import results_store
from acceptance import CRITERIA, TIERS, AcceptanceTolerances, run_acceptance_suite
from errors import AcceptanceFailure, ParameterError, WorkbenchError
from experiments import ExperimentConfig, run_experiment

logger = logging.getLogger(__name__)

# 頂層欄位；其餘旗標都放進 options
_TOP_LEVEL = ("seed", "samples", "threads", "out")
_CLI_ONLY = ("command", "config", "log_level")

S = argparse.SUPPRESS


def _global_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=S, help="u64 種子（必填，可由 --config 提供）")
    common.add_argument("--samples", type=int, default=S, help="探針或試驗數")
    common.add_argument("--threads", type=int, default=S, help="執行緒數（不影響結果）")
    common.add_argument("--out", default=S, help="JSONL 結果檔（附加寫入）")
    common.add_argument("--config", default=S, help="JSON 設定檔；旗標優先")
    common.add_argument("--log-level", dest="log_level", default=S)
    return common


def _floats(text: str) -> List[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> List[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="workbench", description="高斯測度下凸體的多面體近似與蒙地卡羅驗證")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[common], help=help_text, argument_default=S)

    p = add("volume", "估計高斯體積")
    p.add_argument("--body")

    p = add("distance", "估計兩物體的高斯距離（共同亂數）")
    p.add_argument("--a")
    p.add_argument("--b")

    p = add("influence", "總影響或方向影響")
    p.add_argument("--body")
    p.add_argument("--method", choices=["direct", "dilation", "hermite"])
    p.add_argument("--direction", help="單位向量，例如 e1 或 0.6;0.8")
    p.add_argument("--delta-step", dest="delta_step", type=float)
    p.add_argument("--richardson", action="store_true")

    p = add("gns", "高斯雜訊敏感度")
    p.add_argument("--body")
    p.add_argument("--rho", type=float)

    p = add("stability", "高斯雜訊穩定度")
    p.add_argument("--body")
    p.add_argument("--rho-corr", dest="rho_corr", type=float)

    p = add("zoom", "隨機 zoom 變異數分佈")
    p.add_argument("--body")
    p.add_argument("--lam", type=float)
    p.add_argument("--anchors", type=int)
    p.add_argument("--inner", type=int)

    p = add("zoom-collapse", "zoom 崩塌曲線")
    p.add_argument("--body")
    p.add_argument("--lambdas", type=_floats, help="逗號分隔")
    p.add_argument("--thresholds", type=_floats, help="逗號分隔")
    p.add_argument("--anchors", type=int)
    p.add_argument("--inner", type=int)

    p = add("build", "建構近似多面體")
    p.add_argument("kind", nargs="?", default=None, help="nazarov | junta | tangent | l1-polytope")
    for flag, kind in (("--n", int), ("--eps", float), ("--delta", float), ("--p", float),
                       ("--s", int), ("--evaluations", int), ("--theta", float),
                       ("--c2", float), ("--c3", float)):
        p.add_argument(flag, type=kind)
    p.add_argument("--body")
    p.add_argument("--theta-star", dest="theta_star", type=float)
    p.add_argument("--direction-mode", dest="direction_mode",
                   choices=["deterministic_net", "random_directions"])
    p.add_argument("--direction-budget", dest="direction_budget", type=int)
    p.add_argument("--indices", type=_ints, help="0 起算、逗號分隔")
    p.add_argument("--c-l1", dest="c_l1", type=float)
    p.add_argument("--c-t", dest="c_t", type=float)
    p.add_argument("--materialize", action="store_true")
    p.add_argument("--save", help="多面體 JSON 輸出路徑")

    p = add("bounds", "面數上界")
    p.add_argument("kind", nargs="?", default=None, help="universal | relative | bronstein")
    p.add_argument("--n", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--constant", type=float)

    p = add("verify", "不等式與恆等式驗證")
    p.add_argument("kind", nargs="?", default=None, help="tails | hrw | petrov | boppana | hermite | identities")
    p.add_argument("--body")
    p.add_argument("--p", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--population-size", dest="population_size", type=int)
    p.add_argument("--grid", type=_floats)
    p.add_argument("--max-degree", dest="max_degree", type=int)
    p.add_argument("--anchors", type=int)
    p.add_argument("--inner", type=int)
    p.add_argument("--hazard-constant", dest="hazard_constant", type=float)

    p = add("hermite-project", "低次 Hermite 投影")
    p.add_argument("--body")
    p.add_argument("--degree", type=int)
    p.add_argument("--method", choices=["mean", "least_squares"])

    p = sub.add_parser("export", help="JSONL 匯出為 CSV")
    p.add_argument("--input", default=None, help="JSONL 路徑（預設 WORKBENCH_RESULTS_PATH）")
    p.add_argument("--columns", required=True, help="逗號分隔的點號路徑")
    p.add_argument("--csv", required=True, help="輸出 CSV 路徑")
    p.add_argument("--log-level", dest="log_level", default=None)

    p = sub.add_parser("accept", help="執行驗收套件")
    p.add_argument("--tier", choices=sorted(TIERS), default="fast")
    p.add_argument("--only", type=lambda t: [x for x in t.split(",") if x],
                   help=f"逗號分隔，可選 {', '.join(name for name, _ in CRITERIA)}")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--report", default=None, help="報告 JSON 輸出路徑")
    p.add_argument("--log-level", dest="log_level", default=None)
    return parser


def _load_config_file(path: str) -> Dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ParameterError(f"無法讀取設定檔 {path}: {e}") from e
    if not isinstance(data, dict):
        raise ParameterError(f"設定檔 {path} 必須是 JSON 物件")
    return data


def experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    """
    合併 --config 檔案與命令列旗標（旗標優先）

    Args:
        args: parse_args 結果（未給的旗標不在 namespace 中）

    Returns:
        ExperimentConfig
    """
    given = vars(args)
    merged: Dict[str, Any] = _load_config_file(given["config"]) if "config" in given else {}
    if merged.get("command", args.command) != args.command:
        raise ParameterError(f"設定檔的 command={merged['command']} 與子命令 {args.command} 不符")
    merged["command"] = args.command
    options = dict(merged.get("options") or {})
    for key, value in given.items():
        if key in _CLI_ONLY or value is None:
            continue
        if key in _TOP_LEVEL:
            merged[key] = value
        else:
            options[key] = value
    merged["options"] = options
    if "seed" not in merged:
        raise ParameterError("必須以 --seed 或設定檔提供種子")
    if merged.get("threads") is None:
        merged["threads"] = config.DEFAULT_THREADS
    return ExperimentConfig.model_validate(merged)


def _run_export(args: argparse.Namespace) -> int:
    columns = [c.strip() for c in args.columns.split(",") if c.strip()]
    rows = results_store.export_csv(args.input or results_store.RESULTS_PATH, columns, args.csv)
    print(f"✅ 匯出 {rows} 列到 {args.csv}")
    return 0


def _run_accept(args: argparse.Namespace) -> int:
    report = run_acceptance_suite(args.tier, args.only, AcceptanceTolerances(), args.threads)
    for entry in report.entries:
        icon = {"pass": "✅", "outside_regime": "⚠️"}.get(entry.status, "❌")
        print(f"{icon} [{entry.index:2d}] {entry.name}: {entry.status}（{entry.seconds:.1f} 秒）")
    if args.report:
        Path(args.report).write_text(report.model_dump_json(indent=2), encoding="utf-8")
        print(f"💾 報告已寫入 {args.report}")
    if not report.passed:
        failed = [e.name for e in report.entries if e.status != "pass"]
        raise AcceptanceFailure(f"驗收失敗: {', '.join(failed)}")
    print(f"✅ 驗收通過（{len(report.entries)} 項）")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """命令列進入點，回傳結束碼"""
    args = build_parser().parse_args(argv)
    config.configure_logging(getattr(args, "log_level", None))
    try:
        if args.command == "export":
            return _run_export(args)
        if args.command == "accept":
            return _run_accept(args)
        run_experiment(experiment_config(args))
        return 0
    except ValidationError as e:
        print(f"❌ 參數錯誤: {e}", file=sys.stderr)
        return ParameterError.exit_code
    except WorkbenchError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
