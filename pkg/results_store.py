"""
實驗結果儲存模組
負責 JSONL 結果檔的初始化、附加、查詢與 CSV 匯出
"""
import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import config
from errors import ExportError, ParameterError

logger = logging.getLogger(__name__)

RESULTS_PATH = config.RESULTS_PATH

PathLike = Union[str, Path]


def _resolve(path: Optional[PathLike]) -> Path:
    return Path(path if path is not None else RESULTS_PATH)


def init_store(path: Optional[PathLike] = None) -> Path:
    """初始化結果檔：建立上層資料夾與空檔案（若不存在）"""
    target = _resolve(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    if not target.exists():
        target.touch()
        logger.info(f"✅ 結果檔 {target} 初始化完成")
    return target


def insert_record(record: Dict[str, Any], path: Optional[PathLike] = None) -> int:
    """
    附加一筆結果記錄

    Args:
        record: 可 JSON 序列化的記錄字典
        path: 結果檔路徑（預設 RESULTS_PATH）

    Returns:
        新記錄的行索引（從 0 起算）
    """
    target = init_store(path)
    index = sum(1 for line in target.read_text(encoding="utf-8").splitlines() if line.strip())
    with open(target, "a", encoding="utf-8") as f:
        f.write(json.dumps(record, ensure_ascii=False) + "\n")
    logger.debug(f"💾 新增記錄 #{index}: {record.get('experiment')}")
    return index


def get_all_records(path: Optional[PathLike] = None) -> List[Dict[str, Any]]:
    """
    依檔案順序讀取所有記錄

    Returns:
        記錄列表；結果檔不存在時回傳空列表
    """
    target = _resolve(path)
    if not target.exists():
        return []
    records = []
    with open(target, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ParameterError(f"結果檔 {target} 第 {number} 行不是合法 JSON: {e}") from e
    return records


def get_records_by_experiment(experiment: str, path: Optional[PathLike] = None) -> List[Dict[str, Any]]:
    """查詢指定實驗名稱的記錄"""
    return [r for r in get_all_records(path) if r.get("experiment") == experiment]


def get_experiment_stats(path: Optional[PathLike] = None) -> Dict[str, int]:
    """
    取得每個實驗的記錄數統計

    Returns:
        例如 {'volume': 3, 'influence': 1}，依數量遞減排列
    """
    counts: Dict[str, int] = {}
    for record in get_all_records(path):
        name = record.get("experiment", "unknown")
        counts[name] = counts.get(name, 0) + 1
    return dict(sorted(counts.items(), key=lambda item: (-item[1], item[0])))


_MISSING = object()


def resolve_column(record: Any, column: str) -> Any:
    """以點號路徑取值，例如 estimates.volume.value；列表以數字索引"""
    value = record
    for part in column.split("."):
        if isinstance(value, dict) and part in value:
            value = value[part]
        elif isinstance(value, list) and part.isdigit() and int(part) < len(value):
            value = value[int(part)]
        else:
            return _MISSING
    return value


def format_cell(value: Any) -> str:
    """浮點數以 17 位有效數字輸出"""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, (dict, list)):
        return json.dumps(value, ensure_ascii=False)
    if value is None:
        return ""
    return str(value)


def export_csv(jsonl_path: PathLike, columns: Sequence[str], out_path: PathLike) -> int:
    """
    將 JSONL 記錄匯出為 RFC-4180 CSV

    Args:
        jsonl_path: 結果檔
        columns: 點號路徑欄位列表
        out_path: 輸出 CSV 路徑

    Returns:
        資料列數（不含標頭）
    """
    if not columns:
        raise ParameterError("至少需要一個欄位")
    if not Path(jsonl_path).exists():
        raise ParameterError(f"結果檔不存在: {jsonl_path}")
    rows = []
    for index, record in enumerate(get_all_records(jsonl_path)):
        row = []
        for column in columns:
            value = resolve_column(record, column)
            if value is _MISSING:
                raise ExportError(f"欄位 {column} 無法解析", index)
            row.append(format_cell(value))
        rows.append(row)
    with open(out_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\r\n")
        writer.writerow(list(columns))
        writer.writerows(rows)
    logger.info(f"✅ 匯出 {len(rows)} 列到 {out_path}")
    return len(rows)


if __name__ == "__main__":
    init_store()
