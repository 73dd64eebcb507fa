"""
工作台設定模組
從環境變數（.env）讀取預設值，並提供日誌初始化
"""
import os
import logging

from dotenv import load_dotenv

# 載入 .env 檔案（若存在）
load_dotenv()

TOOL_VERSION = "1.0.0"

RESULTS_PATH = os.getenv("WORKBENCH_RESULTS_PATH", "results.jsonl")
CHUNK_SIZE = int(os.getenv("WORKBENCH_CHUNK_SIZE", "4096"))
DEFAULT_THREADS = int(os.getenv("WORKBENCH_THREADS", "1"))
CI_LEVEL = float(os.getenv("WORKBENCH_CI_LEVEL", "0.95"))
FACET_BUDGET = int(os.getenv("WORKBENCH_FACET_BUDGET", "2000000"))
JUNTA_CAP = int(os.getenv("WORKBENCH_JUNTA_CAP", "20"))
LOG_LEVEL = os.getenv("WORKBENCH_LOG_LEVEL", "INFO")

API_HOST = os.getenv("WORKBENCH_API_HOST", "0.0.0.0")
API_PORT = int(os.getenv("WORKBENCH_API_PORT", "8000"))

# Hermite 投影允許的多重指標數量上限
MULTI_INDEX_BUDGET = 100_000
# 單一 Hermite 係數允許的最高總次數
MAX_HERMITE_ORDER = 8


def configure_logging(level: str = None) -> None:
    """
    設定根日誌（只在 CLI / API 進入點呼叫）

    Args:
        level: 日誌等級名稱，預設取 WORKBENCH_LOG_LEVEL
    """
    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
