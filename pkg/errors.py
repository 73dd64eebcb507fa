"""
工作台例外階層
每個例外帶有 CLI 結束碼：2 參數錯誤、3 估計器拒絕、4 驗收失敗
"""
from typing import Any, Dict, Optional


class WorkbenchError(Exception):
    """所有工作台錯誤的基底類別"""
    exit_code = 1


class ParameterError(WorkbenchError, ValueError):
    """參數或前置條件錯誤"""
    exit_code = 2


class DimensionError(ParameterError):
    """維度不符或維度為 0"""


class DomainError(ParameterError):
    """引數超出函數定義域"""


class UnsupportedDimensionError(ParameterError):
    """確定性球面網格只支援 n ≤ 3"""


class NormalizationError(ParameterError):
    """常數母體無法標準化"""


class SpecParseError(ParameterError):
    """物體描述字串解析失敗"""

    def __init__(self, message: str, position: int = 0):
        super().__init__(f"{message}（位置 {position}）")
        self.position = position
        self.message = message


class ExportError(ParameterError):
    """CSV 匯出欄位無法解析"""

    def __init__(self, message: str, record_index: int):
        super().__init__(f"{message}（記錄 {record_index}）")
        self.record_index = record_index


class RefusalError(WorkbenchError):
    """估計器或建構器拒絕執行"""
    exit_code = 3


class BudgetError(RefusalError):
    """超過面數或多重指標預算"""


class CapError(RefusalError):
    """超過 junta 實體化上限"""


class CapabilityError(RefusalError):
    """物體缺少所需能力（例如支撐函數）"""


class SolverError(RefusalError):
    """數值求解失敗"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class AcceptanceFailure(WorkbenchError):
    """驗收套件未通過"""
    exit_code = 4
