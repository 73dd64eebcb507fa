"""
高斯測度工作台 FastAPI 後端主程式
提供實驗執行、結果查詢、面數上界與多面體檢查 API
"""
import json
import logging
from typing import Optional

from fastapi import FastAPI, File, HTTPException, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.encoders import jsonable_encoder
from fastapi.responses import JSONResponse

import config
import results_store
from bodies import Polytope
from errors import ParameterError, RefusalError
from experiments import ExperimentConfig, run_experiment

logger = logging.getLogger(__name__)

# 初始化 FastAPI 應用程式
app = FastAPI(
    title="Gaussian Workbench API",
    description="高斯測度下凸體的多面體近似與蒙地卡羅驗證工作台",
    version=config.TOOL_VERSION
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.exception_handler(RequestValidationError)
async def validation_error_handler(request: Request, exc: RequestValidationError):
    """請求格式錯誤與 ParameterError 同樣回傳 400"""
    logger.error(f"❌ 請求格式錯誤: {exc.errors()}")
    return JSONResponse(status_code=400, content={"detail": jsonable_encoder(exc.errors())})


def _http_error(e: Exception, action: str) -> HTTPException:
    """ParameterError → 400，RefusalError → 422，其他 → 500"""
    if isinstance(e, ParameterError):
        status = 400
    elif isinstance(e, RefusalError):
        status = 422
    else:
        status = 500
    logger.error(f"❌ {action}失敗: {e}")
    return HTTPException(status_code=status, detail=f"{action}失敗: {str(e)}")


# ============ API 端點 ============

@app.get("/")
async def index():
    """服務資訊"""
    return JSONResponse(content={
        "success": True,
        "name": app.title,
        "version": config.TOOL_VERSION,
    })


@app.post("/api/experiments")
def create_experiment(request: ExperimentConfig):
    """
    執行一次實驗並儲存結果

    請求內容與 CLI 的 --config 檔案相同
    """
    try:
        records = run_experiment(request)
        data = [r.model_dump() for r in records]
        return JSONResponse(content={
            "success": True,
            "count": len(data),
            "data": data
        })
    except Exception as e:
        raise _http_error(e, "實驗執行")


@app.get("/api/records")
async def list_records(experiment: Optional[str] = None):
    """
    取得所有結果記錄，或依實驗名稱篩選

    Args:
        experiment: 選填，實驗名稱（例如 "volume"）
    """
    try:
        if experiment:
            records = results_store.get_records_by_experiment(experiment)
        else:
            records = results_store.get_all_records()
        return JSONResponse(content={
            "success": True,
            "count": len(records),
            "data": records
        })
    except Exception as e:
        raise _http_error(e, "查詢")


@app.get("/api/records/stats")
async def record_stats():
    """每個實驗的記錄數"""
    try:
        stats = results_store.get_experiment_stats()
        return JSONResponse(content={
            "success": True,
            "count": sum(stats.values()),
            "data": stats
        })
    except Exception as e:
        raise _http_error(e, "統計查詢")


@app.get("/api/bounds/{kind}")
async def facet_bound(kind: str, n: int, eps: float, delta: Optional[float] = None,
                      constant: float = 1.0):
    """
    面數上界計算（universal、relative、bronstein），不寫入結果檔

    Args:
        kind: 上界種類
        n: 維度
        eps: 精度
        delta: relative 上界需要的體積估計
    """
    options = {"kind": kind, "n": n, "eps": eps, "constant": constant}
    if delta is not None:
        options["delta"] = delta
    try:
        cfg = ExperimentConfig(command="bounds", seed=0, samples=1, options=options)
        record = run_experiment(cfg, persist=False)[0]
        return JSONResponse(content={
            "success": True,
            "data": {"kind": kind, "n": n, "eps": eps, "delta": delta, **record.estimates}
        })
    except Exception as e:
        raise _http_error(e, "上界計算")


@app.post("/api/polytopes/inspect")
async def inspect_polytope(file: UploadFile = File(...)):
    """
    上傳多面體 JSON 檔並回傳維度、面數與是否含原點
    """
    try:
        raw = await file.read()
        try:
            data = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ParameterError(f"不是合法的多面體 JSON: {e}") from e
        polytope = Polytope.from_dict(data)
        logger.info(f"📂 檢查多面體 {file.filename}：dim={polytope.dim}，{polytope.facet_count()} 個面")
        return JSONResponse(content={
            "success": True,
            "data": {
                "filename": file.filename,
                "dim": polytope.dim,
                "facet_count": polytope.facet_count(),
                "contains_origin": polytope.contains_origin(),
            }
        })
    except Exception as e:
        raise _http_error(e, "多面體檢查")


if __name__ == "__main__":
    import uvicorn

    config.configure_logging()
    results_store.init_store()
    print("🚀 啟動高斯測度工作台 API 伺服器...")
    print(f"📍 API 文件: http://localhost:{config.API_PORT}/docs")
    uvicorn.run(app, host=config.API_HOST, port=config.API_PORT)
