"""
cranmarket FastAPI 主应用
"""
from contextlib import asynccontextmanager
import logging
import time

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from app.config import settings
from app.errors import MarketError
from app.services.metrics_collector import MetricsCollector

# 配置日志
logging.basicConfig(
    level=logging.DEBUG if settings.DEBUG else settings.LOG_LEVEL,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

DESCRIPTION = "CRAN 天线与频谱联合拍卖模拟器"


@asynccontextmanager
async def lifespan(app: FastAPI):
    """应用生命周期管理"""
    logger.info(f"🚀 {settings.APP_NAME} {settings.APP_VERSION} 启动")
    yield
    logger.info(f"👋 {settings.APP_NAME} 关闭")


# 创建应用
app = FastAPI(
    title=settings.APP_NAME,
    version=settings.APP_VERSION,
    description=DESCRIPTION,
    lifespan=lifespan
)


@app.middleware("http")
async def metrics_middleware(request: Request, call_next):
    start = time.time()
    response = await call_next(request)
    duration_ms = (time.time() - start) * 1000
    # Only track API routes
    if request.url.path.startswith("/api/"):
        MetricsCollector().record_api(
            path=request.url.path,
            method=request.method,
            status_code=response.status_code,
            duration_ms=duration_ms,
        )
    return response


@app.exception_handler(MarketError)
async def market_error_handler(request: Request, exc: MarketError):
    logger.warning(f"{request.method} {request.url.path}: {exc}")
    return JSONResponse(status_code=400, content={"detail": str(exc)})


# 注册路由
from app.api.v1 import auctions
app.include_router(auctions.router, prefix="/api/v1")


@app.get("/")
async def root():
    """根路径"""
    return {
        "name": settings.APP_NAME,
        "version": settings.APP_VERSION,
        "description": DESCRIPTION,
        "status": "running"
    }


@app.get("/api/v1/version")
async def version():
    """版本信息"""
    from importlib.metadata import version as pkg_version
    versions = {"app": settings.APP_VERSION}
    for pkg in ("numpy", "pandas"):
        try:
            versions[pkg] = pkg_version(pkg)
        except Exception:
            versions[pkg] = "unknown"
    return versions


@app.get("/health")
async def health():
    """健康检查"""
    return {"status": "healthy"}


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(
        "app.main:app",
        host="0.0.0.0",
        port=8000,
        reload=settings.DEBUG
    )
