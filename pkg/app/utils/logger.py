"""
Aniso Logging System - 统一日志系统

Console logging on stderr for experiments, with an ExperimentLogger that
traces start, progress and verdict of every run.
"""
import logging
import re
import sys
import time
from typing import Any, Dict, Optional
from datetime import datetime
from pathlib import Path
from contextlib import contextmanager

from app.config import settings


# 终端颜色 (ANSI)
RESET = "\033[0m"
BOLD = "\033[1m"
CYAN = "\033[96m"
PALETTE = {
    logging.DEBUG: "\033[94m",
    logging.INFO: "\033[92m",
    logging.WARNING: "\033[93m",
    logging.ERROR: "\033[91m",
    logging.CRITICAL: "\033[91m",
}
VERDICT_COLORS = {
    "PASS": PALETTE[logging.INFO],
    "FAIL": PALETTE[logging.ERROR],
    "INCONCLUSIVE": PALETTE[logging.WARNING],
}
_VERDICT_RE = re.compile(r"\b(PASS|FAIL|INCONCLUSIVE)\b")


class AnisoFormatter(logging.Formatter):
    """自定义日志格式化器"""

    def __init__(self, use_color: bool = True, show_detail: bool = True):
        super().__init__()
        self.use_color = use_color
        self.show_detail = show_detail

    def _paint(self, text: str, code: str) -> str:
        return f"{code}{text}{RESET}" if self.use_color else text

    def format(self, record: logging.LogRecord) -> str:
        level_name = self._paint(record.levelname, PALETTE.get(record.levelno, ""))
        logger_name = self._paint(record.name, CYAN)
        message = record.getMessage()
        if self.use_color:
            message = _VERDICT_RE.sub(lambda m: self._paint(m.group(1), BOLD + VERDICT_COLORS[m.group(1)]), message)

        timestamp = datetime.fromtimestamp(record.created).strftime("%H:%M:%S")

        if self.show_detail:
            # 详细模式：显示模块和行号
            base_msg = (
                f"[{timestamp}] {level_name:8} {logger_name:12} "
                f"{record.module}:{record.lineno} | {message}"
            )
        else:
            base_msg = f"[{timestamp}] {level_name:8} {logger_name:12} | {message}"

        if record.exc_info:
            base_msg += f"\n{self.formatException(record.exc_info)}"

        return base_msg


class ExperimentLogger:
    """实验执行日志记录器"""

    def __init__(self, kind: str):
        self.kind = kind
        self.logger = logging.getLogger(f"experiment.{kind}")

    def log_start(self, digest: str, seed: Optional[int], n_paths: Optional[int]):
        """记录实验开始"""
        self.logger.info(f"[{self.kind}] starting, digest={digest}")
        self.logger.debug(f"  seed={seed} n_paths={n_paths}")

    def log_progress(self, done: int, total: int):
        """记录路径进度"""
        if total:
            self.logger.debug(f"  paths {done}/{total} ({100.0 * done / total:.0f}%)")

    def log_end(self, verdict: str, summary: Dict[str, Any], duration: float):
        """记录实验结果"""
        self.logger.info(f"[{self.kind}] {verdict} in {duration:.2f}s")
        for key in sorted(summary):
            self.logger.debug(f"  {key}: {summary[key]}")

    def log_error(self, error: Exception):
        """记录实验错误"""
        self.logger.error(f"[{self.kind}] {type(error).__name__}: {error}")


@contextmanager
def log_duration(logger: logging.Logger, operation: str):
    """上下文管理器：记录操作耗时"""
    start_time = time.perf_counter()
    logger.debug(f"{operation}...")
    try:
        yield
    finally:
        duration = time.perf_counter() - start_time
        logger.debug(f"{operation} completed in {duration:.2f}s")


def setup_logging(
    level: str = "INFO",
    log_file: Optional[str] = None,
    show_detail: bool = False
):
    """
    设置全局日志配置

    Args:
        level: 日志级别 (DEBUG, INFO, WARNING, ERROR)
        log_file: 日志文件路径（可选）
        show_detail: 是否显示详细信息（模块、行号）
    """
    numeric_level = getattr(logging, level.upper(), logging.INFO)

    root_logger = logging.getLogger()
    root_logger.setLevel(numeric_level)
    root_logger.handlers.clear()

    # 控制台处理器 (stdout is reserved for JSON output)
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(numeric_level)
    console_handler.setFormatter(
        AnisoFormatter(use_color=sys.stderr.isatty(), show_detail=show_detail)
    )
    root_logger.addHandler(console_handler)

    # 文件处理器（可选）
    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)

        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(AnisoFormatter(use_color=False, show_detail=True))
        root_logger.addHandler(file_handler)

    logging.getLogger("sqlalchemy").setLevel(logging.WARNING)

    root_logger.debug(f"Logging initialized (level={level}, file={log_file})")


def init_logging():
    """根据配置初始化日志"""
    level = "DEBUG" if settings.debug else settings.log_level.upper()
    setup_logging(level=level, log_file=settings.log_file, show_detail=settings.debug)
