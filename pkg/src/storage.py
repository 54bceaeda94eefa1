"""
Storage management for result files
"""

import json
import math
import os
from typing import Any, Dict, Iterable, Optional

import numpy as np
import pandas as pd
import yaml

from .errors import DomainError
from .utils.logger import get_app_logger

logger = get_app_logger()

FLOAT_FORMAT = "%.12g"


def _to_builtin(value: Any) -> Any:
    """Plain-Python copy of a payload; NaN and infinities become None"""
    if isinstance(value, dict):
        return {str(k): _to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_to_builtin(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


class StorageManager:
    """Write CSV, JSON and text outputs stamped with the resolved config hash"""

    def __init__(self, output_dir: str = "./results", config_hash: str = ""):
        """
        Initialize storage manager

        Args:
            output_dir: Directory receiving every output file
            config_hash: Hex digest of the resolved config
        """
        self.output_dir = output_dir
        self.config_hash = config_hash
        os.makedirs(self.output_dir, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    @property
    def header(self) -> str:
        return f"# config_hash: {self.config_hash}"

    def save_csv(self, name: str, frame: pd.DataFrame) -> str:
        """
        Save a data frame as CSV behind a hash comment line

        Args:
            name: File name inside the output directory
            frame: Data; missing values become empty cells

        Returns:
            Path to the saved file
        """
        file_path = self.path(name)
        with open(file_path, "w", encoding="utf-8", newline="") as f:
            f.write(self.header + "\n")
            frame.to_csv(f, index=False, na_rep="", float_format=FLOAT_FORMAT, lineterminator="\n")
        logger.info(f"CSV saved to: {file_path} ({len(frame)} rows)")
        return file_path

    def save_json(self, name: str, payload: Dict[str, Any]) -> str:
        """Save a JSON report with the hash under _meta"""
        file_path = self.path(name)
        document = _to_builtin(payload)
        document["_meta"] = {"config_hash": self.config_hash}
        with open(file_path, "w", encoding="utf-8") as f:
            json.dump(document, f, ensure_ascii=False, indent=2, sort_keys=True, allow_nan=False)
            f.write("\n")
        logger.info(f"JSON saved to: {file_path}")
        return file_path

    def save_summary(self, name: str, lines: Iterable[str]) -> str:
        """Save a human-readable text summary"""
        file_path = self.path(name)
        with open(file_path, "w", encoding="utf-8") as f:
            f.write(self.header + "\n")
            for line in lines:
                f.write(f"{line}\n")
        logger.info(f"Summary saved to: {file_path}")
        return file_path

    def save_config(self, resolved: Dict[str, Any], name: str = "config.resolved.yaml") -> str:
        """Save the resolved experiment config"""
        file_path = self.path(name)
        with open(file_path, "w", encoding="utf-8") as f:
            f.write(self.header + "\n")
            yaml.safe_dump(_to_builtin(resolved), f, sort_keys=True, allow_unicode=True)
        return file_path


def load_trace_csv(path: str) -> pd.DataFrame:
    """
    Load a T1 trace CSV

    Args:
        path: File with columns lab_time_s, t1_hat_s and optionally dt1_std_s;
            lines starting with # are skipped

    Returns:
        Data frame sorted by lab_time_s

    Raises:
        FileNotFoundError: path does not exist
        DomainError: required columns are missing
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Trace file not found: {path}")

    frame = pd.read_csv(path, comment="#")
    missing = {"lab_time_s", "t1_hat_s"} - set(frame.columns)
    if missing:
        raise DomainError(f"trace file {path} lacks columns: {', '.join(sorted(missing))}")

    columns = ["lab_time_s", "t1_hat_s"] + (["dt1_std_s"] if "dt1_std_s" in frame.columns else [])
    frame = frame[columns].dropna(subset=["lab_time_s", "t1_hat_s"]).sort_values("lab_time_s")
    logger.info(f"Loaded {len(frame)} trace samples from: {path}")
    return frame.reset_index(drop=True)


def trace_std(frame: pd.DataFrame) -> Optional[np.ndarray]:
    return frame["dt1_std_s"].to_numpy(dtype=float) if "dt1_std_s" in frame.columns else None
