"""
Output writers: ScalarField CSV + JSON sidecar, ESD CSV, probe reports
File names carry the config hash so reruns of one config overwrite
byte-identical files.
"""
import csv
import hashlib
import json
from pathlib import Path
from typing import Dict, Optional

import numpy as np
from loguru import logger

from utils.fields import ScalarField

HASH_PREFIX = 12


def calculate_hash(data: Dict) -> str:
    """MD5 of the canonical (sorted-key) JSON form of `data`"""
    payload = json.dumps(data, sort_keys=True, default=_json_default)
    return hashlib.md5(payload.encode()).hexdigest()


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def _fmt(value: float) -> str:
    return "nan" if not np.isfinite(value) else f"{value:.17g}"


def output_path(out_dir: Path, stem: str, config_hash: str, suffix: str) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / f"{stem}_{config_hash[:HASH_PREFIX]}{suffix}"


def write_json(data: Dict, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, sort_keys=True, indent=2, default=_json_default)
        f.write("\n")
    return path


def write_field(field: ScalarField, out_dir: Path, stem: str, config_hash: str,
                extra: Optional[Dict] = None) -> Path:
    """
    Write a field as CSV (re_zeta,im_zeta,value,ok; imaginary-major order) plus JSON sidecar

    Returns:
        path of the CSV file
    """
    csv_path = output_path(out_dir, stem, config_hash, ".csv")
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["re_zeta", "im_zeta", "value", "ok"], lineterminator="\n")
        writer.writeheader()
        for i, im in enumerate(field.im):
            for j, re in enumerate(field.re):
                writer.writerow({
                    "re_zeta": _fmt(re),
                    "im_zeta": _fmt(im),
                    "value": _fmt(field.values[i, j]),
                    "ok": int(field.ok[i, j]),
                })

    sidecar = {
        "config_hash": config_hash,
        "quantity": field.quantity,
        "grid": {
            "re_min": float(field.re[0]),
            "re_max": float(field.re[-1]),
            "im_min": float(field.im[0]),
            "im_max": float(field.im[-1]),
            "h": field.spacing() if max(field.re.size, field.im.size) > 1 else None,
            "shape": list(field.shape),
        },
        "missing_nodes": int((~field.ok).sum()),
        **field.meta,
        **(extra or {}),
    }
    write_json(sidecar, csv_path.with_suffix(".json"))
    logger.info(f"✅ Wrote {field.quantity} field to {csv_path}")
    return csv_path


def write_esd(eigenvalues: np.ndarray, out_dir: Path, stem: str, config_hash: str) -> Path:
    """Eigenvalues as CSV re_lambda,im_lambda"""
    path = output_path(out_dir, stem, config_hash, ".csv")
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["re_lambda", "im_lambda"], lineterminator="\n")
        writer.writeheader()
        for lam in np.asarray(eigenvalues):
            writer.writerow({"re_lambda": _fmt(lam.real), "im_lambda": _fmt(lam.imag)})
    logger.info(f"✅ Wrote {len(eigenvalues)} eigenvalues to {path}")
    return path
