"""Reproducible timestamps.

SOURCE_DATE_EPOCH, when set, pins every generated timestamp so reruns
produce byte-identical artifacts.
"""

from __future__ import annotations

import os
import time
from datetime import datetime, timezone


def utc_timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(epoch) if epoch is not None else time.time()
    return (
        datetime.fromtimestamp(t, tz=timezone.utc)
        .replace(microsecond=0)
        .isoformat()
        .replace("+00:00", "Z")
    )
