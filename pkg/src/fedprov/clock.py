"""UTC time source, millisecond precision, with an env-controlled frozen mode.

Setting ``FEDPROV_FROZEN_TIME`` to an ISO-8601 instant makes every component
in the process (clients, orderer, registry) report that instant, which keeps
scenario replays byte-identical across runs and trivially satisfies the
orderer's clock-skew bound.
"""

from __future__ import annotations

import os
from datetime import datetime, timezone

FROZEN_ENV = "FEDPROV_FROZEN_TIME"


def now_iso() -> str:
    """Current UTC instant as ``YYYY-MM-DDTHH:MM:SS.mmmZ``."""
    frozen = os.environ.get(FROZEN_ENV)
    if frozen:
        return _format(parse_iso(frozen))
    return _format(datetime.now(timezone.utc))


def parse_iso(text: str) -> datetime:
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def skew_ms(a: str, b: str) -> int:
    """Absolute difference between two instants in milliseconds."""
    delta = parse_iso(a) - parse_iso(b)
    return abs(int(delta.total_seconds() * 1000))


def _format(dt: datetime) -> str:
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"
