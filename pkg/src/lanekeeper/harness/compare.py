"""Side-by-side comparison of episode metrics files."""

import json
from pathlib import Path

COLUMNS = ("name", "controller", "lane", "weather", "laps", "avg_speed",
           "err_px", "err_m", "result")


def load_metrics_rows(paths) -> list[dict]:
    if not paths:
        raise ValueError("no metrics files given")
    rows = []
    for path in paths:
        doc = json.loads(Path(path).read_text())
        cfg = doc.get("config", {})
        rows.append({
            "name": Path(path).stem,
            "controller": cfg.get("controller", "?"),
            "lane": cfg.get("lane", "?"),
            "weather": cfg.get("weather", "?"),
            "laps": str(doc["laps_completed"]),
            "avg_speed": f"{doc['avg_speed']:.3f}",
            "err_px": f"{doc['avg_steering_error_px']:.2f}",
            "err_m": f"{doc['avg_cross_track_error_m']:.3f}",
            "result": doc["episode_result"],
        })
    return rows


def format_table(rows) -> str:
    widths = {c: max(len(c), *(len(r[c]) for r in rows)) for c in COLUMNS}
    lines = ["  ".join(c.ljust(widths[c]) for c in COLUMNS)]
    lines.append("  ".join("-" * widths[c] for c in COLUMNS))
    for r in rows:
        lines.append("  ".join(r[c].ljust(widths[c]) for c in COLUMNS))
    return "\n".join(lines) + "\n"


def compare(paths) -> str:
    return format_table(load_metrics_rows(paths))
