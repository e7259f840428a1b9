"""
Журнал регулятора: строка на быстрый такт и строка на медленный.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from plant.state import INPUT_SYMBOLS


class ControllerLog:
    def __init__(self):
        self.fast_rows: list[dict] = []
        self.slow_rows: list[dict] = []

    def record_fast(self, t: float, u: np.ndarray, iterations: int, agents: dict[str, dict],
                    monotone: bool | None = None) -> None:
        """agents: имя -> {"objective", "status", "slack", "held"}."""
        row = {"t": t, "iterations": iterations, "monotone": monotone}
        row.update({f"u_{name}": float(value) for name, value in zip(INPUT_SYMBOLS, u)})
        for name, info in agents.items():
            row[f"J_{name}"] = info.get("objective", np.nan)
            row[f"status_{name}"] = info.get("status", "")
            row[f"slack_{name}"] = float(np.max(np.abs(info.get("slack", 0.0)), initial=0.0))
            row[f"held_{name}"] = bool(info.get("held", False))
        self.fast_rows.append(row)

    def record_slow(self, t: float, plan) -> None:
        row = {"t": t, "status": plan.status, "held": plan.held, "iterations": plan.iterations,
               "objective": plan.objective}
        row.update({f"u_{name}": float(value) for name, value in zip(INPUT_SYMBOLS, plan.u_applied)})
        row["ysp"] = float(plan.ysp[0])
        for key in ("J1", "J2", "J3", "J4"):
            row[f"{key}s"] = plan.breakdown.get(key, np.nan)
        self.slow_rows.append(row)

    def fast_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.fast_rows)

    def slow_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.slow_rows)

    @property
    def held_samples(self) -> int:
        slow = sum(bool(r["held"]) for r in self.slow_rows)
        fast = sum(any(v for k, v in r.items() if k.startswith("held_")) for r in self.fast_rows)
        return slow + fast

    def mean_iterations(self) -> float:
        frame = self.fast_frame()
        return float(frame["iterations"].mean()) if not frame.empty else float("nan")

    def monotone_share(self) -> float:
        """Доля тактов с многократными итерациями, где Σ_j J_fj не росла."""
        flags = [r["monotone"] for r in self.fast_rows if r.get("monotone") is not None and r["iterations"] > 1]
        return float(np.mean(flags)) if flags else float("nan")

    def write(self, out_dir: str | Path) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = [out_dir / "controller_fast.csv", out_dir / "controller_slow.csv"]
        self.fast_frame().to_csv(paths[0], index=False)
        self.slow_frame().to_csv(paths[1], index=False)
        return paths
