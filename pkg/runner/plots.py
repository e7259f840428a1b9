"""
Статические рисунки прогона и развёртки по ёмкости (PNG, backend Agg).
Данные для рисунков — CSV рядом с ними.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from core.exceptions import ReportError  # noqa: E402

UNIT_COLUMNS = {
    "x_P_mtf": "микротурбина, кВт",
    "u_P_bar": "батарея, кВт",
    "u_N_ec": "электрочиллер, кВт",
    "w_P_d": "нагрузка микросети, кВт",
}
INDICES = ("e_p", "e_t", "e_e", "e_glb")


def _save(fig, path: Path) -> Path:
    try:
        fig.savefig(path, dpi=120)
    except OSError as exc:
        raise ReportError(f"cannot write figure: {exc}", context=str(path)) from exc
    finally:
        plt.close(fig)
    return path


def plot_run(frame: pd.DataFrame, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    minutes = (frame["t"] - frame["t"].iloc[0]) / 60.0
    paths = []

    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.plot(minutes, frame["y1"], label="поставка в сеть")
    ax.plot(minutes, frame["target"], "--", label="задание (1 + ξ)·y_b")
    ax.set_xlabel("мин")
    ax.set_ylabel("кВт")
    ax.legend()
    fig.tight_layout()
    paths.append(_save(fig, out_dir / "power.png"))

    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.plot(minutes, frame["y2"], label="t_br")
    ax.fill_between(minutes, frame["band_lo"], frame["band_hi"], alpha=0.2, label="полоса комфорта")
    ax.set_xlabel("мин")
    ax.set_ylabel("°C")
    ax.legend()
    fig.tight_layout()
    paths.append(_save(fig, out_dir / "temperature.png"))

    fig, ax = plt.subplots(figsize=(8, 3.5))
    for column, label in UNIT_COLUMNS.items():
        if column in frame:
            ax.plot(minutes, frame[column], label=label)
    ax.set_xlabel("мин")
    ax.set_ylabel("кВт")
    ax.legend(fontsize="small")
    fig.tight_layout()
    paths.append(_save(fig, out_dir / "units.png"))

    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.plot(minutes, frame["soc"], label="SOC")
    ax.plot(minutes, frame["soc_ref"], ":", label="опора SOC")
    ax.plot(minutes, frame["sot"], label="SOT")
    ax.plot(minutes, frame["sot_ref"], ":", label="опора SOT")
    ax.set_xlabel("мин")
    ax.legend(fontsize="small")
    fig.tight_layout()
    paths.append(_save(fig, out_dir / "storage.png"))
    return paths


def plot_sweep(table: pd.DataFrame, out_dir: str | Path) -> Path:
    ok = table[table["status"] == "ok"]
    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    for ax, index in zip(axes.ravel(), INDICES):
        for controller, rows in ok.groupby("controller"):
            rows = rows.sort_values("capacity")
            ax.plot(rows["capacity"] * 100.0, rows[index], marker="o", label=controller.upper())
        ax.set_title(index)
        ax.set_xlabel("ёмкость регулирования, %")
    axes[0, 0].legend()
    fig.tight_layout()
    return _save(fig, Path(out_dir) / "sweep.png")
