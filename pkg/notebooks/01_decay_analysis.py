#%% md
# # 📉 Decay analysis
#
# Reads the tables written by `python -m src.cli decay` and
# `python -m src.cli free-dispersive` and compares the measured ρ-moments of
# ‖Ψ(t)‖_q with the dispersive rate t^{-α}.
#%%
import json
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

plt.style.use('default')
sns.set_palette("husl")

OUT = Path("../outputs")
print("✅ Libraries successfully imported")
#%%
stats = pd.read_csv(OUT / "decay" / "ensemble_stats.csv", dtype={"config_digest": str})
report = json.loads((OUT / "decay" / "decay_report.json").read_text())
print(f"📊 {len(stats)} rows, digest {report['config_digest']}, δ={report['delta']}, smallness={report['smallness']:.3g}")
display(stats.head(10))
#%%
# Estimates over the validity window, one panel per ρ
valid = stats[stats["valid"] & (stats["t"] > 0)]
grid = sns.FacetGrid(valid, col="rho", hue="q", height=4, sharey=False)
grid.map_dataframe(sns.lineplot, x="t", y="estimate", marker="o")
for ax in grid.axes.flat:
    ax.set_xscale("log")
    ax.set_yscale("log")
grid.add_legend()
plt.show()
#%%
# Fitted slopes against the target −α
fits = pd.DataFrame(report["fits"])
fits["deviation"] = (fits["slope"] + fits["target_alpha"]).abs()
display(fits[["rho", "q", "slope", "ci", "target_alpha", "deviation", "n_points", "bootstrap_range"]])
#%%
# Bootstrap quantity t^α · estimate, compared with the free flow
bootstrap = pd.DataFrame(report["bootstrap"])
display(bootstrap)
free_path = OUT / "free-dispersive" / "free_stats.csv"
if free_path.exists():
    free = pd.read_csv(free_path, dtype={"config_digest": str})
    merged = valid.merge(free[["t", "q", "rho", "estimate"]], on=["t", "q", "rho"], suffixes=("", "_free"))
    merged["ratio"] = merged["estimate"] / merged["estimate_free"]
    sns.lineplot(data=merged, x="t", y="ratio", hue="q", style="rho", marker="o")
    plt.axhline(1.0, color="grey", linestyle="--")
    plt.title("Stochastic / free ρ-moment")
    plt.show()
else:
    print(f"⚠️ {free_path} not found; run free-dispersive with the same config")
