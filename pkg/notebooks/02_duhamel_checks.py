#%% md
# # 🔬 Duhamel expansion and bound checks
#
# Reads `python -m src.cli duhamel` outputs: remainder scaling, Itô isometry
# and the check ratios against their frozen baselines.
#%%
import json
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

sys.path.insert(0, "..")
from src.snapshot import read_snapshot

plt.style.use('default')
sns.set_palette("husl")

OUT = Path("../outputs/duhamel")
report = json.loads((OUT / "duhamel_report.json").read_text())
print(f"✅ Report loaded (baselines: {report['baseline_source']})")
#%%
# Remainder and first-order term against δ
scaling = report["scaling"]
deltas = np.array(scaling["deltas"])
plt.loglog(deltas, scaling["remainder"], "o-", label=f"remainder ({scaling['remainder_exponent']:.2f})")
plt.loglog(deltas, scaling["first_order"], "s-", label=f"first order ({scaling['first_order_exponent']:.2f})")
plt.xlabel("δ")
plt.ylabel("L²_ω L²_x")
plt.legend()
plt.show()
#%%
print("🎯 Itô isometry")
display(pd.Series(report["isometry"]))
#%%
checks = pd.read_csv(OUT / "checks.csv", dtype={"config_digest": str})
checks["ratio_to_baseline"] = checks["ratio"] / checks["baseline"]
sns.boxplot(data=checks, x="check", y="ratio_to_baseline")
plt.axhline(report["check_cap"], color="red", linestyle="--")
plt.show()
print(f"Checks passed: {'✅' if report['checks_passed'] else '❌'}")
display(pd.Series(report["refinement_change"], name="max relative change"))
#%%
# Expansion terms at t on the central slice
fig, axes = plt.subplots(1, 4, figsize=(16, 4))
for ax, name in zip(axes, ("free", "stochastic", "drift", "remainder")):
    field = read_snapshot(OUT / "snapshots" / f"duhamel_{name}_t{report['t']:g}.sls")
    values = np.abs(field.values)
    while values.ndim > 2:
        values = values[values.shape[0] // 2]
    if values.ndim == 2:
        ax.imshow(values)
    else:
        ax.plot(values)
    ax.set_title(name)
plt.show()
