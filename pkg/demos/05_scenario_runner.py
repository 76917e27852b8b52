# %% [markdown]
# # Driving the checks from JSON configs
#
# The same checks are available from the command line:
#
#     wcurv scenario list
#     wcurv run --config demos/configs/gaussian.json --format csv

# %%
from __future__ import annotations

import json
from pathlib import Path

from wcurv import cli

here = Path(__file__).resolve().parent / "configs"

# %% [markdown]
# The perturbed torus is a generic density, not a critical point, so its
# Euler-Lagrange check reports ``fail`` and the second variation is skipped.

# %%
for path in sorted(here.glob("*.json")):
    cfg = cli.load_config(str(path))
    report = cli.run(cfg)
    print(f"== {path.name}")
    for rec in report.checks:
        print(f"  {rec.name:17s} {rec.status:8s} {rec.reason or ''}")

# %%
report = cli.run(cli.load_config(str(here / "gaussian.json")))
print(json.dumps(report.as_dict()["environment"], indent=2))
