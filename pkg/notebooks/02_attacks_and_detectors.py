# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Stealth attacks and learned detectors
#
# A short honest series on IEEE 14, a stealth attack on one snapshot, then a
# small labeled dataset used to train the Chebyshev GNN and the MLP baseline.
# T=1200 keeps the run to a few minutes; the acceptance suite uses T=2000.

# %%
import numpy as np

from gnnfdia.attack import AttackConfig, generate_attacked_dataset, generate_stealth_attack, select_target_area
from gnnfdia.cli import bdd_scores
from gnnfdia.detector import TrainConfig, build_detector, build_mlp_baseline, roc_auc, train
from gnnfdia.grid import build_ybus, bundled_case
from gnnfdia.powerflow import StateVector
from gnnfdia.scenario import generate_dataset, synthetic_profile

case = bundled_case("ieee14")
honest = generate_dataset(case, synthetic_profile(), T=1200, seed=0)
print(honest.Z.shape, honest.X.shape)

# %% [markdown]
# ## One attack
#
# Enter at bus 10 with a 2-hop reach. Generator and zero-injection buses are
# dropped from the target set.

# %%
area = select_target_area(case, case.index_of(10), 2)
print("target buses", [case.bus_ids[b] for b in area.buses], "captured meters", len(area.t_z))

x_hat = StateVector.from_row(honest.X[0], case.slack)
res = generate_stealth_attack(case, build_ybus(case), honest.Z[0], x_hat, area,
                              AttackConfig.preset("balanced"), np.random.default_rng(0))
print("loss", res.loss, "L_z", res.loss_z, "L_x", res.loss_x, "accepted", res.accepted)
print("largest |V| shift", np.abs(res.x_check.vm - x_hat.vm).max())

# %% [markdown]
# ## A labeled dataset
#
# About one snapshot in eleven ends up attacked. Captured meters read the
# noiseless h(x_check), so attacked snapshots look no worse to the residual
# test than honest ones.

# %%
ds = generate_attacked_dataset(honest, AttackConfig.preset("balanced"), seed=0)
print(ds.attacks["summary"])
scores = bdd_scores(ds, np.arange(ds.T))
print("BDD ROC-AUC", round(roc_auc(scores, ds.Y), 3))

# %% [markdown]
# ## Detectors

# %%
cfg = TrainConfig(seed=0, max_epochs=60)
gnn = train(build_detector(case, seed=0), ds, cfg)
mlp = train(build_mlp_baseline(case, seed=0), ds, cfg)
for name, r in (("GNN", gnn), ("MLP", mlp)):
    print(f"{name}: F1 {r.test.f1:.3f}  DR {r.test.dr:.3f}  FA {r.test.fa:.3f}  "
          f"best epoch {r.best_epoch}  params {r.model.n_params}")
