# %% [markdown]
# # Hölder fits and the randomized lemma sweeps
#
# The Hölder estimator fits an upper envelope of `|u(p1) - u(p2)|` against
# the intrinsic distance.  On fields with a known modulus it should recover
# the exponent.

# %%
import numpy as np

from chemoreg.cli import sweep_embedding, sweep_geometric, sweep_isoperimetric
from chemoreg.grid import Cube, FieldSeries, IntrinsicCylinder, ScalarField, make_domain
from chemoreg.holder import SamplerConfig, holder_fit

dom = make_domain(1, 1.0, 4096)
x = dom.axis_centers()
region = IntrinsicCylinder(Cube((0.0,), 0.5), 1.0, 1.0)
for label, vals in [("|x|^0.5", np.sqrt(np.abs(x))), ("|x|^0.3", np.abs(x) ** 0.3), ("x", x.copy())]:
    fit = holder_fit(FieldSeries([ScalarField(dom, vals, 1.0)]), region, 0.5, SamplerConfig(seed=1))
    print(f"{label:8s} alpha={fit.holder_exponent:.3f} prefactor={fit.prefactor:.3f} bins={fit.n_bins_used}")

# %% [markdown]
# ## Sweeps
#
# The geometric-iteration sweep starts every instance just below its
# smallness threshold.  The isoperimetric sweep fits one global constant.
# The embedding sweep checks scale invariance.

# %%
rng = np.random.default_rng(0)
for rep in (sweep_geometric(rng, 100), sweep_isoperimetric(rng, 200), sweep_embedding(rng, 10)):
    print({k: v for k, v in rep.items() if not isinstance(v, list)})
