# %% [markdown]
# # Asian Delta and the command line
#
# The running average of the price is a coordinate of a two-dimensional
# lifted model `(log X, int X ds)`.  Its Delta uses a 2x2 Gram matrix
# inverted path by path.

# %%
import io
import sys
import tempfile
from contextlib import redirect_stdout

from sfdemc import build_grid
from sfdemc.cli import main
from sfdemc.greeks import GreekRequest, call, delta_estimator
from sfdemc.models import Lifted2D

model = Lifted2D("tanh:0.2,0.05,100", 100.0)
grid = build_grid(1.0, 1.0, 0.05)
for method in ("malliavin-smalltime", "malliavin-general", "finite-difference"):
    e = delta_estimator(GreekRequest(model, call(100), 1.0, grid, method, asian=True), 50_000, seed=3)
    print(f"{method:20s} {e.mean:.5f} +- {e.stderr:.5f}")

# %% [markdown]
# ## Same thing from a configuration file

# %%
cfg = """\
model = lifted
x = 100
a1 = tanh:0.2,0.05,100
r = 1
T = 1
dt = 0.05
n_paths = 50000
seed = 3
asian = true
payoffs = call:100
methods = malliavin-general,finite-difference
"""
with tempfile.NamedTemporaryFile("w", suffix=".cfg", delete=False) as fh:
    fh.write(cfg)
buf = io.StringIO()
with redirect_stdout(buf):
    code = main(["greeks", "--config", fh.name])
print(buf.getvalue())
print("exit status", code, file=sys.stdout)
