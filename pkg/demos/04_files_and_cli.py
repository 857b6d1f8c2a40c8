# %% [markdown]
# # Datasets, checkpoints and the command line
#
# Datasets and models are stored as a directory holding ``manifest.json``
# and ``payload.bin`` (raw little-endian arrays, CRC-32 per array).  The
# ``lmnscatter`` command wraps the whole pipeline; here it is driven through
# ``main`` so the script is self-contained.

# %%
import json
import tempfile
from pathlib import Path

from lmnscatter import cli_io
from lmnscatter.cli import main

work = Path(tempfile.mkdtemp(prefix="lmnscatter-demo-"))
small = ["--forward-n", "24", "--inversion-n", "12", "--tx-count", "8", "--rx-count", "16"]

assert main(["gen-data", *small, "--count", "16", "--seed", "1", "--out", str(work / "data")]) == 0
manifest = json.loads((work / "data" / "manifest.json").read_text())
print("first arrays:", [(a["name"], a["dtype"], a["shape"]) for a in manifest["arrays"][:2]])

# %%
assert main(["train", "--data", str(work / "data"), "--train-range", "0:12", "--depth", "3", "--channels", "8",
             "--unroll", "3", "--epochs", "3", "--checkpoint-every", "1", "--out", str(work / "run")]) == 0
print((work / "run" / "loss.csv").read_text())
model, state, meta, _ = cli_io.load_model(work / "run" / "model")
print("checkpoint epoch:", meta["epoch"], " adam steps:", state.t)

# %%
assert main(["sweep", "--model", str(work / "run" / "model"), "--data", str(work / "data"),
             "--test-range", "12:16", "--validation-range", "0:12", "--levels", "0,0.2",
             "--timing", "off", "--out", str(work / "sweep")]) == 0
print(sorted(p.name for p in (work / "sweep").iterdir()))

# %% [markdown]
# Errors map to exit codes: 1 for usage, 2 for invalid input, 3 for numerical
# failures.

# %%
print("negative noise ->", main(["gen-data", *small, "--noise-level", "-0.1", "--out", str(work / "x")]))
print("sweep without model ->", main(["sweep", "--data", str(work / "data"), "--out", str(work / "y")]))
