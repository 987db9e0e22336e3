"""Why the positivity constraint exists, in one qubit.

Minimizing <Z> over raw outcome distributions is a linear program whose
optimum is a simplex vertex at <Z> = -sqrt(3), well below the physical
floor of -1.  Unconstrained training happily goes there.  With the
Gram-matrix constraint switched on, the same model parks at the floor.

Runs in about two minutes; pass --fast for a noisier 30-second version.
"""

import sys
import time

from povmgs.config import ExperimentConfig
from povmgs.trainer import Trainer

fast = "--fast" in sys.argv
base = dict(model="custom", custom_terms=[[1.0, "Z0"]], size=1,
            pool_weight=1, pool_range=1, hidden_dim=8, n_layers=1,
            grad_batch=512, learning_rate=2e-2, seed=5)

for constrained in (False, True):
    cfg = ExperimentConfig(
        psd_constraints=constrained,
        buffer_batch=16384 if fast else 65536,
        steps=200 if fast else (300 if not constrained else 600),
        tau=2.0, s=0.25,
        **base)
    tr = Trainer(cfg)
    t0 = time.time()
    for _ in range(cfg.steps):
        metrics = tr.training_step()
    report, _ = tr.evaluate(32768)
    label = "constrained" if constrained else "unconstrained"
    print(f"{label:14s} <Z> = {report.energy:+.4f}   "
          f"({cfg.steps} steps, {time.time() - t0:.0f} s, "
          f"final violation {metrics['violation']:.3f})")

print("\nphysical floor is -1; the simplex vertex sits at -sqrt(3) = -1.732")
