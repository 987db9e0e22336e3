"""Short constrained training run on the gapped Ising chain at L = 8,
with the exact ground state as reference.  Writes the standard artifact
directory (manifest, metrics stream, checkpoints, eval tables).

Equivalent CLI:
    povmgs train --model gapped_tfim --size 8 --steps 400 \
        --buffer-batch 2048 --out runs/demo
"""

import json
from pathlib import Path

from povmgs.config import ExperimentConfig
from povmgs.trainer import Trainer

out = Path("runs/demo")
cfg = ExperimentConfig(model="gapped_tfim", size=8, steps=400,
                       buffer_batch=2048, grad_batch=512,
                       hidden_dim=32, learning_rate=1e-2, seed=11)
trainer = Trainer(cfg, out_dir=out)
summary = trainer.run(log=print)

print(json.dumps(summary, indent=2))
print("\nartifacts under", out)
for p in sorted(out.rglob("*")):
    if p.is_file():
        print(" ", p.relative_to(out))
