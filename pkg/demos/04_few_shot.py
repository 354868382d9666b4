"""Few-shot updates of synthesized class distributions.

A handful of labeled examples per unseen class refine the synthesized
Gaussian, which acts as the prior. Updates only keep running sums, so
examples can arrive one at a time.
"""

from __future__ import annotations

import numpy as np

from expfam_zsl import GfzslConfig, SynthConfig, apply_fewshot, fit, generate
from expfam_zsl.eval import fewshot_protocol, generalized_protocol
from expfam_zsl.synthgen import reference_sigma

base = SynthConfig(S=40, U=10, K=16, D=64, mean_scale=1.5, logvar_scale=1.0, seed=0)
sigma = reference_sigma(generate(base)[3], base.unseen_ids)
features, attributes, split, _ = generate(SynthConfig(**{**base.__dict__, "offset": 2.0 * sigma}))
model = fit(split, features, attributes, GfzslConfig(1e-3, 1e-3))

shots = (0, 2, 5, 10, 20)
res = fewshot_protocol(model, features, shots=shots, trials=20, seed=0)
print("few-shot, unseen candidates only")
print(res.to_text())
gen = generalized_protocol(model, features, shots=shots, trials=20, seed=0)
print("generalized few-shot, every class is a candidate")
print(gen.to_text())

# Streaming: two batches of labeled rows give the same model as one batch.
rows = split.unseen_labeled[::40]
once = apply_fewshot(model, features.subset(rows))
twice = apply_fewshot(apply_fewshot(model, features.subset(rows[:5])), features.subset(rows[5:]))
c = split.unseen_ids[0]
print("streamed equals batch:", np.allclose(once.distributions[c].mean, twice.distributions[c].mean, rtol=1e-12))
