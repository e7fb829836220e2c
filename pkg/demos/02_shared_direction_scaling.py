# Reusing one random vector for both the loss perturbation and the tangent
# estimate multiplies the expected kernel by V[z^2] + d E^2[z^2]:
# (d+2) sigma^4 for a gaussian, 28 b^4 at d=2 for a laplace.  Matching that
# factor across distributions makes them interchangeable.

import numpy as np

from nzk import (
    DirectionSpec,
    LinearModel,
    SampleMode,
    TeacherSpec,
    expected_nzk_mc,
    gen_teacher_student,
    kernel_scale,
    match_scale,
    substream,
)

print("gaussian kernel scale (d+2) sigma^4:")
for d in (2, 10, 50):
    row = [kernel_scale(DirectionSpec("gaussian", dim=d, scale=s), d) for s in (0.5, 1.0, 1.5)]
    print(f"  d={d:2d}: " + "  ".join(f"{v:8.3f}" for v in row))

target = kernel_scale(DirectionSpec("gaussian", dim=2), 2)
lap = match_scale(target, "laplace", 2)
print(f"\nlaplace diversity matching the unit gaussian at d=2: b = {lap.scale:.6f}")
print(f"round trip: kernel_scale(matched laplace) = {kernel_scale(lap, 2):.12f}")

ds = gen_teacher_student(2, 6, TeacherSpec(np.zeros(2), 0.0), seed=3)
model = LinearModel.random(2, substream(4, "init"))
for spec in (DirectionSpec("gaussian", dim=2), lap):
    mc, se = expected_nzk_mc(
        model, model.init_theta, 1e-3, spec, spec, SampleMode.SHARED, 20_000, ds.inputs, substream(5, "mc")
    )
    ratio = mc.values / (ds.inputs @ ds.inputs.T)
    print(f"\n{spec.family}: empirical shared-mode scale = {np.median(ratio):.3f} (target {target})")
