# At zero mean and unit variance, the expected two-point kernel of a linear
# model coincides with the plain Gram matrix of the inputs: estimating the
# tangent with random probes costs nothing in expectation.

import numpy as np

from nzk import (
    DirectionSpec,
    LinearModel,
    SampleMode,
    TeacherSpec,
    expected_nzk_closed,
    expected_nzk_mc,
    gen_teacher_student,
    substream,
)

ds = gen_teacher_student(2, 8, TeacherSpec(np.array([7.0, 2.0]), 0.0), seed=1)
gram = ds.inputs @ ds.inputs.T
model = LinearModel.random(2, substream(0, "init"))
spec = DirectionSpec("gaussian", dim=2)

mc, se = expected_nzk_mc(
    model, model.init_theta, 1e-3, spec, spec, SampleMode.INDEPENDENT, 10_000, ds.inputs, substream(1, "mc")
)
closed = expected_nzk_closed(spec, spec, ds.inputs)

np.set_printoptions(precision=3, suppress=True)
print("Gram matrix of 8 unit-circle points:")
print(gram)
print("\nMonte Carlo expected kernel (10k direction pairs):")
print(mc.values)
print(f"\nmax |MC - Gram| = {np.abs(mc.values - gram).max():.4f}")
print(f"5 x max standard error = {5 * se.max():.4f}")
print(f"closed form identical to the Gram matrix: {np.array_equal(closed.values, gram)}")
